//! Minimal neural-network building blocks with explicit backward passes.
//!
//! Models keep every trainable value in one flat parameter vector; layers
//! address their slice through a [`Segment`]. Gradients use the same layout, so
//! the optimizer, checkpoints and finite-difference checks all work on plain
//! slices.

pub mod adam;
pub mod conv;
pub mod dense;

pub use adam::{Adam, AdamConfig};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Slope of the leaky rectifier used throughout the project.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Name recorded in checkpoint headers for the nonlinearity.
pub const ACTIVATION_NAME: &str = "leaky_relu(0.2)";

/// A contiguous run of parameters inside a flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Allocates segments in declaration order.
#[derive(Debug, Default)]
pub struct LayoutBuilder {
    len: usize,
}

impl LayoutBuilder {
    pub fn alloc(&mut self, len: usize) -> Segment {
        let seg = Segment { offset: self.len, len };
        self.len += len;
        seg
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Fan-in scaled normal init for leaky-rectifier networks.
pub fn kaiming_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64], fan_in: usize) {
    let gain = (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt();
    let std = gain / (fan_in as f64).sqrt();
    for v in out.iter_mut() {
        let n: f64 = StandardNormal.sample(rng);
        *v = n * std;
    }
}

/// Scalar types the optimizer and layers operate on.
pub trait Scalar: Copy + Default + Send + Sync + 'static {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Scalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
}

impl Scalar for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

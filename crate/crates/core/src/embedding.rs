//! Joint vision-language embedding space.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::image::RgbImage;
use crate::toy::{self, FaceAttributes};

/// Tolerance of the unit-norm contract.
pub const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Unit,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm_kind: NormKind,
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl EmbeddingVector {
    pub fn raw(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        Ok(Self {
            values,
            norm_kind: NormKind::Raw,
        })
    }

    /// Normalizes `values`; zero vectors are rejected.
    pub fn unit(values: Vec<f64>) -> Result<Self> {
        let mut e = Self::raw(values)?;
        let n = l2_norm(&e.values);
        if n == 0.0 {
            return Err(Error::ZeroNorm("embedding"));
        }
        e.values.iter_mut().for_each(|v| *v /= n);
        e.norm_kind = NormKind::Unit;
        Ok(e)
    }

    /// Tags an already-normalized vector as unit, checking the contract.
    pub fn assume_unit(values: Vec<f64>) -> Result<Self> {
        let e = Self::raw(values)?;
        let n = l2_norm(&e.values);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::Adapter(format!("expected unit-norm embedding, norm is {n}")));
        }
        Ok(Self {
            norm_kind: NormKind::Unit,
            ..e
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm_kind
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    ensure_dim(a.len(), b.len(), "cosine operands")?;
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm("cosine operand"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    cosine_slices(&a.values, &b.values)
}

/// `normalize(f_img + ε/‖ε‖)`.
pub fn pseudo_text_embedding(f_img: &EmbeddingVector, noise: &[f64]) -> Result<EmbeddingVector> {
    ensure_dim(f_img.dim(), noise.len(), "pseudo embedding noise")?;
    if f_img.norm_kind != NormKind::Unit || (f_img.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::Config(format!(
            "pseudo embedding needs a unit-norm image embedding (norm {})",
            f_img.norm()
        )));
    }
    if noise.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pseudo embedding noise"));
    }
    let nn = l2_norm(noise);
    if nn == 0.0 {
        return Err(Error::ZeroNorm("pseudo embedding noise"));
    }
    let y: Vec<f64> = f_img.values.iter().zip(noise).map(|(f, e)| f + e / nn).collect();
    EmbeddingVector::unit(y)
}

/// Standard-normal noise vector.
pub fn sample_noise<R: rand::Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if l2_norm(&v) > 0.0 {
            return v;
        }
    }
}

/// `k` pseudo embeddings of `f_img`, reproducible under `seed`.
pub fn sample_pseudo_batch(f_img: &EmbeddingVector, k: usize, seed: u64) -> Result<Vec<EmbeddingVector>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            let eps = sample_noise(&mut rng, f_img.dim());
            pseudo_text_embedding(f_img, &eps)
        })
        .collect()
}

/// Paired image/text encoders emitting aligned unit-norm embeddings.
pub trait JointEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn encode_image(&self, image: &RgbImage) -> Result<EmbeddingVector>;
    fn encode_text(&self, text: &str) -> Result<EmbeddingVector>;
}

/// Load-time contract check for encoder adapters.
pub fn validate_encoder(enc: &dyn JointEncoder, probe_image: &RgbImage, probe_text: &str) -> Result<()> {
    for (what, e) in [
        ("image", enc.encode_image(probe_image)?),
        ("text", enc.encode_text(probe_text)?),
    ] {
        if e.dim() != enc.dim() {
            return Err(Error::Adapter(format!(
                "{} {what} encoder declared dim {} but produced {}",
                enc.name(),
                enc.dim(),
                e.dim()
            )));
        }
        if (e.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::Adapter(format!(
                "{} {what} encoder is not unit-norm (norm {})",
                enc.name(),
                e.norm()
            )));
        }
    }
    Ok(())
}

/// Seeded random linear projection of centred pixels. Text is parsed into
/// toy attributes, rendered, and projected the same way, so a toy image and
/// its own description embed to (nearly) the same point.
#[derive(Debug, Clone)]
pub struct ToyJointEncoder {
    dim: usize,
    width: usize,
    height: usize,
    /// `(dim, H·W·3)` row-major.
    projection: Vec<f32>,
}

impl ToyJointEncoder {
    pub const NAME: &'static str = "toy";

    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let (width, height) = (toy::IMAGE_SIZE, toy::IMAGE_SIZE);
        let n = width * height * 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (n as f64).sqrt();
        let projection = (0..dim * n)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                (g * scale) as f32
            })
            .collect();
        Ok(Self {
            dim,
            width,
            height,
            projection,
        })
    }
}

impl JointEncoder for ToyJointEncoder {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_image(&self, image: &RgbImage) -> Result<EmbeddingVector> {
        if image.width() != self.width || image.height() != self.height {
            return Err(Error::ShapeMismatch {
                expected: (self.height, self.width),
                actual: (image.height(), image.width()),
            });
        }
        let x: Vec<f32> = image.data().iter().map(|v| v - 0.5).collect();
        let n = x.len();
        let out: Vec<f64> = self
            .projection
            .chunks_exact(n)
            .map(|row| row.iter().zip(&x).map(|(a, b)| (a * b) as f64).sum())
            .collect();
        EmbeddingVector::unit(out)
    }

    fn encode_text(&self, text: &str) -> Result<EmbeddingVector> {
        let attrs = FaceAttributes::from_text(text)?;
        self.encode_image(&attrs.render().0)
    }
}

type EncoderFactory = Box<dyn Fn(usize, u64) -> Result<Arc<dyn JointEncoder>> + Send + Sync>;

/// Encoder adapters by name.
pub struct EncoderRegistry {
    factories: BTreeMap<String, EncoderFactory>,
}

impl Default for EncoderRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register(ToyJointEncoder::NAME, |dim, seed| {
            Ok(Arc::new(ToyJointEncoder::new(dim, seed)?) as Arc<dyn JointEncoder>)
        });
        r
    }
}

impl EncoderRegistry {
    pub fn register(
        &mut self,
        name: &str,
        f: impl Fn(usize, u64) -> Result<Arc<dyn JointEncoder>> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.to_string(), Box::new(f));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    /// Builds the named adapter and checks its dimension and unit-norm contract.
    pub fn build(&self, name: &str, dim: usize, seed: u64) -> Result<Arc<dyn JointEncoder>> {
        let f = self.factories.get(name).ok_or_else(|| Error::UnknownAdapter {
            kind: "joint encoder",
            name: name.to_string(),
        })?;
        let enc = f(dim, seed)?;
        if enc.dim() != dim {
            return Err(Error::Adapter(format!(
                "encoder `{name}` has dimension {}, config asks for {dim}",
                enc.dim()
            )));
        }
        let (probe, _) = FaceAttributes::default().render();
        validate_encoder(enc.as_ref(), &probe, toy::DEFAULT_PIVOT)?;
        Ok(enc)
    }
}

//! Latent-to-image generation behind a uniform port.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::image::RgbImage;
use crate::nn;
use crate::toy::{self, FaceAttributes, NUM_BANDS};

/// A single latent vector `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    values: Vec<f64>,
}

impl LatentCode {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent code"));
        }
        Ok(Self { values })
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
}

/// Layered latent: one `w` per style layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCodePlus {
    layers: Vec<Vec<f64>>,
}

impl LatentCodePlus {
    pub fn new(layers: Vec<Vec<f64>>) -> Result<Self> {
        let d = layers.first().map(Vec::len).ok_or(Error::EmptyBatch)?;
        for l in &layers {
            ensure_dim(d, l.len(), "latent layer")?;
            if l.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("layered latent"));
            }
        }
        Ok(Self { layers })
    }

    /// Repeats `w` on every one of `num_layers` layers.
    pub fn broadcast(w: &LatentCode, num_layers: usize) -> Self {
        Self {
            layers: vec![w.values.clone(); num_layers.max(1)],
        }
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.layers[0].len()
    }

    /// Row-major `L × D` values.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.concat()
    }

    pub fn from_flat(values: &[f64], num_layers: usize) -> Result<Self> {
        if num_layers == 0 || !values.len().is_multiple_of(num_layers) {
            return Err(Error::DimensionMismatch {
                expected: num_layers,
                actual: values.len(),
                context: "flat layered latent",
            });
        }
        let d = values.len() / num_layers;
        Self::new(values.chunks(d).map(<[f64]>::to_vec).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    /// Produced by the toy generator from a known latent.
    Toy {
        latent: LatentCodePlus,
    },
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedImage {
    pub image: RgbImage,
    pub provenance: Provenance,
}

/// Generator adapter contract.
pub trait Generator: Send + Sync {
    fn name(&self) -> &str;
    /// Latent dimension `D_w`.
    fn latent_dim(&self) -> usize;
    /// Number of style layers `L`.
    fn num_layers(&self) -> usize;
    fn resolution(&self) -> (usize, usize);
    fn synthesize(&self, w: &LatentCode) -> Result<GeneratedImage>;
    fn synthesize_plus(&self, wp: &LatentCodePlus) -> Result<GeneratedImage>;
    /// Deterministic `(z, w)` draw for corpus building.
    fn sample_z_to_w(&self, seed: u64) -> Result<(Vec<f64>, LatentCode)>;
}

/// Image-to-latent adapter.
pub trait Inverter: Send + Sync {
    fn invert(&self, image: &GeneratedImage) -> Result<LatentCodePlus>;
}

/// Procedural face generator with a fixed seeded `z → w` network.
#[derive(Debug, Clone)]
pub struct ToyGenerator {
    latent_dim: usize,
    z_dim: usize,
    hidden: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    mean: Vec<f64>,
    std: Vec<f64>,
}

pub const TOY_Z_DIM: usize = 8;
const TOY_HIDDEN: usize = 128;
const TOY_CALIBRATION_SAMPLES: usize = 4096;

impl ToyGenerator {
    pub const NAME: &'static str = "toy";

    pub fn new(latent_dim: usize, seed: u64) -> Result<Self> {
        if latent_dim < toy::NUM_ATTRIBUTES {
            return Err(Error::Config(format!(
                "toy generator needs latent_dim >= {}, got {latent_dim}",
                toy::NUM_ATTRIBUTES
            )));
        }
        let (z_dim, hidden) = (TOY_Z_DIM, TOY_HIDDEN);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w1 = vec![0.0; z_dim * hidden];
        nn::kaiming_normal(&mut rng, &mut w1, z_dim);
        let b1 = (0..hidden)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                0.5 * g
            })
            .collect();
        let mut w2 = vec![0.0; hidden * latent_dim];
        nn::kaiming_normal(&mut rng, &mut w2, hidden);
        let mut g = Self {
            latent_dim,
            z_dim,
            hidden,
            w1,
            b1,
            w2,
            b2: vec![0.0; latent_dim],
            mean: vec![0.0; latent_dim],
            std: vec![1.0; latent_dim],
        };
        g.calibrate(seed ^ 0x5eed_ca1b);
        Ok(g)
    }

    /// Standardizes every latent coordinate over a fixed set of draws.
    fn calibrate(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.latent_dim;
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for _ in 0..TOY_CALIBRATION_SAMPLES {
            let z = self.draw_z(&mut rng);
            let w = self.raw_map(&z);
            for i in 0..d {
                sum[i] += w[i];
                sq[i] += w[i] * w[i];
            }
        }
        let n = TOY_CALIBRATION_SAMPLES as f64;
        for i in 0..d {
            let m = sum[i] / n;
            self.mean[i] = m;
            self.std[i] = (sq[i] / n - m * m).max(1e-12).sqrt();
        }
    }

    fn draw_z(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.z_dim).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn raw_map(&self, z: &[f64]) -> Vec<f64> {
        let mut h = self.b1.clone();
        for (i, zi) in z.iter().enumerate() {
            let row = &self.w1[i * self.hidden..(i + 1) * self.hidden];
            for (hj, wij) in h.iter_mut().zip(row) {
                *hj += zi * wij;
            }
        }
        for v in &mut h {
            if *v < 0.0 {
                *v *= nn::LEAKY_SLOPE;
            }
        }
        let mut w = self.b2.clone();
        for (j, hj) in h.iter().enumerate() {
            let row = &self.w2[j * self.latent_dim..(j + 1) * self.latent_dim];
            for (wk, a) in w.iter_mut().zip(row) {
                *wk += hj * a;
            }
        }
        w
    }

    /// The standardized `z → w` map.
    pub fn map_z(&self, z: &[f64]) -> Result<LatentCode> {
        ensure_dim(self.z_dim, z.len(), "toy z")?;
        let w = self.raw_map(z);
        LatentCode::new(
            w.iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(v, (m, s))| (v - m) / s)
                .collect(),
        )
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    /// Attribute values a layered latent describes.
    pub fn attributes_plus(&self, wp: &LatentCodePlus) -> Result<FaceAttributes> {
        self.check_plus(wp)?;
        Ok(FaceAttributes::from_latent(|k, band| wp.layers[band as usize][k]))
    }

    pub fn attributes(&self, w: &LatentCode) -> Result<FaceAttributes> {
        ensure_dim(self.latent_dim, w.dim(), "toy latent")?;
        Ok(FaceAttributes::from_latent(|k, _| w.values[k]))
    }

    fn check_plus(&self, wp: &LatentCodePlus) -> Result<()> {
        if wp.num_layers() != NUM_BANDS {
            return Err(Error::LayerCount {
                expected: NUM_BANDS,
                actual: wp.num_layers(),
            });
        }
        ensure_dim(self.latent_dim, wp.dim(), "toy layered latent")
    }
}

impl Generator for ToyGenerator {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn num_layers(&self) -> usize {
        NUM_BANDS
    }

    fn resolution(&self) -> (usize, usize) {
        (toy::IMAGE_SIZE, toy::IMAGE_SIZE)
    }

    fn synthesize(&self, w: &LatentCode) -> Result<GeneratedImage> {
        ensure_dim(self.latent_dim, w.dim(), "toy latent")?;
        self.synthesize_plus(&LatentCodePlus::broadcast(w, NUM_BANDS))
    }

    fn synthesize_plus(&self, wp: &LatentCodePlus) -> Result<GeneratedImage> {
        let attrs = self.attributes_plus(wp)?;
        Ok(GeneratedImage {
            image: attrs.render().0,
            provenance: Provenance::Toy { latent: wp.clone() },
        })
    }

    fn sample_z_to_w(&self, seed: u64) -> Result<(Vec<f64>, LatentCode)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = self.draw_z(&mut rng);
        let w = self.map_z(&z)?;
        Ok((z, w))
    }
}

/// Exact inversion for toy renders: reads back the latent that produced them.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyInverter;

impl Inverter for ToyInverter {
    fn invert(&self, image: &GeneratedImage) -> Result<LatentCodePlus> {
        match &image.provenance {
            Provenance::Toy { latent } => Ok(latent.clone()),
            Provenance::External => Err(Error::NoInverter(
                "this image has no recorded toy latent; supply a precomputed latent file (L x D_w) instead".into(),
            )),
        }
    }
}

type GeneratorFactory = Box<dyn Fn(usize, u64) -> Result<Arc<dyn Generator>> + Send + Sync>;

/// Generator adapters by name.
pub struct GeneratorRegistry {
    factories: BTreeMap<String, GeneratorFactory>,
}

impl Default for GeneratorRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register(ToyGenerator::NAME, |d, seed| {
            Ok(Arc::new(ToyGenerator::new(d, seed)?) as Arc<dyn Generator>)
        });
        r
    }
}

impl GeneratorRegistry {
    pub fn register(
        &mut self,
        name: &str,
        f: impl Fn(usize, u64) -> Result<Arc<dyn Generator>> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.to_string(), Box::new(f));
    }

    pub fn build(&self, name: &str, latent_dim: usize, seed: u64) -> Result<Arc<dyn Generator>> {
        let f = self.factories.get(name).ok_or_else(|| Error::UnknownAdapter {
            kind: "generator",
            name: name.to_string(),
        })?;
        let g = f(latent_dim, seed)?;
        if g.latent_dim() != latent_dim {
            return Err(Error::Adapter(format!(
                "generator `{name}` has latent dim {}, config asks for {latent_dim}",
                g.latent_dim()
            )));
        }
        Ok(g)
    }
}

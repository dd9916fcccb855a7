//! Text consistency, mask accuracy, embedding-distribution distance, and the
//! latency protocol.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, JointEncoder};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::spatial::MaskImage;
use crate::toy;

/// `100 · cos(encode_image(image), encode_text(text))`, in `[-100, 100]`.
pub fn clip_score(image: &RgbImage, text: &str, encoder: &dyn JointEncoder) -> Result<f64> {
    Ok(100.0 * cosine(&encoder.encode_image(image)?, &encoder.encode_text(text)?)?)
}

/// Percentage of cells with equal labels.
pub fn mask_accuracy(generated: &MaskImage, gt: &MaskImage) -> Result<f64> {
    if generated.shape() != gt.shape() {
        return Err(Error::ShapeMismatch {
            expected: gt.shape(),
            actual: generated.shape(),
        });
    }
    let same = generated
        .labels()
        .iter()
        .zip(gt.labels())
        .filter(|(a, b)| a == b)
        .count();
    Ok(100.0 * same as f64 / gt.labels().len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmmdConfig {
    /// RBF bandwidth σ in `exp(-‖x−y‖² / (2σ²))`.
    pub sigma: f64,
    /// Multiplier applied to the squared-MMD estimate.
    pub scale: f64,
}

impl Default for CmmdConfig {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            scale: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmmdValue {
    /// Scaled unbiased estimate; may be negative.
    pub raw: f64,
    /// `max(raw, 0)`.
    pub value: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Orders the two sets canonically so the estimate is exactly symmetric.
fn canonical<'a>(a: &'a [Vec<f64>], b: &'a [Vec<f64>]) -> (&'a [Vec<f64>], &'a [Vec<f64>]) {
    let key = |s: &[Vec<f64>]| -> (usize, Vec<u64>) { (s.len(), s.iter().flatten().map(|v| v.to_bits()).collect()) };
    if key(a) <= key(b) {
        (a, b)
    } else {
        (b, a)
    }
}

/// Unbiased squared MMD between embedding sets under an RBF kernel.
pub fn cmmd_embeddings(a: &[Vec<f64>], b: &[Vec<f64>], cfg: CmmdConfig) -> Result<CmmdValue> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                actual: s.len(),
            });
        }
    }
    let d = a[0].len();
    for v in a.iter().chain(b) {
        crate::error::ensure_dim(d, v.len(), "cmmd embedding")?;
    }
    if !(cfg.sigma > 0.0) {
        return Err(Error::Config("cmmd sigma must be positive".into()));
    }
    let (x, y) = canonical(a, b);
    let gamma = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
    let k = |p: &[f64], q: &[f64]| (-gamma * sq_dist(p, q)).exp();
    let within = |s: &[Vec<f64>]| {
        let mut sum = 0.0;
        for i in 0..s.len() {
            for j in (i + 1)..s.len() {
                sum += k(&s[i], &s[j]);
            }
        }
        2.0 * sum / (s.len() * (s.len() - 1)) as f64
    };
    let mut cross = 0.0;
    for p in x {
        for q in y {
            cross += k(p, q);
        }
    }
    let cross = cross / (x.len() * y.len()) as f64;
    let raw = cfg.scale * (within(x) + within(y) - 2.0 * cross);
    Ok(CmmdValue {
        raw,
        value: raw.max(0.0),
    })
}

/// CMMD between two image sets.
pub fn cmmd(set_a: &[RgbImage], set_b: &[RgbImage], encoder: &dyn JointEncoder, cfg: CmmdConfig) -> Result<CmmdValue> {
    let emb = |s: &[RgbImage]| -> Result<Vec<Vec<f64>>> {
        s.iter().map(|i| Ok(encoder.encode_image(i)?.into_values())).collect()
    };
    cmmd_embeddings(&emb(set_a)?, &emb(set_b)?, cfg)
}

/// Face parser adapter contract.
pub trait FaceParser: Send + Sync {
    fn parse(&self, image: &RgbImage) -> Result<MaskImage>;
}

/// Exact parser for toy renders.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyFaceParser;

impl FaceParser for ToyFaceParser {
    fn parse(&self, image: &RgbImage) -> Result<MaskImage> {
        toy::parse_image(image).ok_or_else(|| {
            Error::NoParser("image is not a toy render; bind a face parsing adapter for real photos".into())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedReport {
    pub runs: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    /// Coefficient of variation (`std / mean`).
    pub cv: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub hardware: String,
}

pub const DEFAULT_BENCH_RUNS: usize = 100;

/// Wall-clock statistics of `runs` calls after `warmup` untimed calls.
pub fn speed_bench(mut f: impl FnMut() -> Result<()>, runs: usize, warmup: usize) -> Result<SpeedReport> {
    if runs == 0 {
        return Err(Error::Config("bench needs at least one run".into()));
    }
    for _ in 0..warmup {
        f()?;
    }
    let mut times = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let n = runs as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = if runs > 1 {
        times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt();
    Ok(SpeedReport {
        runs,
        mean_ms: mean,
        std_ms: std,
        cv: if mean > 0.0 { std / mean } else { 0.0 },
        min_ms: times.iter().copied().fold(f64::INFINITY, f64::min),
        max_ms: times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        hardware: hardware_descriptor(),
    })
}

/// CPU model, logical core count, OS and architecture.
pub fn hardware_descriptor() -> String {
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!(
        "{model}; {cores} logical cores; {}-{}",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    /// Mean of `max(clip_score, 0)` over samples.
    pub clip_score_pct: f64,
    pub mask_accuracy_pct: f64,
    pub cmmd: f64,
    pub cmmd_raw: f64,
    pub speed_ms: Option<f64>,
    pub n_samples: usize,
    pub config_digest: String,
}

/// One generated image with its conditioning text and mask, plus the real
/// image it is compared against.
pub struct EvalItem<'a> {
    pub generated: &'a RgbImage,
    pub text: &'a str,
    pub mask: &'a MaskImage,
    pub real: &'a RgbImage,
}

pub fn evaluate(
    items: &[EvalItem<'_>],
    encoder: &dyn JointEncoder,
    parser: &dyn FaceParser,
    cfg: CmmdConfig,
    config_digest: impl Into<String>,
) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = items.len() as f64;
    let mut clip = 0.0;
    let mut acc = 0.0;
    let mut gen_emb = Vec::with_capacity(items.len());
    let mut real_emb = Vec::with_capacity(items.len());
    for it in items {
        let fg = encoder.encode_image(it.generated)?;
        clip += (100.0 * cosine(&fg, &encoder.encode_text(it.text)?)?).max(0.0);
        acc += mask_accuracy(&parser.parse(it.generated)?, it.mask)?;
        gen_emb.push(fg.into_values());
        real_emb.push(encoder.encode_image(it.real)?.into_values());
    }
    let c = cmmd_embeddings(&gen_emb, &real_emb, cfg)?;
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        clip_score_pct: clip / n,
        mask_accuracy_pct: acc / n,
        cmmd: c.value,
        cmmd_raw: c.raw,
        speed_ms: None,
        n_samples: items.len(),
        config_digest: config_digest.into(),
    })
}

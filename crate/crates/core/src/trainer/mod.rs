//! Codec and mapper optimization.

pub mod corpus;
pub mod losses;

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use corpus::{
    build_corpus, corpus_digest, dump_corpus, load_corpus, toy_sample, toy_samples, Manifest, ManifestRecord,
    SpatialSource, ToySample, TrainingPair, MANIFEST_FILE,
};
pub use losses::{batch_loss_and_grad, loss_abs, loss_dir, loss_total, LossWeights, Terms};

use crate::embedding::{pseudo_text_embedding, sample_noise};
use crate::error::{Error, Result};
use crate::mapping::{Mapper, MapperConfig, Mode};
use crate::nn::{Adam, AdamConfig};
use crate::spatial::{Codec, MaskImage, Modality, SketchImage};

/// Consecutive non-finite losses tolerated before aborting.
pub const DIVERGENCE_PATIENCE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperTrainOptions {
    pub weights: LossWeights,
    /// Replace image embeddings by pseudo text embeddings during training.
    pub pteg: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Held-out share used for logging only.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for MapperTrainOptions {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            pteg: true,
            epochs: 100,
            batch_size: 32,
            adam: AdamConfig::default(),
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MapperTrainReport {
    pub mapper: Mapper,
    pub epochs: Vec<EpochLog>,
    pub steps: usize,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

/// Splits `0..n` into batches of `size`, folding a trailing singleton into
/// the previous batch (batch norm needs at least two rows).
fn batches(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(size.max(1)).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(last);
    }
    out
}

fn input_matrix(mapper: &Mapper, pairs: &[&TrainingPair], pteg: bool, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let mut rows = Vec::with_capacity(pairs.len());
    for p in pairs {
        let row = if pteg {
            let eps = sample_noise(rng, p.f_img.dim());
            mapper.input_row(&pseudo_text_embedding(&p.f_img, &eps)?, &p.f_spatial)?
        } else {
            mapper.input_row(&p.f_img, &p.f_spatial)?
        };
        rows.push(row);
    }
    crate::mapping::batch_matrix(&rows)
}

fn target_matrix(pairs: &[&TrainingPair]) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = pairs.iter().map(|p| p.w_gt.values().to_vec()).collect();
    crate::mapping::batch_matrix(&rows)
}

/// Eval-mode objective over `pairs`, conditioning on the image embeddings.
pub fn evaluate_loss(mapper: &Mapper, pairs: &[TrainingPair], weights: LossWeights) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let refs: Vec<&TrainingPair> = pairs.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = input_matrix(mapper, &refs, false, &mut rng)?;
    let y = mapper.forward(&x, Mode::Eval)?;
    Ok(batch_loss_and_grad(&target_matrix(&refs)?, &y, weights, Terms::Both)?.0)
}

/// Trains a fresh mapper on `pairs`.
pub fn train_mapper(
    pairs: &[TrainingPair],
    config: MapperConfig,
    opts: &MapperTrainOptions,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<MapperTrainReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    opts.weights.validate()?;
    if !(0.0..1.0).contains(&opts.val_fraction) {
        return Err(Error::Config(format!(
            "val_fraction must be in [0, 1), got {}",
            opts.val_fraction
        )));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut mapper = Mapper::new(config, opts.seed)?;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((pairs.len() as f64 * opts.val_fraction).floor() as usize).min(pairs.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val: Vec<TrainingPair> = val_idx.iter().map(|&i| pairs[i].clone()).collect();
    let mut train_idx = train_idx.to_vec();
    if mapper.config().use_bn && train_idx.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            actual: train_idx.len(),
        });
    }
    let per_epoch = batches(&train_idx, opts.batch_size).len();
    let mut adam = Adam::new(opts.adam, mapper.num_params(), opts.epochs * per_epoch);
    let mut logs = Vec::with_capacity(opts.epochs);
    let mut bad = 0usize;
    let mut step = 0usize;
    for epoch in 0..opts.epochs {
        train_idx.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0usize;
        for batch in batches(&train_idx, opts.batch_size) {
            let refs: Vec<&TrainingPair> = batch.iter().map(|&i| &pairs[i]).collect();
            let x = input_matrix(&mapper, &refs, opts.pteg, &mut rng)?;
            let t = target_matrix(&refs)?;
            let (y, tape) = mapper.forward_train(&x, &mut rng)?;
            step += 1;
            let (loss, grad) = match batch_loss_and_grad(&t, &y, opts.weights, Terms::Both) {
                Ok(v) if v.0.is_finite() => v,
                Ok((l, _)) => (l, Array2::zeros((0, 0))),
                Err(Error::ZeroNorm(_)) => (f64::NAN, Array2::zeros((0, 0))),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                bad += 1;
                log::warn!("non-finite mapper loss at step {step}");
                if bad >= DIVERGENCE_PATIENCE {
                    return Err(Error::Diverged {
                        step,
                        loss,
                        consecutive: bad,
                    });
                }
                continue;
            }
            bad = 0;
            let g = mapper.backward(&tape, &grad);
            adam.step(mapper.params_mut(), &g);
            mapper.update_running_stats(&tape, batch.len());
            sum += loss;
            count += 1;
        }
        let log = EpochLog {
            epoch,
            train_loss: if count > 0 { sum / count as f64 } else { f64::NAN },
            val_loss: if val.is_empty() {
                None
            } else {
                Some(evaluate_loss(&mapper, &val, opts.weights)?)
            },
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(MapperTrainReport {
        mapper,
        epochs: logs,
        steps: step,
        train_ids: train_idx.iter().map(|&i| pairs[i].source_id.clone()).collect(),
        val_ids: val.iter().map(|p| p.source_id.clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for CodecTrainOptions {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 16,
            adam: AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
            seed: 0,
        }
    }
}

/// Inputs for codec training.
pub enum CodecData<'a> {
    Masks(&'a [&'a MaskImage]),
    Sketches(&'a [&'a SketchImage]),
}

impl CodecData<'_> {
    fn len(&self) -> usize {
        match self {
            CodecData::Masks(m) => m.len(),
            CodecData::Sketches(s) => s.len(),
        }
    }

    fn modality(&self) -> Modality {
        match self {
            CodecData::Masks(_) => Modality::Mask,
            CodecData::Sketches(_) => Modality::Sketch,
        }
    }
}

/// Trains `codec` in place and marks it trained. Returns per-epoch mean loss.
pub fn train_codec(
    codec: &mut Codec,
    data: CodecData<'_>,
    opts: &CodecTrainOptions,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    if data.len() == 0 {
        return Err(Error::EmptyBatch);
    }
    if data.modality() != codec.modality() {
        return Err(Error::ModalityMismatch {
            expected: codec.modality().as_str(),
            actual: data.modality().as_str(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let per_epoch = batches(&order, opts.batch_size).len();
    let mut adam = Adam::new(opts.adam, codec.num_params(), opts.epochs * per_epoch);
    let mut logs = Vec::new();
    let mut bad = 0usize;
    let mut step = 0usize;
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for batch in batches(&order, opts.batch_size) {
            let x = match &data {
                CodecData::Masks(m) => codec.mask_batch(&batch.iter().map(|&i| m[i]).collect::<Vec<_>>())?,
                CodecData::Sketches(s) => codec.sketch_batch(&batch.iter().map(|&i| s[i]).collect::<Vec<_>>())?,
            };
            let tape = codec.forward_train(&x);
            let (loss, dl) = codec.loss_and_logit_grad(&tape, &x);
            step += 1;
            if !loss.is_finite() {
                bad += 1;
                if bad >= DIVERGENCE_PATIENCE {
                    return Err(Error::Diverged {
                        step,
                        loss,
                        consecutive: bad,
                    });
                }
                continue;
            }
            bad = 0;
            let g = codec.backward(&tape, &dl);
            adam.step(codec.params_mut(), &g);
            sum += loss;
            count += 1;
        }
        let log = EpochLog {
            epoch,
            train_loss: sum / count.max(1) as f64,
            val_loss: None,
        };
        on_epoch(&log);
        logs.push(log);
    }
    codec.mark_trained();
    Ok(logs)
}

/// Fraction (in percent) of pixels a trained mask codec reconstructs exactly.
pub fn mask_codec_accuracy(codec: &Codec, masks: &[&MaskImage]) -> Result<f64> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for m in masks {
        let rec = codec.decode_mask(&codec.encode_mask(m)?)?.argmax();
        hit += rec.labels().iter().zip(m.labels()).filter(|(a, b)| a == b).count();
        total += m.labels().len();
    }
    if total == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(100.0 * hit as f64 / total as f64)
}

/// Pixel accuracy of a sketch codec with outputs binarized at 0.5.
pub fn sketch_codec_accuracy(codec: &Codec, sketches: &[&SketchImage]) -> Result<f64> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for s in sketches {
        let rec = codec.decode_sketch(&codec.encode_sketch(s)?)?.binarize(0.5);
        hit += rec.pixels().iter().zip(s.pixels()).filter(|(a, b)| a == b).count();
        total += s.pixels().len();
    }
    if total == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(100.0 * hit as f64 / total as f64)
}

/// Run directory: `config.json`, `loss.csv`, checkpoints.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    csv: std::fs::File,
}

impl RunDir {
    pub fn create(root: impl AsRef<Path>, config: &impl Serialize) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root)?;
        std::fs::write(root.join("config.json"), serde_json::to_vec_pretty(config)?)?;
        let mut csv = std::fs::File::create(root.join("loss.csv"))?;
        writeln!(csv, "epoch,train_loss,val_loss")?;
        Ok(Self { root, csv })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn log(&mut self, e: &EpochLog) -> Result<()> {
        let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
        writeln!(self.csv, "{},{},{}", e.epoch, e.train_loss, val)?;
        Ok(())
    }

    pub fn checkpoint_path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

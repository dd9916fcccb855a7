//! Training data: toy-world samples, conditioning pairs, and on-disk
//! manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingVector, JointEncoder};
use crate::error::{Error, Result};
use crate::generator::{Generator, LatentCode};
use crate::image::RgbImage;
use crate::io::{DType, FlatArray};
use crate::spatial::{pack_3dmm, Codec, MaskImage, Modality, SketchImage, SpatialCode, ThreeDmmParams};
use crate::toy::{self, FaceAttributes};

/// One fully described toy-world draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySample {
    pub id: String,
    pub z: Vec<f64>,
    pub w: LatentCode,
    pub image: RgbImage,
    pub mask: MaskImage,
    pub sketch: SketchImage,
    pub threedmm: ThreeDmmParams,
    pub text: String,
}

/// Per-index seed so any slice of a corpus can be rebuilt independently.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    let mut x = seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x ^= x >> 31;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^ (x >> 29)
}

/// Draws `n` samples from a generator whose images the toy parser understands.
pub fn toy_samples(generator: &dyn Generator, n: usize, seed: u64) -> Result<Vec<ToySample>> {
    (0..n).map(|i| toy_sample(generator, seed, i)).collect()
}

pub fn toy_sample(generator: &dyn Generator, seed: u64, index: usize) -> Result<ToySample> {
    let (z, w) = generator.sample_z_to_w(sample_seed(seed, index))?;
    let image = generator.synthesize(&w)?.image;
    let mask = toy::parse_image(&image).ok_or_else(|| {
        Error::NoParser("generator output is not a toy render; ingest externally parsed masks instead".into())
    })?;
    let sketch = toy::sketch_from_mask(&mask);
    let attrs = FaceAttributes::from_latent(|k, _| w.values()[k]);
    Ok(ToySample {
        id: format!("s{seed}-{index:06}"),
        z,
        threedmm: attrs.to_threedmm(),
        text: attrs.to_text(),
        w,
        image,
        mask,
        sketch,
    })
}

/// Aligned conditioning inputs and ground-truth latent of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub f_img: EmbeddingVector,
    pub f_spatial: SpatialCode,
    pub w_gt: LatentCode,
    pub source_id: String,
}

/// How the spatial code of a pair is obtained.
#[derive(Clone, Copy)]
pub enum SpatialSource<'a> {
    Mask(&'a Codec),
    Sketch(&'a Codec),
    ThreeDmm,
}

impl SpatialSource<'_> {
    pub fn modality(&self) -> Modality {
        match self {
            SpatialSource::Mask(_) => Modality::Mask,
            SpatialSource::Sketch(_) => Modality::Sketch,
            SpatialSource::ThreeDmm => Modality::ThreeDmm,
        }
    }

    pub fn encode(&self, sample: &ToySample) -> Result<SpatialCode> {
        match self {
            SpatialSource::Mask(c) => c.encode_mask(&sample.mask),
            SpatialSource::Sketch(c) => c.encode_sketch(&sample.sketch),
            SpatialSource::ThreeDmm => pack_3dmm(&sample.threedmm),
        }
    }

    /// Batched encoding, identical results to per-sample encoding.
    pub fn encode_all(&self, samples: &[ToySample]) -> Result<Vec<SpatialCode>> {
        match self {
            SpatialSource::Mask(c) => {
                let refs: Vec<&MaskImage> = samples.iter().map(|s| &s.mask).collect();
                chunked(&refs, |b| c.encode_masks(b))
            }
            SpatialSource::Sketch(c) => {
                let refs: Vec<&SketchImage> = samples.iter().map(|s| &s.sketch).collect();
                chunked(&refs, |b| c.encode_sketches(b))
            }
            SpatialSource::ThreeDmm => samples.iter().map(|s| pack_3dmm(&s.threedmm)).collect(),
        }
    }
}

fn chunked<T>(items: &[T], f: impl Fn(&[T]) -> Result<Vec<SpatialCode>>) -> Result<Vec<SpatialCode>> {
    let mut out = Vec::with_capacity(items.len());
    for c in items.chunks(64) {
        out.extend(f(c)?);
    }
    Ok(out)
}

/// Turns samples into training pairs with frozen encoders.
pub fn build_corpus(
    samples: &[ToySample],
    encoder: &dyn JointEncoder,
    spatial: SpatialSource<'_>,
) -> Result<Vec<TrainingPair>> {
    let codes = spatial.encode_all(samples)?;
    samples
        .iter()
        .zip(codes)
        .map(|(s, f_spatial)| {
            Ok(TrainingPair {
                f_img: encoder.encode_image(&s.image)?,
                f_spatial,
                w_gt: s.w.clone(),
                source_id: s.id.clone(),
            })
        })
        .collect()
}

/// SHA-256 over every pair, in order.
pub fn corpus_digest(pairs: &[TrainingPair]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for p in pairs {
        h.update(p.source_id.as_bytes());
        for v in p
            .f_img
            .values()
            .iter()
            .chain(p.f_spatial.values())
            .chain(p.w_gt.values())
        {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// One record of a corpus manifest; paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub image: String,
    pub mask: String,
    pub sketch: String,
    pub threedmm: String,
    pub latent: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub num_classes: usize,
    pub records: Vec<ManifestRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes samples as PNGs, 3DMM text rows, latent arrays and a manifest.
pub fn dump_corpus(dir: impl AsRef<Path>, samples: &[ToySample]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(samples.len());
    for s in samples {
        let rec = ManifestRecord {
            id: s.id.clone(),
            image: format!("{}_image.png", s.id),
            mask: format!("{}_mask.png", s.id),
            sketch: format!("{}_sketch.png", s.id),
            threedmm: format!("{}_3dmm.txt", s.id),
            latent: format!("{}_w.ffar", s.id),
            text: s.text.clone(),
        };
        s.image.save_png(dir.join(&rec.image))?;
        std::fs::write(dir.join(&rec.mask), s.mask.to_png(&toy::CLASS_PALETTE)?)?;
        std::fs::write(dir.join(&rec.sketch), s.sketch.to_png()?)?;
        std::fs::write(dir.join(&rec.threedmm), s.threedmm.to_text()?)?;
        FlatArray::new(vec![s.w.dim()], s.w.values().to_vec())?.save(dir.join(&rec.latent), DType::F64)?;
        records.push(rec);
    }
    let manifest = Manifest {
        num_classes: toy::NUM_CLASSES,
        records,
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(path)
}

/// Reads a manifest and every artefact it references. `z` is not stored and
/// comes back empty.
pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<Vec<ToySample>> {
    let manifest_path = manifest_path.as_ref();
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(manifest_path)?)?;
    manifest
        .records
        .iter()
        .map(|r| {
            let latent = FlatArray::load(dir.join(&r.latent))?;
            Ok(ToySample {
                id: r.id.clone(),
                z: Vec::new(),
                w: LatentCode::new(latent.values)?,
                image: RgbImage::load_png(dir.join(&r.image))?,
                mask: MaskImage::from_png(&std::fs::read(dir.join(&r.mask))?, manifest.num_classes)?,
                sketch: SketchImage::from_png(&std::fs::read(dir.join(&r.sketch))?)?,
                threedmm: ThreeDmmParams::from_text(&std::fs::read_to_string(dir.join(&r.threedmm))?)?,
                text: r.text.clone(),
            })
        })
        .collect()
}

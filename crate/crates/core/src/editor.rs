//! Latent-direction editing of inverted faces.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingVector, JointEncoder};
use crate::error::{ensure_dim, Error, Result};
use crate::generator::{GeneratedImage, Generator, Inverter, LatentCodePlus};
use crate::io::FlatArray;
use crate::mapping::Mapper;
use crate::spatial::SpatialCode;

/// Default strength for spatial edits.
pub const DEFAULT_SPATIAL_BETA: f64 = 1.0;
/// Default strength for text edits.
pub const DEFAULT_TEXT_BETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionSource {
    Text,
    Spatial,
}

/// A latent-space edit direction and what produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditDirection {
    values: Vec<f64>,
    pub source: DirectionSource,
    pub pivot_desc: String,
    pub target_desc: String,
}

impl EditDirection {
    pub fn new(
        values: Vec<f64>,
        source: DirectionSource,
        pivot_desc: impl Into<String>,
        target_desc: impl Into<String>,
    ) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("edit direction"));
        }
        Ok(Self {
            values,
            source,
            pivot_desc: pivot_desc.into(),
            target_desc: target_desc.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        crate::embedding::l2_norm(&self.values)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    fn described(mut self, pivot: &str, target: &str) -> Self {
        self.pivot_desc = pivot.to_string();
        self.target_desc = target.to_string();
        self
    }
}

/// A face in layered latent form, ready to edit.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedFace {
    pub wp_src: LatentCodePlus,
    pub source_ref: String,
}

impl InvertedFace {
    /// Inverts `image` with the bound adapter, if any.
    pub fn invert(
        image: &GeneratedImage,
        inverter: Option<&dyn Inverter>,
        generator: &dyn Generator,
        source_ref: impl Into<String>,
    ) -> Result<Self> {
        let inverter = inverter.ok_or_else(|| {
            Error::NoInverter(
                "no inversion adapter is bound; supply a precomputed latent file (L x D_w) instead".into(),
            )
        })?;
        let wp = inverter.invert(image)?;
        check_layers(&wp, generator)?;
        Ok(Self {
            wp_src: wp,
            source_ref: source_ref.into(),
        })
    }

    /// Wraps a precomputed latent.
    pub fn from_latent(wp: LatentCodePlus, generator: &dyn Generator, source_ref: impl Into<String>) -> Result<Self> {
        check_layers(&wp, generator)?;
        Ok(Self {
            wp_src: wp,
            source_ref: source_ref.into(),
        })
    }

    /// Reads an `L × D_w` array file.
    pub fn load_latent(path: impl AsRef<Path>, generator: &dyn Generator) -> Result<Self> {
        let path = path.as_ref();
        let arr = FlatArray::load(path)?;
        Self::from_array(&arr, generator, path.display().to_string())
    }

    pub fn from_array(arr: &FlatArray, generator: &dyn Generator, source_ref: impl Into<String>) -> Result<Self> {
        let (l, d) = match arr.dims.as_slice() {
            [l, d] => (*l, *d),
            [d] => (1, *d),
            other => {
                return Err(Error::Format(format!(
                    "latent file must be L x D_w, got dims {other:?}"
                )))
            }
        };
        ensure_dim(generator.latent_dim(), d, "latent file width")?;
        let mut wp = LatentCodePlus::from_flat(&arr.values, l)?;
        if l == 1 && generator.num_layers() > 1 {
            wp = LatentCodePlus::new(vec![wp.layers()[0].clone(); generator.num_layers()])?;
        }
        Self::from_latent(wp, generator, source_ref)
    }
}

fn check_layers(wp: &LatentCodePlus, generator: &dyn Generator) -> Result<()> {
    if wp.num_layers() != generator.num_layers() {
        return Err(Error::LayerCount {
            expected: generator.num_layers(),
            actual: wp.num_layers(),
        });
    }
    ensure_dim(generator.latent_dim(), wp.dim(), "layered latent width")
}

/// `w_edit = w_src + β·w_dir` on every layer.
pub fn apply_edit(src: &LatentCodePlus, dir: &EditDirection, beta: f64) -> Result<LatentCodePlus> {
    ensure_dim(src.dim(), dir.dim(), "edit direction")?;
    if !beta.is_finite() {
        return Err(Error::NonFinite("edit strength"));
    }
    let mut out = src.clone();
    for layer in out.layers_mut() {
        for (v, d) in layer.iter_mut().zip(dir.values()) {
            *v += beta * d;
        }
    }
    Ok(out)
}

/// Text-pair direction (`pivot → target`) at a fixed spatial code.
pub fn text_direction(
    mapper: &Mapper,
    encoder: &dyn JointEncoder,
    pivot: &str,
    target: &str,
    f_spatial: &SpatialCode,
) -> Result<EditDirection> {
    let f_piv = encoder.encode_text(pivot)?;
    let f_tar = encoder.encode_text(target)?;
    Ok(mapper
        .edit_direction_text(&f_tar, &f_piv, f_spatial)?
        .described(pivot, target))
}

/// Spatial-pair direction at a fixed image embedding.
pub fn spatial_direction(
    mapper: &Mapper,
    f_img: &EmbeddingVector,
    s_tar: &SpatialCode,
    s_piv: &SpatialCode,
) -> Result<EditDirection> {
    let d = mapper.edit_direction_spatial(f_img, s_tar, s_piv)?;
    let (p, t) = (s_piv.digest(), s_tar.digest());
    Ok(d.described(&p[..12], &t[..12]))
}

#[allow(clippy::too_many_arguments)]
pub fn edit_text(
    mapper: &Mapper,
    encoder: &dyn JointEncoder,
    generator: &dyn Generator,
    src: &InvertedFace,
    pivot: &str,
    target: &str,
    f_spatial: &SpatialCode,
    beta: f64,
) -> Result<GeneratedImage> {
    let dir = text_direction(mapper, encoder, pivot, target, f_spatial)?;
    generator.synthesize_plus(&apply_edit(&src.wp_src, &dir, beta)?)
}

/// Spatial edit; `f_img` defaults to the embedding of the source re-synthesis.
#[allow(clippy::too_many_arguments)]
pub fn edit_spatial(
    mapper: &Mapper,
    encoder: &dyn JointEncoder,
    generator: &dyn Generator,
    src: &InvertedFace,
    f_img: Option<&EmbeddingVector>,
    s_tar: &SpatialCode,
    s_piv: &SpatialCode,
    beta: f64,
) -> Result<GeneratedImage> {
    let owned;
    let f_img = match f_img {
        Some(f) => f,
        None => {
            owned = encoder.encode_image(&generator.synthesize_plus(&src.wp_src)?.image)?;
            &owned
        }
    };
    let dir = spatial_direction(mapper, f_img, s_tar, s_piv)?;
    generator.synthesize_plus(&apply_edit(&src.wp_src, &dir, beta)?)
}

/// Cache key: `(kind, pivot, target, context digest)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DirectionKey {
    pub source: DirectionSource,
    pub pivot: String,
    pub target: String,
    pub context: String,
}

impl DirectionKey {
    pub fn text(pivot: &str, target: &str, f_spatial: &SpatialCode) -> Self {
        Self {
            source: DirectionSource::Text,
            pivot: pivot.to_string(),
            target: target.to_string(),
            context: f_spatial.digest(),
        }
    }

    pub fn spatial(f_img: &EmbeddingVector, s_tar: &SpatialCode, s_piv: &SpatialCode) -> Self {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for v in f_img.values() {
            h.update(v.to_le_bytes());
        }
        Self {
            source: DirectionSource::Spatial,
            pivot: s_piv.digest(),
            target: s_tar.digest(),
            context: hex::encode(h.finalize()),
        }
    }
}

/// Memoizes directions; safe to share across threads.
#[derive(Debug, Default)]
pub struct DirectionCache {
    entries: Mutex<HashMap<DirectionKey, EditDirection>>,
}

impl DirectionCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the cached direction or computes and stores it. The flag is
    /// `true` on a cache hit.
    pub fn get_or_compute(
        &self,
        key: DirectionKey,
        compute: impl FnOnce() -> Result<EditDirection>,
    ) -> Result<(EditDirection, bool)> {
        if let Some(d) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok((d.clone(), true));
        }
        let d = compute()?;
        self.entries.lock().expect("cache lock").insert(key, d.clone());
        Ok((d, false))
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

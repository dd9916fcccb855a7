//! Spatial conditioning: masks, sketches, 3DMM parameters and their codecs.

pub mod codec;
pub mod loss;
pub mod mask;
pub mod sketch;
pub mod threedmm;

use serde::{Deserialize, Serialize};

pub use codec::{Codec, CodecConfig};
pub use loss::{mask_reconstruction_loss, sketch_reconstruction_loss, BCE_EPS};
pub use mask::{MaskImage, MaskProbabilities, MAX_CLASSES};
pub use sketch::{SketchImage, SketchProbabilities};
pub use threedmm::{pack_3dmm, unpack_3dmm, ThreeDmmParams, THREEDMM_DIM};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Mask,
    Sketch,
    #[serde(rename = "threedmm")]
    ThreeDmm,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Mask => "mask",
            Modality::Sketch => "sketch",
            Modality::ThreeDmm => "threedmm",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask" => Ok(Modality::Mask),
            "sketch" => Ok(Modality::Sketch),
            "threedmm" | "3dmm" => Ok(Modality::ThreeDmm),
            other => Err(Error::Parse(format!("unknown modality `{other}`"))),
        }
    }
}

/// Flat conditioning vector produced by a spatial modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialCode {
    values: Vec<f64>,
    modality: Modality,
}

impl SpatialCode {
    pub fn new(values: Vec<f64>, modality: Modality) -> Result<Self> {
        if modality == Modality::ThreeDmm && values.len() != THREEDMM_DIM {
            return Err(Error::DimensionMismatch {
                expected: THREEDMM_DIM,
                actual: values.len(),
                context: "3DMM spatial code",
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spatial code"));
        }
        Ok(Self { values, modality })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn expect_modality(&self, expected: Modality) -> Result<()> {
        if self.modality == expected {
            Ok(())
        } else {
            Err(Error::ModalityMismatch {
                expected: expected.as_str(),
                actual: self.modality.as_str(),
            })
        }
    }

    /// Hex SHA-256 over modality tag and values; used as a cache key.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.modality.as_str().as_bytes());
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub(crate) fn check_grid(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 || !height.is_power_of_two() || !width.is_power_of_two() {
        Err(Error::InvalidGrid(height, width))
    } else {
        Ok(())
    }
}

//! Wire types. Images travel as base64 PNG, latents as base64 `FFAR` arrays
//! (float64 with a dimension header).

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use facefuse::image::RgbImage;
use facefuse::io::{DType, FlatArray};
use facefuse::pipeline::SpatialInput;
use facefuse::spatial::{MaskImage, SketchImage, ThreeDmmParams};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// A 2D grid given inline (rows of labels) or as a base64 PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridPayload {
    Rows(Vec<Vec<u8>>),
    Png { png: String },
}

impl GridPayload {
    fn rows(rows: &[Vec<u8>]) -> Result<(usize, usize, Vec<u8>), ApiError> {
        let h = rows.len();
        let w = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != w) {
            return Err(ApiError::bad_request("grid rows have different lengths"));
        }
        Ok((h, w, rows.concat()))
    }

    pub fn mask(&self, num_classes: usize) -> Result<MaskImage, ApiError> {
        Ok(match self {
            GridPayload::Rows(r) => {
                let (h, w, labels) = Self::rows(r)?;
                MaskImage::new(h, w, num_classes, labels)?
            }
            GridPayload::Png { png } => MaskImage::from_png(&decode_b64(png)?, num_classes)?,
        })
    }

    pub fn sketch(&self) -> Result<SketchImage, ApiError> {
        Ok(match self {
            GridPayload::Rows(r) => {
                let (h, w, px) = Self::rows(r)?;
                SketchImage::from_raw(h, w, &px)?
            }
            GridPayload::Png { png } => SketchImage::from_png(&decode_b64(png)?)?,
        })
    }

    pub fn from_mask(mask: &MaskImage) -> Self {
        GridPayload::Rows(mask.labels().chunks(mask.width()).map(<[u8]>::to_vec).collect())
    }
}

/// Exactly one of the three modalities must be present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<GridPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch: Option<GridPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threedmm: Option<Vec<f64>>,
}

impl SpatialPayload {
    pub fn is_empty(&self) -> bool {
        self.mask.is_none() && self.sketch.is_none() && self.threedmm.is_none()
    }

    pub fn decode(&self, num_classes: usize) -> Result<SpatialInput, ApiError> {
        match (&self.mask, &self.sketch, &self.threedmm) {
            (Some(m), None, None) => Ok(SpatialInput::Mask(m.mask(num_classes)?)),
            (None, Some(s), None) => Ok(SpatialInput::Sketch(s.sketch()?)),
            (None, None, Some(p)) => Ok(SpatialInput::ThreeDmm(ThreeDmmParams::from_slice(p)?)),
            (None, None, None) => Err(ApiError::bad_request(
                "no spatial input: give exactly one of `mask`, `sketch`, `threedmm`",
            )),
            _ => Err(ApiError::bad_request(
                "several spatial inputs: give exactly one of `mask`, `sketch`, `threedmm`",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub text: String,
    #[serde(flatten)]
    pub spatial: SpatialPayload,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_beta() -> f64 {
    facefuse::editor::DEFAULT_TEXT_BETA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    /// Run id of a previous `/generate` or `/edit` result.
    #[serde(default)]
    pub latent_ref: Option<String>,
    /// Base64 `FFAR` latent, `L × D_w` or `D_w`.
    #[serde(default)]
    pub latent: Option<String>,
    /// Base64 PNG; needs an inversion adapter.
    #[serde(default)]
    pub image: Option<String>,
    #[serde(default)]
    pub pivot_text: Option<String>,
    #[serde(default)]
    pub target_text: Option<String>,
    /// Spatial code the text direction is evaluated at; defaults to the
    /// spatial input of the referenced run.
    #[serde(default)]
    pub context: Option<SpatialPayload>,
    #[serde(default)]
    pub spatial_pivot: Option<SpatialPayload>,
    #[serde(default)]
    pub spatial_target: Option<SpatialPayload>,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub request_id: String,
    /// Base64 PNG.
    pub image: String,
    /// Base64 `FFAR` float64 array of shape `[D_w]`.
    pub latent_w: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditResponse {
    pub request_id: String,
    pub image: String,
    /// Base64 `FFAR` float64 array of shape `[L, D_w]`.
    pub latent_wplus: String,
    pub direction_cached: bool,
}

pub fn decode_b64(s: &str) -> Result<Vec<u8>, ApiError> {
    B64.decode(s.trim())
        .map_err(|e| ApiError::bad_request(format!("invalid base64: {e}")))
}

pub fn encode_b64(bytes: &[u8]) -> String {
    B64.encode(bytes)
}

pub fn png_b64(image: &RgbImage) -> Result<String, ApiError> {
    Ok(encode_b64(&image.to_png()?))
}

pub fn latent_b64(dims: Vec<usize>, values: Vec<f64>) -> Result<String, ApiError> {
    Ok(encode_b64(&FlatArray::new(dims, values)?.to_bytes(DType::F64)))
}

pub fn decode_latent(s: &str) -> Result<FlatArray, ApiError> {
    Ok(FlatArray::from_bytes(&decode_b64(s)?)?)
}

//! 3D morphable model parameters used directly as a conditioning code.

use serde::{Deserialize, Serialize};

use super::{Modality, SpatialCode};
use crate::error::{Error, Result};

pub const SHAPE_DIM: usize = 100;
pub const EXPRESSION_DIM: usize = 50;
pub const POSE_DIM: usize = 9;
pub const THREEDMM_DIM: usize = SHAPE_DIM + EXPRESSION_DIM + POSE_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeDmmParams {
    pub shape: Vec<f64>,
    pub expression: Vec<f64>,
    pub pose: Vec<f64>,
}

impl ThreeDmmParams {
    pub fn zeros() -> Self {
        Self {
            shape: vec![0.0; SHAPE_DIM],
            expression: vec![0.0; EXPRESSION_DIM],
            pose: vec![0.0; POSE_DIM],
        }
    }

    fn validate(&self) -> Result<()> {
        for (part, expected, actual) in [
            ("shape", SHAPE_DIM, self.shape.len()),
            ("expression", EXPRESSION_DIM, self.expression.len()),
            ("pose", POSE_DIM, self.pose.len()),
        ] {
            if expected != actual {
                return Err(Error::ThreeDmmLength { part, expected, actual });
            }
        }
        Ok(())
    }

    /// `shape ‖ expression ‖ pose`.
    pub fn to_vec(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut v = Vec::with_capacity(THREEDMM_DIM);
        v.extend_from_slice(&self.shape);
        v.extend_from_slice(&self.expression);
        v.extend_from_slice(&self.pose);
        Ok(v)
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != THREEDMM_DIM {
            return Err(Error::DimensionMismatch {
                expected: THREEDMM_DIM,
                actual: v.len(),
                context: "3DMM parameter row",
            });
        }
        Ok(Self {
            shape: v[..SHAPE_DIM].to_vec(),
            expression: v[SHAPE_DIM..SHAPE_DIM + EXPRESSION_DIM].to_vec(),
            pose: v[SHAPE_DIM + EXPRESSION_DIM..].to_vec(),
        })
    }

    /// Whitespace-separated plain-text row of 159 numbers.
    pub fn from_text(text: &str) -> Result<Self> {
        let v: Vec<f64> = text
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("3DMM value `{t}`: {e}")))
            })
            .collect::<Result<_>>()?;
        Self::from_slice(&v)
    }

    pub fn to_text(&self) -> Result<String> {
        let v = self.to_vec()?;
        Ok(v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ") + "\n")
    }

    /// Binary row: 159 little-endian `f32`.
    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != THREEDMM_DIM * 4 {
            return Err(Error::Format(format!(
                "3DMM binary row must be {} bytes, got {}",
                THREEDMM_DIM * 4,
                bytes.len()
            )));
        }
        let v: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::from_slice(&v)
    }

    pub fn to_binary(&self) -> Result<Vec<u8>> {
        Ok(self.to_vec()?.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect())
    }
}

/// Uses the parameters verbatim as a 159-dimensional code.
pub fn pack_3dmm(p: &ThreeDmmParams) -> Result<SpatialCode> {
    SpatialCode::new(p.to_vec()?, Modality::ThreeDmm)
}

pub fn unpack_3dmm(code: &SpatialCode) -> Result<ThreeDmmParams> {
    code.expect_modality(Modality::ThreeDmm)?;
    ThreeDmmParams::from_slice(code.values())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_pack_to_zero_code() {
        let code = pack_3dmm(&ThreeDmmParams::zeros()).unwrap();
        assert_eq!(code.dim(), 159);
        assert!(code.values().iter().all(|&v| v == 0.0));
        assert_eq!(code.modality(), Modality::ThreeDmm);
    }

    #[test]
    fn wrong_shape_length_rejected() {
        let mut p = ThreeDmmParams::zeros();
        p.shape.pop();
        assert!(matches!(
            pack_3dmm(&p),
            Err(Error::ThreeDmmLength {
                part: "shape",
                expected: 100,
                actual: 99
            })
        ));
    }

    #[test]
    fn text_and_binary_rows() {
        let mut p = ThreeDmmParams::zeros();
        p.shape[3] = 0.25;
        p.pose[8] = -1.5;
        assert_eq!(ThreeDmmParams::from_text(&p.to_text().unwrap()).unwrap(), p);
        assert_eq!(ThreeDmmParams::from_binary(&p.to_binary().unwrap()).unwrap(), p);
    }

    #[test]
    fn unpack_rejects_other_modality() {
        let code = SpatialCode::new(vec![0.0; 159], Modality::Mask).unwrap();
        assert!(unpack_3dmm(&code).is_err());
    }
}

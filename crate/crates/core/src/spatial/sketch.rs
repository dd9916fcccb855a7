use std::io::Cursor;

use super::check_grid;
use crate::error::{Error, Result};

/// Binary line drawing; pixels are 0 (background) or 1 (stroke).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl SketchImage {
    /// Normalizes `{0, 1, 255}` storage to `{0, 1}`; anything else is rejected.
    pub fn from_raw(height: usize, width: usize, raw: &[u8]) -> Result<Self> {
        check_grid(height, width)?;
        if raw.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                actual: raw.len(),
                context: "sketch pixels",
            });
        }
        let pixels = raw
            .iter()
            .map(|&v| match v {
                0 => Ok(0),
                1 | 255 => Ok(1),
                other => Err(Error::NonBinarySketch(other)),
            })
            .collect::<Result<_>>()?;
        Ok(Self { height, width, pixels })
    }

    pub fn blank(height: usize, width: usize) -> Result<Self> {
        Self::from_raw(height, width, &vec![0; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn stroke_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == 1).count()
    }

    /// 8-bit grayscale PNG with strokes at 255.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header()?;
            let bytes: Vec<u8> = self.pixels.iter().map(|&p| p * 255).collect();
            writer.write_image_data(&bytes)?;
        }
        Ok(out)
    }

    /// Accepts 1-bit or 8-bit grayscale PNGs.
    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::EXPAND);
        let mut reader = decoder.read_info()?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf)?;
        if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Format(format!(
                "sketch png must be grayscale, got {:?}/{:?}",
                info.color_type, info.bit_depth
            )));
        }
        let (w, h) = (info.width as usize, info.height as usize);
        let mut raw = Vec::with_capacity(w * h);
        for row in 0..h {
            raw.extend_from_slice(&buf[row * info.line_size..row * info.line_size + w]);
        }
        Self::from_raw(h, w, &raw)
    }
}

/// Per-pixel stroke probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchProbabilities {
    height: usize,
    width: usize,
    probs: Vec<f32>,
}

impl SketchProbabilities {
    pub fn new(height: usize, width: usize, probs: Vec<f32>) -> Result<Self> {
        if probs.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                actual: probs.len(),
                context: "sketch probability field",
            });
        }
        Ok(Self { height, width, probs })
    }

    pub fn probs(&self) -> &[f32] {
        &self.probs
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn binarize(&self, threshold: f32) -> SketchImage {
        SketchImage {
            height: self.height,
            width: self.width,
            pixels: self.probs.iter().map(|&p| u8::from(p >= threshold)).collect(),
        }
    }
}

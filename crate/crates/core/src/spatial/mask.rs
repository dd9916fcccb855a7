use std::io::Cursor;

use serde::{Deserialize, Serialize};

use super::check_grid;
use crate::error::{Error, Result};

/// Upper bound on segmentation classes (face-parsing label sets use 19).
pub const MAX_CLASSES: usize = 19;

/// Integer label grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskImage {
    height: usize,
    width: usize,
    num_classes: usize,
    labels: Vec<u8>,
}

impl MaskImage {
    pub fn new(height: usize, width: usize, num_classes: usize, labels: Vec<u8>) -> Result<Self> {
        check_grid(height, width)?;
        if num_classes == 0 || num_classes > MAX_CLASSES {
            return Err(Error::Config(format!(
                "num_classes must be in 1..={MAX_CLASSES}, got {num_classes}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                actual: labels.len(),
                context: "mask labels",
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                num_classes,
            });
        }
        Ok(Self {
            height,
            width,
            num_classes,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, num_classes: usize, label: u8) -> Result<Self> {
        Self::new(height, width, num_classes, vec![label; height * width])
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

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    pub fn one_hot(&self) -> MaskProbabilities {
        let mut probs = vec![0.0f32; self.labels.len() * self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            probs[i * self.num_classes + l as usize] = 1.0;
        }
        MaskProbabilities {
            height: self.height,
            width: self.width,
            num_classes: self.num_classes,
            probs,
        }
    }

    /// Paletted PNG; palette index equals class id.
    pub fn to_png(&self, palette: &[[u8; 3]]) -> Result<Vec<u8>> {
        if palette.len() < self.num_classes {
            return Err(Error::Config(format!(
                "palette has {} entries for {} classes",
                palette.len(),
                self.num_classes
            )));
        }
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Indexed);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_palette(palette.iter().flatten().copied().collect::<Vec<u8>>());
            let mut writer = enc.write_header()?;
            writer.write_image_data(&self.labels)?;
        }
        Ok(out)
    }

    /// Reads a paletted (or 8-bit grayscale) PNG as raw class indices.
    pub fn from_png(bytes: &[u8], num_classes: usize) -> Result<Self> {
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::IDENTITY);
        let mut reader = decoder.read_info()?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf)?;
        let (w, h) = (info.width as usize, info.height as usize);
        let labels = match (info.color_type, info.bit_depth) {
            (png::ColorType::Indexed | png::ColorType::Grayscale, png::BitDepth::Eight) => {
                let stride = info.line_size;
                let mut labels = Vec::with_capacity(w * h);
                for row in 0..h {
                    labels.extend_from_slice(&buf[row * stride..row * stride + w]);
                }
                labels
            }
            (ct, bd) => {
                return Err(Error::Format(format!(
                    "mask png must be 8-bit indexed or grayscale, got {ct:?}/{bd:?}"
                )))
            }
        };
        Self::new(h, w, num_classes, labels)
    }

    /// Plain-text grid: one row per line, labels separated by whitespace.
    pub fn to_text_grid(&self) -> String {
        let mut s = String::with_capacity(self.labels.len() * 3);
        for row in self.labels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|l| l.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text_grid(text: &str, num_classes: usize) -> Result<Self> {
        let mut width = None;
        let mut labels = Vec::new();
        let mut height = 0;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let row: Vec<u8> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<u8>()
                        .map_err(|e| Error::Parse(format!("mask label `{t}`: {e}")))
                })
                .collect::<Result<_>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::Parse(format!(
                        "ragged mask grid: row {height} has {} cells, expected {w}",
                        row.len()
                    )))
                }
                _ => {}
            }
            labels.extend(row);
            height += 1;
        }
        Self::new(height, width.unwrap_or(0), num_classes, labels)
    }
}

/// Per-pixel class distribution, stored `(pixel, class)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskProbabilities {
    height: usize,
    width: usize,
    num_classes: usize,
    probs: Vec<f32>,
}

impl MaskProbabilities {
    pub fn new(height: usize, width: usize, num_classes: usize, probs: Vec<f32>) -> Result<Self> {
        if probs.len() != height * width * num_classes {
            return Err(Error::DimensionMismatch {
                expected: height * width * num_classes,
                actual: probs.len(),
                context: "mask probability field",
            });
        }
        Ok(Self {
            height,
            width,
            num_classes,
            probs,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn probs(&self) -> &[f32] {
        &self.probs
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let i = (y * self.width + x) * self.num_classes;
        &self.probs[i..i + self.num_classes]
    }

    pub fn argmax(&self) -> MaskImage {
        let labels = self
            .probs
            .chunks(self.num_classes)
            .map(|p| {
                let mut best = 0;
                for (c, &v) in p.iter().enumerate() {
                    if v > p[best] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect();
        MaskImage {
            height: self.height,
            width: self.width,
            num_classes: self.num_classes,
            labels,
        }
    }
}

//! Procedural desk-scale face world.
//!
//! A small set of named attributes drives a 64×64 raster made of flat-coloured
//! regions (background, hair, neck, face, eyes, nose, mouth). Every region's
//! blue channel carries a fixed class code, so a rule-based parser recovers the
//! segmentation exactly from pixels. Attributes are also expressible as a
//! `key=value` text, which is how the synthetic text encoder gets aligned with
//! the image encoder.

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::spatial::threedmm::{ThreeDmmParams, EXPRESSION_DIM, POSE_DIM, SHAPE_DIM};
use crate::spatial::{MaskImage, SketchImage};

pub const IMAGE_SIZE: usize = 64;
pub const NUM_CLASSES: usize = 8;

pub const CLASS_BACKGROUND: u8 = 0;
pub const CLASS_SKIN: u8 = 1;
pub const CLASS_HAIR: u8 = 2;
pub const CLASS_LEFT_EYE: u8 = 3;
pub const CLASS_RIGHT_EYE: u8 = 4;
pub const CLASS_NOSE: u8 = 5;
pub const CLASS_MOUTH: u8 = 6;
pub const CLASS_NECK: u8 = 7;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "background",
    "skin",
    "hair",
    "left_eye",
    "right_eye",
    "nose",
    "mouth",
    "neck",
];

/// Display palette for masks (not the render colours).
pub const CLASS_PALETTE: [[u8; 3]; NUM_CLASSES] = [
    [0, 0, 0],
    [204, 0, 0],
    [0, 0, 204],
    [51, 255, 255],
    [0, 255, 153],
    [76, 153, 0],
    [255, 204, 204],
    [255, 153, 51],
];

/// Blue-channel code painted into every pixel of a class.
const CLASS_CODE: [f32; NUM_CLASSES] = [0.06, 0.18, 0.30, 0.42, 0.54, 0.66, 0.78, 0.90];
const CODE_TOLERANCE: f32 = 0.04;

/// Which style layer of a layered latent drives an attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Coarse = 0,
    Medium = 1,
    Fine = 2,
    Colour = 3,
}

pub const NUM_BANDS: usize = 4;

#[derive(Debug, Clone, Copy)]
pub struct AttributeSpec {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub band: Band,
}

const fn attr(name: &'static str, lo: f64, hi: f64, band: Band) -> AttributeSpec {
    AttributeSpec { name, lo, hi, band }
}

/// Attribute table; the index is also the latent coordinate that drives it.
pub const ATTRIBUTES: [AttributeSpec; 19] = [
    attr("face_cx", 28.0, 36.0, Band::Coarse),
    attr("face_cy", 31.0, 37.0, Band::Coarse),
    attr("face_rx", 11.0, 17.0, Band::Coarse),
    attr("face_ry", 14.0, 20.0, Band::Coarse),
    attr("hair_volume", 1.0, 7.0, Band::Coarse),
    attr("hair_length", 0.0, 18.0, Band::Coarse),
    attr("eye_spacing", 4.5, 7.5, Band::Medium),
    attr("eye_height", 2.0, 6.0, Band::Medium),
    attr("eye_rx", 1.5, 3.5, Band::Medium),
    attr("eye_ry", 1.0, 2.5, Band::Medium),
    attr("nose_length", 2.0, 6.0, Band::Medium),
    attr("mouth_rx", 3.0, 7.0, Band::Medium),
    attr("mouth_ry", 0.8, 3.0, Band::Medium),
    attr("neck_width", 5.0, 10.0, Band::Medium),
    attr("eye_tone", 0.0, 1.0, Band::Fine),
    attr("lip_tone", 0.0, 1.0, Band::Fine),
    attr("hair_tone", 0.0, 1.0, Band::Colour),
    attr("skin_tone", 0.0, 1.0, Band::Colour),
    attr("background_tone", 0.0, 1.0, Band::Colour),
];

pub const NUM_ATTRIBUTES: usize = ATTRIBUTES.len();

pub fn attribute_index(name: &str) -> Option<usize> {
    ATTRIBUTES.iter().position(|a| a.name == name)
}

pub const HAIR_TONE: usize = 16;
pub const HAIR_VOLUME: usize = 4;
pub const HAIR_LENGTH: usize = 5;

/// Default prompt used when only a target text is supplied.
pub const DEFAULT_PIVOT: &str = "A photo of a person";

/// Concrete attribute values.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceAttributes {
    pub values: [f64; NUM_ATTRIBUTES],
}

impl Default for FaceAttributes {
    /// The "average" face: every attribute at the midpoint of its range.
    fn default() -> Self {
        let mut values = [0.0; NUM_ATTRIBUTES];
        for (v, a) in values.iter_mut().zip(ATTRIBUTES.iter()) {
            *v = 0.5 * (a.lo + a.hi);
        }
        Self { values }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl FaceAttributes {
    /// Maps per-attribute latent coordinates through a squashing affine map.
    /// `coord(k)` returns the latent value driving attribute `k`.
    pub fn from_latent(coord: impl Fn(usize, Band) -> f64) -> Self {
        let mut values = [0.0; NUM_ATTRIBUTES];
        for (k, a) in ATTRIBUTES.iter().enumerate() {
            values[k] = a.lo + (a.hi - a.lo) * sigmoid(coord(k, a.band));
        }
        Self { values }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        attribute_index(name).map(|i| self.values[i])
    }

    /// Canonical text: every attribute with three decimals.
    pub fn to_text(&self) -> String {
        let mut s = String::from("a photo of a person");
        for (a, v) in ATTRIBUTES.iter().zip(self.values.iter()) {
            s.push_str(&format!("; {}={:.3}", a.name, v));
        }
        s
    }

    /// Parses a prompt. Segments are separated by `;` or `,`; `key=value`
    /// segments set attributes (numeric or a named value), free text is
    /// scanned for known phrases. Unspecified attributes keep their defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut attrs = Self::default();
        for seg in text.split([';', ',']).map(str::trim).filter(|s| !s.is_empty()) {
            if let Some((k, v)) = seg.split_once('=') {
                let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_ascii_lowercase());
                let (idx, value) = resolve_assignment(&k, &v)?;
                let a = ATTRIBUTES[idx];
                attrs.values[idx] = value.clamp(a.lo, a.hi);
            } else {
                let lower = seg.to_ascii_lowercase();
                for (phrase, name, value) in PHRASES {
                    if lower.contains(phrase) {
                        let idx = attribute_index(name).expect("phrase table");
                        attrs.values[idx] = *value;
                    }
                }
            }
        }
        Ok(attrs)
    }

    /// Renders the face and its exact segmentation.
    pub fn render(&self) -> (RgbImage, MaskImage) {
        render(self)
    }

    /// Toy 3DMM-style parameters: normalised geometry in the shape block,
    /// mouth/eye openness in the expression block, face position in the pose block.
    pub fn to_threedmm(&self) -> ThreeDmmParams {
        let norm = |k: usize| {
            let a = ATTRIBUTES[k];
            2.0 * (self.values[k] - a.lo) / (a.hi - a.lo) - 1.0
        };
        let mut shape = vec![0.0; SHAPE_DIM];
        for (slot, k) in [2usize, 3, 4, 5, 6, 7, 8, 10, 13].iter().enumerate() {
            shape[slot] = norm(*k);
        }
        let mut expression = vec![0.0; EXPRESSION_DIM];
        for (slot, k) in [9usize, 11, 12].iter().enumerate() {
            expression[slot] = norm(*k);
        }
        let mut pose = vec![0.0; POSE_DIM];
        pose[0] = norm(0);
        pose[1] = norm(1);
        ThreeDmmParams {
            shape,
            expression,
            pose,
        }
    }
}

const PHRASES: &[(&str, &str, f64)] = &[
    ("blond hair", "hair_tone", 0.95),
    ("blonde hair", "hair_tone", 0.95),
    ("dark hair", "hair_tone", 0.05),
    ("black hair", "hair_tone", 0.0),
    ("brown hair", "hair_tone", 0.35),
    ("long hair", "hair_length", 16.0),
    ("short hair", "hair_length", 2.0),
    ("pale skin", "skin_tone", 0.95),
    ("tan skin", "skin_tone", 0.4),
    ("dark skin", "skin_tone", 0.05),
    ("smiling", "mouth_ry", 2.8),
    ("open mouth", "mouth_ry", 2.8),
    ("big eyes", "eye_rx", 3.3),
    ("small eyes", "eye_rx", 1.6),
];

fn resolve_assignment(key: &str, value: &str) -> Result<(usize, f64)> {
    let named = |table: &[(&str, f64)]| {
        table
            .iter()
            .find(|(n, _)| *n == value)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Parse(format!("unknown value `{value}` for `{key}`")))
    };
    let (name, v) = match key {
        "hair" => (
            "hair_tone",
            named(&[
                ("blond", 0.95),
                ("blonde", 0.95),
                ("dark", 0.05),
                ("black", 0.0),
                ("brown", 0.35),
            ])?,
        ),
        "skin" => ("skin_tone", named(&[("pale", 0.95), ("tan", 0.4), ("dark", 0.05)])?),
        "background" | "bg" => ("background_tone", named(&[("light", 0.9), ("dark", 0.1)])?),
        k => {
            let v = value
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("`{key}` needs a numeric value, got `{value}`")))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("`{key}` value must be finite")));
            }
            (k, v)
        }
    };
    let idx = attribute_index(name).ok_or_else(|| Error::Parse(format!("unknown attribute `{name}`")))?;
    Ok((idx, v))
}

fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

fn colour(class: u8, a: &FaceAttributes) -> [f32; 3] {
    let t = |name: &str| a.get(name).unwrap_or(0.5) as f32;
    let (r, g) = match class {
        CLASS_BACKGROUND => {
            let u = t("background_tone");
            (lerp(0.2, 0.8, u), lerp(0.7, 0.3, u))
        }
        CLASS_HAIR => {
            let u = t("hair_tone");
            (lerp(0.15, 0.92, u), lerp(0.10, 0.80, u))
        }
        CLASS_SKIN | CLASS_NOSE | CLASS_NECK => {
            let u = t("skin_tone");
            let shade = match class {
                CLASS_SKIN => 1.0,
                CLASS_NOSE => 0.93,
                _ => 0.85,
            };
            (shade * lerp(0.45, 0.95, u), shade * lerp(0.30, 0.80, u))
        }
        CLASS_LEFT_EYE | CLASS_RIGHT_EYE => {
            let u = t("eye_tone");
            (lerp(0.10, 0.50, u), lerp(0.10, 0.60, u))
        }
        _ => {
            let u = t("lip_tone");
            (lerp(0.50, 0.90, u), lerp(0.15, 0.35, u))
        }
    };
    [r, g, CLASS_CODE[class as usize]]
}

fn in_ellipse(px: f64, py: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> bool {
    let dx = (px - cx) / rx;
    let dy = (py - cy) / ry;
    dx * dx + dy * dy <= 1.0
}

fn render(a: &FaceAttributes) -> (RgbImage, MaskImage) {
    let v = |name: &str| a.get(name).expect("attribute table");
    let (cx, cy, rx, ry) = (v("face_cx"), v("face_cy"), v("face_rx"), v("face_ry"));
    let (vol, hlen) = (v("hair_volume"), v("hair_length"));
    let (esp, eh, erx, ery) = (v("eye_spacing"), v("eye_height"), v("eye_rx"), v("eye_ry"));
    let nose = v("nose_length");
    let (mrx, mry) = (v("mouth_rx"), v("mouth_ry"));
    let neck = v("neck_width");
    let hair_cy = cy - 0.15 * ry;
    let n = IMAGE_SIZE;
    let mut labels = vec![CLASS_BACKGROUND; n * n];
    for y in 0..n {
        for x in 0..n {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut l = CLASS_BACKGROUND;
            if in_ellipse(px, py, cx, hair_cy, rx + vol, ry + vol) && py <= cy + hlen - 4.0 {
                l = CLASS_HAIR;
            }
            if (px - cx).abs() <= neck && py >= cy + 0.5 * ry {
                l = CLASS_NECK;
            }
            if in_ellipse(px, py, cx, cy, rx, ry) {
                l = CLASS_SKIN;
            }
            if in_ellipse(px, py, cx - esp, cy - eh, erx, ery) {
                l = CLASS_LEFT_EYE;
            }
            if in_ellipse(px, py, cx + esp, cy - eh, erx, ery) {
                l = CLASS_RIGHT_EYE;
            }
            if in_ellipse(px, py, cx, cy + 0.5 * nose - 1.0, 1.3, 0.5 * nose + 0.5) {
                l = CLASS_NOSE;
            }
            if in_ellipse(px, py, cx, cy + 0.55 * ry, mrx, mry) {
                l = CLASS_MOUTH;
            }
            labels[y * n + x] = l;
        }
    }
    let palette: Vec<[f32; 3]> = (0..NUM_CLASSES as u8).map(|c| colour(c, a)).collect();
    let mut data = Vec::with_capacity(n * n * 3);
    for &l in &labels {
        data.extend_from_slice(&palette[l as usize]);
    }
    let img = RgbImage::new(n, n, data).expect("render buffer");
    let mask = MaskImage::new(n, n, NUM_CLASSES, labels).expect("render labels");
    (img, mask)
}

/// Exact rule-based parser for toy renders; `None` when a pixel carries no
/// known class code (i.e. the image did not come from the toy world).
pub fn parse_image(img: &RgbImage) -> Option<MaskImage> {
    let mut labels = Vec::with_capacity(img.width() * img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            let b = img.pixel(x, y)[2];
            let (best, dist) = CLASS_CODE
                .iter()
                .enumerate()
                .map(|(c, &code)| (c, (code - b).abs()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty");
            if dist > CODE_TOLERANCE {
                return None;
            }
            labels.push(best as u8);
        }
    }
    MaskImage::new(img.height(), img.width(), NUM_CLASSES, labels).ok()
}

/// Region boundaries of a mask as a binary sketch (a pixel is a stroke when
/// its right or lower neighbour has a different label).
pub fn sketch_from_mask(mask: &MaskImage) -> SketchImage {
    let (h, w) = mask.shape();
    let mut px = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let l = mask.get(y, x);
            let edge = (x + 1 < w && mask.get(y, x + 1) != l) || (y + 1 < h && mask.get(y + 1, x) != l);
            px[y * w + x] = u8::from(edge);
        }
    }
    SketchImage::from_raw(h, w, &px).expect("mask grid")
}

/// Mean colour of the pixels labelled `class`, if any.
pub fn region_mean_colour(img: &RgbImage, mask: &MaskImage, class: u8) -> Option<[f64; 3]> {
    let mut sum = [0.0f64; 3];
    let mut n = 0usize;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(y, x) == class {
                let p = img.pixel(x, y);
                for c in 0..3 {
                    sum[c] += p[c] as f64;
                }
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum.map(|s| s / n as f64))
}

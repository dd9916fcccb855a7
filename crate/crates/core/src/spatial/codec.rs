//! Convolutional autoencoders for mask and sketch conditioning.
//!
//! Encoder: four blocks of (3×3 conv, leaky ReLU, 2× average pool), then a
//! linear projection to the code. The decoder mirrors it with nearest-neighbour
//! upsampling and finishes with a 1×1 conv to per-pixel logits (softmax over
//! classes for masks, sigmoid for sketches).

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array4, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MaskImage, MaskProbabilities, Modality, SketchImage, SketchProbabilities, SpatialCode};
use crate::error::{Error, Result};
use crate::nn::{self, conv, LayoutBuilder, Segment};

const CHECKPOINT_MAGIC: &[u8; 4] = b"FFCD";
const CHECKPOINT_VERSION: u32 = 1;
const NUM_BLOCKS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub modality: Modality,
    pub height: usize,
    pub width: usize,
    /// Class count for masks; ignored (treated as 1) for sketches.
    pub num_classes: usize,
    pub code_dim: usize,
    pub enc_channels: [usize; NUM_BLOCKS],
    pub dec_channels: [usize; NUM_BLOCKS],
}

impl CodecConfig {
    pub fn desk_mask(num_classes: usize) -> Self {
        Self {
            modality: Modality::Mask,
            height: 64,
            width: 64,
            num_classes,
            code_dim: 64,
            enc_channels: [8, 16, 32, 32],
            dec_channels: [32, 16, 8, 8],
        }
    }

    pub fn desk_sketch() -> Self {
        Self {
            modality: Modality::Sketch,
            height: 64,
            width: 64,
            num_classes: 1,
            code_dim: 64,
            enc_channels: [8, 16, 32, 32],
            dec_channels: [32, 16, 8, 8],
        }
    }

    pub fn channels(&self) -> usize {
        match self.modality {
            Modality::Mask => self.num_classes,
            _ => 1,
        }
    }

    fn bottleneck(&self) -> (usize, usize, usize) {
        let f = 1 << NUM_BLOCKS;
        (self.enc_channels[NUM_BLOCKS - 1], self.height / f, self.width / f)
    }

    fn flat_dim(&self) -> usize {
        let (c, h, w) = self.bottleneck();
        c * h * w
    }

    pub fn validate(&self) -> Result<()> {
        if self.modality == Modality::ThreeDmm {
            return Err(Error::Config("3DMM parameters have no learned codec".into()));
        }
        let min = 1 << NUM_BLOCKS;
        if !self.height.is_power_of_two() || !self.width.is_power_of_two() || self.height < min || self.width < min {
            return Err(Error::InvalidGrid(self.height, self.width));
        }
        if self.modality == Modality::Mask && (self.num_classes < 2 || self.num_classes > super::MAX_CLASSES) {
            return Err(Error::Config(format!(
                "mask codec needs 2..={} classes, got {}",
                super::MAX_CLASSES,
                self.num_classes
            )));
        }
        if self.code_dim == 0 || self.enc_channels.contains(&0) || self.dec_channels.contains(&0) {
            return Err(Error::Config("codec widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ConvSeg {
    w: Segment,
    b: Segment,
    c_in: usize,
    c_out: usize,
    k: usize,
}

#[derive(Debug, Clone)]
struct DenseSeg {
    w: Segment,
    b: Segment,
    d_in: usize,
    d_out: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    enc: Vec<ConvSeg>,
    enc_fc: DenseSeg,
    dec_fc: DenseSeg,
    dec: Vec<ConvSeg>,
    out: ConvSeg,
    len: usize,
}

impl Layout {
    fn new(cfg: &CodecConfig) -> Self {
        let mut lb = LayoutBuilder::default();
        let conv = |lb: &mut LayoutBuilder, c_in: usize, c_out: usize, k: usize| ConvSeg {
            w: lb.alloc(c_out * c_in * k * k),
            b: lb.alloc(c_out),
            c_in,
            c_out,
            k,
        };
        let mut enc = Vec::new();
        let mut c = cfg.channels();
        for &co in &cfg.enc_channels {
            enc.push(conv(&mut lb, c, co, 3));
            c = co;
        }
        let flat = cfg.flat_dim();
        let enc_fc = DenseSeg {
            w: lb.alloc(flat * cfg.code_dim),
            b: lb.alloc(cfg.code_dim),
            d_in: flat,
            d_out: cfg.code_dim,
        };
        let dec_fc = DenseSeg {
            w: lb.alloc(cfg.code_dim * flat),
            b: lb.alloc(flat),
            d_in: cfg.code_dim,
            d_out: flat,
        };
        let mut dec = Vec::new();
        for &co in &cfg.dec_channels {
            dec.push(conv(&mut lb, c, co, 3));
            c = co;
        }
        let out = conv(&mut lb, c, cfg.channels(), 1);
        Self {
            enc,
            enc_fc,
            dec_fc,
            dec,
            out,
            len: lb.len(),
        }
    }
}

/// Saved activations of a training forward pass.
pub struct CodecTape {
    batch: usize,
    enc_in_shapes: Vec<(usize, usize, usize, usize)>,
    enc_cols: Vec<Array2<f32>>,
    enc_act: Vec<Array4<f32>>,
    flat: Array2<f32>,
    code: Array2<f32>,
    dec0: Array2<f32>,
    dec_in_shapes: Vec<(usize, usize, usize, usize)>,
    dec_cols: Vec<Array2<f32>>,
    dec_act: Vec<Array4<f32>>,
    out_in_shape: (usize, usize, usize, usize),
    out_cols: Array2<f32>,
    /// Output probabilities `(C, B, H, W)`.
    pub probs: Array4<f32>,
}

/// A mask or sketch autoencoder.
#[derive(Debug, Clone)]
pub struct Codec {
    config: CodecConfig,
    layout: Layout,
    params: Vec<f32>,
    trained: bool,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: CodecConfig,
    activation: String,
    trained: bool,
    param_count: usize,
    dtype: String,
}

impl Codec {
    /// Fresh, untrained codec with seeded fan-in scaled weights.
    pub fn new(config: CodecConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0f32; layout.len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |seg: Segment, fan_in: usize, params: &mut [f32]| {
            let mut tmp = vec![0.0f64; seg.len];
            nn::kaiming_normal(&mut rng, &mut tmp, fan_in);
            for (p, t) in params[seg.range()].iter_mut().zip(tmp) {
                *p = t as f32;
            }
        };
        for c in layout.enc.iter().chain(&layout.dec).chain(std::iter::once(&layout.out)) {
            init(c.w, c.c_in * c.k * c.k, &mut params);
        }
        init(layout.enc_fc.w, layout.enc_fc.d_in, &mut params);
        init(layout.dec_fc.w, layout.dec_fc.d_in, &mut params);
        Ok(Self {
            config,
            layout,
            params,
            trained: false,
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn modality(&self) -> Modality {
        self.config.modality
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_shape(&self, shape: (usize, usize)) -> Result<()> {
        let expected = (self.config.height, self.config.width);
        if shape != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: shape,
            });
        }
        Ok(())
    }

    fn ensure_trained(&self) -> Result<()> {
        if self.trained {
            Ok(())
        } else {
            Err(Error::Untrained)
        }
    }

    /// Stacks masks into a one-hot `(C, B, H, W)` batch.
    pub fn mask_batch(&self, masks: &[&MaskImage]) -> Result<Array4<f32>> {
        if self.config.modality != Modality::Mask {
            return Err(Error::ModalityMismatch {
                expected: self.config.modality.as_str(),
                actual: "mask",
            });
        }
        let (h, w) = (self.config.height, self.config.width);
        let c = self.config.num_classes;
        let mut x = Array4::<f32>::zeros((c, masks.len(), h, w));
        for (b, m) in masks.iter().enumerate() {
            self.check_shape(m.shape())?;
            if m.num_classes() != c {
                return Err(Error::Config(format!(
                    "mask has {} classes, codec expects {c}",
                    m.num_classes()
                )));
            }
            for (i, &l) in m.labels().iter().enumerate() {
                x[[l as usize, b, i / w, i % w]] = 1.0;
            }
        }
        Ok(x)
    }

    pub fn sketch_batch(&self, sketches: &[&SketchImage]) -> Result<Array4<f32>> {
        if self.config.modality != Modality::Sketch {
            return Err(Error::ModalityMismatch {
                expected: self.config.modality.as_str(),
                actual: "sketch",
            });
        }
        let (h, w) = (self.config.height, self.config.width);
        let mut x = Array4::<f32>::zeros((1, sketches.len(), h, w));
        for (b, s) in sketches.iter().enumerate() {
            self.check_shape(s.shape())?;
            for (i, &p) in s.pixels().iter().enumerate() {
                x[[0, b, i / w, i % w]] = p as f32;
            }
        }
        Ok(x)
    }

    fn seg(&self, s: Segment) -> &[f32] {
        &self.params[s.range()]
    }

    fn dense(&self, d: &DenseSeg, x: &Array2<f32>) -> Array2<f32> {
        let w = ArrayView2::from_shape((d.d_in, d.d_out), self.seg(d.w)).expect("dense shape");
        let b = ArrayView1::from(self.seg(d.b));
        let mut y = x.dot(&w);
        y += &b;
        y
    }

    fn encode_array(&self, x: &Array4<f32>) -> Array2<f32> {
        let mut a = x.clone();
        for c in &self.layout.enc {
            let (mut y, _) = conv::conv_forward(&a, self.seg(c.w), self.seg(c.b), c.c_out, c.k);
            conv::leaky_relu(&mut y);
            a = conv::avg_pool2(&y);
        }
        let flat = flatten(&a);
        self.dense(&self.layout.enc_fc, &flat)
    }

    fn decode_array(&self, code: &Array2<f32>) -> Array4<f32> {
        let mut d = self.dense(&self.layout.dec_fc, code);
        d.mapv_inplace(leaky);
        let mut a = unflatten(&d, self.config.bottleneck());
        for c in &self.layout.dec {
            let u = conv::upsample2(&a);
            let (mut y, _) = conv::conv_forward(&u, self.seg(c.w), self.seg(c.b), c.c_out, c.k);
            conv::leaky_relu(&mut y);
            a = y;
        }
        let o = &self.layout.out;
        let (logits, _) = conv::conv_forward(&a, self.seg(o.w), self.seg(o.b), o.c_out, o.k);
        self.activate(logits)
    }

    fn activate(&self, mut logits: Array4<f32>) -> Array4<f32> {
        match self.config.modality {
            Modality::Mask => {
                softmax_channels(&mut logits);
                logits
            }
            _ => {
                logits.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp()));
                logits
            }
        }
    }

    fn to_codes(&self, codes: Array2<f32>) -> Result<Vec<SpatialCode>> {
        codes
            .axis_iter(Axis(0))
            .map(|row| SpatialCode::new(row.iter().map(|&v| v as f64).collect(), self.config.modality))
            .collect()
    }

    pub fn encode_masks(&self, masks: &[&MaskImage]) -> Result<Vec<SpatialCode>> {
        self.ensure_trained()?;
        let x = self.mask_batch(masks)?;
        self.to_codes(self.encode_array(&x))
    }

    pub fn encode_mask(&self, mask: &MaskImage) -> Result<SpatialCode> {
        Ok(self.encode_masks(&[mask])?.remove(0))
    }

    pub fn encode_sketches(&self, sketches: &[&SketchImage]) -> Result<Vec<SpatialCode>> {
        self.ensure_trained()?;
        let x = self.sketch_batch(sketches)?;
        self.to_codes(self.encode_array(&x))
    }

    pub fn encode_sketch(&self, sketch: &SketchImage) -> Result<SpatialCode> {
        Ok(self.encode_sketches(&[sketch])?.remove(0))
    }

    fn code_batch(&self, codes: &[&SpatialCode]) -> Result<Array2<f32>> {
        let d = self.config.code_dim;
        let mut x = Array2::<f32>::zeros((codes.len(), d));
        for (i, c) in codes.iter().enumerate() {
            c.expect_modality(self.config.modality)?;
            crate::error::ensure_dim(d, c.dim(), "codec code")?;
            for (j, &v) in c.values().iter().enumerate() {
                x[[i, j]] = v as f32;
            }
        }
        Ok(x)
    }

    pub fn decode_mask(&self, code: &SpatialCode) -> Result<MaskProbabilities> {
        self.ensure_trained()?;
        let x = self.code_batch(&[code])?;
        let probs = self.decode_array(&x);
        Ok(mask_probs_at(&probs, 0))
    }

    pub fn decode_sketch(&self, code: &SpatialCode) -> Result<SketchProbabilities> {
        self.ensure_trained()?;
        let x = self.code_batch(&[code])?;
        let probs = self.decode_array(&x);
        Ok(sketch_probs_at(&probs, 0))
    }

    /// Encode then decode a prepared batch without the trained-flag check.
    pub fn reconstruct(&self, x: &Array4<f32>) -> Array4<f32> {
        self.decode_array(&self.encode_array(x))
    }

    /// Training-mode forward pass that keeps what the backward pass needs.
    pub fn forward_train(&self, x: &Array4<f32>) -> CodecTape {
        let batch = x.dim().1;
        let mut enc_in_shapes = Vec::new();
        let mut enc_cols = Vec::new();
        let mut enc_act = Vec::new();
        let mut a = x.clone();
        for c in &self.layout.enc {
            enc_in_shapes.push(a.dim());
            let (mut y, cols) = conv::conv_forward(&a, self.seg(c.w), self.seg(c.b), c.c_out, c.k);
            conv::leaky_relu(&mut y);
            a = conv::avg_pool2(&y);
            enc_cols.push(cols);
            enc_act.push(y);
        }
        let flat = flatten(&a);
        let code = self.dense(&self.layout.enc_fc, &flat);
        let mut dec0 = self.dense(&self.layout.dec_fc, &code);
        dec0.mapv_inplace(leaky);
        let mut a = unflatten(&dec0, self.config.bottleneck());
        let mut dec_in_shapes = Vec::new();
        let mut dec_cols = Vec::new();
        let mut dec_act = Vec::new();
        for c in &self.layout.dec {
            let u = conv::upsample2(&a);
            dec_in_shapes.push(u.dim());
            let (mut y, cols) = conv::conv_forward(&u, self.seg(c.w), self.seg(c.b), c.c_out, c.k);
            conv::leaky_relu(&mut y);
            dec_cols.push(cols);
            dec_act.push(y.clone());
            a = y;
        }
        let o = &self.layout.out;
        let out_in_shape = a.dim();
        let (logits, out_cols) = conv::conv_forward(&a, self.seg(o.w), self.seg(o.b), o.c_out, o.k);
        let probs = self.activate(logits);
        CodecTape {
            batch,
            enc_in_shapes,
            enc_cols,
            enc_act,
            flat,
            code,
            dec0,
            dec_in_shapes,
            dec_cols,
            dec_act,
            out_in_shape,
            out_cols,
            probs,
        }
    }

    /// Reconstruction loss of a tape against its input batch together with the
    /// gradient w.r.t. the output logits.
    pub fn loss_and_logit_grad(&self, tape: &CodecTape, target: &Array4<f32>) -> (f64, Array4<f32>) {
        let b = tape.batch as f64;
        match self.config.modality {
            Modality::Mask => {
                let (c, bb, h, w) = tape.probs.dim();
                let mut loss = 0.0f64;
                let mut g = Array4::<f32>::zeros((c, bb, h, w));
                let p = tape.probs.as_slice().unwrap();
                let t = target.as_slice().unwrap();
                let gs = g.as_slice_mut().unwrap();
                let plane = bb * h * w;
                let scale = (2.0 / b) as f32;
                for i in 0..plane {
                    let mut dot = 0.0f32;
                    for ch in 0..c {
                        let d = p[ch * plane + i] - t[ch * plane + i];
                        loss += (d as f64) * (d as f64);
                        gs[ch * plane + i] = scale * d;
                        dot += p[ch * plane + i] * gs[ch * plane + i];
                    }
                    for ch in 0..c {
                        let k = ch * plane + i;
                        gs[k] = p[k] * (gs[k] - dot);
                    }
                }
                (loss / b, g)
            }
            _ => {
                let mut loss = 0.0f64;
                let mut g = tape.probs.clone();
                for (gv, (&p, &t)) in g.iter_mut().zip(tape.probs.iter().zip(target.iter())) {
                    loss += super::loss::bce_term(t as f64, p as f64);
                    *gv = (p - t) / b as f32;
                }
                (loss / b, g)
            }
        }
    }

    /// Parameter gradients given the logit gradient.
    pub fn backward(&self, tape: &CodecTape, dlogits: &Array4<f32>) -> Vec<f32> {
        let mut grads = vec![0.0f32; self.params.len()];
        let l = &self.layout;
        let (gw, gb) = split_two(&mut grads, l.out.w, l.out.b);
        let mut da = conv::conv_backward(
            &tape.out_cols,
            tape.out_in_shape,
            &self.params[l.out.w.range()],
            dlogits,
            gw,
            gb,
            l.out.k,
            true,
        )
        .expect("dx");
        for (j, c) in l.dec.iter().enumerate().rev() {
            conv::leaky_relu_backward(&tape.dec_act[j], &mut da);
            let (gw, gb) = split_two(&mut grads, c.w, c.b);
            let du = conv::conv_backward(
                &tape.dec_cols[j],
                tape.dec_in_shapes[j],
                &self.params[c.w.range()],
                &da,
                gw,
                gb,
                c.k,
                true,
            )
            .expect("dx");
            da = conv::upsample2_backward(&du);
        }
        let mut dd0 = flatten(&da);
        ndarray::Zip::from(&mut dd0).and(&tape.dec0).for_each(|g, &o| {
            if o <= 0.0 {
                *g *= nn::LEAKY_SLOPE as f32;
            }
        });
        let dcode = self.dense_backward(&l.dec_fc, &tape.code, &dd0, &mut grads);
        let dflat = self.dense_backward(&l.enc_fc, &tape.flat, &dcode, &mut grads);
        let mut da = unflatten(&dflat, self.config.bottleneck());
        for (i, c) in l.enc.iter().enumerate().rev() {
            let mut dy = conv::avg_pool2_backward(&da);
            conv::leaky_relu_backward(&tape.enc_act[i], &mut dy);
            let (gw, gb) = split_two(&mut grads, c.w, c.b);
            match conv::conv_backward(
                &tape.enc_cols[i],
                tape.enc_in_shapes[i],
                &self.params[c.w.range()],
                &dy,
                gw,
                gb,
                c.k,
                i > 0,
            ) {
                Some(dx) => da = dx,
                None => break,
            }
        }
        grads
    }

    fn dense_backward(&self, d: &DenseSeg, x: &Array2<f32>, dy: &Array2<f32>, grads: &mut [f32]) -> Array2<f32> {
        let dw = x.t().dot(dy);
        for (g, v) in grads[d.w.range()].iter_mut().zip(dw.iter()) {
            *g += v;
        }
        for (g, v) in grads[d.b.range()].iter_mut().zip(dy.sum_axis(Axis(0)).iter()) {
            *g += v;
        }
        let w = ArrayView2::from_shape((d.d_in, d.d_out), self.seg(d.w)).expect("dense shape");
        dy.dot(&w.t())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }

    /// Versioned binary: magic, version, JSON architecture header, `f32` LE params.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = CheckpointHeader {
            config: self.config.clone(),
            activation: nn::ACTIVATION_NAME.to_string(),
            trained: self.trained,
            param_count: self.params.len(),
            dtype: "f32le".into(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a codec checkpoint".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported codec checkpoint version {version}")));
        }
        r.read_exact(&mut word)?;
        let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut json)?;
        let header: CheckpointHeader = serde_json::from_slice(&json)?;
        if header.activation != nn::ACTIVATION_NAME || header.dtype != "f32le" {
            return Err(Error::Format(format!(
                "checkpoint uses {} / {}, this build expects {} / f32le",
                header.activation,
                header.dtype,
                nn::ACTIVATION_NAME
            )));
        }
        let mut codec = Self::new(header.config, 0)?;
        if codec.params.len() != header.param_count {
            return Err(Error::Format(format!(
                "parameter count {} does not match architecture ({})",
                header.param_count,
                codec.params.len()
            )));
        }
        let mut bytes = vec![0u8; header.param_count * 4];
        r.read_exact(&mut bytes)?;
        for (p, c) in codec.params.iter_mut().zip(bytes.chunks_exact(4)) {
            *p = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
        codec.trained = header.trained;
        Ok(codec)
    }
}

fn leaky(v: f32) -> f32 {
    if v > 0.0 {
        v
    } else {
        nn::LEAKY_SLOPE as f32 * v
    }
}

fn split_two(grads: &mut [f32], w: Segment, b: Segment) -> (&mut [f32], &mut [f32]) {
    debug_assert_eq!(w.offset + w.len, b.offset);
    let (head, tail) = grads[w.offset..b.offset + b.len].split_at_mut(w.len);
    (head, tail)
}

/// `(C, B, h, w)` → `(B, C·h·w)`.
fn flatten(a: &Array4<f32>) -> Array2<f32> {
    let (c, b, h, w) = a.dim();
    let p = a.view().permuted_axes([1, 0, 2, 3]);
    p.as_standard_layout()
        .into_owned()
        .into_shape_with_order((b, c * h * w))
        .expect("flatten")
}

fn unflatten(x: &Array2<f32>, (c, h, w): (usize, usize, usize)) -> Array4<f32> {
    let b = x.nrows();
    let a = x.view().into_shape_with_order((b, c, h, w)).expect("unflatten");
    a.permuted_axes([1, 0, 2, 3]).as_standard_layout().into_owned()
}

fn softmax_channels(x: &mut Array4<f32>) {
    let (c, b, h, w) = x.dim();
    let plane = b * h * w;
    let s = x.as_slice_mut().expect("standard layout");
    for i in 0..plane {
        let mut m = f32::NEG_INFINITY;
        for ch in 0..c {
            m = m.max(s[ch * plane + i]);
        }
        let mut z = 0.0;
        for ch in 0..c {
            let e = (s[ch * plane + i] - m).exp();
            s[ch * plane + i] = e;
            z += e;
        }
        for ch in 0..c {
            s[ch * plane + i] /= z;
        }
    }
}

/// Extracts sample `b` of a `(C, B, H, W)` probability batch.
pub fn mask_probs_at(probs: &Array4<f32>, b: usize) -> MaskProbabilities {
    let (c, _, h, w) = probs.dim();
    let mut out = vec![0.0f32; h * w * c];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[(y * w + x) * c + ch] = probs[[ch, b, y, x]];
            }
        }
    }
    MaskProbabilities::new(h, w, c, out).expect("consistent shape")
}

pub fn sketch_probs_at(probs: &Array4<f32>, b: usize) -> SketchProbabilities {
    let (_, _, h, w) = probs.dim();
    let out = probs
        .index_axis(Axis(0), 0)
        .index_axis(Axis(0), b)
        .iter()
        .copied()
        .collect();
    SketchProbabilities::new(h, w, out).expect("consistent shape")
}

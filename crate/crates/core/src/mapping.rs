//! The MLP that fuses a conditioning embedding with a spatial code and
//! predicts a generator latent.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::editor::{DirectionSource, EditDirection};
use crate::embedding::EmbeddingVector;
use crate::error::{ensure_dim, Error, Result};
use crate::generator::LatentCode;
use crate::nn::dense::{self, BatchNormCache};
use crate::nn::{self, LayoutBuilder, Segment};
use crate::spatial::SpatialCode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperConfig {
    /// Number of fully connected layers, counting the output layer.
    pub num_layers: usize,
    pub use_bn: bool,
    pub use_dropout: bool,
    pub dropout_rate: f64,
    pub hidden_dim: usize,
    pub emb_dim: usize,
    pub spatial_dim: usize,
    pub out_dim: usize,
    /// Use running statistics for batch norm at inference (otherwise the
    /// statistics of the inference batch itself).
    #[serde(default = "default_true")]
    pub bn_running_stats: bool,
}

fn default_true() -> bool {
    true
}

impl MapperConfig {
    pub fn desk(emb_dim: usize, spatial_dim: usize, out_dim: usize) -> Self {
        Self {
            num_layers: 12,
            use_bn: false,
            use_dropout: false,
            dropout_rate: 0.1,
            hidden_dim: 128,
            emb_dim,
            spatial_dim,
            out_dim,
            bn_running_stats: true,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.emb_dim + self.spatial_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::Config("num_layers must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.hidden_dim == 0 || self.emb_dim == 0 || self.spatial_dim == 0 || self.out_dim == 0 {
            return Err(Error::Config("mapper dimensions must be positive".into()));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        (0..self.num_layers)
            .map(|i| {
                let d_in = if i == 0 { self.in_dim() } else { self.hidden_dim };
                let d_out = if i + 1 == self.num_layers {
                    self.out_dim
                } else {
                    self.hidden_dim
                };
                (d_in, d_out)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Batch statistics and (seeded) dropout.
    Train {
        seed: u64,
    },
}

#[derive(Debug, Clone)]
struct LayerSeg {
    w: Segment,
    b: Segment,
    /// `(gamma, beta)` for hidden layers when batch norm is on.
    bn: Option<(Segment, Segment)>,
    d_in: usize,
    d_out: usize,
}

#[derive(Debug, Clone)]
pub struct Mapper {
    config: MapperConfig,
    layers: Vec<LayerSeg>,
    params: Vec<f64>,
    running_mean: Vec<Vec<f64>>,
    running_var: Vec<Vec<f64>>,
}

struct LayerTape {
    input: Array2<f64>,
    bn: Option<BatchNormCache>,
    /// Pre-activation (after batch norm).
    pre: Array2<f64>,
    dropout: Option<Array2<f64>>,
}

/// Saved activations of a training forward pass.
pub struct MapperTape {
    layers: Vec<LayerTape>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: MapperConfig,
    activation: String,
    param_count: usize,
    dtype: String,
}

const MAGIC: &[u8; 4] = b"FFMP";
const VERSION: u32 = 1;

impl Mapper {
    pub fn new(config: MapperConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut lb = LayoutBuilder::default();
        let n = config.num_layers;
        let layers: Vec<LayerSeg> = config
            .layer_dims()
            .into_iter()
            .enumerate()
            .map(|(i, (d_in, d_out))| LayerSeg {
                w: lb.alloc(d_in * d_out),
                b: lb.alloc(d_out),
                bn: (config.use_bn && i + 1 < n).then(|| (lb.alloc(d_out), lb.alloc(d_out))),
                d_in,
                d_out,
            })
            .collect();
        let mut params = vec![0.0; lb.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &layers {
            nn::kaiming_normal(&mut rng, &mut params[l.w.range()], l.d_in);
            if let Some((g, _)) = l.bn {
                params[g.range()].fill(1.0);
            }
        }
        let running_mean = layers.iter().map(|l| vec![0.0; l.d_out]).collect();
        let running_var = layers.iter().map(|l| vec![1.0; l.d_out]).collect();
        Ok(Self {
            config,
            layers,
            params,
            running_mean,
            running_var,
        })
    }

    pub fn config(&self) -> &MapperConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// SHA-256 over config, parameters and running statistics.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config).expect("config serializes"));
        for v in self
            .params
            .iter()
            .chain(self.running_mean.iter().flatten())
            .chain(self.running_var.iter().flatten())
        {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn w(&self, l: &LayerSeg) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((l.d_in, l.d_out), &self.params[l.w.range()]).expect("weight shape")
    }

    fn v(&self, s: Segment) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[s.range()])
    }

    /// Concatenates `[f_cond ‖ f_spatial]` into one input row.
    pub fn input_row(&self, f_cond: &EmbeddingVector, f_spatial: &SpatialCode) -> Result<Vec<f64>> {
        ensure_dim(self.config.emb_dim, f_cond.dim(), "mapper conditioning embedding")?;
        ensure_dim(self.config.spatial_dim, f_spatial.dim(), "mapper spatial code")?;
        let mut row = Vec::with_capacity(self.config.in_dim());
        row.extend_from_slice(f_cond.values());
        row.extend_from_slice(f_spatial.values());
        Ok(row)
    }

    /// Single-sample mapping.
    pub fn map(&self, f_cond: &EmbeddingVector, f_spatial: &SpatialCode, mode: Mode) -> Result<LatentCode> {
        let row = self.input_row(f_cond, f_spatial)?;
        let x = Array2::from_shape_vec((1, row.len()), row).expect("row shape");
        let y = self.forward(&x, mode)?;
        LatentCode::new(y.row(0).to_vec())
    }

    /// Batched forward pass.
    pub fn forward(&self, x: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        ensure_dim(self.config.in_dim(), x.ncols(), "mapper input")?;
        if x.nrows() == 0 {
            return Err(Error::EmptyBatch);
        }
        match mode {
            Mode::Train { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok(self.forward_train(x, &mut rng)?.0)
            }
            Mode::Eval => {
                let batch_stats = self.config.use_bn && !self.config.bn_running_stats;
                if batch_stats && x.nrows() < 2 {
                    return Err(Error::Config(
                        "batch-statistics inference needs at least 2 samples".into(),
                    ));
                }
                let mut a = x.to_owned();
                let last = self.layers.len() - 1;
                for (i, l) in self.layers.iter().enumerate() {
                    let mut z = dense::linear_forward(a.view(), self.w(l), self.v(l.b));
                    if i == last {
                        a = z;
                        break;
                    }
                    if let Some((g, b)) = l.bn {
                        z = if batch_stats {
                            dense::batch_norm_train(&z, self.v(g), self.v(b)).0
                        } else {
                            dense::batch_norm_eval(
                                &z,
                                self.v(g),
                                self.v(b),
                                ArrayView1::from(&self.running_mean[i]),
                                ArrayView1::from(&self.running_var[i]),
                            )
                        };
                    }
                    a = dense::leaky_relu(&z);
                }
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("mapper output"));
                }
                Ok(a)
            }
        }
    }

    /// Training-mode forward that records what the backward pass needs.
    pub fn forward_train<R: Rng + ?Sized>(&self, x: &Array2<f64>, rng: &mut R) -> Result<(Array2<f64>, MapperTape)> {
        ensure_dim(self.config.in_dim(), x.ncols(), "mapper input")?;
        if self.config.use_bn && x.nrows() < 2 {
            return Err(Error::Config(
                "batch norm in training mode needs a batch of at least 2".into(),
            ));
        }
        let mut tapes = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        let keep = 1.0 - self.config.dropout_rate;
        for (i, l) in self.layers.iter().enumerate() {
            let z = dense::linear_forward(a.view(), self.w(l), self.v(l.b));
            if i == last {
                tapes.push(LayerTape {
                    input: a,
                    bn: None,
                    pre: Array2::zeros((0, 0)),
                    dropout: None,
                });
                a = z;
                break;
            }
            let (pre, bn) = match l.bn {
                Some((g, b)) => {
                    let (y, c) = dense::batch_norm_train(&z, self.v(g), self.v(b));
                    (y, Some(c))
                }
                None => (z, None),
            };
            let mut out = dense::leaky_relu(&pre);
            let dropout = if self.config.use_dropout && self.config.dropout_rate > 0.0 {
                let m = Array2::from_shape_fn(out.dim(), |_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
                out *= &m;
                Some(m)
            } else {
                None
            };
            tapes.push(LayerTape {
                input: a,
                bn,
                pre,
                dropout,
            });
            a = out;
        }
        Ok((a, MapperTape { layers: tapes }))
    }

    /// Parameter gradients given `dL/d output`.
    pub fn backward(&self, tape: &MapperTape, dout: &Array2<f64>) -> Vec<f64> {
        let mut grads = vec![0.0; self.params.len()];
        let mut dy = dout.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate().rev() {
            let t = &tape.layers[i];
            if i != last {
                if let Some(m) = &t.dropout {
                    dy *= m;
                }
                dy = dense::leaky_relu_backward(&t.pre, &dy);
                if let (Some((g, b)), Some(cache)) = (l.bn, &t.bn) {
                    let (gg, gb) = split_pair(&mut grads, g, b);
                    dy = dense::batch_norm_backward(&dy, cache, self.v(g), gg, gb);
                }
            }
            let (gw, gb) = split_pair(&mut grads, l.w, l.b);
            dy = dense::linear_backward(t.input.view(), self.w(l), dy.view(), gw, gb);
        }
        grads
    }

    /// Folds the batch statistics of a training pass into the running averages.
    pub fn update_running_stats(&mut self, tape: &MapperTape, batch: usize) {
        for (i, t) in tape.layers.iter().enumerate() {
            if let Some(c) = &t.bn {
                dense::update_running_stats(c, batch, &mut self.running_mean[i], &mut self.running_var[i]);
            }
        }
    }

    /// `map(f_tar, s) − map(f_piv, s)` in eval mode.
    pub fn edit_direction_text(
        &self,
        f_tar: &EmbeddingVector,
        f_piv: &EmbeddingVector,
        f_spatial: &SpatialCode,
    ) -> Result<EditDirection> {
        let x = self.stack(&[self.input_row(f_tar, f_spatial)?, self.input_row(f_piv, f_spatial)?]);
        let y = self.forward(&x, Mode::Eval)?;
        let values = (&y.row(0) - &y.row(1)).to_vec();
        EditDirection::new(values, DirectionSource::Text, "pivot", "target")
    }

    /// `map(f_img, s_tar) − map(f_img, s_piv)` in eval mode.
    pub fn edit_direction_spatial(
        &self,
        f_img: &EmbeddingVector,
        s_tar: &SpatialCode,
        s_piv: &SpatialCode,
    ) -> Result<EditDirection> {
        let x = self.stack(&[self.input_row(f_img, s_tar)?, self.input_row(f_img, s_piv)?]);
        let y = self.forward(&x, Mode::Eval)?;
        let values = (&y.row(0) - &y.row(1)).to_vec();
        EditDirection::new(values, DirectionSource::Spatial, "pivot", "target")
    }

    fn stack(&self, rows: &[Vec<f64>]) -> Array2<f64> {
        let flat: Vec<f64> = rows.concat();
        Array2::from_shape_vec((rows.len(), self.config.in_dim()), flat).expect("stacked rows")
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

    /// `FFMP`, version, JSON header length + header, then parameters and
    /// running statistics as little-endian `f64`.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = serde_json::to_vec(&CheckpointHeader {
            config: self.config.clone(),
            activation: nn::ACTIVATION_NAME.to_string(),
            param_count: self.params.len(),
            dtype: "f64le".into(),
        })?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for v in self
            .params
            .iter()
            .chain(self.running_mean.iter().flatten())
            .chain(self.running_var.iter().flatten())
        {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut head = [0u8; 12];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(Error::Format("not a mapper checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported mapper checkpoint version {version}"
            )));
        }
        let hlen = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
        let mut hbytes = vec![0u8; hlen];
        r.read_exact(&mut hbytes)?;
        let header: CheckpointHeader = serde_json::from_slice(&hbytes)?;
        if header.activation != nn::ACTIVATION_NAME {
            return Err(Error::Format(format!(
                "checkpoint activation `{}` is not supported",
                header.activation
            )));
        }
        let mut m = Self::new(header.config, 0)?;
        if header.param_count != m.params.len() {
            return Err(Error::Format(format!(
                "checkpoint declares {} parameters, architecture has {}",
                header.param_count,
                m.params.len()
            )));
        }
        let mut read = |dst: &mut [f64]| -> Result<()> {
            let mut buf = vec![0u8; dst.len() * 8];
            r.read_exact(&mut buf)?;
            for (d, c) in dst.iter_mut().zip(buf.chunks_exact(8)) {
                *d = f64::from_le_bytes(c.try_into().expect("8 bytes"));
            }
            Ok(())
        };
        read(&mut m.params)?;
        for v in m.running_mean.iter_mut() {
            read(v)?;
        }
        for v in m.running_var.iter_mut() {
            read(v)?;
        }
        Ok(m)
    }
}

fn split_pair(grads: &mut [f64], a: Segment, b: Segment) -> (&mut [f64], &mut [f64]) {
    debug_assert_eq!(a.offset + a.len, b.offset);
    grads[a.offset..b.offset + b.len].split_at_mut(a.len)
}

/// Rows of a batch as an input matrix.
pub fn batch_matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let d = rows.first().map(Vec::len).ok_or(Error::EmptyBatch)?;
    let flat: Vec<f64> = rows.concat();
    Array2::from_shape_vec((rows.len(), d), flat).map_err(|_| Error::Config("ragged input rows".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::Modality;

    fn small(use_bn: bool, use_dropout: bool) -> Mapper {
        let mut cfg = MapperConfig::desk(4, 3, 5);
        cfg.num_layers = 3;
        cfg.hidden_dim = 6;
        cfg.use_bn = use_bn;
        cfg.use_dropout = use_dropout;
        Mapper::new(cfg, 1).unwrap()
    }

    fn inputs() -> (EmbeddingVector, SpatialCode) {
        (
            EmbeddingVector::unit(vec![0.1, 0.5, -0.3, 0.2]).unwrap(),
            SpatialCode::new(vec![0.4, -1.0, 0.3], Modality::Mask).unwrap(),
        )
    }

    #[test]
    fn eval_is_pure_and_shaped() {
        let m = small(true, true);
        let (f, s) = inputs();
        let a = m.map(&f, &s, Mode::Eval).unwrap();
        assert_eq!(a, m.map(&f, &s, Mode::Eval).unwrap());
        assert_eq!(a.dim(), 5);
        assert!(a.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn desk_shapes() {
        let m = Mapper::new(MapperConfig::desk(64, 64, 64), 0).unwrap();
        let f = EmbeddingVector::unit(vec![1.0; 64]).unwrap();
        let s = SpatialCode::new(vec![0.5; 64], Modality::Mask).unwrap();
        assert_eq!(m.map(&f, &s, Mode::Eval).unwrap().dim(), 64);
        let bad = SpatialCode::new(vec![0.5; 63], Modality::Mask).unwrap();
        assert!(matches!(
            m.map(&f, &bad, Mode::Eval),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn train_mode_dropout_is_seeded() {
        let m = small(false, true);
        let (f, s) = inputs();
        let a = m.map(&f, &s, Mode::Train { seed: 3 }).unwrap();
        assert_eq!(a, m.map(&f, &s, Mode::Train { seed: 3 }).unwrap());
    }

    #[test]
    fn batch_norm_train_mode_rejects_single_sample() {
        let m = small(true, false);
        let (f, s) = inputs();
        assert!(m.map(&f, &s, Mode::Train { seed: 0 }).is_err());
        assert!(m.map(&f, &s, Mode::Eval).is_ok());
    }

    #[test]
    fn directions_are_antisymmetric_and_zero_at_identity() {
        let m = small(false, false);
        let (f, s) = inputs();
        let g = EmbeddingVector::unit(vec![-0.2, 0.1, 0.9, 0.0]).unwrap();
        assert!(m
            .edit_direction_text(&f, &f, &s)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
        let d1 = m.edit_direction_text(&f, &g, &s).unwrap();
        let d2 = m.edit_direction_text(&g, &f, &s).unwrap();
        for (a, b) in d1.values().iter().zip(d2.values()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn gradients_match_finite_differences_with_bn_and_dropout() {
        let m = small(true, true);
        let x = Array2::from_shape_fn((4, 7), |(i, j)| ((i * 7 + j) as f64 * 0.37).sin());
        let target = Array2::from_shape_fn((4, 5), |(i, j)| ((i + 2 * j) as f64 * 0.21).cos());
        // Loss = ½‖y − t‖²; dropout masks are held fixed by reusing the seed.
        let loss = |mm: &Mapper| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let (y, _) = mm.forward_train(&x, &mut rng).unwrap();
            0.5 * (&y - &target).mapv(|v| v * v).sum()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (y, tape) = m.forward_train(&x, &mut rng).unwrap();
        let grads = m.backward(&tape, &(&y - &target));
        for idx in (0..m.num_params()).step_by(7) {
            let h = 1e-6;
            let mut p = m.clone();
            p.params[idx] += h;
            let mut q = m.clone();
            q.params[idx] -= h;
            let num = (loss(&p) - loss(&q)) / (2.0 * h);
            let err = (num - grads[idx]).abs() / num.abs().max(grads[idx].abs()).max(1e-8);
            assert!(
                err < 1e-4 || (num - grads[idx]).abs() < 1e-7,
                "param {idx}: {num} vs {}",
                grads[idx]
            );
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = small(true, false);
        let x = Array2::from_shape_fn((4, 7), |(i, j)| (i + j) as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, tape) = m.forward_train(&x, &mut rng).unwrap();
        m.update_running_stats(&tape, 4);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = Mapper::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.digest(), m.digest());
        assert_eq!(back.config(), m.config());
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = MapperConfig::desk(4, 4, 4);
        cfg.num_layers = 0;
        assert!(Mapper::new(cfg.clone(), 0).is_err());
        cfg.num_layers = 2;
        cfg.dropout_rate = 1.0;
        assert!(Mapper::new(cfg, 0).is_err());
    }
}

//! Window encoders mapping a short sequence of feature vectors to one output
//! vector: a single-block self-attention encoder and a flattened-window MLP
//! that share the [`SequenceEncoder`] interface.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{elu, elu_grad, Linear, Mlp, MlpCache, Module, ParamView};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeqEncoderConfig {
    pub input_dim: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub window: usize,
    pub output_dim: usize,
}

impl SeqEncoderConfig {
    pub fn new(input_dim: usize, window: usize, output_dim: usize) -> Self {
        SeqEncoderConfig { input_dim, model_dim: 64, heads: 2, ff_dim: 64, window, output_dim }
    }
}

/// Common interface for window encoders.
///
/// Batches are passed as `(batch * seq_len, input_dim)` row blocks; every
/// window in a batch has the same length.
pub trait SequenceEncoder: Module + Clone + Send + Sync {
    type Cache;

    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn max_len(&self) -> usize;
    fn forward(&self, x: ArrayView2<f64>, seq_len: usize) -> Result<(Array2<f64>, Self::Cache)>;
    fn backward(&self, cache: &Self::Cache, dy: ArrayView2<f64>, grads: &mut Self);

    /// Encodes a single window.
    fn encode(&self, window: ArrayView2<f64>) -> Result<Array1<f64>> {
        let n = window.nrows();
        let (y, _) = self.forward(window, n)?;
        Ok(y.index_axis_move(Axis(0), 0))
    }

    fn check_batch(&self, x: &ArrayView2<f64>, seq_len: usize) -> Result<usize> {
        if seq_len == 0 || x.nrows() == 0 {
            return Err(Error::InvalidInput("empty window".into()));
        }
        if seq_len > self.max_len() {
            return Err(Error::InvalidInput(format!(
                "window length {seq_len} exceeds maximum {}",
                self.max_len()
            )));
        }
        if x.ncols() != self.input_dim() {
            return Err(Error::dims("encoder token", self.input_dim(), x.ncols()));
        }
        if x.nrows() % seq_len != 0 {
            return Err(Error::InvalidInput(format!(
                "{} rows is not a multiple of window length {seq_len}",
                x.nrows()
            )));
        }
        Ok(x.nrows() / seq_len)
    }
}

/// Token projection, learned positions, one multi-head self-attention block
/// with a feed-forward sublayer, pooling (token mean concatenated with the
/// newest token) and an output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionEncoder {
    pub config: SeqEncoderConfig,
    pub proj: Linear,
    pub pos: Array2<f64>,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub ff1: Linear,
    pub ff2: Linear,
    pub out: Linear,
}

#[derive(Debug, Clone)]
pub struct AttentionEncoderCache {
    seq_len: usize,
    batch: usize,
    x: Array2<f64>,
    t_pre: Array2<f64>,
    h0: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// attention weights, one `(seq_len, seq_len)` block per (window, head)
    attn: Vec<Array2<f64>>,
    o: Array2<f64>,
    h1: Array2<f64>,
    f_pre: Array2<f64>,
    f: Array2<f64>,
    pooled: Array2<f64>,
}

impl AttentionEncoder {
    pub fn new<R: Rng + ?Sized>(config: SeqEncoderConfig, out_gain: f64, rng: &mut R) -> Result<Self> {
        if config.model_dim % config.heads != 0 {
            return Err(Error::InvalidInput(format!(
                "model dim {} not divisible by {} heads",
                config.model_dim, config.heads
            )));
        }
        let d = config.model_dim;
        let pos = Array2::from_shape_fn((config.window, d), |_| 0.02 * rng.sample::<f64, _>(StandardNormal));
        Ok(AttentionEncoder {
            config,
            proj: Linear::init("enc.proj", config.input_dim, d, 1.0, rng),
            pos,
            wq: Linear::init("enc.wq", d, d, 1.0, rng),
            wk: Linear::init("enc.wk", d, d, 1.0, rng),
            wv: Linear::init("enc.wv", d, d, 1.0, rng),
            wo: Linear::init("enc.wo", d, d, 1.0, rng),
            ff1: Linear::init("enc.ff1", d, config.ff_dim, 1.0, rng),
            ff2: Linear::init("enc.ff2", config.ff_dim, d, 1.0, rng),
            out: Linear::init("enc.out", 2 * d, config.output_dim, out_gain, rng),
        })
    }

    /// Attention weight matrices for one window (one per head), for
    /// inspection.
    pub fn attention_weights(&self, window: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        let n = window.nrows();
        let (_, cache) = self.forward(window, n)?;
        Ok(cache.attn)
    }

    fn head_dim(&self) -> usize {
        self.config.model_dim / self.config.heads
    }
}

fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

impl SequenceEncoder for AttentionEncoder {
    type Cache = AttentionEncoderCache;

    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    fn max_len(&self) -> usize {
        self.config.window
    }

    fn forward(&self, x: ArrayView2<f64>, seq_len: usize) -> Result<(Array2<f64>, AttentionEncoderCache)> {
        let batch = self.check_batch(&x, seq_len)?;
        let n = seq_len;
        let d = self.config.model_dim;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let t_pre = self.proj.forward(x)?;
        let mut h0 = t_pre.mapv(elu);
        let pos = self.pos.slice(s![self.config.window - n.., ..]);
        for b in 0..batch {
            let mut blk = h0.slice_mut(s![b * n..(b + 1) * n, ..]);
            blk += &pos;
        }
        let q = self.wq.forward(h0.view())?;
        let k = self.wk.forward(h0.view())?;
        let v = self.wv.forward(h0.view())?;
        let mut o = Array2::zeros((batch * n, d));
        let mut attn = Vec::with_capacity(batch * self.config.heads);
        for b in 0..batch {
            for h in 0..self.config.heads {
                let rows = b * n..(b + 1) * n;
                let cols = h * dh..(h + 1) * dh;
                let qh = q.slice(s![rows.clone(), cols.clone()]);
                let kh = k.slice(s![rows.clone(), cols.clone()]);
                let vh = v.slice(s![rows.clone(), cols.clone()]);
                let mut sc = qh.dot(&kh.t());
                sc.mapv_inplace(|z| z * scale);
                softmax_rows(&mut sc);
                o.slice_mut(s![rows, cols]).assign(&sc.dot(&vh));
                attn.push(sc);
            }
        }
        let mut h1 = self.wo.forward(o.view())?;
        h1 += &h0;
        let f_pre = self.ff1.forward(h1.view())?;
        let f = f_pre.mapv(elu);
        let mut h2 = self.ff2.forward(f.view())?;
        h2 += &h1;
        // pooled = [mean over tokens, newest token]
        let mut pooled = Array2::zeros((batch, 2 * d));
        for b in 0..batch {
            let m = h2.slice(s![b * n..(b + 1) * n, ..]).mean_axis(Axis(0)).expect("non-empty");
            pooled.slice_mut(s![b, ..d]).assign(&m);
            pooled.slice_mut(s![b, d..]).assign(&h2.row(b * n + n - 1));
        }
        let y = self.out.forward(pooled.view())?;
        if y.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("attention encoder output".into()));
        }
        Ok((
            y,
            AttentionEncoderCache {
                seq_len: n,
                batch,
                x: x.to_owned(),
                t_pre,
                h0,
                q,
                k,
                v,
                attn,
                o,
                h1,
                f_pre,
                f,
                pooled,
            },
        ))
    }

    fn backward(&self, c: &AttentionEncoderCache, dy: ArrayView2<f64>, g: &mut Self) {
        let n = c.seq_len;
        let d = self.config.model_dim;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let dpooled = self.out.backward(c.pooled.view(), dy, &mut g.out);
        let mut dh2 = Array2::zeros((c.batch * n, d));
        for b in 0..c.batch {
            let row = dpooled.slice(s![b, ..d]).mapv(|z| z / n as f64);
            for i in 0..n {
                dh2.row_mut(b * n + i).assign(&row);
            }
            let mut last = dh2.row_mut(b * n + n - 1);
            last += &dpooled.slice(s![b, d..]);
        }
        // feed-forward sublayer with residual
        let df = self.ff2.backward(c.f.view(), dh2.view(), &mut g.ff2);
        let df_pre = df * &c.f_pre.mapv(elu_grad);
        let mut dh1 = self.ff1.backward(c.h1.view(), df_pre.view(), &mut g.ff1);
        dh1 += &dh2;
        // attention sublayer with residual
        let d_o = self.wo.backward(c.o.view(), dh1.view(), &mut g.wo);
        let mut dq = Array2::zeros((c.batch * n, d));
        let mut dk = Array2::zeros((c.batch * n, d));
        let mut dv = Array2::zeros((c.batch * n, d));
        for b in 0..c.batch {
            for h in 0..self.config.heads {
                let a = &c.attn[b * self.config.heads + h];
                let rows = b * n..(b + 1) * n;
                let cols = h * dh..(h + 1) * dh;
                let qh = c.q.slice(s![rows.clone(), cols.clone()]);
                let kh = c.k.slice(s![rows.clone(), cols.clone()]);
                let vh = c.v.slice(s![rows.clone(), cols.clone()]);
                let doh = d_o.slice(s![rows.clone(), cols.clone()]);
                let da = doh.dot(&vh.t());
                dv.slice_mut(s![rows.clone(), cols.clone()]).assign(&a.t().dot(&doh));
                let mut ds = Array2::zeros((n, n));
                for i in 0..n {
                    let dot: f64 = (0..n).map(|j| da[[i, j]] * a[[i, j]]).sum();
                    for j in 0..n {
                        ds[[i, j]] = a[[i, j]] * (da[[i, j]] - dot) * scale;
                    }
                }
                dq.slice_mut(s![rows.clone(), cols.clone()]).assign(&ds.dot(&kh));
                dk.slice_mut(s![rows, cols]).assign(&ds.t().dot(&qh));
            }
        }
        let mut dh0 = dh1;
        dh0 += &self.wq.backward(c.h0.view(), dq.view(), &mut g.wq);
        dh0 += &self.wk.backward(c.h0.view(), dk.view(), &mut g.wk);
        dh0 += &self.wv.backward(c.h0.view(), dv.view(), &mut g.wv);
        let off = self.config.window - n;
        for b in 0..c.batch {
            let blk = dh0.slice(s![b * n..(b + 1) * n, ..]);
            let mut gp = g.pos.slice_mut(s![off.., ..]);
            gp += &blk;
        }
        let dt_pre = dh0 * &c.t_pre.mapv(elu_grad);
        self.proj.backward_params(c.x.view(), dt_pre.view(), &mut g.proj);
    }
}

impl Module for AttentionEncoder {
    fn params(&self) -> Vec<ParamView<'_>> {
        let mut v = self.proj.params();
        v.push(ParamView {
            name: "enc.pos".into(),
            shape: self.pos.shape().to_vec(),
            data: self.pos.as_slice().expect("contiguous"),
        });
        for l in [&self.wq, &self.wk, &self.wv, &self.wo, &self.ff1, &self.ff2, &self.out] {
            v.extend(l.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.proj.params_mut();
        v.push(self.pos.as_slice_mut().expect("contiguous"));
        for l in [
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ff1,
            &mut self.ff2,
            &mut self.out,
        ] {
            v.extend(l.params_mut());
        }
        v
    }
}

/// Cheaper ablation: the window is left-padded to full length with its first
/// token, flattened, and fed through a 3-layer MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatMlpEncoder {
    pub config: SeqEncoderConfig,
    pub mlp: Mlp,
}

pub struct EncoderCache {
    mlp: MlpCache,
}

impl FlatMlpEncoder {
    pub fn new<R: Rng + ?Sized>(config: SeqEncoderConfig, hidden: usize, out_gain: f64, rng: &mut R) -> Self {
        FlatMlpEncoder {
            config,
            mlp: Mlp::init(
                "flat",
                config.window * config.input_dim,
                (hidden, hidden),
                config.output_dim,
                out_gain,
                rng,
            ),
        }
    }
}

impl SequenceEncoder for FlatMlpEncoder {
    type Cache = EncoderCache;

    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    fn max_len(&self) -> usize {
        self.config.window
    }

    fn forward(&self, x: ArrayView2<f64>, seq_len: usize) -> Result<(Array2<f64>, EncoderCache)> {
        let batch = self.check_batch(&x, seq_len)?;
        let k = self.config.window;
        let din = self.config.input_dim;
        let mut flat = Array2::zeros((batch, k * din));
        for b in 0..batch {
            let win = x.slice(s![b * seq_len..(b + 1) * seq_len, ..]);
            let pad = k - seq_len;
            for slot in 0..k {
                let src = if slot < pad { 0 } else { slot - pad };
                flat.slice_mut(s![b, slot * din..(slot + 1) * din]).assign(&win.row(src));
            }
        }
        let (y, mlp) = self.mlp.forward(flat.view())?;
        Ok((y, EncoderCache { mlp }))
    }

    fn backward(&self, cache: &EncoderCache, dy: ArrayView2<f64>, g: &mut Self) {
        self.mlp.backward(&cache.mlp, dy, &mut g.mlp);
    }
}

impl Module for FlatMlpEncoder {
    fn params(&self) -> Vec<ParamView<'_>> {
        self.mlp.params()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.mlp.params_mut()
    }
}

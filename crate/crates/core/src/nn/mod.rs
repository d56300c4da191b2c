//! Minimal differentiable-network toolkit.
//!
//! Every model is a plain struct of `ndarray` tensors. Forward passes return
//! an explicit cache; backward passes take that cache plus the upstream
//! gradient and accumulate into a gradient struct of the same type as the
//! parameters. This covers exactly the ops the planner and estimator use.

mod adam;
mod checkpoint;
mod heads;
mod linear;
mod mlp;
mod seq;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, TensorRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use heads::{
    categorical_entropy, categorical_head, entropy_grad, gaussian_head, gaussian_log_prob, gaussian_log_prob_grad,
    log_softmax, log_softmax_grad, CategoricalSample, GaussianSample,
};
pub use linear::{elu, elu_grad, Linear};
pub use mlp::{Mlp, MlpCache};
pub use seq::{
    AttentionEncoder, AttentionEncoderCache, EncoderCache, FlatMlpEncoder, SeqEncoderConfig,
    SequenceEncoder,
};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Named flat view of one parameter tensor.
pub struct ParamView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// A collection of parameter tensors with a stable visiting order.
///
/// Gradients are stored in a value of the same type, so `params()` on the
/// gradient lines up element for element with `params()` on the model.
pub trait Module {
    fn params(&self) -> Vec<ParamView<'_>>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeroed(&self) -> Self
    where
        Self: Sized + Clone,
    {
        let mut z = self.clone();
        for p in z.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.data.iter().copied()).collect()
    }

    fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.len();
            let src = values
                .get(off..off + n)
                .ok_or_else(|| Error::dims("flat parameter vector", off + n, values.len()))?;
            p.copy_from_slice(src);
            off += n;
        }
        if off != values.len() {
            return Err(Error::dims("flat parameter vector", off, values.len()));
        }
        Ok(())
    }

    fn scale(&mut self, s: f64) {
        for p in self.params_mut() {
            p.iter_mut().for_each(|v| *v *= s);
        }
    }

    fn add_scaled(&mut self, other: &Self, s: f64)
    where
        Self: Sized,
    {
        let src: Vec<Vec<f64>> = other.params().iter().map(|p| p.data.to_vec()).collect();
        for (dst, src) in self.params_mut().into_iter().zip(src.iter()) {
            dst.iter_mut().zip(src.iter()).for_each(|(d, s_)| *d += s * s_);
        }
    }

    fn l2_norm(&self) -> f64 {
        self.params()
            .iter()
            .flat_map(|p| p.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Fails with the first tensor that holds NaN or Inf.
    fn check_finite(&self, context: &str) -> Result<()> {
        for p in self.params() {
            if p.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{context}: tensor `{}`", p.name)));
            }
        }
        Ok(())
    }
}

/// Scales `grads` so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm<M: Module>(grads: &mut M, max_norm: f64) -> f64 {
    let n = grads.l2_norm();
    if n > max_norm && n > 0.0 {
        grads.scale(max_norm / n);
    }
    n
}

/// Orthogonal-like init: Gaussian columns orthonormalized by Gram-Schmidt
/// (when `rows >= cols`) and scaled by `gain`.
pub fn orthogonal_init<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let mut m: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    let (tall, short) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    // vectors of length `tall`, `short` of them
    let get = |m: &Vec<f64>, v: usize, i: usize| if rows >= cols { m[i * cols + v] } else { m[v * cols + i] };
    let mut vecs: Vec<Vec<f64>> = (0..short).map(|v| (0..tall).map(|i| get(&m, v, i)).collect()).collect();
    for v in 0..short {
        for u in 0..v {
            let d: f64 = vecs[v].iter().zip(vecs[u].iter()).map(|(a, b)| a * b).sum();
            let (head, tail) = vecs.split_at_mut(v);
            tail[0].iter_mut().zip(head[u].iter()).for_each(|(a, b)| *a -= d * b);
        }
        let n: f64 = vecs[v].iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        vecs[v].iter_mut().for_each(|a| *a /= n);
    }
    for (v, vec) in vecs.iter().enumerate() {
        for (i, val) in vec.iter().enumerate() {
            let idx = if rows >= cols { i * cols + v } else { v * cols + i };
            m[idx] = gain * val;
        }
    }
    m
}

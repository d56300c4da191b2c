//! Action distributions: categorical over the seven planner commands and a
//! diagonal Gaussian for the residual joint correction.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalSample {
    pub index: usize,
    pub one_hot: Vec<f64>,
    pub log_prob: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
}

/// Numerically stable `log softmax`.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("categorical logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("categorical logits".into()));
    }
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(logits.iter().map(|v| v - lse).collect())
}

pub fn categorical_entropy(log_p: &[f64]) -> f64 {
    -log_p.iter().map(|lp| lp.exp() * lp).sum::<f64>()
}

/// Gradient of `log_p[index]` with respect to the logits.
pub fn log_softmax_grad(log_p: &[f64], index: usize) -> Vec<f64> {
    log_p.iter().enumerate().map(|(k, lp)| f64::from(k == index) - lp.exp()).collect()
}

/// Gradient of the entropy with respect to the logits.
pub fn entropy_grad(log_p: &[f64]) -> Vec<f64> {
    let h = categorical_entropy(log_p);
    log_p.iter().map(|lp| -lp.exp() * (lp + h)).collect()
}

/// Samples an index from `softmax(logits)` by inverse CDF.
pub fn categorical_head<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> Result<CategoricalSample> {
    let log_p = log_softmax(logits)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut index = log_p.len() - 1;
    for (i, lp) in log_p.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            index = i;
            break;
        }
    }
    let mut one_hot = vec![0.0; log_p.len()];
    one_hot[index] = 1.0;
    Ok(CategoricalSample { index, one_hot, log_prob: log_p[index], entropy: categorical_entropy(&log_p) })
}

pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean.iter())
        .zip(log_std.iter())
        .map(|((a, m), ls)| {
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// Gradients of [`gaussian_log_prob`] with respect to the mean and log std.
pub fn gaussian_log_prob_grad(action: &[f64], mean: &[f64], log_std: &[f64]) -> (Vec<f64>, Vec<f64>) {
    action
        .iter()
        .zip(mean.iter())
        .zip(log_std.iter())
        .map(|((a, m), ls)| {
            let s2 = (2.0 * ls).exp();
            let diff = a - m;
            (diff / s2, diff * diff / s2 - 1.0)
        })
        .unzip()
}

/// Diagonal Gaussian sample with its log-density.
pub fn gaussian_head<R: Rng + ?Sized>(mean: &[f64], log_std: &[f64], rng: &mut R) -> Result<GaussianSample> {
    if mean.len() != log_std.len() {
        return Err(Error::dims("gaussian log_std", mean.len(), log_std.len()));
    }
    if mean.iter().chain(log_std.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gaussian head inputs".into()));
    }
    let action: Vec<f64> = mean
        .iter()
        .zip(log_std.iter())
        .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let log_prob = gaussian_log_prob(&action, mean, log_std);
    Ok(GaussianSample { action, log_prob })
}

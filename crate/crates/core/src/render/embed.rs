use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seeds;

use super::DepthFrame;

pub const EMBED_DIM: usize = 32;

/// Pre-activation scale of the projection.
const EMBED_GAIN: f64 = 4.0;

pub type DepthEmbedding = [f64; EMBED_DIM];

/// Fixed random projection of a mean-subtracted depth image.
#[derive(Debug, Clone)]
pub struct DepthEmbedder {
    pub width: usize,
    pub height: usize,
    weights: Vec<f64>,
}

impl DepthEmbedder {
    pub fn new(width: usize, height: usize, seed: u64) -> Self {
        let n = width * height;
        let mut rng = seeds::rng(seed, seeds::TAG_RENDER, 1 << 32);
        let s = EMBED_GAIN / (n.max(1) as f64).sqrt();
        let weights = (0..EMBED_DIM * n).map(|_| { let g: f64 = StandardNormal.sample(&mut rng); s * g }).collect();
        DepthEmbedder { width, height, weights }
    }

    pub fn embed(&self, frame: &DepthFrame) -> Result<DepthEmbedding> {
        let n = self.width * self.height;
        if frame.width != self.width || frame.height != self.height {
            return Err(Error::dims("depth frame pixels", n, frame.width * frame.height));
        }
        let mean = frame.data.iter().sum::<f64>() / n as f64;
        let mut out = [0.0; EMBED_DIM];
        for (k, o) in out.iter_mut().enumerate() {
            let w = &self.weights[k * n..(k + 1) * n];
            let acc: f64 = w.iter().zip(&frame.data).map(|(w, d)| w * (d - mean)).sum();
            *o = acc.tanh();
        }
        Ok(out)
    }
}

pub fn depth_embed(frame: &DepthFrame, seed: u64) -> DepthEmbedding {
    DepthEmbedder::new(frame.width, frame.height, seed)
        .embed(frame)
        .expect("embedder built for this frame")
}

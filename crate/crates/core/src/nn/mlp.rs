use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{elu, elu_grad, Linear, Module, ParamView};
use crate::error::{Error, Result};

/// Linear → ELU → Linear → ELU → Linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
    pub l3: Linear,
}

/// Activations recorded by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub x: Array2<f64>,
    pub z1: Array2<f64>,
    pub h1: Array2<f64>,
    pub z2: Array2<f64>,
    pub h2: Array2<f64>,
}

impl Mlp {
    pub fn zeros(prefix: &str, input: usize, hidden: (usize, usize), output: usize) -> Self {
        Mlp {
            l1: Linear::zeros(format!("{prefix}.l1"), input, hidden.0),
            l2: Linear::zeros(format!("{prefix}.l2"), hidden.0, hidden.1),
            l3: Linear::zeros(format!("{prefix}.l3"), hidden.1, output),
        }
    }

    /// Orthogonal init with gain 1.0 on hidden layers and `out_gain` on the
    /// final layer.
    pub fn init<R: Rng + ?Sized>(
        prefix: &str,
        input: usize,
        hidden: (usize, usize),
        output: usize,
        out_gain: f64,
        rng: &mut R,
    ) -> Self {
        Mlp {
            l1: Linear::init(format!("{prefix}.l1"), input, hidden.0, 1.0, rng),
            l2: Linear::init(format!("{prefix}.l2"), hidden.0, hidden.1, 1.0, rng),
            l3: Linear::init(format!("{prefix}.l3"), hidden.1, output, out_gain, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.l1.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.l3.output_dim()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        let z1 = self.l1.forward(x)?;
        let h1 = z1.mapv(elu);
        let z2 = self.l2.forward(h1.view())?;
        let h2 = z2.mapv(elu);
        let y = self.l3.forward(h2.view())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} activations", self.l3.name)));
        }
        Ok((y, MlpCache { x: x.to_owned(), z1, h1, z2, h2 }))
    }

    /// Forward pass without recording a cache.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let h1 = self.l1.forward(x)?.mapv(elu);
        let h2 = self.l2.forward(h1.view())?.mapv(elu);
        let y = self.l3.forward(h2.view())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} activations", self.l3.name)));
        }
        Ok(y)
    }

    /// Single-vector forward pass.
    pub fn forward_vec(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let x2 = x.insert_axis(Axis(0));
        Ok(self.predict(x2)?.index_axis_move(Axis(0), 0))
    }

    /// Accumulates into `g`; returns `dL/dx`.
    pub fn backward(&self, cache: &MlpCache, dy: ArrayView2<f64>, g: &mut Mlp) -> Array2<f64> {
        let dh2 = self.l3.backward(cache.h2.view(), dy, &mut g.l3);
        let dz2 = dh2 * &cache.z2.mapv(elu_grad);
        let dh1 = self.l2.backward(cache.h1.view(), dz2.view(), &mut g.l2);
        let dz1 = dh1 * &cache.z1.mapv(elu_grad);
        self.l1.backward(cache.x.view(), dz1.view(), &mut g.l1)
    }
}

impl Module for Mlp {
    fn params(&self) -> Vec<ParamView<'_>> {
        let mut v = self.l1.params();
        v.extend(self.l2.params());
        v.extend(self.l3.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.l1.params_mut();
        v.extend(self.l2.params_mut());
        v.extend(self.l3.params_mut());
        v
    }
}

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{orthogonal_init, Module, ParamView};
use crate::error::{Error, Result};

#[inline]
pub fn elu(v: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

/// Derivative of ELU at pre-activation `v`.
#[inline]
pub fn elu_grad(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        v.exp()
    }
}

/// Affine layer `y = x·W + b` with `W` stored as `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub name: String,
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn zeros(name: impl Into<String>, input: usize, output: usize) -> Self {
        Linear { name: name.into(), w: Array2::zeros((input, output)), b: Array1::zeros(output) }
    }

    pub fn init<R: Rng + ?Sized>(
        name: impl Into<String>,
        input: usize,
        output: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let w = orthogonal_init(input, output, gain, rng);
        Linear {
            name: name.into(),
            w: Array2::from_shape_vec((input, output), w).expect("shape"),
            b: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dims(format!("{} input", self.name), self.input_dim(), x.ncols()));
        }
        let mut y = x.dot(&self.w);
        y += &self.b;
        Ok(y)
    }

    /// Accumulates parameter gradients into `g` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, g: &mut Linear) -> Array2<f64> {
        g.w += &x.t().dot(&dy);
        g.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }

    /// Like [`Linear::backward`] without computing the input gradient.
    pub fn backward_params(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, g: &mut Linear) {
        g.w += &x.t().dot(&dy);
        g.b += &dy.sum_axis(Axis(0));
    }
}

impl Module for Linear {
    fn params(&self) -> Vec<ParamView<'_>> {
        vec![
            ParamView {
                name: format!("{}.w", self.name),
                shape: self.w.shape().to_vec(),
                data: self.w.as_slice().expect("contiguous"),
            },
            ParamView {
                name: format!("{}.b", self.name),
                shape: self.b.shape().to_vec(),
                data: self.b.as_slice().expect("contiguous"),
            },
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w.as_slice_mut().expect("contiguous"),
            self.b.as_slice_mut().expect("contiguous"),
        ]
    }
}

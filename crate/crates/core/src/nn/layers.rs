use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::param::{Param, Parameterized};
use super::NnError;

/// Affine layer `y = x W^T + b` over a batch of row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, output: usize, rng: &mut R) -> Dense {
        Dense {
            w: Param::glorot(format!("{name}.w"), &[output, input], rng),
            b: Param::zeros(format!("{name}.b"), &[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape[1]
    }

    pub fn output_dim(&self) -> usize {
        self.w.shape[0]
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.w.matrix().t());
        y += &self.b.vector();
        y
    }

    pub fn try_forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::ShapeMismatch(format!(
                "{} expects {} inputs, got {}",
                self.w.name,
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(self.forward(x))
    }

    pub fn forward_vec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.w.matrix().dot(&x) + self.b.vector()
    }

    /// Accumulates parameter gradients for upstream gradient `dy` and returns
    /// the gradient with respect to `x`.
    pub fn backward(&mut self, x: ArrayView2<f64>, dy: ArrayView2<f64>) -> Array2<f64> {
        self.accumulate(x, dy);
        self.input_grad(dy)
    }

    pub fn accumulate(&mut self, x: ArrayView2<f64>, dy: ArrayView2<f64>) {
        let gw = dy.t().dot(&x);
        self.w.grad_matrix_mut().scaled_add(1.0, &gw);
        let gb = dy.sum_axis(Axis(0));
        self.b.grad_vector_mut().scaled_add(1.0, &gb);
    }

    pub fn input_grad(&self, dy: ArrayView2<f64>) -> Array2<f64> {
        dy.dot(&self.w.matrix())
    }

    pub fn input_grad_vec(&self, dy: ArrayView1<f64>) -> Array1<f64> {
        self.w.matrix().t().dot(&dy)
    }
}

impl Parameterized for Dense {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient through ReLU given the pre-activation.
pub fn relu_backward(pre: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(pre, |d, &p| {
        if p <= 0.0 {
            *d = 0.0
        }
    });
    dx
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut e = logits.mapv(|v| (v - max).exp());
    let s = e.sum();
    e /= s;
    e
}

/// Negative log-probability of `target` under `softmax(logits)`, and the
/// gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: ArrayView1<f64>, target: usize) -> (f64, Array1<f64>) {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    let loss = lse - logits[target];
    let mut grad = logits.mapv(|v| (v - lse).exp());
    grad[target] -= 1.0;
    (loss, grad)
}

/// Mean squared error over paired values and its gradient.
pub fn mse(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    (loss, grad)
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    u.dot(&v) / (nu * nv)
}

/// Gradients of `dsim * cosine(u, v)` with respect to `u` and `v`.
pub fn cosine_backward(u: ArrayView1<f64>, v: ArrayView1<f64>, dsim: f64) -> (Array1<f64>, Array1<f64>) {
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return (Array1::zeros(u.len()), Array1::zeros(v.len()));
    }
    let c = u.dot(&v) / (nu * nv);
    let du = (&v / (nu * nv) - &u * (c / (nu * nu))) * dsim;
    let dv = (&u / (nu * nv) - &v * (c / (nv * nv))) * dsim;
    (du, dv)
}

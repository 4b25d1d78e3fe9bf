use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::param::{Param, Parameterized};
use super::NnError;

/// Single-layer LSTM cell with gate order (input, forget, cell, output).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_ih: Param,
    pub w_hh: Param,
    pub b: Param,
    hidden: usize,
}

/// Values saved by [`LstmCell::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    x: Array2<f64>,
    h: Array2<f64>,
    c: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    tanh_c: Array2<f64>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, hidden: usize, rng: &mut R) -> LstmCell {
        let mut b = Param::zeros(format!("{name}.b"), &[4 * hidden]);
        // Forget gate starts open.
        b.value[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        LstmCell {
            w_ih: Param::glorot(format!("{name}.w_ih"), &[4 * hidden, input], rng),
            w_hh: Param::glorot(format!("{name}.w_hh"), &[4 * hidden, hidden], rng),
            b,
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.shape[1]
    }

    pub fn try_forward(
        &self,
        x: ArrayView2<f64>,
        h: ArrayView2<f64>,
        c: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>, LstmCache), NnError> {
        if x.ncols() != self.input_dim() || h.ncols() != self.hidden || c.ncols() != self.hidden {
            return Err(NnError::ShapeMismatch(format!(
                "lstm expects input {} hidden {}",
                self.input_dim(),
                self.hidden
            )));
        }
        Ok(self.forward(x, h, c))
    }

    pub fn forward(
        &self,
        x: ArrayView2<f64>,
        h: ArrayView2<f64>,
        c: ArrayView2<f64>,
    ) -> (Array2<f64>, Array2<f64>, LstmCache) {
        let hd = self.hidden;
        let mut gates = x.dot(&self.w_ih.matrix().t());
        gates += &h.dot(&self.w_hh.matrix().t());
        gates += &self.b.vector();
        let i = gates.slice(s![.., 0..hd]).mapv(sigmoid);
        let f = gates.slice(s![.., hd..2 * hd]).mapv(sigmoid);
        let g = gates.slice(s![.., 2 * hd..3 * hd]).mapv(f64::tanh);
        let o = gates.slice(s![.., 3 * hd..4 * hd]).mapv(sigmoid);
        let c_new = &f * &c + &i * &g;
        let tanh_c = c_new.mapv(f64::tanh);
        let h_new = &o * &tanh_c;
        let cache = LstmCache {
            x: x.to_owned(),
            h: h.to_owned(),
            c: c.to_owned(),
            i,
            f,
            g,
            o,
            tanh_c,
        };
        (h_new, c_new, cache)
    }

    /// Backpropagates `(dh', dc')` through one step, accumulating parameter
    /// gradients. Returns `(dx, dh, dc)`.
    pub fn backward(
        &mut self,
        cache: &LstmCache,
        dh_next: ArrayView2<f64>,
        dc_next: ArrayView2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let hd = self.hidden;
        let batch = cache.x.nrows();
        let d_o = &dh_next * &cache.tanh_c;
        let dc_total = &dc_next + &(&dh_next * &cache.o * &cache.tanh_c.mapv(|t| 1.0 - t * t));
        let di = &dc_total * &cache.g;
        let dg = &dc_total * &cache.i;
        let df = &dc_total * &cache.c;
        let dc = &dc_total * &cache.f;

        let mut dgates = Array2::zeros((batch, 4 * hd));
        dgates
            .slice_mut(s![.., 0..hd])
            .assign(&(&di * &cache.i.mapv(|v| v * (1.0 - v))));
        dgates
            .slice_mut(s![.., hd..2 * hd])
            .assign(&(&df * &cache.f.mapv(|v| v * (1.0 - v))));
        dgates
            .slice_mut(s![.., 2 * hd..3 * hd])
            .assign(&(&dg * &cache.g.mapv(|v| 1.0 - v * v)));
        dgates
            .slice_mut(s![.., 3 * hd..4 * hd])
            .assign(&(&d_o * &cache.o.mapv(|v| v * (1.0 - v))));

        self.w_ih.grad_matrix_mut().scaled_add(1.0, &dgates.t().dot(&cache.x));
        self.w_hh.grad_matrix_mut().scaled_add(1.0, &dgates.t().dot(&cache.h));
        self.b.grad_vector_mut().scaled_add(1.0, &dgates.sum_axis(Axis(0)));
        let dx = dgates.dot(&self.w_ih.matrix());
        let dh = dgates.dot(&self.w_hh.matrix());
        (dx, dh, dc)
    }
}

impl Parameterized for LstmCell {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w_ih, &self.w_hh, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.b]
    }
}

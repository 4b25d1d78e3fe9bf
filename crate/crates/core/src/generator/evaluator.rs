use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::nn::{relu, relu_backward, Dense, Param, Parameterized};

pub const EVALUATOR_WIDTH: usize = 200;

/// Utility regressor on embeddings: two ReLU layers of width 200 and a
/// scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorModel {
    pub first: Dense,
    pub second: Dense,
    pub out: Dense,
}

pub struct EvaluatorTrace {
    z: Array2<f64>,
    pre1: Array2<f64>,
    a1: Array2<f64>,
    pre2: Array2<f64>,
    a2: Array2<f64>,
}

impl EvaluatorModel {
    pub fn new<R: Rng + ?Sized>(embed_dim: usize, width: usize, rng: &mut R) -> EvaluatorModel {
        EvaluatorModel {
            first: Dense::new("evaluator.0", embed_dim, width, rng),
            second: Dense::new("evaluator.1", width, width, rng),
            out: Dense::new("evaluator.out", width, 1, rng),
        }
    }

    pub fn forward(&self, z: ArrayView2<f64>) -> (Vec<f64>, EvaluatorTrace) {
        let pre1 = self.first.forward(z);
        let a1 = relu(&pre1);
        let pre2 = self.second.forward(a1.view());
        let a2 = relu(&pre2);
        let y = self.out.forward(a2.view()).column(0).to_vec();
        (
            y,
            EvaluatorTrace {
                z: z.to_owned(),
                pre1,
                a1,
                pre2,
                a2,
            },
        )
    }

    /// Accumulates parameter gradients for `dy` (one value per row) and
    /// returns the gradient with respect to `z`.
    pub fn backward(&mut self, trace: &EvaluatorTrace, dy: &[f64]) -> Array2<f64> {
        let dy = Array2::from_shape_vec((dy.len(), 1), dy.to_vec()).expect("column");
        let da2 = self.out.backward(trace.a2.view(), dy.view());
        let dp2 = relu_backward(&trace.pre2, &da2);
        let da1 = self.second.backward(trace.a1.view(), dp2.view());
        let dp1 = relu_backward(&trace.pre1, &da1);
        self.first.backward(trace.z.view(), dp1.view())
    }

    /// Gradient of the prediction with respect to the input only.
    pub fn input_gradient(&self, z: &[f64]) -> Vec<f64> {
        let zm = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row");
        let (_, t) = self.forward(zm.view());
        let da2 = self.out.input_grad(Array2::ones((1, 1)).view());
        let dp2 = relu_backward(&t.pre2, &da2);
        let da1 = self.second.input_grad(dp2.view());
        let dp1 = relu_backward(&t.pre1, &da1);
        self.first.input_grad(dp1.view()).row(0).to_vec()
    }

    pub fn predict(&self, z: &[f64]) -> f64 {
        let zm = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row");
        self.forward(zm.view()).0[0]
    }
}

impl Parameterized for EvaluatorModel {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.first.params();
        v.extend(self.second.params());
        v.extend(self.out.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.first.params_mut();
        v.extend(self.second.params_mut());
        v.extend(self.out.params_mut());
        v
    }
}

/// Mean squared error `mean_i (pred_i - target_i)^2` and its gradient.
pub fn evaluator_loss(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    crate::nn::mse(pred, target)
}

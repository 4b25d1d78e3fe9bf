use std::collections::BTreeMap;

use super::param::Parameterized;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    /// Plain gradient descent, kept for ablations.
    Sgd,
}

/// Bias-corrected adaptive-moment optimizer (or plain SGD). Moments are keyed
/// by parameter name. Gradients are zeroed after every step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip applied before the update, if set.
    pub clip_norm: Option<f64>,
    t: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Optimizer {
    pub fn adam(lr: f64) -> Optimizer {
        Optimizer {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn sgd(lr: f64) -> Optimizer {
        Optimizer {
            kind: OptimizerKind::Sgd,
            ..Optimizer::adam(lr)
        }
    }

    pub fn new(kind: OptimizerKind, lr: f64) -> Optimizer {
        match kind {
            OptimizerKind::Adam => Optimizer::adam(lr),
            OptimizerKind::Sgd => Optimizer::sgd(lr),
        }
    }

    pub fn with_clip(mut self, clip: Option<f64>) -> Optimizer {
        self.clip_norm = clip;
        self
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step<M: Parameterized + ?Sized>(&mut self, model: &mut M) {
        self.t += 1;
        let mut params = model.params_mut();
        let scale = match self.clip_norm {
            Some(max) => {
                let norm = params
                    .iter()
                    .flat_map(|p| p.grad.iter())
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for p in params.iter_mut() {
            match self.kind {
                OptimizerKind::Sgd => {
                    for (v, g) in p.value.iter_mut().zip(&p.grad) {
                        *v -= self.lr * g * scale;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, s) = self
                        .moments
                        .entry(p.name.clone())
                        .or_insert_with(|| (vec![0.0; p.len()], vec![0.0; p.len()]));
                    debug_assert_eq!(m.len(), p.len(), "moment shape for {}", p.name);
                    for k in 0..p.value.len() {
                        let g = p.grad[k] * scale;
                        m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                        s[k] = self.beta2 * s[k] + (1.0 - self.beta2) * g * g;
                        let m_hat = m[k] / bc1;
                        let s_hat = s[k] / bc2;
                        p.value[k] -= self.lr * m_hat / (s_hat.sqrt() + self.eps);
                    }
                }
            }
            p.zero_grad();
        }
    }
}

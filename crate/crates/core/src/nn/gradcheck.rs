use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::param::Parameterized;

/// Gradients whose magnitudes are both below this floor are compared on an
/// absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates: usize,
}

/// Compares analytic parameter gradients with central differences.
///
/// `loss` must run a forward and backward pass, accumulate gradients into the
/// model and return the scalar loss. Models above `max_coords` parameters
/// are checked on a seeded coordinate sample.
pub fn grad_check<M, F>(model: &mut M, mut loss: F, h: f64, max_coords: usize, seed: u64) -> GradCheckReport
where
    M: Parameterized + ?Sized,
    F: FnMut(&mut M) -> f64,
{
    assert!(h > 0.0);
    model.zero_grad();
    loss(model);
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.clone()).collect();
    model.zero_grad();

    let sizes: Vec<usize> = analytic.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();
    let flat: Vec<usize> = if total > max_coords {
        let mut idx = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), total, max_coords).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..total).collect()
    };

    let mut worst = 0.0f64;
    for &k in &flat {
        let (mut pi, mut off) = (0, k);
        while off >= sizes[pi] {
            off -= sizes[pi];
            pi += 1;
        }
        let orig = model.params()[pi].value[off];
        model.params_mut()[pi].value[off] = orig + h;
        let up = loss(model);
        model.params_mut()[pi].value[off] = orig - h;
        let down = loss(model);
        model.params_mut()[pi].value[off] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[pi][off], numeric));
    }
    model.zero_grad();
    GradCheckReport {
        max_relative_error: worst,
        coordinates: flat.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{relu, relu_backward, Dense, LstmCell, Param};
    use ndarray::{Array2, Axis};
    use rand::Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn dense_layer_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut d = Dense::new("d", 5, 4, &mut rng);
        d.b.value.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        let x = random(3, 5, &mut rng);
        let target = random(3, 4, &mut rng);
        let report = grad_check(
            &mut d,
            |d| {
                let y = d.forward(x.view());
                let diff = &y - &target;
                let loss = 0.5 * diff.mapv(|v| v * v).sum();
                d.backward(x.view(), diff.view());
                loss
            },
            1e-5,
            10_000,
            0,
        );
        assert!(report.max_relative_error < 1e-4, "{report:?}");
        assert_eq!(report.coordinates, 24);
    }

    struct Mlp(Dense, Dense);
    impl Parameterized for Mlp {
        fn params(&self) -> Vec<&Param> {
            let mut v = self.0.params();
            v.extend(self.1.params());
            v
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            let mut v = self.0.params_mut();
            v.extend(self.1.params_mut());
            v
        }
    }

    #[test]
    fn relu_mlp_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = Mlp(Dense::new("a", 4, 6, &mut rng), Dense::new("b", 6, 1, &mut rng));
        let x = random(5, 4, &mut rng);
        let report = grad_check(
            &mut m,
            |m| {
                let pre = m.0.forward(x.view());
                let hid = relu(&pre);
                let out = m.1.forward(hid.view());
                let loss = out.sum_axis(Axis(0))[0];
                let dout = Array2::ones(out.raw_dim());
                let dh = m.1.backward(hid.view(), dout.view());
                m.0.backward(x.view(), relu_backward(&pre, &dh).view());
                loss
            },
            1e-5,
            10_000,
            0,
        );
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn lstm_cell_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut cell = LstmCell::new("l", 3, 4, &mut rng);
        let x = random(2, 3, &mut rng);
        let h = random(2, 4, &mut rng);
        let c = random(2, 4, &mut rng);
        let wh = random(2, 4, &mut rng);
        let wc = random(2, 4, &mut rng);
        let report = grad_check(
            &mut cell,
            |cell| {
                let (h2, c2, cache) = cell.forward(x.view(), h.view(), c.view());
                let loss = (&h2 * &wh).sum() + (&c2 * &wc).sum();
                cell.backward(&cache, wh.view(), wc.view());
                loss
            },
            1e-5,
            10_000,
            0,
        );
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn samples_large_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Dense::new("d", 200, 60, &mut rng);
        let x = random(1, 200, &mut rng);
        let report = grad_check(
            &mut d,
            |d| {
                let y = d.forward(x.view());
                d.backward(x.view(), Array2::ones(y.raw_dim()).view());
                y.sum()
            },
            1e-5,
            500,
            3,
        );
        assert_eq!(report.coordinates, 500);
        assert!(report.max_relative_error < 1e-4);
    }
}

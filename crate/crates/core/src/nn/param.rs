use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;

/// A named learnable tensor stored flat in row-major order, with a gradient
/// accumulator of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Param {
        let len = shape.iter().product();
        Param {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![0.0; len],
            grad: vec![0.0; len],
        }
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], v: f64) -> Param {
        let mut p = Param::zeros(name, shape);
        p.value.iter_mut().for_each(|x| *x = v);
        p
    }

    /// Glorot-uniform over `[-b, b]`, `b = sqrt(6 / (fan_in + fan_out))`,
    /// for a `[fan_out, fan_in]` matrix.
    pub fn glorot<R: Rng + ?Sized>(name: impl Into<String>, shape: &[usize], rng: &mut R) -> Param {
        assert_eq!(shape.len(), 2, "glorot init expects a matrix");
        let bound = glorot_bound(shape[1], shape[0]);
        let mut p = Param::zeros(name, shape);
        p.value.iter_mut().for_each(|x| *x = rng.gen_range(-bound..=bound));
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.shape[0], self.shape[1]), &self.value).expect("matrix param")
    }

    pub fn matrix_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((self.shape[0], self.shape[1]), &mut self.value).expect("matrix param")
    }

    pub fn grad_matrix_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((self.shape[0], self.shape[1]), &mut self.grad).expect("matrix param")
    }

    pub fn vector(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.value[..])
    }

    pub fn grad_vector_mut(&mut self) -> ArrayViewMut1<'_, f64> {
        ArrayViewMut1::from(&mut self.grad[..])
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Anything that owns parameters. Names must be unique within a model.
pub trait Parameterized {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.params()
            .iter()
            .all(|p| p.value.iter().chain(&p.grad).all(|v| v.is_finite()))
    }
}

impl<T: Parameterized> Parameterized for [T] {
    fn params(&self) -> Vec<&Param> {
        self.iter().flat_map(|m| m.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.iter_mut().flat_map(|m| m.params_mut()).collect()
    }
}

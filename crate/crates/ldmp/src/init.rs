//! Seeded weight initialization.
//!
//! The artifact is forward-only, so initialization only needs to be
//! deterministic: uniform values in [-0.05, 0.05] drawn from a caller-owned
//! seeded generator.

use crate::tensor::Tensor;
use rand::Rng;

pub(crate) const INIT_RANGE: f64 = 0.05;

pub(crate) fn uniform_tensor(rng: &mut dyn rand::RngCore, shape: &[usize]) -> Tensor {
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE))
        .collect();
    Tensor::new(shape, data).expect("initializer shapes are valid by construction")
}

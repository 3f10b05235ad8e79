//! Small graph-building helpers shared by the encoders and the head.

use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `x[n×in]·wᵀ + b` for `w[out×in]`, `b[out]`.
pub fn linear<T: Scalar>(g: &mut Graph<'_, T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.matmul_nt(x, w)?;
    g.add_row(y, b)
}

/// `x[n×in]·wᵀ` without bias.
pub fn linear_nobias<T: Scalar>(g: &mut Graph<'_, T>, x: Var, w: Var) -> Result<Var> {
    g.matmul_nt(x, w)
}

/// A vector or matrix viewed as `[rows×cols]` with `rows = 1` for vectors.
pub fn as_row<T: Scalar>(g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
    if g.shape(x).len() == 2 {
        return Ok(x);
    }
    let n = g.value(x).len();
    g.reshape(x, &[1, n])
}

/// Inverted dropout: zeroes each entry with probability `rate` and scales
/// survivors by `1/(1-rate)`. Identity when `rate == 0`.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<'_, T>,
    x: Var,
    rate: f64,
    rng: &mut R,
) -> Result<Var> {
    if rate <= 0.0 {
        return Ok(x);
    }
    let shape = g.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let keep = T::lit(1.0 / (1.0 - rate));
    let mask = (0..n)
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let m = g.constant(Tensor::new(&shape, mask)?);
    g.mul(x, m)
}

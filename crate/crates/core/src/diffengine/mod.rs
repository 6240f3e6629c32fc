//! Exact derivatives: forward-mode duals over the space-time inputs and a
//! reverse-mode tape over network parameters, plus a batched GEMM engine
//! that implements the same derivatives for training-sized point sets.

mod batch;
mod dual;
mod real;
mod tape;

pub use batch::{forward_batch, BatchEval};
pub use dual::{Dual, Tangents};
pub use real::{hard_tanh, sigmoid, sign0, Real};
pub use tape::{OpKind, Tape, Var, SINGULAR_TOLERANCE};

use thiserror::Error;

use crate::network::{forward_generic, NetworkParams};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum DiffError {
    #[error("non-finite value produced at layer {layer}")]
    NonFinite { layer: usize },
    #[error("division by near-zero denominator {denominator:e}")]
    SingularDivision { denominator: f64 },
    #[error("unsupported primitive `{0}` in differentiated expression")]
    UnsupportedPrimitive(&'static str),
    #[error("point has {found} coordinates, network expects {expected}")]
    InputDimension { expected: usize, found: usize },
}

/// Network output and its exact first derivatives at one space-time point.
#[derive(Clone, Debug, PartialEq)]
pub struct InputGrads {
    pub u: f64,
    pub du_dx: Vec<f64>,
    pub du_dt: f64,
}

/// `u`, `∇_x u` and `∂_t u` by forward-mode duals seeded on every input.
pub fn eval_with_input_grads(params: &NetworkParams, point: &[f64]) -> Result<InputGrads, DiffError> {
    let arch = params.arch();
    let di = arch.input_dim;
    if point.len() != di {
        return Err(DiffError::InputDimension {
            expected: di,
            found: point.len(),
        });
    }
    let theta: Vec<Dual<f64>> = params.as_slice().iter().map(|&w| Dual::constant(w)).collect();
    let input: Vec<Dual<f64>> = point
        .iter()
        .enumerate()
        .map(|(k, &z)| Dual::variable(z, k, di))
        .collect();
    let out = forward_generic(arch, &theta, &input)?;
    Ok(InputGrads {
        u: out.value,
        du_dx: (0..di - 1).map(|k| out.tangent(k)).collect(),
        du_dt: out.tangent(di - 1),
    })
}

/// Value and gradient of a scalar loss built on the tape from `params`.
///
/// The closure receives one tape variable per parameter, in order, and the
/// returned gradient is aligned with `params`.
pub fn loss_gradient<F>(params: &[f64], loss: F) -> Result<(f64, Vec<f64>), DiffError>
where
    F: for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, DiffError>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|&p| tape.parameter(p)).collect();
    let out = loss(&tape, &vars)?;
    let grad = tape.gradient(out)?;
    Ok((out.value(), grad))
}

/// Largest relative deviation between `analytic` and central differences
/// of `f` around `point`.
///
/// Each coordinate's error is divided by `max(|a_i|, |fd_i|, 1e-3·‖a‖∞, 1)`.
/// The scale-dependent floor keeps components far below the gradient norm
/// from being judged against finite-difference roundoff, which is of order
/// `ε·|f|/step`.
pub fn finite_diff_check<F>(f: F, analytic: &[f64], point: &[f64], step: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    assert_eq!(analytic.len(), point.len());
    let scale = 1e-3 * analytic.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut probe = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        probe[i] = point[i] + step;
        let fp = f(&probe);
        probe[i] = point[i] - step;
        let fm = f(&probe);
        probe[i] = point[i];
        let fd = (fp - fm) / (2.0 * step);
        let denom = analytic[i].abs().max(fd.abs()).max(scale).max(1.0);
        worst = worst.max((analytic[i] - fd).abs() / denom);
    }
    worst
}

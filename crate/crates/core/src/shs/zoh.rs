//! Exact zero-order-hold sampling of a continuous LTI model.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ss::StateSpaceModel;

/// Sampled model: x[k+1] = A_d x[k] + B_d u[k], y[k] = C x[k].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub dt: f64,
}

/// ZOH discretization via the augmented-matrix exponential:
///
/// exp([[A, B], [0, 0]] * dt) = [[A_d, B_d], [0, I]]
///
/// which is exact for piecewise-constant inputs held over each sample.
pub fn discretize_zoh(model: &StateSpaceModel, dt: f64) -> Result<DiscreteModel> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::Validation(format!("sample interval must be > 0, got {dt}")));
    }
    let n = model.n();
    let m = model.m();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&model.a * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(&model.b * dt));
    let exp = aug.exp();
    let a_d = exp.view((0, 0), (n, n)).into_owned();
    let b_d = exp.view((0, n), (n, m)).into_owned();
    if a_d.iter().chain(b_d.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "non-finite entries in discretized model (overflow in matrix exponential)".into(),
        ));
    }
    Ok(DiscreteModel {
        a_d,
        b_d,
        c: model.c.clone(),
        dt,
    })
}

//! Per-generator swing-equation block over [delta, omega].

use nalgebra::DMatrix;

use crate::error::Result;
use crate::grid::params::SwingParams;
use crate::ss::StateSpaceModel;

/// Two-state electromechanical block for one generator. The network coupling
/// terms are left out here and filled in by `assemble_system`; the mechanical
/// input column carries the 1/M scaling.
pub fn build_swing_block(gen_id: &str, params: &SwingParams) -> Result<StateSpaceModel> {
    params.validate()?;
    let mut a = DMatrix::zeros(2, 2);
    a[(0, 1)] = 1.0;
    a[(1, 1)] = -params.d / params.m;
    let mut b = DMatrix::zeros(2, 1);
    b[(1, 0)] = 1.0 / params.m;
    StateSpaceModel::new(
        a,
        b,
        DMatrix::zeros(0, 2),
        vec![format!("delta_{gen_id}"), format!("omega_{gen_id}")],
        vec![format!("p_in_{gen_id}")],
        vec![],
    )
}

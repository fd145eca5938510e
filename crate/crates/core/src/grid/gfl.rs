//! Linearized GFL-controlled PV-BESS block.
//!
//! Structural small-signal model of the control loops: SRF-PLL, outer P/Q
//! loops, inner current loops with cross-decoupling, LCL filter in the dq
//! frame, and the DC side (DC link, boost-stage PV current, two-branch
//! battery RC network). All AC quantities are per-unit on the inverter
//! rating; time is in seconds.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::params::{GflParams, OperatingPoint};
use crate::ss::StateSpaceModel;

/// Canonical GFL state ordering.
pub const GFL_STATE_NAMES: [&str; 17] = [
    "omega_pll", "theta_pll", "xi_pll", "xi_p", "xi_q", "xi_cd", "xi_cq", "i_td", "i_tq",
    "v_pcc_d", "v_pcc_q", "i_gd", "i_gq", "v_dc", "i_pv", "v_cb", "v_cs",
];

pub const GFL_INPUT_NAMES: [&str; 4] = ["p_ref", "q_ref", "v_gd", "v_gq"];

const N: usize = 17;
const M: usize = 4;

// State indices.
const W_PLL: usize = 0;
const TH_PLL: usize = 1;
const XI_PLL: usize = 2;
const XI_P: usize = 3;
const XI_Q: usize = 4;
const XI_CD: usize = 5;
const XI_CQ: usize = 6;
const I_TD: usize = 7;
const I_TQ: usize = 8;
const V_PD: usize = 9;
const V_PQ: usize = 10;
const I_GD: usize = 11;
const I_GQ: usize = 12;
const V_DC: usize = 13;
const I_PV: usize = 14;
const V_CB: usize = 15;
const V_CS: usize = 16;

// Input indices.
const U_PREF: usize = 0;
const U_QREF: usize = 1;
const U_VGD: usize = 2;
const U_VGQ: usize = 3;

/// Linear functional over [states; inputs].
type Lin = DVector<f64>;

fn unit(i: usize) -> Lin {
    let mut v = DVector::zeros(N + M);
    v[i] = 1.0;
    v
}

fn input(j: usize) -> Lin {
    unit(N + j)
}

/// Build the 17-state GFL block. Fails if the parameter set yields an
/// unstable linearization, since an unstable nominal plant would invalidate
/// everything generated from it.
pub fn build_gfl_block(params: &GflParams, op: &OperatingPoint) -> Result<StateSpaceModel> {
    let model = build_gfl_unchecked(params, op)?;
    let abscissa = model.spectral_abscissa();
    if abscissa >= 0.0 {
        return Err(Error::Validation(format!(
            "GFL linearization is not Hurwitz (spectral abscissa {abscissa:.3e}); \
             rejecting the parameter set"
        )));
    }
    Ok(model)
}

/// Same construction without the stability gate; used for structural tests.
pub(crate) fn build_gfl_unchecked(
    params: &GflParams,
    op: &OperatingPoint,
) -> Result<StateSpaceModel> {
    params.validate()?;
    op.validate()?;

    let w0 = params.omega0();
    let zb = params.z_base();
    let x_f = w0 * params.l_f / zb;
    let x_g = w0 * params.l_g / zb;
    let b_cf = w0 * params.c_f * zb;
    let lf_s = x_f / w0; // pu inductance in seconds
    let lg_s = x_g / w0;
    let cf_s = b_cf / w0;
    let tau_dc = params.c_dc * zb;
    let tau_b = params.c_b * zb;
    let tau_s = params.c_s * zb;

    let v0d = op.v_mag;
    let i_td0 = op.i_td0();
    let i_tq0 = op.i_tq0();

    // PLL-frame q voltage: the controller frame lags the grid frame by
    // theta_pll, so the sensed q component picks up -v0d * theta.
    let v_qc = unit(V_PQ) - v0d * unit(TH_PLL);

    // Power deviations at the PCC.
    let d_p = v0d * unit(I_TD) + i_td0 * unit(V_PD) + i_tq0 * unit(V_PQ);
    let d_q = i_td0 * unit(V_PQ) - i_tq0 * unit(V_PD) - v0d * unit(I_TQ);

    // Outer power loops.
    let e_p = input(U_PREF) - &d_p;
    let e_q = input(U_QREF) - &d_q;
    let i_td_ref = params.kp_pq * &e_p + params.ki_pq * unit(XI_P);
    // Q responds with -v0d to i_tq, hence the negated reference.
    let i_tq_ref = -(params.kp_pq * &e_q + params.ki_pq * unit(XI_Q));

    // Inner current loops with cross-decoupling and PCC feedforward.
    let e_d = &i_td_ref - unit(I_TD);
    let e_q_c = &i_tq_ref - unit(I_TQ);
    let v_inv_d = params.kp_c * &e_d + params.ki_c * unit(XI_CD) - x_f * unit(I_TQ) + unit(V_PD);
    let v_inv_q = params.kp_c * &e_q_c + params.ki_c * unit(XI_CQ) + x_f * unit(I_TD) + unit(V_PQ);

    // Battery branch current into the DC link.
    let i_b = (unit(V_CB) - unit(V_DC)) / params.r_b;

    let mut rows: Vec<Lin> = vec![DVector::zeros(N + M); N];
    rows[W_PLL] =
        params.pll_bw * (params.kp_pll * &v_qc + params.ki_pll * unit(XI_PLL) - unit(W_PLL));
    rows[TH_PLL] = unit(W_PLL);
    rows[XI_PLL] = v_qc.clone();
    rows[XI_P] = e_p.clone();
    rows[XI_Q] = e_q.clone();
    rows[XI_CD] = e_d.clone();
    rows[XI_CQ] = e_q_c.clone();
    rows[I_TD] = (&v_inv_d - unit(V_PD) - params.r_f * unit(I_TD) + x_f * unit(I_TQ)) / lf_s;
    rows[I_TQ] = (&v_inv_q - unit(V_PQ) - params.r_f * unit(I_TQ) - x_f * unit(I_TD)) / lf_s;
    rows[V_PD] = (unit(I_TD) - unit(I_GD) + b_cf * unit(V_PQ)) / cf_s;
    rows[V_PQ] = (unit(I_TQ) - unit(I_GQ) - b_cf * unit(V_PD)) / cf_s;
    rows[I_GD] = (unit(V_PD) - input(U_VGD) - params.r_g * unit(I_GD) + x_g * unit(I_GQ)) / lg_s;
    rows[I_GQ] = (unit(V_PQ) - input(U_VGQ) - params.r_g * unit(I_GQ) - x_g * unit(I_GD)) / lg_s;
    rows[V_DC] = (unit(I_PV) + &i_b - &d_p) / tau_dc;
    rows[I_PV] = (-params.g_pv * unit(V_DC) - unit(I_PV)) / params.tau_pv;
    rows[V_CB] = ((unit(V_DC) - unit(V_CB)) / params.r_b + (unit(V_CS) - unit(V_CB)) / params.r_s)
        / tau_b;
    rows[V_CS] = ((unit(V_CB) - unit(V_CS)) / params.r_s) / tau_s;

    let mut a = DMatrix::zeros(N, N);
    let mut b = DMatrix::zeros(N, M);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..N {
            a[(i, j)] = row[j];
        }
        for j in 0..M {
            b[(i, j)] = row[N + j];
        }
    }

    StateSpaceModel::new(
        a,
        b,
        DMatrix::zeros(0, N),
        GFL_STATE_NAMES.iter().map(|s| s.to_string()).collect(),
        GFL_INPUT_NAMES.iter().map(|s| s.to_string()).collect(),
        vec![],
    )
}

/// Default inverter parameter set for a 0.2 MVA unit, matched by the shipped
/// parameter file.
pub fn default_gfl_params() -> GflParams {
    GflParams {
        l_f: 0.5e-3,
        c_f: 50e-6,
        l_g: 0.2e-3,
        kp_pll: 60.0,
        ki_pll: 1000.0,
        pll_bw: 400.0,
        kp_pq: 0.5,
        ki_pq: 20.0,
        kp_c: 0.3,
        ki_c: 50.0,
        c_dc: 0.05,
        c_b: 1.0,
        c_s: 0.5,
        g_pv: 0.1,
        s_rated_mva: 0.2,
        v_base_kv: 0.48,
        freq_hz: 60.0,
        r_f: 0.01,
        r_g: 0.01,
        r_b: 0.05,
        r_s: 0.02,
        tau_pv: 0.01,
    }
}

/// Flat-start operating point at half rating.
pub fn default_operating_point() -> OperatingPoint {
    OperatingPoint {
        v_mag: 1.0,
        v_angle: 0.0,
        p_set: 0.5,
        q_set: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_block_is_hurwitz() {
        let model = build_gfl_block(&default_gfl_params(), &default_operating_point()).unwrap();
        assert_eq!(model.n(), 17);
        assert_eq!(model.m(), 4);
        assert!(
            model.spectral_abscissa() < 0.0,
            "abscissa = {}",
            model.spectral_abscissa()
        );
    }

    #[test]
    fn state_names_match_canonical_order() {
        let model = build_gfl_block(&default_gfl_params(), &default_operating_point()).unwrap();
        assert_eq!(model.state_names, GFL_STATE_NAMES.to_vec());
    }

    #[test]
    fn zero_gains_leave_integrator_rows_without_diagonal_feedback() {
        let mut p = default_gfl_params();
        p.kp_pll = 0.0;
        p.ki_pll = 0.0;
        p.kp_pq = 0.0;
        p.ki_pq = 0.0;
        p.kp_c = 0.0;
        p.ki_c = 0.0;
        let model = build_gfl_unchecked(&p, &default_operating_point()).unwrap();
        for idx in [XI_P, XI_Q, XI_CD, XI_CQ] {
            assert_eq!(model.a[(idx, idx)], 0.0, "state {idx} has diagonal feedback");
        }
    }
}

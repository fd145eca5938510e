//! Integration of swing blocks, the GFL block, and the network coupling into
//! one system model.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::kron::CouplingMatrix;
use crate::ss::StateSpaceModel;

/// A swing block tagged with the bus it sits on.
#[derive(Debug, Clone)]
pub struct PlacedBlock {
    pub bus: u32,
    pub model: StateSpaceModel,
}

/// Assemble the integrated model.
///
/// State ordering is the GFL block first (when present) followed by the swing
/// blocks in the given order. The coupling Laplacian is applied to the angle
/// states: each generator's speed row picks up `-L[i, j] / M_i` on the angle
/// column of every dynamic bus; the PCC bus angle is the PLL angle. `ground`
/// adds susceptance-to-reference terms on the listed buses (the external-grid
/// tie at the slack), which anchors the otherwise free common angle.
///
/// The GFL grid-interface voltage input `v_gq` is tied to the network: the
/// grid-side voltage angle seen at the PCC is the coupling-weighted average of
/// the neighboring dynamic-bus angles.
pub fn assemble_system(
    sg_blocks: &[PlacedBlock],
    gfl_block: Option<&PlacedBlock>,
    coupling: &CouplingMatrix,
    sensors: &[String],
    ground: &[(u32, f64)],
) -> Result<StateSpaceModel> {
    let expected = sg_blocks.len() + usize::from(gfl_block.is_some());
    if coupling.bus_ids.len() != expected {
        return Err(Error::Dimension(format!(
            "coupling matrix covers {} buses but {} blocks were given",
            coupling.bus_ids.len(),
            expected
        )));
    }

    // Layout: [gfl states][sg1 states][sg2 states]...
    let gfl_n = gfl_block.map_or(0, |b| b.model.n());
    let n: usize = gfl_n + sg_blocks.iter().map(|b| b.model.n()).sum::<usize>();
    let gfl_m = gfl_block.map_or(0, |b| b.model.m());
    let m: usize = gfl_m + sg_blocks.iter().map(|b| b.model.m()).sum::<usize>();

    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    let mut state_names = Vec::with_capacity(n);
    let mut input_names = Vec::with_capacity(m);

    if let Some(gfl) = gfl_block {
        a.view_mut((0, 0), (gfl_n, gfl_n)).copy_from(&gfl.model.a);
        b.view_mut((0, 0), (gfl_n, gfl_m)).copy_from(&gfl.model.b);
        state_names.extend(gfl.model.state_names.iter().cloned());
        input_names.extend(gfl.model.input_names.iter().cloned());
    }
    // Per-bus bookkeeping for the coupling pass: angle column and, for SGs,
    // the speed row and 1/M scale (taken from the mechanical input column).
    let mut angle_col = vec![0usize; coupling.bus_ids.len()];
    let mut sg_rows: Vec<Option<(usize, f64)>> = vec![None; coupling.bus_ids.len()];

    let coupling_index = |bus: u32| -> Result<usize> {
        coupling
            .bus_ids
            .iter()
            .position(|&x| x == bus)
            .ok_or_else(|| Error::Validation(format!("bus {bus} missing from coupling matrix")))
    };

    if let Some(gfl) = gfl_block {
        let theta = gfl
            .model
            .state_index("theta_pll")
            .ok_or_else(|| Error::Validation("GFL block lacks theta_pll state".into()))?;
        angle_col[coupling_index(gfl.bus)?] = theta;
    }

    let mut row0 = gfl_n;
    let mut col0 = gfl_m;
    for block in sg_blocks {
        let bn = block.model.n();
        let bm = block.model.m();
        if bn != 2 || bm != 1 {
            return Err(Error::Dimension(format!(
                "swing block on bus {} must be 2-state, 1-input",
                block.bus
            )));
        }
        a.view_mut((row0, row0), (bn, bn)).copy_from(&block.model.a);
        b.view_mut((row0, col0), (bn, bm)).copy_from(&block.model.b);
        state_names.extend(block.model.state_names.iter().cloned());
        input_names.extend(block.model.input_names.iter().cloned());

        let ci = coupling_index(block.bus)?;
        angle_col[ci] = row0; // delta is the first block state
        let inv_m = block.model.b[(1, 0)];
        sg_rows[ci] = Some((row0 + 1, inv_m));

        row0 += bn;
        col0 += bm;
    }

    // Grounded Laplacian.
    let mut lap = coupling.k.clone();
    for &(bus, bg) in ground {
        if let Ok(ci) = coupling_index(bus) {
            lap[(ci, ci)] += bg;
        }
    }

    // Swing coupling: omega_i' -= (1/M_i) * sum_j L[i,j] * angle_j.
    for (ci, entry) in sg_rows.iter().enumerate() {
        if let Some((omega_row, inv_m)) = entry {
            for cj in 0..coupling.bus_ids.len() {
                a[(*omega_row, angle_col[cj])] -= lap[(ci, cj)] * inv_m;
            }
        }
    }

    // GFL grid-voltage tie: v_gq follows the coupling-weighted neighbor angle.
    if let Some(gfl) = gfl_block {
        let pcc = coupling_index(gfl.bus)?;
        let vgq = gfl
            .model
            .input_index("v_gq")
            .ok_or_else(|| Error::Validation("GFL block lacks v_gq input".into()))?;
        let neighbor_b: Vec<f64> = (0..coupling.bus_ids.len())
            .map(|j| if j == pcc { 0.0 } else { -coupling.k[(pcc, j)] })
            .collect();
        let total: f64 = neighbor_b.iter().sum();
        if total > 0.0 {
            for (j, bj) in neighbor_b.iter().enumerate() {
                if *bj == 0.0 {
                    continue;
                }
                let w = bj / total;
                for r in 0..gfl_n {
                    a[(r, angle_col[j])] += gfl.model.b[(r, vgq)] * w;
                }
            }
        }
    }

    // Sensor rows: unit selection of the sensed state.
    let mut c = DMatrix::zeros(sensors.len(), n);
    for (i, name) in sensors.iter().enumerate() {
        let idx = state_names
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Validation(format!("unknown sensor target {name:?}")))?;
        c[(i, idx)] = 1.0;
    }

    StateSpaceModel::new(a, b, c, state_names, input_names, sensors.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::gfl::{build_gfl_block, default_gfl_params, default_operating_point};
    use crate::grid::kron::CouplingMatrix;
    use crate::grid::params::SwingParams;
    use crate::grid::swing::build_swing_block;

    fn sg(bus: u32, gid: &str, m: f64, d: f64) -> PlacedBlock {
        PlacedBlock {
            bus,
            model: build_swing_block(
                gid,
                &SwingParams {
                    m,
                    d,
                    p_in: 0.0,
                    p_l: 0.0,
                },
            )
            .unwrap(),
        }
    }

    #[test]
    fn three_sg_plus_gfl_has_23_states() {
        let gfl = PlacedBlock {
            bus: 33,
            model: build_gfl_block(&default_gfl_params(), &default_operating_point()).unwrap(),
        };
        let sgs = vec![sg(1, "g1", 0.05, 2.0), sg(18, "g2", 0.05, 2.0), sg(25, "g4", 0.05, 2.0)];
        let mut coupling = CouplingMatrix::zeros(vec![1, 18, 25, 33]);
        for i in 0..4 {
            coupling.k[(i, i)] = 10.0;
            for j in 0..4 {
                if i != j {
                    coupling.k[(i, j)] = -10.0 / 3.0;
                }
            }
        }
        let sys = assemble_system(
            &sgs,
            Some(&gfl),
            &coupling,
            &["delta_g1".into(), "delta_g2".into()],
            &[(1, 100.0)],
        )
        .unwrap();
        assert_eq!(sys.n(), 23);
        assert_eq!(sys.p(), 2);
        // C rows are unit selections.
        for i in 0..2 {
            let row = sys.c.row(i);
            assert_eq!(row.iter().filter(|v| **v != 0.0).count(), 1);
            assert_eq!(row.iter().copied().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn zero_coupling_is_block_diagonal() {
        let sgs = vec![sg(1, "g1", 1.0, 1.0), sg(2, "g2", 2.0, 0.5)];
        let coupling = CouplingMatrix::zeros(vec![1, 2]);
        let sys = assemble_system(&sgs, None, &coupling, &[], &[]).unwrap();
        // Off-diagonal blocks are zero.
        assert_eq!(sys.a.view((0, 2), (2, 2)), DMatrix::zeros(2, 2).view((0, 0), (2, 2)));
        assert_eq!(sys.a.view((2, 0), (2, 2)), DMatrix::zeros(2, 2).view((0, 0), (2, 2)));
    }

    #[test]
    fn unknown_sensor_is_error() {
        let sgs = vec![sg(1, "g1", 1.0, 1.0)];
        let coupling = CouplingMatrix::zeros(vec![1]);
        let err =
            assemble_system(&sgs, None, &coupling, &["delta_gX".into()], &[]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn coupling_enters_speed_rows_scaled_by_inverse_inertia() {
        let sgs = vec![sg(1, "g1", 2.0, 0.0), sg(2, "g2", 4.0, 0.0)];
        let mut coupling = CouplingMatrix::zeros(vec![1, 2]);
        coupling.k[(0, 0)] = 3.0;
        coupling.k[(1, 1)] = 3.0;
        coupling.k[(0, 1)] = -3.0;
        coupling.k[(1, 0)] = -3.0;
        let sys = assemble_system(&sgs, None, &coupling, &[], &[]).unwrap();
        // omega_g1 row: -3/2 on delta_g1, +3/2 on delta_g2.
        assert_eq!(sys.a[(1, 0)], -1.5);
        assert_eq!(sys.a[(1, 2)], 1.5);
        // omega_g2 row: +3/4 on delta_g1, -3/4 on delta_g2.
        assert_eq!(sys.a[(3, 0)], 0.75);
        assert_eq!(sys.a[(3, 2)], -0.75);
    }
}

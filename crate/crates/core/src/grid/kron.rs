//! Kron reduction of the network susceptance Laplacian onto the dynamic buses.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::network::BusNetwork;

/// Reduced Laplacian of synchronizing-power coefficients among dynamic buses.
///
/// Row/column `i` corresponds to `bus_ids[i]`. Off-diagonal entry `(i, j)` is
/// minus the effective susceptance between buses i and j.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    pub k: DMatrix<f64>,
    pub bus_ids: Vec<u32>,
}

impl CouplingMatrix {
    /// Effective susceptance between two dynamic buses.
    pub fn effective_susceptance(&self, a: u32, b: u32) -> Option<f64> {
        let i = self.bus_ids.iter().position(|&x| x == a)?;
        let j = self.bus_ids.iter().position(|&x| x == b)?;
        Some(-self.k[(i, j)])
    }

    pub fn zeros(bus_ids: Vec<u32>) -> Self {
        let n = bus_ids.len();
        Self {
            k: DMatrix::zeros(n, n),
            bus_ids,
        }
    }
}

/// Eliminate non-dynamic buses via the Schur complement of the susceptance
/// Laplacian (DC power-flow linearization). Buses disconnected from the slack
/// component carry no power and are dropped; a disconnected *dynamic* bus is
/// an error, signalling an inadmissible physical contingency.
pub fn kron_reduce(network: &BusNetwork, dynamic_bus_ids: &[u32]) -> Result<CouplingMatrix> {
    for &id in dynamic_bus_ids {
        if network.bus(id).is_none() {
            return Err(Error::Validation(format!("dynamic bus {id} not in network")));
        }
    }
    let component = network.slack_component();
    for &id in dynamic_bus_ids {
        if !component.contains(&id) {
            return Err(Error::Islanded { bus: id });
        }
    }

    // Full Laplacian over the slack component.
    let mut order: Vec<u32> = dynamic_bus_ids.to_vec();
    let mut interior: Vec<u32> = component
        .iter()
        .copied()
        .filter(|id| !dynamic_bus_ids.contains(id))
        .collect();
    interior.sort_unstable();
    order.extend(&interior);
    let index: BTreeMap<u32, usize> = order.iter().enumerate().map(|(i, id)| (*id, i)).collect();

    let total = order.len();
    let nd = dynamic_bus_ids.len();
    let mut lap = DMatrix::zeros(total, total);
    for line in network.lines.iter().filter(|l| l.in_service) {
        let (Some(&i), Some(&j)) = (index.get(&line.from), index.get(&line.to)) else {
            continue; // line outside the slack component
        };
        let b = network.line_susceptance(line);
        lap[(i, i)] += b;
        lap[(j, j)] += b;
        lap[(i, j)] -= b;
        lap[(j, i)] -= b;
    }

    let reduced = if nd == total {
        lap
    } else {
        let l_dd = lap.view((0, 0), (nd, nd)).into_owned();
        let l_di = lap.view((0, nd), (nd, total - nd)).into_owned();
        let l_id = lap.view((nd, 0), (total - nd, nd)).into_owned();
        let l_ii = lap.view((nd, nd), (total - nd, total - nd)).into_owned();
        let lu = l_ii.lu();
        let solved = lu
            .solve(&l_id)
            .ok_or_else(|| Error::Numeric("singular interior block in Kron reduction".into()))?;
        l_dd - l_di * solved
    };

    // Kill floating-point asymmetry from the LU solve.
    let sym = (&reduced + reduced.transpose()) * 0.5;
    Ok(CouplingMatrix {
        k: sym,
        bus_ids: dynamic_bus_ids.to_vec(),
    })
}

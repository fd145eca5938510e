//! One-stop construction of the integrated model from a network description
//! and a parameter set.

use crate::error::{Error, Result};
use crate::grid::assemble::{assemble_system, PlacedBlock};
use crate::grid::gfl::build_gfl_block;
use crate::grid::kron::kron_reduce;
use crate::grid::network::BusNetwork;
use crate::grid::params::ParamSet;
use crate::grid::swing::build_swing_block;
use crate::ss::StateSpaceModel;

#[derive(Debug, Clone)]
pub struct SystemBuilder {
    pub network: BusNetwork,
    pub params: ParamSet,
}

impl SystemBuilder {
    pub fn new(network: BusNetwork, params: ParamSet) -> Result<Self> {
        network.validate()?;
        params.validate()?;
        for (gid, _) in &network.generators {
            if !params.swing.contains_key(gid) {
                return Err(Error::Validation(format!(
                    "no [swing.{gid}] parameters for generator {gid}"
                )));
            }
        }
        if network.pvbess_bus.is_some() && params.gfl.is_none() {
            return Err(Error::Validation(
                "network places a pvbess unit but the parameter file has no [gfl] section".into(),
            ));
        }
        Ok(Self { network, params })
    }

    /// Build the integrated model for the nominal network.
    pub fn build(&self) -> Result<StateSpaceModel> {
        self.build_for(&self.network)
    }

    /// Build the integrated model for a (possibly modified) copy of the
    /// network, e.g. with a line switched out.
    pub fn build_for(&self, network: &BusNetwork) -> Result<StateSpaceModel> {
        let dynamic = network.dynamic_bus_ids();
        let coupling = kron_reduce(network, &dynamic)?;

        let mut sg_blocks = Vec::new();
        for (gid, bus) in &network.generators {
            let sp = &self.params.swing[gid];
            sg_blocks.push(PlacedBlock {
                bus: *bus,
                model: build_swing_block(gid, sp)?,
            });
        }
        let gfl = match (network.pvbess_bus, &self.params.gfl) {
            (Some(bus), Some(gp)) => Some(PlacedBlock {
                bus,
                model: build_gfl_block(gp, &self.params.operating_point)?,
            }),
            _ => None,
        };

        assemble_system(
            &sg_blocks,
            gfl.as_ref(),
            &coupling,
            &network.sensors,
            &[(network.slack, network.ext_grid_b)],
        )
    }
}

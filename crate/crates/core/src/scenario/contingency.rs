//! Contingency constructions: line-outage and sensor-scaling modes derived
//! from a base model, plus the catalog of admissible scenarios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SystemBuilder;
use crate::shs::mode::{ClassLabel, Mode, ModeLibrary};

/// Admissible sensor scaling factors: 0.50 to 1.50 in steps of 0.05 with the
/// identity excluded.
pub fn measurement_scales() -> Vec<f64> {
    (10..=30)
        .filter(|i| *i != 20)
        .map(|i| (i * 5) as f64 / 100.0)
        .collect()
}

const SCALE_TOL: f64 = 1e-9;

/// One contingency scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ContingencySpec {
    Normal,
    Physical { line_id: u32 },
    Measurement { sensor_index: usize, scale: f64 },
}

impl ContingencySpec {
    pub fn class(&self) -> ClassLabel {
        match self {
            ContingencySpec::Normal => ClassLabel::Normal,
            ContingencySpec::Physical { .. } => ClassLabel::Physical,
            ContingencySpec::Measurement { .. } => ClassLabel::Measurement,
        }
    }
}

/// Line-outage contingency: rebuild the model with the line switched out.
/// The output matrix is untouched; only the dynamics change.
pub fn apply_physical(
    base: &Mode,
    builder: &SystemBuilder,
    line_id: u32,
) -> Result<Mode> {
    let cut = builder.network.without_line(line_id)?;
    let model = builder.build_for(&cut)?;
    debug_assert_eq!(model.c, base.model.c);
    Ok(Mode {
        id: base.id,
        class_label: ClassLabel::Physical,
        model,
        description: format!("line {line_id} out"),
    })
}

/// Sensor-scaling contingency: multiply one output row by `scale`; the
/// dynamics matrices are shared with the base bit-for-bit.
pub fn apply_measurement(base: &Mode, sensor_index: usize, scale: f64) -> Result<Mode> {
    if sensor_index >= base.model.p() {
        return Err(Error::Validation(format!(
            "sensor index {sensor_index} out of range for {} outputs",
            base.model.p()
        )));
    }
    if (scale - 1.0).abs() < SCALE_TOL {
        return Err(Error::Validation(
            "scale 1.00 is the identity, not a contingency".into(),
        ));
    }
    if !measurement_scales()
        .iter()
        .any(|s| (s - scale).abs() < SCALE_TOL)
    {
        return Err(Error::Validation(format!(
            "scale {scale} outside the admissible set [0.50, 1.50] step 0.05"
        )));
    }
    let mut model = base.model.clone();
    for j in 0..model.c.ncols() {
        model.c[(sensor_index, j)] *= scale;
    }
    Ok(Mode {
        id: base.id,
        class_label: ClassLabel::Measurement,
        model,
        description: format!("sensor {sensor_index} x{scale:.2}"),
    })
}

/// Relative tolerance deciding whether an outage changed the dynamics at all.
/// LU round-off in the reduction reaches ~1e-13 relative; genuine topology
/// changes sit many orders above it.
const DEGENERATE_TOL: f64 = 1e-9;

/// Precomputed set of every admissible contingency mode for one system.
///
/// Physical admissibility is decided once here. A line outage is excluded
/// when it islands a dynamic bus from the slack (generation would fail), and
/// when it leaves (A, B) unchanged, e.g. dropping a load-only leaf: such an
/// outage is indistinguishable from Normal for every possible detector, so it
/// cannot carry a Physical label.
#[derive(Debug, Clone)]
pub struct ContingencyCatalog {
    pub builder: SystemBuilder,
    pub base: Mode,
    pub admissible_lines: Vec<u32>,
    pub scales: Vec<f64>,
    modes: Vec<Mode>,
}

impl ContingencyCatalog {
    pub fn build(builder: SystemBuilder) -> Result<Self> {
        let base_model = builder.build()?;
        if !base_model.is_hurwitz() {
            return Err(Error::Validation(format!(
                "integrated base model is not Hurwitz (spectral abscissa {:.3e})",
                base_model.spectral_abscissa()
            )));
        }
        let base = Mode {
            id: 0,
            class_label: ClassLabel::Normal,
            model: base_model,
            description: "nominal".into(),
        };

        let mut modes = vec![base.clone()];
        let mut admissible_lines = Vec::new();
        let mut next_id = 1u32;
        for line in builder.network.lines.iter().filter(|l| l.in_service) {
            match apply_physical(&base, &builder, line.id) {
                Ok(mut mode) => {
                    let scale = base.model.a.amax().max(base.model.b.amax());
                    let shift = (&mode.model.a - &base.model.a)
                        .amax()
                        .max((&mode.model.b - &base.model.b).amax());
                    if shift <= DEGENERATE_TOL * scale {
                        continue;
                    }
                    mode.id = next_id;
                    next_id += 1;
                    admissible_lines.push(line.id);
                    modes.push(mode);
                }
                Err(Error::Islanded { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        let scales = measurement_scales();
        for sensor in 0..base.model.p() {
            for &scale in &scales {
                let mut mode = apply_measurement(&base, sensor, scale)?;
                mode.id = next_id;
                next_id += 1;
                modes.push(mode);
            }
        }
        Ok(Self {
            builder,
            base,
            admissible_lines,
            scales,
            modes,
        })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn library(&self) -> Result<ModeLibrary> {
        ModeLibrary::new(self.modes.clone(), 0)
    }

    /// Resolve a contingency spec to its catalog mode.
    pub fn mode_for(&self, spec: &ContingencySpec) -> Result<&Mode> {
        match spec {
            ContingencySpec::Normal => Ok(&self.base),
            ContingencySpec::Physical { line_id } => {
                let pos = self
                    .admissible_lines
                    .iter()
                    .position(|l| l == line_id)
                    .ok_or_else(|| {
                        Error::Validation(format!("line {line_id} is not an admissible outage"))
                    })?;
                Ok(&self.modes[1 + pos])
            }
            ContingencySpec::Measurement {
                sensor_index,
                scale,
            } => {
                let si = self
                    .scales
                    .iter()
                    .position(|s| (s - scale).abs() < SCALE_TOL)
                    .ok_or_else(|| Error::Validation(format!("scale {scale} not admissible")))?;
                if *sensor_index >= self.base.model.p() {
                    return Err(Error::Validation(format!(
                        "sensor index {sensor_index} out of range"
                    )));
                }
                let offset = 1 + self.admissible_lines.len();
                Ok(&self.modes[offset + sensor_index * self.scales.len() + si])
            }
        }
    }
}

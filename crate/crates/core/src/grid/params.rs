//! Machine and inverter parameter sets, loaded from a TOML parameter file
//! with `[swing.<gen-id>]`, `[gfl]`, and `[operating_point]` sections.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-generator swing-equation constants (per-unit on the machine base).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwingParams {
    /// Inertia constant M (s^2/rad).
    pub m: f64,
    /// Damping coefficient D.
    #[serde(default)]
    pub d: f64,
    /// Mechanical power input set-point.
    #[serde(default)]
    pub p_in: f64,
    /// Local load.
    #[serde(default)]
    pub p_l: f64,
}

impl SwingParams {
    pub fn validate(&self) -> Result<()> {
        if self.m <= 0.0 {
            return Err(Error::Validation(format!("inertia must be > 0, got {}", self.m)));
        }
        if self.d < 0.0 {
            return Err(Error::Validation(format!("damping must be >= 0, got {}", self.d)));
        }
        Ok(())
    }
}

fn default_freq_hz() -> f64 {
    60.0
}
fn default_r_pu() -> f64 {
    0.01
}
fn default_tau_pv() -> f64 {
    0.01
}
fn default_pll_bw() -> f64 {
    400.0
}
fn default_v_base() -> f64 {
    0.48
}

/// GFL-controlled PV-BESS circuit and controller constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GflParams {
    /// Inverter-side filter inductance (H).
    pub l_f: f64,
    /// Filter capacitance (F).
    pub c_f: f64,
    /// Grid-side inductance (H).
    pub l_g: f64,
    /// PLL PI gains.
    pub kp_pll: f64,
    pub ki_pll: f64,
    /// PLL frequency-estimate filter bandwidth (rad/s).
    #[serde(default = "default_pll_bw")]
    pub pll_bw: f64,
    /// Outer power-loop PI gains (shared by P and Q loops).
    pub kp_pq: f64,
    pub ki_pq: f64,
    /// Inner current-loop PI gains.
    pub kp_c: f64,
    pub ki_c: f64,
    /// DC-link capacitance (F).
    pub c_dc: f64,
    /// Battery-branch capacitances (F).
    pub c_b: f64,
    pub c_s: f64,
    /// PV array small-signal conductance (pu).
    pub g_pv: f64,
    /// Rated power (MVA).
    pub s_rated_mva: f64,
    /// Inverter AC voltage base (kV).
    #[serde(default = "default_v_base")]
    pub v_base_kv: f64,
    /// Nominal frequency (Hz).
    #[serde(default = "default_freq_hz")]
    pub freq_hz: f64,
    /// Parasitic/series resistances (pu).
    #[serde(default = "default_r_pu")]
    pub r_f: f64,
    #[serde(default = "default_r_pu")]
    pub r_g: f64,
    #[serde(default = "default_r_pu")]
    pub r_b: f64,
    #[serde(default = "default_r_pu")]
    pub r_s: f64,
    /// Boost-stage current time constant (s).
    #[serde(default = "default_tau_pv")]
    pub tau_pv: f64,
}

impl GflParams {
    pub fn validate(&self) -> Result<()> {
        let physical = [
            ("l_f", self.l_f),
            ("c_f", self.c_f),
            ("l_g", self.l_g),
            ("c_dc", self.c_dc),
            ("c_b", self.c_b),
            ("c_s", self.c_s),
            ("g_pv", self.g_pv),
            ("s_rated_mva", self.s_rated_mva),
            ("v_base_kv", self.v_base_kv),
            ("freq_hz", self.freq_hz),
            ("r_f", self.r_f),
            ("r_g", self.r_g),
            ("r_b", self.r_b),
            ("r_s", self.r_s),
            ("tau_pv", self.tau_pv),
            ("pll_bw", self.pll_bw),
        ];
        for (name, v) in physical {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Validation(format!(
                    "gfl parameter {name} must be > 0, got {v}"
                )));
            }
        }
        let gains = [
            ("kp_pll", self.kp_pll),
            ("ki_pll", self.ki_pll),
            ("kp_pq", self.kp_pq),
            ("ki_pq", self.ki_pq),
            ("kp_c", self.kp_c),
            ("ki_c", self.ki_c),
        ];
        for (name, v) in gains {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Validation(format!(
                    "gfl gain {name} must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.freq_hz
    }

    /// Impedance base on the inverter rating (ohm).
    pub fn z_base(&self) -> f64 {
        self.v_base_kv * self.v_base_kv / self.s_rated_mva
    }
}

/// Linearization operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// PCC voltage magnitude (pu).
    pub v_mag: f64,
    /// PCC voltage angle (rad).
    #[serde(default)]
    pub v_angle: f64,
    /// Active power set-point (pu of rating).
    pub p_set: f64,
    /// Reactive power set-point (pu of rating).
    #[serde(default)]
    pub q_set: f64,
}

impl OperatingPoint {
    pub fn validate(&self) -> Result<()> {
        if self.v_mag <= 0.0 {
            return Err(Error::Validation("operating-point voltage must be > 0".into()));
        }
        Ok(())
    }

    /// d-axis current at the operating point.
    pub fn i_td0(&self) -> f64 {
        self.p_set / self.v_mag
    }

    /// q-axis current at the operating point.
    pub fn i_tq0(&self) -> f64 {
        -self.q_set / self.v_mag
    }
}

/// Full parameter document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub swing: BTreeMap<String, SwingParams>,
    pub gfl: Option<GflParams>,
    pub operating_point: OperatingPoint,
}

impl ParamSet {
    pub fn validate(&self) -> Result<()> {
        for (gid, sp) in &self.swing {
            sp.validate()
                .map_err(|e| Error::Validation(format!("swing.{gid}: {e}")))?;
        }
        if let Some(gfl) = &self.gfl {
            gfl.validate()?;
        }
        self.operating_point.validate()
    }
}

pub fn load_params(text: &str) -> Result<ParamSet> {
    let set: ParamSet = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    set.validate()?;
    Ok(set)
}

pub fn load_params_file(path: &Path) -> Result<ParamSet> {
    load_params(&std::fs::read_to_string(path)?)
}

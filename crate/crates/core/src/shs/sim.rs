//! Detection-window timing and sampled trajectory simulation.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::shs::mode::Mode;
use crate::shs::momi::RationalInput;
use crate::shs::zoh::discretize_zoh;

/// Contingency-cycle timing: each cycle of length `tau` opens with a
/// detection window `tau0` sampled every `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionSchedule {
    pub tau: f64,
    pub tau0: f64,
    pub dt: f64,
}

impl DetectionSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0 && self.tau0 < self.tau) {
            return Err(Error::Validation(format!(
                "need 0 < tau0 < tau, got tau0 = {}, tau = {}",
                self.tau0, self.tau
            )));
        }
        if self.dt <= 0.0 {
            return Err(Error::Validation("sample interval must be > 0".into()));
        }
        let s = self.tau0 / self.dt;
        if (s - s.round()).abs() > 1e-9 || s.round() < 1.0 {
            return Err(Error::Validation(format!(
                "tau0/dt must be a positive integer, got {s}"
            )));
        }
        Ok(())
    }

    /// Samples per detection window.
    pub fn samples(&self) -> usize {
        (self.tau0 / self.dt).round() as usize
    }

    /// True when the detection window is not small compared to the cycle;
    /// callers may warn on this.
    pub fn window_is_large(&self) -> bool {
        self.tau0 > self.tau / 2.0
    }
}

impl Default for DetectionSchedule {
    fn default() -> Self {
        // 30 ms window sampled at 1 kHz inside a 300 ms cycle.
        Self {
            tau: 0.3,
            tau0: 0.03,
            dt: 0.001,
        }
    }
}

/// Zero-mean Gaussian disturbance levels; zero disables a source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Process noise std per state per step.
    pub process_std: f64,
    /// Measurement noise std per output per step.
    pub meas_std: f64,
    /// Initial-condition perturbation std (used where windows are seeded).
    pub x0_std: f64,
}

impl NoiseSpec {
    pub const OFF: NoiseSpec = NoiseSpec {
        process_std: 0.0,
        meas_std: 0.0,
        x0_std: 0.0,
    };
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            process_std: 1e-9,
            meas_std: 1e-5,
            x0_std: 1e-8,
        }
    }
}

/// Input over one detection window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InputSignal {
    Zero,
    /// Constant amplitude on one channel.
    Step { channel: usize, amplitude: f64 },
    /// A rational input realized as a sampled signal on its channel.
    Rational(RationalInput),
}

impl InputSignal {
    /// Materialize as an S x m matrix of per-sample values.
    pub fn realize(&self, inputs: usize, schedule: &DetectionSchedule) -> Result<DMatrix<f64>> {
        let s = schedule.samples();
        let mut u = DMatrix::zeros(s, inputs);
        match self {
            InputSignal::Zero => {}
            InputSignal::Step { channel, amplitude } => {
                if *channel >= inputs {
                    return Err(Error::Dimension(format!(
                        "input channel {channel} out of range for {inputs} inputs"
                    )));
                }
                for k in 0..s {
                    u[(k, *channel)] = *amplitude;
                }
            }
            InputSignal::Rational(r) => {
                if r.channel >= inputs {
                    return Err(Error::Dimension(format!(
                        "input channel {} out of range for {inputs} inputs",
                        r.channel
                    )));
                }
                let sig = r.realize(schedule.dt, s)?;
                for (k, v) in sig.iter().enumerate() {
                    u[(k, r.channel)] = *v;
                }
            }
        }
        Ok(u)
    }
}

/// Sampled states and outputs over one detection window; row k is sample k.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
}

/// Simulate one detection window of a mode under ZOH sampling:
/// x[k+1] = A_d x[k] + B_d u[k] + w[k], y[k] = C x[k] + v[k].
///
/// Noise draw order per step is measurement first, then process, so modes
/// differing only in C see identical state disturbances under the same seed.
pub fn simulate(
    mode: &Mode,
    x0: &DVector<f64>,
    input: &InputSignal,
    schedule: &DetectionSchedule,
    noise: &NoiseSpec,
    rng_seed: u64,
) -> Result<Trajectory> {
    schedule.validate()?;
    let n = mode.model.n();
    let p = mode.model.p();
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "x0 has length {}, expected {n}",
            x0.len()
        )));
    }
    let discrete = discretize_zoh(&mode.model, schedule.dt)?;
    let u = input.realize(mode.model.m(), schedule)?;
    let s = schedule.samples();

    let mut rng = stream_rng(rng_seed, 0);
    let meas = if noise.meas_std > 0.0 {
        Some(Normal::new(0.0, noise.meas_std).map_err(|e| Error::Numeric(e.to_string()))?)
    } else {
        None
    };
    let proc = if noise.process_std > 0.0 {
        Some(Normal::new(0.0, noise.process_std).map_err(|e| Error::Numeric(e.to_string()))?)
    } else {
        None
    };

    let mut states = DMatrix::zeros(s, n);
    let mut outputs = DMatrix::zeros(s, p);
    let mut x = x0.clone();
    for k in 0..s {
        states.row_mut(k).copy_from(&x.transpose());
        let mut y = &discrete.c * &x;
        if let Some(dist) = &meas {
            for v in y.iter_mut() {
                *v += dist.sample(&mut rng);
            }
        }
        outputs.row_mut(k).copy_from(&y.transpose());

        let mut next = &discrete.a_d * &x + &discrete.b_d * u.row(k).transpose();
        if let Some(dist) = &proc {
            for v in next.iter_mut() {
                *v += dist.sample(&mut rng);
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("state diverged at sample {k}")));
        }
        x = next;
    }
    Ok(Trajectory { states, outputs })
}

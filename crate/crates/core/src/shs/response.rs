//! Precomputed per-mode expected responses and the residual-matching
//! baseline classifier.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::shs::mode::ModeLibrary;
use crate::shs::sim::{simulate, DetectionSchedule, InputSignal, NoiseSpec};

/// Expected noiseless output trajectories, one per mode, all generated from a
/// single shared (input, x0, schedule).
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseLibrary {
    /// (mode id, expected S x p output trajectory), in library order.
    pub responses: Vec<(u32, DMatrix<f64>)>,
    pub input: InputSignal,
    pub schedule: DetectionSchedule,
    pub x0: DVector<f64>,
}

impl ResponseLibrary {
    /// Smallest pairwise L2 distance between expected responses; a
    /// distinguishability diagnostic (0 means two modes are degenerate).
    pub fn min_pairwise_gap(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.responses.len() {
            for j in i + 1..self.responses.len() {
                let d = (&self.responses[i].1 - &self.responses[j].1).norm();
                min = min.min(d);
            }
        }
        min
    }

    /// Smallest L2 distance between responses of modes with different class
    /// labels. Zero-gap pairs inside one class (e.g. two outages reducing to
    /// the same network) are harmless for classification; a zero here means a
    /// contingency class is indistinguishable from another.
    pub fn min_cross_class_gap(&self, library: &ModeLibrary) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.responses.len() {
            for j in i + 1..self.responses.len() {
                let ci = library.get(self.responses[i].0).map(|m| m.class_label);
                let cj = library.get(self.responses[j].0).map(|m| m.class_label);
                if let (Some(ci), Some(cj)) = (ci, cj) {
                    if ci == cj {
                        continue;
                    }
                }
                let d = (&self.responses[i].1 - &self.responses[j].1).norm();
                min = min.min(d);
            }
        }
        min
    }
}

/// Simulate every mode noiselessly under a shared excitation.
pub fn expected_responses(
    library: &ModeLibrary,
    input: &InputSignal,
    x0: &DVector<f64>,
    schedule: &DetectionSchedule,
) -> Result<ResponseLibrary> {
    let mut responses = Vec::with_capacity(library.len());
    for mode in library.modes() {
        let traj = simulate(mode, x0, input, schedule, &NoiseSpec::OFF, 0)?;
        responses.push((mode.id, traj.outputs));
    }
    Ok(ResponseLibrary {
        responses,
        input: input.clone(),
        schedule: *schedule,
        x0: x0.clone(),
    })
}

/// Model-matching baseline: return the mode id minimizing the summed squared
/// output residual. Ties break toward the lowest mode id.
pub fn residual_classify(window_outputs: &DMatrix<f64>, library: &ResponseLibrary) -> Result<u32> {
    let mut best: Option<(u32, f64)> = None;
    for (id, expected) in &library.responses {
        if expected.shape() != window_outputs.shape() {
            return Err(Error::Dimension(format!(
                "window is {:?} but expected responses are {:?}",
                window_outputs.shape(),
                expected.shape()
            )));
        }
        let residual = (window_outputs - expected).norm_squared();
        let better = match best {
            None => true,
            Some((best_id, best_res)) => {
                residual < best_res || (residual == best_res && *id < best_id)
            }
        };
        if better {
            best = Some((*id, residual));
        }
    }
    best.map(|(id, _)| id)
        .ok_or_else(|| Error::Validation("empty response library".into()))
}

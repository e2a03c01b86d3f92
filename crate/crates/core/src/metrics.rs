//! Evaluation metrics against ground truth.

use crate::error::{Error, Result};
use crate::io::{Trajectory, TrajectoryRecord};
use crate::so3::Rotation;

/// RMS over batches of `d∠(R̃_Δ, R*_Δ) / Δ`, in deg/s.
pub fn rms_velocity_error(estimates: &[Rotation], truth: &[Rotation], deltas: &[f64]) -> Result<f64> {
    if estimates.len() != truth.len() || estimates.len() != deltas.len() {
        return Err(Error::Data(format!(
            "length mismatch: {} estimates, {} truths, {} intervals",
            estimates.len(),
            truth.len(),
            deltas.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::InsufficientData("no batches to evaluate".into()));
    }
    let mut sum = 0.0;
    for ((e, t), &d) in estimates.iter().zip(truth).zip(deltas) {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Data(format!("non-positive interval {d}")));
        }
        let rate = e.geodesic_distance(t).to_degrees() / d;
        sum += rate * rate;
    }
    Ok((sum / estimates.len() as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrientationError {
    pub times: Vec<f64>,
    /// Per-sample geodesic error (deg).
    pub errors: Vec<f64>,
    pub mean: f64,
}

/// Error of `estimate` against `truth` after aligning their first common
/// sample: `R'_t = R̃_t R̃_{t₀}ᵀ R*_{t₀}`. Samples outside the ground-truth span
/// are ignored.
pub fn absolute_orientation_error(estimate: &[TrajectoryRecord], truth: &Trajectory) -> Result<OrientationError> {
    let samples: Vec<&TrajectoryRecord> = estimate.iter().filter(|r| truth.contains(r.t)).collect();
    let Some(first) = samples.first() else {
        return Err(Error::InsufficientData(
            "estimate and ground truth do not overlap in time".into(),
        ));
    };
    let align = first.orientation.inverse() * truth.orientation_at(first.t)?;
    let mut times = Vec::with_capacity(samples.len());
    let mut errors = Vec::with_capacity(samples.len());
    for r in samples {
        let gt = truth.orientation_at(r.t)?;
        times.push(r.t);
        errors.push((r.orientation * align).geodesic_distance(&gt).to_degrees());
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(OrientationError { times, errors, mean })
}

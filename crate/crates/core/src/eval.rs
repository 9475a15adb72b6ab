//! Extrapolation from the last observed frame and its error metrics.

use serde::{Deserialize, Serialize};

use crate::dynamics::{rollout_all, IntegrationOrder, ParamSource, RigidParticle, RolloutMode, RolloutSettings};
use crate::error::{Error, Result};
use crate::scenes::TrajectoryDataset;

/// Errors `step` frames after the rollout start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonError {
    pub step: usize,
    pub t: f64,
    /// Root mean square position error over particles (m).
    pub rmse: f64,
    /// Mean geodesic orientation error (rad), when orientations are observed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotation_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationMetrics {
    pub start_frame: usize,
    pub horizons: Vec<HorizonError>,
    pub mean_rmse: f64,
    pub final_rmse: f64,
    pub scene_diameter: f64,
}

/// Predicted states of every particle, `result[k][id]` at `start + k·stride` frames.
pub fn extrapolate(
    ds: &TrajectoryDataset,
    source: &dyn ParamSource,
    start_frame: usize,
    n_steps: usize,
    stride: usize,
    mode: RolloutMode,
    order: IntegrationOrder,
) -> Result<Vec<Vec<RigidParticle>>> {
    if start_frame >= ds.n_frames() {
        return Err(Error::MalformedData(format!("start frame {start_frame} beyond {} frames", ds.n_frames())));
    }
    if stride == 0 {
        return Err(Error::InvalidConfig("rollout stride must be at least one frame".into()));
    }
    let settings = RolloutSettings { t0: ds.times[start_frame], n_steps, dt: stride as f64 * ds.frame_interval(), mode, order };
    let per_particle = rollout_all(&ds.frame_particles(start_frame), source, &settings)?;
    Ok((0..=n_steps).map(|k| per_particle.iter().map(|states| states[k]).collect()).collect())
}

/// Compares `predicted[k]` with the observed frame `start_frame + k·stride` for `k ≥ 1`.
pub fn score_extrapolation(ds: &TrajectoryDataset, predicted: &[Vec<RigidParticle>], start_frame: usize, stride: usize) -> Result<ExtrapolationMetrics> {
    let n_steps = predicted.len().saturating_sub(1);
    if start_frame + n_steps * stride >= ds.n_frames() {
        return Err(Error::MalformedData(format!(
            "cannot score {n_steps} steps from frame {start_frame}: dataset has {} frames",
            ds.n_frames()
        )));
    }
    let mut horizons = Vec::with_capacity(n_steps);
    for (k, frame) in predicted.iter().enumerate().skip(1) {
        let f = start_frame + k * stride;
        if frame.len() != ds.n_particles() {
            return Err(Error::DimensionMismatch { what: "predicted particles", expected: ds.n_particles(), got: frame.len() });
        }
        let sq: f64 = frame.iter().zip(&ds.positions[f]).map(|(p, x)| (p.position - *x).norm_squared()).sum();
        let rotation_error = ds.orientations.as_ref().map(|o| {
            frame.iter().zip(&o[f]).map(|(p, q)| p.orientation.angle_to(q)).sum::<f64>() / frame.len() as f64
        });
        horizons.push(HorizonError { step: k, t: ds.times[f], rmse: (sq / frame.len() as f64).sqrt(), rotation_error });
    }
    let mean_rmse = if horizons.is_empty() { 0.0 } else { horizons.iter().map(|h| h.rmse).sum::<f64>() / horizons.len() as f64 };
    let final_rmse = horizons.last().map_or(0.0, |h| h.rmse);
    Ok(ExtrapolationMetrics { start_frame, horizons, mean_rmse, final_rmse, scene_diameter: ds.diameter() })
}

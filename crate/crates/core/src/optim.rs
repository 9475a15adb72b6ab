//! Fitting a dynamics field to observed trajectories with Adam.
//!
//! A training sample starts from an observed state at `t′` and predicts the
//! state at `t = t′ + Δt` by stepping the dynamics; the loss compares the
//! prediction with the observation at `t`. Gradients are exact: they flow
//! back through every integrator step, through parameter propagation and
//! into the field weights.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::grad::{add_params, propagate_adjoint, step_backward, step_forward, StepTape};
use crate::dynamics::{propagate_params, DynamicsParams, IntegrationOrder, ParamSource, RolloutMode};
use crate::error::{Error, Result};
use crate::eval::{extrapolate, score_extrapolation, ExtrapolationMetrics};
use crate::field::{DynamicsField, FieldTape, ParamLayout, Parametrization};
use crate::geometry::{Quaternion, UnitQuaternion, Vec3};
use crate::scenes::TrajectoryDataset;

/// Default learning rate of a parameter table.
pub const TABLE_LEARNING_RATE: f64 = 3e-2;
/// Default learning rate of a network field.
pub const MLP_LEARNING_RATE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// `(t′, t′ + Δt)` pairs over the whole training range.
    #[default]
    Pairs,
    /// Every target is reached by rolling out from the first frame.
    FromOrigin,
}

impl std::fmt::Display for Supervision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Supervision::Pairs => "pairs",
            Supervision::FromOrigin => "from_origin",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Training pairs are `dt_multiple` frames apart.
    pub dt_multiple: usize,
    pub order: IntegrationOrder,
    /// `None` picks the backend default.
    pub learning_rate: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub iterations: usize,
    /// Samples per Adam step; 0 uses every sample.
    pub batch_size: usize,
    pub lambda_pos: f64,
    pub lambda_rot: f64,
    pub mode: RolloutMode,
    pub parametrization: Parametrization,
    pub supervision: Supervision,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            dt_multiple: 2,
            order: IntegrationOrder::Second,
            learning_rate: None,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            iterations: 2000,
            batch_size: 0,
            lambda_pos: 1.0,
            lambda_rot: 0.1,
            mode: RolloutMode::Derive,
            parametrization: Parametrization::Equivalent,
            supervision: Supervision::Pairs,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.dt_multiple == 0 {
            return bad("dt_multiple must be at least 1".into());
        }
        if !(self.lambda_pos >= 0.0 && self.lambda_rot >= 0.0) || self.lambda_pos + self.lambda_rot <= 0.0 {
            return bad(format!("loss weights must be non-negative with a positive sum (got {}, {})", self.lambda_pos, self.lambda_rot));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("learning_rate must be positive, got {lr}"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("Adam needs beta1, beta2 in [0, 1) and epsilon > 0".into());
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.order, self.parametrization)
    }

    pub fn adam(&self, field: &DynamicsField) -> AdamConfig {
        let default = match field {
            DynamicsField::Table(_) => TABLE_LEARNING_RATE,
            DynamicsField::Mlp { .. } => MLP_LEARNING_RATE,
        };
        AdamConfig { learning_rate: self.learning_rate.unwrap_or(default), beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }
}

/// One bias-corrected Adam update of `weights`.
pub fn adam_step(state: &mut AdamState, weights: &mut [f64], grads: &[f64], cfg: &AdamConfig) -> Result<()> {
    if weights.len() != grads.len() || state.m.len() != weights.len() {
        return Err(Error::DimensionMismatch { what: "Adam buffers", expected: weights.len(), got: grads.len().min(state.m.len()) });
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    state.step += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for (((w, g), m), v) in weights.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        *w -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// An observed particle state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub position: Vec3,
    pub orientation: Option<UnitQuaternion>,
}

/// Supervision from the observed state at `t_start` to the one at `t_end`,
/// reached in `n_steps` equal integrator steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairSample {
    pub id: usize,
    pub t_start: f64,
    pub start: Observation,
    pub t_end: f64,
    pub target: Observation,
    pub n_steps: usize,
}

fn observation(ds: &TrajectoryDataset, frame: usize, id: usize) -> Observation {
    Observation { position: ds.positions[frame][id], orientation: ds.orientations.as_ref().map(|o| o[frame][id]) }
}

/// Every training sample of `ds` under `cfg`, ordered by `(id, t_start, t_end)`.
pub fn training_samples(ds: &TrajectoryDataset, cfg: &FitConfig) -> Vec<PairSample> {
    let m = cfg.dt_multiple;
    let last = ds.split.min(ds.n_frames()).saturating_sub(1);
    let mut samples = Vec::new();
    for id in 0..ds.n_particles() {
        match cfg.supervision {
            Supervision::Pairs => {
                for k in 0..(last + 1).saturating_sub(m) {
                    samples.push(PairSample {
                        id,
                        t_start: ds.times[k],
                        start: observation(ds, k, id),
                        t_end: ds.times[k + m],
                        target: observation(ds, k + m, id),
                        n_steps: 1,
                    });
                }
            }
            Supervision::FromOrigin => {
                for j in 1..=last / m {
                    samples.push(PairSample {
                        id,
                        t_start: ds.times[0],
                        start: observation(ds, 0, id),
                        t_end: ds.times[j * m],
                        target: observation(ds, j * m, id),
                        n_steps: j,
                    });
                }
            }
        }
    }
    samples
}

/// Squared geodesic angle between `q` (any scale) and the unit `target`,
/// and its gradient wrt `q`.
fn rotation_loss(q: &Quaternion, target: &UnitQuaternion) -> (f64, Quaternion) {
    let d = q.hamilton(target.inverse().quaternion());
    let v = d.vector();
    let n = v.norm();
    let aw = d.w.abs();
    let r2 = n * n + aw * aw;
    let theta = 2.0 * n.atan2(aw);
    // θ/n stays finite as n → 0; use its series there.
    let theta_over_n = if n < 1e-6 * aw {
        let r = n / aw;
        2.0 / aw * (1.0 - r * r / 3.0)
    } else {
        theta / n
    };
    let g_vec = v * (4.0 * aw / r2 * theta_over_n);
    let g_w = -4.0 * theta * n / r2 * d.w.signum();
    let g_d = Quaternion::new(g_w, g_vec.x, g_vec.y, g_vec.z);
    (theta * theta, g_d.hamilton(target.quaternion()))
}

/// Loss of one sample; accumulates its weight gradient into `grad` if given.
fn sample_loss(field: &DynamicsField, s: &PairSample, cfg: &FitConfig, grad: Option<&mut [f64]>) -> Result<f64> {
    let order = cfg.order;
    let n = s.n_steps.max(1);
    let dt = (s.t_end - s.t_start) / n as f64;
    let target_q = if cfg.lambda_rot > 0.0 {
        Some(s.target.orientation.ok_or(Error::MissingOrientation)?)
    } else {
        None
    };
    let q_start = match (target_q, s.start.orientation) {
        (Some(_), None) => return Err(Error::MissingOrientation),
        (_, q) => q.unwrap_or(UnitQuaternion::IDENTITY),
    };
    let anchor = match cfg.mode {
        RolloutMode::Derive => field.anchor_time(),
        RolloutMode::Requery => None,
    };

    let mut x = s.start.position;
    let mut q = *q_start.quaternion();
    let mut steps: Vec<StepTape> = Vec::with_capacity(n);
    let mut queries: Vec<FieldTape> = Vec::with_capacity(if cfg.mode == RolloutMode::Derive { 1 } else { n });
    match cfg.mode {
        RolloutMode::Derive => {
            let (stored, tape) = field.forward(s.id, x, s.t_start)?;
            queries.push(tape);
            let mut p = match anchor {
                Some(a) => propagate_params(&stored, s.t_start - a, order)?,
                None => stored,
            };
            for k in 0..n {
                let (x1, q1, tape) = step_forward(x, &q, &p, dt, order)?;
                steps.push(tape);
                (x, q) = (x1, q1);
                if k + 1 < n {
                    p = propagate_params(&p, dt, order)?;
                }
            }
        }
        RolloutMode::Requery => {
            for k in 0..n {
                let (p, tape) = field.forward(s.id, x, s.t_start + k as f64 * dt)?;
                queries.push(tape);
                let (x1, q1, tape) = step_forward(x, &q, &p, dt, order)?;
                steps.push(tape);
                (x, q) = (x1, q1);
            }
        }
    }

    let residual = x - s.target.position;
    let mut loss = cfg.lambda_pos * residual.norm_squared();
    let mut gx = residual * (2.0 * cfg.lambda_pos);
    let mut gq = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    if let Some(target) = target_q {
        let (l, g) = rotation_loss(&q, &target);
        loss += cfg.lambda_rot * l;
        gq = Quaternion::new(g.w * cfg.lambda_rot, g.x * cfg.lambda_rot, g.y * cfg.lambda_rot, g.z * cfg.lambda_rot);
    }
    let Some(grad) = grad else { return Ok(loss) };

    match cfg.mode {
        RolloutMode::Derive => {
            // g_params holds dL/dp_k, collecting contributions of later steps through propagation.
            let mut g_params = DynamicsParams::zeros(order);
            for k in (0..n).rev() {
                let (gx0, gq0, gp) = step_backward(&steps[k], gx, &gq);
                if k + 1 < n {
                    g_params = propagate_adjoint(&g_params, dt, order);
                }
                add_params(&mut g_params, &gp);
                (gx, gq) = (gx0, gq0);
            }
            if let Some(a) = anchor {
                g_params = propagate_adjoint(&g_params, s.t_start - a, order);
            }
            field.backward(&queries[0], &g_params, grad)?;
        }
        RolloutMode::Requery => {
            for k in (0..n).rev() {
                let (gx0, gq0, gp) = step_backward(&steps[k], gx, &gq);
                gx = gx0 + field.backward(&queries[k], &gp, grad)?;
                gq = gq0;
            }
        }
    }
    Ok(loss)
}

/// Loss of one sample and its gradient wrt every field weight.
pub fn pair_loss(sample: &PairSample, field: &DynamicsField, cfg: &FitConfig) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; field.weights().len()];
    let loss = sample_loss(field, sample, cfg, Some(&mut grad))?;
    Ok((loss, grad))
}

/// Loss of one sample without gradients.
pub fn sample_loss_value(sample: &PairSample, field: &DynamicsField, cfg: &FitConfig) -> Result<f64> {
    sample_loss(field, sample, cfg, None)
}

/// Mean loss over `samples` and its gradient, written into `grad`.
///
/// Samples are split into chunks fixed by the batch length alone and the
/// chunk sums are added in order, so the result does not depend on the
/// number of worker threads.
fn batch_loss(field: &DynamicsField, samples: &[PairSample], cfg: &FitConfig, grad: &mut [f64]) -> Result<f64> {
    let chunk = samples.len().div_ceil(16).max(64);
    let n_weights = grad.len();
    let parts: Vec<Result<(f64, Vec<f64>)>> = samples
        .par_chunks(chunk)
        .map(|c| {
            let mut g = vec![0.0; n_weights];
            let mut loss = 0.0;
            for s in c {
                loss += sample_loss(field, s, cfg, Some(&mut g))?;
            }
            Ok((loss, g))
        })
        .collect();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut total = 0.0;
    for part in parts {
        let (loss, g) = part?;
        total += loss;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let scale = 1.0 / samples.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(total * scale)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Batch loss before each Adam step.
    pub loss_history: Vec<f64>,
    pub n_samples: usize,
    pub learning_rate: f64,
    pub wall_clock_s: f64,
}

fn check_compatible(ds: &TrajectoryDataset, field: &DynamicsField, cfg: &FitConfig) -> Result<()> {
    cfg.validate()?;
    if field.layout() != cfg.layout() {
        return Err(Error::InvalidConfig(format!(
            "field has order {} / {} parametrization but the fit asks for order {} / {}",
            field.layout().order,
            field.layout().parametrization,
            cfg.order,
            cfg.parametrization
        )));
    }
    if let DynamicsField::Table(t) = field {
        if t.len() != ds.n_particles() {
            return Err(Error::DimensionMismatch { what: "parameter table rows", expected: ds.n_particles(), got: t.len() });
        }
    }
    if ds.n_frames() < 2 {
        return Err(Error::MalformedData(format!("fitting needs at least 2 frames, dataset has {}", ds.n_frames())));
    }
    if cfg.lambda_rot > 0.0 && ds.orientations.is_none() {
        return Err(Error::MissingOrientation);
    }
    Ok(())
}

/// Fits `field` to the training frames of `ds`.
pub fn fit(ds: &TrajectoryDataset, field: &mut DynamicsField, cfg: &FitConfig) -> Result<FitReport> {
    check_compatible(ds, field, cfg)?;
    let adam = cfg.adam(field);
    let start = Instant::now();
    let samples = training_samples(ds, cfg);
    let mut report = FitReport { loss_history: Vec::with_capacity(cfg.iterations), n_samples: samples.len(), learning_rate: adam.learning_rate, wall_clock_s: 0.0 };
    if cfg.iterations == 0 {
        return Ok(report);
    }
    if samples.is_empty() {
        return Err(Error::MalformedData(format!(
            "no training pairs: {} training frames with dt_multiple {}",
            ds.split, cfg.dt_multiple
        )));
    }
    let batch = if cfg.batch_size == 0 { samples.len() } else { cfg.batch_size.min(samples.len()) };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = samples.len();
    let mut state = AdamState::new(field.weights().len());
    let mut grad = vec![0.0; field.weights().len()];
    let mut batch_samples = Vec::with_capacity(batch);
    for iteration in 0..cfg.iterations {
        if batch == samples.len() {
            batch_samples.clear();
            batch_samples.extend_from_slice(&samples);
        } else {
            if cursor + batch > order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let mut idx = order[cursor..cursor + batch].to_vec();
            cursor += batch;
            // `samples` is sorted by particle id, so sorted indices reduce in id order.
            idx.sort_unstable();
            batch_samples.clear();
            batch_samples.extend(idx.iter().map(|&i| samples[i]));
        }
        let loss = batch_loss(field, &batch_samples, cfg, &mut grad)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration, loss });
        }
        report.loss_history.push(loss);
        adam_step(&mut state, field.weights_mut(), &grad, &adam)?;
    }
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Mean training loss of `field` over all samples of `ds`.
pub fn mean_loss(ds: &TrajectoryDataset, field: &DynamicsField, cfg: &FitConfig) -> Result<f64> {
    let samples = training_samples(ds, cfg);
    if samples.is_empty() {
        return Ok(0.0);
    }
    let losses: Vec<Result<f64>> = samples.par_iter().map(|s| sample_loss(field, s, cfg, None)).collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / samples.len() as f64)
}

/// Anchor time of a fresh parameter table: the middle of the training
/// frames, where time-shifted parameters are least correlated.
pub fn table_anchor(ds: &TrajectoryDataset) -> f64 {
    let last = ds.split.clamp(1, ds.n_frames()) - 1;
    0.5 * (ds.times[0] + ds.times[last])
}

/// Outcome of one window of continual fitting.
#[derive(Clone, Debug)]
pub struct WindowResult {
    pub window_end: f64,
    pub train_frames: usize,
    pub field: DynamicsField,
    pub report: FitReport,
    pub metrics: ExtrapolationMetrics,
}

/// Fits growing prefixes of `ds` ending at the times in `schedule`, each
/// warm-started from the previous window, and extrapolates `ahead_frames`
/// beyond every window.
pub fn continual_fit(
    ds: &TrajectoryDataset,
    initial: &DynamicsField,
    schedule: &[f64],
    ahead_frames: usize,
    cfg: &FitConfig,
) -> Result<Vec<WindowResult>> {
    if schedule.is_empty() {
        return Err(Error::InvalidConfig("continual schedule is empty".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] > w[0])) || !(schedule[0] > 0.0) {
        return Err(Error::InvalidConfig("continual windows must be positive and increasing".into()));
    }
    let mut field = initial.clone();
    let mut results = Vec::with_capacity(schedule.len());
    for &end in schedule {
        let n = ds.times.iter().take_while(|&&t| t <= end + 1e-9).count();
        if n < 2 {
            return Err(Error::InvalidConfig(format!("window ending at {end} s holds fewer than 2 frames")));
        }
        if n - 1 + ahead_frames >= ds.n_frames() {
            return Err(Error::InvalidConfig(format!(
                "window ending at {end} s leaves no room for {ahead_frames} extrapolated frames"
            )));
        }
        let window = ds.prefix(n);
        if let DynamicsField::Table(t) = &mut field {
            t.rebase(table_anchor(&window))?;
        }
        let report = fit(&window, &mut field, cfg)?;
        let predicted = extrapolate(ds, &field, n - 1, ahead_frames, 1, cfg.mode, cfg.order)?;
        let metrics = score_extrapolation(ds, &predicted, n - 1, 1)?;
        results.push(WindowResult { window_end: end, train_frames: n, field: field.clone(), report, metrics });
    }
    Ok(results)
}

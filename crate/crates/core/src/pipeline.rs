//! End-to-end commands: each reads its inputs from disk, writes its
//! artifacts under the configured output directory and returns a report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{IntegrationOrder, RigidParticle, RolloutMode};
use crate::error::{Error, Result};
use crate::eval::{extrapolate, score_extrapolation, ExtrapolationMetrics, HorizonError};
use crate::field::{DynamicsField, MlpConfig, ParamLayout, ParamTable, Parametrization};
use crate::optim::{continual_fit, fit, table_anchor, FitConfig, FitReport, Supervision};
use crate::render::{splat_image, Camera, RenderConfig};
use crate::scenes::{format_trajectory_csv, generate_scene, parse_trajectory_csv, SceneSpec, TrajectoryDataset};
use crate::segmentation::{cluster_rigidity, dataset_features, kmeans, kmeans_auto, seg_metrics, standardize, write_labels, KMeansConfig, SegMetrics};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Bumped whenever a report layout changes.
pub const REPORT_FORMAT: u32 = 1;

/// A built-in scene by name, or a full scene description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneChoice {
    Preset(String),
    Spec(SceneSpec),
}

impl Default for SceneChoice {
    fn default() -> Self {
        SceneChoice::Preset("multipart".into())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Table,
    Mlp,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub backend: Backend,
    pub network: MlpConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub n_steps: usize,
    /// Step length (s); a whole multiple of the frame interval. Defaults to one frame.
    pub dt: Option<f64>,
    /// Defaults to the fit mode.
    pub mode: Option<RolloutMode>,
    /// Defaults to the order of the field.
    pub order: Option<IntegrationOrder>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig { n_steps: 14, dt: None, mode: None, order: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    /// Cluster count; unset runs a silhouette sweep.
    pub k: Option<usize>,
    pub standardize: bool,
    /// Feature query time (s); defaults to the last training frame.
    pub query_time: Option<f64>,
    pub kmeans: KMeansConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    pub width: u32,
    pub height: u32,
    /// Camera JSON; unset frames the scene automatically.
    pub camera: Option<PathBuf>,
    pub background: [f64; 3],
    pub near: f64,
    pub transparent: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        let r = RenderConfig::default();
        RenderSettings { width: 320, height: 240, camera: None, background: r.background, near: r.near, transparent: r.transparent }
    }
}

impl RenderSettings {
    pub fn render_config(&self) -> RenderConfig {
        RenderConfig { background: self.background, near: self.near, transparent: self.transparent }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinualConfig {
    /// Window end times as fractions of the scene duration.
    pub windows: Vec<f64>,
    /// Frames extrapolated and scored past each window.
    pub ahead_frames: usize,
}

impl Default for ContinualConfig {
    fn default() -> Self {
        ContinualConfig { windows: vec![0.15, 0.30, 0.45, 0.60, 0.75], ahead_frames: 9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub dt_multiples: Vec<usize>,
    pub orders: Vec<IntegrationOrder>,
    pub modes: Vec<RolloutMode>,
    pub parametrizations: Vec<Parametrization>,
    pub supervisions: Vec<Supervision>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            dt_multiples: vec![1, 2, 3],
            orders: IntegrationOrder::ALL.to_vec(),
            modes: vec![RolloutMode::Derive, RolloutMode::Requery],
            parametrizations: vec![Parametrization::Equivalent, Parametrization::Raw],
            supervisions: vec![Supervision::Pairs, Supervision::FromOrigin],
        }
    }
}

/// Everything a command can be configured with. `seed` drives scene
/// generation, the fit and clustering; the per-section seeds are overwritten.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneChoice,
    pub fit: FitConfig,
    pub field: FieldConfig,
    pub rollout: RolloutConfig,
    pub segmentation: SegmentConfig,
    pub render: RenderSettings,
    pub continual: ContinualConfig,
    pub ablation: AblationConfig,
    pub output: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: SceneChoice::default(),
            fit: FitConfig::default(),
            field: FieldConfig::default(),
            rollout: RolloutConfig::default(),
            segmentation: SegmentConfig::default(),
            render: RenderSettings::default(),
            continual: ContinualConfig::default(),
            ablation: AblationConfig::default(),
            output: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(cfg.normalized())
    }

    pub fn read(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        serde_json::from_str::<RunConfig>(&text)
            .map(RunConfig::normalized)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Copies the run seed into every section that has one.
    pub fn normalized(mut self) -> RunConfig {
        self.fit.seed = self.seed;
        if let SceneChoice::Spec(s) = &mut self.scene {
            s.seed = self.seed;
        }
        self
    }

    pub fn scene_spec(&self) -> Result<SceneSpec> {
        match &self.scene {
            SceneChoice::Preset(name) => SceneSpec::preset(name, self.seed),
            SceneChoice::Spec(s) => Ok(SceneSpec { seed: self.seed, ..s.clone() }),
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig { seed: self.seed, ..self.fit }
    }

    pub fn validate(&self) -> Result<()> {
        self.fit_config().validate()?;
        if let Some(dt) = self.rollout.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidConfig(format!("rollout dt must be positive, got {dt}")));
            }
        }
        if self.segmentation.k == Some(0) {
            return Err(Error::InvalidConfig("segmentation k must be at least 1".into()));
        }
        if self.render.width == 0 || self.render.height == 0 {
            return Err(Error::InvalidConfig("render resolution must be non-zero".into()));
        }
        if self.continual.windows.iter().any(|w| !(*w > 0.0 && *w <= 1.0)) {
            return Err(Error::InvalidConfig("continual windows must be fractions in (0, 1]".into()));
        }
        let a = &self.ablation;
        if a.dt_multiples.is_empty() || a.orders.is_empty() || a.modes.is_empty() || a.parametrizations.is_empty() || a.supervisions.is_empty() {
            return Err(Error::InvalidConfig("every ablation axis needs at least one value".into()));
        }
        if a.dt_multiples.contains(&0) {
            return Err(Error::InvalidConfig("ablation dt multiples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub trdyn: String,
    pub report_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Versions { trdyn: VERSION.to_string(), report_format: REPORT_FORMAT }
    }
}

/// Values that legitimately differ between identical runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub wall_clock_s: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes the configured scene to `<output>/dataset`.
pub fn cmd_generate(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let ds = generate_scene(&cfg.scene_spec()?)?;
    let dir = cfg.output.join("dataset");
    ds.write(&dir)?;
    ds.export_ply(0, &dir.join("frame_0000.ply"))?;
    Ok(dir)
}

/// A fresh field for `ds` with the configured backend.
pub fn new_field(ds: &TrajectoryDataset, cfg: &RunConfig) -> Result<DynamicsField> {
    let fit = cfg.fit_config();
    let layout = ParamLayout::new(fit.order, fit.parametrization);
    match cfg.field.backend {
        Backend::Table => Ok(DynamicsField::Table(ParamTable::zeros(ds.n_particles(), layout, table_anchor(ds)))),
        Backend::Mlp => DynamicsField::new_mlp(cfg.field.network, layout, cfg.seed),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub versions: Versions,
    pub config: RunConfig,
    pub backend: Backend,
    pub n_weights: usize,
    pub n_samples: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub final_loss: Option<f64>,
    pub loss_history: Vec<f64>,
    pub metadata: RunMetadata,
}

impl FitSummary {
    fn new(cfg: &RunConfig, field: &DynamicsField, report: &FitReport) -> FitSummary {
        FitSummary {
            versions: Versions::default(),
            config: cfg.clone(),
            backend: cfg.field.backend,
            n_weights: field.weights().len(),
            n_samples: report.n_samples,
            learning_rate: report.learning_rate,
            iterations: report.loss_history.len(),
            final_loss: report.loss_history.last().copied(),
            loss_history: report.loss_history.clone(),
            metadata: RunMetadata { wall_clock_s: report.wall_clock_s },
        }
    }
}

/// Fits a fresh field and saves it as `<output>/field.json` (plus weights).
pub fn cmd_fit(dataset: &Path, cfg: &RunConfig) -> Result<(DynamicsField, FitSummary)> {
    cfg.validate()?;
    let ds = TrajectoryDataset::read(dataset)?;
    let mut field = new_field(&ds, cfg)?;
    let report = fit(&ds, &mut field, &cfg.fit_config())?;
    ensure_dir(&cfg.output)?;
    field.save(&cfg.output.join("field.json"))?;
    let summary = FitSummary::new(cfg, &field, &report);
    write_json(&cfg.output.join("fit_report.json"), &summary)?;
    Ok((field, summary))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub versions: Versions,
    pub config: RunConfig,
    pub start_frame: usize,
    pub start_time: f64,
    pub dt: f64,
    pub mode: RolloutMode,
    pub order: IntegrationOrder,
    pub horizons: Vec<HorizonError>,
    pub mean_rmse: f64,
    pub final_rmse: f64,
    pub scene_diameter: f64,
    /// Final-horizon RMSE as a fraction of the scene diameter.
    pub relative_final_rmse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<SegMetrics>,
}

impl EvalReport {
    /// Fixed-width table of the horizons.
    pub fn summary(&self) -> String {
        let mut s = format!("{:>5} {:>9} {:>12} {:>12}\n", "step", "t", "rmse_m", "rot_rad");
        for h in &self.horizons {
            let rot = h.rotation_error.map_or("-".to_string(), |r| format!("{r:.4e}"));
            s.push_str(&format!("{:>5} {:>9.4} {:>12.4e} {:>12}\n", h.step, h.t, h.rmse, rot));
        }
        s.push_str(&format!(
            "final rmse {:.4e} m ({:.3}% of scene diameter {:.3} m), mean {:.4e} m\n",
            self.final_rmse,
            100.0 * self.relative_final_rmse,
            self.scene_diameter,
            self.mean_rmse
        ));
        s
    }
}

/// Rollout geometry resolved against a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutPlan {
    pub start_frame: usize,
    pub n_steps: usize,
    pub stride: usize,
    pub mode: RolloutMode,
    pub order: IntegrationOrder,
}

pub fn rollout_plan(ds: &TrajectoryDataset, field: &DynamicsField, cfg: &RunConfig) -> Result<RolloutPlan> {
    let frame = ds.frame_interval();
    let stride = match cfg.rollout.dt {
        None => 1,
        Some(dt) => {
            let m = (dt / frame).round();
            if m < 1.0 || (dt - m * frame).abs() > 1e-9 * dt.max(frame) {
                return Err(Error::InvalidConfig(format!("rollout dt {dt} is not a whole multiple of the frame interval {frame}")));
            }
            m as usize
        }
    };
    let order = cfg.rollout.order.unwrap_or(field.layout().order);
    if order == IntegrationOrder::Third && field.layout().order != IntegrationOrder::Third {
        return Err(Error::InvalidConfig("order-3 rollout needs an order-3 field".into()));
    }
    Ok(RolloutPlan { start_frame: ds.split - 1, n_steps: cfg.rollout.n_steps, stride, mode: cfg.rollout.mode.unwrap_or(cfg.fit.mode), order })
}

/// Predicted trajectory of `plan` plus its scores on the frames the dataset covers.
pub fn evaluate(ds: &TrajectoryDataset, field: &DynamicsField, plan: &RolloutPlan, cfg: &RunConfig) -> Result<(Vec<Vec<RigidParticle>>, EvalReport)> {
    let predicted = extrapolate(ds, field, plan.start_frame, plan.n_steps, plan.stride, plan.mode, plan.order)?;
    let available = (ds.n_frames() - 1 - plan.start_frame) / plan.stride;
    let scored = plan.n_steps.min(available);
    let m: ExtrapolationMetrics = score_extrapolation(ds, &predicted[..=scored], plan.start_frame, plan.stride)?;
    let report = EvalReport {
        versions: Versions::default(),
        config: cfg.clone(),
        start_frame: plan.start_frame,
        start_time: ds.times[plan.start_frame],
        dt: plan.stride as f64 * ds.frame_interval(),
        mode: plan.mode,
        order: plan.order,
        horizons: m.horizons,
        mean_rmse: m.mean_rmse,
        final_rmse: m.final_rmse,
        scene_diameter: m.scene_diameter,
        relative_final_rmse: if m.scene_diameter > 0.0 { m.final_rmse / m.scene_diameter } else { 0.0 },
        segmentation: None,
    };
    Ok((predicted, report))
}

fn write_prediction(dir: &Path, ds: &TrajectoryDataset, predicted: &[Vec<RigidParticle>], start_time: f64, dt: f64) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let times: Vec<f64> = (0..predicted.len()).map(|k| start_time + k as f64 * dt).collect();
    let positions: Vec<Vec<_>> = predicted.iter().map(|f| f.iter().map(|p| p.position).collect()).collect();
    let orientations: Vec<Vec<_>> = predicted.iter().map(|f| f.iter().map(|p| p.orientation).collect()).collect();
    let path = dir.join("traj.csv");
    std::fs::write(&path, format_trajectory_csv(&times, &positions, Some(&orientations), &ds.labels)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Rolls the field out from the last training frame; writes
/// `<output>/prediction/traj.csv` and `<output>/eval_report.json`.
pub fn cmd_extrapolate(dataset: &Path, checkpoint: &Path, cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let ds = TrajectoryDataset::read(dataset)?;
    let field = DynamicsField::load(checkpoint)?;
    if let DynamicsField::Table(t) = &field {
        if t.len() != ds.n_particles() {
            return Err(Error::DimensionMismatch { what: "checkpoint particles", expected: ds.n_particles(), got: t.len() });
        }
    }
    let plan = rollout_plan(&ds, &field, cfg)?;
    let (predicted, report) = evaluate(&ds, &field, &plan, cfg)?;
    write_prediction(&cfg.output.join("prediction"), &ds, &predicted, report.start_time, report.dt)?;
    write_json(&cfg.output.join("eval_report.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub versions: Versions,
    pub config: RunConfig,
    pub query_frame: usize,
    pub query_time: f64,
    pub k: usize,
    pub inertia: f64,
    pub metrics: SegMetrics,
    /// Per-cluster rigid-fit residual between the first and middle frames (m).
    pub rigidity_residuals: Vec<f64>,
    pub scene_diameter: f64,
}

/// Clusters motion features of `field` on `ds` and scores them against the
/// dataset labels.
pub fn segment(ds: &TrajectoryDataset, field: &DynamicsField, cfg: &RunConfig) -> Result<(Vec<usize>, SegmentReport)> {
    let frame = match cfg.segmentation.query_time {
        None => ds.split - 1,
        Some(t) => ds
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .ok_or(Error::EmptyInput("dataset frames"))?,
    };
    let mut features = dataset_features(ds, field, frame, field.layout().order)?;
    if cfg.segmentation.standardize {
        standardize(&mut features);
    }
    let seg = match cfg.segmentation.k {
        Some(k) => kmeans(&features, k, cfg.seed, &cfg.segmentation.kmeans)?,
        None => kmeans_auto(&features, cfg.seed, &cfg.segmentation.kmeans)?,
    };
    let metrics = seg_metrics(&seg.labels, &ds.labels)?;
    let rigidity = cluster_rigidity(ds, &seg.labels, 0, ds.n_frames() / 2)?;
    let report = SegmentReport {
        versions: Versions::default(),
        config: cfg.clone(),
        query_frame: frame,
        query_time: ds.times[frame],
        k: seg.k(),
        inertia: seg.inertia,
        metrics,
        rigidity_residuals: rigidity.iter().map(|r| r.residual).collect(),
        scene_diameter: ds.diameter(),
    };
    Ok((seg.labels, report))
}

/// Writes `labels.csv`, `labels.ply` and `segment_report.json` under the output directory.
pub fn cmd_segment(checkpoint: &Path, dataset: &Path, cfg: &RunConfig) -> Result<SegmentReport> {
    cfg.validate()?;
    let ds = TrajectoryDataset::read(dataset)?;
    let field = DynamicsField::load(checkpoint)?;
    let (labels, report) = segment(&ds, &field, cfg)?;
    ensure_dir(&cfg.output)?;
    write_labels(&cfg.output, &ds.positions[report.query_frame], &labels)?;
    write_json(&cfg.output.join("segment_report.json"), &report)?;
    Ok(report)
}

/// Renders every frame of the dataset, or of `trajectory` (a trajectory CSV
/// over the same particles), into `<output>/frames/frame_NNNN.png`.
pub fn cmd_render(dataset: &Path, trajectory: Option<&Path>, camera: Option<&Path>, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let ds = TrajectoryDataset::read(dataset)?;
    let frames: Vec<Vec<RigidParticle>> = match trajectory {
        None => (0..ds.n_frames()).map(|f| ds.frame_particles(f)).collect(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let table = parse_trajectory_csv(&text)?;
            if table.labels != ds.labels {
                return Err(Error::MalformedData(format!("{}: particles do not match the dataset", path.display())));
            }
            let template = ds.frame_particles(0);
            (0..table.times.len())
                .map(|f| {
                    template
                        .iter()
                        .enumerate()
                        .map(|(i, p)| RigidParticle {
                            position: table.positions[f][i],
                            orientation: table.orientations.as_ref().map_or(p.orientation, |o| o[f][i]),
                            ..*p
                        })
                        .collect()
                })
                .collect()
        }
    };
    let cam = match camera.or(cfg.render.camera.as_deref()) {
        Some(path) => Camera::read(path)?,
        None => Camera::framing(&ds.positions.concat(), cfg.render.width, cfg.render.height)?,
    };
    let dir = cfg.output.join("frames");
    ensure_dir(&dir)?;
    cam.write(&dir.join("camera.json"))?;
    let render = cfg.render.render_config();
    let mut paths = Vec::with_capacity(frames.len());
    for (i, particles) in frames.iter().enumerate() {
        let img = splat_image(particles, &cam, &render)?;
        let path = dir.join(format!("frame_{i:04}.png"));
        img.write_png(&path, render.transparent)?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_end: f64,
    pub train_frames: usize,
    pub final_loss: Option<f64>,
    pub horizons: Vec<HorizonError>,
    pub final_rmse: f64,
    pub relative_final_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinualReport {
    pub versions: Versions,
    pub config: RunConfig,
    pub scene_diameter: f64,
    pub windows: Vec<WindowReport>,
    /// Largest window error over the smallest.
    pub worst_to_best: f64,
    pub metadata: RunMetadata,
}

/// Fits growing windows with warm starts; writes `<output>/continual_report.json`.
pub fn cmd_continual(dataset: &Path, cfg: &RunConfig) -> Result<ContinualReport> {
    cfg.validate()?;
    let ds = TrajectoryDataset::read(dataset)?;
    let report = continual(&ds, cfg)?;
    ensure_dir(&cfg.output)?;
    write_json(&cfg.output.join("continual_report.json"), &report)?;
    Ok(report)
}

pub fn continual(ds: &TrajectoryDataset, cfg: &RunConfig) -> Result<ContinualReport> {
    let schedule: Vec<f64> = cfg.continual.windows.iter().map(|w| w * ds.spec.duration).collect();
    let initial = new_field(ds, cfg)?;
    let results = continual_fit(ds, &initial, &schedule, cfg.continual.ahead_frames, &cfg.fit_config())?;
    let diameter = ds.diameter();
    let windows: Vec<WindowReport> = results
        .iter()
        .map(|r| WindowReport {
            window_end: r.window_end,
            train_frames: r.train_frames,
            final_loss: r.report.loss_history.last().copied(),
            horizons: r.metrics.horizons.clone(),
            final_rmse: r.metrics.final_rmse,
            relative_final_rmse: r.metrics.final_rmse / diameter,
        })
        .collect();
    let best = windows.iter().map(|w| w.final_rmse).fold(f64::INFINITY, f64::min);
    let worst = windows.iter().map(|w| w.final_rmse).fold(0.0, f64::max);
    Ok(ContinualReport {
        versions: Versions::default(),
        config: cfg.clone(),
        scene_diameter: diameter,
        windows,
        worst_to_best: if best > 0.0 { worst / best } else if worst == 0.0 { 1.0 } else { f64::INFINITY },
        metadata: RunMetadata { wall_clock_s: results.iter().map(|r| r.report.wall_clock_s).sum() },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub dt_multiple: usize,
    pub order: IntegrationOrder,
    pub mode: RolloutMode,
    pub parametrization: Parametrization,
    pub supervision: Supervision,
    pub final_loss: Option<f64>,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub versions: Versions,
    pub cells: Vec<AblationCell>,
    pub metadata: RunMetadata,
}

impl AblationReport {
    pub fn summary(&self) -> String {
        let mut s = format!("{:>3} {:>5} {:>8} {:>11} {:>12} {:>12} {:>9}\n", "dt", "order", "mode", "param", "supervision", "final_rmse", "rel");
        for c in &self.cells {
            s.push_str(&format!(
                "{:>3} {:>5} {:>8} {:>11} {:>12} {:>12.4e} {:>8.3}%\n",
                c.dt_multiple,
                c.order,
                c.mode,
                c.parametrization,
                c.supervision,
                c.report.final_rmse,
                100.0 * c.report.relative_final_rmse
            ));
        }
        s
    }
}

/// Configuration of one ablation cell: the fit and the rollout share the
/// cell's order and mode.
pub fn ablation_cell_config(
    cfg: &RunConfig,
    dt_multiple: usize,
    order: IntegrationOrder,
    mode: RolloutMode,
    parametrization: Parametrization,
    supervision: Supervision,
) -> RunConfig {
    let mut c = cfg.clone();
    c.fit.dt_multiple = dt_multiple;
    c.fit.order = order;
    c.fit.mode = mode;
    c.fit.parametrization = parametrization;
    c.fit.supervision = supervision;
    c.rollout.order = Some(order);
    c.rollout.mode = Some(mode);
    c
}

pub fn ablate(ds: &TrajectoryDataset, cfg: &RunConfig) -> Result<AblationReport> {
    let a = &cfg.ablation;
    let mut cells = Vec::new();
    let mut wall = 0.0;
    for &dt_multiple in &a.dt_multiples {
        for &order in &a.orders {
            for &mode in &a.modes {
                for &parametrization in &a.parametrizations {
                    for &supervision in &a.supervisions {
                        let cell_cfg = ablation_cell_config(cfg, dt_multiple, order, mode, parametrization, supervision);
                        let mut field = new_field(ds, &cell_cfg)?;
                        let fit_report = fit(ds, &mut field, &cell_cfg.fit_config())?;
                        wall += fit_report.wall_clock_s;
                        let plan = rollout_plan(ds, &field, &cell_cfg)?;
                        let (_, report) = evaluate(ds, &field, &plan, &cell_cfg)?;
                        cells.push(AblationCell {
                            dt_multiple,
                            order,
                            mode,
                            parametrization,
                            supervision,
                            final_loss: fit_report.loss_history.last().copied(),
                            report,
                        });
                    }
                }
            }
        }
    }
    Ok(AblationReport { versions: Versions::default(), cells, metadata: RunMetadata { wall_clock_s: wall } })
}

/// Runs the ablation grid; writes `<output>/ablation_report.json`.
pub fn cmd_ablate(dataset: &Path, cfg: &RunConfig) -> Result<AblationReport> {
    cfg.validate()?;
    let ds = TrajectoryDataset::read(dataset)?;
    let report = ablate(&ds, cfg)?;
    ensure_dir(&cfg.output)?;
    write_json(&cfg.output.join("ablation_report.json"), &report)?;
    Ok(report)
}

/// generate → fit → extrapolate → segment → render of the prediction, all
/// under the output directory. The evaluation report carries the
/// segmentation metrics.
pub fn cmd_run(cfg: &RunConfig) -> Result<EvalReport> {
    let dataset = cmd_generate(cfg)?;
    cmd_fit(&dataset, cfg)?;
    let checkpoint = cfg.output.join("field.json");
    let mut report = cmd_extrapolate(&dataset, &checkpoint, cfg)?;
    let seg = cmd_segment(&checkpoint, &dataset, cfg)?;
    report.segmentation = Some(seg.metrics);
    write_json(&cfg.output.join("eval_report.json"), &report)?;
    cmd_render(&dataset, Some(&cfg.output.join("prediction").join("traj.csv")), None, cfg)?;
    Ok(report)
}

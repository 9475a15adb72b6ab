//! Synthetic rigid multi-part scenes with closed-form motion.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{to_equivalent, DynamicsParams, IntegrationOrder, RawCenterParams, RigidParticle, ThirdOrderTerms};
use crate::error::{Error, Result};
use crate::geometry::{Quaternion, UnitQuaternion, Vec3};
use crate::ply::{color_to_u8, read_ply_points, write_ply};

const UNIT_AXIS_TOLERANCE: f64 = 1e-9;

/// Closed-form rigid motion of a part, in SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotionSpec {
    Static,
    ConstVelocity {
        velocity: Vec3,
    },
    ConstAccel {
        velocity: Vec3,
        acceleration: Vec3,
    },
    /// Rotation about the line through `point` along unit `axis`, with angle
    /// `θ(t) = ω₀t + ½αt²`.
    Rotation {
        axis: Vec3,
        point: Vec3,
        omega0: f64,
        #[serde(default)]
        alpha: f64,
    },
    /// Rotation plus a slide of `pitch` along the axis per full turn.
    Screw {
        axis: Vec3,
        point: Vec3,
        omega0: f64,
        #[serde(default)]
        alpha: f64,
        pitch: f64,
    },
    /// Motions applied one after another; each segment starts at `start`
    /// (seconds) from the state the previous one reached.
    Sequence {
        segments: Vec<Segment>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: f64,
    pub motion: MotionSpec,
}

impl MotionSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |axis: &Vec3| {
            if (axis.norm() - 1.0).abs() > UNIT_AXIS_TOLERANCE {
                Err(Error::InvalidConfig(format!("motion axis must be unit length, got norm {}", axis.norm())))
            } else {
                Ok(())
            }
        };
        let finite = |vals: &[f64]| {
            if vals.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::InvalidConfig("motion parameters must be finite".into()))
            }
        };
        match self {
            MotionSpec::Static => Ok(()),
            MotionSpec::ConstVelocity { velocity } => finite(&velocity.to_array()),
            MotionSpec::ConstAccel { velocity, acceleration } => {
                finite(&velocity.to_array())?;
                finite(&acceleration.to_array())
            }
            MotionSpec::Rotation { axis, point, omega0, alpha } => {
                unit(axis)?;
                finite(&point.to_array())?;
                finite(&[*omega0, *alpha])
            }
            MotionSpec::Screw { axis, point, omega0, alpha, pitch } => {
                unit(axis)?;
                finite(&point.to_array())?;
                finite(&[*omega0, *alpha, *pitch])
            }
            MotionSpec::Sequence { segments } => {
                if segments.first().map(|s| s.start) != Some(0.0) {
                    return Err(Error::InvalidConfig("a motion sequence must start with a segment at t = 0".into()));
                }
                if segments.windows(2).any(|w| !(w[1].start > w[0].start)) {
                    return Err(Error::InvalidConfig("motion segment starts must increase".into()));
                }
                segments.iter().try_for_each(|s| s.motion.validate())
            }
        }
    }

    /// Whether every particle of a part under this motion keeps its orientation.
    pub fn is_translation_only(&self) -> bool {
        match self {
            MotionSpec::Static | MotionSpec::ConstVelocity { .. } | MotionSpec::ConstAccel { .. } => true,
            MotionSpec::Rotation { .. } | MotionSpec::Screw { .. } => false,
            MotionSpec::Sequence { segments } => segments.iter().all(|s| s.motion.is_translation_only()),
        }
    }

    /// Segment active at `t`. Before the first
    /// switch the first segment applies.
    fn active_segment(segments: &[Segment], t: f64) -> usize {
        segments.iter().rposition(|s| s.start <= t).unwrap_or(0)
    }

    /// Ground-truth center parameters at `t`.
    pub fn raw_params(&self, t: f64) -> RawCenterParams {
        let zero = RawCenterParams {
            center: Vec3::ZERO,
            center_velocity: Vec3::ZERO,
            center_acceleration: Vec3::ZERO,
            angular_velocity: Vec3::ZERO,
            angular_acceleration: Vec3::ZERO,
        };
        match self {
            MotionSpec::Static => zero,
            MotionSpec::ConstVelocity { velocity } => RawCenterParams { center_velocity: *velocity, ..zero },
            MotionSpec::ConstAccel { velocity, acceleration } => {
                RawCenterParams { center_velocity: *velocity + *acceleration * t, center_acceleration: *acceleration, ..zero }
            }
            MotionSpec::Rotation { axis, point, omega0, alpha } => RawCenterParams {
                center: *point,
                angular_velocity: *axis * (omega0 + alpha * t),
                angular_acceleration: *axis * *alpha,
                ..zero
            },
            MotionSpec::Screw { axis, point, omega0, alpha, pitch } => {
                let k = pitch / std::f64::consts::TAU;
                let omega = omega0 + alpha * t;
                // The center slides along the axis; report it where it is at `t`.
                let theta = omega0 * t + 0.5 * alpha * t * t;
                RawCenterParams {
                    center: *point + *axis * (k * theta),
                    center_velocity: *axis * (k * omega),
                    center_acceleration: *axis * (k * alpha),
                    angular_velocity: *axis * omega,
                    angular_acceleration: *axis * *alpha,
                }
            }
            MotionSpec::Sequence { segments } => {
                if segments.is_empty() {
                    return zero;
                }
                let k = Self::active_segment(segments, t);
                segments[k].motion.raw_params(t - segments[k].start)
            }
        }
    }

    /// Ground-truth equivalent dynamics parameters at `t`.
    pub fn equivalent_params(&self, t: f64, order: IntegrationOrder) -> DynamicsParams {
        let mut p = to_equivalent(&self.raw_params(t));
        if order == IntegrationOrder::Third {
            // All motions have constant accelerations, so jerks vanish.
            p.third = Some(ThirdOrderTerms::default());
        }
        p
    }
}

/// Position and orientation at `t` of a point that was at `(x0, r0)` at `t = 0`.
pub fn exact_state(motion: &MotionSpec, x0: Vec3, r0: UnitQuaternion, t: f64) -> (Vec3, UnitQuaternion) {
    match motion {
        MotionSpec::Static => (x0, r0),
        MotionSpec::ConstVelocity { velocity } => (x0 + *velocity * t, r0),
        MotionSpec::ConstAccel { velocity, acceleration } => (x0 + *velocity * t + *acceleration * (0.5 * t * t), r0),
        MotionSpec::Rotation { axis, point, omega0, alpha } => {
            let q = UnitQuaternion::from_axis_angle(*axis, omega0 * t + 0.5 * alpha * t * t);
            (*point + q.rotate(x0 - *point), q.compose(&r0))
        }
        MotionSpec::Screw { axis, point, omega0, alpha, pitch } => {
            let theta = omega0 * t + 0.5 * alpha * t * t;
            let q = UnitQuaternion::from_axis_angle(*axis, theta);
            let slide = *axis * (pitch * theta / std::f64::consts::TAU);
            (*point + q.rotate(x0 - *point) + slide, q.compose(&r0))
        }
        MotionSpec::Sequence { segments } => {
            let mut state = (x0, r0);
            for (k, seg) in segments.iter().enumerate() {
                let end = segments.get(k + 1).map_or(f64::INFINITY, |s| s.start);
                if t <= end || k + 1 == segments.len() {
                    return exact_state(&seg.motion, state.0, state.1, t - seg.start);
                }
                state = exact_state(&seg.motion, state.0, state.1, end - seg.start);
            }
            state
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Axis-aligned box with full side lengths `extent`.
    Box { extent: Vec3 },
    Sphere { radius: f64 },
    /// Points read from a PLY file, offset by the part center.
    PointCloud { path: PathBuf },
}

fn default_splat_scale() -> f64 {
    0.02
}

fn default_opacity() -> f64 {
    0.8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartSpec {
    pub shape: Shape,
    /// Where the shape is placed at `t = 0`.
    #[serde(default)]
    pub center: Vec3,
    pub particle_count: usize,
    pub motion: MotionSpec,
    pub color: [f64; 3],
    pub label: usize,
    #[serde(default = "default_splat_scale")]
    pub splat_scale: f64,
    #[serde(default = "default_opacity")]
    pub opacity: f64,
}

fn default_train_fraction() -> f64 {
    0.7
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub parts: Vec<PartSpec>,
    pub duration: f64,
    pub frame_rate: f64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of Gaussian noise added to observed positions (m).
    #[serde(default)]
    pub position_noise: f64,
    /// Emit per-particle orientations; off simulates position-only tracking.
    #[serde(default = "default_true")]
    pub orientations: bool,
}

impl SceneSpec {
    pub fn n_frames(&self) -> usize {
        (self.duration * self.frame_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::InvalidConfig(m));
        if self.parts.is_empty() {
            return cfg("scene has no parts".into());
        }
        if !(self.duration > 0.0 && self.frame_rate > 0.0) || !self.duration.is_finite() || !self.frame_rate.is_finite() {
            return cfg("duration and frame_rate must be positive".into());
        }
        if self.n_frames() < 2 {
            return cfg(format!("scene needs at least 2 frames, duration·frame_rate gives {}", self.n_frames()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return cfg(format!("train_fraction must be in (0, 1], got {}", self.train_fraction));
        }
        if !(self.position_noise >= 0.0 && self.position_noise.is_finite()) {
            return cfg("position_noise must be non-negative".into());
        }
        let mut labels: Vec<usize> = self.parts.iter().map(|p| p.label).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return cfg("part labels must be unique".into());
        }
        for part in &self.parts {
            if part.particle_count == 0 {
                return cfg(format!("part {} has no particles", part.label));
            }
            match &part.shape {
                Shape::Box { extent } if !(extent.x >= 0.0 && extent.y >= 0.0 && extent.z >= 0.0) || extent.norm() == 0.0 => {
                    return cfg(format!("part {} has a degenerate box", part.label));
                }
                Shape::Sphere { radius } if !(*radius > 0.0) => return cfg(format!("part {} has a non-positive radius", part.label)),
                _ => {}
            }
            part.motion.validate()?;
        }
        Ok(())
    }

    /// Index of the first held-out frame.
    pub fn split_index(&self) -> usize {
        ((self.train_fraction * self.n_frames() as f64) + 1e-9).floor() as usize
    }

    /// One of the built-in benchmark scenes.
    pub fn preset(name: &str, seed: u64) -> Result<SceneSpec> {
        let parts = match name {
            "multipart" => multipart_parts(),
            "indoor" => indoor_parts(),
            "fan" => fan_parts(),
            "articulated" => articulated_parts(),
            "switch" => switch_parts(),
            "static" => vec![PartSpec {
                shape: Shape::Box { extent: Vec3::splat(0.5) },
                center: Vec3::ZERO,
                particle_count: 50,
                motion: MotionSpec::Static,
                color: [0.6, 0.6, 0.6],
                label: 0,
                splat_scale: default_splat_scale(),
                opacity: default_opacity(),
            }],
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown scene preset {other:?} (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(SceneSpec {
            parts,
            duration: 1.0,
            frame_rate: 60.0,
            train_fraction: 0.7,
            seed,
            position_noise: 0.0,
            orientations: true,
        })
    }
}

pub const PRESETS: [&str; 6] = ["multipart", "indoor", "fan", "articulated", "switch", "static"];

/// Scenes the extrapolation benchmark runs on.
pub const BENCHMARK_SCENES: [&str; 3] = ["multipart", "indoor", "fan"];

fn part(shape: Shape, center: Vec3, count: usize, motion: MotionSpec, color: [f64; 3], label: usize) -> PartSpec {
    PartSpec { shape, center, particle_count: count, motion, color, label, splat_scale: default_splat_scale(), opacity: default_opacity() }
}

fn unit(v: Vec3) -> Vec3 {
    v * (1.0 / v.norm())
}

fn multipart_parts() -> Vec<PartSpec> {
    vec![
        part(
            Shape::Box { extent: Vec3::new(0.5, 0.3, 0.2) },
            Vec3::new(-0.7, 0.0, 0.0),
            100,
            MotionSpec::Rotation { axis: Vec3::Z, point: Vec3::new(-0.7, 0.0, 0.0), omega0: 2.0, alpha: 1.5 },
            [0.9, 0.2, 0.2],
            0,
        ),
        part(
            Shape::Sphere { radius: 0.25 },
            Vec3::new(0.7, 0.0, 0.0),
            100,
            MotionSpec::Rotation { axis: Vec3::X, point: Vec3::new(0.7, 0.1, 0.0), omega0: -1.5, alpha: -1.0 },
            [0.2, 0.8, 0.2],
            1,
        ),
        part(
            Shape::Box { extent: Vec3::new(0.3, 0.3, 0.4) },
            Vec3::new(0.0, 0.8, 0.0),
            100,
            MotionSpec::Rotation { axis: unit(Vec3::new(1.0, 1.0, 1.0)), point: Vec3::new(0.1, 0.8, 0.0), omega0: 1.2, alpha: 2.0 },
            [0.2, 0.3, 0.9],
            2,
        ),
    ]
}

fn indoor_parts() -> Vec<PartSpec> {
    vec![
        part(
            Shape::Box { extent: Vec3::new(0.4, 0.4, 0.4) },
            Vec3::new(-0.8, 0.0, 0.0),
            60,
            MotionSpec::ConstAccel { velocity: Vec3::new(0.4, 0.0, 0.0), acceleration: Vec3::new(0.0, 0.0, 0.8) },
            [0.8, 0.5, 0.2],
            0,
        ),
        part(
            Shape::Sphere { radius: 0.2 },
            Vec3::new(0.6, 0.5, 0.0),
            60,
            MotionSpec::ConstAccel { velocity: Vec3::new(0.0, -0.3, 0.1), acceleration: Vec3::new(-0.6, 0.0, 0.0) },
            [0.3, 0.7, 0.7],
            1,
        ),
        part(
            Shape::Box { extent: Vec3::new(0.6, 0.2, 0.3) },
            Vec3::new(0.0, -0.7, 0.2),
            60,
            MotionSpec::ConstAccel { velocity: Vec3::new(-0.2, 0.2, 0.0), acceleration: Vec3::new(0.3, 0.5, -0.4) },
            [0.6, 0.3, 0.8],
            2,
        ),
        part(
            Shape::Box { extent: Vec3::new(2.0, 2.0, 0.05) },
            Vec3::new(0.0, 0.0, -0.6),
            60,
            MotionSpec::Static,
            [0.5, 0.5, 0.5],
            3,
        ),
    ]
}

fn fan_parts() -> Vec<PartSpec> {
    vec![part(
        Shape::Box { extent: Vec3::new(1.2, 0.15, 0.02) },
        Vec3::ZERO,
        200,
        MotionSpec::Rotation { axis: Vec3::Z, point: Vec3::ZERO, omega0: 4.0, alpha: 3.0 },
        [0.9, 0.9, 0.3],
        0,
    )]
}

fn articulated_parts() -> Vec<PartSpec> {
    vec![
        part(
            Shape::Box { extent: Vec3::new(0.6, 0.15, 0.15) },
            Vec3::new(0.3, 0.0, 0.0),
            80,
            MotionSpec::Rotation { axis: Vec3::Z, point: Vec3::ZERO, omega0: 1.5, alpha: 1.0 },
            [0.9, 0.4, 0.1],
            0,
        ),
        part(
            Shape::Sphere { radius: 0.2 },
            Vec3::new(-0.6, 0.4, 0.0),
            80,
            MotionSpec::Screw { axis: Vec3::Y, point: Vec3::new(-0.6, 0.4, 0.1), omega0: 2.0, alpha: -1.0, pitch: 0.3 },
            [0.1, 0.6, 0.9],
            1,
        ),
        part(
            Shape::Box { extent: Vec3::new(0.3, 0.3, 0.3) },
            Vec3::new(0.0, -0.6, 0.0),
            80,
            MotionSpec::ConstAccel { velocity: Vec3::new(0.3, 0.0, 0.2), acceleration: Vec3::new(0.0, 0.4, -0.3) },
            [0.4, 0.9, 0.4],
            2,
        ),
    ]
}

fn switch_parts() -> Vec<PartSpec> {
    let point = Vec3::ZERO;
    vec![part(
        Shape::Box { extent: Vec3::new(0.8, 0.4, 0.1) },
        Vec3::new(0.3, 0.0, 0.0),
        120,
        MotionSpec::Sequence {
            segments: vec![
                Segment { start: 0.0, motion: MotionSpec::Rotation { axis: Vec3::Z, point, omega0: 1.0, alpha: 0.0 } },
                Segment { start: 0.4, motion: MotionSpec::Rotation { axis: Vec3::Z, point, omega0: 3.0, alpha: 0.0 } },
            ],
        },
        [0.8, 0.8, 0.8],
        0,
    )]
}

/// Observed trajectories of every particle at every frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub spec: SceneSpec,
    pub times: Vec<f64>,
    /// `positions[frame][particle]`.
    pub positions: Vec<Vec<Vec3>>,
    /// `orientations[frame][particle]`, absent for position-only tracking.
    pub orientations: Option<Vec<Vec<UnitQuaternion>>>,
    pub labels: Vec<usize>,
    /// Index of the first held-out frame.
    pub split: usize,
}

fn sample_surface(shape: &Shape, center: Vec3, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec3>> {
    match shape {
        Shape::Sphere { radius } => Ok((0..count)
            .map(|_| loop {
                let v = Vec3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng));
                if let Some(u) = v.try_normalize(1e-9) {
                    break center + u * *radius;
                }
            })
            .collect()),
        Shape::Box { extent } => {
            let h = *extent * 0.5;
            let areas = [extent.y * extent.z, extent.x * extent.z, extent.x * extent.y];
            let total: f64 = 2.0 * areas.iter().sum::<f64>();
            Ok((0..count)
                .map(|_| {
                    let mut pick = rng.random_range(0.0..total);
                    let mut face = 5;
                    for (i, a) in areas.iter().flat_map(|a| [a, a]).enumerate() {
                        if pick < *a {
                            face = i;
                            break;
                        }
                        pick -= a;
                    }
                    let axis = face / 2;
                    let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
                    let mut p = [rng.random_range(-h.x..=h.x), rng.random_range(-h.y..=h.y), rng.random_range(-h.z..=h.z)];
                    p[axis] = sign * h[axis];
                    center + Vec3::from(p)
                })
                .collect())
        }
        Shape::PointCloud { path } => {
            let points = read_ply_points(path)?;
            if points.len() < count {
                return Err(Error::MalformedData(format!("{} holds {} points, {count} requested", path.display(), points.len())));
            }
            let picked = rand::seq::index::sample(rng, points.len(), count);
            let mut idx: Vec<usize> = picked.into_vec();
            idx.sort_unstable();
            Ok(idx.into_iter().map(|i| center + points[i]).collect())
        }
    }
}

fn random_orientation(rng: &mut ChaCha8Rng) -> UnitQuaternion {
    loop {
        let q = Quaternion::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng));
        if q.norm() > 1e-6 {
            return UnitQuaternion::new_normalize(q).expect("nonzero quaternion");
        }
    }
}

pub fn generate_scene(spec: &SceneSpec) -> Result<TrajectoryDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(1);

    let mut initial = Vec::new();
    let mut labels = Vec::new();
    let mut owners = Vec::new();
    for (k, part) in spec.parts.iter().enumerate() {
        for x0 in sample_surface(&part.shape, part.center, part.particle_count, &mut rng)? {
            initial.push((x0, random_orientation(&mut rng)));
            labels.push(part.label);
            owners.push(k);
        }
    }

    let n_frames = spec.n_frames();
    let times: Vec<f64> = (0..n_frames).map(|i| i as f64 / spec.frame_rate).collect();
    let mut positions = Vec::with_capacity(n_frames);
    let mut orientations = Vec::with_capacity(n_frames);
    for &t in &times {
        let mut xs = Vec::with_capacity(initial.len());
        let mut qs = Vec::with_capacity(initial.len());
        for ((x0, r0), &k) in initial.iter().zip(&owners) {
            let (x, r) = exact_state(&spec.parts[k].motion, *x0, *r0, t);
            xs.push(x);
            qs.push(r);
        }
        if spec.position_noise > 0.0 {
            for x in &mut xs {
                let n: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut noise_rng));
                *x += Vec3::from(n) * spec.position_noise;
            }
        }
        positions.push(xs);
        orientations.push(qs);
    }
    Ok(TrajectoryDataset {
        spec: spec.clone(),
        times,
        positions,
        orientations: spec.orientations.then_some(orientations),
        labels,
        split: spec.split_index(),
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    spec: SceneSpec,
    times: Vec<f64>,
    labels: Vec<usize>,
    split: usize,
    has_orientations: bool,
}

/// Per-row content of a trajectory CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTable {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Vec3>>,
    pub orientations: Option<Vec<Vec<UnitQuaternion>>>,
    pub labels: Vec<usize>,
}

pub const TRAJECTORY_HEADER: &str = "t,particle_id,x,y,z,qw,qx,qy,qz,label";

pub fn format_trajectory_csv(
    times: &[f64],
    positions: &[Vec<Vec3>],
    orientations: Option<&[Vec<UnitQuaternion>]>,
    labels: &[usize],
) -> String {
    let mut s = String::with_capacity(times.len() * labels.len() * 200);
    s.push_str(TRAJECTORY_HEADER);
    s.push('\n');
    for (f, &t) in times.iter().enumerate() {
        for (i, x) in positions[f].iter().enumerate() {
            let _ = write!(s, "{t:.16e},{i},{:.16e},{:.16e},{:.16e}", x.x, x.y, x.z);
            match orientations {
                Some(o) => {
                    let q = o[f][i].to_array();
                    let _ = write!(s, ",{:.16e},{:.16e},{:.16e},{:.16e}", q[0], q[1], q[2], q[3]);
                }
                None => s.push_str(",,,,"),
            }
            let _ = writeln!(s, ",{}", labels[i]);
        }
    }
    s
}

pub fn parse_trajectory_csv(text: &str) -> Result<TrajectoryTable> {
    let bad = |line: usize, m: String| Error::MalformedData(format!("trajectory line {line}: {m}"));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::EmptyInput("trajectory csv"))?;
    let header: Vec<&str> = header.split(',').map(str::trim).collect();
    if header != TRAJECTORY_HEADER.split(',').collect::<Vec<_>>() {
        return Err(Error::MalformedData(format!("trajectory header must be {TRAJECTORY_HEADER:?}")));
    }
    let mut times: Vec<f64> = Vec::new();
    let mut positions: Vec<Vec<Vec3>> = Vec::new();
    let mut orientations: Vec<Vec<UnitQuaternion>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut has_q: Option<bool> = None;
    for (n, line) in lines {
        let n = n + 1;
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 10 {
            return Err(bad(n, format!("expected 10 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(n, format!("bad number {s:?}")));
        let t = num(f[0])?;
        let id: usize = f[1].parse().map_err(|_| bad(n, format!("bad particle id {:?}", f[1])))?;
        let x = Vec3::new(num(f[2])?, num(f[3])?, num(f[4])?);
        let label: usize = f[9].parse().map_err(|_| bad(n, format!("bad label {:?}", f[9])))?;
        let q_present = f[5..9].iter().all(|s| !s.is_empty());
        if !q_present && f[5..9].iter().any(|s| !s.is_empty()) {
            return Err(bad(n, "partial orientation".into()));
        }
        if *has_q.get_or_insert(q_present) != q_present {
            return Err(bad(n, "orientation columns must be filled on all rows or none".into()));
        }
        if id == 0 {
            if let Some(&last) = times.last() {
                if !(t > last) {
                    return Err(bad(n, "times must increase".into()));
                }
                if positions.last().map(Vec::len) != positions.first().map(Vec::len) {
                    return Err(bad(n, "ragged frame".into()));
                }
            }
            times.push(t);
            positions.push(Vec::new());
            orientations.push(Vec::new());
        }
        let frame = times.len().checked_sub(1).ok_or_else(|| bad(n, "first row must be particle 0".into()))?;
        if t != times[frame] || id != positions[frame].len() {
            return Err(bad(n, format!("rows must be grouped by time with ids 0..n in order, got id {id} at t {t}")));
        }
        if frame == 0 {
            labels.push(label);
        } else if labels.get(id) != Some(&label) {
            return Err(bad(n, format!("label of particle {id} changes over time or is unknown")));
        }
        positions[frame].push(x);
        if q_present {
            let q = Quaternion::new(num(f[5])?, num(f[6])?, num(f[7])?, num(f[8])?);
            orientations[frame].push(UnitQuaternion::new_checked(q).map_err(|e| bad(n, e.to_string()))?);
        }
    }
    if times.is_empty() {
        return Err(Error::EmptyInput("trajectory csv"));
    }
    if positions.iter().any(|p| p.len() != labels.len()) {
        return Err(Error::MalformedData("trajectory csv: ragged frame".into()));
    }
    Ok(TrajectoryTable { times, positions, orientations: has_q.unwrap_or(false).then_some(orientations), labels })
}

impl TrajectoryDataset {
    pub fn n_frames(&self) -> usize {
        self.times.len()
    }

    pub fn n_particles(&self) -> usize {
        self.labels.len()
    }

    /// Frame interval δt.
    pub fn frame_interval(&self) -> f64 {
        1.0 / self.spec.frame_rate
    }

    /// Bounding-box diagonal over all frames.
    pub fn diameter(&self) -> f64 {
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for x in self.positions.iter().flatten() {
            lo = Vec3::new(lo.x.min(x.x), lo.y.min(x.y), lo.z.min(x.z));
            hi = Vec3::new(hi.x.max(x.x), hi.y.max(x.y), hi.z.max(x.z));
        }
        (hi - lo).norm()
    }

    fn part_of(&self, id: usize) -> Option<&PartSpec> {
        self.spec.parts.iter().find(|p| p.label == self.labels[id])
    }

    /// Observed particle `id` at `frame`, with its part's rendering attributes.
    pub fn particle(&self, frame: usize, id: usize) -> RigidParticle {
        let orientation = self.orientations.as_ref().map_or(UnitQuaternion::IDENTITY, |o| o[frame][id]);
        let mut p = RigidParticle::at(self.positions[frame][id]).with_orientation(orientation);
        if let Some(part) = self.part_of(id) {
            p.scale = Vec3::splat(part.splat_scale);
            p.color = part.color;
            p.opacity = part.opacity;
        }
        p
    }

    pub fn frame_particles(&self, frame: usize) -> Vec<RigidParticle> {
        (0..self.n_particles()).map(|id| self.particle(frame, id)).collect()
    }

    /// Ground-truth motion of the part particle `id` belongs to.
    pub fn motion_of(&self, id: usize) -> Option<&MotionSpec> {
        self.part_of(id).map(|p| &p.motion)
    }

    pub fn to_csv(&self) -> String {
        format_trajectory_csv(&self.times, &self.positions, self.orientations.as_deref(), &self.labels)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        if self.spec.parts.is_empty() {
            return Err(Error::InvalidConfig("refusing to write a scene with no parts".into()));
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let scene = SceneFile {
            spec: self.spec.clone(),
            times: self.times.clone(),
            labels: self.labels.clone(),
            split: self.split,
            has_orientations: self.orientations.is_some(),
        };
        let path = dir.join("scene.json");
        let json = serde_json::to_string_pretty(&scene).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        let path = dir.join("traj.csv");
        std::fs::write(&path, self.to_csv()).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("scene.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let scene: SceneFile = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        let path = dir.join("traj.csv");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let table = parse_trajectory_csv(&text)?;
        if table.times != scene.times {
            return Err(Error::MalformedData("traj.csv times disagree with scene.json".into()));
        }
        if table.labels != scene.labels {
            return Err(Error::MalformedData("traj.csv labels disagree with scene.json".into()));
        }
        if table.orientations.is_some() != scene.has_orientations {
            return Err(Error::MalformedData("traj.csv orientation columns disagree with scene.json".into()));
        }
        if scene.split == 0 || scene.split > table.times.len() {
            return Err(Error::MalformedData(format!("split {} outside 1..={}", scene.split, table.times.len())));
        }
        Ok(Self {
            spec: scene.spec,
            times: table.times,
            positions: table.positions,
            orientations: table.orientations,
            labels: table.labels,
            split: scene.split,
        })
    }

    /// Colored point cloud of one frame.
    pub fn export_ply(&self, frame: usize, path: &Path) -> Result<()> {
        let colors: Vec<[u8; 3]> = (0..self.n_particles()).map(|id| color_to_u8(self.particle(frame, id).color)).collect();
        write_ply(path, &self.positions[frame], Some(&colors))
    }

    /// Copy restricted to the first `n` frames, all of them training frames.
    pub fn prefix(&self, n: usize) -> TrajectoryDataset {
        let n = n.clamp(1, self.n_frames());
        TrajectoryDataset {
            spec: self.spec.clone(),
            times: self.times[..n].to_vec(),
            positions: self.positions[..n].to_vec(),
            orientations: self.orientations.as_ref().map(|o| o[..n].to_vec()),
            labels: self.labels.clone(),
            split: n,
        }
    }
}

//! Translation–rotation dynamics of a single rigid particle.
//!
//! Each particle rotates with angular velocity `w` about a center that itself
//! translates. The center position and velocity only enter the particle
//! velocity through `v_c − w × P_c`, so the integrator works with that
//! compounded "equivalent" center velocity `v̄` (and likewise `ā`):
//!
//! ```text
//! v(P) = w × (P − P_c) + v_c = w × P + v̄
//! ```
//!
//! [`rk2_step`] advances position and orientation over `dt` with midpoint
//! rates, rotating the orientation by the exact Rodrigues map of the midpoint
//! angular velocity.

pub(crate) mod grad;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rodrigues, shepperd, UnitQuaternion, Vec3};

/// Below this midpoint angular speed the orientation update is the identity.
pub const MIN_ANGULAR_SPEED: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidParticle {
    pub position: Vec3,
    pub orientation: UnitQuaternion,
    /// Per-axis standard deviation of the Gaussian kernel (m).
    pub scale: Vec3,
    pub color: [f64; 3],
    pub opacity: f64,
}

impl RigidParticle {
    pub fn at(position: Vec3) -> Self {
        RigidParticle {
            position,
            orientation: UnitQuaternion::IDENTITY,
            scale: Vec3::splat(0.01),
            color: [1.0, 1.0, 1.0],
            opacity: 1.0,
        }
    }

    pub fn with_orientation(mut self, orientation: UnitQuaternion) -> Self {
        self.orientation = orientation;
        self
    }
}

/// Rotation-center parameters in their original (non-equivalent) form.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RawCenterParams {
    pub center: Vec3,
    pub center_velocity: Vec3,
    pub center_acceleration: Vec3,
    pub angular_velocity: Vec3,
    pub angular_acceleration: Vec3,
}

/// Extra derivatives carried only at [`IntegrationOrder::Third`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThirdOrderTerms {
    /// Rate of change of the equivalent center acceleration (m/s³).
    pub jerk: Vec3,
    /// Rate of change of the angular acceleration (rad/s³).
    pub angular_jerk: Vec3,
}

/// Equivalent dynamics state of a particle at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub v_bar: Vec3,
    pub a_bar: Vec3,
    pub w: Vec3,
    pub eps: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub third: Option<ThirdOrderTerms>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum IntegrationOrder {
    /// Velocities only; accelerations are ignored.
    First,
    Second,
    /// Accelerations vary linearly in time.
    Third,
}

impl IntegrationOrder {
    pub const ALL: [IntegrationOrder; 3] = [IntegrationOrder::First, IntegrationOrder::Second, IntegrationOrder::Third];

    pub fn as_u8(self) -> u8 {
        match self {
            IntegrationOrder::First => 1,
            IntegrationOrder::Second => 2,
            IntegrationOrder::Third => 3,
        }
    }
}

impl TryFrom<u8> for IntegrationOrder {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(IntegrationOrder::First),
            2 => Ok(IntegrationOrder::Second),
            3 => Ok(IntegrationOrder::Third),
            _ => Err(Error::InvalidConfig(format!("integration order must be 1, 2 or 3, got {v}"))),
        }
    }
}

impl From<IntegrationOrder> for u8 {
    fn from(o: IntegrationOrder) -> u8 {
        o.as_u8()
    }
}

impl std::fmt::Display for IntegrationOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl DynamicsParams {
    /// All-zero parameters shaped for `order`.
    pub fn zeros(order: IntegrationOrder) -> Self {
        DynamicsParams {
            third: (order == IntegrationOrder::Third).then(ThirdOrderTerms::default),
            ..Default::default()
        }
    }

    /// Number of scalars in the flat form for `order` (12 or 18).
    pub fn flat_len(order: IntegrationOrder) -> usize {
        if order == IntegrationOrder::Third {
            18
        } else {
            12
        }
    }

    /// `[v̄, ā, w, ε]` followed by `[j̄, ε̇]` when third-order terms are present.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(18);
        for v in [self.v_bar, self.a_bar, self.w, self.eps] {
            out.extend_from_slice(&v.to_array());
        }
        if let Some(t) = &self.third {
            out.extend_from_slice(&t.jerk.to_array());
            out.extend_from_slice(&t.angular_jerk.to_array());
        }
        out
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        let third = match values.len() {
            12 => None,
            18 => Some(ThirdOrderTerms {
                jerk: Vec3::from_slice(&values[12..15]),
                angular_jerk: Vec3::from_slice(&values[15..18]),
            }),
            got => return Err(Error::DimensionMismatch { what: "dynamics parameters", expected: 12, got }),
        };
        Ok(DynamicsParams {
            v_bar: Vec3::from_slice(&values[0..3]),
            a_bar: Vec3::from_slice(&values[3..6]),
            w: Vec3::from_slice(&values[6..9]),
            eps: Vec3::from_slice(&values[9..12]),
            third,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    fn third_terms(&self, order: IntegrationOrder) -> Result<ThirdOrderTerms> {
        match (order, self.third) {
            (IntegrationOrder::Third, Some(t)) => Ok(t),
            (IntegrationOrder::Third, None) => Err(Error::MissingThirdOrder),
            _ => Ok(ThirdOrderTerms::default()),
        }
    }

    /// Center velocity and angular velocity evaluated `tau` seconds ahead.
    pub(crate) fn rates_after(&self, tau: f64, order: IntegrationOrder) -> Result<(Vec3, Vec3)> {
        Ok(match order {
            IntegrationOrder::First => (self.v_bar, self.w),
            IntegrationOrder::Second => (self.v_bar + self.a_bar * tau, self.w + self.eps * tau),
            IntegrationOrder::Third => {
                let t = self.third_terms(order)?;
                let q = 0.5 * tau * tau;
                (self.v_bar + self.a_bar * tau + t.jerk * q, self.w + self.eps * tau + t.angular_jerk * q)
            }
        })
    }
}

/// Particle velocity `w × (P − P_c) + v_c`.
pub fn composite_velocity(p: Vec3, raw: &RawCenterParams) -> Vec3 {
    raw.angular_velocity.cross(p - raw.center) + raw.center_velocity
}

/// Folds the center position into `v̄ = v_c − w × P_c` and `ā = a_c − ε × P_c`.
pub fn to_equivalent(raw: &RawCenterParams) -> DynamicsParams {
    DynamicsParams {
        v_bar: raw.center_velocity - raw.angular_velocity.cross(raw.center),
        a_bar: raw.center_acceleration - raw.angular_acceleration.cross(raw.center),
        w: raw.angular_velocity,
        eps: raw.angular_acceleration,
        third: None,
    }
}

/// Particle velocity `w × P + v̄`.
pub fn velocity_from_equivalent(p: Vec3, params: &DynamicsParams) -> Vec3 {
    params.w.cross(p) + params.v_bar
}

/// Shifts the parameter state by `dt` along its own Taylor polynomial.
pub fn propagate_params(params: &DynamicsParams, dt: f64, order: IntegrationOrder) -> Result<DynamicsParams> {
    let mut out = *params;
    match order {
        IntegrationOrder::First => {}
        IntegrationOrder::Second => {
            out.v_bar = params.v_bar + params.a_bar * dt;
            out.w = params.w + params.eps * dt;
        }
        IntegrationOrder::Third => {
            let t = params.third_terms(order)?;
            let q = 0.5 * dt * dt;
            out.v_bar = params.v_bar + params.a_bar * dt + t.jerk * q;
            out.a_bar = params.a_bar + t.jerk * dt;
            out.w = params.w + params.eps * dt + t.angular_jerk * q;
            out.eps = params.eps + t.angular_jerk * dt;
        }
    }
    Ok(out)
}

/// Advances `particle` by `dt` under `params`.
///
/// Rates are taken at the half step. The position update evaluates the
/// rotational term at the explicit half-step position, which keeps the scheme
/// second order on curved paths; the orientation is left-multiplied by the
/// Rodrigues rotation of angle `dt·|w_mid|` about `w_mid`. Scale, color and
/// opacity pass through untouched.
pub fn rk2_step(particle: &RigidParticle, params: &DynamicsParams, dt: f64, order: IntegrationOrder) -> Result<RigidParticle> {
    let half = 0.5 * dt;
    let (v_mid, w_mid) = params.rates_after(half, order)?;
    let x = particle.position;
    let x_half = x + (params.v_bar + params.w.cross(x)) * half;
    let position = x + (v_mid + w_mid.cross(x_half)) * dt;

    let speed = w_mid.norm();
    let orientation = if speed < MIN_ANGULAR_SPEED {
        particle.orientation
    } else {
        let delta = rodrigues(w_mid * (1.0 / speed), dt * speed)?;
        shepperd(&(delta * particle.orientation.to_rotation_matrix()))
    };
    Ok(RigidParticle { position, orientation, ..*particle })
}

/// Whether a rollout derives future parameters or re-reads them every step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutMode {
    Derive,
    Requery,
}

impl std::fmt::Display for RolloutMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RolloutMode::Derive => "derive",
            RolloutMode::Requery => "requery",
        })
    }
}

/// Anything that can hand out per-particle dynamics parameters.
pub trait ParamSource: Sync {
    fn params_at(&self, id: usize, position: Vec3, t: f64) -> Result<DynamicsParams>;

    /// Time at which the stored parameters are valid, when they do not
    /// depend on the query time. Derivation starts from here.
    fn anchor_time(&self) -> Option<f64> {
        None
    }
}

impl ParamSource for DynamicsParams {
    fn params_at(&self, _id: usize, _position: Vec3, _t: f64) -> Result<DynamicsParams> {
        Ok(*self)
    }
}

/// Parameters valid at `t` under derivation: an anchored source is read at
/// its anchor and propagated, any other source is read at `t` directly.
pub fn derived_params_at(
    source: &dyn ParamSource,
    id: usize,
    position: Vec3,
    t: f64,
    order: IntegrationOrder,
) -> Result<DynamicsParams> {
    match source.anchor_time() {
        Some(anchor) => propagate_params(&source.params_at(id, position, anchor)?, t - anchor, order),
        None => source.params_at(id, position, t),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutSettings {
    pub t0: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub mode: RolloutMode,
    pub order: IntegrationOrder,
}

/// States at `t0 + k·dt` for `k = 0..=n_steps`, starting with `particle`.
pub fn rollout(particle: &RigidParticle, id: usize, source: &dyn ParamSource, settings: &RolloutSettings) -> Result<Vec<RigidParticle>> {
    let RolloutSettings { t0, n_steps, dt, mode, order } = *settings;
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(*particle);
    let mut state = *particle;
    match mode {
        RolloutMode::Derive => {
            let mut params = derived_params_at(source, id, state.position, t0, order)?;
            for _ in 0..n_steps {
                state = rk2_step(&state, &params, dt, order)?;
                params = propagate_params(&params, dt, order)?;
                states.push(state);
            }
        }
        RolloutMode::Requery => {
            for k in 0..n_steps {
                let params = source.params_at(id, state.position, t0 + k as f64 * dt)?;
                state = rk2_step(&state, &params, dt, order)?;
                states.push(state);
            }
        }
    }
    Ok(states)
}

/// Independent rollouts of every particle; `result[i]` belongs to `particles[i]`.
pub fn rollout_all(particles: &[RigidParticle], source: &dyn ParamSource, settings: &RolloutSettings) -> Result<Vec<Vec<RigidParticle>>> {
    particles
        .par_iter()
        .enumerate()
        .map(|(id, p)| rollout(p, id, source, settings))
        .collect()
}

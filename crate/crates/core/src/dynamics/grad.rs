//! Reverse-mode derivatives of the RK2 step and of parameter propagation.
//!
//! The orientation is carried as a raw quaternion here: the Rodrigues update
//! `ΔR` equals the rotation matrix of `Δq = (cos(dt·n/2), sin(dt·n/2)·w/n)`
//! with `n = |w_mid|`, and differentiating `Δq ⊗ q` avoids the branchy
//! matrix-to-quaternion conversion.

use super::{DynamicsParams, IntegrationOrder, ThirdOrderTerms};
use crate::error::Result;
use crate::geometry::{Quaternion, Vec3};

/// Below `h·n` of this size, `sin(h n)/n` and its derivative use series.
const SERIES_THRESHOLD: f64 = 1e-2;

/// Intermediate values of one step, needed for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct StepTape {
    dt: f64,
    order: IntegrationOrder,
    x: Vec3,
    q: Quaternion,
    w0: Vec3,
    w_mid: Vec3,
    x_half: Vec3,
    dq: Quaternion,
}

/// `sin(h n)/n` and `(d/dn)(sin(h n)/n) / n`.
fn sinc_terms(h: f64, n: f64) -> (f64, f64) {
    let u = h * n;
    if u.abs() < SERIES_THRESHOLD {
        let u2 = u * u;
        (h * (1.0 - u2 / 6.0 + u2 * u2 / 120.0), h * h * h * (-1.0 / 3.0 + u2 / 30.0))
    } else {
        let (s, c) = u.sin_cos();
        (s / n, (u * c - s) / (n * n * n))
    }
}

pub(crate) fn step_forward(x: Vec3, q: &Quaternion, p: &DynamicsParams, dt: f64, order: IntegrationOrder) -> Result<(Vec3, Quaternion, StepTape)> {
    let h = 0.5 * dt;
    let (v_mid, w_mid) = p.rates_after(h, order)?;
    let x_half = x + (p.v_bar + p.w.cross(x)) * h;
    let x_out = x + (v_mid + w_mid.cross(x_half)) * dt;
    let n = w_mid.norm();
    let (s, _) = sinc_terms(h, n);
    let dq = Quaternion::new((h * n).cos(), s * w_mid.x, s * w_mid.y, s * w_mid.z);
    let q_out = dq.hamilton(q);
    let tape = StepTape { dt, order, x, q: *q, w0: p.w, w_mid, x_half, dq };
    Ok((x_out, q_out, tape))
}

/// Pulls gradients on `(x_out, q_out)` back to `(x, q, params)`.
pub(crate) fn step_backward(tape: &StepTape, gx_out: Vec3, gq_out: &Quaternion) -> (Vec3, Quaternion, DynamicsParams) {
    let StepTape { dt, order, x, q, w0, w_mid, x_half, dq } = tape;
    let (dt, h) = (*dt, 0.5 * *dt);

    // x_out = x + dt·(v_mid + w_mid × x_half)
    let g_vmid = gx_out * dt;
    let mut g_wmid = x_half.cross(gx_out) * dt;
    let g_xhalf = gx_out.cross(*w_mid) * dt;

    // x_half = x + h·(v0 + w0 × x)
    let gx = gx_out + g_xhalf + g_xhalf.cross(*w0) * h;
    let g_v0 = g_xhalf * h;
    let g_w0 = x.cross(g_xhalf) * h;

    // q_out = dq ⊗ q; both factor Jacobians are orthogonal up to scale
    let gq = dq.conjugate().hamilton(gq_out);
    let g_dq = gq_out.hamilton(&q.conjugate());

    let n = w_mid.norm();
    let (s, ds_over_n) = sinc_terms(h, n);
    let g_vec = g_dq.vector();
    g_wmid += *w_mid * (-h * s * g_dq.w) + g_vec * s + *w_mid * (ds_over_n * w_mid.dot(g_vec));

    let mut g = DynamicsParams::zeros(*order);
    g.v_bar = g_vmid + g_v0;
    g.w = g_wmid + g_w0;
    match order {
        IntegrationOrder::First => {}
        IntegrationOrder::Second => {
            g.a_bar = g_vmid * h;
            g.eps = g_wmid * h;
        }
        IntegrationOrder::Third => {
            g.a_bar = g_vmid * h;
            g.eps = g_wmid * h;
            let q2 = 0.5 * h * h;
            g.third = Some(ThirdOrderTerms { jerk: g_vmid * q2, angular_jerk: g_wmid * q2 });
        }
    }
    (gx, gq, g)
}

/// Adjoint of [`super::propagate_params`] for a fixed `dt`.
pub(crate) fn propagate_adjoint(g_out: &DynamicsParams, dt: f64, order: IntegrationOrder) -> DynamicsParams {
    let mut g = *g_out;
    match order {
        IntegrationOrder::First => {}
        IntegrationOrder::Second => {
            g.a_bar = g_out.a_bar + g_out.v_bar * dt;
            g.eps = g_out.eps + g_out.w * dt;
        }
        IntegrationOrder::Third => {
            let t = g_out.third.unwrap_or_default();
            let q = 0.5 * dt * dt;
            g.a_bar = g_out.a_bar + g_out.v_bar * dt;
            g.eps = g_out.eps + g_out.w * dt;
            g.third = Some(ThirdOrderTerms {
                jerk: t.jerk + g_out.a_bar * dt + g_out.v_bar * q,
                angular_jerk: t.angular_jerk + g_out.eps * dt + g_out.w * q,
            });
        }
    }
    g
}

pub(crate) fn add_params(a: &mut DynamicsParams, b: &DynamicsParams) {
    a.v_bar += b.v_bar;
    a.a_bar += b.a_bar;
    a.w += b.w;
    a.eps += b.eps;
    if let (Some(ta), Some(tb)) = (a.third.as_mut(), b.third.as_ref()) {
        ta.jerk += tb.jerk;
        ta.angular_jerk += tb.angular_jerk;
    } else if a.third.is_none() && b.third.is_some() {
        a.third = b.third;
    }
}

//! CPU splatting of anisotropic Gaussians with front-to-back alpha blending.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::RigidParticle;
use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3, ROTATION_TOLERANCE};
use crate::ply::{color_to_u8, write_ply};

/// Added to the diagonal of every projected covariance (px²).
pub const COVARIANCE_FLOOR: f64 = 0.3;
pub const MAX_ALPHA: f64 = 0.99;
/// Blending stops once transmittance falls below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Squared Mahalanobis radius beyond which a splat contributes nothing.
pub const CUTOFF_MAHALANOBIS2: f64 = 9.0;

/// Pinhole camera with OpenCV axes (x right, y down, z forward) and pixel
/// centers at integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    /// World-to-camera rigid transform, row-major.
    #[serde(rename = "W")]
    pub world_to_camera: [[f64; 4]; 4],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("camera: {m}")));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad(format!("focal lengths must be positive, got {} and {}", self.fx, self.fy));
        }
        if self.width == 0 || self.height == 0 {
            return bad("resolution must be non-zero".into());
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) || self.world_to_camera.iter().flatten().any(|v| !v.is_finite()) {
            return bad("non-finite entry".into());
        }
        if self.world_to_camera[3] != [0.0, 0.0, 0.0, 1.0] {
            return bad("last row of W must be 0 0 0 1".into());
        }
        if !self.rotation().is_rotation(ROTATION_TOLERANCE) {
            return bad("rotation part of W is not a proper rotation".into());
        }
        Ok(())
    }

    pub fn rotation(&self) -> Mat3 {
        let w = &self.world_to_camera;
        Mat3::from_rows([[w[0][0], w[0][1], w[0][2]], [w[1][0], w[1][1], w[1][2]], [w[2][0], w[2][1], w[2][2]]])
    }

    pub fn translation(&self) -> Vec3 {
        let w = &self.world_to_camera;
        Vec3::new(w[0][3], w[1][3], w[2][3])
    }

    pub fn to_camera(&self, x: Vec3) -> Vec3 {
        self.rotation() * x + self.translation()
    }

    /// Camera at `eye` looking at `target`, with `up` pointing up in the image.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y: f64, width: u32, height: u32) -> Result<Camera> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidConfig("camera eye coincides with target".into()))?;
        let right = forward
            .cross(up)
            .try_normalize(1e-9)
            .ok_or_else(|| Error::InvalidConfig("camera up vector is parallel to the view direction".into()))?;
        let down = forward.cross(right);
        let r = Mat3::from_rows([right.to_array(), down.to_array(), forward.to_array()]);
        let t = -(r * eye);
        let f = 0.5 * height as f64 / (0.5 * fov_y).tan();
        let cam = Camera {
            world_to_camera: [
                [right.x, right.y, right.z, t.x],
                [down.x, down.y, down.z, t.y],
                [forward.x, forward.y, forward.z, t.z],
                [0.0, 0.0, 0.0, 1.0],
            ],
            fx: f,
            fy: f,
            cx: 0.5 * (width as f64 - 1.0),
            cy: 0.5 * (height as f64 - 1.0),
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// A view from above and to the side that frames every point.
    pub fn framing(points: &[Vec3], width: u32, height: u32) -> Result<Camera> {
        if points.is_empty() {
            return Err(Error::EmptyInput("points to frame"));
        }
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in points {
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        let center = (lo + hi) * 0.5;
        let radius = ((hi - lo).norm() * 0.5).max(0.1);
        let fov = 50f64.to_radians();
        let dist = 1.15 * radius / (0.5 * fov).sin();
        let dir = Vec3::new(0.6, -1.0, 0.7).try_normalize(0.0).expect("non-zero");
        Camera::look_at(center + dir * dist, center, Vec3::Z, fov, width, height)
    }

    pub fn read(path: &Path) -> Result<Camera> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cam: Camera = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("camera serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub background: [f64; 3],
    /// Splats at or in front of this camera depth are culled (m).
    pub near: f64,
    /// Write coverage into the PNG alpha channel instead of an opaque image.
    pub transparent: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { background: [0.0; 3], near: 0.01, transparent: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat2D {
    pub id: usize,
    pub mean: [f64; 2],
    /// Floored image-plane covariance (px²).
    pub cov: [[f64; 2]; 2],
    pub depth: f64,
    pub color: [f64; 3],
    pub opacity: f64,
}

impl Splat2D {
    fn conic(&self) -> [f64; 3] {
        let [[a, b], [_, c]] = self.cov;
        let det = a * c - b * b;
        [c / det, -b / det, a / det]
    }

    /// Opacity of this splat at pixel `(u, v)`, before the clamp.
    pub fn alpha_at(&self, u: f64, v: f64) -> f64 {
        let [ia, ib, ic] = self.conic();
        let (du, dv) = (u - self.mean[0], v - self.mean[1]);
        let m2 = ia * du * du + 2.0 * ib * du * dv + ic * dv * dv;
        if m2 > CUTOFF_MAHALANOBIS2 {
            0.0
        } else {
            (self.opacity * (-0.5 * m2).exp()).min(MAX_ALPHA)
        }
    }
}

/// World covariance `R S Sᵀ Rᵀ` of a particle.
pub fn world_covariance(p: &RigidParticle) -> Mat3 {
    let r = p.orientation.to_rotation_matrix();
    let s2 = Mat3::from_diagonal(p.scale.component_mul(p.scale));
    r * s2 * r.transpose()
}

/// Projects one particle; `None` when it is behind the near plane or its
/// footprint misses the image entirely.
pub fn project_gaussian(p: &RigidParticle, id: usize, camera: &Camera, near: f64) -> Option<Splat2D> {
    let c = camera.to_camera(p.position);
    if !(c.z > near) {
        return None;
    }
    let (z, z2) = (c.z, c.z * c.z);
    let u = camera.fx * c.x / z + camera.cx;
    let v = camera.fy * c.y / z + camera.cy;
    let j = [[camera.fx / z, 0.0, -camera.fx * c.x / z2], [0.0, camera.fy / z, -camera.fy * c.y / z2]];
    let w = camera.rotation();
    let sigma_cam = w * world_covariance(p) * w.transpose();
    let mut cov = [[0.0; 2]; 2];
    for (a, ja) in j.iter().enumerate() {
        for (b, jb) in j.iter().enumerate() {
            let mut s = 0.0;
            for k in 0..3 {
                for l in 0..3 {
                    s += ja[k] * sigma_cam.get(k, l) * jb[l];
                }
            }
            cov[a][b] = s;
        }
    }
    cov[0][1] = 0.5 * (cov[0][1] + cov[1][0]);
    cov[1][0] = cov[0][1];
    cov[0][0] += COVARIANCE_FLOOR;
    cov[1][1] += COVARIANCE_FLOOR;
    let (ru, rv) = (3.0 * cov[0][0].sqrt(), 3.0 * cov[1][1].sqrt());
    if u < -ru || u > camera.width as f64 - 1.0 + ru || v < -rv || v > camera.height as f64 - 1.0 + rv {
        return None;
    }
    Some(Splat2D { id, mean: [u, v], cov, depth: z, color: p.color, opacity: p.opacity.clamp(0.0, 1.0) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    /// Composited color over the background, row-major.
    pub color: Vec<[f64; 3]>,
    /// Coverage `1 − Π(1 − αᵢ)`.
    pub alpha: Vec<f64>,
}

impl Image {
    pub fn pixel(&self, x: u32, y: u32) -> ([f64; 3], f64) {
        let i = (y * self.width + x) as usize;
        (self.color[i], self.alpha[i])
    }

    pub fn to_rgba8(&self, transparent: bool) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 * self.color.len());
        for (c, a) in self.color.iter().zip(&self.alpha) {
            out.extend_from_slice(&color_to_u8(*c));
            out.push(if transparent { (a.clamp(0.0, 1.0) * 255.0).round() as u8 } else { 255 });
        }
        out
    }

    pub fn write_png(&self, path: &Path, transparent: bool) -> Result<()> {
        image::save_buffer_with_format(path, &self.to_rgba8(transparent), self.width, self.height, image::ColorType::Rgba8, image::ImageFormat::Png)
            .map_err(|e| Error::Image { path: path.to_path_buf(), source: e })
    }

    /// Coverage-weighted pixel centroid; `None` for an empty image.
    pub fn alpha_centroid(&self) -> Option<[f64; 2]> {
        let (mut su, mut sv, mut sw) = (0.0, 0.0, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let a = self.alpha[(y * self.width + x) as usize];
                su += a * x as f64;
                sv += a * y as f64;
                sw += a;
            }
        }
        (sw > 0.0).then(|| [su / sw, sv / sw])
    }
}

/// Renders `particles` (their index is the tie-breaking id).
pub fn splat_image(particles: &[RigidParticle], camera: &Camera, cfg: &RenderConfig) -> Result<Image> {
    camera.validate()?;
    let mut splats: Vec<Splat2D> = particles.iter().enumerate().filter_map(|(i, p)| project_gaussian(p, i, camera, cfg.near)).collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.id.cmp(&b.id)));
    let bounds: Vec<([f64; 2], [f64; 2])> = splats
        .iter()
        .map(|s| {
            let (ru, rv) = (3.0 * s.cov[0][0].sqrt(), 3.0 * s.cov[1][1].sqrt());
            ([s.mean[0] - ru, s.mean[0] + ru], [s.mean[1] - rv, s.mean[1] + rv])
        })
        .collect();
    let (w, h) = (camera.width as usize, camera.height as usize);
    let rows: Vec<(Vec<[f64; 3]>, Vec<f64>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let v = y as f64;
            let active: Vec<usize> = (0..splats.len()).filter(|&i| bounds[i].1[0] <= v && v <= bounds[i].1[1]).collect();
            let mut colors = Vec::with_capacity(w);
            let mut alphas = Vec::with_capacity(w);
            for x in 0..w {
                let u = x as f64;
                let mut t = 1.0;
                let mut c = [0.0; 3];
                for &i in &active {
                    if u < bounds[i].0[0] || u > bounds[i].0[1] {
                        continue;
                    }
                    let s = &splats[i];
                    let a = s.alpha_at(u, v);
                    if a <= 0.0 {
                        continue;
                    }
                    for k in 0..3 {
                        c[k] += t * a * s.color[k];
                    }
                    t *= 1.0 - a;
                    if t < MIN_TRANSMITTANCE {
                        break;
                    }
                }
                for k in 0..3 {
                    c[k] += t * cfg.background[k];
                }
                colors.push(c);
                alphas.push(1.0 - t);
            }
            (colors, alphas)
        })
        .collect();
    let mut img = Image { width: camera.width, height: camera.height, color: Vec::with_capacity(w * h), alpha: Vec::with_capacity(w * h) };
    for (c, a) in rows {
        img.color.extend(c);
        img.alpha.extend(a);
    }
    Ok(img)
}

/// Particle centers and colors as a binary PLY.
pub fn write_particles_ply(particles: &[RigidParticle], path: &Path) -> Result<()> {
    let points: Vec<Vec3> = particles.iter().map(|p| p.position).collect();
    let colors: Vec<[u8; 3]> = particles.iter().map(|p| color_to_u8(p.color)).collect();
    write_ply(path, &points, Some(&colors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn axis_camera(w: u32, h: u32) -> Camera {
        Camera {
            world_to_camera: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
            fx: 100.0,
            fy: 100.0,
            cx: (w / 2) as f64,
            cy: (h / 2) as f64,
            width: w,
            height: h,
        }
    }

    fn splat_particle(pos: Vec3, sigma: f64, color: [f64; 3], opacity: f64) -> RigidParticle {
        RigidParticle { position: pos, orientation: UnitQuaternion::IDENTITY, scale: Vec3::splat(sigma), color, opacity }
    }

    #[test]
    fn on_axis_particle_projects_to_principal_point() {
        let cam = axis_camera(64, 48);
        let s = project_gaussian(&splat_particle(Vec3::new(0.0, 0.0, 2.0), 0.01, [1.0; 3], 1.0), 0, &cam, 0.01).unwrap();
        assert_eq!(s.mean, [32.0, 24.0]);
        assert_eq!(s.depth, 2.0);
    }

    #[test]
    fn isotropic_covariance_scales_with_depth() {
        let cam = axis_camera(200, 200);
        for (sigma, z) in [(0.02, 2.0), (0.05, 4.0), (0.01, 1.0)] {
            let s = project_gaussian(&splat_particle(Vec3::new(0.01, -0.02, z), sigma, [1.0; 3], 1.0), 0, &cam, 0.01).unwrap();
            let expected = (cam.fx * sigma / z).powi(2);
            for k in 0..2 {
                let got = s.cov[k][k] - COVARIANCE_FLOOR;
                assert!((got / expected - 1.0).abs() < 0.01, "{got} vs {expected}");
            }
            assert!(s.cov[0][1].abs() < 0.01 * expected);
        }
    }

    #[test]
    fn culling() {
        let cam = axis_camera(64, 48);
        assert!(project_gaussian(&splat_particle(Vec3::new(0.0, 0.0, -1.0), 0.01, [1.0; 3], 1.0), 0, &cam, 0.01).is_none());
        assert!(project_gaussian(&splat_particle(Vec3::new(0.0, 0.0, 0.005), 0.01, [1.0; 3], 1.0), 0, &cam, 0.01).is_none());
        assert!(project_gaussian(&splat_particle(Vec3::new(50.0, 0.0, 1.0), 0.01, [1.0; 3], 1.0), 0, &cam, 0.01).is_none());
        // just off screen but its footprint still reaches in
        assert!(project_gaussian(&splat_particle(Vec3::new(0.33, 0.0, 1.0), 0.01, [1.0; 3], 1.0), 0, &cam, 0.01).is_some());
    }

    #[test]
    fn anisotropic_covariance_follows_orientation() {
        let cam = axis_camera(200, 200);
        let mut p = splat_particle(Vec3::new(0.0, 0.0, 2.0), 0.0, [1.0; 3], 1.0);
        p.scale = Vec3::new(0.1, 0.01, 0.01);
        p.orientation = UnitQuaternion::from_axis_angle(Vec3::Z, std::f64::consts::FRAC_PI_2);
        let s = project_gaussian(&p, 0, &cam, 0.01).unwrap();
        assert!(s.cov[1][1] > 20.0 * s.cov[0][0]);
    }

    #[test]
    fn empty_scene_is_background() {
        let cam = axis_camera(8, 6);
        let cfg = RenderConfig { background: [0.1, 0.2, 0.3], ..Default::default() };
        let img = splat_image(&[], &cam, &cfg).unwrap();
        assert!(img.color.iter().all(|c| *c == [0.1, 0.2, 0.3]));
        assert!(img.alpha.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn single_splat_blends_with_background() {
        let cam = axis_camera(32, 32);
        let bg = [0.2, 0.4, 0.6];
        let c = [0.9, 0.1, 0.3];
        let img = splat_image(&[splat_particle(Vec3::new(0.0, 0.0, 1.0), 0.02, c, 0.8)], &cam, &RenderConfig { background: bg, ..Default::default() }).unwrap();
        let (px, a) = img.pixel(16, 16);
        for k in 0..3 {
            assert!((px[k] - (0.8 * c[k] + 0.2 * bg[k])).abs() < 1e-15);
        }
        assert!((a - 0.8).abs() < 1e-15);
    }

    #[test]
    fn two_aligned_splats() {
        let cam = axis_camera(32, 32);
        let red = splat_particle(Vec3::new(0.0, 0.0, 1.0), 0.02, [1.0, 0.0, 0.0], 0.5);
        let blue = splat_particle(Vec3::new(0.0, 0.0, 2.0), 0.04, [0.0, 0.0, 1.0], 0.5);
        let bg = [0.0, 1.0, 0.0];
        // listed back to front; depth sorting must fix it
        let img = splat_image(&[blue, red], &cam, &RenderConfig { background: bg, ..Default::default() }).unwrap();
        let (px, _) = img.pixel(16, 16);
        assert!((px[0] - 0.5).abs() < 1e-15);
        assert!((px[2] - 0.25).abs() < 1e-15);
        assert!((px[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn opacity_clamps_below_one() {
        let cam = axis_camera(16, 16);
        let img = splat_image(&[splat_particle(Vec3::new(0.0, 0.0, 1.0), 0.02, [1.0; 3], 1.0)], &cam, &RenderConfig::default()).unwrap();
        assert!((img.pixel(8, 8).1 - MAX_ALPHA).abs() < 1e-15);
    }

    #[test]
    fn alpha_matches_transmittance_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cam = axis_camera(24, 24);
        for _ in 0..20 {
            let parts: Vec<RigidParticle> = (0..10)
                .map(|_| {
                    let pos = Vec3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(1.0..3.0));
                    let mut p = splat_particle(pos, rng.random_range(0.01..0.05), [rng.random(), rng.random(), rng.random()], rng.random_range(0.05..0.5));
                    p.scale = Vec3::new(rng.random_range(0.01..0.05), rng.random_range(0.01..0.05), rng.random_range(0.01..0.05));
                    p.orientation = UnitQuaternion::from_axis_angle(Vec3::new(1.0, 1.0, 0.0).try_normalize(0.0).unwrap(), rng.random_range(0.0..3.0));
                    p
                })
                .collect();
            let img = splat_image(&parts, &cam, &RenderConfig::default()).unwrap();
            let splats: Vec<Splat2D> = parts.iter().enumerate().filter_map(|(i, p)| project_gaussian(p, i, &cam, 0.01)).collect();
            for y in 0..24 {
                for x in 0..24 {
                    let product: f64 = splats.iter().map(|s| 1.0 - s.alpha_at(x as f64, y as f64)).product();
                    assert!((img.pixel(x, y).1 - (1.0 - product)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn depth_ties_break_by_id() {
        let cam = axis_camera(16, 16);
        let a = splat_particle(Vec3::new(0.0, 0.0, 1.0), 0.02, [1.0, 0.0, 0.0], 0.5);
        let b = splat_particle(Vec3::new(0.0, 0.0, 1.0), 0.02, [0.0, 0.0, 1.0], 0.5);
        let ab = splat_image(&[a, b], &cam, &RenderConfig::default()).unwrap();
        let ba = splat_image(&[b, a], &cam, &RenderConfig::default()).unwrap();
        assert_eq!(ab.pixel(8, 8).0, [0.5, 0.0, 0.25]);
        assert_eq!(ba.pixel(8, 8).0, [0.25, 0.0, 0.5]);
    }

    #[test]
    fn look_at_faces_the_target() {
        let cam = Camera::look_at(Vec3::new(3.0, -2.0, 1.0), Vec3::new(0.5, 0.5, 0.0), Vec3::Z, 0.8, 40, 30).unwrap();
        let s = project_gaussian(&splat_particle(Vec3::new(0.5, 0.5, 0.0), 0.01, [1.0; 3], 1.0), 0, &cam, 0.01).unwrap();
        assert!((s.mean[0] - cam.cx).abs() < 1e-9 && (s.mean[1] - cam.cy).abs() < 1e-9);
        // a point above the target appears higher in the image
        let up = project_gaussian(&splat_particle(Vec3::new(0.5, 0.5, 0.2), 0.01, [1.0; 3], 1.0), 0, &cam, 0.01).unwrap();
        assert!(up.mean[1] < s.mean[1]);
        assert!(Camera::look_at(Vec3::ZERO, Vec3::ZERO, Vec3::Z, 0.8, 4, 4).is_err());
        assert!(Camera::look_at(Vec3::ZERO, Vec3::Z, Vec3::Z, 0.8, 4, 4).is_err());
    }

    #[test]
    fn camera_validation_and_json() {
        let mut cam = axis_camera(4, 4);
        cam.validate().unwrap();
        let text = serde_json::to_string(&cam).unwrap();
        assert!(text.contains("\"W\""));
        assert_eq!(serde_json::from_str::<Camera>(&text).unwrap(), cam);
        assert!(serde_json::from_str::<Camera>(&text.replacen('{', "{\"zoom\":1,", 1)).is_err());
        cam.world_to_camera[0][0] = -1.0;
        assert!(cam.validate().is_err());
        let mut cam = axis_camera(4, 4);
        cam.fx = 0.0;
        assert!(cam.validate().is_err());
    }

    #[test]
    fn png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image { width: 1, height: 1, color: vec![[1.0, 0.0, 0.0]], alpha: vec![1.0] };
        let path = dir.path().join("red.png");
        img.write_png(&path, false).unwrap();
        let back = image::open(&path).unwrap().to_rgba8();
        assert_eq!(back.dimensions(), (1, 1));
        assert_eq!(back.get_pixel(0, 0).0, [255, 0, 0, 255]);
    }

    #[test]
    fn ply_keeps_particle_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ply");
        let parts: Vec<RigidParticle> = (0..7).map(|i| splat_particle(Vec3::X * i as f64, 0.01, [0.5; 3], 1.0)).collect();
        write_particles_ply(&parts, &path).unwrap();
        assert_eq!(crate::ply::read_ply_points(&path).unwrap().len(), 7);
    }

    #[test]
    fn rendering_is_deterministic_across_thread_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let parts: Vec<RigidParticle> = (0..200)
            .map(|_| splat_particle(Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(1.5..2.5)), 0.03, [rng.random(), rng.random(), rng.random()], 0.6))
            .collect();
        let cam = axis_camera(64, 64);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| splat_image(&parts, &cam, &RenderConfig::default())).unwrap();
        let b = four.install(|| splat_image(&parts, &cam, &RenderConfig::default())).unwrap();
        assert_eq!(a.to_rgba8(true), b.to_rgba8(true));
        assert_eq!(a, b);
    }
}

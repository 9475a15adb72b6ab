//! Small fixed-size linear algebra for rigid rotations.
//!
//! Quaternions are scalar-first with the Hamilton product. Unit quaternions are
//! kept in the canonical hemisphere `w >= 0` so that round trips through
//! rotation matrices compare equal component-wise.

use std::ops::{Add, AddAssign, Index, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|axis| - 1` accepted by [`rodrigues`].
pub const AXIS_TOLERANCE: f64 = 1e-9;
/// Tolerance on `|q| - 1` accepted by [`quat_to_rotmat`] without normalization.
pub const QUATERNION_TOLERANCE: f64 = 1e-6;
/// Tolerance on orthonormality accepted by [`rotmat_to_quat`].
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn splat(v: f64) -> Self {
        Self::new(v, v, v)
    }

    #[inline]
    pub fn dot(self, rhs: Vec3) -> f64 {
        self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    #[inline]
    pub fn cross(self, rhs: Vec3) -> Vec3 {
        Vec3::new(
            self.y * rhs.z - self.z * rhs.y,
            self.z * rhs.x - self.x * rhs.z,
            self.x * rhs.y - self.y * rhs.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` below `min_norm`.
    pub fn try_normalize(self, min_norm: f64) -> Option<Vec3> {
        let n = self.norm();
        (n > min_norm).then(|| self * (1.0 / n))
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn from_slice(s: &[f64]) -> Vec3 {
        Vec3::new(s[0], s[1], s[2])
    }

    pub fn max_abs_diff(self, rhs: Vec3) -> f64 {
        let d = self - rhs;
        d.x.abs().max(d.y.abs()).max(d.z.abs())
    }

    pub fn component_mul(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x * rhs.x, self.y * rhs.y, self.z * rhs.z)
    }

    /// Angle between two non-zero vectors, in `[0, π]`.
    pub fn angle_to(self, rhs: Vec3) -> f64 {
        self.cross(rhs).norm().atan2(self.dot(rhs))
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, rhs: Vec3) {
        *self = *self - rhs;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl MulAssign<f64> for Vec3 {
    #[inline]
    fn mul_assign(&mut self, s: f64) {
        *self = *self * s;
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl std::iter::Sum for Vec3 {
    fn sum<I: Iterator<Item = Vec3>>(iter: I) -> Vec3 {
        iter.fold(Vec3::ZERO, Add::add)
    }
}

/// 3×3 matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat3 {
    pub rows: [[f64; 3]; 3],
}

impl Default for Mat3 {
    fn default() -> Self {
        Mat3::IDENTITY
    }
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 { rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };
    pub const ZERO: Mat3 = Mat3 { rows: [[0.0; 3]; 3] };

    pub const fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        Mat3 { rows }
    }

    pub fn from_diagonal(d: Vec3) -> Self {
        Mat3::from_rows([[d.x, 0.0, 0.0], [0.0, d.y, 0.0], [0.0, 0.0, d.z]])
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.rows[r][c]
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.rows;
        Mat3::from_rows([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.rows;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> f64 {
        self.rows[0][0] + self.rows[1][1] + self.rows[2][2]
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut out = *self;
        out.rows.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    pub fn max_abs_diff(&self, rhs: &Mat3) -> f64 {
        self.rows
            .iter()
            .flatten()
            .zip(rhs.rows.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }

    /// Largest entry of `|MᵀM − I|`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.transpose() * *self).max_abs_diff(&Mat3::IDENTITY)
    }

    pub fn is_rotation(&self, tol: f64) -> bool {
        self.is_finite() && self.orthogonality_error() <= tol && (self.determinant() - 1.0).abs() <= tol
    }

    pub fn column(&self, c: usize) -> Vec3 {
        Vec3::new(self.rows[0][c], self.rows[1][c], self.rows[2][c])
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, rhs: Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.rows[r][k] * rhs.rows[k][c]).sum();
            }
        }
        Mat3::from_rows(out)
    }
}

impl Mul<Vec3> for Mat3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        let m = &self.rows;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, rhs: Mat3) -> Mat3 {
        let mut out = self;
        for (a, b) in out.rows.iter_mut().flatten().zip(rhs.rows.iter().flatten()) {
            *a += b;
        }
        out
    }
}

/// Quaternion with no norm constraint, scalar first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn conjugate(&self) -> Quaternion {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self ⊗ rhs`.
    #[inline]
    pub fn hamilton(&self, rhs: &Quaternion) -> Quaternion {
        let (a, b) = (self, rhs);
        Quaternion::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

/// Rotation quaternion: unit norm, canonical sign `w >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion(Quaternion);

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion(Quaternion::new(1.0, 0.0, 0.0, 0.0));

    /// Normalizes and canonicalizes `q`. Fails on a zero or non-finite input.
    pub fn new_normalize(q: Quaternion) -> Result<Self> {
        let n = q.norm();
        if !(n.is_finite() && n > 1e-300) {
            return Err(Error::NonUnitQuaternion { norm: n });
        }
        Ok(Self::canonical(Quaternion::new(q.w / n, q.x / n, q.y / n, q.z / n)))
    }

    /// Accepts `q` when it is unit within [`QUATERNION_TOLERANCE`].
    pub fn new_checked(q: Quaternion) -> Result<Self> {
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > QUATERNION_TOLERANCE {
            return Err(Error::NonUnitQuaternion { norm: n });
        }
        // Leave already-normalized input bit-exact.
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(Self::canonical(q));
        }
        Self::new_normalize(q)
    }

    fn canonical(q: Quaternion) -> Self {
        if q.w < 0.0 {
            UnitQuaternion(Quaternion::new(-q.w, -q.x, -q.y, -q.z))
        } else {
            UnitQuaternion(q)
        }
    }

    /// Rotation by `angle` about `axis`; the axis is normalized here.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        match axis.try_normalize(1e-300) {
            Some(u) => {
                let (s, c) = (0.5 * angle).sin_cos();
                Self::canonical(Quaternion::new(c, s * u.x, s * u.y, s * u.z))
            }
            None => Self::IDENTITY,
        }
    }

    #[inline]
    pub fn quaternion(&self) -> &Quaternion {
        &self.0
    }

    pub fn w(&self) -> f64 {
        self.0.w
    }

    pub fn to_array(&self) -> [f64; 4] {
        self.0.to_array()
    }

    pub fn inverse(&self) -> UnitQuaternion {
        UnitQuaternion::canonical(self.0.conjugate())
    }

    /// Composition `self ∘ rhs` (apply `rhs` first), renormalized.
    pub fn compose(&self, rhs: &UnitQuaternion) -> UnitQuaternion {
        let q = self.0.hamilton(&rhs.0);
        let n = q.norm();
        Self::canonical(Quaternion::new(q.w / n, q.x / n, q.y / n, q.z / n))
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        self.to_rotation_matrix() * v
    }

    pub fn to_rotation_matrix(&self) -> Mat3 {
        let Quaternion { w, x, y, z } = self.0;
        Mat3::from_rows([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ])
    }

    /// Geodesic angle between two rotations, in `[0, π]`.
    pub fn angle_to(&self, rhs: &UnitQuaternion) -> f64 {
        let e = self.0.hamilton(&rhs.0.conjugate());
        2.0 * e.vector().norm().atan2(e.w.abs())
    }

    /// Component-wise distance, identifying `q` with `-q`.
    pub fn max_abs_diff(&self, rhs: &UnitQuaternion) -> f64 {
        let a = self.to_array();
        let b = rhs.to_array();
        let plus = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let minus = a.iter().zip(&b).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
        plus.min(minus)
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = Error;
    fn try_from(a: [f64; 4]) -> Result<Self> {
        UnitQuaternion::new_checked(Quaternion::from_array(a))
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.to_array()
    }
}

/// Skew-symmetric matrix `K` with `K·v = k × v`.
pub fn cross_product_matrix(k: Vec3) -> Mat3 {
    Mat3::from_rows([[0.0, -k.z, k.y], [k.z, 0.0, -k.x], [-k.y, k.x, 0.0]])
}

/// Rotation by `angle` about the unit `axis`: `I + sin θ·K + (1 − cos θ)·K²`.
pub fn rodrigues(axis: Vec3, angle: f64) -> Result<Mat3> {
    if angle == 0.0 {
        return Ok(Mat3::IDENTITY);
    }
    let n = axis.norm();
    if !n.is_finite() || (n - 1.0).abs() > AXIS_TOLERANCE {
        return Err(Error::NonUnitAxis { norm: n });
    }
    let k = cross_product_matrix(axis);
    let (s, c) = angle.sin_cos();
    Ok(Mat3::IDENTITY + k.scale(s) + (k * k).scale(1.0 - c))
}

/// Rotation matrix of `q`. Non-unit input is an error unless `normalize` is set.
pub fn quat_to_rotmat(q: &Quaternion, normalize: bool) -> Result<Mat3> {
    let unit = if normalize {
        UnitQuaternion::new_normalize(*q)?
    } else {
        UnitQuaternion::new_checked(*q)?
    };
    Ok(unit.to_rotation_matrix())
}

/// Quaternion of a rotation matrix, via the largest-diagonal branch.
pub fn rotmat_to_quat(r: &Mat3) -> Result<UnitQuaternion> {
    let ortho = r.orthogonality_error();
    let det = r.determinant();
    if !r.is_finite() || ortho > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(Error::NotARotation { orthogonality_error: ortho, determinant: det });
    }
    Ok(shepperd(r))
}

/// Shepperd's method; assumes `r` is a rotation.
pub(crate) fn shepperd(r: &Mat3) -> UnitQuaternion {
    let m = &r.rows;
    let tr = r.trace();
    let candidates = [tr, m[0][0], m[1][1], m[2][2]];
    let mut best = 0;
    for i in 1..4 {
        if candidates[i] > candidates[best] {
            best = i;
        }
    }
    let q = match best {
        0 => {
            let s = 2.0 * (1.0 + tr).sqrt();
            Quaternion::new(0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s)
        }
        1 => {
            let s = 2.0 * (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt();
            Quaternion::new((m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s)
        }
        2 => {
            let s = 2.0 * (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt();
            Quaternion::new((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s)
        }
        _ => {
            let s = 2.0 * (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt();
            Quaternion::new((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s)
        }
    };
    let n = q.norm();
    UnitQuaternion::canonical(Quaternion::new(q.w / n, q.x / n, q.y / n, q.z / n))
}

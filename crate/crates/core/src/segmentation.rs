//! Part segmentation by clustering per-particle motion features, plus a
//! weighted Kabsch fit to check that clusters move rigidly and label metrics.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{derived_params_at, DynamicsParams, IntegrationOrder, ParamSource};
use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};
use crate::ply::{color_to_u8, write_ply};
use crate::scenes::TrajectoryDataset;

pub const FEATURE_DIM: usize = 8;

/// `[‖v̄‖, v̄, ‖w‖, ŵ]`.
pub type MotionFeature = [f64; FEATURE_DIM];

/// Angular speeds below this give a zero axis.
pub const MIN_AXIS_SPEED: f64 = 1e-9;

pub fn motion_features(p: &DynamicsParams) -> MotionFeature {
    let v = p.v_bar;
    let speed = p.w.norm();
    let axis = if speed < MIN_AXIS_SPEED { Vec3::ZERO } else { p.w * (1.0 / speed) };
    [v.norm(), v.x, v.y, v.z, speed, axis.x, axis.y, axis.z]
}

/// Features of every particle of `ds` from `source`, queried at `frame`
/// with the positions observed there.
pub fn dataset_features(ds: &TrajectoryDataset, source: &dyn ParamSource, frame: usize, order: IntegrationOrder) -> Result<Vec<MotionFeature>> {
    if frame >= ds.n_frames() {
        return Err(Error::MalformedData(format!("query frame {frame} beyond {} frames", ds.n_frames())));
    }
    let t = ds.times[frame];
    ds.positions[frame]
        .par_iter()
        .enumerate()
        .map(|(id, &x)| derived_params_at(source, id, x, t, order).map(|p| motion_features(&p)))
        .collect()
}

/// Z-scores each dimension over the set; constant dimensions become zero.
pub fn standardize(features: &mut [MotionFeature]) {
    if features.is_empty() {
        return;
    }
    let n = features.len() as f64;
    for d in 0..FEATURE_DIM {
        let mean = features.iter().map(|f| f[d]).sum::<f64>() / n;
        let var = features.iter().map(|f| (f[d] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for f in features.iter_mut() {
            f[d] = if sd > 1e-12 * (1.0 + mean.abs()) { (f[d] - mean) / sd } else { 0.0 };
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<MotionFeature>,
    pub inertia: f64,
}

impl SegmentationResult {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { max_iters: 300, tol: 1e-6 }
    }
}

fn dist2(a: &MotionFeature, b: &MotionFeature) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(f: &MotionFeature, centroids: &[MotionFeature]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(f, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn lex_cmp(a: &MotionFeature, b: &MotionFeature) -> std::cmp::Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
}

/// Seeded k-means++ followed by Lloyd iterations.
///
/// Points are clustered in a canonical (sorted) order, so the partition does
/// not depend on how the caller ordered them. Cluster ids are then assigned
/// by first member, and clusters left empty are dropped.
pub fn kmeans(features: &[MotionFeature], k: usize, seed: u64, cfg: &KMeansConfig) -> Result<SegmentationResult> {
    let n = features.len();
    if k == 0 {
        return Err(Error::InvalidConfig("k-means needs k ≥ 1".into()));
    }
    if n < k {
        return Err(Error::TooFewPoints { k, n });
    }
    if features.iter().any(|f| f.iter().any(|v| !v.is_finite())) {
        return Err(Error::MalformedData("non-finite motion feature".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex_cmp(&features[a], &features[b]));
    let pts: Vec<MotionFeature> = order.iter().map(|&i| features[i]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![pts[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = pts.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        while d2[pick] == 0.0 {
            pick -= 1;
        }
        let c = pts[pick];
        for (d, p) in d2.iter_mut().zip(&pts) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }

    let mut assign = vec![0usize; n];
    for _ in 0..cfg.max_iters.max(1) {
        for (a, p) in assign.iter_mut().zip(&pts) {
            *a = nearest(p, &centroids).0;
        }
        let mut sums = vec![[0.0; FEATURE_DIM]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (&a, p) in assign.iter().zip(&pts) {
            counts[a] += 1;
            for d in 0..FEATURE_DIM {
                sums[a][d] += p[d];
            }
        }
        let mut shift: f64 = 0.0;
        for (j, c) in centroids.iter_mut().enumerate() {
            if counts[j] == 0 {
                continue;
            }
            let mut next = sums[j];
            next.iter_mut().for_each(|v| *v /= counts[j] as f64);
            shift = shift.max(dist2(c, &next).sqrt());
            *c = next;
        }
        if shift < cfg.tol {
            break;
        }
    }
    for (a, p) in assign.iter_mut().zip(&pts) {
        *a = nearest(p, &centroids).0;
    }

    let mut raw = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        raw[i] = assign[pos];
    }
    let mut remap = vec![usize::MAX; centroids.len()];
    let mut next_id = 0;
    for &c in &raw {
        if remap[c] == usize::MAX {
            remap[c] = next_id;
            next_id += 1;
        }
    }
    let mut kept = vec![[0.0; FEATURE_DIM]; next_id];
    let mut counts = vec![0usize; next_id];
    let labels: Vec<usize> = raw.iter().map(|&c| remap[c]).collect();
    for (&l, f) in labels.iter().zip(features) {
        counts[l] += 1;
        for d in 0..FEATURE_DIM {
            kept[l][d] += f[d];
        }
    }
    for (c, &m) in kept.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= m as f64);
    }
    let inertia = labels.iter().zip(features).map(|(&l, f)| dist2(f, &kept[l])).sum();
    Ok(SegmentationResult { labels, centroids: kept, inertia })
}

/// Mean silhouette coefficient; singleton clusters score 0.
pub fn silhouette(features: &[MotionFeature], labels: &[usize]) -> Result<f64> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch { what: "silhouette labels", expected: features.len(), got: labels.len() });
    }
    if features.is_empty() {
        return Err(Error::EmptyInput("silhouette"));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Ok(0.0);
    }
    let scores: Vec<f64> = (0..features.len())
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] < 2 {
                return 0.0;
            }
            let mut sum = vec![0.0; k];
            for (j, f) in features.iter().enumerate() {
                sum[labels[j]] += dist2(&features[i], f).sqrt();
            }
            let a = sum[own] / (sizes[own] - 1) as f64;
            let b = (0..k).filter(|&c| c != own && sizes[c] > 0).map(|c| sum[c] / sizes[c] as f64).fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 { (b - a) / m } else { 0.0 }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

pub const K_SWEEP: std::ops::RangeInclusive<usize> = 2..=8;

/// Clusters for every K in the sweep (capped by the point count) and keeps
/// the best silhouette, preferring the smaller K on ties.
pub fn kmeans_auto(features: &[MotionFeature], seed: u64, cfg: &KMeansConfig) -> Result<SegmentationResult> {
    let n = features.len();
    if n < *K_SWEEP.start() {
        return Err(Error::TooFewPoints { k: *K_SWEEP.start(), n });
    }
    let mut best: Option<(f64, SegmentationResult)> = None;
    for k in K_SWEEP.filter(|&k| k <= n) {
        let r = kmeans(features, k, seed, cfg)?;
        let s = silhouette(features, &r.labels)?;
        if best.as_ref().is_none_or(|(b, _)| s > *b + 1e-12) {
            best = Some((s, r));
        }
    }
    Ok(best.expect("sweep is non-empty").1)
}

/// Weighted least-squares rigid transform `dst ≈ R·src + T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidFit {
    pub rotation: Mat3,
    pub translation: Vec3,
    /// Weighted RMS distance between `R·src + T` and `dst` (m).
    pub residual: f64,
    /// Fewer than three non-collinear weighted points; the transform is the identity.
    pub degenerate: bool,
}

fn to_na(v: Vec3) -> Vector3<f64> {
    Vector3::new(v.x, v.y, v.z)
}

pub fn kabsch(src: &[Vec3], dst: &[Vec3], weights: &[f64]) -> Result<RigidFit> {
    if src.is_empty() {
        return Err(Error::EmptyInput("kabsch points"));
    }
    if dst.len() != src.len() {
        return Err(Error::DimensionMismatch { what: "kabsch target points", expected: src.len(), got: dst.len() });
    }
    if weights.len() != src.len() {
        return Err(Error::DimensionMismatch { what: "kabsch weights", expected: src.len(), got: weights.len() });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidConfig("kabsch weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    let rms = |r: Mat3, t: Vec3| -> f64 {
        if total == 0.0 {
            return 0.0;
        }
        let s: f64 = src.iter().zip(dst).zip(weights).map(|((s, d), w)| w * (r * *s + t - *d).norm_squared()).sum();
        (s / total).sqrt()
    };
    let identity = RigidFit { rotation: Mat3::IDENTITY, translation: Vec3::ZERO, residual: rms(Mat3::IDENTITY, Vec3::ZERO), degenerate: true };
    if weights.iter().filter(|&&w| w > 0.0).count() < 3 {
        return Ok(identity);
    }
    let cs = src.iter().zip(weights).map(|(p, w)| *p * *w).sum::<Vec3>() * (1.0 / total);
    let cd = dst.iter().zip(weights).map(|(p, w)| *p * *w).sum::<Vec3>() * (1.0 / total);
    let mut h = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        let a = to_na(*s - cs);
        h += w * a * to_na(*d - cd).transpose();
        spread += w * a * a.transpose();
    }
    let ev = spread.symmetric_eigenvalues();
    let (lo, hi) = (ev.min(), ev.max());
    let mid = ev.sum() - lo - hi;
    if !(hi > 0.0) || mid <= 1e-12 * hi {
        return Ok(identity);
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let rotation = Mat3::from_rows([
        [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
        [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
        [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
    ]);
    let translation = cd - rotation * cs;
    Ok(RigidFit { rotation, translation, residual: rms(rotation, translation), degenerate: false })
}

/// Unit-weight Kabsch fit of every cluster between two frames.
pub fn cluster_rigidity(ds: &TrajectoryDataset, labels: &[usize], frame_a: usize, frame_b: usize) -> Result<Vec<RigidFit>> {
    if labels.len() != ds.n_particles() {
        return Err(Error::DimensionMismatch { what: "labels", expected: ds.n_particles(), got: labels.len() });
    }
    if frame_a.max(frame_b) >= ds.n_frames() {
        return Err(Error::MalformedData(format!("frame beyond {} frames", ds.n_frames())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    (0..k)
        .map(|c| {
            let ids: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            let src: Vec<Vec3> = ids.iter().map(|&i| ds.positions[frame_a][i]).collect();
            let dst: Vec<Vec3> = ids.iter().map(|&i| ds.positions[frame_b][i]).collect();
            if ids.is_empty() {
                return Ok(RigidFit { rotation: Mat3::IDENTITY, translation: Vec3::ZERO, residual: 0.0, degenerate: true });
            }
            kabsch(&src, &dst, &vec![1.0; ids.len()])
        })
        .collect()
}

/// Minimum-cost perfect assignment on a square matrix; `result[row] = col`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // Potentials formulation, 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub accuracy: f64,
    /// Mean over ground-truth classes of the IoU with the matched prediction.
    pub miou: f64,
    pub rand_index: f64,
}

fn dense(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    (labels.iter().map(|l| seen.binary_search(l).expect("present")).collect(), seen.len())
}

/// Accuracy and mIoU after a maximum-IoU one-to-one matching of predicted
/// to ground-truth labels, plus the permutation-free Rand index.
pub fn seg_metrics(pred: &[usize], gt: &[usize]) -> Result<SegMetrics> {
    if pred.is_empty() {
        return Err(Error::EmptyInput("segmentation labels"));
    }
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch { what: "predicted labels", expected: gt.len(), got: pred.len() });
    }
    let n = pred.len();
    let (p, kp) = dense(pred);
    let (g, kg) = dense(gt);
    let mut confusion = vec![vec![0usize; kg]; kp];
    for (&a, &b) in p.iter().zip(&g) {
        confusion[a][b] += 1;
    }
    let pred_sizes: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let gt_sizes: Vec<usize> = (0..kg).map(|j| confusion.iter().map(|r| r[j]).sum()).collect();
    let m = kp.max(kg);
    let iou = |i: usize, j: usize| -> f64 {
        if i >= kp || j >= kg {
            return 0.0;
        }
        let inter = confusion[i][j];
        inter as f64 / (pred_sizes[i] + gt_sizes[j] - inter) as f64
    };
    let cost: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| -iou(i, j)).collect()).collect();
    let matched = hungarian(&cost);
    let mut correct = 0usize;
    let mut iou_sum = 0.0;
    for (i, &j) in matched.iter().enumerate() {
        if i < kp && j < kg {
            correct += confusion[i][j];
            iou_sum += iou(i, j);
        }
    }
    let pairs = |c: usize| (c * c.saturating_sub(1) / 2) as f64;
    let total = pairs(n);
    let rand_index = if total == 0.0 {
        1.0
    } else {
        let same_both: f64 = confusion.iter().flatten().map(|&c| pairs(c)).sum();
        let same_pred: f64 = pred_sizes.iter().map(|&c| pairs(c)).sum();
        let same_gt: f64 = gt_sizes.iter().map(|&c| pairs(c)).sum();
        (total + 2.0 * same_both - same_pred - same_gt) / total
    };
    Ok(SegMetrics { accuracy: correct as f64 / n as f64, miou: iou_sum / kg as f64, rand_index })
}

pub const LABELS_HEADER: &str = "particle_id,label";

pub fn labels_csv(labels: &[usize]) -> String {
    let mut out = String::with_capacity(16 * labels.len() + 20);
    out.push_str(LABELS_HEADER);
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    out
}

pub fn parse_labels_csv(text: &str) -> Result<Vec<usize>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(LABELS_HEADER) {
        return Err(Error::MalformedData(format!("labels: expected header {LABELS_HEADER:?}")));
    }
    let mut labels = Vec::new();
    for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let bad = || Error::MalformedData(format!("labels row {}: {line:?}", row + 1));
        let (id, label) = line.split_once(',').ok_or_else(bad)?;
        if id.trim().parse::<usize>().map_err(|_| bad())? != row {
            return Err(bad());
        }
        labels.push(label.trim().parse().map_err(|_| bad())?);
    }
    Ok(labels)
}

/// Distinct colors for cluster ids (golden-ratio hue walk).
pub fn label_color(label: usize) -> [f64; 3] {
    let h = (label as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let x = 1.0 - ((h % 2.0) - 1.0).abs();
    let (r, g, b) = match h as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [0.15 + 0.85 * r, 0.15 + 0.85 * g, 0.15 + 0.85 * b]
}

pub fn write_labels(dir: &Path, positions: &[Vec3], labels: &[usize]) -> Result<()> {
    if positions.len() != labels.len() {
        return Err(Error::DimensionMismatch { what: "labels", expected: positions.len(), got: labels.len() });
    }
    let csv = dir.join("labels.csv");
    std::fs::write(&csv, labels_csv(labels)).map_err(|e| Error::io(&csv, e))?;
    let colors: Vec<[u8; 3]> = labels.iter().map(|&l| color_to_u8(label_color(l))).collect();
    write_ply(&dir.join("labels.ply"), positions, Some(&colors))
}

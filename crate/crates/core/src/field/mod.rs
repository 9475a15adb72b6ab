//! Dynamics fields: sources of per-particle [`DynamicsParams`] with exact
//! reverse-mode gradients wrt their weights.

mod mlp;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use mlp::{positional_encoding, Mlp, MlpConfig, PositionalEncoding};
use mlp::MlpTape;

use crate::dynamics::{propagate_params, DynamicsParams, IntegrationOrder, ParamSource};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// How raw field outputs map to dynamics parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parametrization {
    /// Outputs are `v̄, ā, w, ε` directly.
    #[default]
    Equivalent,
    /// Outputs are `v_c, a_c, w, ε` plus a rotation center `P_c`, combined
    /// into `v̄ = v_c − w × P_c` and `ā = a_c − ε × P_c`.
    Raw,
}

impl std::fmt::Display for Parametrization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Parametrization::Equivalent => "equivalent",
            Parametrization::Raw => "raw",
        })
    }
}

/// Output layout of a field: `[v, a, w, ε, (j, ε̇)?, (P_c)?]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub order: IntegrationOrder,
    pub parametrization: Parametrization,
}

impl ParamLayout {
    pub fn new(order: IntegrationOrder, parametrization: Parametrization) -> Self {
        Self { order, parametrization }
    }

    /// Length of the dynamics part, without any center.
    fn base_dim(&self) -> usize {
        DynamicsParams::flat_len(self.order)
    }

    pub fn dim(&self) -> usize {
        self.base_dim() + if self.parametrization == Parametrization::Raw { 3 } else { 0 }
    }

    pub fn decode(&self, out: &[f64]) -> Result<DynamicsParams> {
        if out.len() != self.dim() {
            return Err(Error::DimensionMismatch { what: "field output", expected: self.dim(), got: out.len() });
        }
        let mut p = DynamicsParams::from_flat(&out[..self.base_dim()])?;
        if self.parametrization == Parametrization::Raw {
            let c = Vec3::from_slice(&out[self.base_dim()..]);
            p.v_bar -= p.w.cross(c);
            p.a_bar -= p.eps.cross(c);
            if let Some(t) = p.third.as_mut() {
                t.jerk -= t.angular_jerk.cross(c);
            }
        }
        Ok(p)
    }

    /// Gradient wrt the raw outputs given the gradient wrt the decoded params.
    pub fn decode_vjp(&self, out: &[f64], g: &DynamicsParams) -> Vec<f64> {
        let mut g_out = g.to_flat();
        g_out.resize(self.base_dim(), 0.0);
        if self.parametrization == Parametrization::Raw {
            let p = DynamicsParams::from_flat(&out[..self.base_dim()]).expect("layout checked on decode");
            let c = Vec3::from_slice(&out[self.base_dim()..]);
            // d/dw [g·(c × w)] = g × c and d/dc [g·(c × w)] = w × g
            let g_w = g.v_bar.cross(c);
            let g_eps = g.a_bar.cross(c);
            let mut g_c = p.w.cross(g.v_bar) + p.eps.cross(g.a_bar);
            for i in 0..3 {
                g_out[6 + i] += g_w[i];
                g_out[9 + i] += g_eps[i];
            }
            if let (Some(gt), Some(pt)) = (g.third, p.third) {
                let g_aj = gt.jerk.cross(c);
                g_c += pt.angular_jerk.cross(gt.jerk);
                for i in 0..3 {
                    g_out[15 + i] += g_aj[i];
                }
            }
            g_out.extend(g_c.to_array());
        }
        g_out
    }

    /// Raw outputs that decode to `p` (zero center in raw layout).
    pub fn encode(&self, p: &DynamicsParams) -> Vec<f64> {
        let mut out = p.to_flat();
        out.resize(self.base_dim(), 0.0);
        if self.parametrization == Parametrization::Raw {
            out.extend([0.0; 3]);
        }
        out
    }

    /// Linear map of raw outputs over `dt`, holding any center fixed.
    fn propagate_raw(&self, out: &[f64], dt: f64) -> Result<Vec<f64>> {
        let b = self.base_dim();
        let moved = propagate_params(&DynamicsParams::from_flat(&out[..b])?, dt, self.order)?;
        let mut next = moved.to_flat();
        next.resize(b, 0.0);
        next.extend_from_slice(&out[b..]);
        Ok(next)
    }
}

/// Per-particle parameters, valid at an anchor time and independent of the
/// query time; derivation propagates them from the anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTable {
    layout: ParamLayout,
    anchor: f64,
    values: Vec<f64>,
}

impl ParamTable {
    pub fn zeros(n_particles: usize, layout: ParamLayout, anchor: f64) -> Self {
        Self { layout, anchor, values: vec![0.0; n_particles * layout.dim()] }
    }

    pub fn from_params(params: &[DynamicsParams], layout: ParamLayout, anchor: f64) -> Self {
        let values = params.iter().flat_map(|p| layout.encode(p)).collect();
        Self { layout, anchor, values }
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.layout.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn row(&self, id: usize) -> Result<&[f64]> {
        let d = self.layout.dim();
        self.values.get(id * d..(id + 1) * d).ok_or(Error::UnknownParticle { id, len: self.len() })
    }

    pub fn get(&self, id: usize) -> Result<DynamicsParams> {
        self.layout.decode(self.row(id)?)
    }

    pub fn set(&mut self, id: usize, params: &DynamicsParams) -> Result<()> {
        let len = self.len();
        let d = self.layout.dim();
        let row = self.values.get_mut(id * d..(id + 1) * d).ok_or(Error::UnknownParticle { id, len })?;
        row.copy_from_slice(&self.layout.encode(params));
        Ok(())
    }

    /// Moves the anchor, propagating every row so derived params are unchanged.
    pub fn rebase(&mut self, anchor: f64) -> Result<()> {
        let d = self.layout.dim();
        let dt = anchor - self.anchor;
        for row in self.values.chunks_exact_mut(d) {
            let next = self.layout.propagate_raw(row, dt)?;
            row.copy_from_slice(&next);
        }
        self.anchor = anchor;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let d = self.layout.dim();
        let mut s = String::from("particle_id");
        for name in column_names(self.layout) {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for (id, row) in self.values.chunks_exact(d).enumerate() {
            let _ = write!(s, "{id}");
            for v in row {
                let _ = write!(s, ",{v:.16e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str, layout: ParamLayout, anchor: f64) -> Result<Self> {
        let d = layout.dim();
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        lines.next().ok_or(Error::EmptyInput("parameter table"))?;
        let mut values = Vec::new();
        for (expected_id, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != d + 1 {
                return Err(Error::DimensionMismatch { what: "parameter table row", expected: d + 1, got: fields.len() });
            }
            let id: usize = fields[0].parse().map_err(|_| Error::MalformedData(format!("bad particle id {:?}", fields[0])))?;
            if id != expected_id {
                return Err(Error::MalformedData(format!("parameter table ids must be 0..n in order, found {id} at row {expected_id}")));
            }
            for f in &fields[1..] {
                let v: f64 = f.parse().map_err(|_| Error::MalformedData(format!("bad number {f:?}")))?;
                if !v.is_finite() {
                    return Err(Error::MalformedData(format!("non-finite parameter {f:?}")));
                }
                values.push(v);
            }
        }
        Ok(Self { layout, anchor, values })
    }
}

fn column_names(layout: ParamLayout) -> Vec<&'static str> {
    let raw = layout.parametrization == Parametrization::Raw;
    let mut names: Vec<&'static str> = if raw {
        vec!["vc_x", "vc_y", "vc_z", "ac_x", "ac_y", "ac_z"]
    } else {
        vec!["vbar_x", "vbar_y", "vbar_z", "abar_x", "abar_y", "abar_z"]
    };
    names.extend(["w_x", "w_y", "w_z", "eps_x", "eps_y", "eps_z"]);
    if layout.order == IntegrationOrder::Third {
        names.extend(["jerk_x", "jerk_y", "jerk_z", "deps_x", "deps_y", "deps_z"]);
    }
    if raw {
        names.extend(["pc_x", "pc_y", "pc_z"]);
    }
    names
}

/// A trainable dynamics field.
#[derive(Clone, Debug, PartialEq)]
pub enum DynamicsField {
    Table(ParamTable),
    Mlp { net: Mlp, layout: ParamLayout, seed: u64 },
}

/// Forward state needed to backpropagate one query.
#[derive(Clone, Debug)]
pub struct FieldTape {
    id: usize,
    output: Vec<f64>,
    mlp: Option<MlpTape>,
}

impl DynamicsField {
    pub fn new_mlp(config: MlpConfig, layout: ParamLayout, seed: u64) -> Result<Self> {
        Ok(DynamicsField::Mlp { net: Mlp::new(config, layout.dim(), seed)?, layout, seed })
    }

    pub fn layout(&self) -> ParamLayout {
        match self {
            DynamicsField::Table(t) => t.layout,
            DynamicsField::Mlp { layout, .. } => *layout,
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            DynamicsField::Table(t) => &t.values,
            DynamicsField::Mlp { net, .. } => net.weights(),
        }
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        match self {
            DynamicsField::Table(t) => &mut t.values,
            DynamicsField::Mlp { net, .. } => net.weights_mut(),
        }
    }

    /// Parameters at `(id, x, t)` with the state needed by [`Self::backward`].
    /// A table ignores `x` and `t`.
    pub fn forward(&self, id: usize, x: Vec3, t: f64) -> Result<(DynamicsParams, FieldTape)> {
        let (output, mlp) = match self {
            DynamicsField::Table(table) => (table.row(id)?.to_vec(), None),
            DynamicsField::Mlp { net, .. } => {
                let tape = net.forward(x, t);
                (tape.output.clone(), Some(tape))
            }
        };
        let params = self.layout().decode(&output)?;
        Ok((params, FieldTape { id, output, mlp }))
    }

    /// Accumulates `∂L/∂weights` into `grad` given `∂L/∂params`; returns `∂L/∂x`.
    pub fn backward(&self, tape: &FieldTape, upstream: &DynamicsParams, grad: &mut [f64]) -> Result<Vec3> {
        if grad.len() != self.weights().len() {
            return Err(Error::DimensionMismatch { what: "gradient buffer", expected: self.weights().len(), got: grad.len() });
        }
        let layout = self.layout();
        if upstream.third.is_some() != (layout.order == IntegrationOrder::Third) {
            return Err(Error::DimensionMismatch {
                what: "upstream gradient",
                expected: DynamicsParams::flat_len(layout.order),
                got: upstream.to_flat().len(),
            });
        }
        let g_out = layout.decode_vjp(&tape.output, upstream);
        match (self, &tape.mlp) {
            (DynamicsField::Table(_), _) => {
                let d = layout.dim();
                for (g, v) in grad[tape.id * d..(tape.id + 1) * d].iter_mut().zip(&g_out) {
                    *g += v;
                }
                Ok(Vec3::ZERO)
            }
            (DynamicsField::Mlp { net, .. }, Some(mt)) => net.backward(mt, &g_out, grad),
            (DynamicsField::Mlp { .. }, None) => Err(Error::MalformedData("tape does not belong to a network".into())),
        }
    }

    pub fn save(&self, header_path: &Path) -> Result<()> {
        let bin_path = header_path.with_extension("bin");
        let (backend, network, seed, anchor, n_particles) = match self {
            DynamicsField::Table(t) => ("table", None, None, Some(t.anchor), Some(t.len())),
            DynamicsField::Mlp { net, seed, .. } => ("mlp", Some(*net.config()), Some(*seed), None, None),
        };
        let header = CheckpointHeader {
            backend: backend.to_string(),
            order: self.layout().order,
            parametrization: self.layout().parametrization,
            network,
            seed,
            anchor,
            n_particles,
            n_weights: self.weights().len(),
            weights_file: bin_path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        };
        let json = serde_json::to_string_pretty(&header).map_err(|e| Error::json(header_path, e))?;
        std::fs::write(header_path, json + "\n").map_err(|e| Error::io(header_path, e))?;
        let bytes: Vec<u8> = self.weights().iter().flat_map(|w| w.to_le_bytes()).collect();
        std::fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))?;
        if let DynamicsField::Table(t) = self {
            let csv_path = header_path.with_extension("csv");
            std::fs::write(&csv_path, t.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
        }
        Ok(())
    }

    pub fn load(header_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
        let header: CheckpointHeader = serde_json::from_str(&text).map_err(|e| Error::json(header_path, e))?;
        let bin_path: PathBuf = header_path.with_file_name(&header.weights_file);
        let bytes = std::fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        if bytes.len() != header.n_weights * 8 {
            return Err(Error::DimensionMismatch { what: "checkpoint weights (bytes)", expected: header.n_weights * 8, got: bytes.len() });
        }
        let weights: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::MalformedData(format!("non-finite checkpoint weight at {i}")));
        }
        let layout = ParamLayout::new(header.order, header.parametrization);
        match header.backend.as_str() {
            "table" => {
                let n = header.n_particles.ok_or_else(|| Error::MalformedData("table checkpoint without n_particles".into()))?;
                if weights.len() != n * layout.dim() {
                    return Err(Error::DimensionMismatch { what: "table weights", expected: n * layout.dim(), got: weights.len() });
                }
                Ok(DynamicsField::Table(ParamTable { layout, anchor: header.anchor.unwrap_or(0.0), values: weights }))
            }
            "mlp" => {
                let config = header.network.ok_or_else(|| Error::MalformedData("network checkpoint without architecture".into()))?;
                let net = Mlp::from_weights(config, layout.dim(), weights)?;
                Ok(DynamicsField::Mlp { net, layout, seed: header.seed.unwrap_or(0) })
            }
            other => Err(Error::MalformedData(format!("unknown field backend {other:?}"))),
        }
    }
}

impl ParamSource for DynamicsField {
    fn params_at(&self, id: usize, position: Vec3, t: f64) -> Result<DynamicsParams> {
        match self {
            DynamicsField::Table(table) => table.get(id),
            DynamicsField::Mlp { net, layout, .. } => layout.decode(&net.eval(position, t)),
        }
    }

    fn anchor_time(&self) -> Option<f64> {
        match self {
            DynamicsField::Table(t) => Some(t.anchor),
            DynamicsField::Mlp { .. } => None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    backend: String,
    order: IntegrationOrder,
    parametrization: Parametrization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    network: Option<MlpConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_particles: Option<usize>,
    n_weights: usize,
    weights_file: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::derived_params_at;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rv(rng: &mut ChaCha8Rng) -> Vec3 {
        Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn random_params(rng: &mut ChaCha8Rng, order: IntegrationOrder) -> DynamicsParams {
        let mut p = DynamicsParams::zeros(order);
        p.v_bar = rv(rng);
        p.a_bar = rv(rng);
        p.w = rv(rng);
        p.eps = rv(rng);
        if let Some(t) = p.third.as_mut() {
            t.jerk = rv(rng);
            t.angular_jerk = rv(rng);
        }
        p
    }

    #[test]
    fn table_returns_stored_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for order in IntegrationOrder::ALL {
            let layout = ParamLayout::new(order, Parametrization::Equivalent);
            let mut table = ParamTable::zeros(4, layout, 0.3);
            for id in 0..4 {
                let p = random_params(&mut rng, order);
                table.set(id, &p).unwrap();
                assert_eq!(table.get(id).unwrap(), p);
            }
            let field = DynamicsField::Table(table);
            let stored = field.params_at(2, Vec3::new(5.0, 5.0, 5.0), 10.0).unwrap();
            assert_eq!(stored, field.params_at(2, Vec3::ZERO, -3.0).unwrap());
        }
    }

    #[test]
    fn table_rejects_unknown_ids() {
        let table = ParamTable::zeros(3, ParamLayout::new(IntegrationOrder::Second, Parametrization::Equivalent), 0.0);
        assert!(matches!(table.get(3), Err(Error::UnknownParticle { id: 3, len: 3 })));
        let field = DynamicsField::Table(table);
        assert!(field.forward(7, Vec3::ZERO, 0.0).is_err());
    }

    #[test]
    fn rebase_keeps_derived_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for par in [Parametrization::Equivalent, Parametrization::Raw] {
            for order in IntegrationOrder::ALL {
                let layout = ParamLayout::new(order, par);
                let mut table = ParamTable::zeros(2, layout, 0.5);
                for v in table.values.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
                let before = DynamicsField::Table(table.clone());
                table.rebase(0.9).unwrap();
                let after = DynamicsField::Table(table);
                for id in 0..2 {
                    let a = derived_params_at(&before, id, Vec3::ZERO, 1.3, order).unwrap();
                    let b = derived_params_at(&after, id, Vec3::ZERO, 1.3, order).unwrap();
                    let diff = a.to_flat().iter().zip(b.to_flat()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                    assert!(diff < 1e-12, "{par} {order}: {diff}");
                }
            }
        }
    }

    #[test]
    fn raw_layout_decodes_center() {
        let layout = ParamLayout::new(IntegrationOrder::Second, Parametrization::Raw);
        assert_eq!(layout.dim(), 15);
        // v_c = 0, w = z, center at (1,0,0): v̄ = −w × P_c = (0,-1,0)
        let mut out = vec![0.0; 15];
        out[8] = 1.0;
        out[12] = 1.0;
        let p = layout.decode(&out).unwrap();
        assert!(p.v_bar.max_abs_diff(Vec3::new(0.0, -1.0, 0.0)) < 1e-15);
        assert!(layout.decode(&out[..12]).is_err());
    }

    #[test]
    fn decode_vjp_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for order in IntegrationOrder::ALL {
            for par in [Parametrization::Equivalent, Parametrization::Raw] {
                let layout = ParamLayout::new(order, par);
                let out: Vec<f64> = (0..layout.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let g = random_params(&mut rng, order);
                let vjp = layout.decode_vjp(&out, &g);
                let f = |o: &[f64]| layout.decode(o).unwrap().to_flat().iter().zip(g.to_flat()).map(|(a, b)| a * b).sum::<f64>();
                for i in 0..out.len() {
                    let h = 1e-6;
                    let mut p = out.clone();
                    p[i] += h;
                    let mut m = out.clone();
                    m[i] -= h;
                    let fd = (f(&p) - f(&m)) / (2.0 * h);
                    assert!((fd - vjp[i]).abs() < 1e-8, "{order} {par} {i}: {fd} vs {}", vjp[i]);
                }
            }
        }
    }

    #[test]
    fn fresh_network_predicts_no_motion() {
        let layout = ParamLayout::new(IntegrationOrder::Second, Parametrization::Equivalent);
        let cfg = MlpConfig { width: 16, depth: 3, ..MlpConfig::default() };
        let field = DynamicsField::new_mlp(cfg, layout, 9).unwrap();
        assert_eq!(field.params_at(0, Vec3::new(0.1, 0.2, 0.3), 0.5).unwrap(), DynamicsParams::zeros(IntegrationOrder::Second));
        assert_eq!(field.anchor_time(), None);
    }

    #[test]
    fn table_backward_touches_only_its_row() {
        let layout = ParamLayout::new(IntegrationOrder::Second, Parametrization::Equivalent);
        let field = DynamicsField::Table(ParamTable::zeros(3, layout, 0.0));
        let (_, tape) = field.forward(1, Vec3::ZERO, 0.0).unwrap();
        let mut g = DynamicsParams::zeros(IntegrationOrder::Second);
        g.w = Vec3::new(1.0, 2.0, 3.0);
        let mut grad = vec![0.0; field.weights().len()];
        field.backward(&tape, &g, &mut grad).unwrap();
        assert_eq!(&grad[18..21], &[1.0, 2.0, 3.0]);
        assert_eq!(grad.iter().filter(|&&v| v != 0.0).count(), 3);
        let mut short = vec![0.0; 4];
        assert!(field.backward(&tape, &g, &mut short).is_err());
    }

    #[test]
    fn checkpoints_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layout = ParamLayout::new(IntegrationOrder::Third, Parametrization::Equivalent);
        let params: Vec<DynamicsParams> = (0..5).map(|_| random_params(&mut rng, IntegrationOrder::Third)).collect();
        let table = DynamicsField::Table(ParamTable::from_params(&params, layout, 0.41));
        let path = dir.path().join("table.json");
        table.save(&path).unwrap();
        assert_eq!(DynamicsField::load(&path).unwrap(), table);
        let csv = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
        let DynamicsField::Table(t) = &table else { unreachable!() };
        assert_eq!(&ParamTable::from_csv(&csv, layout, 0.41).unwrap(), t);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 19);

        let cfg = MlpConfig { width: 8, depth: 2, ..MlpConfig::default() };
        let mut net = DynamicsField::new_mlp(cfg, ParamLayout::new(IntegrationOrder::Second, Parametrization::Raw), 11).unwrap();
        for w in net.weights_mut() {
            *w += rng.random_range(-0.1..0.1);
        }
        let path = dir.path().join("net.json");
        net.save(&path).unwrap();
        assert_eq!(DynamicsField::load(&path).unwrap(), net);
        let x = Vec3::new(0.2, 0.1, 0.0);
        assert_eq!(DynamicsField::load(&path).unwrap().params_at(0, x, 0.3).unwrap(), net.params_at(0, x, 0.3).unwrap());
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let field = DynamicsField::Table(ParamTable::zeros(2, ParamLayout::new(IntegrationOrder::Second, Parametrization::Equivalent), 0.0));
        let path = dir.path().join("f.json");
        field.save(&path).unwrap();
        std::fs::write(dir.path().join("f.bin"), [0u8; 12]).unwrap();
        assert!(matches!(DynamicsField::load(&path), Err(Error::DimensionMismatch { .. })));
    }
}

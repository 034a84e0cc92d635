//! Loss terms and their gradients with respect to θ and γ.
//!
//! Per-point terms are evaluated on a small tape per point. Points are split
//! into a fixed number of chunks that depends only on the point count; the
//! chunks may run in parallel and their partial sums are combined in chunk
//! order, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffengine::{Jet, Order, Tape, Var, V};
use crate::error::{config_err, numeric_err, Error, Result};
use crate::geometry::{boundary_normal, composite_delta_var, normal_var, BoundarySample, CirclePatch};
use crate::pde::{dt_density_residual, FieldSource, PdeProblem};
use crate::sampling::{Measurement, PeriodicPair, SampleSet};
use crate::Point;

const MIN_CHUNK: usize = 64;
const MAX_CHUNKS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_p: f64,
    pub lambda_b: f64,
    pub lambda_d: f64,
    pub lambda_t: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_p", self.lambda_p),
            ("lambda_b", self.lambda_b),
            ("lambda_d", self.lambda_d),
            ("lambda_t", self.lambda_t),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_err(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub pde: f64,
    pub bc: f64,
    pub data: f64,
    pub topo_fixed: f64,
    pub topo_overlap: f64,
}

impl LossBreakdown {
    /// Fill in `total` from the parts.
    pub fn combine(mut self, w: &LossWeights) -> Self {
        self.total = w.lambda_p * self.pde
            + w.lambda_b * self.bc
            + w.lambda_d * self.data
            + w.lambda_t * (self.topo_fixed + self.topo_overlap);
        self
    }

    pub fn is_finite(&self) -> bool {
        [self.total, self.pde, self.bc, self.data, self.topo_fixed, self.topo_overlap]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mode {
    /// Learnable patches mask the residual; boundary and topology losses on.
    Lt,
    /// Density channel `ρ` with sharpness `c`; no patches.
    Dt { c: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundaryCondition {
    None,
    /// Prescribed values for the first `value.len()` solution components.
    Dirichlet { value: Vec<f64> },
    /// Prescribed normal flux of every solution component.
    Neumann { q: f64 },
}

/// An unordered patch pair with a target center distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopoPair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    /// Fixed-distance pairs; each is counted in both orders.
    #[serde(default)]
    pub pairs: Vec<TopoPair>,
    /// Target distance from every patch to the patch centroid.
    #[serde(default)]
    pub hub_distance: Option<f64>,
    #[serde(default)]
    pub nonoverlap: bool,
}

impl TopologySpec {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty() && self.hub_distance.is_none() && !self.nonoverlap
    }

    pub fn validate(&self, n_patches: usize) -> Result<()> {
        for p in &self.pairs {
            if p.i == p.j || p.i >= n_patches || p.j >= n_patches {
                return Err(config_err(format!(
                    "topology pair ({}, {}) is invalid for {n_patches} patches",
                    p.i, p.j
                )));
            }
            if !(p.distance > 0.0) {
                return Err(config_err(format!("topology pair target distance must be positive, got {}", p.distance)));
            }
        }
        if let Some(d) = self.hub_distance {
            if !(d > 0.0) {
                return Err(config_err(format!("hub distance must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

/// Everything that defines the total loss apart from the trainable state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub pde: PdeProblem,
    pub mode: Mode,
    pub k: f64,
    pub beta: f64,
    pub bc: BoundaryCondition,
    /// Dirichlet value used inside the density-weighted residual.
    pub dt_bc_value: Option<Vec<f64>>,
    pub topology: TopologySpec,
    pub weights: LossWeights,
    /// Differentiate ring-sample positions through `x = γ + offset`. When
    /// false the positions are held fixed and only the normal depends on γ.
    #[serde(default = "default_true")]
    pub track_rings: bool,
}

fn default_true() -> bool {
    true
}

/// Gradient of the weighted total loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub theta: Vec<f64>,
    pub gamma: Vec<[f64; 2]>,
}

impl Gradients {
    pub fn zeros(n_theta: usize, n_gamma: usize) -> Self {
        Gradients {
            theta: vec![0.0; n_theta],
            gamma: vec![[0.0; 2]; n_gamma],
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.theta.iter_mut().zip(&other.theta) {
            *a += b;
        }
        for (a, b) in self.gamma.iter_mut().zip(&other.gamma) {
            a[0] += b[0];
            a[1] += b[1];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite()) && self.gamma.iter().flatten().all(|v| v.is_finite())
    }
}

struct Ctx<'a> {
    field: &'a dyn FieldSource,
    gammas: &'a [Point],
    n_theta: usize,
}

/// Per-chunk gradient accumulator.
struct Scratch {
    adj: Vec<Jet>,
    grad: Option<Gradients>,
}

fn gamma_leaves<'t>(tape: &'t Tape, gammas: &[Point]) -> Vec<[Var<'t>; 2]> {
    gammas.iter().map(|g| [tape.var(g[0]), tape.var(g[1])]).collect()
}

fn backprop(tape: &Tape, out: Var<'_>, leaves: &[[Var<'_>; 2]], scale: f64, s: &mut Scratch) -> Result<()> {
    let grad = s.grad.as_mut().expect("gradient buffer present");
    tape.backward_into(out, scale, &mut s.adj, &mut grad.theta)?;
    for (g, l) in grad.gamma.iter_mut().zip(leaves) {
        g[0] += s.adj[l[0].index()].0[V];
        g[1] += s.adj[l[1].index()].0[V];
    }
    Ok(())
}

/// Sum `f(i)` over `0..n` with optional gradient accumulation.
fn reduce_points<F>(ctx: &Ctx<'_>, n: usize, want_grad: bool, f: F) -> Result<(f64, Option<Gradients>)>
where
    F: Fn(usize, &Tape, &mut Scratch) -> Result<f64> + Sync,
{
    let n_chunks = n.div_ceil(MIN_CHUNK).clamp(1, MAX_CHUNKS);
    let chunk = n.div_ceil(n_chunks).max(1);
    let n_gamma = ctx.gammas.len();
    let n_theta = ctx.n_theta;
    let parts: Vec<Result<(f64, Option<Gradients>)>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut tape = Tape::new();
            let mut s = Scratch {
                adj: Vec::new(),
                grad: want_grad.then(|| Gradients::zeros(n_theta, n_gamma)),
            };
            let mut sum = 0.0;
            for i in (c * chunk)..((c + 1) * chunk).min(n) {
                tape.clear();
                sum += f(i, &tape, &mut s)?;
            }
            Ok((sum, s.grad))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Gradients::zeros(n_theta, n_gamma));
    for part in parts {
        let (v, g) = part?;
        total += v;
        if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
            acc.add(&g);
        }
    }
    Ok((total, grad))
}

fn sum_squares<'t>(terms: &[Var<'t>]) -> Option<Var<'t>> {
    terms.iter().map(|t| t.square()).reduce(|a, b| a + b)
}

// --- term kernels ---------------------------------------------------------

struct PdeTerm<'a> {
    problem: &'a PdeProblem,
    mode: Mode,
    k: f64,
    beta: f64,
    dt_bc: Option<&'a [f64]>,
}

fn pde_term(ctx: &Ctx<'_>, term: &PdeTerm<'_>, pts: &[Point], scale: f64, want_grad: bool) -> Result<(f64, Option<Gradients>)> {
    if pts.is_empty() {
        return Err(config_err("PDE loss needs at least one collocation point"));
    }
    let out_dim = term.problem.out_dim();
    let n = pts.len() as f64;
    let (sum, grad) = reduce_points(ctx, pts.len(), want_grad, |i, tape, s| {
        let p = pts[i];
        let (x, y) = tape.spatial(p[0], p[1]);
        let leaves = gamma_leaves(tape, ctx.gammas);
        let u = ctx.field.eval(tape, x, y, Order::Second)?;
        let r = term.problem.residual(&u[..out_dim])?;
        let weighted = match term.mode {
            Mode::Lt => {
                let xc = [tape.var(p[0]), tape.var(p[1])];
                match composite_delta_var(&leaves, xc, term.k, term.beta) {
                    Some(m) => r.iter().map(|&ri| m * ri).collect(),
                    None => r,
                }
            }
            Mode::Dt { c } => {
                let rho = *u
                    .get(out_dim)
                    .ok_or_else(|| config_err("density mode needs a network with a density channel"))?;
                dt_density_residual(&u[..out_dim], rho, &r, term.dt_bc, c)?
            }
        };
        let loss = sum_squares(&weighted).expect("at least one residual component");
        tape.status()?;
        let v = loss.value();
        if want_grad {
            backprop(tape, loss, &leaves, scale / n, s)?;
        }
        Ok(v)
    })?;
    Ok((sum / n, grad))
}

/// Position of a ring sample on the tape, either tied to γ or as constants.
fn ring_position<'t>(
    tape: &'t Tape,
    b: &BoundarySample,
    g: [Var<'t>; 2],
    track: bool,
    seeded: bool,
) -> ([Var<'t>; 2], [Var<'t>; 2]) {
    let pos = b.recentered([g[0].value(), g[1].value()]);
    if track {
        let (sx, sy) = if seeded {
            (tape.leaf(Jet::seed_x(b.offset[0])), tape.leaf(Jet::seed_y(b.offset[1])))
        } else {
            (tape.var(b.offset[0]), tape.var(b.offset[1]))
        };
        let spatial = [g[0] + sx, g[1] + sy];
        let flat = [g[0].offset(b.offset[0]), g[1].offset(b.offset[1])];
        (spatial, flat)
    } else {
        let (sx, sy) = if seeded {
            tape.spatial(pos[0], pos[1])
        } else {
            (tape.var(pos[0]), tape.var(pos[1]))
        };
        ([sx, sy], [tape.var(pos[0]), tape.var(pos[1])])
    }
}

fn owner_check(samples: &[BoundarySample], n_patches: usize) -> Result<()> {
    if let Some(b) = samples.iter().find(|b| b.owner >= n_patches) {
        return Err(config_err(format!("boundary sample refers to missing patch {}", b.owner)));
    }
    Ok(())
}

fn dirichlet_term(
    ctx: &Ctx<'_>,
    samples: &[BoundarySample],
    u_b: &[f64],
    track: bool,
    scale: f64,
    want_grad: bool,
) -> Result<(f64, Option<Gradients>)> {
    if samples.is_empty() {
        return Err(config_err("Dirichlet loss needs at least one boundary sample"));
    }
    owner_check(samples, ctx.gammas.len())?;
    if u_b.len() > ctx.field.n_outputs() {
        return Err(config_err("Dirichlet value has more components than the field"));
    }
    let n = samples.len() as f64;
    let (sum, grad) = reduce_points(ctx, samples.len(), want_grad, |i, tape, s| {
        let b = &samples[i];
        let leaves = gamma_leaves(tape, ctx.gammas);
        let (x, _) = ring_position(tape, b, leaves[b.owner], track, false);
        let u = ctx.field.eval(tape, x[0], x[1], Order::Value)?;
        let diffs: Vec<Var<'_>> = u_b.iter().zip(&u).map(|(&ub, &uk)| uk - ub).collect();
        let loss = sum_squares(&diffs).ok_or_else(|| config_err("empty Dirichlet value"))?;
        tape.status()?;
        let v = loss.value();
        if want_grad {
            backprop(tape, loss, &leaves, scale / n, s)?;
        }
        Ok(v)
    })?;
    Ok((sum / n, grad))
}

#[allow(clippy::too_many_arguments)]
fn neumann_term(
    ctx: &Ctx<'_>,
    samples: &[BoundarySample],
    q: f64,
    n_components: usize,
    track: bool,
    scale: f64,
    want_grad: bool,
) -> Result<(f64, Option<Gradients>)> {
    if samples.is_empty() {
        return Err(config_err("Neumann loss needs at least one boundary sample"));
    }
    owner_check(samples, ctx.gammas.len())?;
    for b in samples {
        let g = ctx.gammas[b.owner];
        let pos = if track { b.recentered(g) } else { b.position_or(g) };
        boundary_normal(&CirclePatch::new(g), pos)?;
    }
    let n = samples.len() as f64;
    let (sum, grad) = reduce_points(ctx, samples.len(), want_grad, |i, tape, s| {
        let b = &samples[i];
        let leaves = gamma_leaves(tape, ctx.gammas);
        let g = leaves[b.owner];
        let (x, flat) = ring_position(tape, b, g, track, true);
        let u = ctx.field.eval(tape, x[0], x[1], Order::First)?;
        let nrm = normal_var(g, flat);
        let diffs: Vec<Var<'_>> = u[..n_components]
            .iter()
            .map(|uk| uk.dx() * nrm[0] + uk.dy() * nrm[1] - q)
            .collect();
        let loss = sum_squares(&diffs).expect("at least one component");
        tape.status()?;
        let v = loss.value();
        if want_grad {
            backprop(tape, loss, &leaves, scale / n, s)?;
        }
        Ok(v)
    })?;
    Ok((sum / n, grad))
}

fn data_term(
    ctx: &Ctx<'_>,
    measurements: &[Measurement],
    periodic: &[PeriodicPair],
    scale: f64,
    want_grad: bool,
) -> Result<(f64, Option<Gradients>)> {
    let n_out = ctx.field.n_outputs();
    let mut count = 0usize;
    for m in measurements {
        if m.values.len() > n_out {
            return Err(config_err(format!(
                "measurement at {:?} has {} components, field has {n_out}",
                m.point,
                m.values.len()
            )));
        }
        count += m.n_present();
    }
    for p in periodic {
        if p.components.iter().any(|&k| k >= n_out) {
            return Err(config_err("periodic pair refers to a missing component"));
        }
        count += p.components.len();
    }
    if count == 0 {
        return Err(config_err("data loss needs at least one measured value"));
    }
    let n = count as f64;
    let m_len = measurements.len();
    let (sum, grad) = reduce_points(ctx, m_len + periodic.len(), want_grad, |i, tape, s| {
        let leaves: Vec<[Var<'_>; 2]> = Vec::new();
        let diffs: Vec<Var<'_>> = if i < m_len {
            let m = &measurements[i];
            let (x, y) = (tape.var(m.point[0]), tape.var(m.point[1]));
            let u = ctx.field.eval(tape, x, y, Order::Value)?;
            m.values
                .iter()
                .zip(&u)
                .filter_map(|(v, &uk)| v.map(|v| uk - v))
                .collect()
        } else {
            let p = &periodic[i - m_len];
            let ua = ctx.field.eval(tape, tape.var(p.a[0]), tape.var(p.a[1]), Order::Value)?;
            let ub = ctx.field.eval(tape, tape.var(p.b[0]), tape.var(p.b[1]), Order::Value)?;
            p.components.iter().map(|&k| ua[k] - ub[k]).collect()
        };
        let Some(loss) = sum_squares(&diffs) else {
            return Ok(0.0);
        };
        tape.status()?;
        let v = loss.value();
        if want_grad {
            backprop(tape, loss, &leaves, scale / n, s)?;
        }
        Ok(v)
    })?;
    Ok((sum / n, grad))
}

// --- topology -------------------------------------------------------------

fn pair_norm<'t>(a: [Var<'t>; 2], b: [Var<'t>; 2]) -> Var<'t> {
    (a[0] - b[0]).norm2(a[1] - b[1])
}

fn topo_fixed_var<'t>(g: &[[Var<'t>; 2]], spec: &TopologySpec) -> Option<Var<'t>> {
    let n_t = g.len() as f64;
    let mut acc: Option<Var<'t>> = None;
    let mut push = |v: Var<'t>| {
        acc = Some(match acc {
            Some(a) => a + v,
            None => v,
        })
    };
    for p in &spec.pairs {
        let r = pair_norm(g[p.i], g[p.j]);
        push((r - p.distance).square() * (2.0 / n_t));
    }
    if let Some(d) = spec.hub_distance {
        let first = g.first()?;
        let mut cx = first[0];
        let mut cy = first[1];
        for gi in &g[1..] {
            cx = cx + gi[0];
            cy = cy + gi[1];
        }
        let c = [cx * (1.0 / n_t), cy * (1.0 / n_t)];
        for gi in g {
            let r = pair_norm(*gi, c);
            push((r - d).square() * (1.0 / n_t));
        }
    }
    acc
}

fn topo_overlap_var<'t>(g: &[[Var<'t>; 2]]) -> Option<Var<'t>> {
    let n_t = g.len() as f64;
    let mut acc: Option<Var<'t>> = None;
    for i in 0..g.len() {
        for j in (i + 1)..g.len() {
            let dx = g[i][0] - g[j][0];
            let dy = g[i][1] - g[j][1];
            let r2 = (dx * dx + dy * dy).offset(crate::diffengine::NORM_FLOOR * crate::diffengine::NORM_FLOOR);
            let term = r2.recip() * (2.0 / n_t);
            acc = Some(match acc {
                Some(a) => a + term,
                None => term,
            });
        }
    }
    acc
}

/// Topology terms `(fixed, overlap)` with optional γ gradient scaled by `scale`.
fn topo_terms(gammas: &[Point], spec: &TopologySpec, scale: f64, grad: Option<&mut Gradients>) -> Result<(f64, f64)> {
    spec.validate(gammas.len())?;
    let tape = Tape::new();
    let leaves = gamma_leaves(&tape, gammas);
    let fixed = topo_fixed_var(&leaves, spec);
    let overlap = if spec.nonoverlap { topo_overlap_var(&leaves) } else { None };
    tape.status()?;
    let fv = fixed.map_or(0.0, |v| v.value());
    let ov = overlap.map_or(0.0, |v| v.value());
    if let Some(grad) = grad {
        let out = match (fixed, overlap) {
            (Some(a), Some(b)) => Some(a + b),
            (a, b) => a.or(b),
        };
        if let Some(out) = out {
            let adj = tape.gradient(out)?;
            for (g, l) in grad.gamma.iter_mut().zip(&leaves) {
                g[0] += scale * adj.wrt(l[0]);
                g[1] += scale * adj.wrt(l[1]);
            }
        }
    }
    Ok((fv, ov))
}

// --- public single-term API -----------------------------------------------

fn ctx<'a>(field: &'a dyn FieldSource, gammas: &'a [Point]) -> Ctx<'a> {
    Ctx {
        field,
        gammas,
        n_theta: 0,
    }
}

/// `(1/N)·Σ R_i²` with `R` masked by `∏δ^k` over the patches.
pub fn pde_loss(
    field: &dyn FieldSource,
    patches: &[CirclePatch],
    collocation: &[Point],
    problem: &PdeProblem,
    k: f64,
    beta: f64,
) -> Result<f64> {
    let gammas: Vec<Point> = patches.iter().map(|p| p.gamma).collect();
    let term = PdeTerm {
        problem,
        mode: Mode::Lt,
        k,
        beta,
        dt_bc: None,
    };
    Ok(pde_term(&ctx(field, &gammas), &term, collocation, 1.0, false)?.0)
}

/// Mean over samples of `‖u − u_b‖²` at the samples' stored positions.
pub fn dirichlet_loss(field: &dyn FieldSource, samples: &[BoundarySample], u_b: &[f64]) -> Result<f64> {
    let gammas = stored_centers(samples);
    Ok(dirichlet_term(&ctx(field, &gammas), samples, u_b, false, 1.0, false)?.0)
}

/// Mean over samples of `(∇u·n − q)²` with `n` the radial normal of `patch`.
pub fn neumann_loss(field: &dyn FieldSource, patch: &CirclePatch, samples: &[BoundarySample], q: f64) -> Result<f64> {
    let owned: Vec<BoundarySample> = samples
        .iter()
        .map(|b| BoundarySample {
            owner: 0,
            offset: [b.position[0] - patch.gamma[0], b.position[1] - patch.gamma[1]],
            ..*b
        })
        .collect();
    let gammas = [patch.gamma];
    let n = field.n_outputs();
    Ok(neumann_term(&ctx(field, &gammas), &owned, q, n, true, 1.0, false)?.0)
}

/// Mean squared error over measured components.
pub fn data_loss(field: &dyn FieldSource, measurements: &[Measurement]) -> Result<f64> {
    Ok(data_term(&ctx(field, &[]), measurements, &[], 1.0, false)?.0)
}

/// `((fixed, overlap), ∂/∂γ of their sum)`.
pub type TopologyLossGrad = ((f64, f64), Vec<[f64; 2]>);

/// Topology terms `(fixed, overlap)` of `spec` and their gradient with
/// respect to every center (unweighted).
pub fn topology_loss_grad(gammas: &[Point], spec: &TopologySpec) -> Result<TopologyLossGrad> {
    let mut grad = Gradients::zeros(0, gammas.len());
    let terms = topo_terms(gammas, spec, 1.0, Some(&mut grad))?;
    Ok((terms, grad.gamma))
}

/// `(1/N_t)·Σ_{ordered pairs}(r_ij − r*_ij)²`; each listed pair counts twice.
pub fn topo_fixed_distance_loss(patches: &[CirclePatch], pairs: &[TopoPair]) -> Result<f64> {
    let spec = TopologySpec {
        pairs: pairs.to_vec(),
        ..Default::default()
    };
    let gammas: Vec<Point> = patches.iter().map(|p| p.gamma).collect();
    Ok(topo_terms(&gammas, &spec, 1.0, None)?.0)
}

/// `(1/N_t)·Σ_i(‖γ_i − c‖ − r*)²` with `c` the centroid of the patches.
pub fn topo_hub_loss(patches: &[CirclePatch], distance: f64) -> Result<f64> {
    let spec = TopologySpec {
        hub_distance: Some(distance),
        ..Default::default()
    };
    let gammas: Vec<Point> = patches.iter().map(|p| p.gamma).collect();
    Ok(topo_terms(&gammas, &spec, 1.0, None)?.0)
}

/// `(1/N_t)·Σ_i Σ_{j≠i} 1/r_ij²`. Coincident centers are an error.
pub fn topo_nonoverlap_loss(patches: &[CirclePatch]) -> Result<f64> {
    let n_t = patches.len() as f64;
    let mut sum = 0.0;
    for (i, a) in patches.iter().enumerate() {
        for b in &patches[i + 1..] {
            let r2 = (a.gamma[0] - b.gamma[0]).powi(2) + (a.gamma[1] - b.gamma[1]).powi(2);
            if r2 == 0.0 {
                return Err(numeric_err(format!(
                    "non-overlap loss: coincident patch centers at {:?}",
                    a.gamma
                )));
            }
            sum += 2.0 / r2;
        }
    }
    Ok(sum / n_t)
}

fn stored_centers(samples: &[BoundarySample]) -> Vec<Point> {
    let n = samples.iter().map(|b| b.owner + 1).max().unwrap_or(0);
    let mut c = vec![[0.0; 2]; n];
    for b in samples {
        c[b.owner] = [b.position[0] - b.offset[0], b.position[1] - b.offset[1]];
    }
    c
}

trait PositionOr {
    fn position_or(&self, gamma: Point) -> Point;
}

impl PositionOr for BoundarySample {
    fn position_or(&self, gamma: Point) -> Point {
        self.recentered(gamma)
    }
}

// --- total ----------------------------------------------------------------

impl Objective {
    pub fn validate(&self, field_outputs: usize, n_patches: usize, samples: &SampleSet) -> Result<()> {
        self.pde.validate()?;
        self.weights.validate()?;
        let want = self.pde.out_dim() + usize::from(matches!(self.mode, Mode::Dt { .. }));
        if field_outputs != want {
            return Err(config_err(format!(
                "{} in {} mode needs {want} network outputs, got {field_outputs}",
                self.pde.name(),
                self.mode_name()
            )));
        }
        if !(self.beta > 0.0) || !(self.k > 0.0) {
            return Err(config_err("beta and k must be positive"));
        }
        if samples.collocation.is_empty() && self.weights.lambda_p > 0.0 {
            return Err(config_err("PDE loss needs collocation points"));
        }
        let has_data = samples.measurements.iter().any(|m| m.n_present() > 0) || !samples.periodic.is_empty();
        if self.weights.lambda_d > 0.0 && !has_data {
            return Err(config_err("lambda_d > 0 but the sample set has no data"));
        }
        match self.mode {
            Mode::Dt { c } => {
                if c == 0.0 {
                    return Err(config_err("density sharpness c must be non-zero"));
                }
                if let Some(v) = &self.dt_bc_value {
                    if v.len() > self.pde.out_dim() {
                        return Err(config_err("density-mode Dirichlet value has too many components"));
                    }
                }
            }
            Mode::Lt => {
                if n_patches == 0 {
                    return Err(config_err("LT mode needs at least one patch"));
                }
                self.topology.validate(n_patches)?;
                match &self.bc {
                    BoundaryCondition::None => {}
                    BoundaryCondition::Dirichlet { value } => {
                        if value.is_empty() || value.len() > self.pde.out_dim() {
                            return Err(config_err("Dirichlet value must have 1..=out_dim components"));
                        }
                    }
                    BoundaryCondition::Neumann { q } => {
                        if !q.is_finite() {
                            return Err(config_err("Neumann flux must be finite"));
                        }
                    }
                }
                if !matches!(self.bc, BoundaryCondition::None) && self.weights.lambda_b > 0.0 && samples.boundary.is_empty() {
                    return Err(config_err("boundary loss enabled but no ring samples"));
                }
                owner_check(&samples.boundary, n_patches)?;
            }
        }
        Ok(())
    }

    pub fn mode_name(&self) -> &'static str {
        match self.mode {
            Mode::Lt => "lt",
            Mode::Dt { .. } => "dt",
        }
    }

    /// Loss breakdown and, when `want_grad`, the gradient of the weighted
    /// total with respect to the network parameters and patch centers.
    pub fn evaluate(
        &self,
        field: &dyn FieldSource,
        n_theta: usize,
        gammas: &[Point],
        samples: &SampleSet,
        want_grad: bool,
    ) -> Result<(LossBreakdown, Option<Gradients>)> {
        let w = &self.weights;
        let lt = matches!(self.mode, Mode::Lt);
        let gammas: &[Point] = if lt { gammas } else { &[] };
        let ctx = Ctx {
            field,
            gammas,
            n_theta,
        };
        let mut grad = want_grad.then(|| Gradients::zeros(n_theta, gammas.len()));
        let mut merge = |g: Option<Gradients>| {
            if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
                acc.add(&g);
            }
        };
        let mut out = LossBreakdown::default();

        if w.lambda_p > 0.0 || !samples.collocation.is_empty() {
            let term = PdeTerm {
                problem: &self.pde,
                mode: self.mode,
                k: self.k,
                beta: self.beta,
                dt_bc: self.dt_bc_value.as_deref(),
            };
            let (v, g) = pde_term(&ctx, &term, &samples.collocation, w.lambda_p, want_grad && w.lambda_p > 0.0)?;
            out.pde = check("pde", v)?;
            merge(g);
        }

        if lt && !samples.boundary.is_empty() {
            let active = want_grad && w.lambda_b > 0.0;
            let (v, g) = match &self.bc {
                BoundaryCondition::None => (0.0, None),
                BoundaryCondition::Dirichlet { value } => {
                    dirichlet_term(&ctx, &samples.boundary, value, self.track_rings, w.lambda_b, active)?
                }
                BoundaryCondition::Neumann { q } => neumann_term(
                    &ctx,
                    &samples.boundary,
                    *q,
                    self.pde.out_dim(),
                    self.track_rings,
                    w.lambda_b,
                    active,
                )?,
            };
            out.bc = check("bc", v)?;
            merge(g);
        }

        let has_data = samples.measurements.iter().any(|m| m.n_present() > 0) || !samples.periodic.is_empty();
        if has_data {
            let (v, g) = data_term(&ctx, &samples.measurements, &samples.periodic, w.lambda_d, want_grad && w.lambda_d > 0.0)?;
            out.data = check("data", v)?;
            merge(g);
        }

        if lt && !self.topology.is_empty() {
            let active = want_grad && w.lambda_t > 0.0;
            let (f, o) = topo_terms(gammas, &self.topology, w.lambda_t, if active { grad.as_mut() } else { None })?;
            out.topo_fixed = check("topo_fixed", f)?;
            out.topo_overlap = check("topo_overlap", o)?;
        }

        let out = out.combine(w);
        check("total", out.total)?;
        if let Some(g) = &grad {
            if !g.is_finite() {
                return Err(numeric_err("loss gradient"));
            }
        }
        Ok((out, grad))
    }
}

fn check(term: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric {
            context: format!("{term} loss"),
        })
    }
}

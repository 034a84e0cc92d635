//! Adam over the network parameters and patch centers, with loss history,
//! early stopping on center stability, and checkpoints.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::geometry::Roi;
use crate::losses::{Gradients, LossBreakdown, Objective};
use crate::network::{read_exact, truncated, MlpConfig, MlpParams, Network};
use crate::sampling::{fmt, SampleSet};
use crate::Point;

/// Totals above this abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Learning rate for the patch centers; `lr` when absent.
    #[serde(default)]
    pub gamma_lr: Option<f64>,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            gamma_lr: None,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config_err(format!("lr must be positive, got {}", self.lr)));
        }
        if let Some(g) = self.gamma_lr {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(config_err(format!("gamma_lr must be non-negative, got {g}")));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(config_err(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(config_err(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Trainable state plus optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub net: Arc<Network>,
    pub gamma: Vec<Point>,
    pub m_theta: Vec<f64>,
    pub v_theta: Vec<f64>,
    pub m_gamma: Vec<[f64; 2]>,
    pub v_gamma: Vec<[f64; 2]>,
    pub epoch: u64,
}

impl TrainState {
    pub fn new(net: Network, gamma: Vec<Point>) -> Self {
        let n = net.params.len();
        let g = gamma.len();
        TrainState {
            net: Arc::new(net),
            gamma,
            m_theta: vec![0.0; n],
            v_theta: vec![0.0; n],
            m_gamma: vec![[0.0; 2]; g],
            v_gamma: vec![[0.0; 2]; g],
            epoch: 0,
        }
    }

    pub fn theta(&self) -> &MlpParams {
        &self.net.params
    }
}

fn adam_update(p: &mut f64, m: &mut f64, v: &mut f64, g: f64, lr: f64, cfg: &AdamConfig, c1: f64, c2: f64) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
}

/// One bias-corrected Adam step on θ and γ together.
pub fn adam_step(state: &mut TrainState, grad: &Gradients, cfg: &AdamConfig) -> Result<()> {
    if grad.theta.len() != state.m_theta.len() || grad.gamma.len() != state.gamma.len() {
        return Err(Error::ShapeMismatch(format!(
            "gradient shapes ({}, {}) do not match state ({}, {})",
            grad.theta.len(),
            grad.gamma.len(),
            state.m_theta.len(),
            state.gamma.len()
        )));
    }
    if let Some(i) = grad.theta.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric {
            context: format!("gradient of network parameter {i}"),
        });
    }
    if let Some(i) = grad.gamma.iter().position(|g| !(g[0].is_finite() && g[1].is_finite())) {
        return Err(Error::Numeric {
            context: format!("gradient of patch center {i}"),
        });
    }
    let t = (state.epoch + 1) as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let net = Arc::make_mut(&mut state.net);
    for (((p, m), v), &g) in net
        .params
        .as_mut_slice()
        .iter_mut()
        .zip(&mut state.m_theta)
        .zip(&mut state.v_theta)
        .zip(&grad.theta)
    {
        adam_update(p, m, v, g, cfg.lr, cfg, c1, c2);
    }
    let glr = cfg.gamma_lr.unwrap_or(cfg.lr);
    for (((p, m), v), g) in state
        .gamma
        .iter_mut()
        .zip(&mut state.m_gamma)
        .zip(&mut state.v_gamma)
        .zip(&grad.gamma)
    {
        for c in 0..2 {
            adam_update(&mut p[c], &mut m[c], &mut v[c], g[c], glr, cfg, c1, c2);
        }
    }
    state.epoch += 1;
    Ok(())
}

/// Logged losses and center snapshots.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<u64>,
    pub losses: Vec<LossBreakdown>,
    pub gammas: Vec<Vec<Point>>,
}

impl History {
    pub fn push(&mut self, epoch: u64, loss: LossBreakdown, gamma: &[Point]) {
        self.epochs.push(epoch);
        self.losses.push(loss);
        self.gammas.push(gamma.to_vec());
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last_loss(&self) -> Option<&LossBreakdown> {
        self.losses.last()
    }

    /// `epoch,total,pde,bc,data,topo_fixed,topo_overlap`
    pub fn write_loss_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["epoch", "total", "pde", "bc", "data", "topo_fixed", "topo_overlap"])
            .map_err(csv_err)?;
        for (e, l) in self.epochs.iter().zip(&self.losses) {
            let row = [l.total, l.pde, l.bc, l.data, l.topo_fixed, l.topo_overlap];
            let mut rec = vec![e.to_string()];
            rec.extend(row.iter().map(|&v| fmt(v)));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `epoch,x0,y0,x1,y1,...`
    pub fn write_gamma_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let n = self.gammas.first().map_or(0, Vec::len);
        let mut header = vec!["epoch".to_string()];
        for i in 0..n {
            header.push(format!("x{i}"));
            header.push(format!("y{i}"));
        }
        w.write_record(&header).map_err(csv_err)?;
        for (e, g) in self.epochs.iter().zip(&self.gammas) {
            let mut rec = vec![e.to_string()];
            for p in g {
                rec.push(fmt(p[0]));
                rec.push(fmt(p[1]));
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// True iff the last `window` snapshots moved by less than `tol` (max norm)
/// between consecutive entries.
pub fn early_stop_check(history: &History, window: usize, tol: f64) -> bool {
    if window < 2 || history.gammas.len() < window {
        return false;
    }
    let tail = &history.gammas[history.gammas.len() - window..];
    tail.windows(2).all(|w| {
        w[0].iter()
            .zip(&w[1])
            .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
            .fold(0.0, f64::max)
            < tol
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub window: usize,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub epochs: u64,
    pub log_interval: u64,
    #[serde(default)]
    pub early_stop: Option<EarlyStop>,
    /// Keep every center inside this box after each step.
    #[serde(default)]
    pub gamma_bounds: Option<Roi>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.log_interval == 0 {
            return Err(config_err("log_interval must be at least 1"));
        }
        if let Some(es) = &self.early_stop {
            if es.window < 2 || !(es.tol > 0.0) {
                return Err(config_err("early stop needs window >= 2 and tol > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Completed,
    EarlyStop,
}

/// Run full-batch epochs from `state`, appending to `history`.
///
/// On error the state is left at the last good epoch so callers can inspect
/// or save it. `on_log` sees every logged epoch.
pub fn train(
    state: &mut TrainState,
    history: &mut History,
    objective: &Objective,
    samples: &SampleSet,
    cfg: &TrainConfig,
    mut on_log: impl FnMut(u64, &LossBreakdown, &[Point]),
) -> Result<StopReason> {
    cfg.validate()?;
    samples.validate()?;
    objective.validate(state.net.config().n_outputs(), state.gamma.len(), samples)?;
    let n_theta = state.net.params.len();
    let target = state.epoch + cfg.epochs;
    loop {
        let want_grad = state.epoch < target;
        let (loss, grad) = objective.evaluate(&state.net, n_theta, &state.gamma, samples, want_grad)?;
        if !(loss.total <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence {
                epoch: state.epoch,
                total: loss.total,
            });
        }
        if state.epoch.is_multiple_of(cfg.log_interval) || !want_grad {
            history.push(state.epoch, loss, &state.gamma);
            on_log(state.epoch, &loss, &state.gamma);
            if let Some(es) = &cfg.early_stop {
                if want_grad && early_stop_check(history, es.window, es.tol) {
                    return Ok(StopReason::EarlyStop);
                }
            }
        }
        let Some(grad) = grad else {
            return Ok(StopReason::Completed);
        };
        let mut next = state.clone();
        adam_step(&mut next, &grad, &cfg.adam)?;
        if let Some(b) = &cfg.gamma_bounds {
            for g in &mut next.gamma {
                g[0] = g[0].clamp(b.x_min, b.x_max);
                g[1] = g[1].clamp(b.y_min, b.y_max);
            }
        }
        *state = next;
    }
}

// --- checkpoints ----------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 4] = b"LTPC";
const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(state: &TrainState, w: &mut W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    w.write_u64::<LittleEndian>(state.epoch)?;
    state.net.write_to(w)?;
    w.write_u64::<LittleEndian>(state.gamma.len() as u64)?;
    for block in [&state.gamma, &state.m_gamma, &state.v_gamma] {
        for p in block.iter() {
            w.write_f64::<LittleEndian>(p[0])?;
            w.write_f64::<LittleEndian>(p[1])?;
        }
    }
    for block in [&state.m_theta, &state.v_theta] {
        for &v in block.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

/// Read a checkpoint; with `expected` set, a different network shape is a
/// shape-mismatch error.
pub fn read_checkpoint<R: Read>(r: &mut R, expected: Option<&MlpConfig>) -> Result<TrainState> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let epoch = r.read_u64::<LittleEndian>().map_err(truncated)?;
    let net = Network::read_from(r)?;
    if let Some(c) = expected {
        if c != net.config() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint network {:?} does not match configured {:?}",
                net.config(),
                c
            )));
        }
    }
    let n_gamma = r.read_u64::<LittleEndian>().map_err(truncated)? as usize;
    if n_gamma > 1 << 20 {
        return Err(Error::Format(format!("implausible patch count {n_gamma}")));
    }
    let read_points = |r: &mut R| -> Result<Vec<Point>> {
        let mut flat = vec![0.0; 2 * n_gamma];
        r.read_f64_into::<LittleEndian>(&mut flat).map_err(truncated)?;
        Ok(flat.chunks(2).map(|c| [c[0], c[1]]).collect())
    };
    let gamma = read_points(r)?;
    let m_gamma = read_points(r)?;
    let v_gamma = read_points(r)?;
    let n = net.params.len();
    let mut m_theta = vec![0.0; n];
    let mut v_theta = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut m_theta).map_err(truncated)?;
    r.read_f64_into::<LittleEndian>(&mut v_theta).map_err(truncated)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(TrainState {
        net: Arc::new(net),
        gamma,
        m_theta,
        v_theta,
        m_gamma,
        v_gamma,
        epoch,
    })
}

pub fn checkpoint_save(state: &TrainState, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(state, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn checkpoint_load(path: &Path, expected: Option<&MlpConfig>) -> Result<TrainState> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r, expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_rings, CirclePatch};
    use crate::losses::{BoundaryCondition, LossWeights, Mode, TopologySpec};
    use crate::network::{he_init, InputMap};
    use crate::pde::PdeProblem;
    use crate::sampling::{uniform_grid, Measurement};
    use proptest::prelude::*;

    fn scalar_state(p: f64) -> TrainState {
        let cfg = MlpConfig::new(1, 1, 1, false).unwrap();
        let roi = Roi::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let params = MlpParams::zeros(cfg);
        let mut s = TrainState::new(Network::new(params, InputMap::new(roi)), vec![[p, 0.0]]);
        s.m_theta.iter_mut().for_each(|v| *v = 0.0);
        s
    }

    #[test]
    fn first_adam_step_is_lr() {
        let mut s = scalar_state(0.0);
        let n = s.m_theta.len();
        let g = Gradients {
            theta: vec![0.0; n],
            gamma: vec![[1.0, 0.0]],
        };
        adam_step(&mut s, &g, &AdamConfig::default()).unwrap();
        assert!((s.gamma[0][0] + 1e-4).abs() < 1e-11);
        assert_eq!(s.gamma[0][1], 0.0);
        assert_eq!(s.epoch, 1);
        // a zero gradient only decays the moments
        let before = s.clone();
        let z = Gradients::zeros(n, 1);
        let mut s2 = before.clone();
        s2.m_gamma = vec![[0.0; 2]];
        s2.v_gamma = vec![[0.0; 2]];
        adam_step(&mut s2, &z, &AdamConfig::default()).unwrap();
        assert_eq!(s2.gamma, before.gamma);
        let bad = Gradients {
            theta: vec![f64::NAN; n],
            gamma: vec![[0.0; 2]],
        };
        assert!(matches!(adam_step(&mut s, &bad, &AdamConfig::default()), Err(Error::Numeric { .. })));
    }

    #[test]
    fn early_stop_rules() {
        let mut h = History::default();
        for e in 0..5 {
            h.push(e, LossBreakdown::default(), &[[1.0, 2.0]]);
        }
        assert!(early_stop_check(&h, 5, 1e-4));
        assert!(!early_stop_check(&h, 6, 1e-4));
        let mut d = History::default();
        for e in 0..5 {
            d.push(e, LossBreakdown::default(), &[[1.0 + 1e-2 * e as f64, 2.0]]);
        }
        assert!(!early_stop_check(&d, 3, 1e-4));
    }

    fn tiny_problem() -> (TrainState, Objective, SampleSet) {
        let roi = Roi::new(-2.0, 2.0, -2.0, 2.0).unwrap();
        let cfg = MlpConfig::new(2, 10, 1, false).unwrap();
        let net = Network::new(he_init(cfg, 3), InputMap::new(roi));
        let gamma = vec![[0.2, -0.1]];
        let mut s = SampleSet::new(roi, roi);
        s.collocation = uniform_grid(&roi, 6, 6).unwrap();
        s.boundary = sample_rings(0, &CirclePatch::new(gamma[0]), &[0.5, 0.3], 8).unwrap();
        s.measurements = (0..8)
            .map(|i| Measurement::full([-1.8 + 0.5 * i as f64, 1.8], &[0.05 * i as f64]))
            .collect();
        let obj = Objective {
            pde: PdeProblem::Laplace,
            mode: Mode::Lt,
            k: 1.0,
            beta: 100.0,
            bc: BoundaryCondition::Neumann { q: -0.5 },
            dt_bc_value: None,
            topology: TopologySpec::default(),
            weights: LossWeights {
                lambda_p: 1.0,
                lambda_b: 1.0,
                lambda_d: 10.0,
                lambda_t: 0.0,
            },
            track_rings: true,
        };
        (TrainState::new(net, gamma), obj, s)
    }

    fn cfg(epochs: u64) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig::with_lr(1e-3),
            epochs,
            log_interval: 10,
            early_stop: None,
            gamma_bounds: None,
        }
    }

    #[test]
    fn zero_epochs_leaves_state_unchanged() {
        let (mut st, obj, s) = tiny_problem();
        let before = st.clone();
        let mut h = History::default();
        train(&mut st, &mut h, &obj, &s, &cfg(0), |_, _, _| {}).unwrap();
        assert_eq!(st, before);
        assert_eq!(h.epochs, vec![0]);
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let run = || {
            let (mut st, obj, s) = tiny_problem();
            let mut h = History::default();
            train(&mut st, &mut h, &obj, &s, &cfg(60), |_, _, _| {}).unwrap();
            (st, h)
        };
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert_eq!(ha.epochs, vec![0, 10, 20, 30, 40, 50, 60]);
        assert!(ha.losses.last().unwrap().total < ha.losses[0].total);
        let mut la = Vec::new();
        ha.write_loss_csv(&mut la).unwrap();
        let text = String::from_utf8(la).unwrap();
        assert!(text.starts_with("epoch,total,pde,bc,data,topo_fixed,topo_overlap\n"));
        let mut ga = Vec::new();
        ha.write_gamma_csv(&mut ga).unwrap();
        assert!(String::from_utf8(ga).unwrap().starts_with("epoch,x0,y0\n"));
    }

    #[test]
    fn divergence_is_reported() {
        let (mut st, mut obj, s) = tiny_problem();
        obj.weights.lambda_d = 1e15;
        let mut h = History::default();
        let e = train(&mut st, &mut h, &obj, &s, &cfg(5), |_, _, _| {}).unwrap_err();
        assert!(matches!(e, Error::Divergence { epoch: 0, .. }));
    }

    #[test]
    fn checkpoint_roundtrip_and_errors() {
        let (mut st, obj, s) = tiny_problem();
        let mut h = History::default();
        train(&mut st, &mut h, &obj, &s, &cfg(3), |_, _, _| {}).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&st, &mut buf).unwrap();
        let back = read_checkpoint(&mut buf.as_slice(), Some(st.net.config())).unwrap();
        assert_eq!(back, st);
        let cut = &buf[..buf.len() - 5];
        assert!(matches!(read_checkpoint(&mut &cut[..], None), Err(Error::Format(_))));
        let other = MlpConfig::new(3, 10, 1, false).unwrap();
        assert!(matches!(
            read_checkpoint(&mut buf.as_slice(), Some(&other)),
            Err(Error::ShapeMismatch(_))
        ));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        checkpoint_save(&st, &path).unwrap();
        assert_eq!(checkpoint_load(&path, None).unwrap(), st);
    }

    proptest! {
        #[test]
        fn early_stop_needs_window_snapshots(n in 0usize..8, window in 2usize..10) {
            let mut h = History::default();
            for e in 0..n {
                h.push(e as u64, LossBreakdown::default(), &[[0.0, 0.0]]);
            }
            if n < window {
                prop_assert!(!early_stop_check(&h, window, 1.0));
            }
        }
    }
}

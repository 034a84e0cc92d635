//! Experiment configuration, shipped presets, and the train / eval / export
//! runs behind the command-line front end.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffengine::{Order, Tape};
use crate::error::{config_err, Error, Result};
use crate::extract::{extract_density_topology, DensityTopology, ScalarGrid};
use crate::geometry::{
    init_gamma, sample_all_rings, topology_json, topology_svg, CirclePatch, Roi, DEFAULT_BETA, DEFAULT_K,
};
use crate::losses::{BoundaryCondition, LossBreakdown, LossWeights, Mode, Objective, TopoPair, TopologySpec};
use crate::metrics::{
    boundary_flux, config_hash, lift_drag, mean_flux, metric_grid, nmae, relative_l2, report_json, MetricRecord,
    METRIC_GRID,
};
use crate::network::{he_init, InputMap, MlpConfig, Network};
use crate::oracle::{annulus_temperature, AnnulusProblem};
use crate::pde::{rho_hat, FieldSource, FlowParams, MaterialParams, PdeProblem};
use crate::sampling::{edge_points, fmt, random_points, Edge, Measurement, PeriodicPair, SampleSet};
use crate::training::{checkpoint_load, checkpoint_save, train, EarlyStop, History, StopReason, TrainConfig, TrainState};
use crate::training::AdamConfig;
use crate::Point;

/// Density sharpness used by every DT preset.
pub const DEFAULT_C: f64 = -10.0;
/// Ring radii of the boundary samples.
pub const RING_RADII: [f64; 4] = [0.5, 0.4, 0.3, 0.2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModeConfig {
    Lt,
    Dt {
        #[serde(default = "default_c")]
        c: f64,
        /// Density threshold used when extracting the shape.
        #[serde(default = "default_threshold")]
        threshold: f64,
        /// Dirichlet value blended in by the density.
        #[serde(default)]
        bc_value: Option<Vec<f64>>,
    },
}

fn default_c() -> f64 {
    DEFAULT_C
}
fn default_threshold() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_layers: usize,
    pub width: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disk {
    pub center: Point,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub roi: Roi,
    /// Region holding the collocation grid; the ROI when absent.
    #[serde(default)]
    pub core: Option<Roi>,
    /// Collocation grid size `[nx, ny]` over the core region.
    pub collocation: [usize; 2],
    /// Keep only collocation points inside this disk.
    #[serde(default)]
    pub disk: Option<Disk>,
    /// Reject measurements inside the core region.
    #[serde(default)]
    pub data_outside_core: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchConfig {
    pub count: usize,
    /// Initial centers; drawn from the seed inside the core when absent.
    #[serde(default)]
    pub initial: Option<Vec<Point>>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_rings")]
    pub ring_radii: Vec<f64>,
    pub ring_samples: usize,
    pub bc: BoundaryCondition,
    #[serde(default = "default_true")]
    pub track_rings: bool,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_k() -> f64 {
    DEFAULT_K
}
fn default_rings() -> Vec<f64> {
    RING_RADII.to_vec()
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeName {
    Left,
    Right,
    Bottom,
    Top,
}

impl From<EdgeName> for Edge {
    fn from(e: EdgeName) -> Edge {
        match e {
            EdgeName::Left => Edge::Left,
            EdgeName::Right => Edge::Right,
            EdgeName::Bottom => Edge::Bottom,
            EdgeName::Top => Edge::Top,
        }
    }
}

/// Value profile along an edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    /// `sin(2π·(y − y_min)/H) + 1` for one component, `H` the ROI height.
    OutletSine { component: usize },
}

/// Prescribed values on one ROI edge, used as measurement data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeData {
    pub edge: EdgeName,
    pub n: usize,
    pub components: Vec<usize>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub profile: Option<Profile>,
}

/// Pairs of matching points on the bottom and top edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicData {
    pub n: usize,
    pub components: Vec<usize>,
}

/// Synthetic data from the annulus closed form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnulusData {
    pub center: Point,
    pub outer_radius: f64,
    pub q: f64,
    /// Random points strictly between the rings.
    pub n_interior: usize,
    /// Equiangular points on the outer circle, where `T = 0`.
    pub n_outer: usize,
}

impl AnnulusData {
    pub fn problem(&self) -> Result<AnnulusProblem> {
        AnnulusProblem::new(self.center, self.outer_radius, self.q)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub annulus: Option<AnnulusData>,
    #[serde(default)]
    pub edges: Vec<EdgeData>,
    #[serde(default)]
    pub periodic: Vec<PeriodicData>,
    /// Extra measurements in the sample-set CSV format.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// True patch centers, when known, for reporting.
    #[serde(default)]
    pub reference_centers: Option<Vec<Point>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub lr: f64,
    #[serde(default)]
    pub gamma_lr: Option<f64>,
    pub epochs: u64,
    pub log_interval: u64,
    #[serde(default)]
    pub early_stop: Option<EarlyStop>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub mode: ModeConfig,
    pub pde: PdeProblem,
    pub network: NetworkConfig,
    pub domain: DomainConfig,
    /// Required in LT mode, ignored in DT mode.
    #[serde(default)]
    pub patches: Option<PatchConfig>,
    #[serde(default)]
    pub topology: TopologySpec,
    pub weights: LossWeights,
    #[serde(default)]
    pub data: DataConfig,
    pub training: TrainingConfig,
    pub output: OutputConfig,
}

// --- parsing --------------------------------------------------------------

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("experiment config serializes")
    }

    pub fn is_lt(&self) -> bool {
        matches!(self.mode, ModeConfig::Lt)
    }

    pub fn mlp_config(&self) -> Result<MlpConfig> {
        MlpConfig::new(self.network.n_layers, self.network.width, self.pde.out_dim(), !self.is_lt())
    }

    pub fn core(&self) -> Roi {
        self.domain.core.unwrap_or(self.domain.roi)
    }

    pub fn validate(&self) -> Result<()> {
        self.pde.validate()?;
        self.mlp_config()?;
        self.domain.roi.validate()?;
        let core = self.core();
        core.validate()?;
        let [nx, ny] = self.domain.collocation;
        if nx < 2 || ny < 2 {
            return Err(config_err("domain.collocation needs at least 2×2 points"));
        }
        if let Some(d) = &self.domain.disk {
            if !(d.radius > 0.0) {
                return Err(config_err("domain.disk.radius must be positive"));
            }
        }
        let out_dim = self.pde.out_dim();
        match &self.mode {
            ModeConfig::Lt => {
                let p = self
                    .patches
                    .as_ref()
                    .ok_or_else(|| config_err("LT mode needs a [patches] section"))?;
                if p.count == 0 {
                    return Err(config_err("patches.count must be at least 1"));
                }
                if let Some(init) = &p.initial {
                    if init.len() != p.count {
                        return Err(config_err(format!(
                            "patches.initial has {} centers, patches.count is {}",
                            init.len(),
                            p.count
                        )));
                    }
                }
                if p.ring_samples == 0 || p.ring_radii.is_empty() {
                    return Err(config_err("patches need at least one ring and one sample per ring"));
                }
                if let BoundaryCondition::Dirichlet { value } = &p.bc {
                    if value.is_empty() || value.len() > out_dim {
                        return Err(config_err(format!(
                            "patches.bc.value needs 1..={out_dim} components, got {}",
                            value.len()
                        )));
                    }
                }
                self.topology.validate(p.count)?;
            }
            ModeConfig::Dt { c, threshold, bc_value } => {
                if *c == 0.0 || !c.is_finite() {
                    return Err(config_err("mode.c must be finite and non-zero"));
                }
                if !threshold.is_finite() {
                    return Err(config_err("mode.threshold must be finite"));
                }
                if let Some(v) = bc_value {
                    if v.len() > out_dim {
                        return Err(config_err("mode.bc_value has more components than the PDE"));
                    }
                }
            }
        }
        self.weights.validate()?;
        for e in &self.data.edges {
            if e.components.len() != e.values.len() {
                return Err(config_err(format!(
                    "edge data on {:?}: {} components but {} values",
                    e.edge,
                    e.components.len(),
                    e.values.len()
                )));
            }
            if e.components.iter().any(|&k| k >= out_dim) {
                return Err(config_err(format!("edge data on {:?} names a missing component", e.edge)));
            }
            if let Some(Profile::OutletSine { component }) = e.profile {
                if !e.components.contains(&component) {
                    return Err(config_err("outlet profile component must be listed in components"));
                }
            }
        }
        for p in &self.data.periodic {
            if p.components.iter().any(|&k| k >= out_dim) {
                return Err(config_err("periodic data names a missing component"));
            }
        }
        if let Some(a) = &self.data.annulus {
            a.problem()?;
            if out_dim != 1 {
                return Err(config_err("annulus data needs a scalar PDE"));
            }
        }
        self.training_config().validate()?;
        Ok(())
    }

    pub fn training_config(&self) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig {
                gamma_lr: self.training.gamma_lr,
                ..AdamConfig::with_lr(self.training.lr)
            },
            epochs: self.training.epochs,
            log_interval: self.training.log_interval,
            early_stop: self.training.early_stop,
            gamma_bounds: Some(self.core()),
        }
    }

    pub fn objective(&self) -> Objective {
        let (mode, dt_bc_value) = match &self.mode {
            ModeConfig::Lt => (Mode::Lt, None),
            ModeConfig::Dt { c, bc_value, .. } => (Mode::Dt { c: *c }, bc_value.clone()),
        };
        let p = self.patches.as_ref();
        Objective {
            pde: self.pde,
            mode,
            k: p.map_or(DEFAULT_K, |p| p.k),
            beta: p.map_or(DEFAULT_BETA, |p| p.beta),
            bc: p.map_or(BoundaryCondition::None, |p| p.bc.clone()),
            dt_bc_value,
            topology: if self.is_lt() { self.topology.clone() } else { TopologySpec::default() },
            weights: self.weights,
            track_rings: p.is_none_or(|p| p.track_rings),
        }
    }

    pub fn initial_gamma(&self) -> Vec<Point> {
        match (&self.mode, &self.patches) {
            (ModeConfig::Lt, Some(p)) => p
                .initial
                .clone()
                .unwrap_or_else(|| init_gamma(p.count, &self.core(), self.seed)),
            _ => Vec::new(),
        }
    }

    /// Build the sample set for the given initial centers.
    pub fn samples(&self, gamma: &[Point]) -> Result<SampleSet> {
        let roi = self.domain.roi;
        let core = self.core();
        let mut s = SampleSet::new(roi, core);
        s.outside_core = self.domain.data_outside_core;
        let [nx, ny] = self.domain.collocation;
        s.collocation = crate::sampling::uniform_grid(&core, nx, ny)?;
        if let Some(d) = &self.domain.disk {
            s.collocation
                .retain(|p| (p[0] - d.center[0]).hypot(p[1] - d.center[1]) <= d.radius);
        }
        let out_dim = self.pde.out_dim();
        if let Some(a) = &self.data.annulus {
            let prob = a.problem()?;
            let bbox = Roi::centered(a.center, a.outer_radius)?;
            let mut k = 0u64;
            let mut interior = Vec::with_capacity(a.n_interior);
            while interior.len() < a.n_interior {
                for p in random_points(&bbox, 4 * a.n_interior.max(16), self.seed.wrapping_add(k)) {
                    let r = prob.radius_of(p);
                    if r > prob.inner_radius && r < prob.outer_radius && interior.len() < a.n_interior {
                        interior.push(p);
                    }
                }
                k += 1;
            }
            for p in interior {
                s.measurements.push(Measurement::full(p, &[annulus_temperature(&prob, p)?]));
            }
            for i in 0..a.n_outer {
                let t = std::f64::consts::TAU * i as f64 / a.n_outer as f64;
                let p = [a.center[0] + a.outer_radius * t.cos(), a.center[1] + a.outer_radius * t.sin()];
                s.measurements.push(Measurement::full(p, &[0.0]));
            }
        }
        for e in &self.data.edges {
            for p in edge_points(&roi, e.edge.into(), e.n) {
                let mut values = vec![None; out_dim];
                for (&k, &v) in e.components.iter().zip(&e.values) {
                    values[k] = Some(v);
                }
                if let Some(Profile::OutletSine { component }) = e.profile {
                    let y = (p[1] - roi.y_min) / roi.height();
                    values[component] = Some((std::f64::consts::TAU * y).sin() + 1.0);
                }
                s.measurements.push(Measurement { point: p, values });
            }
        }
        for per in &self.data.periodic {
            let bottom = edge_points(&roi, Edge::Bottom, per.n);
            let top = edge_points(&roi, Edge::Top, per.n);
            for (a, b) in bottom.into_iter().zip(top) {
                s.periodic.push(PeriodicPair {
                    a,
                    b,
                    components: per.components.clone(),
                });
            }
        }
        if let Some(path) = &self.data.csv {
            let file = fs::File::open(path)?;
            let extra = SampleSet::read_csv(file, roi, core, gamma)?;
            s.measurements.extend(extra.measurements);
            s.periodic.extend(extra.periodic);
        }
        if let (ModeConfig::Lt, Some(p)) = (&self.mode, &self.patches) {
            if !matches!(p.bc, BoundaryCondition::None) {
                let patches: Vec<CirclePatch> = gamma.iter().map(|&g| CirclePatch::new(g)).collect();
                s.boundary = sample_all_rings(&patches, &p.ring_radii, p.ring_samples)?;
            }
        }
        s.validate()?;
        Ok(s)
    }

    /// Shrink point counts and epochs for a quick run of the same setup.
    pub fn scaled_for_smoke(&self, epochs: u64) -> Self {
        let mut c = self.clone();
        let [nx, ny] = c.domain.collocation;
        let f = (16.0 / nx.max(ny) as f64).min(1.0);
        c.domain.collocation = [((nx as f64 * f).round() as usize).max(4), ((ny as f64 * f).round() as usize).max(4)];
        if let Some(p) = c.patches.as_mut() {
            p.ring_samples = p.ring_samples.min(8);
        }
        for e in &mut c.data.edges {
            e.n = e.n.min(16);
        }
        for p in &mut c.data.periodic {
            p.n = p.n.min(16);
        }
        if let Some(a) = c.data.annulus.as_mut() {
            a.n_interior = a.n_interior.min(64);
            a.n_outer = a.n_outer.min(16);
        }
        c.training.epochs = epochs;
        c.training.log_interval = c.training.log_interval.min(epochs.max(1));
        c
    }
}

// --- build ----------------------------------------------------------------

/// Everything needed to train or evaluate one configuration.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub objective: Objective,
    pub samples: SampleSet,
    pub state: TrainState,
}

impl Experiment {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mlp = config.mlp_config()?;
        let net = Network::new(he_init(mlp, config.seed), InputMap::new(config.domain.roi));
        let gamma = config.initial_gamma();
        let samples = config.samples(&gamma)?;
        let objective = config.objective();
        objective.validate(mlp.n_outputs(), gamma.len(), &samples)?;
        Ok(Experiment {
            config: config.clone(),
            objective,
            samples,
            state: TrainState::new(net, gamma),
        })
    }

    /// Replace the state with a checkpoint of the same network shape.
    pub fn restore(&mut self, path: &Path) -> Result<()> {
        let mlp = self.config.mlp_config()?;
        let state = checkpoint_load(path, Some(&mlp))?;
        if state.gamma.len() != self.state.gamma.len() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint has {} patches, configuration {}",
                state.gamma.len(),
                self.state.gamma.len()
            )));
        }
        self.state = state;
        Ok(())
    }

    pub fn patches(&self) -> Vec<CirclePatch> {
        self.state.gamma.iter().map(|&g| CirclePatch::new(g)).collect()
    }

    pub fn loss(&self) -> Result<LossBreakdown> {
        let n = self.state.net.params.len();
        Ok(self
            .objective
            .evaluate(&self.state.net, n, &self.state.gamma, &self.samples, false)?
            .0)
    }

    pub fn train(
        &mut self,
        history: &mut History,
        on_log: impl FnMut(u64, &LossBreakdown, &[Point]),
    ) -> Result<StopReason> {
        let cfg = self.config.training_config();
        train(&mut self.state, history, &self.objective, &self.samples, &cfg, on_log)
    }

    /// Prediction of the solution components at `p` (density channel dropped).
    pub fn predict(&self, p: Point) -> Result<Vec<f64>> {
        let mut u = self.state.net.predict(p)?;
        u.truncate(self.config.pde.out_dim());
        Ok(u)
    }

    /// Normalized density `ρ̂` at `p` in DT mode.
    pub fn density(&self, p: Point) -> Result<f64> {
        let ModeConfig::Dt { c, .. } = self.config.mode else {
            return Err(config_err("density is only defined in DT mode"));
        };
        let tape = Tape::new();
        let out = self.state.net.eval(&tape, tape.var(p[0]), tape.var(p[1]), Order::Value)?;
        let rho = out[self.config.pde.out_dim()];
        Ok(rho_hat(rho, c).value())
    }

    /// Points of the standard metric grid, skipping the learned patches.
    pub fn field_points(&self) -> Result<Vec<Point>> {
        metric_grid(&self.config.domain.roi, &self.patches())
    }

    /// `x,y,<components>[,rho_hat]` on the metric grid.
    pub fn field_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["x".to_string(), "y".to_string()];
        header.extend(self.config.pde.component_names().iter().map(|s| s.to_string()));
        let dt = !self.config.is_lt();
        if dt {
            header.push("rho_hat".into());
        }
        w.write_record(&header).map_err(csv_io)?;
        for p in self.field_points()? {
            let mut row = vec![fmt(p[0]), fmt(p[1])];
            row.extend(self.predict(p)?.into_iter().map(fmt));
            if dt {
                row.push(fmt(self.density(p)?));
            }
            w.write_record(&row).map_err(csv_io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Density on the metric grid.
    pub fn density_grid(&self) -> Result<ScalarGrid> {
        ScalarGrid::from_fn(self.config.domain.roi, METRIC_GRID, METRIC_GRID, |p| self.density(p))
    }

    pub fn topology(&self, threshold: Option<f64>) -> Result<Topology> {
        match &self.config.mode {
            ModeConfig::Lt => Ok(Topology::Circles(self.patches())),
            ModeConfig::Dt { threshold: t, .. } => {
                let grid = self.density_grid()?;
                Ok(Topology::Density(extract_density_topology(&grid, threshold.unwrap_or(*t))?))
            }
        }
    }
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Shape produced by a run.
#[derive(Clone, Debug, PartialEq)]
pub enum Topology {
    Circles(Vec<CirclePatch>),
    Density(DensityTopology),
}

impl Topology {
    pub fn to_json(&self) -> Result<String> {
        match self {
            Topology::Circles(p) => Ok(topology_json(p)),
            Topology::Density(d) => serde_json::to_string_pretty(d).map_err(|e| Error::Format(e.to_string())),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Topology::Circles(p) => p.is_empty(),
            Topology::Density(d) => d.is_empty(),
        }
    }
}

// --- metrics --------------------------------------------------------------

/// Metric names accepted by [`Experiment::metrics`].
pub const METRIC_NAMES: [&str; 6] = ["loss", "relative_l2", "nmae", "flux_error", "gamma_error", "lift_drag"];

/// Flux samples per ring for flux metrics.
pub const FLUX_SAMPLES: usize = 256;
/// Quadrature nodes per ring for lift and drag.
pub const FORCE_NODES: usize = 256;

/// Reference field sampled at points.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceField {
    pub points: Vec<Point>,
    /// `values[k]` holds component `k` at every point.
    pub values: Vec<Vec<f64>>,
    pub names: Vec<String>,
}

impl ReferenceField {
    /// Read `x,y,<component>...` rows, as written to `field.csv`.
    pub fn read_csv(path: &Path, n_components: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(csv_io)?;
        let headers = rdr.headers().map_err(csv_io)?.clone();
        if headers.len() < 2 + n_components || &headers[0] != "x" || &headers[1] != "y" {
            return Err(Error::ShapeMismatch(format!(
                "reference {} needs columns x,y and {n_components} components",
                path.display()
            )));
        }
        let names = headers.iter().skip(2).take(n_components).map(String::from).collect();
        let mut points = Vec::new();
        let mut values = vec![Vec::new(); n_components];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_io)?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| config_err(format!("{} row {}: bad number", path.display(), line + 2)))
            };
            points.push([num(0)?, num(1)?]);
            for (k, v) in values.iter_mut().enumerate() {
                v.push(num(2 + k)?);
            }
        }
        Ok(ReferenceField { points, values, names })
    }

    /// The annulus closed form on the metric grid restricted to the annulus.
    pub fn annulus(a: &AnnulusData, roi: &Roi) -> Result<Self> {
        let prob = a.problem()?;
        let pts: Vec<Point> = crate::sampling::uniform_grid(roi, METRIC_GRID, METRIC_GRID)?
            .into_iter()
            .filter(|&p| {
                let r = prob.radius_of(p);
                r >= prob.inner_radius && r <= prob.outer_radius
            })
            .collect();
        let t = pts.iter().map(|&p| annulus_temperature(&prob, p)).collect::<Result<Vec<_>>>()?;
        Ok(ReferenceField {
            points: pts,
            values: vec![t],
            names: vec!["T".into()],
        })
    }
}

impl Experiment {
    fn reference_field(&self, reference: Option<&ReferenceField>) -> Result<Option<ReferenceField>> {
        if let Some(r) = reference {
            return Ok(Some(r.clone()));
        }
        match &self.config.data.annulus {
            Some(a) => Ok(Some(ReferenceField::annulus(a, &self.config.domain.roi)?)),
            None => Ok(None),
        }
    }

    fn reference_centers(&self) -> Option<Vec<Point>> {
        self.config
            .data
            .reference_centers
            .clone()
            .or_else(|| self.config.data.annulus.map(|a| vec![a.center]))
    }

    /// Compute the named metrics. Field metrics need a reference field; flux
    /// and center metrics need known centers.
    pub fn metrics(&self, names: &[&str], reference: Option<&ReferenceField>, hash: &str) -> Result<Vec<MetricRecord>> {
        let mut out = Vec::new();
        for &name in names {
            match name {
                "loss" => {
                    let l = self.loss()?;
                    for (field, v) in [
                        ("total", l.total),
                        ("pde", l.pde),
                        ("bc", l.bc),
                        ("data", l.data),
                        ("topo_fixed", l.topo_fixed),
                        ("topo_overlap", l.topo_overlap),
                    ] {
                        out.push(MetricRecord::new("loss", field, v, hash));
                    }
                }
                "relative_l2" | "nmae" => {
                    let r = self
                        .reference_field(reference)?
                        .ok_or_else(|| config_err(format!("metric {name} needs a reference field")))?;
                    let preds = r.points.iter().map(|&p| self.predict(p)).collect::<Result<Vec<_>>>()?;
                    for (k, refv) in r.values.iter().enumerate() {
                        if k >= self.config.pde.out_dim() {
                            return Err(Error::ShapeMismatch(format!(
                                "reference has component {k}, the model has {}",
                                self.config.pde.out_dim()
                            )));
                        }
                        let pred: Vec<f64> = preds.iter().map(|u| u[k]).collect();
                        let v = if name == "nmae" { nmae(&pred, refv)? } else { relative_l2(&pred, refv)? };
                        out.push(MetricRecord::new(name, r.names[k].clone(), v, hash));
                    }
                }
                "flux_error" => {
                    let q = match (&self.config.patches, &self.config.data.annulus) {
                        (_, Some(a)) => a.q,
                        (Some(PatchConfig { bc: BoundaryCondition::Neumann { q }, .. }), None) => *q,
                        _ => return Err(config_err("flux_error needs a Neumann condition")),
                    };
                    let centers = self
                        .reference_centers()
                        .ok_or_else(|| config_err("flux_error needs reference centers"))?;
                    let net = self.state.net.clone();
                    let mut all = Vec::new();
                    for c in centers {
                        all.extend(boundary_flux(&net, 0, &CirclePatch::new(c), FLUX_SAMPLES)?);
                    }
                    let flux: Vec<f64> = all.iter().map(|s| s.1).collect();
                    let target = vec![q; flux.len()];
                    out.push(MetricRecord::new("flux_error", "mean", (mean_flux(&all) - q).abs(), hash));
                    out.push(MetricRecord::new("flux_error", "relative_l2", relative_l2(&flux, &target)?, hash));
                }
                "gamma_error" => {
                    let centers = self
                        .reference_centers()
                        .ok_or_else(|| config_err("gamma_error needs reference centers"))?;
                    if !self.config.is_lt() {
                        return Err(config_err("gamma_error is defined for LT mode only"));
                    }
                    let d = matched_center_error(&self.state.gamma, &centers)?;
                    out.push(MetricRecord::new("gamma_error", "max", d, hash));
                }
                "lift_drag" => {
                    let p_idx = match self.config.pde {
                        PdeProblem::SteadyNs(_) | PdeProblem::PressurePoisson => 2,
                        _ => return Err(config_err("lift_drag needs a flow problem")),
                    };
                    let patches = self.patches();
                    let (l, d) = lift_drag(|p| Ok(self.predict(p)?[p_idx]), &patches, FORCE_NODES)?;
                    out.push(MetricRecord::new("lift_drag", "lift", l, hash));
                    out.push(MetricRecord::new("lift_drag", "drag", d, hash));
                }
                other => {
                    return Err(config_err(format!(
                        "unknown metric `{other}`; expected one of {}",
                        METRIC_NAMES.join(", ")
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Metrics that apply to this configuration without extra input.
    pub fn default_metric_names(&self) -> Vec<&'static str> {
        let mut names = vec!["loss"];
        let has_ref = self.config.data.annulus.is_some();
        let has_centers = self.reference_centers().is_some();
        if has_ref {
            names.push("relative_l2");
        }
        if has_centers && (has_ref || matches!(self.objective.bc, BoundaryCondition::Neumann { .. })) {
            names.push("flux_error");
        }
        if has_centers && self.config.is_lt() {
            names.push("gamma_error");
        }
        if self.config.is_lt() && matches!(self.config.pde, PdeProblem::SteadyNs(_) | PdeProblem::PressurePoisson) {
            names.push("lift_drag");
        }
        names
    }
}

/// Largest distance between each reference center and its nearest unused
/// learned center, matching greedily in reference order.
pub fn matched_center_error(learned: &[Point], reference: &[Point]) -> Result<f64> {
    if learned.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} learned centers, {} reference centers",
            learned.len(),
            reference.len()
        )));
    }
    let mut used = vec![false; learned.len()];
    let mut worst: f64 = 0.0;
    for r in reference {
        let (k, d) = learned
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, g)| (k, (g[0] - r[0]).hypot(g[1] - r[1])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("equal lengths");
        used[k] = true;
        worst = worst.max(d);
    }
    Ok(worst)
}

// --- runs -----------------------------------------------------------------

/// File names written into the output directory.
pub mod files {
    pub const LOSS: &str = "loss.csv";
    pub const GAMMA: &str = "gamma.csv";
    pub const FIELD: &str = "field.csv";
    pub const TOPOLOGY: &str = "topology.json";
    pub const TOPOLOGY_SVG: &str = "topology.svg";
    pub const METRICS: &str = "metrics.json";
    pub const CHECKPOINT: &str = "checkpoint.bin";
    pub const CONFIG: &str = "config.toml";
}

/// Result of a training run.
#[derive(Debug)]
pub struct RunSummary {
    pub history: History,
    pub stop: StopReason,
    pub metrics: Vec<MetricRecord>,
    pub topology: Topology,
    pub out_dir: PathBuf,
}

fn write_history(dir: &Path, history: &History) -> Result<()> {
    history.write_loss_csv(BufWriter::new(fs::File::create(dir.join(files::LOSS))?))?;
    history.write_gamma_csv(BufWriter::new(fs::File::create(dir.join(files::GAMMA))?))?;
    Ok(())
}

/// Train `config` and write every artifact into `out_dir` (the configured
/// directory when `None`). A diverged run still writes its history and the
/// last good checkpoint before returning the error.
pub fn run_train(
    config: &ExperimentConfig,
    out_dir: Option<&Path>,
    on_log: impl FnMut(u64, &LossBreakdown, &[Point]),
) -> Result<RunSummary> {
    let dir = out_dir.map_or_else(|| config.output.dir.clone(), Path::to_path_buf);
    let mut exp = Experiment::build(config)?;
    fs::create_dir_all(&dir)?;
    let text = config.to_toml();
    fs::write(dir.join(files::CONFIG), &text)?;
    let mut history = History::default();
    let stop = match exp.train(&mut history, on_log) {
        Ok(s) => s,
        Err(e) => {
            write_history(&dir, &history)?;
            checkpoint_save(&exp.state, &dir.join(files::CHECKPOINT))?;
            return Err(e);
        }
    };
    write_history(&dir, &history)?;
    checkpoint_save(&exp.state, &dir.join(files::CHECKPOINT))?;
    let topology = exp.topology(None)?;
    fs::write(dir.join(files::TOPOLOGY), topology.to_json()?)?;
    if let Topology::Circles(p) = &topology {
        fs::write(dir.join(files::TOPOLOGY_SVG), topology_svg(p, &config.domain.roi))?;
    }
    fs::write(dir.join(files::FIELD), exp.field_csv()?)?;
    let hash = config_hash(&text);
    let names = exp.default_metric_names();
    let metrics = exp.metrics(&names, None, &hash)?;
    fs::write(dir.join(files::METRICS), report_json(&metrics)?)?;
    Ok(RunSummary {
        history,
        stop,
        metrics,
        topology,
        out_dir: dir,
    })
}

/// Evaluate a checkpoint. `names` empty selects the defaults for the
/// configuration.
pub fn run_eval(
    config: &ExperimentConfig,
    checkpoint: &Path,
    names: &[String],
    reference: Option<&Path>,
) -> Result<Vec<MetricRecord>> {
    let mut exp = Experiment::build(config)?;
    exp.restore(checkpoint)?;
    let reference = match reference {
        Some(p) => Some(ReferenceField::read_csv(p, config.pde.out_dim())?),
        None => None,
    };
    let hash = config_hash(&config.to_toml());
    let names: Vec<&str> = if names.is_empty() {
        let mut d = exp.default_metric_names();
        if reference.is_some() && !d.contains(&"relative_l2") {
            d.push("relative_l2");
        }
        d
    } else {
        names.iter().map(String::as_str).collect()
    };
    exp.metrics(&names, reference.as_ref(), &hash)
}

/// Topology of a checkpoint; `sweep` lists extra DT thresholds to report.
pub fn run_export_topology(
    config: &ExperimentConfig,
    checkpoint: &Path,
    threshold: Option<f64>,
    sweep: &[f64],
) -> Result<(Topology, Vec<DensityTopology>)> {
    let mut exp = Experiment::build(config)?;
    exp.restore(checkpoint)?;
    let topo = exp.topology(threshold)?;
    let mut extra = Vec::new();
    if !sweep.is_empty() {
        if config.is_lt() {
            return Err(config_err("threshold sweeps apply to DT mode only"));
        }
        let grid = exp.density_grid()?;
        extra = crate::extract::threshold_sweep(&grid, sweep)?;
    }
    Ok((topo, extra))
}

// --- presets --------------------------------------------------------------

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 12] = [
    "annulus-lt",
    "annulus-dt",
    "elastic-lt",
    "elastic-dt",
    "laplace-lt",
    "laplace-dt",
    "ns-2c",
    "ns-3c",
    "ns-8c",
    "poisson-8c",
    "rearrange-48",
    "rearrange-4",
];

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "annulus-lt" => annulus(true),
        "annulus-dt" => annulus(false),
        "elastic-lt" => elastic(true),
        "elastic-dt" => elastic(false),
        "laplace-lt" => laplace(true),
        "laplace-dt" => laplace(false),
        "ns-2c" => flow_array(name, two_circle(), [270, 120], 128, 3389, 1e4, false),
        "ns-3c" => flow_array(name, three_circle(), [249, 270], 128, 3682, 1e4, false),
        "ns-8c" => flow_array(name, ring_of(8), [420, 420], 128, 5373, 1e2, false),
        "poisson-8c" => flow_array(name, ring_of(8), [420, 420], 128, 5373, 1e2, true),
        "rearrange-48" => rearrange(name, 48, [25.0, 15.0], [1500, 900], 106, 800, [5, 64], 100_000, 1e-4),
        "rearrange-4" => rearrange(name, 4, [8.0, 5.0], [40, 25], 16, 96, [3, 32], 2_000, 1e-3),
        other => {
            return Err(config_err(format!(
                "unknown preset `{other}`; expected one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn out(name: &str) -> OutputConfig {
    OutputConfig {
        dir: PathBuf::from("runs").join(name),
    }
}

fn lt_or_dt(lt: bool) -> ModeConfig {
    if lt {
        ModeConfig::Lt
    } else {
        ModeConfig::Dt {
            c: DEFAULT_C,
            threshold: 0.5,
            bc_value: None,
        }
    }
}

/// True center of the annulus presets and the initial guess.
pub const ANNULUS_CENTER: Point = [0.2, -0.2];
pub const ANNULUS_INITIAL: Point = [0.0, 0.0];
pub const ANNULUS_OUTER: f64 = 1.5;

fn annulus(lt: bool) -> ExperimentConfig {
    let c = ANNULUS_CENTER;
    let roi = Roi::centered(c, ANNULUS_OUTER).expect("valid box");
    ExperimentConfig {
        name: if lt { "annulus-lt" } else { "annulus-dt" }.into(),
        seed: 1,
        mode: lt_or_dt(lt),
        pde: PdeProblem::Laplace,
        network: NetworkConfig { n_layers: 3, width: 32 },
        domain: DomainConfig {
            roi,
            core: None,
            collocation: [40, 40],
            disk: Some(Disk {
                center: c,
                radius: ANNULUS_OUTER,
            }),
            data_outside_core: false,
        },
        patches: lt.then(|| PatchConfig {
            count: 1,
            initial: Some(vec![ANNULUS_INITIAL]),
            beta: DEFAULT_BETA,
            k: DEFAULT_K,
            ring_radii: RING_RADII.to_vec(),
            ring_samples: 32,
            bc: BoundaryCondition::Neumann { q: -0.5 },
            track_rings: true,
        }),
        topology: TopologySpec::default(),
        weights: LossWeights {
            lambda_p: 1.0,
            lambda_b: 1.0,
            lambda_d: 1e2,
            lambda_t: 0.0,
        },
        data: DataConfig {
            annulus: Some(AnnulusData {
                center: c,
                outer_radius: ANNULUS_OUTER,
                q: -0.5,
                n_interior: 600,
                n_outer: 96,
            }),
            reference_centers: Some(vec![c]),
            ..Default::default()
        },
        training: TrainingConfig {
            lr: 2e-3,
            gamma_lr: None,
            epochs: 5_000,
            log_interval: 100,
            early_stop: None,
        },
        output: out(if lt { "annulus-lt" } else { "annulus-dt" }),
    }
}

fn edge(edge: EdgeName, n: usize, components: &[usize], values: &[f64]) -> EdgeData {
    EdgeData {
        edge,
        n,
        components: components.to_vec(),
        values: values.to_vec(),
        profile: None,
    }
}

fn elastic(lt: bool) -> ExperimentConfig {
    let roi = Roi::new(-2.0, 2.0, -2.0, 2.0).expect("valid box");
    let core = Roi::new(-1.0, 1.0, -1.0, 1.0).expect("valid box");
    let mut mode = lt_or_dt(lt);
    if let ModeConfig::Dt { bc_value, .. } = &mut mode {
        *bc_value = Some(vec![0.0, 0.0]);
    }
    ExperimentConfig {
        name: if lt { "elastic-lt" } else { "elastic-dt" }.into(),
        seed: 1,
        mode,
        pde: PdeProblem::Elastic(MaterialParams { e: 1.0, nu: 0.33 }),
        network: NetworkConfig { n_layers: 5, width: 64 },
        domain: DomainConfig {
            roi,
            core: Some(core),
            collocation: [120, 120],
            disk: None,
            data_outside_core: true,
        },
        patches: lt.then(|| PatchConfig {
            count: 1,
            initial: None,
            beta: DEFAULT_BETA,
            k: DEFAULT_K,
            ring_radii: RING_RADII.to_vec(),
            ring_samples: 128,
            bc: BoundaryCondition::Dirichlet { value: vec![0.0, 0.0] },
            track_rings: true,
        }),
        topology: TopologySpec::default(),
        weights: LossWeights {
            lambda_p: if lt { 2e3 } else { 2e2 },
            lambda_b: if lt { 1e4 } else { 0.0 },
            lambda_d: 1e4,
            lambda_t: 0.0,
        },
        data: DataConfig {
            // the fixed right edge; measured interior data is loaded from CSV
            edges: vec![edge(EdgeName::Right, 2167, &[0, 1], &[0.0, 0.0])],
            ..Default::default()
        },
        training: TrainingConfig {
            lr: 1e-4,
            gamma_lr: None,
            epochs: 400_000,
            log_interval: 500,
            early_stop: None,
        },
        output: out(if lt { "elastic-lt" } else { "elastic-dt" }),
    }
}

fn laplace(lt: bool) -> ExperimentConfig {
    let roi = Roi::new(-1.0, 1.0, -1.0, 1.0).expect("valid box");
    let per_edge = 1638 / 4;
    ExperimentConfig {
        name: if lt { "laplace-lt" } else { "laplace-dt" }.into(),
        seed: 1,
        mode: lt_or_dt(lt),
        pde: PdeProblem::Laplace,
        network: NetworkConfig { n_layers: 8, width: 256 },
        domain: DomainConfig {
            roi,
            core: None,
            collocation: [120, 120],
            disk: None,
            data_outside_core: false,
        },
        patches: lt.then(|| PatchConfig {
            count: 1,
            initial: None,
            beta: DEFAULT_BETA,
            k: DEFAULT_K,
            ring_radii: RING_RADII.to_vec(),
            ring_samples: 256,
            bc: BoundaryCondition::Neumann { q: -0.5 },
            track_rings: true,
        }),
        topology: TopologySpec::default(),
        weights: LossWeights {
            lambda_p: 1.0,
            lambda_b: if lt { 1.0 } else { 0.0 },
            lambda_d: 1e4,
            lambda_t: 0.0,
        },
        data: DataConfig {
            edges: [EdgeName::Left, EdgeName::Right, EdgeName::Bottom, EdgeName::Top]
                .into_iter()
                .map(|e| edge(e, per_edge, &[0], &[0.0]))
                .collect(),
            ..Default::default()
        },
        training: TrainingConfig {
            lr: 1e-4,
            gamma_lr: None,
            epochs: 400_000,
            log_interval: 500,
            early_stop: None,
        },
        output: out(if lt { "laplace-lt" } else { "laplace-dt" }),
    }
}

/// Spacing of the self-similar arrays, in diameters.
pub const ARRAY_SPACING: f64 = 2.5;

fn two_circle() -> Vec<Point> {
    vec![[0.0, 0.0], [ARRAY_SPACING, 0.0]]
}

fn three_circle() -> Vec<Point> {
    let h = ARRAY_SPACING * 3f64.sqrt() / 2.0;
    vec![[0.0, 0.0], [0.0, ARRAY_SPACING], [h, ARRAY_SPACING / 2.0]]
}

fn ring_of(n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            [ARRAY_SPACING * t.cos(), ARRAY_SPACING * t.sin()]
        })
        .collect()
}

fn split_by_length(roi: &Roi, total: usize, edges: &[EdgeName]) -> Vec<usize> {
    let len = |e: &EdgeName| match e {
        EdgeName::Left | EdgeName::Right => roi.height(),
        EdgeName::Bottom | EdgeName::Top => roi.width(),
    };
    let sum: f64 = edges.iter().map(len).sum();
    let mut counts: Vec<usize> = edges.iter().map(|e| (total as f64 * len(e) / sum).floor() as usize).collect();
    let missing = total - counts.iter().sum::<usize>();
    for c in counts.iter_mut().take(missing) {
        *c += 1;
    }
    counts
}

#[allow(clippy::too_many_arguments)]
fn flow_array(
    name: &str,
    centers: Vec<Point>,
    grid: [usize; 2],
    ring_samples: usize,
    n_data: usize,
    lambda_t: f64,
    poisson: bool,
) -> ExperimentConfig {
    let (roi, core) = crate::sampling::build_multi_patch_roi(&centers).expect("non-empty centers");
    let n = centers.len();
    let topology = if n == 8 {
        TopologySpec {
            pairs: Vec::new(),
            hub_distance: Some(ARRAY_SPACING),
            nonoverlap: true,
        }
    } else {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push(TopoPair {
                    i,
                    j,
                    distance: ARRAY_SPACING,
                });
            }
        }
        TopologySpec {
            pairs,
            hub_distance: None,
            nonoverlap: false,
        }
    };
    let sides = [EdgeName::Left, EdgeName::Right, EdgeName::Bottom, EdgeName::Top];
    let counts = split_by_length(&roi, n_data, &sides);
    // inlet velocity, outlet pressure, symmetry (no normal velocity)
    let edges = vec![
        edge(EdgeName::Left, counts[0], &[0, 1], &[1.0, 0.0]),
        edge(EdgeName::Right, counts[1], &[2], &[0.0]),
        edge(EdgeName::Bottom, counts[2], &[1], &[0.0]),
        edge(EdgeName::Top, counts[3], &[1], &[0.0]),
    ];
    ExperimentConfig {
        name: name.into(),
        seed: 1,
        mode: ModeConfig::Lt,
        pde: if poisson {
            PdeProblem::PressurePoisson
        } else {
            PdeProblem::SteadyNs(FlowParams { re: 1.0 })
        },
        network: NetworkConfig { n_layers: 5, width: 64 },
        domain: DomainConfig {
            roi,
            core: Some(core),
            collocation: grid,
            disk: None,
            data_outside_core: true,
        },
        patches: Some(PatchConfig {
            count: n,
            initial: None,
            beta: DEFAULT_BETA,
            k: DEFAULT_K,
            ring_radii: RING_RADII.to_vec(),
            ring_samples,
            bc: BoundaryCondition::Dirichlet { value: vec![0.0, 0.0] },
            track_rings: true,
        }),
        topology,
        weights: LossWeights {
            lambda_p: 2e3,
            lambda_b: 1e4,
            lambda_d: 1e4,
            lambda_t,
        },
        data: DataConfig {
            edges,
            reference_centers: Some(centers),
            ..Default::default()
        },
        training: TrainingConfig {
            lr: 1e-4,
            gamma_lr: None,
            epochs: 100_000,
            log_interval: 500,
            early_stop: Some(EarlyStop {
                window: 10,
                tol: 1e-4,
            }),
        },
        output: out(name),
    }
}

#[allow(clippy::too_many_arguments)]
fn rearrange(
    name: &str,
    count: usize,
    size: [f64; 2],
    grid: [usize; 2],
    ring_samples: usize,
    n_data: usize,
    net: [usize; 2],
    epochs: u64,
    lr: f64,
) -> ExperimentConfig {
    let roi = Roi::new(0.0, size[0], 0.0, size[1]).expect("valid box");
    let half = n_data / 2;
    let mut outlet = edge(EdgeName::Right, n_data - half, &[0, 1], &[1.0, 0.0]);
    outlet.components = vec![0];
    outlet.values = vec![1.0];
    outlet.profile = Some(Profile::OutletSine { component: 0 });
    ExperimentConfig {
        name: name.into(),
        seed: 1,
        mode: ModeConfig::Lt,
        pde: PdeProblem::SteadyNs(FlowParams { re: 1.0 }),
        network: NetworkConfig {
            n_layers: net[0],
            width: net[1],
        },
        domain: DomainConfig {
            roi,
            core: None,
            collocation: grid,
            disk: None,
            data_outside_core: false,
        },
        patches: Some(PatchConfig {
            count,
            initial: None,
            beta: DEFAULT_BETA,
            k: DEFAULT_K,
            ring_radii: RING_RADII.to_vec(),
            ring_samples,
            bc: BoundaryCondition::Dirichlet { value: vec![0.0, 0.0] },
            track_rings: true,
        }),
        topology: TopologySpec::default(),
        weights: LossWeights {
            lambda_p: 2e3,
            lambda_b: 1e4,
            lambda_d: 1e4,
            lambda_t: 0.0,
        },
        data: DataConfig {
            edges: vec![edge(EdgeName::Left, half, &[0, 1], &[1.0, 0.0]), outlet],
            periodic: vec![PeriodicData {
                n: grid[0].min(128),
                components: vec![0, 1, 2],
            }],
            ..Default::default()
        },
        training: TrainingConfig {
            lr,
            gamma_lr: None,
            epochs,
            log_interval: if epochs > 10_000 { 500 } else { 50 },
            early_stop: None,
        },
        output: out(name),
    }
}

/// Parse a preset name or a config file path.
pub fn load_config(spec: &str) -> Result<ExperimentConfig> {
    if PRESET_NAMES.contains(&spec) {
        preset(spec)
    } else {
        ExperimentConfig::load(Path::new(spec))
    }
}

/// Keep `Arc<Network>` usable as a field source from outside the crate.
pub fn field_of(state: &TrainState) -> Arc<Network> {
    state.net.clone()
}

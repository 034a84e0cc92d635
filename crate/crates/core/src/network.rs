//! Fully connected tanh network `u_θ(x)`.
//!
//! The forward pass propagates second-order spatial jets through every layer
//! in one fused kernel, and the matching reverse pass is registered on the
//! tape as a custom op, so a whole network evaluation costs one tape node
//! per output instead of one per multiply-add.
//!
//! Parameter layout (flat, `f64`): for each layer in order, the weight matrix
//! (`fan_out` rows × `fan_in` columns, row-major) followed by its bias.

use std::io::{Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffengine::{unary_adjoint, CustomOp, Jet, Order, Tape, Var, V};
use crate::error::{config_err, numeric_err, Error, Result};
use crate::geometry::Roi;
use crate::rng;
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Number of hidden layers.
    pub n_layers: usize,
    /// Neurons per hidden layer.
    pub width: usize,
    pub in_dim: usize,
    /// Solution components (the density channel is extra).
    pub out_dim: usize,
    pub has_density_channel: bool,
}

impl MlpConfig {
    pub fn new(n_layers: usize, width: usize, out_dim: usize, has_density_channel: bool) -> Result<Self> {
        let c = MlpConfig {
            n_layers,
            width,
            in_dim: 2,
            out_dim,
            has_density_channel,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.width == 0 {
            return Err(config_err("network needs at least one hidden layer of width >= 1"));
        }
        if self.in_dim != 2 {
            return Err(config_err(format!("input dimension must be 2, got {}", self.in_dim)));
        }
        if self.out_dim == 0 {
            return Err(config_err("network needs at least one output"));
        }
        Ok(())
    }

    /// Raw outputs including the density channel.
    pub fn n_outputs(&self) -> usize {
        self.out_dim + usize::from(self.has_density_channel)
    }

    /// `(fan_in, fan_out)` per layer, hidden layers first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.n_layers + 1);
        let mut fan_in = self.in_dim;
        for _ in 0..self.n_layers {
            shapes.push((fan_in, self.width));
            fan_in = self.width;
        }
        shapes.push((fan_in, self.n_outputs()));
        shapes
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Network weights and biases θ.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    config: MlpConfig,
    data: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(config: MlpConfig) -> Self {
        MlpParams {
            data: vec![0.0; config.n_params()],
            config,
        }
    }

    pub fn from_vec(config: MlpConfig, data: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if data.len() != config.n_params() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                config.n_params(),
                data.len()
            )));
        }
        Ok(MlpParams { config, data })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Offsets `(weights, bias)` of every layer in the flat buffer.
    pub fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.config
            .layer_shapes()
            .iter()
            .map(|&(i, o)| {
                let w = off;
                off += i * o;
                let b = off;
                off += o;
                (w, b)
            })
            .collect()
    }

    /// Weights and bias of the output layer.
    pub fn last_layer(&self) -> (&[f64], &[f64]) {
        let shapes = self.config.layer_shapes();
        let (fan_in, fan_out) = *shapes.last().expect("at least one layer");
        let (w, b) = *self.layer_offsets().last().expect("at least one layer");
        (&self.data[w..w + fan_in * fan_out], &self.data[b..b + fan_out])
    }
}

/// He initialization: weights `N(0, 2/fan_in)`, biases zero.
pub fn he_init(config: MlpConfig, seed: u64) -> MlpParams {
    let mut rng = rng::stream(seed, rng::STREAM_THETA);
    let mut params = MlpParams::zeros(config);
    let offsets = params.layer_offsets();
    for (&(fan_in, fan_out), &(w, _)) in config.layer_shapes().iter().zip(&offsets) {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        for v in &mut params.data[w..w + fan_in * fan_out] {
            *v = normal.sample(&mut rng);
        }
    }
    params
}

/// Affine map from the ROI box onto `[-1, 1]²`, applied before the first layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputMap {
    pub roi: Roi,
}

impl InputMap {
    pub fn new(roi: Roi) -> Self {
        InputMap { roi }
    }

    pub fn scale(&self) -> [f64; 2] {
        [2.0 / self.roi.width(), 2.0 / self.roi.height()]
    }

    pub fn apply(&self, p: Point) -> Point {
        let c = self.roi.center();
        let s = self.scale();
        [s[0] * (p[0] - c[0]), s[1] * (p[1] - c[1])]
    }

    fn apply_jet(&self, j: Jet, axis: usize) -> Jet {
        let mut out = j.scale(self.scale()[axis]);
        out.0[V] = self.scale()[axis] * (j.0[V] - self.roi.center()[axis]);
        out
    }
}

/// Activations kept from a forward pass for the reverse pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    width: usize,
    input: [Jet; 2],
    /// Pre-activations of each hidden layer, concatenated.
    pre: Vec<Jet>,
    /// Post-activations of each hidden layer, concatenated.
    post: Vec<Jet>,
}

/// A network together with its input normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub params: MlpParams,
    pub input_map: InputMap,
}

fn linear_forward<const N: usize>(w: &[f64], b: &[f64], input: &[Jet], out: &mut [Jet]) {
    let fan_in = input.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * fan_in..(i + 1) * fan_in];
        let mut acc = [0.0; N];
        for (wij, a) in row.iter().zip(input) {
            for (s, v) in acc.iter_mut().zip(&a.0) {
                *s += wij * v;
            }
        }
        let mut jet = Jet::ZERO;
        jet.0[..N].copy_from_slice(&acc);
        jet.0[V] += b[i];
        *o = jet;
    }
}

/// Accumulates weight/bias adjoints (when `grad` is non-empty) and returns
/// adjoints of the layer input.
fn linear_backward<const N: usize>(
    w: &[f64],
    input: &[Jet],
    out_adj: &[Jet],
    in_adj: &mut [Jet],
    grad: Option<(&mut [f64], &mut [f64])>,
) {
    let fan_in = input.len();
    in_adj.iter_mut().for_each(|a| *a = Jet::ZERO);
    for (i, oa) in out_adj.iter().enumerate() {
        let row = &w[i * fan_in..(i + 1) * fan_in];
        for (wij, ia) in row.iter().zip(in_adj.iter_mut()) {
            for c in 0..N {
                ia.0[c] += wij * oa.0[c];
            }
        }
    }
    if let Some((gw, gb)) = grad {
        for (i, oa) in out_adj.iter().enumerate() {
            let grow = &mut gw[i * fan_in..(i + 1) * fan_in];
            for (g, a) in grow.iter_mut().zip(input) {
                let mut s = 0.0;
                for c in 0..N {
                    s += oa.0[c] * a.0[c];
                }
                *g += s;
            }
            gb[i] += oa.0[V];
        }
    }
}

fn tanh_derivs(t: f64) -> [f64; 3] {
    let d1 = 1.0 - t * t;
    [d1, -2.0 * t * d1, d1 * (6.0 * t * t - 2.0)]
}

impl Network {
    pub fn new(params: MlpParams, input_map: InputMap) -> Self {
        Network { params, input_map }
    }

    pub fn config(&self) -> &MlpConfig {
        self.params.config()
    }

    /// Forward pass on raw jets. Only the first `order.width()` jet
    /// components are computed; the rest of each output jet is zero.
    pub fn forward_jets(&self, x: Jet, y: Jet, order: Order) -> Result<(Vec<Jet>, MlpCache)> {
        match order.width() {
            1 => self.forward_n::<1>(x, y),
            3 => self.forward_n::<3>(x, y),
            _ => self.forward_n::<6>(x, y),
        }
    }

    fn forward_n<const N: usize>(&self, x: Jet, y: Jet) -> Result<(Vec<Jet>, MlpCache)> {
        let cfg = self.config();
        let width = cfg.width;
        let data = self.params.as_slice();
        let offsets = self.params.layer_offsets();
        let shapes = cfg.layer_shapes();
        let mut input = [self.input_map.apply_jet(x, 0), self.input_map.apply_jet(y, 1)];
        for j in &mut input {
            j.0[N..].iter_mut().for_each(|c| *c = 0.0);
        }
        let mut pre = vec![Jet::ZERO; cfg.n_layers * width];
        let mut post = vec![Jet::ZERO; cfg.n_layers * width];
        for l in 0..cfg.n_layers {
            let (fan_in, fan_out) = shapes[l];
            let (wo, bo) = offsets[l];
            let w = &data[wo..wo + fan_in * fan_out];
            let b = &data[bo..bo + fan_out];
            let (done, rest) = pre.split_at_mut(l * width);
            let _ = done;
            let z = &mut rest[..width];
            if l == 0 {
                linear_forward::<N>(w, b, &input, z);
            } else {
                linear_forward::<N>(w, b, &post[(l - 1) * width..l * width], z);
            }
            let a = &mut post[l * width..(l + 1) * width];
            for (ai, zi) in a.iter_mut().zip(z.iter()) {
                let t = zi.0[V].tanh();
                let d = tanh_derivs(t);
                let mut jet = zi.unary(t, d[0], d[1]);
                jet.0[N..].iter_mut().for_each(|c| *c = 0.0);
                *ai = jet;
            }
            if !a.iter().all(Jet::is_finite) {
                return Err(numeric_err(format!("network layer {l}")));
            }
        }
        let l = cfg.n_layers;
        let (fan_in, fan_out) = shapes[l];
        let (wo, bo) = offsets[l];
        let mut out = vec![Jet::ZERO; fan_out];
        linear_forward::<N>(
            &data[wo..wo + fan_in * fan_out],
            &data[bo..bo + fan_out],
            &post[(l - 1) * width..l * width],
            &mut out,
        );
        if !out.iter().all(Jet::is_finite) {
            return Err(numeric_err(format!("network layer {l}")));
        }
        Ok((
            out,
            MlpCache {
                width: N,
                input,
                pre,
                post,
            },
        ))
    }

    /// Reverse pass through the network. Returns adjoints of the raw `(x, y)`
    /// jets; parameter adjoints are accumulated into `grad` if it is
    /// non-empty (it must then hold exactly `n_params` entries).
    pub fn backward(&self, cache: &MlpCache, out_adj: &[Jet], grad: &mut [f64]) -> [Jet; 2] {
        match cache.width {
            1 => self.backward_n::<1>(cache, out_adj, grad),
            3 => self.backward_n::<3>(cache, out_adj, grad),
            _ => self.backward_n::<6>(cache, out_adj, grad),
        }
    }

    fn backward_n<const N: usize>(&self, cache: &MlpCache, out_adj: &[Jet], grad: &mut [f64]) -> [Jet; 2] {
        let cfg = self.config();
        let width = cfg.width;
        let data = self.params.as_slice();
        let offsets = self.params.layer_offsets();
        let shapes = cfg.layer_shapes();
        let with_grad = !grad.is_empty();
        debug_assert!(!with_grad || grad.len() == data.len());

        let mut upstream: Vec<Jet> = out_adj.to_vec();
        let mut below = vec![Jet::ZERO; width];
        for l in (0..=cfg.n_layers).rev() {
            let (fan_in, fan_out) = shapes[l];
            let (wo, bo) = offsets[l];
            let w = &data[wo..wo + fan_in * fan_out];
            let input: &[Jet] = if l == 0 {
                &cache.input
            } else {
                &cache.post[(l - 1) * width..l * width]
            };
            below.resize(fan_in, Jet::ZERO);
            let g = if with_grad {
                let (head, tail) = grad.split_at_mut(bo);
                Some((&mut head[wo..wo + fan_in * fan_out], &mut tail[..fan_out]))
            } else {
                None
            };
            linear_backward::<N>(w, input, &upstream, &mut below, g);
            if l == 0 {
                break;
            }
            // through tanh of layer l-1
            let pre = &cache.pre[(l - 1) * width..l * width];
            let post = &cache.post[(l - 1) * width..l * width];
            upstream.clear();
            upstream.extend(
                below
                    .iter()
                    .zip(pre.iter().zip(post))
                    .map(|(a, (z, t))| unary_adjoint(a, z, tanh_derivs(t.0[V]), N)),
            );
        }
        let s = self.input_map.scale();
        [below[0].scale(s[0]), below[1].scale(s[1])]
    }

    /// Plain point evaluation of all raw outputs.
    pub fn predict(&self, p: Point) -> Result<Vec<f64>> {
        let (out, _) = self.forward_jets(Jet::constant(p[0]), Jet::constant(p[1]), Order::Value)?;
        Ok(out.iter().map(Jet::value).collect())
    }

    /// Spatial jets of all raw outputs at a point.
    pub fn jets_at(&self, p: Point, order: Order) -> Result<Vec<Jet>> {
        let (out, _) = self.forward_jets(Jet::seed_x(p[0]), Jet::seed_y(p[1]), order)?;
        Ok(out)
    }

    /// Record a network evaluation on the tape. Parameter adjoints land in
    /// the buffer given to [`Tape::backward_into`] at offset 0.
    pub fn forward<'t>(
        self: &Arc<Self>,
        tape: &'t Tape,
        x: Var<'t>,
        y: Var<'t>,
        order: Order,
    ) -> Result<Vec<Var<'t>>> {
        let (out, cache) = self.forward_jets(x.jet(), y.jet(), order)?;
        let op = MlpOp {
            net: Arc::clone(self),
            cache,
        };
        Ok(tape.custom(&[x, y], out, Box::new(op)))
    }

    /// The same network assembled from primitive tape operations, with every
    /// parameter supplied as a tape variable. Slow; used as an independent
    /// route when checking the fused kernel.
    pub fn forward_primitive<'t>(&self, params: &[Var<'t>], x: Var<'t>, y: Var<'t>) -> Vec<Var<'t>> {
        assert_eq!(params.len(), self.params.len(), "one tape variable per parameter");
        let c = self.input_map.roi.center();
        let s = self.input_map.scale();
        let mut act = vec![(x - c[0]) * s[0], (y - c[1]) * s[1]];
        let shapes = self.config().layer_shapes();
        let offsets = self.params.layer_offsets();
        let last = shapes.len() - 1;
        for (l, (&(fan_in, fan_out), &(wo, bo))) in shapes.iter().zip(&offsets).enumerate() {
            let next: Vec<Var<'t>> = (0..fan_out)
                .map(|i| {
                    let mut z = params[bo + i];
                    for (j, &a) in act.iter().enumerate() {
                        z = z + params[wo + i * fan_in + j] * a;
                    }
                    if l == last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            act = next;
        }
        act
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let c = self.config();
        w.write_all(NETWORK_MAGIC)?;
        w.write_u32::<LittleEndian>(NETWORK_VERSION)?;
        w.write_u32::<LittleEndian>(c.in_dim as u32)?;
        w.write_u32::<LittleEndian>(c.out_dim as u32)?;
        w.write_u32::<LittleEndian>(c.n_layers as u32)?;
        w.write_u32::<LittleEndian>(c.width as u32)?;
        w.write_u8(u8::from(c.has_density_channel))?;
        w.write_all(&[0u8; 3])?;
        let r = self.input_map.roi;
        for v in [r.x_min, r.x_max, r.y_min, r.y_max] {
            w.write_f64::<LittleEndian>(v)?;
        }
        w.write_u64::<LittleEndian>(self.params.len() as u64)?;
        for &v in self.params.as_slice() {
            w.write_f64::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != NETWORK_MAGIC {
            return Err(Error::Format("not a network block".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
        if version != NETWORK_VERSION {
            return Err(Error::Format(format!("unsupported network version {version}")));
        }
        let mut u = [0u32; 4];
        for v in &mut u {
            *v = r.read_u32::<LittleEndian>().map_err(truncated)?;
        }
        let density = r.read_u8().map_err(truncated)? != 0;
        let mut pad = [0u8; 3];
        read_exact(r, &mut pad)?;
        let config = MlpConfig {
            in_dim: u[0] as usize,
            out_dim: u[1] as usize,
            n_layers: u[2] as usize,
            width: u[3] as usize,
            has_density_channel: density,
        };
        config.validate().map_err(|e| Error::Format(e.to_string()))?;
        let mut b = [0.0; 4];
        for v in &mut b {
            *v = r.read_f64::<LittleEndian>().map_err(truncated)?;
        }
        let roi = Roi::new(b[0], b[1], b[2], b[3]).map_err(|e| Error::Format(e.to_string()))?;
        let n = r.read_u64::<LittleEndian>().map_err(truncated)? as usize;
        if n != config.n_params() {
            return Err(Error::Format(format!(
                "parameter count {n} does not match header ({})",
                config.n_params()
            )));
        }
        let mut data = vec![0.0; n];
        r.read_f64_into::<LittleEndian>(&mut data).map_err(truncated)?;
        Ok(Network::new(MlpParams::from_vec(config, data)?, InputMap::new(roi)))
    }
}

const NETWORK_MAGIC: &[u8; 4] = b"LTPN";
const NETWORK_VERSION: u32 = 1;

pub(crate) fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(truncated)
}

struct MlpOp {
    net: Arc<Network>,
    cache: MlpCache,
}

impl CustomOp for MlpOp {
    fn backward(&self, _inputs: &[Jet], out_adj: &[Jet], in_adj: &mut [Jet], params: &mut [f64]) {
        let n = self.net.params.len();
        let grad = if params.len() >= n { &mut params[..n] } else { &mut [][..] };
        let [ax, ay] = self.net.backward(&self.cache, out_adj, grad);
        in_adj[0] += ax;
        in_adj[1] += ay;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffengine::{check_against_finite_differences, Seed};
    use proptest::prelude::*;

    fn roi() -> Roi {
        Roi::new(-1.1, 1.1, -1.1, 1.1).unwrap()
    }

    fn net(layers: usize, width: usize, out: usize, seed: u64) -> Arc<Network> {
        let cfg = MlpConfig::new(layers, width, out, false).unwrap();
        let mut p = he_init(cfg, seed);
        // non-zero biases so their gradients are exercised
        let offs = p.layer_offsets();
        for (l, &(_, b)) in offs.iter().enumerate() {
            let fan_out = cfg.layer_shapes()[l].1;
            for i in 0..fan_out {
                p.as_mut_slice()[b + i] = 0.05 * ((i + l) as f64).sin();
            }
        }
        Arc::new(Network::new(p, InputMap::new(roi())))
    }

    #[test]
    fn he_init_variance_and_zero_bias() {
        let cfg = MlpConfig::new(3, 100, 1, false).unwrap();
        let p = he_init(cfg, 3);
        let offs = p.layer_offsets();
        // second hidden layer: fan_in 100, 10 000 weights
        let (w, b) = offs[1];
        let ws = &p.as_slice()[w..w + 100 * 100];
        let mean = ws.iter().sum::<f64>() / ws.len() as f64;
        let var = ws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ws.len() as f64;
        assert!((var / (2.0 / 100.0) - 1.0).abs() < 0.1, "{var}");
        assert!(p.as_slice()[b..b + 100].iter().all(|&v| v == 0.0));
        let cfg64 = MlpConfig::new(2, 64, 1, false).unwrap();
        let q = he_init(cfg64, 11);
        let (w, _) = q.layer_offsets()[1];
        let ws = &q.as_slice()[w..w + 64 * 64];
        let var = ws.iter().map(|v| v * v).sum::<f64>() / ws.len() as f64;
        assert!((var / (2.0 / 64.0) - 1.0).abs() < 0.1);
        assert_eq!(he_init(cfg, 3), p);
    }

    #[test]
    fn zero_weights_output_bias() {
        let cfg = MlpConfig::new(2, 8, 3, false).unwrap();
        let mut p = MlpParams::zeros(cfg);
        let n = p.len();
        p.as_mut_slice()[n - 3..].copy_from_slice(&[0.5, -1.0, 2.0]);
        let net = Network::new(p, InputMap::new(roi()));
        for x in [[0.0, 0.0], [0.7, -0.3], [-1.0, 1.0]] {
            assert_eq!(net.predict(x).unwrap(), vec![0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn fused_and_primitive_routes_agree() {
        let net = net(2, 6, 2, 4);
        let tape = Tape::new();
        let params: Vec<_> = net.params.as_slice().iter().map(|&v| tape.var(v)).collect();
        let (x, y) = tape.spatial(0.3, -0.45);
        let slow = net.forward_primitive(&params, x, y);
        let fast = net.forward(&tape, x, y, Order::Second).unwrap();
        for (s, f) in slow.iter().zip(&fast) {
            for c in 0..6 {
                assert!((s.jet().0[c] - f.jet().0[c]).abs() < 1e-12);
            }
        }
        // gradients of a Laplacian-based scalar, both routes
        let loss_slow = slow[0].laplacian().square() + slow[1].dx() * slow[0];
        let loss_fast = fast[0].laplacian().square() + fast[1].dx() * fast[0];
        let mut adj = Vec::new();
        let mut g_fast = vec![0.0; net.params.len()];
        tape.backward_into(loss_fast, 1.0, &mut adj, &mut g_fast).unwrap();
        let fx = adj[x.index()].0[V];
        let adj_slow = tape.gradient(loss_slow).unwrap();
        for (i, p) in params.iter().enumerate() {
            let a = adj_slow.wrt(*p);
            assert!((a - g_fast[i]).abs() < 1e-10 * (1.0 + a.abs()), "param {i}: {a} vs {}", g_fast[i]);
        }
        assert!((adj_slow.wrt(x) - fx).abs() < 1e-10 * (1.0 + fx.abs()));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let net = net(5, 64, 1, 8);
        let n2 = Arc::clone(&net);
        let err = check_against_finite_differences(&[Seed::X(0.21), Seed::Y(-0.37)], 1e-5, move |t, s| {
            n2.forward(t, s[0], s[1], Order::First).unwrap()[0]
        })
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let net = net(3, 16, 1, 2);
        let p = [0.4, 0.15];
        let value = |n: &Network| n.predict(p).unwrap()[0];
        let tape = Tape::new();
        let (x, y) = tape.spatial(p[0], p[1]);
        let out = net.forward(&tape, x, y, Order::Value).unwrap()[0];
        let mut adj = Vec::new();
        let mut g = vec![0.0; net.params.len()];
        tape.backward_into(out, 1.0, &mut adj, &mut g).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in (0..net.params.len()).step_by(7) {
            let mut up = (*net).clone();
            up.params.as_mut_slice()[i] += h;
            let mut dn = (*net).clone();
            dn.params.as_mut_slice()[i] -= h;
            let fd = (value(&up) - value(&dn)) / (2.0 * h);
            if g[i].abs() > 1e-6 {
                worst = worst.max((g[i] - fd).abs() / g[i].abs());
            }
        }
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn checkpoint_block_roundtrip_and_truncation() {
        let net = net(2, 5, 3, 1);
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        let back = Network::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(&back, net.as_ref());
        let cut = &buf[..buf.len() - 9];
        assert!(matches!(Network::read_from(&mut &cut[..]), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn output_bounded_by_last_layer(px in -3.0f64..3.0, py in -3.0f64..3.0, seed in 0u64..50) {
            let net = net(2, 7, 2, seed);
            let out = net.predict([px, py]).unwrap();
            let (w, b) = net.params.last_layer();
            for k in 0..2 {
                let bound: f64 = w[k * 7..(k + 1) * 7].iter().map(|v| v.abs()).sum::<f64>() + b[k].abs();
                prop_assert!(out[k].abs() <= bound + 1e-12);
            }
        }
    }
}

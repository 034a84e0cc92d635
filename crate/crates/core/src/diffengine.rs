//! Differentiation engine.
//!
//! Every tape node carries a second-order *spatial jet*: the value together
//! with its gradient and Hessian with respect to the two spatial inputs
//! `(x, y)`, propagated in forward mode. On top of that the tape records the
//! operations so that reverse mode can produce the derivative of any scalar
//! output with respect to every leaf (network parameters, patch centers,
//! spatial inputs). Reverse mode runs over the jet components, so the
//! gradient of a residual built from second spatial derivatives (a Laplacian,
//! a stress divergence) with respect to the parameters is exact.
//!
//! Third-order spatial derivatives are not supported: components pulled out
//! of a jet with [`Var::dx`], [`Var::dxx`] and friends are spatially flat.

use std::cell::RefCell;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::error::{Error, Primitive, Result};

/// Index of the value component inside a [`Jet`].
pub const V: usize = 0;
/// Index of `∂/∂x`.
pub const GX: usize = 1;
/// Index of `∂/∂y`.
pub const GY: usize = 2;
/// Index of `∂²/∂x²`.
pub const HXX: usize = 3;
/// Index of `∂²/∂x∂y`.
pub const HXY: usize = 4;
/// Index of `∂²/∂y²`.
pub const HYY: usize = 5;

/// Floor used by [`Var::norm2`] and [`Var::abs_smooth`] so both stay
/// differentiable at the origin.
pub const NORM_FLOOR: f64 = 1e-12;

/// Value plus spatial gradient and Hessian: `[v, gx, gy, hxx, hxy, hyy]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet(pub [f64; 6]);

impl Jet {
    pub const ZERO: Jet = Jet([0.0; 6]);

    pub fn constant(v: f64) -> Self {
        Jet([v, 0.0, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn seed_x(v: f64) -> Self {
        Jet([v, 1.0, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn seed_y(v: f64) -> Self {
        Jet([v, 0.0, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn value(&self) -> f64 {
        self.0[V]
    }

    pub fn gradient(&self) -> [f64; 2] {
        [self.0[GX], self.0[GY]]
    }

    pub fn hessian(&self) -> [[f64; 2]; 2] {
        [[self.0[HXX], self.0[HXY]], [self.0[HXY], self.0[HYY]]]
    }

    pub fn laplacian(&self) -> f64 {
        self.0[HXX] + self.0[HYY]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn scale(self, c: f64) -> Jet {
        let mut out = self;
        out.0.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Forward rule for a product.
    pub fn product(self, b: Jet) -> Jet {
        let a = self.0;
        let b = b.0;
        Jet([
            a[V] * b[V],
            a[GX] * b[V] + a[V] * b[GX],
            a[GY] * b[V] + a[V] * b[GY],
            a[HXX] * b[V] + a[V] * b[HXX] + 2.0 * a[GX] * b[GX],
            a[HXY] * b[V] + a[V] * b[HXY] + a[GX] * b[GY] + a[GY] * b[GX],
            a[HYY] * b[V] + a[V] * b[HYY] + 2.0 * a[GY] * b[GY],
        ])
    }

    /// Forward rule for `f(self)` given `f`, `f'` and `f''` at the value.
    pub fn unary(self, f0: f64, d1: f64, d2: f64) -> Jet {
        let a = self.0;
        Jet([
            f0,
            d1 * a[GX],
            d1 * a[GY],
            d2 * a[GX] * a[GX] + d1 * a[HXX],
            d2 * a[GX] * a[GY] + d1 * a[HXY],
            d2 * a[GY] * a[GY] + d1 * a[HYY],
        ])
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let mut out = self;
        out += rhs;
        out
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self + rhs.scale(-1.0)
    }
}

/// How many jet components an evaluation needs to carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    First,
    Second,
}

impl Order {
    /// Number of leading jet components that are populated.
    pub fn width(self) -> usize {
        match self {
            Order::Value => 1,
            Order::First => 3,
            Order::Second => 6,
        }
    }
}

/// Input adjoint contribution of a unary jet map `f`, given the output
/// adjoint, the input jet and `f'`, `f''`, `f'''` at the input value.
/// Only the first `width` components of both adjoint and jet are used.
#[inline]
pub(crate) fn unary_adjoint(out: &Jet, input: &Jet, d: [f64; 3], width: usize) -> Jet {
    let o = &out.0;
    let a = &input.0;
    let [d1, d2, d3] = d;
    let mut r = [0.0; 6];
    r[V] = d1 * o[V];
    if width >= 3 {
        r[V] += d2 * (o[GX] * a[GX] + o[GY] * a[GY]);
        r[GX] = d1 * o[GX];
        r[GY] = d1 * o[GY];
    }
    if width >= 6 {
        r[V] += d3 * (o[HXX] * a[GX] * a[GX] + o[HXY] * a[GX] * a[GY] + o[HYY] * a[GY] * a[GY])
            + d2 * (o[HXX] * a[HXX] + o[HXY] * a[HXY] + o[HYY] * a[HYY]);
        r[GX] += d2 * (2.0 * o[HXX] * a[GX] + o[HXY] * a[GY]);
        r[GY] += d2 * (o[HXY] * a[GX] + 2.0 * o[HYY] * a[GY]);
        r[HXX] = d1 * o[HXX];
        r[HXY] = d1 * o[HXY];
        r[HYY] = d1 * o[HYY];
    }
    Jet(r)
}

/// Adjoint of `a * b` with respect to `a`.
#[inline]
fn mul_adjoint(out: &Jet, b: &Jet) -> Jet {
    let o = &out.0;
    let b = &b.0;
    Jet([
        o[V] * b[V]
            + o[GX] * b[GX]
            + o[GY] * b[GY]
            + o[HXX] * b[HXX]
            + o[HXY] * b[HXY]
            + o[HYY] * b[HYY],
        o[GX] * b[V] + 2.0 * o[HXX] * b[GX] + o[HXY] * b[GY],
        o[GY] * b[V] + o[HXY] * b[GX] + 2.0 * o[HYY] * b[GY],
        o[HXX] * b[V],
        o[HXY] * b[V],
        o[HYY] * b[V],
    ])
}

/// An operation whose forward pass is computed outside the tape and whose
/// reverse pass is supplied by the implementor. Used for fused kernels such
/// as a whole network evaluation.
pub trait CustomOp {
    /// Accumulate input adjoints into `in_adj` and parameter adjoints into
    /// `params` given the adjoints of the op's outputs.
    fn backward(&self, inputs: &[Jet], out_adj: &[Jet], in_adj: &mut [Jet], params: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Affine { a: usize, scale: f64 },
    Unary { a: usize, d: [f64; 3] },
    Extract { a: usize, comp: usize },
    CustomOut { slot: usize, k: usize },
}

struct CustomSlot {
    inputs: Vec<usize>,
    first_out: usize,
    n_out: usize,
    op: Box<dyn CustomOp>,
}

#[derive(Default)]
struct Inner {
    values: Vec<Jet>,
    ops: Vec<Op>,
    customs: Vec<CustomSlot>,
    error: Option<(Primitive, f64)>,
}

/// Recording of one expression evaluation.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drop all recorded nodes, keeping allocations.
    pub fn clear(&mut self) {
        let inner = self.inner.get_mut();
        inner.values.clear();
        inner.ops.clear();
        inner.customs.clear();
        inner.error = None;
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, jet: Jet, op: Op) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.values.len();
        inner.values.push(jet);
        inner.ops.push(op);
        Var { tape: self, idx }
    }

    fn record_error(&self, primitive: Primitive, operand: f64) {
        let mut inner = self.inner.borrow_mut();
        if inner.error.is_none() {
            inner.error = Some((primitive, operand));
        }
    }

    /// A leaf that is constant in space.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(Jet::constant(value), Op::Leaf)
    }

    /// A leaf with an arbitrary jet.
    pub fn leaf(&self, jet: Jet) -> Var<'_> {
        self.push(jet, Op::Leaf)
    }

    /// The two spatial inputs as jet seeds.
    pub fn spatial(&self, x: f64, y: f64) -> (Var<'_>, Var<'_>) {
        (self.leaf(Jet::seed_x(x)), self.leaf(Jet::seed_y(y)))
    }

    /// Register a custom operation whose outputs were computed by the caller.
    pub fn custom(&self, inputs: &[Var<'_>], outputs: Vec<Jet>, op: Box<dyn CustomOp>) -> Vec<Var<'_>> {
        let n_out = outputs.len();
        let first_out = self.len();
        let slot = {
            let mut inner = self.inner.borrow_mut();
            inner.customs.push(CustomSlot {
                inputs: inputs.iter().map(|v| v.idx).collect(),
                first_out,
                n_out,
                op,
            });
            inner.customs.len() - 1
        };
        outputs
            .into_iter()
            .enumerate()
            .map(|(k, jet)| self.push(jet, Op::CustomOut { slot, k }))
            .collect()
    }

    /// First domain error recorded while building the expression, if any.
    pub fn status(&self) -> Result<()> {
        match self.inner.borrow().error {
            Some((primitive, operand)) => Err(Error::Domain { primitive, operand }),
            None => Ok(()),
        }
    }

    /// Reverse pass from `output`, seeding its value adjoint with `seed`.
    /// `adjoints` is resized to the tape length and overwritten; parameter
    /// adjoints from custom ops are *accumulated* into `params`.
    pub fn backward_into(
        &self,
        output: Var<'_>,
        seed: f64,
        adjoints: &mut Vec<Jet>,
        params: &mut [f64],
    ) -> Result<()> {
        self.status()?;
        let inner = self.inner.borrow();
        let n = inner.values.len();
        adjoints.clear();
        adjoints.resize(n, Jet::ZERO);
        adjoints[output.idx].0[V] = seed;

        let mut in_vals = Vec::new();
        let mut in_adj = Vec::new();
        for i in (0..n).rev() {
            let op = inner.ops[i];
            if let Op::CustomOut { slot, k } = op {
                if k != 0 {
                    continue;
                }
                let slot = &inner.customs[slot];
                let outs = &adjoints[slot.first_out..slot.first_out + slot.n_out];
                if outs.iter().all(Jet::is_zero) {
                    continue;
                }
                let outs = outs.to_vec();
                in_vals.clear();
                in_vals.extend(slot.inputs.iter().map(|&j| inner.values[j]));
                in_adj.clear();
                in_adj.resize(slot.inputs.len(), Jet::ZERO);
                slot.op.backward(&in_vals, &outs, &mut in_adj, params);
                for (&j, a) in slot.inputs.iter().zip(&in_adj) {
                    adjoints[j] += *a;
                }
                continue;
            }
            let a = adjoints[i];
            if a.is_zero() {
                continue;
            }
            match op {
                Op::Leaf | Op::CustomOut { .. } => {}
                Op::Add(p, q) => {
                    adjoints[p] += a;
                    adjoints[q] += a;
                }
                Op::Sub(p, q) => {
                    adjoints[p] += a;
                    adjoints[q] += a.scale(-1.0);
                }
                Op::Mul(p, q) => {
                    let dp = mul_adjoint(&a, &inner.values[q]);
                    let dq = mul_adjoint(&a, &inner.values[p]);
                    adjoints[p] += dp;
                    adjoints[q] += dq;
                }
                Op::Affine { a: p, scale } => adjoints[p] += a.scale(scale),
                Op::Unary { a: p, d } => {
                    let dp = unary_adjoint(&a, &inner.values[p], d, 6);
                    adjoints[p] += dp;
                }
                Op::Extract { a: p, comp } => adjoints[p].0[comp] += a.0[V],
            }
        }
        Ok(())
    }

    /// Reverse pass with unit seed and no parameter buffer.
    pub fn gradient(&self, output: Var<'_>) -> Result<Adjoints> {
        let mut adj = Vec::new();
        self.backward_into(output, 1.0, &mut adj, &mut [])?;
        Ok(Adjoints(adj))
    }
}

/// Result of a reverse pass: one adjoint jet per tape node.
#[derive(Debug, Clone)]
pub struct Adjoints(pub Vec<Jet>);

impl Adjoints {
    /// Derivative of the output with respect to the value of `v`.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.0[v.idx].0[V]
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("idx", &self.idx)
            .field("jet", &self.jet())
            .finish()
    }
}

impl<'t> Var<'t> {
    pub fn index(self) -> usize {
        self.idx
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    pub fn jet(self) -> Jet {
        self.tape.inner.borrow().values[self.idx]
    }

    pub fn value(self) -> f64 {
        self.jet().value()
    }

    fn unary(self, f0: f64, d: [f64; 3]) -> Var<'t> {
        let jet = self.jet().unary(f0, d[0], d[1]);
        self.tape.push(jet, Op::Unary { a: self.idx, d })
    }

    fn poisoned(self, primitive: Primitive, operand: f64) -> Var<'t> {
        self.tape.record_error(primitive, operand);
        self.unary(f64::NAN, [f64::NAN; 3])
    }

    fn extract(self, comp: usize) -> Var<'t> {
        let jet = Jet::constant(self.jet().0[comp]);
        self.tape.push(jet, Op::Extract { a: self.idx, comp })
    }

    pub fn dx(self) -> Var<'t> {
        self.extract(GX)
    }

    pub fn dy(self) -> Var<'t> {
        self.extract(GY)
    }

    pub fn dxx(self) -> Var<'t> {
        self.extract(HXX)
    }

    pub fn dxy(self) -> Var<'t> {
        self.extract(HXY)
    }

    pub fn dyy(self) -> Var<'t> {
        self.extract(HYY)
    }

    pub fn laplacian(self) -> Var<'t> {
        self.dxx() + self.dyy()
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let jet = self.jet().scale(c);
        self.tape.push(jet, Op::Affine { a: self.idx, scale: c })
    }

    pub fn offset(self, c: f64) -> Var<'t> {
        let mut jet = self.jet();
        jet.0[V] += c;
        self.tape.push(jet, Op::Affine { a: self.idx, scale: 1.0 })
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.value().exp();
        self.unary(e, [e, e, e])
    }

    pub fn ln(self) -> Var<'t> {
        let x = self.value();
        if !(x > 0.0) {
            return self.poisoned(Primitive::Ln, x);
        }
        let r = 1.0 / x;
        self.unary(x.ln(), [r, -r * r, 2.0 * r * r * r])
    }

    pub fn sqrt(self) -> Var<'t> {
        let x = self.value();
        if x < 0.0 || x.is_nan() {
            return self.poisoned(Primitive::Sqrt, x);
        }
        let s = x.sqrt();
        let d1 = 0.5 / s;
        let d2 = -0.5 * d1 / x;
        let d3 = -1.5 * d2 / x;
        self.unary(s, [d1, d2, d3])
    }

    pub fn recip(self) -> Var<'t> {
        let x = self.value();
        if x == 0.0 {
            return self.poisoned(Primitive::Div, x);
        }
        let r = 1.0 / x;
        self.unary(r, [-r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    pub fn tanh(self) -> Var<'t> {
        let t = self.value().tanh();
        let d1 = 1.0 - t * t;
        self.unary(t, [d1, -2.0 * t * d1, d1 * (6.0 * t * t - 2.0)])
    }

    /// Logistic function, evaluated without overflow for large `|x|`.
    pub fn sigmoid(self) -> Var<'t> {
        let (s, sm) = stable_sigmoid_pair(self.value());
        let d1 = s * sm;
        self.unary(s, [d1, d1 * (sm - s), d1 * (1.0 - 6.0 * s * sm)])
    }

    pub fn powi(self, n: i32) -> Var<'t> {
        let x = self.value();
        if n < 0 && x == 0.0 {
            return self.poisoned(Primitive::Pow, x);
        }
        let nf = n as f64;
        self.unary(
            x.powi(n),
            [
                nf * x.powi(n - 1),
                nf * (nf - 1.0) * x.powi(n - 2),
                nf * (nf - 1.0) * (nf - 2.0) * x.powi(n - 3),
            ],
        )
    }

    /// `self^p` for a constant exponent.
    pub fn powf(self, p: f64) -> Var<'t> {
        if p.fract() == 0.0 && p.abs() < i32::MAX as f64 {
            return self.powi(p as i32);
        }
        let x = self.value();
        if x < 0.0 || (x == 0.0 && p < 0.0) || x.is_nan() {
            return self.poisoned(Primitive::Pow, x);
        }
        self.unary(
            x.powf(p),
            [
                p * x.powf(p - 1.0),
                p * (p - 1.0) * x.powf(p - 2.0),
                p * (p - 1.0) * (p - 2.0) * x.powf(p - 3.0),
            ],
        )
    }

    /// `sqrt(x² + NORM_FLOOR²)`: a smooth absolute value.
    pub fn abs_smooth(self) -> Var<'t> {
        let x = self.value();
        let e2 = NORM_FLOOR * NORM_FLOOR;
        let s = (x * x + e2).sqrt();
        let s3 = s * s * s;
        self.unary(s, [x / s, e2 / s3, -3.0 * e2 * x / (s3 * s * s)])
    }

    /// Euclidean norm of `(self, other)` with the origin smoothed by
    /// [`NORM_FLOOR`].
    pub fn norm2(self, other: Var<'t>) -> Var<'t> {
        (self * self + other * other)
            .offset(NORM_FLOOR * NORM_FLOOR)
            .sqrt()
    }
}

/// `(σ(x), 1 − σ(x))`, both computed without cancellation.
#[inline]
pub fn stable_sigmoid_pair(x: f64) -> (f64, f64) {
    if x >= 0.0 {
        let e = (-x).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = x.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

#[inline]
pub fn stable_sigmoid(x: f64) -> f64 {
    stable_sigmoid_pair(x).0
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        let jet = self.jet() + rhs.jet();
        self.tape.push(jet, Op::Add(self.idx, rhs.idx))
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        let jet = self.jet() - rhs.jet();
        self.tape.push(jet, Op::Sub(self.idx, rhs.idx))
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        let jet = self.jet().product(rhs.jet());
        self.tape.push(jet, Op::Mul(self.idx, rhs.idx))
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self * rhs.recip()
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.offset(rhs)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.offset(-rhs)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.scale(rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        if rhs == 0.0 {
            return self.poisoned(Primitive::Div, rhs);
        }
        self.scale(1.0 / rhs)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs.offset(self)
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.scale(-1.0).offset(self)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs.scale(self)
    }
}

impl<'t> Div<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        rhs.recip().scale(self)
    }
}

/// A variable with respect to which derivatives are requested.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Seed {
    /// The first spatial input.
    X(f64),
    /// The second spatial input.
    Y(f64),
    /// Any non-spatial quantity (a weight, a patch coordinate).
    Param(f64),
}

impl Seed {
    pub fn value(self) -> f64 {
        match self {
            Seed::X(v) | Seed::Y(v) | Seed::Param(v) => v,
        }
    }

    fn with_value(self, v: f64) -> Seed {
        match self {
            Seed::X(_) => Seed::X(v),
            Seed::Y(_) => Seed::Y(v),
            Seed::Param(_) => Seed::Param(v),
        }
    }
}

/// Value and derivatives of a scalar expression.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// `∂f/∂s` for every seed, in seed order.
    pub first: Vec<f64>,
    /// Spatial Hessian (zero when no spatial seed was declared).
    pub second: [[f64; 2]; 2],
}

fn seed_leaves<'t>(tape: &'t Tape, seeds: &[Seed]) -> Result<Vec<Var<'t>>> {
    let xs = seeds.iter().filter(|s| matches!(s, Seed::X(_))).count();
    let ys = seeds.iter().filter(|s| matches!(s, Seed::Y(_))).count();
    if xs > 1 || ys > 1 {
        return Err(Error::Config(
            "at most one X and one Y spatial seed may be declared".into(),
        ));
    }
    Ok(seeds
        .iter()
        .map(|s| match *s {
            Seed::X(v) => tape.leaf(Jet::seed_x(v)),
            Seed::Y(v) => tape.leaf(Jet::seed_y(v)),
            Seed::Param(v) => tape.var(v),
        })
        .collect())
}

/// Evaluate `expr` at the seed values and return exact first partials with
/// respect to every seed plus the spatial Hessian.
pub fn eval_with_derivatives<F>(seeds: &[Seed], expr: F) -> Result<Evaluation>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let leaves = seed_leaves(&tape, seeds)?;
    let out = expr(&tape, &leaves);
    let adj = tape.gradient(out)?;
    let jet = out.jet();
    Ok(Evaluation {
        value: jet.value(),
        first: leaves.iter().map(|&l| adj.wrt(l)).collect(),
        second: jet.hessian(),
    })
}

/// Evaluate `expr` without differentiating.
pub fn eval_value<F>(seeds: &[Seed], expr: F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let leaves = seed_leaves(&tape, seeds)?;
    let out = expr(&tape, &leaves);
    tape.status()?;
    Ok(out.value())
}

/// Largest relative discrepancy between the analytic first partials and
/// central differences with the given step, over all seeds:
/// `|analytic − fd| / max(|analytic|, 1e-12)`.
pub fn check_against_finite_differences<F>(seeds: &[Seed], step: f64, expr: F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let analytic = eval_with_derivatives(seeds, &expr)?;
    let mut worst: f64 = 0.0;
    let mut shifted = seeds.to_vec();
    for (i, seed) in seeds.iter().enumerate() {
        let v = seed.value();
        shifted[i] = seed.with_value(v + step);
        let up = eval_value(&shifted, &expr)?;
        shifted[i] = seed.with_value(v - step);
        let down = eval_value(&shifted, &expr)?;
        shifted[i] = *seed;
        let fd = (up - down) / (2.0 * step);
        let a = analytic.first[i];
        worst = worst.max((a - fd).abs() / a.abs().max(1e-12));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn square_at_three() {
        let e = eval_with_derivatives(&[Seed::X(3.0)], |_, s| s[0] * s[0]).unwrap();
        assert_eq!(e.value, 9.0);
        assert_eq!(e.first, vec![6.0]);
        assert_eq!(e.second[0][0], 2.0);
    }

    #[test]
    fn tanh_at_zero() {
        let e = eval_with_derivatives(&[Seed::X(0.0)], |_, s| s[0].tanh()).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.first, vec![1.0]);
        assert_eq!(e.second[0][0], 0.0);
    }

    #[test]
    fn sigmoid_of_product_matches_central_differences() {
        let (x, y) = (0.7, -1.3);
        let e = eval_with_derivatives(&[Seed::X(x), Seed::Y(y)], |_, s| (s[0] * s[1]).sigmoid())
            .unwrap();
        let sig = |t: f64| 1.0 / (1.0 + (-t).exp());
        let dfx = fd(|t| sig(t * y), x, 1e-5);
        let dfy = fd(|t| sig(x * t), y, 1e-5);
        assert!((e.first[0] - dfx).abs() / dfx.abs() < 1e-6);
        assert!((e.first[1] - dfy).abs() / dfy.abs() < 1e-6);
    }

    #[test]
    fn constant_expression_has_zero_error() {
        let err = check_against_finite_differences(&[Seed::Param(2.0)], 1e-5, |t, _| t.var(4.0))
            .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn exp_error_is_second_order_in_step() {
        let e1 = check_against_finite_differences(&[Seed::X(1.0)], 1e-2, |_, s| s[0].exp()).unwrap();
        let e2 = check_against_finite_differences(&[Seed::X(1.0)], 1e-3, |_, s| s[0].exp()).unwrap();
        // h²/6 truncation
        assert!((e1 - 1e-4 / 6.0).abs() < 1e-7, "{e1}");
        assert!(e1 / e2 > 90.0 && e1 / e2 < 110.0);
        let e4 = check_against_finite_differences(&[Seed::X(1.0)], 1e-4, |_, s| s[0].exp()).unwrap();
        assert!(e4 < 1e-8);
    }

    #[test]
    fn domain_errors_name_the_primitive() {
        let r = eval_with_derivatives(&[Seed::Param(-1.0)], |_, s| s[0].ln());
        assert!(matches!(r, Err(Error::Domain { primitive: Primitive::Ln, operand }) if operand == -1.0));
        let r = eval_with_derivatives(&[Seed::Param(-4.0)], |_, s| s[0].sqrt());
        assert!(matches!(r, Err(Error::Domain { primitive: Primitive::Sqrt, .. })));
        let r = eval_with_derivatives(&[Seed::Param(0.0)], |t, s| t.var(1.0) / s[0]);
        assert!(matches!(r, Err(Error::Domain { primitive: Primitive::Div, operand }) if operand == 0.0));
    }

    #[test]
    fn second_partials_are_symmetric_and_exact() {
        // f = x³y² + sin-free mix: ∂²f/∂x∂y = 6x²y
        let e = eval_with_derivatives(&[Seed::X(0.4), Seed::Y(-0.9)], |_, s| {
            s[0].powi(3) * s[1].powi(2) + (s[0] * s[1]).exp()
        })
        .unwrap();
        let (x, y) = (0.4f64, -0.9f64);
        let exy = (x * y).exp();
        let fxy = 6.0 * x * x * y + exy + x * y * exy;
        assert!((e.second[0][1] - fxy).abs() < 1e-12);
        assert_eq!(e.second[0][1], e.second[1][0]);
        let fxx = 6.0 * x * y * y + y * y * exy;
        assert!((e.second[0][0] - fxx).abs() < 1e-12);
    }

    #[test]
    fn harmonic_polynomials_have_zero_laplacian() {
        let fields: Vec<for<'a> fn(Var<'a>, Var<'a>) -> Var<'a>> = vec![
            |x, y| x * x - y * y,
            |x, y| x.powi(3) - 3.0 * x * y * y,
            |x, y| x.powi(4) - 6.0 * x * x * y * y + y.powi(4),
            |x, y| 4.0 * x.powi(3) * y - 4.0 * x * y.powi(3),
        ];
        for f in fields {
            for &(px, py) in &[(0.3, -1.7), (2.5, 0.4), (-3.1, 1.9)] {
                let tape = Tape::new();
                let (x, y) = tape.spatial(px, py);
                let u = f(x, y);
                assert!(u.jet().laplacian().abs() < 1e-10);
            }
        }
    }

    #[test]
    fn reverse_mode_sees_through_extracted_derivatives() {
        // g(a) = ∂²/∂x² (a·x³) at x = 2 is 6·a·x = 12a → dg/da = 12
        let tape = Tape::new();
        let a = tape.var(0.5);
        let (x, _) = tape.spatial(2.0, 0.0);
        let g = (a * x.powi(3)).dxx();
        assert!((g.value() - 6.0).abs() < 1e-12);
        let adj = tape.gradient(g).unwrap();
        assert!((adj.wrt(a) - 12.0).abs() < 1e-12);
        // ... and d(u_x)/dx through the value seed of x equals u_xx
        let ux = (a * x.powi(3)).dx();
        let adj = tape.gradient(ux).unwrap();
        assert!((adj.wrt(x) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let e = eval_with_derivatives(&[Seed::Param(-800.0)], |_, s| s[0].sigmoid()).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.first[0].is_finite());
        let e = eval_with_derivatives(&[Seed::Param(800.0)], |_, s| s[0].sigmoid()).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.first[0], 0.0);
    }

    #[test]
    fn norm2_is_differentiable_at_origin() {
        let e = eval_with_derivatives(&[Seed::Param(0.0), Seed::Param(0.0)], |_, s| s[0].norm2(s[1]))
            .unwrap();
        assert!(e.value > 0.0 && e.value <= 1e-12);
        assert!(e.first.iter().all(|g| g.is_finite()));
    }
}

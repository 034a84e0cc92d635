//! PDE residual operators.
//!
//! Every operator works on the output variables of a [`FieldSource`]
//! evaluated at second order, so the same code serves trained networks and
//! hand-written probe fields.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffengine::{Order, Tape, Var};
use crate::error::{config_err, Result};
use crate::network::Network;

/// Anything that maps a point to a vector of tape variables carrying
/// spatial derivatives.
pub trait FieldSource: Send + Sync {
    /// Number of raw outputs (solution components plus any density channel).
    fn n_outputs(&self) -> usize;

    fn eval<'t>(&self, tape: &'t Tape, x: Var<'t>, y: Var<'t>, order: Order) -> Result<Vec<Var<'t>>>;
}

impl FieldSource for Arc<Network> {
    fn n_outputs(&self) -> usize {
        self.config().n_outputs()
    }

    fn eval<'t>(&self, tape: &'t Tape, x: Var<'t>, y: Var<'t>, order: Order) -> Result<Vec<Var<'t>>> {
        self.forward(tape, x, y, order)
    }
}

/// A closed-form field written directly with tape operations.
pub struct Probe<F> {
    n_outputs: usize,
    f: F,
}

impl<F> Probe<F>
where
    F: for<'t> Fn(Var<'t>, Var<'t>) -> Vec<Var<'t>> + Send + Sync,
{
    pub fn new(n_outputs: usize, f: F) -> Self {
        Probe { n_outputs, f }
    }
}

impl<F> FieldSource for Probe<F>
where
    F: for<'t> Fn(Var<'t>, Var<'t>) -> Vec<Var<'t>> + Send + Sync,
{
    fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    fn eval<'t>(&self, tape: &'t Tape, x: Var<'t>, y: Var<'t>, _order: Order) -> Result<Vec<Var<'t>>> {
        let out = (self.f)(x, y);
        tape.status()?;
        Ok(out)
    }
}

/// Isotropic linear elastic material.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    #[serde(rename = "E")]
    pub e: f64,
    pub nu: f64,
}

impl MaterialParams {
    pub fn new(e: f64, nu: f64) -> Result<Self> {
        let m = MaterialParams { e, nu };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e > 0.0 && self.e.is_finite()) {
            return Err(config_err(format!("Young's modulus must be positive, got {}", self.e)));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(config_err(format!("Poisson ratio must lie in [0, 0.5), got {}", self.nu)));
        }
        Ok(())
    }

    /// Stresses `(σ_xx, σ_yy, σ_xy)` from strains `(ε_xx, ε_yy, ε_xy)`.
    /// The shear law is `σ_xy = E/(1−ν)·ε_xy`.
    pub fn stress(&self, eps_xx: f64, eps_yy: f64, eps_xy: f64) -> [f64; 3] {
        let c = self.e / (1.0 - self.nu * self.nu);
        [
            c * (eps_xx + self.nu * eps_yy),
            c * (eps_yy + self.nu * eps_xx),
            self.e / (1.0 - self.nu) * eps_xy,
        ]
    }
}

/// Incompressible flow parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    #[serde(rename = "Re")]
    pub re: f64,
}

impl FlowParams {
    pub fn new(re: f64) -> Result<Self> {
        let f = FlowParams { re };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.re > 0.0 && self.re.is_finite()) {
            return Err(config_err(format!("Reynolds number must be positive, got {}", self.re)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PdeProblem {
    Laplace,
    Elastic(MaterialParams),
    SteadyNs(FlowParams),
    PressurePoisson,
}

impl PdeProblem {
    /// Solution arity the network must produce.
    pub fn out_dim(&self) -> usize {
        match self {
            PdeProblem::Laplace => 1,
            PdeProblem::Elastic(_) => 2,
            PdeProblem::SteadyNs(_) | PdeProblem::PressurePoisson => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PdeProblem::Laplace => "laplace",
            PdeProblem::Elastic(_) => "elastic",
            PdeProblem::SteadyNs(_) => "steady-ns",
            PdeProblem::PressurePoisson => "pressure-poisson",
        }
    }

    /// Names of the solution components, used for CSV headers and metrics.
    pub fn component_names(&self) -> &'static [&'static str] {
        match self {
            PdeProblem::Laplace => &["T"],
            PdeProblem::Elastic(_) => &["ux", "uy"],
            PdeProblem::SteadyNs(_) | PdeProblem::PressurePoisson => &["u", "v", "p"],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PdeProblem::Elastic(m) => m.validate(),
            PdeProblem::SteadyNs(f) => f.validate(),
            _ => Ok(()),
        }
    }

    /// Residual components from solution variables evaluated at second order.
    pub fn residual<'t>(&self, u: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        if u.len() < self.out_dim() {
            return Err(config_err(format!(
                "{} residual needs {} field components, got {}",
                self.name(),
                self.out_dim(),
                u.len()
            )));
        }
        Ok(match self {
            PdeProblem::Laplace => vec![residual_laplace(u[0])],
            PdeProblem::Elastic(m) => residual_elastic(u[0], u[1], m).to_vec(),
            PdeProblem::SteadyNs(f) => residual_steady_ns(u[0], u[1], u[2], f).to_vec(),
            PdeProblem::PressurePoisson => vec![residual_pressure_poisson(u[0], u[1], u[2])],
        })
    }

    /// Evaluate the residual of `field` at `p`.
    pub fn residual_at(&self, field: &dyn FieldSource, p: [f64; 2]) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let (x, y) = tape.spatial(p[0], p[1]);
        let u = field.eval(&tape, x, y, Order::Second)?;
        let r = self.residual(&u)?;
        tape.status()?;
        Ok(r.iter().map(|v| v.value()).collect())
    }
}

/// `∇²T`.
pub fn residual_laplace<'t>(t: Var<'t>) -> Var<'t> {
    t.laplacian()
}

/// `∇·σ` for plane linear elasticity with displacement `(u_x, u_y)`.
pub fn residual_elastic<'t>(ux: Var<'t>, uy: Var<'t>, m: &MaterialParams) -> [Var<'t>; 2] {
    let c = m.e / (1.0 - m.nu * m.nu);
    let g = m.e / (1.0 - m.nu);
    // ∂σ_xx/∂x = c(u_x,xx + ν u_y,yx), ∂σ_xy/∂y = g·½(u_x,yy + u_y,xy)
    let fx = (ux.dxx() + uy.dxy() * m.nu) * c + (ux.dyy() + uy.dxy()) * (0.5 * g);
    let fy = (ux.dxy() + uy.dxx()) * (0.5 * g) + (uy.dyy() + ux.dxy() * m.nu) * c;
    [fx, fy]
}

/// `(∇·u, (u·∇)u + ∇p − Δu/Re)`.
pub fn residual_steady_ns<'t>(u: Var<'t>, v: Var<'t>, p: Var<'t>, f: &FlowParams) -> [Var<'t>; 3] {
    let inv_re = 1.0 / f.re;
    let (ux, uy, vx, vy) = (u.dx(), u.dy(), v.dx(), v.dy());
    let continuity = ux + vy;
    let mom_x = u * ux + v * uy + p.dx() - u.laplacian() * inv_re;
    let mom_y = u * vx + v * vy + p.dy() - v.laplacian() * inv_re;
    [continuity, mom_x, mom_y]
}

/// `Δp + ∇·∇·(u⊗u)`, with the double divergence expanded as
/// `∂xx(u²) + 2∂xy(uv) + ∂yy(v²)`.
pub fn residual_pressure_poisson<'t>(u: Var<'t>, v: Var<'t>, p: Var<'t>) -> Var<'t> {
    let (ux, uy, vx, vy) = (u.dx(), u.dy(), v.dx(), v.dy());
    let d_xx_uu = (ux * ux + u * u.dxx()) * 2.0;
    let d_xy_uv = u.dxy() * v + ux * vy + uy * vx + u * v.dxy();
    let d_yy_vv = (vy * vy + v * v.dyy()) * 2.0;
    p.laplacian() + d_xx_uu + d_xy_uv * 2.0 + d_yy_vv
}

/// Normalized density `ρ̂ = 1/(1+e^{−cρ})`.
pub fn rho_hat<'t>(rho: Var<'t>, c: f64) -> Var<'t> {
    (rho * c).sigmoid()
}

/// Density-weighted residual `(1−ρ̂)·R_pde + ρ̂·(u − u_b)`.
///
/// The Dirichlet term applies to the first `bc_value.len()` components; any
/// remaining residual components (and all of them when `bc_value` is
/// `None`) carry only the `(1−ρ̂)` factor.
pub fn dt_density_residual<'t>(
    u: &[Var<'t>],
    rho: Var<'t>,
    pde: &[Var<'t>],
    bc_value: Option<&[f64]>,
    c: f64,
) -> Result<Vec<Var<'t>>> {
    if c == 0.0 {
        return Err(config_err("density sharpness c must be non-zero"));
    }
    let bc = bc_value.unwrap_or(&[]);
    if bc.len() > pde.len() || bc.len() > u.len() {
        return Err(config_err(format!(
            "Dirichlet value has {} components but the residual has {}",
            bc.len(),
            pde.len()
        )));
    }
    let rh = rho_hat(rho, c);
    let keep = 1.0 - rh;
    Ok(pde
        .iter()
        .enumerate()
        .map(|(k, &r)| match bc.get(k) {
            Some(&b) => keep * r + rh * (u[k] - b),
            None => keep * r,
        })
        .collect())
}

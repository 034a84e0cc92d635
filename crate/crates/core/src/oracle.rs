//! Reference solutions: the annulus conduction problem, a finite-difference
//! Poisson solver, and manufactured null fields for every residual operator.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffengine::Var;
use crate::error::{config_err, Error, Result};
use crate::geometry::{Roi, PATCH_RADIUS};
use crate::pde::{FieldSource, PdeProblem, Probe};
use crate::Point;

/// Steady conduction between the patch ring `r = 0.5` (flux `q`) and an outer
/// circle held at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusProblem {
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub q: f64,
    pub center: Point,
}

impl AnnulusProblem {
    pub fn new(center: Point, outer_radius: f64, q: f64) -> Result<Self> {
        let p = AnnulusProblem {
            inner_radius: PATCH_RADIUS,
            outer_radius,
            q,
            center,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.outer_radius > self.inner_radius && self.inner_radius > 0.0) {
            return Err(config_err(format!(
                "annulus needs outer radius {} > inner radius {} > 0",
                self.outer_radius, self.inner_radius
            )));
        }
        if !self.q.is_finite() {
            return Err(config_err("annulus flux must be finite"));
        }
        Ok(())
    }

    pub fn radius_of(&self, x: Point) -> f64 {
        (x[0] - self.center[0]).hypot(x[1] - self.center[1])
    }

    pub fn contains(&self, x: Point) -> bool {
        let r = self.radius_of(x);
        let tol = 1e-12 * self.outer_radius;
        r >= self.inner_radius - tol && r <= self.outer_radius + tol
    }

    /// The closed form as a field source, valid wherever `r > 0`.
    pub fn field(&self) -> impl FieldSource + 'static {
        let p = *self;
        Probe::new(1, move |x: Var<'_>, y: Var<'_>| {
            let r = (x - p.center[0]).norm2(y - p.center[1]);
            vec![(r * (1.0 / p.outer_radius)).ln() * (0.5 * p.q)]
        })
    }
}

/// `T(r) = 0.5·q·ln(r/R)`: zero on the outer circle and radial derivative `q`
/// on the inner one.
pub fn annulus_temperature(p: &AnnulusProblem, x: Point) -> Result<f64> {
    if !p.contains(x) {
        return Err(Error::OutsideDomain(format!(
            "({}, {}) is at radius {} outside [{}, {}]",
            x[0],
            x[1],
            p.radius_of(x),
            p.inner_radius,
            p.outer_radius
        )));
    }
    Ok(0.5 * p.q * (p.radius_of(x) / p.outer_radius).ln())
}

/// Values on a uniform `nx × ny` grid, x index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub roi: Roi,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn spacing(&self) -> [f64; 2] {
        [
            self.roi.width() / (self.nx - 1) as f64,
            self.roi.height() / (self.ny - 1) as f64,
        ]
    }

    pub fn point(&self, i: usize, j: usize) -> Point {
        let h = self.spacing();
        let x = if i + 1 == self.nx { self.roi.x_max } else { self.roi.x_min + i as f64 * h[0] };
        let y = if j + 1 == self.ny { self.roi.y_max } else { self.roi.y_min + j as f64 * h[1] };
        [x, y]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// Max |value − f(point)| over all nodes.
    pub fn max_error(&self, f: impl Fn(Point) -> f64) -> f64 {
        let mut e: f64 = 0.0;
        for j in 0..self.ny {
            for i in 0..self.nx {
                e = e.max((self.at(i, j) - f(self.point(i, j))).abs());
            }
        }
        e
    }
}

/// Tolerance on the max-norm of the discrete residual `Δ_h u − f`.
pub const FD_TOLERANCE: f64 = 1e-10;

/// Solve `Δu = f` with Dirichlet data `g` by the 5-point stencil and
/// conjugate gradients.
pub fn fd_poisson_dirichlet(
    nx: usize,
    ny: usize,
    region: &Roi,
    f: impl Fn(Point) -> f64,
    g: impl Fn(Point) -> f64,
) -> Result<GridField> {
    if nx < 3 || ny < 3 {
        return Err(config_err(format!("grid must be at least 3×3, got {nx}×{ny}")));
    }
    region.validate()?;
    let mut field = GridField {
        roi: *region,
        nx,
        ny,
        values: vec![0.0; nx * ny],
    };
    for j in 0..ny {
        for i in 0..nx {
            if i == 0 || j == 0 || i + 1 == nx || j + 1 == ny {
                field.values[j * nx + i] = g(field.point(i, j));
            }
        }
    }
    let [hx, hy] = field.spacing();
    let (cx, cy) = (1.0 / (hx * hx), 1.0 / (hy * hy));
    let (mx, my) = (nx - 2, ny - 2);
    let n = mx * my;
    let idx = |i: usize, j: usize| (j - 1) * mx + (i - 1);

    // A = −Δ_h on interior unknowns (SPD); b = −f + boundary couplings.
    let apply = |u: &[f64], out: &mut [f64]| {
        for j in 1..=my {
            for i in 1..=mx {
                let c = u[idx(i, j)];
                let nb = |ii: usize, jj: usize| {
                    if ii == 0 || jj == 0 || ii == nx - 1 || jj == ny - 1 {
                        0.0
                    } else {
                        u[idx(ii, jj)]
                    }
                };
                out[idx(i, j)] = cx * (2.0 * c - nb(i - 1, j) - nb(i + 1, j)) + cy * (2.0 * c - nb(i, j - 1) - nb(i, j + 1));
            }
        }
    };
    let mut b = vec![0.0; n];
    for j in 1..=my {
        for i in 1..=mx {
            let bd = |ii: usize, jj: usize| {
                if ii == 0 || jj == 0 || ii == nx - 1 || jj == ny - 1 {
                    field.values[jj * nx + ii]
                } else {
                    0.0
                }
            };
            b[idx(i, j)] = -f(field.point(i, j))
                + cx * (bd(i - 1, j) + bd(i + 1, j))
                + cy * (bd(i, j - 1) + bd(i, j + 1));
        }
    }

    let mut u = vec![0.0; n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let max_abs = |a: &[f64]| a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rr = dot(&r, &r);
    let max_iter = 20 * (mx + my) + 10 * n.min(10_000) + 100;
    let mut iterations = 0;
    loop {
        if max_abs(&r) < 0.25 * FD_TOLERANCE {
            // confirm with the true residual
            apply(&u, &mut ap);
            let true_r: Vec<f64> = b.iter().zip(&ap).map(|(b, a)| b - a).collect();
            if max_abs(&true_r) < FD_TOLERANCE {
                break;
            }
            r = true_r;
            p.clone_from(&r);
            rr = dot(&r, &r);
        }
        if iterations >= max_iter || !rr.is_finite() {
            return Err(Error::NoConvergence {
                iterations,
                residual: max_abs(&r),
            });
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for k in 0..n {
            u[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_new;
        iterations += 1;
    }
    for j in 1..=my {
        for i in 1..=mx {
            field.values[j * nx + i] = u[idx(i, j)];
        }
    }
    Ok(field)
}

/// A probe field with zero residual under `problem`.
pub struct ManufacturedCase {
    pub name: &'static str,
    pub problem: PdeProblem,
    pub field: Arc<dyn FieldSource>,
}

impl ManufacturedCase {
    /// Largest residual magnitude over `points`.
    pub fn max_residual(&self, points: &[Point]) -> Result<f64> {
        let mut m: f64 = 0.0;
        for &p in points {
            for r in self.problem.residual_at(self.field.as_ref(), p)? {
                m = m.max(r.abs());
            }
        }
        Ok(m)
    }
}

fn case<F>(name: &'static str, problem: PdeProblem, n: usize, f: F) -> ManufacturedCase
where
    F: for<'t> Fn(Var<'t>, Var<'t>) -> Vec<Var<'t>> + Send + Sync + 'static,
{
    ManufacturedCase {
        name,
        problem,
        field: Arc::new(Probe::new(n, f)),
    }
}

/// Null fields for the operator of `problem`, using its parameters.
pub fn manufactured_suite(problem: &PdeProblem) -> Vec<ManufacturedCase> {
    let pr = *problem;
    match pr {
        PdeProblem::Laplace => vec![
            case("x", pr, 1, |x: Var<'_>, _y: Var<'_>| vec![x]),
            case("x^2-y^2", pr, 1, |x: Var<'_>, y: Var<'_>| vec![x * x - y * y]),
            case("x^3-3xy^2", pr, 1, |x: Var<'_>, y: Var<'_>| vec![x * x * x - x * y * y * 3.0]),
        ],
        PdeProblem::Elastic(m) => {
            let nu = m.nu;
            vec![
                case("translation", pr, 2, |x: Var<'_>, _y: Var<'_>| vec![x * 0.0 + 0.3, x * 0.0 - 1.2]),
                case("uniaxial", pr, 2, move |x: Var<'_>, y: Var<'_>| vec![x * 0.02, y * (-nu * 0.02)]),
            ]
        }
        PdeProblem::SteadyNs(f) => {
            let re = f.re;
            vec![
                case("uniform", pr, 3, |x: Var<'_>, _y: Var<'_>| vec![x * 0.0 + 1.3, x * 0.0, x * 0.0 + 2.0]),
                case("shear", pr, 3, |x: Var<'_>, y: Var<'_>| vec![y, x * 0.0, x * 0.0 + 0.5]),
                case("poiseuille", pr, 3, move |x: Var<'_>, y: Var<'_>| {
                    vec![1.0 - y * y, x * 0.0, x * (-2.0 / re)]
                }),
            ]
        }
        PdeProblem::PressurePoisson => vec![
            case("constant", pr, 3, |x: Var<'_>, _y: Var<'_>| vec![x * 0.0 + 2.0, x * 0.0 - 1.0, x * 0.0 + 3.0]),
            case("stagnation", pr, 3, |x: Var<'_>, y: Var<'_>| {
                vec![x, y * -1.0, (x * x + y * y) * -0.5]
            }),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{FlowParams, MaterialParams};
    use crate::sampling::random_points;

    #[test]
    fn annulus_examples() {
        let p = AnnulusProblem::new([0.3, -0.2], 1.1, -0.5).unwrap();
        assert!(annulus_temperature(&p, [1.4, -0.2]).unwrap().abs() < 1e-15);
        let t = annulus_temperature(&p, [0.8, -0.2]).unwrap();
        assert!((t - 0.5 * -0.5 * (0.5f64 / 1.1).ln()).abs() < 1e-15);
        assert!((t - 0.197_114_3).abs() < 1e-7);
        assert!(matches!(annulus_temperature(&p, [0.3, -0.2]), Err(Error::OutsideDomain(_))));
        assert!(AnnulusProblem::new([0.0, 0.0], 0.4, -0.5).is_err());
    }

    #[test]
    fn annulus_is_harmonic() {
        let p = AnnulusProblem::new([0.1, 0.2], 1.5, -0.5).unwrap();
        let field = p.field();
        let box_ = Roi::centered(p.center, 1.5).unwrap();
        let pts: Vec<Point> = random_points(&box_, 400, 7).into_iter().filter(|&x| p.contains(x)).take(100).collect();
        assert_eq!(pts.len(), 100);
        for x in pts {
            let r = PdeProblem::Laplace.residual_at(&field, x).unwrap()[0];
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn fd_examples() {
        let roi = Roi::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let u = |p: Point| p[0] * p[0] - p[1] * p[1];
        let g = fd_poisson_dirichlet(65, 65, &roi, |_| 0.0, u).unwrap();
        assert!(g.max_error(u) < 1e-3);
        let q = |p: Point| p[0] * p[0] + p[1] * p[1];
        let g = fd_poisson_dirichlet(33, 33, &roi, |_| 4.0, q).unwrap();
        assert!(g.max_error(q) < 1e-11);
        let g = fd_poisson_dirichlet(9, 9, &roi, |_| 0.0, |_| 0.0).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
        assert!(fd_poisson_dirichlet(2, 9, &roi, |_| 0.0, |_| 0.0).is_err());
    }

    #[test]
    fn fd_converges_at_second_order() {
        use std::f64::consts::PI;
        let roi = Roi::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let u = |p: Point| (PI * p[0]).sin() * (PI * p[1]).sinh() / PI.sinh() + p[0] * p[1] * p[1];
        let f = |p: Point| 2.0 * p[0];
        let errs: Vec<f64> = [9, 17, 33, 65]
            .iter()
            .map(|&n| fd_poisson_dirichlet(n, n, &roi, f, u).unwrap().max_error(u))
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.0..=5.0).contains(&ratio), "{errs:?}");
        }
    }

    #[test]
    fn manufactured_fields_are_null() {
        let roi = Roi::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let pts = random_points(&roi, 25, 3);
        let problems = [
            PdeProblem::Laplace,
            PdeProblem::Elastic(MaterialParams::new(1.0, 0.33).unwrap()),
            PdeProblem::SteadyNs(FlowParams::new(1.0).unwrap()),
            PdeProblem::SteadyNs(FlowParams::new(100.0).unwrap()),
            PdeProblem::PressurePoisson,
        ];
        for pr in &problems {
            let suite = manufactured_suite(pr);
            assert!(!suite.is_empty());
            for c in suite {
                assert!(c.max_residual(&pts).unwrap() < 1e-9, "{} under {}", c.name, pr.name());
            }
        }
    }
}

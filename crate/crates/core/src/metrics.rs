//! Error metrics, boundary flux, pressure forces and the JSON report.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffengine::Order;
use crate::error::{config_err, Error, Result};
use crate::geometry::{signed_distance, CirclePatch, Roi, PATCH_RADIUS};
use crate::pde::FieldSource;
use crate::sampling::uniform_grid;
use crate::Point;

/// Side length of the standard evaluation grid.
pub const METRIC_GRID: usize = 128;

fn same_len(pred: &[f64], reference: &[f64]) -> Result<()> {
    if pred.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "prediction has {} values, reference {}",
            pred.len(),
            reference.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::UndefinedMetric("empty reference".into()));
    }
    Ok(())
}

/// `‖pred − ref‖₂ / ‖ref‖₂`.
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> Result<f64> {
    same_len(pred, reference)?;
    let den = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::UndefinedMetric("relative L2 against an all-zero reference".into()));
    }
    let num = pred.iter().zip(reference).map(|(p, r)| (p - r).powi(2)).sum::<f64>().sqrt();
    Ok(num / den)
}

/// Mean absolute error normalized by the range of the reference.
pub fn nmae(pred: &[f64], reference: &[f64]) -> Result<f64> {
    same_len(pred, reference)?;
    let (lo, hi) = reference
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::UndefinedMetric("NMAE against a reference with zero range".into()));
    }
    let mae = pred.iter().zip(reference).map(|(p, r)| (p - r).abs()).sum::<f64>() / pred.len() as f64;
    Ok(mae / range)
}

/// Equiangular points on the `r = 0.5` ring, starting at angle 0.
pub fn ring_points(patch: &CirclePatch, n: usize) -> Vec<(f64, Point)> {
    (0..n)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            let r = patch.radius();
            (t, [patch.gamma[0] + r * t.cos(), patch.gamma[1] + r * t.sin()])
        })
        .collect()
}

/// `(angle, ∇u·n)` for solution component `component` on the patch ring, with
/// `n` pointing away from the patch center.
pub fn boundary_flux(
    field: &dyn FieldSource,
    component: usize,
    patch: &CirclePatch,
    n_samples: usize,
) -> Result<Vec<(f64, f64)>> {
    if n_samples < 4 {
        return Err(config_err(format!("boundary flux needs at least 4 samples, got {n_samples}")));
    }
    if component >= field.n_outputs() {
        return Err(config_err(format!("field has no component {component}")));
    }
    let mut tape = crate::diffengine::Tape::new();
    let mut out = Vec::with_capacity(n_samples);
    for (t, p) in ring_points(patch, n_samples) {
        tape.clear();
        let (x, y) = tape.spatial(p[0], p[1]);
        let u = field.eval(&tape, x, y, Order::First)?;
        let f = u[component].dx().value() * t.cos() + u[component].dy().value() * t.sin();
        if !f.is_finite() {
            return Err(Error::Numeric {
                context: format!("boundary flux at angle {t}"),
            });
        }
        out.push((t, f));
    }
    Ok(out)
}

/// Mean of the flux values returned by [`boundary_flux`].
pub fn mean_flux(samples: &[(f64, f64)]) -> f64 {
    samples.iter().map(|s| s.1).sum::<f64>() / samples.len() as f64
}

/// Pressure force `−∮ p·n ds` summed over the patch rings by the trapezoid
/// rule; returns `(lift, drag)` = `(F_y, F_x)`.
pub fn lift_drag<F>(pressure: F, patches: &[CirclePatch], n_quad: usize) -> Result<(f64, f64)>
where
    F: Fn(Point) -> Result<f64>,
{
    if n_quad < 16 {
        return Err(config_err(format!("lift/drag quadrature needs at least 16 nodes, got {n_quad}")));
    }
    let ds = std::f64::consts::TAU * PATCH_RADIUS / n_quad as f64;
    let (mut fx, mut fy) = (0.0, 0.0);
    for patch in patches {
        for (t, p) in ring_points(patch, n_quad) {
            let v = pressure(p)?;
            if !v.is_finite() {
                return Err(Error::Numeric {
                    context: format!("pressure at ({}, {})", p[0], p[1]),
                });
            }
            fx -= v * t.cos() * ds;
            fy -= v * t.sin() * ds;
        }
    }
    Ok((fy, fx))
}

/// The standard `128 × 128` grid with points inside any patch removed.
pub fn metric_grid(roi: &Roi, patches: &[CirclePatch]) -> Result<Vec<Point>> {
    metric_grid_sized(roi, patches, METRIC_GRID)
}

pub fn metric_grid_sized(roi: &Roi, patches: &[CirclePatch], n: usize) -> Result<Vec<Point>> {
    Ok(uniform_grid(roi, n, n)?
        .into_iter()
        .filter(|&p| patches.iter().all(|c| signed_distance(c, p) >= 0.0))
        .collect())
}

/// One entry of `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub field: String,
    pub value: f64,
    pub config_hash: String,
}

impl MetricRecord {
    pub fn new(metric: impl Into<String>, field: impl Into<String>, value: f64, config_hash: &str) -> Self {
        MetricRecord {
            metric: metric.into(),
            field: field.into(),
            value,
            config_hash: config_hash.to_string(),
        }
    }
}

/// Hex SHA-256 of the configuration text.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn report_json(records: &[MetricRecord]) -> Result<String> {
    serde_json::to_string_pretty(records).map_err(|e| Error::Format(e.to_string()))
}

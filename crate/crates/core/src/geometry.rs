//! Circle patches with learnable centers: signed distances, the sharpened
//! indicator δ, boundary normals and boundary-ring sampling.
//!
//! Every patch has unit diameter. The indicator is
//! `δ(x, γ) = 1 / (1 + exp(−β·(‖x − γ‖ − 0.5)))`: about 0 inside the patch,
//! exactly 0.5 on its boundary and about 1 outside.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffengine::{stable_sigmoid, Var};
use crate::error::{config_err, Error, Result};
use crate::rng;
use crate::Point;

pub const PATCH_DIAMETER: f64 = 1.0;
pub const PATCH_RADIUS: f64 = 0.5;
pub const DEFAULT_BETA: f64 = 100.0;
pub const DEFAULT_K: f64 = 1.0;

/// `β·SDF` beyond which `δ` rounds to exactly 1 in double precision.
const SATURATION: f64 = 40.0;

/// Axis-aligned rectangle, in units of the patch diameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Roi {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let roi = Roi {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        roi.validate()?;
        Ok(roi)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.x_min < self.x_max) || !(self.y_min < self.y_max) {
            return Err(config_err(format!("degenerate region {self:?}")));
        }
        Ok(())
    }

    /// Square of side `2·half` centered at `c`.
    pub fn centered(c: Point, half: f64) -> Result<Self> {
        Roi::new(c[0] - half, c[0] + half, c[1] - half, c[1] + half)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> Point {
        [
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        ]
    }

    /// Closed containment with a tolerance of a few ulps of the extent.
    pub fn contains(&self, p: Point) -> bool {
        let tol = 1e-12 * (self.width() + self.height());
        p[0] >= self.x_min - tol
            && p[0] <= self.x_max + tol
            && p[1] >= self.y_min - tol
            && p[1] <= self.y_max + tol
    }

    pub fn contains_strictly(&self, p: Point) -> bool {
        p[0] > self.x_min && p[0] < self.x_max && p[1] > self.y_min && p[1] < self.y_max
    }

    pub fn padded(&self, d: f64) -> Roi {
        Roi {
            x_min: self.x_min - d,
            x_max: self.x_max + d,
            y_min: self.y_min - d,
            y_max: self.y_max + d,
        }
    }

    /// True when `self` lies inside `outer` with a positive margin on every side.
    pub fn strictly_inside(&self, outer: &Roi) -> bool {
        self.x_min > outer.x_min
            && self.x_max < outer.x_max
            && self.y_min > outer.y_min
            && self.y_max < outer.y_max
    }
}

/// A unit-diameter circle whose center `gamma` is learnable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CirclePatch {
    pub gamma: Point,
    pub diameter: f64,
}

impl CirclePatch {
    pub fn new(gamma: Point) -> Self {
        CirclePatch {
            gamma,
            diameter: PATCH_DIAMETER,
        }
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.diameter
    }
}

pub fn signed_distance(patch: &CirclePatch, x: Point) -> f64 {
    (x[0] - patch.gamma[0]).hypot(x[1] - patch.gamma[1]) - patch.radius()
}

pub fn delta(patch: &CirclePatch, x: Point, beta: f64) -> f64 {
    stable_sigmoid(beta * signed_distance(patch, x))
}

/// `∏ δ_i^k` over all patches (1 for an empty list).
pub fn composite_delta(patches: &[CirclePatch], x: Point, k: f64, beta: f64) -> f64 {
    patches
        .iter()
        .map(|p| delta(p, x, beta).powf(k))
        .product()
}

/// Outward radial unit normal `(x − γ)/‖x − γ‖`.
pub fn boundary_normal(patch: &CirclePatch, x: Point) -> Result<[f64; 2]> {
    let d = [x[0] - patch.gamma[0], x[1] - patch.gamma[1]];
    let r = d[0].hypot(d[1]);
    if r == 0.0 {
        return Err(Error::DegenerateNormal { x: x[0], y: x[1] });
    }
    Ok([d[0] / r, d[1] / r])
}

pub fn patch_pair_distance(a: &CirclePatch, b: &CirclePatch) -> f64 {
    (a.gamma[0] - b.gamma[0]).hypot(a.gamma[1] - b.gamma[1])
}

/// A point on one of the concentric rings of a patch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySample {
    pub position: Point,
    pub owner: usize,
    pub ring_radius: f64,
    /// `position − γ_owner` at creation; rings translate rigidly with γ.
    pub offset: [f64; 2],
}

impl BoundarySample {
    /// Position of this sample on a ring centered at `gamma`.
    pub fn recentered(&self, gamma: Point) -> Point {
        [gamma[0] + self.offset[0], gamma[1] + self.offset[1]]
    }

    /// Unit radial direction of the sample.
    pub fn direction(&self) -> [f64; 2] {
        [
            self.offset[0] / self.ring_radius,
            self.offset[1] / self.ring_radius,
        ]
    }
}

/// `n_per_ring` equiangular points (starting at angle 0) on every ring.
pub fn sample_rings(
    owner: usize,
    patch: &CirclePatch,
    radii: &[f64],
    n_per_ring: usize,
) -> Result<Vec<BoundarySample>> {
    if n_per_ring == 0 {
        return Err(config_err("ring sampling needs at least one point per ring"));
    }
    let mut out = Vec::with_capacity(radii.len() * n_per_ring);
    for &r in radii {
        if !(r > 0.0 && r <= patch.radius()) {
            return Err(config_err(format!(
                "ring radius {r} outside (0, {}]",
                patch.radius()
            )));
        }
        for i in 0..n_per_ring {
            let theta = 2.0 * PI * i as f64 / n_per_ring as f64;
            let offset = [r * theta.cos(), r * theta.sin()];
            out.push(BoundarySample {
                position: [patch.gamma[0] + offset[0], patch.gamma[1] + offset[1]],
                owner,
                ring_radius: r,
                offset,
            });
        }
    }
    Ok(out)
}

/// Rings for every patch, in patch order.
pub fn sample_all_rings(
    patches: &[CirclePatch],
    radii: &[f64],
    n_per_ring: usize,
) -> Result<Vec<BoundarySample>> {
    let mut out = Vec::new();
    for (i, p) in patches.iter().enumerate() {
        out.extend(sample_rings(i, p, radii, n_per_ring)?);
    }
    Ok(out)
}

/// Random initial centers: standard-normal draws squashed by a sigmoid and
/// mapped affinely onto the ROI box.
pub fn init_gamma(n_patches: usize, roi: &Roi, seed: u64) -> Vec<Point> {
    let mut rng = rng::stream(seed, rng::STREAM_GAMMA);
    (0..n_patches)
        .map(|_| {
            let rx: f64 = StandardNormal.sample(&mut rng);
            let ry: f64 = StandardNormal.sample(&mut rng);
            gamma_from_raw([rx, ry], roi)
        })
        .collect()
}

/// The sigmoid normalization that maps raw values onto the ROI.
pub fn gamma_from_raw(raw: [f64; 2], roi: &Roi) -> Point {
    [
        roi.x_min + stable_sigmoid(raw[0]) * roi.width(),
        roi.y_min + stable_sigmoid(raw[1]) * roi.height(),
    ]
}

// --- tape versions --------------------------------------------------------

pub fn sdf_var<'t>(gamma: [Var<'t>; 2], x: [Var<'t>; 2]) -> Var<'t> {
    (x[0] - gamma[0]).norm2(x[1] - gamma[1]) - PATCH_RADIUS
}

pub fn delta_var<'t>(gamma: [Var<'t>; 2], x: [Var<'t>; 2], beta: f64) -> Var<'t> {
    (sdf_var(gamma, x) * beta).sigmoid()
}

/// `∏ δ_i^k` on the tape. Patches for which `β·SDF` exceeds the saturation
/// threshold contribute a factor of exactly 1 and are left off the tape.
/// Returns `None` when every patch is saturated (the product is 1).
pub fn composite_delta_var<'t>(
    gammas: &[[Var<'t>; 2]],
    x: [Var<'t>; 2],
    k: f64,
    beta: f64,
) -> Option<Var<'t>> {
    let (px, py) = (x[0].value(), x[1].value());
    let mut acc: Option<Var<'t>> = None;
    for g in gammas {
        let sdf = (px - g[0].value()).hypot(py - g[1].value()) - PATCH_RADIUS;
        if beta * sdf > SATURATION {
            continue;
        }
        let d = delta_var(*g, x, beta);
        let d = if k == 1.0 { d } else { d.powf(k) };
        acc = Some(match acc {
            Some(a) => a * d,
            None => d,
        });
    }
    acc
}

/// Radial unit normal on the tape.
pub fn normal_var<'t>(gamma: [Var<'t>; 2], x: [Var<'t>; 2]) -> [Var<'t>; 2] {
    let dx = x[0] - gamma[0];
    let dy = x[1] - gamma[1];
    let r = dx.norm2(dy);
    [dx / r, dy / r]
}

// --- export ---------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleRecord {
    pub center_x: f64,
    pub center_y: f64,
    pub diameter: f64,
}

pub fn topology_records(patches: &[CirclePatch]) -> Vec<CircleRecord> {
    patches
        .iter()
        .map(|p| CircleRecord {
            center_x: p.gamma[0],
            center_y: p.gamma[1],
            diameter: p.diameter,
        })
        .collect()
}

pub fn topology_json(patches: &[CirclePatch]) -> String {
    serde_json::to_string_pretty(&topology_records(patches)).expect("circle records serialize")
}

pub fn parse_topology_json(text: &str) -> Result<Vec<CirclePatch>> {
    let records: Vec<CircleRecord> =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("topology json: {e}")))?;
    Ok(records
        .into_iter()
        .map(|r| CirclePatch {
            gamma: [r.center_x, r.center_y],
            diameter: r.diameter,
        })
        .collect())
}

/// SVG drawing of the circles over the ROI viewport (y axis pointing up).
pub fn topology_svg(patches: &[CirclePatch], roi: &Roi) -> String {
    let px_per_unit = 100.0;
    let w = roi.width() * px_per_unit;
    let h = roi.height() * px_per_unit;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="{} {} {} {}">"#,
        roi.x_min,
        -roi.y_max,
        roi.width(),
        roi.height()
    );
    let _ = writeln!(
        s,
        r#"  <rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black" stroke-width="0.01"/>"#,
        roi.x_min,
        -roi.y_max,
        roi.width(),
        roi.height()
    );
    for p in patches {
        let _ = writeln!(
            s,
            r#"  <circle cx="{}" cy="{}" r="{}" fill="gray" fill-opacity="0.6" stroke="black" stroke-width="0.01"/>"#,
            p.gamma[0],
            -p.gamma[1],
            p.radius()
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffengine::{check_against_finite_differences, Seed, Tape};
    use proptest::prelude::*;

    #[test]
    fn signed_distance_examples() {
        let p = CirclePatch::new([0.0, 0.0]);
        assert_eq!(signed_distance(&p, [0.5, 0.0]), 0.0);
        assert_eq!(signed_distance(&p, [0.0, 0.0]), -0.5);
        assert_eq!(signed_distance(&CirclePatch::new([1.0, 1.0]), [1.0, 2.0]), 0.5);
    }

    #[test]
    fn delta_examples() {
        let p = CirclePatch::new([0.0, 0.0]);
        assert_eq!(delta(&p, [0.5, 0.0], 100.0), 0.5);
        assert!((delta(&p, [1.0, 0.0], 100.0) - 1.0).abs() < 1e-15);
        // SDF = −0.1 → 1/(1 + e^10)
        let d = delta(&p, [0.4, 0.0], 100.0);
        let oracle = 1.0 / (1.0 + 10f64.exp());
        assert!((d - oracle).abs() < 1e-15);
        assert!((d - 4.5398e-5).abs() < 1e-9);
    }

    #[test]
    fn composite_delta_examples() {
        let a = CirclePatch::new([0.0, 0.0]);
        let b = CirclePatch::new([3.0, 0.0]);
        assert!(composite_delta(&[a], [0.8, 0.0], 1.0, 100.0) > 1.0 - 1e-8);
        assert!(composite_delta(&[a, b], [0.0, 0.0], 1.0, 100.0) < 1e-15);
        assert_eq!(composite_delta(&[a], [0.5, 0.0], 2.0, 100.0), 0.25);
    }

    #[test]
    fn normal_examples() {
        let p = CirclePatch::new([0.0, 0.0]);
        assert_eq!(boundary_normal(&p, [0.5, 0.0]).unwrap(), [1.0, 0.0]);
        assert_eq!(boundary_normal(&p, [0.0, -0.3]).unwrap(), [0.0, -1.0]);
        assert!(matches!(
            boundary_normal(&p, [0.0, 0.0]),
            Err(Error::DegenerateNormal { .. })
        ));
    }

    #[test]
    fn ring_counts_and_positions() {
        let p = CirclePatch::new([0.0, 0.0]);
        let radii = [0.5, 0.4, 0.3, 0.2];
        assert_eq!(sample_rings(0, &p, &radii, 128).unwrap().len(), 512);
        assert_eq!(sample_rings(0, &p, &radii, 256).unwrap().len(), 1024);
        let four = sample_rings(0, &p, &[0.5], 4).unwrap();
        let expected = [[0.5, 0.0], [0.0, 0.5], [-0.5, 0.0], [0.0, -0.5]];
        for (s, e) in four.iter().zip(expected) {
            assert!((s.position[0] - e[0]).abs() < 1e-15);
            assert!((s.position[1] - e[1]).abs() < 1e-15);
        }
        assert!(sample_rings(0, &p, &[0.6], 4).is_err());
        assert!(sample_rings(0, &p, &[0.0], 4).is_err());
    }

    #[test]
    fn init_gamma_is_deterministic_and_inside() {
        let roi = Roi::new(-1.1, 1.1, -2.0, 3.0).unwrap();
        let a = init_gamma(16, &roi, 5);
        let b = init_gamma(16, &roi, 5);
        assert_eq!(a, b);
        assert!(a.iter().all(|g| roi.contains_strictly(*g)));
        assert_eq!(gamma_from_raw([0.0, 0.0], &roi), roi.center());
    }

    #[test]
    fn pair_distance_examples() {
        let a = CirclePatch::new([0.0, 0.0]);
        assert_eq!(patch_pair_distance(&a, &CirclePatch::new([2.5, 0.0])), 2.5);
        assert_eq!(patch_pair_distance(&a, &a), 0.0);
        assert_eq!(patch_pair_distance(&a, &CirclePatch::new([3.0, 4.0])), 5.0);
    }

    #[test]
    fn delta_gamma_gradient_matches_finite_differences() {
        for &(x, y) in &[(0.45, 0.1), (0.2, -0.5), (-0.55, 0.12), (0.1, 0.3)] {
            let err = check_against_finite_differences(
                &[Seed::Param(0.03), Seed::Param(-0.02)],
                1e-6,
                |t, s| {
                    let p = [t.var(x), t.var(y)];
                    delta_var([s[0], s[1]], p, 100.0)
                },
            )
            .unwrap();
            assert!(err < 1e-5, "({x},{y}): {err}");
        }
    }

    #[test]
    fn tape_composite_matches_plain() {
        let patches = [CirclePatch::new([0.1, 0.0]), CirclePatch::new([0.9, 0.4])];
        let tape = Tape::new();
        let gs: Vec<[Var<'_>; 2]> = patches
            .iter()
            .map(|p| [tape.var(p.gamma[0]), tape.var(p.gamma[1])])
            .collect();
        for &x in &[[0.5, 0.1], [0.55, 0.2], [0.3, 0.3]] {
            let xv = [tape.var(x[0]), tape.var(x[1])];
            let v = composite_delta_var(&gs, xv, 2.0, 100.0).map_or(1.0, |v| v.value());
            assert!((v - composite_delta(&patches, x, 2.0, 100.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn json_roundtrip() {
        let patches = vec![CirclePatch::new([0.3, -0.2])];
        let back = parse_topology_json(&topology_json(&patches)).unwrap();
        assert_eq!(back, patches);
        let svg = topology_svg(&patches, &Roi::centered([0.0, 0.0], 1.1).unwrap());
        assert!(svg.contains("<circle"));
    }

    proptest! {
        #[test]
        fn delta_is_antisymmetric_and_monotone(s in -0.5f64..0.5, t in -0.5f64..0.5) {
            let p = CirclePatch::new([0.0, 0.0]);
            let at = |sdf: f64| stable_sigmoid(100.0 * sdf);
            prop_assert!((at(s) + at(-s) - 1.0).abs() < 1e-12);
            if s < t {
                prop_assert!(at(s) <= at(t));
            }
            let d = delta(&p, [0.5 + s, 0.0], 100.0);
            prop_assert!((d - at(s)).abs() < 1e-12);
        }

        #[test]
        fn rings_translate_with_gamma(vx in -3.0f64..3.0, vy in -3.0f64..3.0) {
            let p = CirclePatch::new([0.2, -0.1]);
            let q = CirclePatch::new([0.2 + vx, -0.1 + vy]);
            let a = sample_rings(0, &p, &[0.5, 0.3], 16).unwrap();
            let b = sample_rings(0, &q, &[0.5, 0.3], 16).unwrap();
            for (sa, sb) in a.iter().zip(&b) {
                prop_assert_eq!(sa.offset, sb.offset);
                let moved = sa.recentered(q.gamma);
                prop_assert!((moved[0] - sb.position[0]).abs() < 1e-12);
                prop_assert!((moved[1] - sb.position[1]).abs() < 1e-12);
            }
        }

        #[test]
        fn far_patch_barely_changes_composite(fx in 3.0f64..10.0, fy in -10.0f64..10.0) {
            let near = CirclePatch::new([0.0, 0.0]);
            let far = CirclePatch::new([fx, fy]);
            let x = [0.8, 0.0];
            let one = composite_delta(&[near], x, 1.0, 100.0);
            let two = composite_delta(&[near, far], x, 1.0, 100.0);
            prop_assert!((one - two).abs() < 1e-8);
            prop_assert!((two - 1.0).abs() < 1e-8);
        }
    }
}

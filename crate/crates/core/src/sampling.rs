//! Collocation, measurement and boundary point sets.

use std::io::{Read, Write};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::geometry::{BoundarySample, Roi, PATCH_DIAMETER};
use crate::rng;
use crate::Point;

const CONTAIN_TOL: f64 = 1e-9;

/// A measured (or prescribed) value. Components may be missing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub point: Point,
    pub values: Vec<Option<f64>>,
}

impl Measurement {
    pub fn full(point: Point, values: &[f64]) -> Self {
        Measurement {
            point,
            values: values.iter().map(|&v| Some(v)).collect(),
        }
    }

    /// Only component `k` (out of `n`) is prescribed.
    pub fn single(point: Point, n: usize, k: usize, value: f64) -> Self {
        let mut values = vec![None; n];
        values[k] = Some(value);
        Measurement { point, values }
    }

    pub fn n_present(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Constraint `u_k(a) − u_k(b) = offset` for each listed component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPair {
    pub a: Point,
    pub b: Point,
    pub components: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub roi: Roi,
    pub core: Roi,
    pub collocation: Vec<Point>,
    pub measurements: Vec<Measurement>,
    pub periodic: Vec<PeriodicPair>,
    pub boundary: Vec<BoundarySample>,
    /// When set, measurements must lie in `roi ∖ core`.
    pub outside_core: bool,
}

impl SampleSet {
    pub fn new(roi: Roi, core: Roi) -> Self {
        SampleSet {
            roi,
            core,
            collocation: Vec::new(),
            measurements: Vec::new(),
            periodic: Vec::new(),
            boundary: Vec::new(),
            outside_core: false,
        }
    }

    /// Check every construction invariant.
    pub fn validate(&self) -> Result<()> {
        self.roi.validate()?;
        self.core.validate()?;
        if !self.core_inside_roi() {
            return Err(config_err("core region must lie inside the ROI"));
        }
        for p in &self.collocation {
            check_finite(*p)?;
            if !self.core.contains(*p) {
                return Err(config_err(format!("collocation point {p:?} outside the core region")));
            }
        }
        for m in &self.measurements {
            check_finite(m.point)?;
            if !self.roi.contains(m.point) {
                return Err(config_err(format!("measurement {:?} outside the ROI", m.point)));
            }
            if self.outside_core && self.core.contains_strictly(m.point) {
                return Err(config_err(format!("measurement {:?} inside the core region", m.point)));
            }
            if m.values.iter().flatten().any(|v| !v.is_finite()) {
                return Err(config_err(format!("non-finite measurement value at {:?}", m.point)));
            }
        }
        for pair in &self.periodic {
            for p in [pair.a, pair.b] {
                check_finite(p)?;
                if !self.roi.contains(p) {
                    return Err(config_err(format!("periodic point {p:?} outside the ROI")));
                }
            }
        }
        Ok(())
    }

    fn core_inside_roi(&self) -> bool {
        self.core.x_min >= self.roi.x_min - CONTAIN_TOL
            && self.core.x_max <= self.roi.x_max + CONTAIN_TOL
            && self.core.y_min >= self.roi.y_min - CONTAIN_TOL
            && self.core.y_max <= self.roi.y_max + CONTAIN_TOL
    }

    /// Largest component count over all measurements.
    pub fn n_components(&self) -> usize {
        self.measurements.iter().map(|m| m.values.len()).max().unwrap_or(0)
    }

    /// Write `x,y,role,owner,ring_radius,v0..v{n-1}` rows.
    pub fn write_csv<W: Write>(&self, w: W, n_components: usize) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["x".to_string(), "y".into(), "role".into(), "owner".into(), "ring_radius".into()];
        header.extend((0..n_components).map(|k| format!("v{k}")));
        out.write_record(&header).map_err(csv_err)?;
        let blank = |n: usize| vec![String::new(); n];
        for p in &self.collocation {
            let mut rec = vec![fmt(p[0]), fmt(p[1]), "collocation".into(), String::new(), String::new()];
            rec.extend(blank(n_components));
            out.write_record(&rec).map_err(csv_err)?;
        }
        for m in &self.measurements {
            let mut rec = vec![fmt(m.point[0]), fmt(m.point[1]), "measurement".into(), String::new(), String::new()];
            for k in 0..n_components {
                rec.push(m.values.get(k).copied().flatten().map(fmt).unwrap_or_default());
            }
            out.write_record(&rec).map_err(csv_err)?;
        }
        for b in &self.boundary {
            let mut rec = vec![
                fmt(b.position[0]),
                fmt(b.position[1]),
                "boundary".into(),
                b.owner.to_string(),
                fmt(b.ring_radius),
            ];
            rec.extend(blank(n_components));
            out.write_record(&rec).map_err(csv_err)?;
        }
        for pair in &self.periodic {
            for (role, p) in [("periodic_a", pair.a), ("periodic_b", pair.b)] {
                let mut rec = vec![fmt(p[0]), fmt(p[1]), role.into(), String::new(), String::new()];
                for k in 0..n_components {
                    rec.push(if pair.components.contains(&k) { "0".into() } else { String::new() });
                }
                out.write_record(&rec).map_err(csv_err)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Read rows written by [`SampleSet::write_csv`] (or produced externally)
    /// into a set with the given regions. Boundary rows need `owner` and
    /// `ring_radius`; their offsets are taken relative to `centers[owner]`.
    pub fn read_csv<R: Read>(r: R, roi: Roi, core: Roi, centers: &[Point]) -> Result<SampleSet> {
        let mut set = SampleSet::new(roi, core);
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (cx, cy, crole) = match (col("x"), col("y"), col("role")) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(config_err("sample CSV needs x, y and role columns")),
        };
        let (cowner, cring) = (col("owner"), col("ring_radius"));
        let value_cols: Vec<usize> = (0..)
            .map(|k| col(&format!("v{k}")))
            .take_while(Option::is_some)
            .flatten()
            .collect();
        let mut pending_a: Option<(Point, Vec<usize>)> = None;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let row = line + 2;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| config_err(format!("sample CSV line {row}: bad number in column {}", i + 1)))
            };
            let opt = |i: usize| -> Result<Option<f64>> {
                match rec.get(i).map(str::trim) {
                    None | Some("") => Ok(None),
                    Some(_) => num(i).map(Some),
                }
            };
            let p = [num(cx)?, num(cy)?];
            let values: Vec<Option<f64>> = value_cols.iter().map(|&i| opt(i)).collect::<Result<_>>()?;
            match rec.get(crole).unwrap_or("").trim() {
                "collocation" => set.collocation.push(p),
                "measurement" => set.measurements.push(Measurement { point: p, values }),
                "boundary" => {
                    let owner = cowner
                        .and_then(|i| rec.get(i))
                        .and_then(|s| s.trim().parse::<usize>().ok())
                        .ok_or_else(|| config_err(format!("sample CSV line {row}: boundary row needs owner")))?;
                    let ring = cring
                        .map(num)
                        .transpose()?
                        .ok_or_else(|| config_err(format!("sample CSV line {row}: boundary row needs ring_radius")))?;
                    let c = centers
                        .get(owner)
                        .ok_or_else(|| config_err(format!("sample CSV line {row}: unknown owner {owner}")))?;
                    set.boundary.push(BoundarySample {
                        position: p,
                        owner,
                        ring_radius: ring,
                        offset: [p[0] - c[0], p[1] - c[1]],
                    });
                }
                "periodic_a" => {
                    let comps = values
                        .iter()
                        .enumerate()
                        .filter_map(|(k, v)| v.map(|_| k))
                        .collect();
                    pending_a = Some((p, comps));
                }
                "periodic_b" => {
                    let (a, components) = pending_a
                        .take()
                        .ok_or_else(|| config_err(format!("sample CSV line {row}: periodic_b without periodic_a")))?;
                    set.periodic.push(PeriodicPair { a, b: p, components });
                }
                other => return Err(config_err(format!("sample CSV line {row}: unknown role `{other}`"))),
            }
        }
        if pending_a.is_some() {
            return Err(config_err("sample CSV ends with an unpaired periodic_a row"));
        }
        set.validate()?;
        Ok(set)
    }
}

fn check_finite(p: Point) -> Result<()> {
    if p[0].is_finite() && p[1].is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("non-finite sample point {p:?}")))
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("CSV: {other:?}")),
    }
}

/// Numbers in every text artifact use 17 significant digits.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// `nx·ny` points including the corners, x varying fastest.
pub fn uniform_grid(region: &Roi, nx: usize, ny: usize) -> Result<Vec<Point>> {
    region.validate()?;
    if nx < 2 || ny < 2 {
        return Err(config_err(format!("grid needs at least 2×2 points, got {nx}×{ny}")));
    }
    let xs = axis(region.x_min, region.x_max, nx);
    let ys = axis(region.y_min, region.y_max, ny);
    Ok(ys.iter().flat_map(|&y| xs.iter().map(move |&x| [x, y])).collect())
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + i as f64 * h })
        .collect()
}

/// `n` i.i.d. uniform points in the region.
pub fn random_points(region: &Roi, n: usize, seed: u64) -> Vec<Point> {
    let mut rng = rng::stream(seed, rng::STREAM_POINTS);
    (0..n)
        .map(|_| {
            [
                rng.gen_range(region.x_min..region.x_max),
                rng.gen_range(region.y_min..region.y_max),
            ]
        })
        .collect()
}

/// Uniform random subset without replacement, in draw order.
pub fn subsample<T: Clone>(items: &[T], n: usize, seed: u64) -> Result<Vec<T>> {
    if n > items.len() {
        return Err(config_err(format!("cannot draw {n} samples from {}", items.len())));
    }
    let mut rng = rng::stream(seed, rng::STREAM_SUBSAMPLE);
    Ok(index::sample(&mut rng, items.len(), n)
        .into_iter()
        .map(|i| items[i].clone())
        .collect())
}

/// `(roi, core)` from patch centers: their bounding box padded by `1.1·D`
/// and `1.0·D` respectively.
pub fn build_multi_patch_roi(centers: &[Point]) -> Result<(Roi, Roi)> {
    if centers.is_empty() {
        return Err(config_err("at least one patch center is required"));
    }
    let mut ext = Roi {
        x_min: f64::INFINITY,
        x_max: f64::NEG_INFINITY,
        y_min: f64::INFINITY,
        y_max: f64::NEG_INFINITY,
    };
    for c in centers {
        check_finite(*c)?;
        ext.x_min = ext.x_min.min(c[0]);
        ext.x_max = ext.x_max.max(c[0]);
        ext.y_min = ext.y_min.min(c[1]);
        ext.y_max = ext.y_max.max(c[1]);
    }
    Ok((ext.padded(1.1 * PATCH_DIAMETER), ext.padded(PATCH_DIAMETER)))
}

/// `n` equally spaced points along one edge of the region, corners included.
pub fn edge_points(region: &Roi, edge: Edge, n: usize) -> Vec<Point> {
    if n == 0 {
        return Vec::new();
    }
    let t = if n == 1 { vec![0.5] } else { axis(0.0, 1.0, n) };
    t.into_iter()
        .map(|s| match edge {
            Edge::Left => [region.x_min, region.y_min + s * region.height()],
            Edge::Right => [region.x_max, region.y_min + s * region.height()],
            Edge::Bottom => [region.x_min + s * region.width(), region.y_min],
            Edge::Top => [region.x_min + s * region.width(), region.y_max],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_rings, CirclePatch};
    use proptest::prelude::*;

    fn unit() -> Roi {
        Roi::new(0.0, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn grid_examples() {
        assert_eq!(
            uniform_grid(&unit(), 2, 2).unwrap(),
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
        );
        let r = Roi::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let g = uniform_grid(&r, 120, 120).unwrap();
        assert_eq!(g.len(), 14_400);
        assert!((g[1][0] - g[0][0] - 2.0 / 119.0).abs() < 1e-15);
        assert_eq!(g[119], [1.0, -1.0]);
        assert!(uniform_grid(&r, 1, 5).is_err());
    }

    #[test]
    fn random_and_subsample() {
        assert!(random_points(&unit(), 0, 1).is_empty());
        let a = random_points(&unit(), 50, 4);
        assert!(a.iter().all(|p| unit().contains(*p)));
        assert_eq!(a, random_points(&unit(), 50, 4));
        let r = Roi::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let g = uniform_grid(&r, 120, 120).unwrap();
        let s = subsample(&g, 1638, 7).unwrap();
        assert_eq!(s.len(), 1638);
        let items: Vec<u32> = (0..20).collect();
        let mut all = subsample(&items, 20, 3).unwrap();
        all.sort();
        assert_eq!(all, items);
        assert_eq!(subsample(&items, 10, 1).unwrap(), subsample(&items, 10, 1).unwrap());
        assert_ne!(subsample(&items, 10, 1).unwrap(), subsample(&items, 10, 2).unwrap());
        assert!(subsample(&items, 21, 1).is_err());
    }

    #[test]
    fn multi_patch_roi() {
        let (roi, core) = build_multi_patch_roi(&[[0.0, 0.0]]).unwrap();
        assert!((roi.width() - 2.2).abs() < 1e-15 && (roi.height() - 2.2).abs() < 1e-15);
        let (roi, core2) = build_multi_patch_roi(&[[-1.25, 0.0], [1.25, 0.0]]).unwrap();
        assert!((core2.width() - 4.5).abs() < 1e-15);
        assert!(core2.strictly_inside(&roi));
        assert!(core.width() < 2.2);
    }

    #[test]
    fn validation_rejects_bad_sets() {
        let roi = Roi::new(-2.0, 2.0, -2.0, 2.0).unwrap();
        let core = Roi::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let mut s = SampleSet::new(roi, core);
        s.collocation.push([1.5, 0.0]);
        assert!(s.validate().is_err());
        s.collocation.clear();
        s.outside_core = true;
        s.measurements.push(Measurement::full([0.0, 0.0], &[1.0]));
        assert!(s.validate().is_err());
        s.measurements[0].point = [1.5, 1.5];
        s.validate().unwrap();
    }

    #[test]
    fn csv_roundtrip() {
        let roi = Roi::new(-2.0, 2.0, -2.0, 2.0).unwrap();
        let core = Roi::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let mut s = SampleSet::new(roi, core);
        s.collocation = uniform_grid(&core, 3, 3).unwrap();
        s.measurements.push(Measurement::full([1.5, -1.25], &[0.1, 1.0 / 3.0]));
        s.measurements.push(Measurement::single([-1.5, 2.0], 2, 1, -0.7));
        s.periodic.push(PeriodicPair {
            a: [0.0, -2.0],
            b: [0.0, 2.0],
            components: vec![0, 1],
        });
        let patch = CirclePatch::new([0.1, 0.2]);
        s.boundary = sample_rings(0, &patch, &[0.5, 0.3], 4).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, 2).unwrap();
        let back = SampleSet::read_csv(buf.as_slice(), roi, core, &[patch.gamma]).unwrap();
        assert_eq!(back.collocation, s.collocation);
        assert_eq!(back.measurements, s.measurements);
        assert_eq!(back.periodic, s.periodic);
        assert_eq!(back.boundary.len(), 8);
        for (a, b) in back.boundary.iter().zip(&s.boundary) {
            assert_eq!(a.position, b.position);
            assert!((a.offset[0] - b.offset[0]).abs() < 1e-15);
        }
        let bad = "x,y,role\n0,0,bogus\n";
        assert!(SampleSet::read_csv(bad.as_bytes(), roi, core, &[]).is_err());
    }

    proptest! {
        #[test]
        fn grid_spacing_is_uniform(nx in 2usize..40, ny in 2usize..40, w in 0.5f64..20.0) {
            let r = Roi::new(-w, w, 0.0, w).unwrap();
            let g = uniform_grid(&r, nx, ny).unwrap();
            prop_assert_eq!(g.len(), nx * ny);
            prop_assert_eq!(g[0], [r.x_min, r.y_min]);
            prop_assert_eq!(g[nx * ny - 1], [r.x_max, r.y_max]);
            let h = (r.x_max - r.x_min) / (nx - 1) as f64;
            for i in 1..nx {
                prop_assert!((g[i][0] - g[i - 1][0] - h).abs() < 1e-12 * w);
            }
        }
    }
}

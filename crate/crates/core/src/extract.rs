//! Shape extraction from a density field: threshold, keep the largest
//! connected component, trace its outline with marching squares.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::geometry::Roi;
use crate::Point;

/// Scalar samples on a uniform grid, x index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    pub roi: Roi,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(roi: Roi, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if nx < 2 || ny < 2 || values.len() != nx * ny {
            return Err(config_err(format!(
                "grid {nx}×{ny} does not fit {} values",
                values.len()
            )));
        }
        Ok(ScalarGrid { roi, nx, ny, values })
    }

    /// Sample `f` at the grid nodes.
    pub fn from_fn(roi: Roi, nx: usize, ny: usize, f: impl FnMut(Point) -> Result<f64>) -> Result<Self> {
        let pts = crate::sampling::uniform_grid(&roi, nx, ny)?;
        let values = pts.into_iter().map(f).collect::<Result<Vec<f64>>>()?;
        ScalarGrid::new(roi, nx, ny, values)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    fn node(&self, i: f64, j: f64) -> Point {
        let hx = self.roi.width() / (self.nx - 1) as f64;
        let hy = self.roi.height() / (self.ny - 1) as f64;
        [self.roi.x_min + i * hx, self.roi.y_min + j * hy]
    }
}

/// Extracted outline of the largest super-threshold region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityTopology {
    pub threshold: f64,
    /// Number of grid nodes in the kept component.
    pub n_nodes: usize,
    /// Closed polylines; the first one is the longest.
    pub contours: Vec<Vec<Point>>,
}

impl DensityTopology {
    pub fn is_empty(&self) -> bool {
        self.n_nodes == 0
    }
}

/// Labels of the 4-connected components of `mask`, largest first.
fn largest_component(mask: &[bool], nx: usize, ny: usize) -> Vec<bool> {
    let mut label = vec![usize::MAX; mask.len()];
    let mut best: Option<(usize, usize)> = None;
    let mut next = 0;
    for start in 0..mask.len() {
        if !mask[start] || label[start] != usize::MAX {
            continue;
        }
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        label[start] = next;
        while let Some(k) = queue.pop_front() {
            size += 1;
            let (i, j) = (k % nx, k / nx);
            let mut visit = |n: usize| {
                if mask[n] && label[n] == usize::MAX {
                    label[n] = next;
                    queue.push_back(n);
                }
            };
            if i > 0 {
                visit(k - 1);
            }
            if i + 1 < nx {
                visit(k + 1);
            }
            if j > 0 {
                visit(k - nx);
            }
            if j + 1 < ny {
                visit(k + nx);
            }
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((next, size));
        }
        next += 1;
    }
    match best {
        Some((id, _)) => label.iter().map(|&l| l == id).collect(),
        None => vec![false; mask.len()],
    }
}

/// Marching-squares segments of the level set `f = level` of `f`, where each
/// endpoint is identified by the grid edge it lies on.
type EdgeId = (usize, usize, u8);

fn marching_squares(g: &ScalarGrid, f: &[f64], level: f64) -> Vec<((EdgeId, Point), (EdgeId, Point))> {
    let nx = g.nx;
    let val = |i: usize, j: usize| f[j * nx + i];
    // point on horizontal edge (i,j)-(i+1,j) or vertical edge (i,j)-(i,j+1)
    let cross = |e: EdgeId| -> Point {
        let (i, j, dir) = e;
        let (a, b) = if dir == 0 { (val(i, j), val(i + 1, j)) } else { (val(i, j), val(i, j + 1)) };
        let t = ((level - a) / (b - a)).clamp(0.0, 1.0);
        if dir == 0 {
            g.node(i as f64 + t, j as f64)
        } else {
            g.node(i as f64, j as f64 + t)
        }
    };
    let mut segs = Vec::new();
    for j in 0..g.ny - 1 {
        for i in 0..nx - 1 {
            let c = [val(i, j), val(i + 1, j), val(i + 1, j + 1), val(i, j + 1)];
            let inside: Vec<bool> = c.iter().map(|&v| v > level).collect();
            let idx = inside.iter().enumerate().fold(0, |acc, (k, &b)| acc | (usize::from(b) << k));
            if idx == 0 || idx == 15 {
                continue;
            }
            let bottom = (i, j, 0u8);
            let right = (i + 1, j, 1u8);
            let top = (i, j + 1, 0u8);
            let left = (i, j, 1u8);
            let center_inside = c.iter().sum::<f64>() / 4.0 > level;
            let pairs: Vec<(EdgeId, EdgeId)> = match idx {
                1 | 14 => vec![(left, bottom)],
                2 | 13 => vec![(bottom, right)],
                3 | 12 => vec![(left, right)],
                4 | 11 => vec![(right, top)],
                6 | 9 => vec![(bottom, top)],
                7 | 8 => vec![(left, top)],
                5 => {
                    if center_inside {
                        vec![(left, top), (bottom, right)]
                    } else {
                        vec![(left, bottom), (right, top)]
                    }
                }
                10 => {
                    if center_inside {
                        vec![(left, bottom), (right, top)]
                    } else {
                        vec![(left, top), (bottom, right)]
                    }
                }
                _ => unreachable!(),
            };
            for (a, b) in pairs {
                segs.push(((a, cross(a)), (b, cross(b))));
            }
        }
    }
    segs
}

/// Chain segments that share edge endpoints into polylines.
fn chain(segs: Vec<((EdgeId, Point), (EdgeId, Point))>) -> Vec<Vec<Point>> {
    let mut by_end: HashMap<EdgeId, Vec<usize>> = HashMap::new();
    for (k, (a, b)) in segs.iter().enumerate() {
        by_end.entry(a.0).or_default().push(k);
        by_end.entry(b.0).or_default().push(k);
    }
    let mut used = vec![false; segs.len()];
    let mut lines = Vec::new();
    for start in 0..segs.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segs[start];
        let mut line = vec![a.1, b.1];
        let mut tip = b.0;
        loop {
            let next = by_end.get(&tip).and_then(|v| v.iter().copied().find(|&k| !used[k]));
            let Some(k) = next else { break };
            used[k] = true;
            let (p, q) = segs[k];
            let (far, far_id) = if p.0 == tip { (q.1, q.0) } else { (p.1, p.0) };
            line.push(far);
            tip = far_id;
        }
        lines.push(line);
    }
    lines.sort_by_key(|l| std::cmp::Reverse(l.len()));
    lines
}

/// Threshold `density`, keep its largest 4-connected component, and trace the
/// component outline.
pub fn extract_density_topology(density: &ScalarGrid, threshold: f64) -> Result<DensityTopology> {
    if !threshold.is_finite() {
        return Err(config_err("threshold must be finite"));
    }
    let mask: Vec<bool> = density.values.iter().map(|&v| v > threshold).collect();
    let keep = largest_component(&mask, density.nx, density.ny);
    let n_nodes = keep.iter().filter(|&&k| k).count();
    if n_nodes == 0 {
        return Ok(DensityTopology {
            threshold,
            n_nodes,
            contours: Vec::new(),
        });
    }
    // nodes above threshold outside the kept component are pushed to zero so
    // the traced level set encloses only the kept component
    let lo = density.values.iter().fold(f64::INFINITY, |m, &v| m.min(v)).min(threshold - 1.0);
    let f: Vec<f64> = density
        .values
        .iter()
        .zip(mask.iter().zip(&keep))
        .map(|(&v, (&m, &k))| if m && !k { lo } else { v })
        .collect();
    // pad with a ring of low values so outlines touching the ROI edge close
    let (nx, ny) = (density.nx + 2, density.ny + 2);
    let hx = density.roi.width() / (density.nx - 1) as f64;
    let hy = density.roi.height() / (density.ny - 1) as f64;
    let roi = Roi {
        x_min: density.roi.x_min - hx,
        x_max: density.roi.x_max + hx,
        y_min: density.roi.y_min - hy,
        y_max: density.roi.y_max + hy,
    };
    let mut padded = vec![lo; nx * ny];
    for j in 0..density.ny {
        for i in 0..density.nx {
            padded[(j + 1) * nx + i + 1] = f[j * density.nx + i];
        }
    }
    let grid = ScalarGrid {
        roi,
        nx,
        ny,
        values: Vec::new(),
    };
    let contours = chain(marching_squares(&grid, &padded, threshold))
        .into_iter()
        .map(|line| {
            line.into_iter()
                .map(|p| {
                    [
                        p[0].clamp(density.roi.x_min, density.roi.x_max),
                        p[1].clamp(density.roi.y_min, density.roi.y_max),
                    ]
                })
                .collect()
        })
        .collect();
    Ok(DensityTopology {
        threshold,
        n_nodes,
        contours,
    })
}

/// Outline per threshold, for choosing one by inspection.
pub fn threshold_sweep(density: &ScalarGrid, thresholds: &[f64]) -> Result<Vec<DensityTopology>> {
    thresholds.iter().map(|&t| extract_density_topology(density, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(n: usize, c: Point, r: f64) -> ScalarGrid {
        let roi = Roi::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        ScalarGrid::from_fn(roi, n, n, |p| {
            Ok(f64::from(u8::from((p[0] - c[0]).hypot(p[1] - c[1]) < r)))
        })
        .unwrap()
    }

    #[test]
    fn zero_density_is_empty() {
        let roi = Roi::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let g = ScalarGrid::new(roi, 4, 4, vec![0.0; 16]).unwrap();
        let t = extract_density_topology(&g, 0.5).unwrap();
        assert!(t.is_empty());
        assert!(t.contours.is_empty());
    }

    #[test]
    fn disk_outline_is_within_one_cell() {
        let n = 128;
        let c = [0.1, -0.15];
        let g = disk(n, c, 0.5);
        let h = 2.0 / (n - 1) as f64;
        let t = extract_density_topology(&g, 0.5).unwrap();
        assert_eq!(t.contours.len(), 1);
        let line = &t.contours[0];
        assert!(line.len() > 100);
        assert_eq!(line.first(), line.last());
        for p in line {
            let r = (p[0] - c[0]).hypot(p[1] - c[1]);
            assert!((r - 0.5).abs() < h, "{r}");
        }
    }

    #[test]
    fn only_the_largest_component_is_kept() {
        let roi = Roi::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let g = ScalarGrid::from_fn(roi, 64, 64, |p| {
            let big = (p[0] + 0.4).hypot(p[1]) < 0.4;
            let small = (p[0] - 0.6).hypot(p[1]) < 0.2;
            Ok(if big || small { 1.0 } else { 0.0 })
        })
        .unwrap();
        let t = extract_density_topology(&g, 0.5).unwrap();
        assert_eq!(t.contours.len(), 1);
        assert!(t.contours[0].iter().all(|p| p[0] < 0.1));
    }

    #[test]
    fn region_touching_the_edge_closes() {
        let roi = Roi::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let g = ScalarGrid::from_fn(roi, 20, 20, |p| Ok(if p[0] < 0.5 { 1.0 } else { 0.0 })).unwrap();
        let t = extract_density_topology(&g, 0.5).unwrap();
        assert_eq!(t.contours.len(), 1);
        assert_eq!(t.contours[0].first(), t.contours[0].last());
        let sweep = threshold_sweep(&g, &[0.25, 0.5, 2.0]).unwrap();
        assert!(sweep[2].is_empty());
    }
}

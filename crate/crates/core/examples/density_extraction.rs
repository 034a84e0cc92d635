//! Turn a density field into a shape: threshold, keep the largest region and
//! trace its outline.

use ltpinn::extract::{extract_density_topology, threshold_sweep, ScalarGrid};
use ltpinn::geometry::Roi;

fn main() -> ltpinn::Result<()> {
    let roi = Roi::new(-2.0, 2.0, -2.0, 2.0)?;
    // a large blob, a small blob, and smooth edges
    let grid = ScalarGrid::from_fn(roi, 128, 128, |p| {
        let big = 1.0 / (1.0 + ((p[0] - 0.3).hypot(p[1] + 0.2) - 0.5).mul_add(20.0, 0.0).exp());
        let small = 1.0 / (1.0 + ((p[0] + 1.3).hypot(p[1] - 1.2) - 0.2).mul_add(20.0, 0.0).exp());
        Ok(big.max(small))
    })?;
    let topo = extract_density_topology(&grid, 0.5)?;
    let outline = &topo.contours[0];
    let (cx, cy) = outline.iter().fold((0.0, 0.0), |a, p| (a.0 + p[0], a.1 + p[1]));
    let n = outline.len() as f64;
    println!("kept {} nodes, outline of {} points centered near ({:.3}, {:.3})", topo.n_nodes, outline.len(), cx / n, cy / n);
    for t in threshold_sweep(&grid, &[0.1, 0.5, 0.9, 1.1])? {
        println!("threshold {:.1}: {} nodes, {} contours", t.threshold, t.n_nodes, t.contours.len());
    }
    Ok(())
}

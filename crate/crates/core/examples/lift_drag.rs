//! Pressure lift and drag on circle patches by trapezoid quadrature.

use std::f64::consts::PI;

use ltpinn::geometry::CirclePatch;
use ltpinn::metrics::lift_drag;

fn main() -> ltpinn::Result<()> {
    let patches = [CirclePatch::new([0.0, 0.0]), CirclePatch::new([2.5, 0.0])];
    for n in [16, 64, 256] {
        let (l, d) = lift_drag(|p| Ok(p[0] + 0.5 * p[1]), &patches[..1], n)?;
        println!("p = x + y/2, {n:>3} nodes: lift {l:.12}, drag {d:.12}");
    }
    println!("exact: lift {:.12}, drag {:.12}", -PI / 8.0, -PI / 4.0);
    let (l, d) = lift_drag(|_| Ok(1.0), &patches, 256)?;
    println!("uniform pressure on two cylinders: ({l:.1e}, {d:.1e})");
    Ok(())
}

//! Circle patches: signed distance, the sigmoid mask that removes the PDE
//! residual inside each circle, boundary rings and topology export.

use ltpinn::geometry::{
    composite_delta, delta, sample_all_rings, signed_distance, topology_json, topology_svg, CirclePatch, Roi,
};

fn main() -> ltpinn::Result<()> {
    let patches = [CirclePatch::new([0.0, 0.0]), CirclePatch::new([2.5, 0.0])];
    for x in [[0.0, 0.0], [0.45, 0.0], [0.5, 0.0], [0.55, 0.0], [1.25, 0.0]] {
        println!(
            "x = ({:>4}, {}): sdf {:>6.3}  δ {:.6}  mask {:.6}",
            x[0],
            x[1],
            signed_distance(&patches[0], x),
            delta(&patches[0], x, 100.0),
            composite_delta(&patches, x, 1.0, 100.0)
        );
    }
    let rings = sample_all_rings(&patches, &[0.5, 0.4, 0.3, 0.2], 128)?;
    println!("{} boundary samples for {} patches", rings.len(), patches.len());
    println!("{}", topology_json(&patches));
    let roi = Roi::new(-1.5, 4.0, -1.5, 1.5)?;
    std::fs::write("patches.svg", topology_svg(&patches, &roi))?;
    println!("wrote patches.svg");
    Ok(())
}

//! Gradient flow on the topology losses: a fixed-distance pair, then eight
//! patches held on a ring around their centroid while repelling each other.

use ltpinn::geometry::patch_pair_distance;
use ltpinn::geometry::CirclePatch;
use ltpinn::losses::{topology_loss_grad, TopoPair, TopologySpec};
use ltpinn::Point;

fn descend(gamma: &mut [Point], spec: &TopologySpec, lr: f64, steps: usize) -> ltpinn::Result<(f64, f64)> {
    let mut terms = (0.0, 0.0);
    for _ in 0..steps {
        let (t, grad) = topology_loss_grad(gamma, spec)?;
        terms = t;
        for (g, d) in gamma.iter_mut().zip(&grad) {
            g[0] -= lr * d[0];
            g[1] -= lr * d[1];
        }
    }
    Ok(terms)
}

fn main() -> ltpinn::Result<()> {
    let pair = TopologySpec {
        pairs: vec![TopoPair { i: 0, j: 1, distance: 2.5 }],
        ..Default::default()
    };
    let mut g = vec![[0.0, 0.0], [0.8, 0.6]];
    descend(&mut g, &pair, 0.05, 200)?;
    let d = patch_pair_distance(&CirclePatch::new(g[0]), &CirclePatch::new(g[1]));
    println!("pair distance after 200 steps: {d:.8}");

    let hub = TopologySpec {
        pairs: Vec::new(),
        hub_distance: Some(2.5),
        nonoverlap: true,
    };
    let mut g: Vec<Point> = (0..8).map(|i| [0.3 * (i % 3) as f64, 0.25 * i as f64 - 1.0]).collect();
    let (fixed, overlap) = descend(&mut g, &hub, 0.02, 3000)?;
    let c = [g.iter().map(|p| p[0]).sum::<f64>() / 8.0, g.iter().map(|p| p[1]).sum::<f64>() / 8.0];
    for p in &g {
        println!("({:>7.3}, {:>7.3})  radius {:.3}", p[0], p[1], (p[0] - c[0]).hypot(p[1] - c[1]));
    }
    println!("hub term {fixed:.2e}, non-overlap term {overlap:.3}");
    Ok(())
}

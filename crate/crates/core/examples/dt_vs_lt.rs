//! Train the density baseline and the learnable-circle model on the same
//! annulus data and compare the boundary flux on the true hole.
//!
//! `cargo run --release --example dt_vs_lt [epochs]`

use std::time::Instant;

use ltpinn::experiment::{preset, Experiment};
use ltpinn::training::History;

fn run(name: &str, epochs: Option<u64>) -> ltpinn::Result<f64> {
    let mut cfg = preset(name)?;
    if let Some(e) = epochs {
        cfg.training.epochs = e;
    }
    let mut exp = Experiment::build(&cfg)?;
    let start = Instant::now();
    exp.train(&mut History::default(), |_, _, _| {})?;
    let m = exp.metrics(&["flux_error", "relative_l2"], None, "")?;
    for r in &m {
        println!("{name:<11} {:<12} {:<12} {:.4e}", r.metric, r.field, r.value);
    }
    println!("{name:<11} trained in {:.1?}", start.elapsed());
    Ok(m[0].value)
}

fn main() -> ltpinn::Result<()> {
    let epochs = std::env::args().nth(1).map(|e| e.parse().expect("epochs must be an integer"));
    let dt = run("annulus-dt", epochs)?;
    let lt = run("annulus-lt", epochs)?;
    println!("mean flux error: DT {dt:.4e}, LT {lt:.4e}");
    Ok(())
}

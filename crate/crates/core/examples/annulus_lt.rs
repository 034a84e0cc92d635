//! Recover the hole of an annulus from interior temperature data with a
//! learnable circle patch, starting from an offset guess.
//!
//! `cargo run --release --example annulus_lt [epochs]`

use std::time::Instant;

use ltpinn::experiment::{preset, Experiment, ANNULUS_CENTER};
use ltpinn::training::History;

fn main() -> ltpinn::Result<()> {
    let mut cfg = preset("annulus-lt")?;
    if let Some(e) = std::env::args().nth(1) {
        cfg.training.epochs = e.parse().expect("epochs must be an integer");
    }
    let mut exp = Experiment::build(&cfg)?;
    let mut history = History::default();
    let start = Instant::now();
    exp.train(&mut history, |epoch, loss, gamma| {
        if epoch % 500 == 0 {
            println!(
                "epoch {epoch:>6}  loss {:.3e}  gamma ({:.4}, {:.4})",
                loss.total, gamma[0][0], gamma[0][1]
            );
        }
    })?;
    let names = exp.default_metric_names();
    for m in exp.metrics(&names, None, "")? {
        println!("{:<12} {:<14} {:.4e}", m.metric, m.field, m.value);
    }
    let g = exp.state.gamma[0];
    println!(
        "center ({:.4}, {:.4}), truth ({}, {}), {:.1?}",
        g[0], g[1], ANNULUS_CENTER[0], ANNULUS_CENTER[1], start.elapsed()
    );
    Ok(())
}

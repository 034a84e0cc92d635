//! Train any shipped preset at reduced size and write the run artifacts.
//!
//! `cargo run --release --example train_preset -- ns-2c 200`

use ltpinn::experiment::{preset, run_train, PRESET_NAMES};

fn main() -> ltpinn::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "ns-2c".into());
    let epochs: u64 = args.next().map_or(100, |e| e.parse().expect("epochs must be an integer"));
    if !PRESET_NAMES.contains(&name.as_str()) {
        eprintln!("presets: {}", PRESET_NAMES.join(", "));
    }
    let cfg = preset(&name)?.scaled_for_smoke(epochs);
    let out = std::path::PathBuf::from("runs").join(&name);
    let summary = run_train(&cfg, Some(&out), |epoch, loss, gamma| {
        println!("epoch {epoch:>5}  loss {:.4e}  centers {gamma:.3?}", loss.total);
    })?;
    for m in &summary.metrics {
        println!("{} {} = {:.4e}", m.metric, m.field, m.value);
    }
    println!("artifacts in {}", summary.out_dir.display());
    Ok(())
}

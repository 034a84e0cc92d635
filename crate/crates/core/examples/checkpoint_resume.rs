//! Save a training state, reload it and continue; the result equals an
//! uninterrupted run.

use ltpinn::experiment::{preset, Experiment};
use ltpinn::training::{checkpoint_load, checkpoint_save, History};

fn main() -> ltpinn::Result<()> {
    let cfg = preset("annulus-lt")?.scaled_for_smoke(20);
    let mut straight = Experiment::build(&cfg)?;
    straight.train(&mut History::default(), |_, _, _| {})?;

    let mut half = cfg.clone();
    half.training.epochs = 10;
    let mut a = Experiment::build(&half)?;
    a.train(&mut History::default(), |_, _, _| {})?;
    let path = std::env::temp_dir().join("ltpinn-example.ckpt");
    checkpoint_save(&a.state, &path)?;

    let mut b = Experiment::build(&half)?;
    b.state = checkpoint_load(&path, Some(&half.mlp_config()?))?;
    b.train(&mut History::default(), |_, _, _| {})?;
    println!("epoch {} vs {}", b.state.epoch, straight.state.epoch);
    println!("centers {:?} vs {:?}", b.state.gamma, straight.state.gamma);
    println!("identical parameters: {}", b.state.net.params.as_slice() == straight.state.net.params.as_slice());
    std::fs::remove_file(path)?;
    Ok(())
}

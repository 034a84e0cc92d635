use ltpinn::experiment::{preset, Experiment};
use ltpinn::training::{checkpoint_load, checkpoint_save, History};

#[test]
fn resuming_from_a_checkpoint_matches_an_uninterrupted_run() {
    let mut cfg = preset("ns-2c").unwrap().scaled_for_smoke(6);
    cfg.training.log_interval = 1;
    let mut full = Experiment::build(&cfg).unwrap();
    let mut h_full = History::default();
    full.train(&mut h_full, |_, _, _| {}).unwrap();

    cfg.training.epochs = 3;
    let mut first = Experiment::build(&cfg).unwrap();
    let mut h = History::default();
    first.train(&mut h, |_, _, _| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    checkpoint_save(&first.state, &path).unwrap();

    let mut resumed = Experiment::build(&cfg).unwrap();
    resumed.state = checkpoint_load(&path, Some(&cfg.mlp_config().unwrap())).unwrap();
    let mut h2 = History::default();
    resumed.train(&mut h2, |_, _, _| {}).unwrap();
    assert_eq!(resumed.state.epoch, 6);
    assert_eq!(resumed.state.gamma, full.state.gamma);
    assert_eq!(resumed.state.net.params.as_slice(), full.state.net.params.as_slice());
    assert_eq!(h2.last_loss().unwrap().total, h_full.last_loss().unwrap().total);
}

#[test]
fn annulus_loss_drops_over_two_thousand_epochs() {
    let mut cfg = preset("annulus-lt").unwrap();
    cfg.training.epochs = 2_000;
    let mut exp = Experiment::build(&cfg).unwrap();
    let mut h = History::default();
    exp.train(&mut h, |_, _, _| {}).unwrap();
    let first = h.losses[0].total;
    let last = h.last_loss().unwrap().total;
    assert!(last < first, "{first} -> {last}");
    // the center moves toward the truth
    let truth = cfg.data.reference_centers.unwrap()[0];
    let d = |g: [f64; 2]| (g[0] - truth[0]).hypot(g[1] - truth[1]);
    assert!(d(exp.state.gamma[0]) < d([0.0, 0.0]));
}

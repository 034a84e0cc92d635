use ltpinn::experiment::{preset, run_train, Experiment, PRESET_NAMES};

#[test]
fn every_preset_survives_a_ten_epoch_run() {
    for name in PRESET_NAMES {
        let cfg = preset(name).unwrap().scaled_for_smoke(10);
        let dir = tempfile::tempdir().unwrap();
        let summary = run_train(&cfg, Some(dir.path()), |_, _, _| {}).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(summary.history.epochs.last(), Some(&10), "{name}");
        assert!(summary.history.losses.iter().all(|l| l.total.is_finite()), "{name}");
    }
}

#[test]
fn table_sizes_are_reproduced() {
    let counts = |name: &str| {
        let c = preset(name).unwrap();
        let p = c.patches.clone();
        let nb = p.as_ref().map_or(0, |p| p.count * p.ring_radii.len() * p.ring_samples);
        let nd: usize = c.data.edges.iter().map(|e| e.n).sum();
        (c.domain.collocation, nb, nd, p.map_or(0, |p| p.count), c.weights.lambda_t)
    };
    assert_eq!(counts("ns-2c"), ([270, 120], 1024, 3389, 2, 1e4));
    assert_eq!(counts("ns-3c"), ([249, 270], 1536, 3682, 3, 1e4));
    assert_eq!(counts("ns-8c"), ([420, 420], 4096, 5373, 8, 1e2));
    assert_eq!(counts("poisson-8c"), ([420, 420], 4096, 5373, 8, 1e2));
    let (grid, nb, nd, nt, lt) = counts("rearrange-48");
    assert_eq!((grid, nd, nt, lt), ([1500, 900], 800, 48, 0.0));
    assert!(nb <= 20480 && nb > 20000);
    assert_eq!(counts("elastic-lt").1, 512);
    assert_eq!(counts("laplace-lt").1, 1024);
    for name in ["elastic-lt", "elastic-dt", "ns-2c", "ns-8c", "rearrange-48"] {
        let c = preset(name).unwrap();
        assert_eq!((c.network.n_layers, c.network.width), (5, 64), "{name}");
        assert_eq!(c.training.lr, 1e-4, "{name}");
    }
    let l = preset("laplace-dt").unwrap();
    assert_eq!((l.network.n_layers, l.network.width), (8, 256));
}

#[test]
fn flow_measurements_stay_outside_the_core() {
    let cfg = preset("ns-3c").unwrap().scaled_for_smoke(0);
    let exp = Experiment::build(&cfg).unwrap();
    assert!(!exp.samples.measurements.is_empty());
    assert!(exp.samples.measurements.iter().all(|m| !exp.samples.core.contains_strictly(m.point)));
    assert!(exp.samples.collocation.iter().all(|&p| exp.samples.core.contains(p)));
}

//! Acceptance criteria, one pass/fail line each. Runs as a plain binary so the
//! long end-to-end runs print progress in order.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ltpinn::diffengine::{check_against_finite_differences, Order, Seed};
use ltpinn::experiment::{preset, run_train, Experiment, ExperimentConfig};
use ltpinn::geometry::{
    boundary_normal, composite_delta_var, delta, delta_var, sample_rings, signed_distance, CirclePatch, Roi,
};
use ltpinn::losses::{topo_nonoverlap_loss, topology_loss_grad, TopoPair, TopologySpec};
use ltpinn::metrics::lift_drag;
use ltpinn::network::{he_init, InputMap, MlpConfig, Network};
use ltpinn::oracle::{fd_poisson_dirichlet, manufactured_suite};
use ltpinn::pde::{FlowParams, MaterialParams, PdeProblem, Probe};
use ltpinn::sampling::random_points;
use ltpinn::training::History;
use ltpinn::{Point, Result};

type Outcome = Result<(bool, String)>;

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

// 1 ------------------------------------------------------------------------

fn mlp_spatial_error(seed: u64) -> Result<f64> {
    let roi = Roi::new(-2.0, 3.0, -1.0, 2.0)?;
    let net = Network::new(he_init(MlpConfig::new(3, 16, 2, false)?, seed), InputMap::new(roi));
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for p in random_points(&roi, 5, seed) {
        let jets = net.jets_at(p, Order::Second)?;
        let first = |q: Point| net.jets_at(q, Order::First);
        let (xp, xm) = (first([p[0] + h, p[1]])?, first([p[0] - h, p[1]])?);
        let (yp, ym) = (first([p[0], p[1] + h])?, first([p[0], p[1] - h])?);
        for k in 0..2 {
            let j = jets[k];
            let gx = (xp[k].value() - xm[k].value()) / (2.0 * h);
            let gy = (yp[k].value() - ym[k].value()) / (2.0 * h);
            let hxx = (xp[k].gradient()[0] - xm[k].gradient()[0]) / (2.0 * h);
            let hxy = (yp[k].gradient()[0] - ym[k].gradient()[0]) / (2.0 * h);
            let hyy = (yp[k].gradient()[1] - ym[k].gradient()[1]) / (2.0 * h);
            let hs = j.hessian();
            for (a, b) in [(j.gradient()[0], gx), (j.gradient()[1], gy), (hs[0][0], hxx), (hs[0][1], hxy), (hs[1][1], hyy)] {
                worst = worst.max(rel(a, b, 1e-3));
            }
        }
    }
    Ok(worst)
}

fn delta_error() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (i, &s) in [-0.15, -0.05, 0.0, 0.03, 0.12].iter().enumerate() {
        let t = 0.9 * i as f64;
        let g = [0.3, -0.2];
        let r = 0.5 + s;
        let seeds = [
            Seed::X(g[0] + r * t.cos()),
            Seed::Y(g[1] + r * t.sin()),
            Seed::Param(g[0]),
            Seed::Param(g[1]),
        ];
        worst = worst.max(check_against_finite_differences(&seeds, 1e-6, |_, v| {
            delta_var([v[2], v[3]], [v[0], v[1]], 100.0)
        })?);
        // second patch placed so the point also lies near its boundary
        let x = [g[0] + r * t.cos(), g[1] + r * t.sin()];
        let other = [x[0] + 0.45 + 0.02 * i as f64, x[1] + 0.1];
        let seeds = [
            Seed::X(x[0]),
            Seed::Y(x[1]),
            Seed::Param(g[0]),
            Seed::Param(g[1]),
            Seed::Param(other[0]),
            Seed::Param(other[1]),
        ];
        worst = worst.max(check_against_finite_differences(&seeds, 1e-6, |_, v| {
            composite_delta_var(&[[v[2], v[3]], [v[4], v[5]]], [v[0], v[1]], 1.0, 100.0).expect("two patches")
        })?);
    }
    Ok(worst)
}

fn total_loss_error(cfg: &ExperimentConfig) -> Result<f64> {
    let exp = Experiment::build(cfg)?;
    let n = exp.state.net.params.len();
    let (_, g) = exp.objective.evaluate(&exp.state.net, n, &exp.state.gamma, &exp.samples, true)?;
    let g = g.expect("gradient requested");
    let total = |net: &Arc<Network>, gamma: &[Point]| -> Result<f64> {
        Ok(exp.objective.evaluate(net, n, gamma, &exp.samples, false)?.0.total)
    };
    let h = 1e-6;
    let scale = g.theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst: f64 = 0.0;
    for p in 0..exp.state.gamma.len() {
        for c in 0..2 {
            let mut up = exp.state.gamma.clone();
            up[p][c] += h;
            let mut dn = exp.state.gamma.clone();
            dn[p][c] -= h;
            let fd = (total(&exp.state.net, &up)? - total(&exp.state.net, &dn)?) / (2.0 * h);
            worst = worst.max(rel(g.gamma[p][c], fd, 1e-3 * scale));
        }
    }
    for i in (0..n).step_by(7) {
        let mut up = (*exp.state.net).clone();
        up.params.as_mut_slice()[i] += h;
        let mut dn = (*exp.state.net).clone();
        dn.params.as_mut_slice()[i] -= h;
        let fd = (total(&Arc::new(up), &exp.state.gamma)? - total(&Arc::new(dn), &exp.state.gamma)?) / (2.0 * h);
        worst = worst.max(rel(g.theta[i], fd, 1e-3 * scale));
    }
    Ok(worst)
}

fn tiny(name: &str) -> Result<ExperimentConfig> {
    let mut c = preset(name)?.scaled_for_smoke(0);
    c.network.n_layers = 2;
    c.network.width = 8;
    c.domain.collocation = [6, 6];
    Ok(c)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        worst = worst.max(mlp_spatial_error(seed)?);
    }
    worst = worst.max(delta_error()?);
    for name in ["annulus-lt", "ns-3c", "annulus-dt"] {
        worst = worst.max(total_loss_error(&tiny(name)?)?);
    }
    let t = start.elapsed();
    Ok((worst < 1e-4 && t < Duration::from_secs(60), format!("max rel. error {worst:.2e}, {t:.1?}")))
}

// 2 ------------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let roi = Roi::new(-2.0, 2.0, -2.0, 2.0)?;
    let pts = random_points(&roi, 50, 7);
    let mut worst: f64 = 0.0;
    for problem in [
        PdeProblem::Laplace,
        PdeProblem::Elastic(MaterialParams::new(1.0, 0.33)?),
        PdeProblem::SteadyNs(FlowParams::new(1.0)?),
        PdeProblem::SteadyNs(FlowParams::new(100.0)?),
        PdeProblem::PressurePoisson,
    ] {
        for case in manufactured_suite(&problem) {
            worst = worst.max(case.max_residual(&pts)?);
        }
    }
    let r2 = Probe::new(1, |x: ltpinn::diffengine::Var<'_>, y: ltpinn::diffengine::Var<'_>| vec![x * x + y * y]);
    let lap = PdeProblem::Laplace.residual_at(&r2, [0.7, -1.3])?[0];
    let sigma = MaterialParams::new(1.0, 0.33)?.stress(1.0, 0.0, 0.0)[0];
    let sigma_ref = 1.0 / (1.0 - 0.33 * 0.33);
    let anchors = (lap - 4.0).abs().max((sigma - sigma_ref).abs());
    let t = start.elapsed();
    Ok((
        worst < 1e-9 && anchors < 1e-9 && t < Duration::from_secs(60),
        format!("max null residual {worst:.1e}, Δr² = {lap}, σ_xx = {sigma:.7}, {t:.1?}"),
    ))
}

// 3 ------------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let patch = CirclePatch::new([0.3, -0.2]);
    let on = [0.8, -0.2];
    let mut ok = (delta(&patch, on, 100.0) - 0.5).abs() < 1e-15;
    ok &= signed_distance(&patch, [0.3, -0.2]) == -0.5;
    ok &= (signed_distance(&patch, [1.3, -0.2]) - 0.5).abs() < 1e-15;
    let n = boundary_normal(&patch, on)?;
    ok &= (n[0] - 1.0).abs() < 1e-15 && n[1].abs() < 1e-15;
    ok &= boundary_normal(&patch, patch.gamma).is_err();
    let radii = [0.5, 0.4, 0.3, 0.2];
    let nb_elastic = sample_rings(0, &patch, &radii, 128)?.len();
    let nb_laplace = sample_rings(0, &patch, &radii, 256)?.len();
    ok &= nb_elastic == 512 && nb_laplace == 1024;
    let l = preset("elastic-lt")?;
    let p = l.patches.as_ref().expect("LT preset");
    ok &= p.ring_radii.len() * p.ring_samples == 512;
    let l = preset("laplace-lt")?;
    let p = l.patches.as_ref().expect("LT preset");
    ok &= p.ring_radii.len() * p.ring_samples == 1024;
    Ok((ok, format!("δ(boundary) = {}, N_b = {nb_elastic} / {nb_laplace}", delta(&patch, on, 100.0))))
}

// 4 ------------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let spec = TopologySpec {
        pairs: vec![TopoPair { i: 0, j: 1, distance: 2.5 }],
        ..Default::default()
    };
    let mut g = vec![[0.0, 0.0], [0.8, 0.6]];
    let dist = |g: &[Point]| (g[0][0] - g[1][0]).hypot(g[0][1] - g[1][1]);
    let mut steps = 0;
    while (dist(&g) - 2.5).abs() >= 1e-3 && steps < 5_000 {
        let (_, grad) = topology_loss_grad(&g, &spec)?;
        for (gi, d) in g.iter_mut().zip(&grad) {
            gi[0] -= 0.05 * d[0];
            gi[1] -= 0.05 * d[1];
        }
        steps += 1;
    }
    let err = (dist(&g) - 2.5).abs();
    let l2 = topo_nonoverlap_loss(&[CirclePatch::new([0.0, 0.0]), CirclePatch::new([2.0, 0.0])])?;
    let t = start.elapsed();
    Ok((
        err < 1e-3 && l2 == 0.25 && t < Duration::from_secs(10),
        format!("|d − 2.5| = {err:.1e} after {steps} steps, L_t² = {l2}, {t:.1?}"),
    ))
}

// 5, 6 ---------------------------------------------------------------------

struct AnnulusRun {
    gamma_error: f64,
    flux_error: f64,
    t_rel_l2: f64,
    elapsed: Duration,
    epochs: u64,
}

fn annulus_run(name: &str) -> Result<AnnulusRun> {
    let cfg = preset(name)?;
    let mut exp = Experiment::build(&cfg)?;
    let start = Instant::now();
    exp.train(&mut History::default(), |_, _, _| {})?;
    let elapsed = start.elapsed();
    let m = exp.metrics(&["flux_error", "relative_l2"], None, "")?;
    let gamma_error = if cfg.is_lt() {
        exp.metrics(&["gamma_error"], None, "")?[0].value
    } else {
        f64::NAN
    };
    Ok(AnnulusRun {
        gamma_error,
        flux_error: m[0].value,
        t_rel_l2: m[2].value,
        elapsed,
        epochs: cfg.training.epochs,
    })
}

fn criterion_5(lt: &AnnulusRun) -> Outcome {
    let offset = {
        let c = preset("annulus-lt")?;
        let g0 = c.patches.as_ref().and_then(|p| p.initial.clone()).expect("initial center")[0];
        let t = c.data.reference_centers.expect("reference")[0];
        (g0[0] - t[0]).hypot(g0[1] - t[1])
    };
    let ok = offset <= 0.3
        && lt.epochs <= 20_000
        && lt.gamma_error < 0.05
        && lt.flux_error < 0.05
        && lt.t_rel_l2 < 0.05
        && lt.elapsed < Duration::from_secs(30 * 60);
    Ok((
        ok,
        format!(
            "offset {offset:.3}, {} epochs: ‖γ−γ*‖ {:.2e}, flux error {:.2e}, T rel. L2 {:.2e}, {:.1?}",
            lt.epochs, lt.gamma_error, lt.flux_error, lt.t_rel_l2, lt.elapsed
        ),
    ))
}

fn criterion_6(lt: &AnnulusRun, dt: &AnnulusRun) -> Outcome {
    let t = lt.elapsed + dt.elapsed;
    Ok((
        lt.flux_error < dt.flux_error && t < Duration::from_secs(3600),
        format!("flux error LT {:.2e} vs DT {:.2e}, {t:.1?}", lt.flux_error, dt.flux_error),
    ))
}

// 7 ------------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let patches = [CirclePatch::new([0.4, -1.1])];
    let (l1, d1) = lift_drag(|p| Ok(p[0]), &patches, 256)?;
    let (l0, d0) = lift_drag(|_| Ok(2.5), &patches, 256)?;
    let ok = (d1 + PI / 4.0).abs() < 1e-6 && l1.abs() < 1e-12 && l0.abs() < 1e-12 && d0.abs() < 1e-12;
    Ok((ok, format!("p = x: drag {d1:.10} (−π/4 = {:.10}); constant p: ({l0:.1e}, {d0:.1e})", -PI / 4.0)))
}

// 8 ------------------------------------------------------------------------

fn run_bytes(cfg: &ExperimentConfig, threads: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    let dir = tempfile::tempdir()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ltpinn::Error::Config(e.to_string()))?;
    pool.install(|| run_train(cfg, Some(dir.path()), |_, _, _| {}))?;
    Ok((
        std::fs::read(dir.path().join("loss.csv"))?,
        std::fs::read(dir.path().join("gamma.csv"))?,
    ))
}

fn criterion_8() -> Outcome {
    let mut ok = true;
    for name in ["annulus-lt", "ns-2c"] {
        let mut cfg = preset(name)?.scaled_for_smoke(30);
        cfg.training.log_interval = 1;
        let a = run_bytes(&cfg, 1)?;
        let b = run_bytes(&cfg, 1)?;
        let c = run_bytes(&cfg, 3)?;
        ok &= a == b && a == c;
    }
    Ok((ok, "loss.csv and gamma.csv byte-identical across repeats and thread counts".into()))
}

// 9 ------------------------------------------------------------------------

fn criterion_9() -> Outcome {
    let cfg = preset("rearrange-4")?;
    let mut exp = Experiment::build(&cfg)?;
    let mut history = History::default();
    let start = Instant::now();
    exp.train(&mut history, |_, _, _| {})?;
    let t = start.elapsed();
    let first = history.losses.first().expect("epoch 0 is logged").total;
    let last = history.last_loss().expect("final epoch is logged").total;
    let n = exp.state.gamma.len();
    let ok = n == 4
        && cfg.training.epochs == 2_000
        && cfg.weights.lambda_t == 0.0
        && last < first
        && t < Duration::from_secs(300);
    Ok((ok, format!("{n} patches, loss {first:.3e} → {last:.3e}, {t:.1?}")))
}

// 10 -----------------------------------------------------------------------

fn criterion_10() -> Outcome {
    let roi = Roi::new(0.0, 1.0, 0.0, 1.0)?;
    let exact = |p: Point| (PI * p[0]).sin() * (PI * p[1]).sinh() + p[0] * p[1] * p[1];
    let f = |p: Point| 2.0 * p[0];
    let mut errs = Vec::new();
    for n in [17, 33, 65] {
        errs.push(fd_poisson_dirichlet(n, n, &roi, f, exact)?.max_error(exact));
    }
    let ratios = [errs[0] / errs[1], errs[1] / errs[2]];
    let ok = ratios.iter().all(|r| (3.0..=5.0).contains(r));
    Ok((ok, format!("error ratios {:.3}, {:.3}", ratios[0], ratios[1])))
}

fn report(n: usize, name: &str, outcome: Outcome, failures: &mut usize) {
    match outcome {
        Ok((true, msg)) => println!("criterion {n:>2} PASS  {name}: {msg}"),
        Ok((false, msg)) => {
            *failures += 1;
            println!("criterion {n:>2} FAIL  {name}: {msg}");
        }
        Err(e) => {
            *failures += 1;
            println!("criterion {n:>2} FAIL  {name}: error: {e}");
        }
    }
}

fn main() {
    let mut failures = 0;
    report(1, "differentiation", criterion_1(), &mut failures);
    report(2, "manufactured residuals", criterion_2(), &mut failures);
    report(3, "geometry", criterion_3(), &mut failures);
    report(4, "topology dynamics", criterion_4(), &mut failures);
    let lt = annulus_run("annulus-lt");
    let dt = annulus_run("annulus-dt");
    match (&lt, &dt) {
        (Ok(lt), Ok(dt)) => {
            report(5, "annulus center recovery", criterion_5(lt), &mut failures);
            report(6, "learnable circle vs density", criterion_6(lt, dt), &mut failures);
        }
        _ => {
            let err = |r: &Result<AnnulusRun>| r.as_ref().err().map(|e| e.to_string()).unwrap_or_default();
            report(5, "annulus center recovery", Ok((false, err(&lt))), &mut failures);
            report(6, "learnable circle vs density", Ok((false, format!("{} {}", err(&lt), err(&dt)))), &mut failures);
        }
    }
    report(7, "lift and drag", criterion_7(), &mut failures);
    report(8, "determinism", criterion_8(), &mut failures);
    report(9, "rearrangement smoke run", criterion_9(), &mut failures);
    report(10, "finite-difference order", criterion_10(), &mut failures);
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}

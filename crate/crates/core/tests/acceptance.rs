//! Release acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use warmup_lab::diagnostics::{fit_quadratic, SmoothnessSample};
use warmup_lab::geometry::{kappa, kappa_witness, orthogonalize_ns, GeometryKind};
use warmup_lab::harness::verify::{coshsum_fit_config, mlp_sweep_config, SWEEP_WARMUPS};
use warmup_lab::harness::{
    diagnose, initial_gap, run_fstar_ablation, run_sweep, run_training, RunConfig, RunSection,
    SchedulerConfig, SchedulerKind,
};
use warmup_lab::optim::{OptimizerConfig, OptimizerKind};
use warmup_lab::param::{Matrix, ShapeSpec};
use warmup_lab::problems::{Problem, ProblemConfig, ProblemKind};
use warmup_lab::schedule::{
    eta_practical, eta_thm1, lambda_max, solve_coefficients, AdaptiveConfig, AdaptiveScheduler,
    Phase, TheoreticalParams,
};
use warmup_lab::Error;

const CONSTRAINT_TOL: f64 = 1e-9;
const DIV1_TOL: f64 = 1e-12;
const WITNESS_TOL: f64 = 1e-9;
const NS_TOL: f64 = 1e-2;
const SHAPE_ARGMAX: u64 = 3163;
const FIT_TOL: f64 = 0.05;
const SWEEP_RATIO: f64 = 1.10;
const ABLATION_SPREAD: f64 = 0.20;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within_budget(passed: bool, elapsed: Duration, budget: Duration) -> bool {
    passed && elapsed <= budget
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Rational step `D / (K0 + K1 D + K2 D^2)`, evaluated independently of the
/// library.
fn rational(d: f64, k0: f64, k1: f64, k2: f64) -> f64 {
    d / (k0 + k1 * d + k2 * d * d)
}

fn c1_constraints() -> Outcome {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    let mut positive = true;
    for _ in 0..100 {
        let lr = 10f64.powf(r.random_range(-5.0..-1.0));
        let div = 1.0 + 10f64.powf(r.random_range(-2.0..3.0));
        let delta0 = 10f64.powf(r.random_range(-1.0..1.5));
        let dp = delta0 * r.random_range(0.02..0.98);
        let c = solve_coefficients(lr, div, delta0, dp).unwrap();
        let peak = rel(rational(dp, c.k0, c.k1, c.k2), lr);
        let floor = rel(rational(delta0, c.k0, c.k1, c.k2), lr / div);
        // eta'(D') = 0 iff K0 = K2 D'^2
        let stationary = (c.k0 - c.k2 * dp * dp).abs() / c.k0.abs().max(c.k2 * dp * dp).max(f64::MIN_POSITIVE);
        worst = worst.max(peak).max(floor).max(stationary);
        positive &= (1..=4096)
            .map(|i| delta0 * i as f64 / 4096.0)
            .all(|d| c.k0 + c.k1 * d + c.k2 * d * d > 0.0);
    }
    let w = solve_coefficients(1e-3, 100.0, 8.0, 2.0).unwrap();
    let worked = rel(w.k0, 88000.0).max(rel(w.k1, -87000.0)).max(rel(w.k2, 22000.0));
    let elapsed = start.elapsed();
    outcome(
        within_budget(worst <= CONSTRAINT_TOL && worked <= CONSTRAINT_TOL && positive, elapsed, Duration::from_secs(1)),
        format!("max residual {worst:.2e}, worked case {worked:.2e}, denominator positive {positive}, {elapsed:.2?}"),
    )
}

fn c2_div_one() -> Outcome {
    let c = solve_coefficients(0.01, 1.0, 5.0, 1.5).unwrap();
    let worst = (1..=4096)
        .map(|i| rel(eta_practical(5.0 * i as f64 / 4096.0, &c).unwrap(), 0.01))
        .fold(0.0, f64::max);
    outcome(worst <= DIV1_TOL, format!("max |eta - lr| / lr = {worst:.2e}"))
}

fn c3_kappa() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut formula_ok = true;
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let layers: Vec<(usize, usize)> = (0..r.random_range(1..=4))
            .map(|_| (r.random_range(1..=12), r.random_range(1..=12)))
            .collect();
        let shapes = ShapeSpec::new(layers.clone()).unwrap();
        let entries: usize = layers.iter().map(|(m, n)| m * n).sum();
        let ranks: usize = layers.iter().map(|(m, n)| *m.min(n)).sum();
        let cases = [
            (GeometryKind::Euclidean, 1.0),
            (GeometryKind::EntrywiseMax, entries as f64),
            (GeometryKind::Spectral, ranks as f64),
        ];
        for (geom, want) in cases {
            formula_ok &= kappa(&shapes, &geom).unwrap() == want;
            let u = kappa_witness(&shapes, &geom).unwrap();
            let fro2: f64 = u.iter().map(|v| v * v).sum();
            // primal norms computed from their definitions
            let norm = match geom {
                GeometryKind::Euclidean => fro2.sqrt(),
                GeometryKind::EntrywiseMax => u.iter().fold(0.0_f64, |a, v| a.max(v.abs())),
                _ => u
                    .layers()
                    .iter()
                    .map(|l| {
                        let d = DMatrix::from_fn(l.rows(), l.cols(), |i, j| l.get(i, j));
                        d.singular_values().max()
                    })
                    .fold(0.0, f64::max),
            };
            worst = worst.max(rel(fro2, want)).max((norm - 1.0).abs());
        }
    }
    outcome(
        formula_ok && worst <= WITNESS_TOL,
        format!("formulas exact {formula_ok}, witness deviation {worst:.2e}"),
    )
}

fn orthonormal_columns(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

fn c4_newton_schulz() -> Outcome {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0_f64;
    for i in 0..100 {
        let (m, n) = if i % 2 == 0 { (8, 8) } else { (16, 4) };
        let k = m.min(n);
        let u = orthonormal_columns(&mut r, m, k);
        let v = orthonormal_columns(&mut r, n, k);
        // singular values span [1, cond] with cond <= 100, endpoints included
        let cond = 10f64.powf(r.random_range(0.0..2.0));
        let s: Vec<f64> = (0..k)
            .map(|j| match j {
                0 => cond,
                j if j == k - 1 => 1.0,
                _ => cond.powf(r.random_range(0.0..1.0)),
            })
            .collect();
        let g = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s)) * v.transpose();
        let oracle = &u * v.transpose();
        let gm = Matrix::from_fn(m, n, |a, b| g[(a, b)]);
        let ns = orthogonalize_ns(&gm, 5).unwrap();
        let err = DMatrix::from_fn(m, n, |a, b| ns.get(a, b) - oracle[(a, b)]).norm();
        worst = worst.max(err / (k as f64).sqrt());
    }
    let elapsed = start.elapsed();
    outcome(
        within_budget(worst <= NS_TOL, elapsed, Duration::from_secs(2)),
        format!("max ||NS5 - UV^T||_F / sqrt(min(m, n)) = {worst:.3e}, {elapsed:.2?}"),
    )
}

fn c5_thm1_quadratic() -> Outcome {
    let start = Instant::now();
    let mut p = ProblemConfig::new(ProblemKind::Quadratic);
    p.dim = Some(10);
    let cfg = RunConfig::new(
        p,
        OptimizerConfig::new(OptimizerKind::NormSgd),
        SchedulerConfig::new(SchedulerKind::Thm1),
        RunSection::new(1000, 0),
    );
    let t = run_training(&cfg).unwrap();
    let d = t.rows[0].dist_to_opt.unwrap();
    let monotone = t.rows.windows(2).all(|w| w[1].delta <= w[0].delta);
    let bound = 2.0 * d * d * 1.0 / 1000.0;
    let bounded = t.rows.iter().all(|r| r.dist_to_opt.unwrap() <= d);
    let elapsed = start.elapsed();
    let final_gap = t.header.final_loss;
    outcome(
        within_budget(
            t.completed() && monotone && final_gap <= bound && bounded,
            elapsed,
            Duration::from_secs(1),
        ),
        format!(
            "monotone {monotone}, gap {final_gap:.3e} <= {bound:.3e}, distance bounded {bounded}, {elapsed:.2?}"
        ),
    )
}

fn c6_shape() -> Outcome {
    let p = TheoreticalParams::new(2.0, 1e-4, 0.0, 1e3);
    let etas: Vec<(u64, f64)> = (2..=100_000u64)
        .map(|t| (t, eta_thm1(1.0 / t as f64, &p, 1.0).unwrap()))
        .collect();
    let (argmax, _) = etas.iter().copied().fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    let expected = ((1e3_f64 * (2.0 - 1.0) / 1e-4).powf(0.5)).ceil() as u64;
    let rising = etas.iter().take_while(|(t, _)| *t <= argmax).collect::<Vec<_>>();
    let falling = etas.iter().skip_while(|(t, _)| *t < argmax).collect::<Vec<_>>();
    let strict = rising.windows(2).all(|w| w[0].1 < w[1].1) && falling.windows(2).all(|w| w[0].1 > w[1].1);
    outcome(
        expected == SHAPE_ARGMAX && argmax.abs_diff(expected) <= 1 && strict,
        format!("argmax {argmax}, expected {expected}, strict unimodal {strict}"),
    )
}

fn c7_thm2() -> Outcome {
    let fit_cfg = coshsum_fit_config();
    let fit = diagnose(&fit_cfg).unwrap().fit.unwrap();
    let params = fit.upper_params().unwrap();
    let problem = Problem::build(&fit_cfg.problem).unwrap();
    let x0_norm = problem.initial_point(0, None).frobenius_norm();
    // x* = 0 for coshsum
    let bound = 1.0 / x0_norm.max(0.0).max(1.0 / lambda_max(&params).unwrap());
    let cfg_for = |lambda: f64| {
        let mut s = SchedulerConfig::new(SchedulerKind::Thm2);
        s.constants = Some(params);
        RunConfig::new(
            fit_cfg.problem.clone(),
            OptimizerConfig::new(OptimizerKind::NormSgd).with_weight_decay(lambda),
            s,
            RunSection::new(1000, 0),
        )
    };
    let rejected = matches!(run_training(&cfg_for(1.05 * bound)), Err(Error::Config(_)));
    let t = run_training(&cfg_for(0.9 * bound)).unwrap();
    let d0 = t.rows[0].dist_to_opt.unwrap();
    let monotone = t.rows.windows(2).all(|w| w[1].delta <= w[0].delta);
    let bounded = t.rows.iter().all(|r| r.dist_to_opt.unwrap() <= d0);
    outcome(
        rejected && t.completed() && monotone && bounded,
        format!(
            "fit K=({:.4}, {:.4}, {:.4}), gate rejects {rejected}, monotone {monotone}, distance bounded {bounded}",
            fit.k0, fit.k1, fit.k2
        ),
    )
}

fn c8_thm3() -> Outcome {
    let start = Instant::now();
    let steps = 10_000u64;
    let mut monotone = true;
    let mut worst = 0.0_f64;
    for seed in 0..5 {
        let mut p = ProblemConfig::new(ProblemKind::InterpLs);
        p.dim = Some(20);
        p.n_samples = Some(10);
        p.seed = seed;
        let problem = Problem::build(&p).unwrap();
        let Problem::InterpLs(ls) = &problem else { unreachable!() };
        let k_max = ls.max_row_norm2();
        let cfg = RunConfig::new(
            p,
            OptimizerConfig::new(OptimizerKind::NormSgd),
            SchedulerConfig::new(SchedulerKind::Thm3),
            RunSection::new(steps, seed),
        );
        let t = run_training(&cfg).unwrap();
        monotone &= t.completed()
            && t.rows.windows(2).all(|w| w[1].dist_to_opt.unwrap() <= w[0].dist_to_opt.unwrap());
        let d = t.rows[0].dist_to_opt.unwrap();
        let m = t.rows.iter().map(|r| r.delta).fold(0.0, f64::max);
        // least squares: K0 = max ||a_i||^2 and K1 = Krho = 0
        let (k0, k1, krho) = (k_max, 0.0, 0.0);
        let k_bar = k0 + k1 * m + krho * m * m;
        let mean = t.rows.iter().map(|r| r.delta).sum::<f64>() / t.rows.len() as f64;
        worst = worst.max(mean / (d * d * k_bar / (steps as f64).sqrt()));
    }
    let elapsed = start.elapsed();
    outcome(
        within_budget(monotone && worst <= 1.0, elapsed, Duration::from_secs(5)),
        format!("distance monotone {monotone}, max mean gap / bound = {worst:.3e}, {elapsed:.2?}"),
    )
}

fn c9_algorithm1() -> Outcome {
    let (lr, div, total) = (1e-3, 100.0, 100u64);
    let mut cfg = AdaptiveConfig::new(lr, div, 0.5, total, 1.0);
    cfg.delta_prime = Some(2.0);
    let mut s = AdaptiveScheduler::new(cfg.clone());
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let a = s.get_lr(8.5).unwrap();
    check(a.phase == Phase::Warmup && rel(a.lr, lr / div) <= 1e-12, "first step at the floor");
    let b = s.get_lr(4.5).unwrap();
    check(b.phase == Phase::Warmup, "inside warm-up");
    let c = s.get_lr(2.5).unwrap();
    check(c.phase == Phase::Warmup && rel(c.lr, lr) <= 1e-12, "gap equal to the transition point stays in warm-up");
    check(s.warmup_steps() == 3, "three warm-up steps counted");
    let d = s.get_lr(2.25).unwrap();
    check(d.phase == Phase::Decay && d.lr == lr, "decay starts at lr");
    let state = s.decay_state().cloned().unwrap();
    check(state.t_decay == total - 3, "decay horizon T - warmup_steps");
    let e = s.get_lr(100.0).unwrap();
    check(e.phase == Phase::Decay && s.warmup_steps() == 3, "decay is permanent");
    let expected = 0.5 * lr * (1.0 + (std::f64::consts::PI / 97.0).cos());
    check(rel(e.lr, expected) <= 1e-12, "second decay value follows the cosine");
    for _ in 0..200 {
        s.get_lr(0.6).unwrap();
    }
    check(s.get_lr(0.6).unwrap().lr == 0.0, "decay ends at zero");
    let mut bad = AdaptiveScheduler::new(cfg);
    check(matches!(bad.get_lr(0.5), Err(Error::SchedulerInit(_))), "zero initial gap rejected");
    outcome(failures.is_empty(), format!("mismatches: {failures:?}"))
}

fn c10_fit() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(10);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let samples: Vec<SmoothnessSample> = (0..500)
        .map(|_| {
            let d: f64 = r.random_range(0.01..8.0);
            let ratio = (5.0 + 2.0 * d + 30.0 * d * d) * (1.0 + noise.sample(&mut r));
            SmoothnessSample { delta: d, ratio }
        })
        .collect();
    let f = fit_quadratic(&samples).unwrap();
    let errs = [rel(f.k0, 5.0), rel(f.k1, 2.0), rel(f.k2, 30.0)];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    outcome(
        worst <= FIT_TOL,
        format!("K = ({:.4}, {:.4}, {:.4}), max relative error {worst:.3e}", f.k0, f.k1, f.k2),
    )
}

fn c11_sweep() -> Outcome {
    let start = Instant::now();
    let mut all = true;
    let mut parts = Vec::new();
    for (name, kind) in [("normSGD", OptimizerKind::NormSgd), ("lion", OptimizerKind::Lion)] {
        let rows = run_sweep(&mlp_sweep_config(kind), &SWEEP_WARMUPS).unwrap();
        let (manual, adaptive) = rows.split_at(SWEEP_WARMUPS.len());
        let best = manual.iter().map(|r| r.final_loss).fold(f64::INFINITY, f64::min);
        let ratio = adaptive[0].final_loss / best;
        all &= ratio <= SWEEP_RATIO;
        parts.push(format!(
            "{name}: adaptive {:.4e} (warm-up {}) / best manual {best:.4e} = {ratio:.3}",
            adaptive[0].final_loss, adaptive[0].warmup_steps
        ));
    }
    let elapsed = start.elapsed();
    parts.push(format!("{elapsed:.2?}"));
    outcome(within_budget(all, elapsed, Duration::from_secs(60)), parts.join("; "))
}

fn c12_ablation() -> Outcome {
    let cfg = mlp_sweep_config(OptimizerKind::NormSgd);
    let d0 = initial_gap(&cfg).unwrap();
    let problem = Problem::build(&cfg.problem).unwrap();
    let initial_loss = problem
        .objective()
        .loss(&problem.initial_point(cfg.run.seed, cfg.problem.init_scale))
        .unwrap();
    let rows = run_fstar_ablation(&cfg, &[0.0, 0.05 * d0, 0.1 * d0, 0.2 * d0, initial_loss]).unwrap();
    let losses: Vec<f64> = rows.iter().take(4).map(|r| r.final_loss).collect();
    let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = losses.iter().copied().fold(0.0, f64::max);
    let spread = (hi - lo) / lo;
    let init_error = rows[4].status == "SchedulerInitError";
    outcome(
        rows.len() == 5 && spread <= ABLATION_SPREAD && init_error,
        format!("final losses {losses:?}, spread {spread:.3e}, f* = initial loss recorded as {}", rows[4].status),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("closed-form constraints", c1_constraints),
        ("div = 1 degeneracy", c2_div_one),
        ("kappa exactness and witness", c3_kappa),
        ("Newton-Schulz vs SVD", c4_newton_schulz),
        ("deterministic schedule on the quadratic", c5_thm1_quadratic),
        ("warm-up/decay shape", c6_shape),
        ("weight-decay schedule on coshsum", c7_thm2),
        ("stochastic schedule on least squares", c8_thm3),
        ("adaptive scheduler state machine", c9_algorithm1),
        ("smoothness fit recovery", c10_fit),
        ("tiny-MLP warm-up sweep", c11_sweep),
        ("target-loss ablation", c12_ablation),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        failed += usize::from(!o.passed);
        println!(
            "criterion {:>2} {}: {name}: {}",
            i + 1,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Built-in release checks. Each check reports its measured value next to
//! the tolerance it is held to.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, RunSection, SchedulerConfig, SchedulerKind};
use super::experiments::{diagnose, initial_gap, run_fstar_ablation, run_sweep};
use super::run::run_training;
use crate::diagnostics::{fit_quadratic, grad_check, verify_constraints, Check, SmoothnessSample};
use crate::error::{Error, Result};
use crate::geometry::{kappa, kappa_witness, orthogonalize_exact, orthogonalize_ns, primal_norm, GeometryKind};
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::param::{svd, Matrix, ParamSet, ShapeSpec};
use crate::problems::{rng, CoshSum, Mlp, MlpShape, Problem, ProblemConfig, ProblemKind, Quadratic};
use crate::schedule::{
    eta_practical, eta_thm1, lambda_max, solve_coefficients, AdaptiveConfig, AdaptiveScheduler, Phase,
    TheoreticalParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VerifyOptions {
    /// Skip the tiny-MLP sweep and ablation, which dominate the runtime.
    pub quick: bool,
}

/// Seed for every random draw made by the checks.
const VERIFY_SEED: u64 = 0x7e5f;

pub fn run_verify(opts: VerifyOptions) -> VerifyReport {
    let mut checks = Vec::new();
    let mut add = |name: &str, r: Result<Vec<Check>>| match r {
        Ok(v) => checks.extend(v),
        Err(e) => checks.push(Check::at_most(format!("{name} ({e})"), f64::NAN, 0.0)),
    };
    add("constraints", constraint_checks());
    add("kappa", kappa_checks());
    add("orthogonalization", orthogonalization_checks());
    add("thm1_quadratic", thm1_checks());
    add("thm2_coshsum", thm2_checks());
    add("warmup_shape", shape_checks());
    add("algorithm1", algorithm1_checks());
    add("thm3_least_squares", thm3_checks());
    add("fit", fit_checks());
    add("grad_check", grad_checks());
    if !opts.quick {
        add("mlp_sweep", sweep_checks());
    }
    let passed = checks.iter().all(|c| c.passed);
    VerifyReport { passed, checks }
}

fn constraint_checks() -> Result<Vec<Check>> {
    let mut r = rng(VERIFY_SEED, 1);
    let mut worst = 0.0_f64;
    let mut all_pass = true;
    for _ in 0..100 {
        let lr = 10f64.powf(r.random_range(-5.0..-1.0));
        let div = 1.0 + 10f64.powf(r.random_range(-2.0..3.0));
        let delta0 = 10f64.powf(r.random_range(-1.0..1.5));
        let delta_prime = delta0 * r.random_range(0.02..0.98);
        let rep = verify_constraints(&solve_coefficients(lr, div, delta0, delta_prime)?);
        all_pass &= rep.passed();
        for name in ["stationary", "peak", "floor"] {
            worst = worst.max(rep.get(name).map_or(f64::INFINITY, |c| c.measured));
        }
    }
    let mut constraints = Check::at_most("constraints_random_100", worst, 1e-9);
    constraints.passed &= all_pass;

    let c = solve_coefficients(1e-3, 100.0, 8.0, 2.0)?;
    let worked = [(c.k0, 88000.0), (c.k1, -87000.0), (c.k2, 22000.0)]
        .iter()
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max);

    let c1 = solve_coefficients(0.01, 1.0, 5.0, 1.5)?;
    let mut flat = 0.0_f64;
    for k in 1..=4096 {
        let d = 5.0 * k as f64 / 4096.0;
        flat = flat.max((eta_practical(d, &c1)? - 0.01).abs() / 0.01);
    }

    let mut mutated = solve_coefficients(1e-2, 3.25, 4.0, 1.0)?;
    mutated.k1 = -mutated.k1;
    let failed = verify_constraints(&mutated)
        .checks
        .iter()
        .filter(|c| !c.passed)
        .count();
    Ok(vec![
        constraints,
        Check::at_most("constraints_worked_case", worked, 1e-9),
        Check::at_most("div1_constant", flat, 1e-12),
        Check::above("mutation_k1_sign_flip_failed_checks", failed as f64, 0.0),
    ])
}

fn random_shapes(r: &mut impl Rng) -> Result<ShapeSpec> {
    let n = r.random_range(1..=4);
    ShapeSpec::new(
        (0..n)
            .map(|_| (r.random_range(1..=12), r.random_range(1..=12)))
            .collect(),
    )
}

fn kappa_checks() -> Result<Vec<Check>> {
    let mut r = rng(VERIFY_SEED, 2);
    let mut formula = 0.0_f64;
    let mut witness = 0.0_f64;
    for _ in 0..50 {
        let shapes = random_shapes(&mut r)?;
        let layers = shapes.layers();
        let expect = [
            (GeometryKind::Euclidean, 1.0),
            (GeometryKind::EntrywiseMax, layers.iter().map(|(m, n)| (m * n) as f64).sum()),
            (GeometryKind::Spectral, layers.iter().map(|(m, n)| *m.min(n) as f64).sum()),
        ];
        for (geom, want) in expect {
            let k = kappa(&shapes, &geom)?;
            formula = formula.max((k - want).abs());
            let u = kappa_witness(&shapes, &geom)?;
            let fro2 = u.frobenius_norm().powi(2);
            witness = witness
                .max((fro2 - k).abs() / k)
                .max((primal_norm(&u, &geom)? - 1.0).abs());
        }
    }
    Ok(vec![
        Check::at_most("kappa_formula", formula, 0.0),
        Check::at_most("kappa_witness", witness, 1e-9),
    ])
}

/// Random `m x n` matrix with singular values spread over `[1, cond]`.
fn conditioned(r: &mut impl Rng, m: usize, n: usize, cond: f64) -> Result<Matrix> {
    let g = Matrix::from_fn(m, n, |_, _| r.random_range(-1.0..1.0));
    let s = svd(&g)?;
    let k = m.min(n);
    let sv: Vec<f64> = (0..k)
        .map(|i| cond.powf(i as f64 / (k - 1).max(1) as f64))
        .collect();
    let mut out = Matrix::zeros(m, n);
    for (i, sigma) in sv.iter().enumerate() {
        for a in 0..m {
            for b in 0..n {
                let v = out.get(a, b) + sigma * s.u.get(a, i) * s.v.get(b, i);
                out.set(a, b, v);
            }
        }
    }
    Ok(out)
}

fn orthogonalization_checks() -> Result<Vec<Check>> {
    let mut r = rng(VERIFY_SEED, 3);
    let mut worst = 0.0_f64;
    for i in 0..100 {
        let (m, n) = if i % 2 == 0 { (8, 8) } else { (16, 4) };
        let g = conditioned(&mut r, m, n, 100.0)?;
        let err = orthogonalize_ns(&g, 5)?
            .add_scaled(&orthogonalize_exact(&g)?, -1.0)?
            .frobenius_norm();
        worst = worst.max(err / (m.min(n) as f64).sqrt());
    }
    Ok(vec![Check::at_most("newton_schulz_vs_svd", worst, 1e-2)])
}

fn thm1_checks() -> Result<Vec<Check>> {
    let mut s = SchedulerConfig::new(SchedulerKind::Thm1);
    s.constants = Some(TheoreticalParams::new(2.0, 1.0, 0.0, 0.0));
    let cfg = RunConfig::new(
        ProblemConfig::new(ProblemKind::Quadratic),
        OptimizerConfig::new(OptimizerKind::NormSgd),
        s,
        RunSection::new(1000, 0),
    );
    let t = run_training(&cfg)?;
    let d = t.rows[0].dist_to_opt.unwrap_or(f64::NAN);
    let rise = t
        .rows
        .windows(2)
        .map(|w| w[1].delta - w[0].delta)
        .fold(f64::NEG_INFINITY, f64::max);
    let bound = 2.0 * d * d / 1000.0;
    let dist = t
        .rows
        .iter()
        .map(|r| r.dist_to_opt.unwrap_or(f64::INFINITY) / d)
        .fold(0.0, f64::max);
    Ok(vec![
        Check::at_most("thm1_gap_monotone", rise, 0.0),
        Check::at_most("thm1_final_gap_over_bound", t.header.final_loss / bound, 1.0),
        Check::at_most("thm1_distance_over_d", dist, 1.0 + 1e-12),
    ])
}

/// Coshsum setup whose fitted constants drive the weight-decay schedule.
pub fn coshsum_fit_config() -> RunConfig {
    let mut p = ProblemConfig::new(ProblemKind::Coshsum);
    p.dim = Some(8);
    RunConfig::new(
        p,
        OptimizerConfig::new(OptimizerKind::NormSgd),
        SchedulerConfig::new(SchedulerKind::Constant).with_lr(0.05, 1.0),
        RunSection::new(300, 0),
    )
}

fn thm2_checks() -> Result<Vec<Check>> {
    let fit_cfg = coshsum_fit_config();
    let params = diagnose(&fit_cfg)?.fit?.upper_params()?;
    let problem = Problem::build(&fit_cfg.problem)?;
    let x0_norm = problem.initial_point(0, None).frobenius_norm();
    let bound = 1.0 / x0_norm.max(1.0 / lambda_max(&params)?);

    let with_lambda = |lambda: f64| {
        let mut s = SchedulerConfig::new(SchedulerKind::Thm2);
        s.constants = Some(params);
        RunConfig::new(
            fit_cfg.problem.clone(),
            OptimizerConfig::new(OptimizerKind::NormSgd).with_weight_decay(lambda),
            s,
            RunSection::new(1000, 0),
        )
    };
    let rejected = matches!(run_training(&with_lambda(1.01 * bound)), Err(Error::Config(_)));
    let t = run_training(&with_lambda(0.9 * bound))?;
    let d0 = t.rows[0].dist_to_opt.unwrap_or(f64::NAN);
    let rise = t
        .rows
        .windows(2)
        .map(|w| w[1].delta - w[0].delta)
        .fold(f64::NEG_INFINITY, f64::max);
    let dist = t
        .rows
        .iter()
        .map(|r| r.dist_to_opt.unwrap_or(f64::INFINITY) / d0)
        .fold(0.0, f64::max);
    let mut gate = Check::at_most("thm2_gate_rejects_large_lambda", 0.0, 0.0);
    gate.passed = rejected;
    let mut mono = Check::at_most("thm2_gap_monotone", rise, 0.0);
    mono.passed &= t.completed();
    Ok(vec![
        gate,
        mono,
        Check::at_most("thm2_distance_over_initial", dist, 1.0 + 1e-12),
    ])
}

fn shape_checks() -> Result<Vec<Check>> {
    let p = TheoreticalParams::new(2.0, 1e-4, 0.0, 1e3);
    let eta: Vec<f64> = (1..=100_000u64)
        .map(|t| eta_thm1(1.0 / t as f64, &p, 1.0))
        .collect::<Result<_>>()?;
    let argmax = eta
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i + 1);
    let peak = (1e3_f64 / 1e-4).sqrt().ceil();
    let a = argmax - 1;
    let shape_ok = eta[1..=a].windows(2).all(|w| w[0] < w[1])
        && eta[a..].windows(2).all(|w| w[0] > w[1]);
    let mut c = Check::at_most("warmup_shape_argmax_offset", (argmax as f64 - peak).abs(), 1.0);
    c.passed &= shape_ok;
    Ok(vec![c])
}

fn algorithm1_checks() -> Result<Vec<Check>> {
    let mut cfg = AdaptiveConfig::new(1e-3, 100.0, 3.2, 100, 11.0);
    cfg.delta_prime = Some(2.0);
    let mut s = AdaptiveScheduler::new(cfg);
    let mut mismatches = 0u32;
    let mut expect = |ok: bool| mismatches += u32::from(!ok);
    let a = s.get_lr(11.2)?;
    expect((a.lr - 1e-5).abs() <= 1e-5 * 1e-9 && a.phase == Phase::Warmup);
    let b = s.get_lr(5.2)?;
    expect((b.lr - 1e-3).abs() <= 1e-3 * 1e-9 && b.phase == Phase::Warmup);
    let c = s.get_lr(4.2)?;
    expect(c.lr == 1e-3 && c.phase == Phase::Decay && s.warmup_steps() == 2);
    expect(s.decay_state().is_some_and(|d| d.t_decay == 98 && d.lr_start == 1e-3));
    let d = s.get_lr(6.0)?;
    expect(d.phase == Phase::Decay && s.warmup_steps() == 2 && s.is_decay());
    Ok(vec![Check::at_most("algorithm1_script_mismatches", mismatches as f64, 0.0)])
}

fn thm3_checks() -> Result<Vec<Check>> {
    let steps = 10_000u64;
    let mut rise = f64::NEG_INFINITY;
    let mut ratio = 0.0_f64;
    for seed in 0..5 {
        let mut p = ProblemConfig::new(ProblemKind::InterpLs);
        p.dim = Some(20);
        p.n_samples = Some(10);
        p.seed = seed;
        let cfg = RunConfig::new(
            p,
            OptimizerConfig::new(OptimizerKind::NormSgd),
            SchedulerConfig::new(SchedulerKind::Thm3),
            RunSection::new(steps, seed),
        );
        let problem = Problem::build(&cfg.problem)?;
        let k = problem
            .objective()
            .known_constants()
            .map_or(f64::NAN, |c| c.curvature(0.0));
        let t = run_training(&cfg)?;
        let d = t.rows[0].dist_to_opt.unwrap_or(f64::NAN);
        for w in t.rows.windows(2) {
            rise = rise.max(w[1].dist_to_opt.unwrap_or(f64::INFINITY) - w[0].dist_to_opt.unwrap_or(0.0));
        }
        let mean = t.rows.iter().map(|r| r.delta).sum::<f64>() / t.rows.len() as f64;
        let kbar = TheoreticalParams::new(2.0, k, 0.0, 0.0).curvature(t.header.max_delta);
        ratio = ratio.max(mean / (d * d * kbar / (steps as f64).sqrt()));
    }
    Ok(vec![
        Check::at_most("thm3_distance_monotone", rise, 0.0),
        Check::at_most("thm3_mean_gap_over_bound", ratio, 1.0),
    ])
}

fn fit_checks() -> Result<Vec<Check>> {
    let mut r = rng(VERIFY_SEED, 4);
    let noise = Normal::new(0.0, 0.01).expect("valid deviation");
    let samples: Vec<SmoothnessSample> = (0..500)
        .map(|_| {
            let d: f64 = r.random_range(0.01..8.0);
            SmoothnessSample {
                delta: d,
                ratio: (5.0 + 2.0 * d + 30.0 * d * d) * (1.0 + noise.sample(&mut r)),
            }
        })
        .collect();
    let fit = fit_quadratic(&samples)?;
    let err = [(fit.k0, 5.0), (fit.k1, 2.0), (fit.k2, 30.0)]
        .iter()
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max);
    Ok(vec![Check::at_most("fit_recovery_relative", err, 0.05)])
}

fn grad_checks() -> Result<Vec<Check>> {
    let mut r = rng(VERIFY_SEED, 5);
    let q = Quadratic::random(ShapeSpec::new(vec![(3, 4), (5, 1)])?, 1);
    let xq = ParamSet::new(vec![
        Matrix::from_fn(3, 4, |_, _| r.random_range(-2.0..2.0)),
        Matrix::from_fn(5, 1, |_, _| r.random_range(-2.0..2.0)),
    ])?;
    let c = CoshSum::new(6)?;
    let xc = ParamSet::from_column(&(0..6).map(|_| r.random_range(-2.0..2.0)).collect::<Vec<_>>());
    let m = Mlp::random(MlpShape { input: 4, hidden: 6 }, 32, 2)?;
    let xm = ParamSet::new(
        m.teacher()
            .layers()
            .iter()
            .map(|l| Matrix::from_fn(l.rows(), l.cols(), |i, j| l.get(i, j) + r.random_range(-0.5..0.5)))
            .collect(),
    )?;
    Ok(vec![
        Check::at_most("grad_check_quadratic", grad_check(&q, &xq)?, 1e-9),
        Check::at_most("grad_check_coshsum", grad_check(&c, &xc)?, 1e-6),
        Check::at_most("grad_check_mlp", grad_check(&m, &xm)?, 1e-5),
    ])
}

/// Pinned tiny-MLP configuration for the warm-up sweep.
pub fn mlp_sweep_config(kind: OptimizerKind) -> RunConfig {
    let mut p = ProblemConfig::new(ProblemKind::Mlp);
    p.hidden = Some(32);
    p.n_data = Some(256);
    let (opt, lr, div) = match kind {
        OptimizerKind::Lion => (OptimizerConfig::lion(0.9, 0.99), 1e-2, 2.0),
        _ => (OptimizerConfig::new(kind).with_beta1(0.9), 0.03, 2.0),
    };
    RunConfig::new(
        p,
        opt,
        SchedulerConfig::new(SchedulerKind::Adaptive).with_lr(lr, div),
        RunSection::new(1000, 0),
    )
}

/// Warm-up lengths compared against the adaptive schedule.
pub const SWEEP_WARMUPS: [u64; 4] = [0, 50, 200, 800];

fn sweep_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (name, kind) in [("normsgd", OptimizerKind::NormSgd), ("lion", OptimizerKind::Lion)] {
        let rows = run_sweep(&mlp_sweep_config(kind), &SWEEP_WARMUPS)?;
        let best = rows[..SWEEP_WARMUPS.len()]
            .iter()
            .map(|r| r.final_loss)
            .fold(f64::INFINITY, f64::min);
        let adaptive = rows[SWEEP_WARMUPS.len()].final_loss;
        out.push(Check::at_most(
            format!("mlp_sweep_{name}_adaptive_over_best"),
            adaptive / best,
            1.10,
        ));
    }
    let cfg = mlp_sweep_config(OptimizerKind::NormSgd);
    let d0 = initial_gap(&cfg)?;
    let rows = run_fstar_ablation(&cfg, &[0.05 * d0, 0.1 * d0, 0.2 * d0, d0])?;
    let finite: Vec<f64> = rows
        .iter()
        .filter(|r| r.f_star < d0)
        .map(|r| r.final_loss)
        .collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(0.0, f64::max);
    let init_row = rows.iter().any(|r| r.f_star >= d0 && r.status == "SchedulerInitError");
    let mut spread = Check::at_most("fstar_ablation_spread", (hi - lo) / lo, 0.20);
    spread.passed &= init_row;
    out.push(spread);
    Ok(out)
}

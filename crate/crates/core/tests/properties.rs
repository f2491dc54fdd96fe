use nalgebra::DMatrix;
use proptest::prelude::*;
use warmup_lab::geometry::{dual_norm, kappa, kappa_witness, lmo, primal_norm, GeometryKind, LayerNorm};
use warmup_lab::param::{singular_values, svd, Matrix, ParamSet, ShapeSpec};
use warmup_lab::schedule::{eta_practical, eta_thm1, solve_coefficients, transition_point, TheoreticalParams};

fn matrix(max: usize) -> impl Strategy<Value = Matrix> {
    (1..=max, 1..=max).prop_flat_map(|(m, n)| {
        prop::collection::vec(-5.0..5.0_f64, m * n)
            .prop_map(move |v| Matrix::from_vec(m, n, v).unwrap())
    })
}

/// A parameter set and a second one of the same shapes.
fn param_pair() -> impl Strategy<Value = (ParamSet, ParamSet)> {
    prop::collection::vec((1..=5usize, 1..=5usize), 1..=3).prop_flat_map(|shapes| {
        let layer = |&(m, n): &(usize, usize)| {
            prop::collection::vec(-5.0..5.0_f64, m * n)
                .prop_map(move |v| Matrix::from_vec(m, n, v).unwrap())
        };
        let a: Vec<_> = shapes.iter().map(layer).collect();
        let b: Vec<_> = shapes.iter().map(layer).collect();
        (a, b).prop_map(|(a, b)| (ParamSet::new(a).unwrap(), ParamSet::new(b).unwrap()))
    })
}

fn geometries(n_layers: usize) -> Vec<GeometryKind> {
    let mixed = (0..n_layers)
        .map(|i| [LayerNorm::Spectral, LayerNorm::Euclidean, LayerNorm::EntrywiseMax][i % 3])
        .collect();
    vec![
        GeometryKind::Euclidean,
        GeometryKind::EntrywiseMax,
        GeometryKind::Spectral,
        GeometryKind::LayerwiseMax(mixed),
    ]
}

fn oracle_singular_values(m: &Matrix) -> Vec<f64> {
    let d = DMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j));
    let mut s: Vec<f64> = d.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn singular_values_match_nalgebra(m in matrix(7)) {
        let ours = singular_values(&m).unwrap();
        let oracle = oracle_singular_values(&m);
        prop_assert_eq!(ours.len(), oracle.len());
        for (a, b) in ours.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-10 * oracle[0].max(1.0), "{ours:?} vs {oracle:?}");
        }
    }

    #[test]
    fn svd_reconstructs_with_orthonormal_factors(m in matrix(7)) {
        let s = svd(&m).unwrap();
        let err = s.reconstruct().add_scaled(&m, -1.0).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-10 * m.frobenius_norm().max(1.0));
        let rank = s.rank();
        let vtv = s.v.transpose().matmul(&s.v).unwrap();
        for i in 0..rank {
            for j in 0..rank {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((vtv.get(i, j) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lmo_attains_the_dual_norm((g, _) in param_pair()) {
        for geom in geometries(g.num_layers()) {
            let q = match lmo(&g, &geom) {
                Ok(q) => q,
                // zero entries or singular values leave the LMO set-valued
                Err(_) => continue,
            };
            let dual = dual_norm(&g, &geom).unwrap();
            let inner = g.inner_product(&q).unwrap();
            prop_assert!(rel_close(inner, -dual, 1e-9), "{geom:?}: {inner} vs {dual}");
            prop_assert!(rel_close(primal_norm(&q, &geom).unwrap(), 1.0, 1e-9), "{geom:?}");
        }
    }

    #[test]
    fn holder_inequality((g, x) in param_pair()) {
        for geom in geometries(g.num_layers()) {
            let lhs = g.inner_product(&x).unwrap().abs();
            let rhs = dual_norm(&g, &geom).unwrap() * primal_norm(&x, &geom).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12, "{geom:?}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn primal_norm_is_a_norm((x, y) in param_pair(), alpha in -3.0..3.0_f64) {
        for geom in geometries(x.num_layers()) {
            let n = |p: &ParamSet| primal_norm(p, &geom).unwrap();
            let sum = x.add_scaled(&y, 1.0).unwrap();
            prop_assert!(n(&sum) <= (n(&x) + n(&y)) * (1.0 + 1e-12));
            let scaled = x.scale(alpha).unwrap();
            prop_assert!(rel_close(n(&scaled), alpha.abs() * n(&x), 1e-12));
        }
    }

    #[test]
    fn spectral_dual_is_nuclear_norm(m in matrix(6)) {
        let g = ParamSet::single(m.clone());
        let nuclear: f64 = oracle_singular_values(&m).iter().sum();
        prop_assert!(rel_close(dual_norm(&g, &GeometryKind::Spectral).unwrap(), nuclear, 1e-10));
    }

    #[test]
    fn kappa_bounds_frobenius_over_unit_ball((x, _) in param_pair()) {
        let shapes = x.shapes();
        for geom in geometries(x.num_layers()) {
            let k = kappa(&shapes, &geom).unwrap();
            let p = primal_norm(&x, &geom).unwrap();
            prop_assert!(x.frobenius_norm().powi(2) <= k * p * p * (1.0 + 1e-12));
            let u = kappa_witness(&shapes, &geom).unwrap();
            prop_assert!(rel_close(u.frobenius_norm().powi(2), k, 1e-9));
            prop_assert!(rel_close(primal_norm(&u, &geom).unwrap(), 1.0, 1e-9));
        }
    }

    #[test]
    fn practical_schedule_meets_its_constraints(
        lr in 1e-5..1e-1_f64,
        div in 1.0..1e3_f64,
        delta0 in 1e-2..1e2_f64,
        frac in 0.01..0.99_f64,
    ) {
        let dp = frac * delta0;
        let c = solve_coefficients(lr, div, delta0, dp).unwrap();
        let eta = |d: f64| eta_practical(d, &c).unwrap();
        prop_assert!(rel_close(eta(delta0), lr / div, 1e-9));
        prop_assert!(rel_close(eta(dp), lr, 1e-9));
        // Independent stationarity check: the numerator of the derivative of
        // D / (K0 + K1 D + K2 D^2) is K0 - K2 D^2.
        prop_assert!((c.k0 - c.k2 * dp * dp).abs() <= 1e-9 * c.k0.abs().max(c.k2 * dp * dp).max(1e-300));
        for i in 1..=256 {
            let d = delta0 * i as f64 / 256.0;
            let v = eta(d);
            prop_assert!(v > 0.0 && v <= lr * (1.0 + 1e-9));
            if d >= dp {
                prop_assert!(v >= lr / div * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn warmup_side_increases_as_the_gap_shrinks(
        div in 1.5..1e3_f64,
        delta0 in 1e-1..1e2_f64,
        frac in 0.05..0.95_f64,
    ) {
        let dp = frac * delta0;
        let c = solve_coefficients(1e-2, div, delta0, dp).unwrap();
        let grid: Vec<f64> = (0..=200).map(|i| dp + (delta0 - dp) * i as f64 / 200.0).collect();
        for w in grid.windows(2) {
            prop_assert!(eta_practical(w[0], &c).unwrap() >= eta_practical(w[1], &c).unwrap() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn theoretical_step_peaks_at_the_transition_point(
        k0 in 1e-4..1e2_f64,
        k1 in 0.0..1e1_f64,
        krho in 1e-3..1e3_f64,
        rho in 1.2..4.0_f64,
        delta in 1e-6..1e3_f64,
    ) {
        let p = TheoreticalParams::new(rho, k0, k1, krho);
        let dp = transition_point(k0, krho, rho).unwrap();
        // With K1 = 0 the transition point maximizes D / K(D); the K1 term
        // only lowers the value everywhere, so the same bound holds.
        let peak = dp / (k0 + krho * dp.powf(rho));
        prop_assert!(eta_thm1(delta, &p, 1.0).unwrap() <= peak * (1.0 + 1e-12));
    }
}

#[test]
fn shape_spec_rejects_empty_layers() {
    assert!(ShapeSpec::new(vec![(0, 3)]).is_err());
    assert!(ShapeSpec::new(vec![]).is_err());
}

use barrier_mlmc::extremes::{ExtremeModel, ExtremeTarget, Mode, TransformEvaluator};
use barrier_mlmc::models::{BarrierKind, CevParams, CirParams, ModelSpec, ModelTag};
use barrier_mlmc::pricing::{optimal_samples, survival_factor};
use barrier_mlmc::rng::{inverse_normal_cdf, SeedTag};
use barrier_mlmc::schemes::{coarse_increments, implicit_step, BrownianSkeleton};
use barrier_mlmc::specfun::{kummer_m, tricomi_u, SeriesControl};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn cir() -> impl Strategy<Value = CirParams<f64>> {
    (0.0..3.0, -1.0..1.0, 0.1..2.0, 0.1..10.0).prop_map(|(a, kappa, sigma, x0)| CirParams { a, kappa, sigma, x0 })
}

fn cev() -> impl Strategy<Value = CevParams<f64>> {
    (-0.5..0.5, 0.05..0.5, 1.05..1.6, 1.0..200.0).prop_map(|(mu, sigma, alpha, x0)| CevParams { mu, sigma, alpha, x0 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn transforms_round_trip(p in cir(), q in cev(), x in 1e-3..1e3f64) {
        for spec in [ModelSpec::Cir(p), ModelSpec::Cev(q)] {
            let d = spec.dynamics().unwrap();
            let back = d.inverse_transform(d.transform(x));
            prop_assert!((back - x).abs() <= 1e-12 * x, "{spec:?}: {x} -> {back}");
        }
    }

    #[test]
    fn survival_factor_is_a_probability_increasing_in_distance(
        d0 in 0.0..3.0f64, d1 in 0.0..3.0f64, more in 0.0..1.0f64, gamma in 0.05..2.0f64, h in 1e-4..1.0f64,
    ) {
        for kind in [BarrierKind::DownOut, BarrierKind::UpOut] {
            let s = if kind == BarrierKind::DownOut { 1.0 } else { -1.0 };
            let f = survival_factor(1.0 + s * d0, 1.0 + s * d1, 1.0, kind, gamma, h);
            prop_assert!((0.0..=1.0).contains(&f));
            let g = survival_factor(1.0 + s * (d0 + more), 1.0 + s * d1, 1.0, kind, gamma, h);
            prop_assert!(g >= f);
            let g = survival_factor(1.0 + s * d0, 1.0 + s * (d1 + more), 1.0, kind, gamma, h);
            prop_assert!(g >= f);
        }
    }

    #[test]
    fn implicit_root_solves_the_step_equation(p in cir(), q in cev(), y in 0.05..20.0f64, dt in 1e-4..0.25f64, z in -3.0..3.0f64) {
        let dw = z * dt.sqrt();
        for spec in [ModelSpec::Cir(p), ModelSpec::Cev(q)] {
            let d = spec.dynamics().unwrap();
            if let Ok(next) = implicit_step(&d, spec.tag(), y, dt, dw) {
                prop_assert!(next > 0.0);
                let resid = next - y - d.drift(next) * dt - d.gamma * dw;
                prop_assert!(resid.abs() <= 1e-9 * (1.0 + next.abs() + y.abs()), "{spec:?}: residual {resid}");
            }
        }
    }

    #[test]
    fn generic_solver_agrees_with_closed_forms(q in cev(), y in 0.2..5.0f64, dt in 1e-4..0.1f64, z in -2.0..2.0f64) {
        let spec = ModelSpec::Cev(q);
        let d = spec.dynamics().unwrap();
        let dw = z * dt.sqrt();
        let closed = implicit_step(&d, ModelTag::Cev, y, dt, dw);
        let newton = implicit_step(&d, ModelTag::Generic { l_prime_bound: 0.0 }, y, dt, dw);
        if let (Ok(a), Ok(b)) = (closed, newton) {
            prop_assert!((a - b).abs() <= 1e-10 * a, "{a} vs {b}");
        }
    }

    #[test]
    fn coarse_increments_preserve_the_path(level in 1u32..8, index in 0u64..1_000_000) {
        let sk = BrownianSkeleton::<f64>::generate(level, 1.0, SeedTag::new(1, 2, index));
        let c = coarse_increments(&sk).unwrap();
        prop_assert_eq!(c.len(), sk.fine_increments.len() / 2);
        let (a, b): (f64, f64) = (sk.fine_increments.iter().sum(), c.iter().sum());
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn allocation_decreases_with_level(v0 in 0.1..10.0f64, ratios in prop::collection::vec(0.05..1.0f64, 1..8), eps in 1e-3..1e-1f64) {
        // V_l h_l nonincreasing with h_l = 2^-l means V_l / V_(l-1) <= 2
        let mut v = vec![v0];
        for r in &ratios {
            v.push(v.last().unwrap() * 2.0 * r);
        }
        let costs: Vec<f64> = (0..v.len()).map(|l| 2f64.powi(l as i32)).collect();
        let n = optimal_samples(&v, &costs, eps);
        prop_assert!(n.windows(2).all(|w| w[0] >= w[1]), "{n:?}");
        let var: f64 = v.iter().zip(&n).map(|(v, n)| v / *n as f64).sum();
        prop_assert!(var <= eps * eps * (1.0 + 1e-12));
    }

    #[test]
    fn inverse_normal_is_increasing(p in 1e-12..0.5f64, dp in 1e-9..0.4f64) {
        prop_assert!(inverse_normal_cdf(p + dp) > inverse_normal_cdf(p));
        prop_assert!((inverse_normal_cdf(p) + inverse_normal_cdf(1.0 - p)).abs() < 1e-9);
    }

    #[test]
    fn kummer_transformation(ar in -2.0..2.0f64, ai in -2.0..2.0f64, b in 0.3..4.0f64, z in -4.0..4.0f64) {
        let ctl = SeriesControl::default();
        let a = C64::new(ar, ai);
        let bc = C64::new(b, 0.0);
        let lhs = kummer_m(a, bc, C64::new(z, 0.0), ctl).unwrap();
        let rhs = z.exp() * kummer_m(bc - a, bc, C64::new(-z, 0.0), ctl).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()), "{lhs} vs {rhs}");
    }

    #[test]
    fn confluent_functions_are_conjugate_symmetric(
        ar in -2.0..2.0f64, ai in -3.0..3.0f64, b in 0.2..3.8f64, zr in 0.5..4.0f64, zi in -3.0..3.0f64,
    ) {
        let ctl = SeriesControl::default();
        let (a, b, z) = (C64::new(ar, ai), C64::new(b, 0.0), C64::new(zr, zi));
        let m = kummer_m(a, b, z, ctl).unwrap();
        prop_assert!((kummer_m(a.conj(), b, z.conj(), ctl).unwrap() - m.conj()).norm() <= 1e-12 * m.norm());
        let u = tricomi_u(a, b, z, ctl).unwrap();
        prop_assert!((tricomi_u(a.conj(), b, z.conj(), ctl).unwrap() - u.conj()).norm() <= 1e-8 * u.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn evaluators_are_conjugate_symmetric(u in 0.0..200.0f64, frac in 0.1..0.9f64, pick in 0usize..4, density in any::<bool>()) {
        let cir = ExtremeModel::Cir(CirParams { a: 1.0, kappa: 0.5, sigma: 0.4, x0: 1.0 });
        let cev = ExtremeModel::Cev(CevParams { mu: -0.1, sigma: 0.2, alpha: 1.2, x0: 100.0 });
        let (target, model, z) = match pick {
            0 => (ExtremeTarget::CirSup, cir, 1.0 + frac),
            1 => (ExtremeTarget::CirInf, cir, frac),
            2 => (ExtremeTarget::CevSup, cev, 100.0 * (1.0 + frac)),
            _ => (ExtremeTarget::CevInf, cev, 100.0 * frac),
        };
        let mode = if density { Mode::Density } else { Mode::Cdf };
        let ev = TransformEvaluator::new(target, model, z, mode).unwrap();
        let tol = barrier_mlmc::extremes::QuadratureConfig::default().ode;
        let plus = ev.eval(u, tol).unwrap();
        let minus = ev.eval(-u, tol).unwrap();
        prop_assert!((plus - minus.conj()).norm() <= 1e-8 * (1.0 + plus.norm()), "{plus} vs {minus}");
    }
}

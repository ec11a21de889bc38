//! Statistical checks of the level estimators and both pricing drivers.

use barrier_mlmc::models::{BarrierContract, BarrierKind, CevParams, CirParams, ModelSpec};
use barrier_mlmc::pricing::{estimate_level, mc_price, mlmc_price, Executor, MlmcConfig, PayoffSpec, Problem};
use barrier_mlmc::Error;

fn cir_spec() -> ModelSpec<f64> {
    ModelSpec::Cir(CirParams { a: 1.0, kappa: 0.5, sigma: 0.4, x0: 1.0 })
}

fn cir_down_out() -> Problem<f64> {
    let spec = ModelSpec::Cir(CirParams { a: 0.0, kappa: -0.1, sigma: 2.5, x0: 100.0 });
    Problem::new(&spec, &BarrierContract::new(BarrierKind::DownOut, 90.0, 95.0, 0.1, 0.5)).unwrap()
}

fn z_score(a: f64, va: f64, na: u64, b: f64, vb: f64, nb: u64) -> f64 {
    (a - b) / (va / na as f64 + vb / nb as f64).sqrt()
}

#[test]
fn coarse_payoff_has_the_mean_of_the_level_below() {
    let p = cir_down_out();
    let exec = Executor::sequential();
    let n = 100_000;
    for l in [1, 3] {
        let upper = estimate_level(&p, l, n, 11, &exec).unwrap();
        let lower = estimate_level(&p, l - 1, n, 11, &exec).unwrap();
        let z = z_score(upper.mean_coarse, upper.var_coarse, n, lower.mean_fine, lower.var_fine, n);
        assert!(z.abs() < 3.0, "level {l}: z = {z}");
    }
}

#[test]
fn level_differences_telescope() {
    let p = cir_down_out();
    let exec = Executor::sequential();
    let n = 50_000;
    let stats: Vec<_> = (0..=4).map(|l| estimate_level(&p, l, n, 5, &exec).unwrap()).collect();
    let sum: f64 = stats.iter().map(|s| s.mean_diff).sum();
    let var_sum: f64 = stats.iter().map(|s| s.var_diff / n as f64).sum();
    let top = &stats[4];
    let z = (sum - top.mean_fine) / (var_sum + top.var_fine / n as f64).sqrt();
    assert!(z.abs() < 3.0, "z = {z}");
}

#[test]
fn far_barrier_matches_vanilla_monte_carlo() {
    let c = BarrierContract::new(BarrierKind::UpOut, 1e6, 1.0, 0.05, 1.0);
    let p = Problem::new(&cir_spec(), &c).unwrap();
    let exec = Executor::sequential();
    let eps = 2e-3;
    let cfg = MlmcConfig { n_warm: 2000, ..MlmcConfig::default() };
    let ml = mlmc_price(&p, eps, &cfg, &exec).unwrap();
    let mc = mc_price(&p, eps, 64, 2000, 3, &exec).unwrap();
    let se = (ml.statistical_error_estimate.powi(2) + mc.std_error.powi(2)).sqrt();
    assert!((ml.price - mc.price).abs() < 3.0 * se + ml.bias_estimate, "{} vs {}", ml.price, mc.price);
}

#[test]
fn unit_payoff_prices_to_one() {
    let c = BarrierContract::new(BarrierKind::UpOut, 1e6, 0.0, 0.0, 1.0);
    let p = Problem::new(&cir_spec(), &c).unwrap().with_payoff(PayoffSpec::custom(|_| 1.0));
    let r =
        mlmc_price(&p, 1e-2, &MlmcConfig { n_warm: 100, ..MlmcConfig::default() }, &Executor::sequential()).unwrap();
    assert!((r.price - 1.0).abs() < 1e-2, "{}", r.price);
}

#[test]
fn prices_do_not_depend_on_worker_count() {
    let p = cir_down_out();
    let cfg = MlmcConfig { n_warm: 500, ..MlmcConfig::default() };
    let one = mlmc_price(&p, 5e-2, &cfg, &Executor::sequential()).unwrap();
    let three = mlmc_price(&p, 5e-2, &cfg, &Executor::new(3).unwrap()).unwrap();
    assert_eq!(one.price.to_bits(), three.price.to_bits());
    assert_eq!(one.levels, three.levels);
    let a = mc_price(&p, 5e-2, 8, 500, 9, &Executor::sequential()).unwrap();
    let b = mc_price(&p, 5e-2, 8, 500, 9, &Executor::new(3).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_precision_agrees_with_double() {
    let spec64 = ModelSpec::Cev(CevParams { mu: 0.1, sigma: 0.2, alpha: 1.2, x0: 100.0 });
    let spec32 = ModelSpec::Cev(CevParams { mu: 0.1f32, sigma: 0.2, alpha: 1.2, x0: 100.0 });
    let p64 = Problem::new(&spec64, &BarrierContract::new(BarrierKind::UpOut, 150.0, 90.0, 0.1, 1.0)).unwrap();
    let p32 = Problem::new(&spec32, &BarrierContract::new(BarrierKind::UpOut, 150.0f32, 90.0, 0.1, 1.0)).unwrap();
    let exec = Executor::sequential();
    let a = estimate_level(&p64, 3, 20_000, 1, &exec).unwrap();
    let b = estimate_level(&p32, 3, 20_000, 1, &exec).unwrap();
    // same normals, so the two means differ only by rounding
    assert!((a.mean_fine - b.mean_fine).abs() < 1e-3 * a.mean_fine.abs(), "{} vs {}", a.mean_fine, b.mean_fine);
}

#[test]
fn frequent_positivity_loss_is_an_error() {
    // a = 0 with the start near zero: the implicit equation often has no positive root
    let spec = ModelSpec::Cir(CirParams { a: 0.0, kappa: 0.0, sigma: 2.0, x0: 0.05 });
    let p = Problem::new(&spec, &BarrierContract::new(BarrierKind::UpOut, 10.0, 0.0, 0.0, 1.0)).unwrap();
    let r = estimate_level(&p, 4, 5_000, 1, &Executor::sequential());
    assert!(matches!(r, Err(Error::PositivityThreshold { .. })), "{r:?}");
}

#[test]
fn small_sample_counts_are_rejected() {
    let r = estimate_level(&cir_down_out(), 2, 1, 1, &Executor::sequential());
    assert!(matches!(r, Err(Error::Parameter(_))));
}

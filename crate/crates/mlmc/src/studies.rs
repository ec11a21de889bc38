//! Convergence and level-structure experiments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{LampertiDynamics, ModelTag};
use crate::pricing::{
    allocation_costs, cost_per_sample, estimate_level, mc_cost_estimate, mlmc_price, optimal_samples, Executor,
    LevelStats, MlmcConfig, MlmcResult, Problem, StepsRule, CHUNK, POSITIVITY_THRESHOLD,
};
use crate::real::Real;
use crate::rng::{streams, SeedTag};
use crate::schemes::{path_into, BrownianSkeleton};

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// [`estimate_level`] for each level with `n` samples.
pub fn level_study<T: Real>(
    problem: &Problem<T>,
    levels: impl IntoIterator<Item = u32>,
    n: u64,
    seed: u64,
    exec: &Executor,
) -> Result<Vec<LevelStats>> {
    levels.into_iter().map(|l| estimate_level(problem, l, n, seed, exec)).collect()
}

/// One accuracy target of a cost comparison; costs are in step solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub epsilon: f64,
    /// `None` when the MLMC run was replaced by a prediction.
    pub price: Option<f64>,
    pub mlmc_cost: f64,
    pub mc_cost: f64,
    pub saving: f64,
    pub finest_level: u32,
    pub mc_steps: u64,
    pub predicted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComplexitySettings {
    pub steps: StepsRule,
    /// Targets whose predicted MLMC cost exceeds this are not run.
    pub max_run_cost: f64,
}

impl Default for ComplexitySettings {
    fn default() -> Self {
        Self { steps: StepsRule::Calibrated, max_run_cost: 4e8 }
    }
}

/// Cost of `mlmc_price` at `epsilon` extrapolated from the level statistics
/// of an earlier run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPrediction {
    pub finest_level: u32,
    pub mlmc_cost: f64,
    /// `var_fine` on the finest level, the baseline's per-sample variance.
    pub var_fine: f64,
}

/// Extends `|mean_diff|` and `var_diff` geometrically past the last
/// observed level, with rates fitted over the last four levels (at least
/// level 1), then applies the driver's stopping rule and allocation.
pub fn predict_mlmc_cost(levels: &[LevelStats], epsilon: f64, cfg: &MlmcConfig) -> Result<CostPrediction> {
    let top = levels.len().checked_sub(1).ok_or_else(|| Error::Level("no level statistics".into()))?;
    let lo = top.saturating_sub(3).max(1);
    let rate = |f: &dyn Fn(&LevelStats) -> f64| -> f64 {
        if top < lo + 1 {
            return 1.0;
        }
        let xs: Vec<f64> = (lo..=top).map(|l| l as f64).collect();
        let ys: Vec<f64> = (lo..=top).map(|l| f(&levels[l]).max(f64::MIN_POSITIVE).log2()).collect();
        (-fit_slope(&xs, &ys)).max(0.5)
    };
    let alpha = rate(&|l| l.mean_diff.abs());
    let beta = rate(&|l| l.var_diff);
    let mut means: Vec<f64> = levels.iter().map(|l| l.mean_diff.abs()).collect();
    let mut vars: Vec<f64> = levels.iter().map(|l| l.var_diff.max(f64::MIN_POSITIVE)).collect();
    let var_fine = levels[top].var_fine;
    let target = epsilon / 2f64.sqrt();
    let bias = |m: f64| m / (2f64.powf(cfg.alpha_hat) - 1.0);
    let mut big_l = cfg.l_min as usize;
    loop {
        while means.len() <= big_l {
            let (m, v) = (*means.last().unwrap(), *vars.last().unwrap());
            means.push(m * 2f64.powf(-alpha));
            vars.push(v * 2f64.powf(-beta));
        }
        if bias(means[big_l]) <= target {
            break;
        }
        if big_l as u32 >= cfg.l_max {
            return Err(Error::NonConvergence {
                bias: bias(means[big_l]),
                target,
                l_max: cfg.l_max,
                levels: big_l + 1,
            });
        }
        big_l += 1;
    }
    let n = optimal_samples(&vars[..=big_l], &allocation_costs(big_l as u32), epsilon);
    let mlmc_cost = n
        .iter()
        .enumerate()
        .map(|(l, &n)| {
            let n = if l as u32 <= cfg.l_min { n.max(cfg.n_warm) } else { n.max(2) };
            n as f64 * cost_per_sample(l as u32)
        })
        .sum();
    Ok(CostPrediction { finest_level: big_l as u32, mlmc_cost, var_fine })
}

/// MLMC against the single-level baseline for each `epsilon`, largest
/// first. The baseline cost is `mc_cost_estimate` with the finest level's
/// `var_fine`; a `Calibrated` steps rule is fitted to the last MLMC run.
/// MLMC targets predicted to cost more than `settings.max_run_cost` are
/// extrapolated from the last run instead of run.
pub fn complexity<T: Real>(
    problem: &Problem<T>,
    epsilons: &[f64],
    cfg: &MlmcConfig,
    settings: &ComplexitySettings,
    exec: &Executor,
) -> Result<(Vec<ComplexityRow>, Vec<MlmcResult>)> {
    let mut eps = epsilons.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    let mut partial = Vec::with_capacity(eps.len());
    let mut runs: Vec<MlmcResult> = Vec::new();
    for &e in &eps {
        let guess = match runs.last() {
            Some(r) => Some(predict_mlmc_cost(&r.levels, e, cfg)?),
            None => None,
        };
        partial.push(match guess {
            Some(p) if p.mlmc_cost > settings.max_run_cost => (e, None, p.mlmc_cost, p.finest_level, p.var_fine),
            _ => {
                let r = mlmc_price(problem, e, cfg, exec)?;
                let top = r.levels.last().unwrap();
                let row = (e, Some(r.price), r.total_cost_units, top.level, top.var_fine);
                runs.push(r);
                row
            }
        });
    }
    let maturity = problem.contract.maturity.to_f64_lossy();
    let rule = match runs.last() {
        Some(r) => settings.steps.calibrate(&r.levels, maturity),
        None => settings.steps,
    };
    let mut rows = Vec::with_capacity(partial.len());
    for (epsilon, price, mlmc_cost, level, var_fine) in partial {
        let mc_steps = rule.steps(epsilon, Some(level))?;
        let mc_cost = mc_cost_estimate(var_fine, epsilon, mc_steps);
        rows.push(ComplexityRow {
            epsilon,
            price,
            mlmc_cost,
            mc_cost,
            saving: mc_cost / mlmc_cost,
            finest_level: level,
            mc_steps,
            predicted: price.is_none(),
        });
    }
    Ok((rows, runs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongError {
    pub level: u32,
    /// Mean over paths of the largest grid deviation from the reference path.
    pub sup_error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongStudy {
    pub errors: Vec<StrongError>,
    /// `-slope` of `log2 sup_error` against the level.
    pub order: f64,
    pub n_paths: u64,
    pub positivity_failures: u64,
}

/// Pathwise error of the scheme at each level against a reference level on
/// the same Brownian path, measured at the coarse grid points.
#[allow(clippy::too_many_arguments)]
pub fn strong_convergence<T: Real>(
    dyn_: &LampertiDynamics<T>,
    tag: ModelTag<T>,
    y0: T,
    maturity: T,
    levels: &[u32],
    reference: u32,
    n_paths: u64,
    seed: u64,
    exec: &Executor,
) -> Result<StrongStudy> {
    if levels.is_empty() || levels.iter().any(|&l| l + 2 > reference) {
        return Err(Error::Level("reference level must exceed every test level by at least 2".into()));
    }
    let k = levels.len();
    let n_chunks = n_paths.div_ceil(CHUNK) as usize;
    let parts = exec.map(n_chunks, |c| -> Result<(Vec<f64>, Vec<f64>, u64, u64)> {
        let lo = c as u64 * CHUNK;
        let hi = (lo + CHUNK).min(n_paths);
        let (mut s1, mut s2) = (vec![0.0; k], vec![0.0; k]);
        let (mut n, mut fail) = (0, 0);
        let mut fine = Vec::new();
        let mut coarse = Vec::new();
        'paths: for i in lo..hi {
            let sk = BrownianSkeleton::generate(reference, maturity, SeedTag::new(seed, streams::STUDY | 0xffff, i));
            let mut errs = vec![0.0; k];
            let run = path_into(dyn_, tag, y0, sk.h(), &sk.fine_increments, &mut fine);
            if let Err(e) = run {
                if matches!(e, Error::PositivityLoss { .. }) {
                    fail += 1;
                    continue;
                }
                return Err(e);
            }
            for (j, &l) in levels.iter().enumerate() {
                let r = sk.restrict(l)?;
                match path_into(dyn_, tag, y0, r.h(), &r.fine_increments, &mut coarse) {
                    Ok(()) => {}
                    Err(Error::PositivityLoss { .. }) => {
                        fail += 1;
                        continue 'paths;
                    }
                    Err(e) => return Err(e),
                }
                let stride = 1usize << (reference - l);
                errs[j] = coarse
                    .iter()
                    .enumerate()
                    .map(|(m, &y)| (y - fine[m * stride]).abs().to_f64_lossy())
                    .fold(0.0, f64::max);
            }
            n += 1;
            for j in 0..k {
                s1[j] += errs[j];
                s2[j] += errs[j] * errs[j];
            }
        }
        Ok((s1, s2, n, fail))
    });
    let (mut s1, mut s2) = (vec![0.0; k], vec![0.0; k]);
    let (mut n, mut fail) = (0u64, 0u64);
    for p in parts {
        let (a, b, m, f) = p?;
        for j in 0..k {
            s1[j] += a[j];
            s2[j] += b[j];
        }
        n += m;
        fail += f;
    }
    if n < 2 || fail as f64 > POSITIVITY_THRESHOLD * (n + fail) as f64 {
        return Err(Error::PositivityThreshold {
            level: reference,
            rate: fail as f64 / (n + fail) as f64,
            threshold: POSITIVITY_THRESHOLD,
        });
    }
    let nf = n as f64;
    let errors: Vec<StrongError> = levels
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let m = s1[j] / nf;
            let v = ((s2[j] - s1[j] * m) / (nf - 1.0)).max(0.0);
            StrongError { level: l, sup_error: m, std_error: (v / nf).sqrt() }
        })
        .collect();
    let xs: Vec<f64> = errors.iter().map(|e| e.level as f64).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.sup_error.log2()).collect();
    Ok(StrongStudy { order: -fit_slope(&xs, &ys), errors, n_paths: n, positivity_failures: fail })
}

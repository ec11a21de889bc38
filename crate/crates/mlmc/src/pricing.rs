//! Brownian-bridge survival factors, level payoffs and the MLMC driver.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{map_barrier, BarrierContract, BarrierKind, LampertiDynamics, ModelSpec, ModelTag};
use crate::real::Real;
use crate::rng::{streams, GaussianStream, SeedTag};
use crate::schemes::{path_into, simulate_coupled_into, BrownianSkeleton, CoupledLevelSample};

/// Samples per work unit. Part of the determinism contract: partial sums are
/// formed per chunk and reduced in chunk order.
pub const CHUNK: u64 = 1024;

/// Probability that the Brownian interpolation between `y0` and `y1` stays
/// on the live side of `barrier` over a step of length `h`.
#[inline]
pub fn survival_factor<T: Real>(y0: T, y1: T, barrier: T, kind: BarrierKind, gamma: T, h: T) -> T {
    let (d0, d1) = match kind {
        BarrierKind::DownOut => (y0 - barrier, y1 - barrier),
        BarrierKind::UpOut => (barrier - y0, barrier - y1),
    };
    if !(d0 > T::zero() && d1 > T::zero()) {
        return T::zero();
    }
    let e = T::lit(2.0) * d0 * d1 / (gamma * gamma * h);
    // beyond this exponent 1 - exp(-e) rounds to 1
    if e > -(T::epsilon() * T::lit(0.25)).ln() {
        T::one()
    } else {
        -(-e).exp_m1()
    }
}

#[derive(Clone)]
pub enum PayoffKind<T> {
    DiscountedCall {
        strike: T,
    },
    /// Arbitrary function of the terminal `Y` value, discounting included.
    Custom(Arc<dyn Fn(T) -> T + Send + Sync>),
}

/// Terminal payoff `g(y)` in `Y` coordinates.
#[derive(Clone)]
pub struct PayoffSpec<T> {
    pub kind: PayoffKind<T>,
    pub discount: T,
}

impl<T: std::fmt::Debug> std::fmt::Debug for PayoffSpec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            PayoffKind::DiscountedCall { strike } => write!(f, "DiscountedCall(K={strike:?}, df={:?})", self.discount),
            PayoffKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl<T: Real> PayoffSpec<T> {
    pub fn discounted_call(strike: T, rate: T, maturity: T) -> Self {
        Self { kind: PayoffKind::DiscountedCall { strike }, discount: (-rate * maturity).exp() }
    }

    pub fn for_contract(c: &BarrierContract<T>) -> Self {
        Self::discounted_call(c.strike, c.rate, c.maturity)
    }

    pub fn custom(f: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self { kind: PayoffKind::Custom(Arc::new(f)), discount: T::one() }
    }

    #[inline]
    pub fn eval(&self, dyn_: &LampertiDynamics<T>, y: T) -> T {
        match &self.kind {
            PayoffKind::DiscountedCall { strike } => {
                self.discount * (dyn_.inverse_transform(y) - *strike).max(T::zero())
            }
            PayoffKind::Custom(f) => f(y),
        }
    }
}

/// A priced problem: dynamics, solver, start value and a mapped contract.
#[derive(Clone, Debug)]
pub struct Problem<T> {
    pub dynamics: LampertiDynamics<T>,
    pub tag: ModelTag<T>,
    pub y0: T,
    pub contract: BarrierContract<T>,
    pub payoff: PayoffSpec<T>,
}

impl<T: Real> Problem<T> {
    pub fn new(spec: &ModelSpec<T>, contract: &BarrierContract<T>) -> Result<Self> {
        let dynamics = spec.dynamics()?;
        let contract = map_barrier(contract, &dynamics, spec.x0())?;
        Ok(Self {
            y0: dynamics.transform(spec.x0()),
            tag: spec.tag(),
            payoff: PayoffSpec::for_contract(&contract),
            dynamics,
            contract,
        })
    }

    pub fn with_payoff(mut self, payoff: PayoffSpec<T>) -> Self {
        self.payoff = payoff;
        self
    }
}

/// `g(Y_T)` times the survival factors over consecutive grid values.
pub fn fine_level_payoff<T: Real>(problem: &Problem<T>, path: &[T]) -> T {
    let (b, kind) = problem.contract.y_barrier();
    let n = path.len() - 1;
    let h = problem.contract.maturity / T::from_usize(n).unwrap();
    let g = problem.dynamics.gamma;
    let mut prod = T::one();
    for w in path.windows(2) {
        prod = prod * survival_factor(w[0], w[1], b, kind, g, h);
        if prod == T::zero() {
            return T::zero();
        }
    }
    prod * problem.payoff.eval(&problem.dynamics, path[n])
}

/// Coarse payoff on the fine time grid: factors alternate between
/// (node, midpoint) and (midpoint, next node), each with the fine step.
pub fn coarse_level_payoff<T: Real>(problem: &Problem<T>, sample: &CoupledLevelSample<T>) -> T {
    let (b, kind) = problem.contract.y_barrier();
    let cv = &sample.coarse_values;
    let mid = &sample.coarse_midpoints;
    let h = problem.contract.maturity / T::from_usize(2 * mid.len()).unwrap();
    let g = problem.dynamics.gamma;
    let mut prod = T::one();
    for i in 0..mid.len() {
        prod = prod * survival_factor(cv[i], mid[i], b, kind, g, h) * survival_factor(mid[i], cv[i + 1], b, kind, g, h);
        if prod == T::zero() {
            return T::zero();
        }
    }
    prod * problem.payoff.eval(&problem.dynamics, sample.terminal_coarse())
}

/// Running sums for the three tracked quantities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Sums {
    pub n: u64,
    pub diff: f64,
    pub diff2: f64,
    pub fine: f64,
    pub fine2: f64,
    pub coarse: f64,
    pub coarse2: f64,
    pub failures: u64,
}

impl Sums {
    fn push(&mut self, fine: f64, coarse: f64) {
        let d = fine - coarse;
        self.n += 1;
        self.diff += d;
        self.diff2 += d * d;
        self.fine += fine;
        self.fine2 += fine * fine;
        self.coarse += coarse;
        self.coarse2 += coarse * coarse;
    }

    pub fn merge(&mut self, o: &Sums) {
        self.n += o.n;
        self.diff += o.diff;
        self.diff2 += o.diff2;
        self.fine += o.fine;
        self.fine2 += o.fine2;
        self.coarse += o.coarse;
        self.coarse2 += o.coarse2;
        self.failures += o.failures;
    }
}

fn mean_var(n: u64, s: f64, s2: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let nf = n as f64;
    let m = s / nf;
    let v = if n > 1 { ((s2 - s * m) / (nf - 1.0)).max(0.0) } else { 0.0 };
    (m, v)
}

/// Fine-step solves per sample at level `l`, fine plus coarse path.
pub fn cost_per_sample(level: u32) -> f64 {
    if level == 0 {
        1.0
    } else {
        let f = (1u64 << level) as f64;
        f + f / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: u32,
    pub n_samples: u64,
    pub mean_diff: f64,
    pub var_diff: f64,
    pub mean_fine: f64,
    pub var_fine: f64,
    pub mean_coarse: f64,
    pub var_coarse: f64,
    pub cost_units: f64,
    pub positivity_failures: u64,
    pub sums: Sums,
}

impl LevelStats {
    pub fn from_sums(level: u32, sums: Sums) -> Self {
        let (mean_diff, var_diff) = mean_var(sums.n, sums.diff, sums.diff2);
        let (mean_fine, var_fine) = mean_var(sums.n, sums.fine, sums.fine2);
        let (mean_coarse, var_coarse) = mean_var(sums.n, sums.coarse, sums.coarse2);
        Self {
            level,
            n_samples: sums.n,
            mean_diff,
            var_diff,
            mean_fine,
            var_fine,
            mean_coarse,
            var_coarse,
            cost_units: sums.n as f64 * cost_per_sample(level),
            positivity_failures: sums.failures,
            sums,
        }
    }
}

/// Runs chunked work on a fixed-size rayon pool, or inline for one worker.
pub struct Executor {
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    pub fn new(workers: usize) -> Result<Self> {
        if workers <= 1 {
            return Ok(Self { pool: None });
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
        Ok(Self { pool: Some(pool) })
    }

    pub fn sequential() -> Self {
        Self { pool: None }
    }

    pub fn workers(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    /// `f` applied to `0..n`, results in index order.
    pub fn map<R: Send>(&self, n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
        match &self.pool {
            None => (0..n).map(f).collect(),
            Some(p) => p.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Executor({})", self.workers())
    }
}

/// Chunked sampling over the index range `[start, start + n)`.
fn sample_range<T: Real>(
    exec: &Executor,
    start: u64,
    n: u64,
    one: impl Fn(u64, &mut Scratch<T>) -> Result<(f64, f64)> + Sync + Send,
) -> Result<Sums> {
    let n_chunks = n.div_ceil(CHUNK) as usize;
    let parts = exec.map(n_chunks, |c| -> Result<Sums> {
        let lo = start + c as u64 * CHUNK;
        let hi = (lo + CHUNK).min(start + n);
        let mut s = Sums::default();
        let mut scratch = Scratch::default();
        for i in lo..hi {
            match one(i, &mut scratch) {
                Ok((f, c)) => s.push(f, c),
                Err(Error::PositivityLoss { .. }) => s.failures += 1,
                Err(e) => return Err(e),
            }
        }
        Ok(s)
    });
    let mut total = Sums::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

struct Scratch<T> {
    skeleton: BrownianSkeleton<T>,
    sample: CoupledLevelSample<T>,
    buf: Vec<T>,
    rng: Option<GaussianStream>,
}

fn cached_stream(slot: &mut Option<GaussianStream>, master: u64, stream: u64, draws: u64) -> &mut GaussianStream {
    if !matches!(slot, Some(g) if g.serves(master, stream, draws)) {
        *slot = Some(GaussianStream::new(master, stream, draws));
    }
    slot.as_mut().unwrap()
}

impl<T: Real> Default for Scratch<T> {
    fn default() -> Self {
        Self {
            skeleton: BrownianSkeleton {
                level: 0,
                maturity: T::one(),
                fine_increments: Vec::new(),
                seed_tag: SeedTag::new(0, 0, 0),
            },
            sample: CoupledLevelSample::default(),
            buf: Vec::new(),
            rng: None,
        }
    }
}

/// Level-`l` payoff pair `(fine, coarse)` for sample `index`; the coarse
/// value is 0 at level 0.
fn level_sample<T: Real>(
    problem: &Problem<T>,
    level: u32,
    seed: u64,
    index: u64,
    s: &mut Scratch<T>,
) -> Result<(f64, f64)> {
    s.skeleton.level = level;
    s.skeleton.maturity = problem.contract.maturity;
    let tag = SeedTag::new(seed, streams::level(streams::MLMC, level), index);
    let g = cached_stream(&mut s.rng, tag.master, tag.stream, 1 << level);
    s.skeleton.regenerate_from(g, tag);
    if level == 0 {
        let h = s.skeleton.h();
        path_into(&problem.dynamics, problem.tag, problem.y0, h, &s.skeleton.fine_increments, &mut s.buf)?;
        return Ok((fine_level_payoff(problem, &s.buf).to_f64_lossy(), 0.0));
    }
    simulate_coupled_into(&problem.dynamics, problem.tag, problem.y0, &s.skeleton, &mut s.buf, &mut s.sample)?;
    let f = fine_level_payoff(problem, &s.sample.fine_values).to_f64_lossy();
    let c = coarse_level_payoff(problem, &s.sample).to_f64_lossy();
    Ok((f, c))
}

/// Default drop-and-count threshold for positivity failures.
pub const POSITIVITY_THRESHOLD: f64 = 1e-3;

fn check_positivity(level: u32, s: &Sums, threshold: f64) -> Result<()> {
    let tried = s.n + s.failures;
    if tried == 0 {
        return Ok(());
    }
    let rate = s.failures as f64 / tried as f64;
    if rate > threshold {
        return Err(Error::PositivityThreshold { level, rate, threshold });
    }
    Ok(())
}

/// Sample statistics of `P_l^f - P_{l-1}^c` (or `P_0^f`) over sample
/// indices `[0, n_samples)`.
pub fn estimate_level<T: Real>(
    problem: &Problem<T>,
    level: u32,
    n_samples: u64,
    seed: u64,
    exec: &Executor,
) -> Result<LevelStats> {
    if n_samples < 2 {
        return Err(Error::Parameter("estimate_level needs at least 2 samples".into()));
    }
    let sums = extend_level(problem, level, 0, n_samples, seed, exec)?;
    check_positivity(level, &sums, POSITIVITY_THRESHOLD)?;
    Ok(LevelStats::from_sums(level, sums))
}

fn extend_level<T: Real>(
    problem: &Problem<T>,
    level: u32,
    start: u64,
    n: u64,
    seed: u64,
    exec: &Executor,
) -> Result<Sums> {
    sample_range(exec, start, n, |i, s| level_sample(problem, level, seed, i, s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlmcConfig {
    pub n_warm: u64,
    pub l_min: u32,
    pub l_max: u32,
    /// Assumed weak order for the bias extrapolation.
    pub alpha_hat: f64,
    pub seed: u64,
    pub workers: usize,
    pub positivity_threshold: f64,
}

impl Default for MlmcConfig {
    fn default() -> Self {
        Self {
            n_warm: 10_000,
            l_min: 2,
            l_max: 12,
            alpha_hat: 1.0,
            seed: 2024,
            workers: 1,
            positivity_threshold: POSITIVITY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmcResult {
    pub price: f64,
    pub levels: Vec<LevelStats>,
    pub total_cost_units: f64,
    pub epsilon_target: f64,
    pub bias_estimate: f64,
    pub statistical_error_estimate: f64,
}

impl MlmcResult {
    pub fn finest_level(&self) -> u32 {
        self.levels.last().map_or(0, |l| l.level)
    }
}

/// Optimal sample counts `N_l = ceil(eps^-2 sqrt(V_l / C_l) sum_j sqrt(V_j C_j))`,
/// which put the estimator variance at or below `eps^2`.
pub fn optimal_samples(variances: &[f64], costs: &[f64], epsilon: f64) -> Vec<u64> {
    let total: f64 = variances.iter().zip(costs).map(|(v, c)| (v * c).sqrt()).sum();
    variances.iter().zip(costs).map(|(v, c)| ((v / c).sqrt() * total / (epsilon * epsilon)).ceil() as u64).collect()
}

/// Per-sample cost `1 / h_l` (in units of `1 / T`) used by the allocation.
pub(crate) fn allocation_costs(big_l: u32) -> Vec<f64> {
    (0..=big_l).map(|l| 2f64.powi(l as i32)).collect()
}

/// Adaptive multilevel estimator with root-mean-square accuracy `epsilon`.
pub fn mlmc_price<T: Real>(
    problem: &Problem<T>,
    epsilon: f64,
    cfg: &MlmcConfig,
    exec: &Executor,
) -> Result<MlmcResult> {
    if !(epsilon > 0.0) {
        return Err(Error::Parameter("epsilon must be > 0".into()));
    }
    if cfg.l_min > cfg.l_max || cfg.n_warm < 2 {
        return Err(Error::Parameter("need l_min <= l_max and n_warm >= 2".into()));
    }
    let mut big_l = cfg.l_min;
    let mut sums = vec![Sums::default(); big_l as usize + 1];
    let mut pending = vec![cfg.n_warm; big_l as usize + 1];
    let bias_of = |s: &[Sums], l: u32| {
        let m = LevelStats::from_sums(l, s[l as usize]).mean_diff;
        m.abs() / (2f64.powf(cfg.alpha_hat) - 1.0)
    };

    loop {
        for l in 0..=big_l {
            let dn = pending[l as usize];
            if dn > 0 {
                let s = &mut sums[l as usize];
                let start = s.n + s.failures;
                let add = extend_level(problem, l, start, dn, cfg.seed, exec)?;
                s.merge(&add);
                check_positivity(l, s, cfg.positivity_threshold)?;
            }
        }

        let costs = allocation_costs(big_l);
        let vars: Vec<f64> =
            (0..=big_l).map(|l| LevelStats::from_sums(l, sums[l as usize]).var_diff.max(f64::MIN_POSITIVE)).collect();
        let target = optimal_samples(&vars, &costs, epsilon);
        let mut settled = true;
        for l in 0..=big_l as usize {
            let have = sums[l].n;
            let need = target[l].saturating_sub(have);
            let need = if have < 2 { need.max(2 - have) } else { need };
            // small top-ups are deferred until the bias check
            pending[l] = if have >= 2 && (need as f64) <= 0.01 * have as f64 { 0 } else { need };
            if pending[l] > 0 {
                settled = false;
            }
        }
        if !settled {
            continue;
        }

        let bias = bias_of(&sums, big_l);
        if bias <= epsilon / 2f64.sqrt() {
            let levels: Vec<LevelStats> = (0..=big_l).map(|l| LevelStats::from_sums(l, sums[l as usize])).collect();
            let price = levels.iter().map(|l| l.mean_diff).sum();
            let stat = levels.iter().map(|l| l.var_diff / l.n_samples as f64).sum::<f64>().sqrt();
            return Ok(MlmcResult {
                price,
                total_cost_units: levels.iter().map(|l| l.cost_units).sum(),
                levels,
                epsilon_target: epsilon,
                bias_estimate: bias,
                statistical_error_estimate: stat,
            });
        }
        if big_l == cfg.l_max {
            return Err(Error::NonConvergence {
                bias,
                target: epsilon / 2f64.sqrt(),
                l_max: cfg.l_max,
                levels: sums.len(),
            });
        }
        let v_top = LevelStats::from_sums(big_l, sums[big_l as usize]).var_diff.max(f64::MIN_POSITIVE);
        big_l += 1;
        // the new level starts from the extrapolated variance V_{L-1} / 2
        sums.push(Sums::default());
        pending.push(0);
        let costs = allocation_costs(big_l);
        let mut vars: Vec<f64> =
            (0..big_l).map(|l| LevelStats::from_sums(l, sums[l as usize]).var_diff.max(f64::MIN_POSITIVE)).collect();
        vars.push(v_top / 2.0);
        let target = optimal_samples(&vars, &costs, epsilon);
        for l in 0..=big_l as usize {
            pending[l] = target[l].saturating_sub(sums[l].n);
        }
        pending[big_l as usize] = pending[big_l as usize].max(2);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub price: f64,
    pub variance: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub n_steps: u64,
    pub cost_units: f64,
    pub positivity_failures: u64,
}

/// Time-step rule for the single-level baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StepsRule {
    /// `ceil(c / eps)` steps.
    PerEps { c: f64 },
    /// The finest MLMC level's grid, `2^L` steps.
    MlmcLevel,
    /// `PerEps` with `c` from [`weak_error_steps_constant`] on MLMC level
    /// statistics; see [`StepsRule::calibrate`].
    Calibrated,
}

impl StepsRule {
    /// Step count at `epsilon`; `Calibrated` must be resolved first.
    pub fn steps(&self, epsilon: f64, mlmc_level: Option<u32>) -> Result<u64> {
        match *self {
            StepsRule::PerEps { c } => Ok((c / epsilon).ceil().max(1.0) as u64),
            StepsRule::MlmcLevel => Ok(1u64 << mlmc_level.unwrap_or(0)),
            StepsRule::Calibrated => Err(Error::Parameter("calibrated steps rule used before calibration".into())),
        }
    }

    /// Replaces `Calibrated` by `PerEps` fitted to `levels`.
    pub fn calibrate(self, levels: &[LevelStats], maturity: f64) -> StepsRule {
        match self {
            StepsRule::Calibrated => StepsRule::PerEps { c: weak_error_steps_constant(levels, maturity) },
            other => other,
        }
    }
}

/// `C` such that `ceil(C / eps)` steps put the weak error near `eps / sqrt(2)`.
///
/// Under first-order weak convergence `mean_diff_l ~ w h_l`, and the bias of
/// an `n`-step estimator is about `w T / n`. `w` is the geometric mean of
/// `|mean_diff_l| / h_l` over levels `l >= 1` whose mean is at least two
/// standard errors from zero (all levels `l >= 1` if none is).
pub fn weak_error_steps_constant(levels: &[LevelStats], maturity: f64) -> f64 {
    let upper: Vec<&LevelStats> = levels.iter().filter(|l| l.level >= 1).collect();
    let significant: Vec<&LevelStats> =
        upper.iter().copied().filter(|l| l.mean_diff.abs() >= 2.0 * (l.var_diff / l.n_samples as f64).sqrt()).collect();
    let used = if significant.is_empty() { upper } else { significant };
    if used.is_empty() {
        return 1.0;
    }
    let log_w = used
        .iter()
        .map(|l| (l.mean_diff.abs().max(f64::MIN_POSITIVE) * (1u64 << l.level) as f64 / maturity).ln())
        .sum::<f64>()
        / used.len() as f64;
    2f64.sqrt() * log_w.exp() * maturity
}

/// Bridge-corrected payoff on a uniform grid with `n_steps` steps.
fn mc_sample<T: Real>(problem: &Problem<T>, n_steps: u64, seed: u64, index: u64, s: &mut Scratch<T>) -> Result<f64> {
    let sd = (problem.contract.maturity.to_f64_lossy() / n_steps as f64).sqrt();
    let g = cached_stream(&mut s.rng, seed, streams::MC | n_steps.min(u32::MAX as u64), n_steps);
    g.start_sample(index);
    s.skeleton.fine_increments.clear();
    s.skeleton.fine_increments.extend((0..n_steps).map(|_| T::lit(sd * g.normal())));
    let h = problem.contract.maturity / T::from_u64(n_steps).unwrap();
    path_into(&problem.dynamics, problem.tag, problem.y0, h, &s.skeleton.fine_increments, &mut s.buf)?;
    Ok(fine_level_payoff(problem, &s.buf).to_f64_lossy())
}

/// Single-level bridge estimator with `N = ceil(2 var / eps^2)` samples;
/// the variance comes from the first `n_pilot` samples.
pub fn mc_price<T: Real>(
    problem: &Problem<T>,
    epsilon: f64,
    n_steps: u64,
    n_pilot: u64,
    seed: u64,
    exec: &Executor,
) -> Result<McResult> {
    if !(epsilon > 0.0) || n_steps == 0 || n_pilot < 2 {
        return Err(Error::Parameter("need epsilon > 0, n_steps >= 1, n_pilot >= 2".into()));
    }
    let run = |start, n| sample_range(exec, start, n, |i, s| mc_sample(problem, n_steps, seed, i, s).map(|f| (f, 0.0)));
    let mut sums = run(0, n_pilot)?;
    check_positivity(0, &sums, POSITIVITY_THRESHOLD)?;
    let (_, var) = mean_var(sums.n, sums.fine, sums.fine2);
    let n_target = mc_samples(var, epsilon);
    if n_target > sums.n {
        let add = run(n_pilot, n_target - sums.n)?;
        sums.merge(&add);
        check_positivity(0, &sums, POSITIVITY_THRESHOLD)?;
    }
    let (price, variance) = mean_var(sums.n, sums.fine, sums.fine2);
    Ok(McResult {
        price,
        variance,
        std_error: (variance / sums.n as f64).sqrt(),
        n_samples: sums.n,
        n_steps,
        cost_units: sums.n as f64 * n_steps as f64,
        positivity_failures: sums.failures,
    })
}

pub fn mc_samples(variance: f64, epsilon: f64) -> u64 {
    (2.0 * variance / (epsilon * epsilon)).ceil().max(2.0) as u64
}

/// Baseline cost without running it: `ceil(2 var / eps^2) * n_steps`.
pub fn mc_cost_estimate(variance: f64, epsilon: f64, n_steps: u64) -> f64 {
    mc_samples(variance, epsilon) as f64 * n_steps as f64
}

/// Per-path probability that the interpolated scheme stays on the live side
/// of each barrier in `barriers`, averaged over `n_paths` level-`level` paths.
/// Returns the mean and standard error for each barrier.
#[allow(clippy::too_many_arguments)]
pub fn survival_curve<T: Real>(
    dyn_: &LampertiDynamics<T>,
    tag: ModelTag<T>,
    y0: T,
    maturity: T,
    level: u32,
    barriers: &[(T, BarrierKind)],
    n_paths: u64,
    seed: u64,
    exec: &Executor,
) -> Result<(Vec<(f64, f64)>, u64)> {
    let k = barriers.len();
    let n_chunks = n_paths.div_ceil(CHUNK) as usize;
    let parts = exec.map(n_chunks, |c| -> Result<(Vec<f64>, Vec<f64>, u64, u64)> {
        let lo = c as u64 * CHUNK;
        let hi = (lo + CHUNK).min(n_paths);
        let (mut s1, mut s2) = (vec![0.0; k], vec![0.0; k]);
        let (mut n, mut fail) = (0u64, 0u64);
        let mut sk = BrownianSkeleton::from_increments(maturity, vec![T::zero()], SeedTag::new(0, 0, 0)).unwrap();
        sk.level = level;
        let mut path = Vec::new();
        let h = maturity / T::from_u64(1u64 << level).unwrap();
        let stream = streams::level(streams::STUDY, level);
        let mut g = GaussianStream::new(seed, stream, 1 << level);
        for i in lo..hi {
            sk.regenerate_from(&mut g, SeedTag::new(seed, stream, i));
            match path_into(dyn_, tag, y0, h, &sk.fine_increments, &mut path) {
                Ok(()) => {}
                Err(Error::PositivityLoss { .. }) => {
                    fail += 1;
                    continue;
                }
                Err(e) => return Err(e),
            }
            n += 1;
            for (j, &(b, kind)) in barriers.iter().enumerate() {
                let mut p = T::one();
                for w in path.windows(2) {
                    p = p * survival_factor(w[0], w[1], b, kind, dyn_.gamma, h);
                    if p == T::zero() {
                        break;
                    }
                }
                let p = p.to_f64_lossy();
                s1[j] += p;
                s2[j] += p * p;
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
    check_positivity(level, &Sums { n, failures: fail, ..Default::default() }, POSITIVITY_THRESHOLD)?;
    let out = (0..k)
        .map(|j| {
            let (m, v) = mean_var(n, s1[j], s2[j]);
            (m, (v / n as f64).sqrt())
        })
        .collect();
    Ok((out, fail))
}

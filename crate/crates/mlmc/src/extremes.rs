//! Distribution of the running maximum and minimum of CIR and CEV, by
//! numerical inversion of first-passage Laplace transforms.
//!
//! Both models reduce to the confluent equation
//! `y G'' + (b - eps y) G' - (s / lambda) G = 0` after a change of variable
//! `y = y(x)`:
//!
//! | model | `y(x)` | `b` | `lambda` | `eps` |
//! |-------|--------|-----|----------|-------|
//! | CIR | `2 abs(kappa) x / sigma^2` | `2a / sigma^2` | `abs(kappa)` | `sign(kappa)` |
//! | CEV | `c x^(-2 beta)` | `1 + 1/(2 beta)` | `2 beta abs(mu)` | `sign(mu)` |
//!
//! and `E[exp(-s tau_z)] = G(y(X0)) / G(y(z))` with `G` the solution that
//! stays bounded on the far side of `z`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::models::{BarrierKind, CevParams, CirParams, ModelSpec, Orientation};
use crate::pricing::{survival_curve, Executor};
use crate::specfun::{Confluent, OdeControl, Solution, SpecFunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtremeTarget {
    CirSup,
    CirInf,
    CevSup,
    CevInf,
}

impl ExtremeTarget {
    pub fn is_sup(self) -> bool {
        matches!(self, ExtremeTarget::CirSup | ExtremeTarget::CevSup)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ExtremeModel {
    Cir(CirParams<f64>),
    Cev(CevParams<f64>),
}

impl ExtremeModel {
    pub fn x0(&self) -> f64 {
        match self {
            ExtremeModel::Cir(p) => p.x0,
            ExtremeModel::Cev(p) => p.x0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Integrand whose inversion gives `P[tau_z <= t]`.
    Cdf,
    /// Its pointwise derivative in `z`.
    Density,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub u_max_cap: f64,
    /// Smallest admissible decay constant `c2` of the envelope `exp(-c2 sqrt(u))`.
    pub min_decay: f64,
    pub ode: OdeTolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeTolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-8, u_max_cap: 1e6, min_decay: 0.05, ode: OdeTolerances { rtol: 1e-10, atol: 1e-10 } }
    }
}

/// First-passage transform at level `z` in confluent form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformEvaluator {
    pub target: ExtremeTarget,
    pub model: ExtremeModel,
    pub z: f64,
    pub mode: Mode,
    b: f64,
    lambda: f64,
    eps: f64,
    which: Solution,
    y0: f64,
    yz: f64,
    /// `dy/dz`
    dy: f64,
}

impl TransformEvaluator {
    pub fn new(target: ExtremeTarget, model: ExtremeModel, z: f64, mode: Mode) -> Result<Self> {
        let x0 = model.x0();
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::Domain(format!("level z = {z} must be positive")));
        }
        if target.is_sup() && !(z > x0) {
            return Err(Error::Domain(format!("running maximum needs z > x0 ({z} <= {x0})")));
        }
        if !target.is_sup() && !(z < x0) {
            return Err(Error::Domain(format!("running minimum needs z < x0 ({z} >= {x0})")));
        }
        let (b, lambda, eps, y, dy, increasing_in_x) = match (target, model) {
            (ExtremeTarget::CirSup | ExtremeTarget::CirInf, ExtremeModel::Cir(p)) => {
                p.validate()?;
                if p.kappa == 0.0 {
                    return Err(Error::Unsupported("kappa = 0".into()));
                }
                if p.a == 0.0 && target == ExtremeTarget::CirSup {
                    return Err(Error::Unsupported("running-maximum law needs a > 0".into()));
                }
                let k = 2.0 * p.kappa.abs() / (p.sigma * p.sigma);
                let y = move |x: f64| k * x;
                (2.0 * p.a / (p.sigma * p.sigma), p.kappa.abs(), p.kappa.signum(), [y(x0), y(z)], k, true)
            }
            (ExtremeTarget::CevSup | ExtremeTarget::CevInf, ExtremeModel::Cev(p)) => {
                p.validate()?;
                if p.mu == 0.0 {
                    return Err(Error::Unsupported("mu = 0".into()));
                }
                let beta = p.beta();
                let c = p.c();
                let y = move |x: f64| c * x.powf(-2.0 * beta);
                let dy = -2.0 * beta * c * z.powf(-2.0 * beta - 1.0);
                (1.0 + 0.5 / beta, 2.0 * beta * p.mu.abs(), p.mu.signum(), [y(x0), y(z)], dy, false)
            }
            _ => return Err(Error::Parameter(format!("target {target:?} does not match the model"))),
        };
        // an upward crossing needs the solution increasing in x
        let which = if target.is_sup() == increasing_in_x { Solution::Increasing } else { Solution::Decreasing };
        Ok(Self { target, model, z, mode, b, lambda, eps, which, y0: y[0], yz: y[1], dy })
    }

    /// Decay constant of `exp(-c2 sqrt(u))` for the transform along `Re s = 1`.
    pub fn decay_constant(&self) -> f64 {
        (2.0 / self.lambda).sqrt() * (self.y0.sqrt() - self.yz.sqrt()).abs()
    }

    fn ratio(&self, s: C64, ode: OdeTolerances) -> Result<(C64, C64)> {
        let eq = Confluent::new(s / self.lambda, self.b, self.eps);
        let ctl = OdeControl { rtol: ode.rtol, atol: ode.atol, ..OdeControl::default() };
        let r = eq.ratio(self.which, self.y0, self.yz, ctl)?;
        Ok((r.log_ratio.exp(), r.dlog_den))
    }

    /// `E[exp(-s tau_z)]` for complex `s`.
    pub fn laplace(&self, s: C64, ode: OdeTolerances) -> Result<C64> {
        Ok(self.ratio(s, ode)?.0)
    }

    /// Integrand at `s = 1 + iu`: the transform over `s`, or its `z`-derivative.
    pub fn eval(&self, u: f64, ode: OdeTolerances) -> Result<C64> {
        let s = C64::new(1.0, u);
        let (lt, d) = self.ratio(s, ode).map_err(|e| match e {
            Error::SpecFun(SpecFunError::Integration(m)) => Error::Domain(format!("transform at u = {u}: {m}")),
            other => other,
        })?;
        Ok(match self.mode {
            Mode::Cdf => lt / s,
            Mode::Density => -lt * d * self.dy / s,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inversion {
    pub value: f64,
    pub u_max: f64,
    /// Envelope bound on the neglected tail `u > u_max`.
    pub truncation_error: f64,
    pub evaluations: usize,
}

/// `(e^t / pi) Re int_0^U e^{iut} F(1 + iu) du`, the Bromwich integral on
/// `Re s = 1` folded by conjugate symmetry.
pub fn invert_bromwich(ev: &TransformEvaluator, t: f64, cfg: &QuadratureConfig) -> Result<Inversion> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time t = {t} must be positive")));
    }
    let c2 = ev.decay_constant();
    if c2 < cfg.min_decay {
        return Err(Error::Domain(format!(
            "level z = {} too close to x0: decay constant {c2:.3e} < {}",
            ev.z, cfg.min_decay
        )));
    }
    let scale = t.exp() / PI;
    // fit the envelope constant at a probe point well into the decay regime
    let up = (8.0 / c2).powi(2);
    let konst = ev.eval(up, cfg.ode)?.norm() * (c2 * up.sqrt()).exp();
    let tail = |u: f64| scale * konst * 2.0 * (-c2 * u.sqrt()).exp() * (u.sqrt() / c2 + 1.0 / (c2 * c2));
    let goal = cfg.abs_tol / 10.0;
    let mut u_max = up;
    if tail(u_max) > goal {
        let (mut lo, mut hi) = (up, up);
        while tail(hi) > goal && hi < cfg.u_max_cap {
            lo = hi;
            hi = (hi * 2.0).min(cfg.u_max_cap);
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if tail(mid) > goal {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        u_max = hi;
    } else {
        let (mut lo, mut hi) = (0.0, up);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if tail(mid) > goal {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        u_max = u_max.min(hi);
    }

    let f = |u: f64| -> Result<f64> { Ok((C64::new(0.0, u * t).exp() * ev.eval(u, cfg.ode)?).re) };
    // quadrature target in integral units, leaving half the budget for the tail
    let tol = 0.5 * cfg.abs_tol / scale;
    // panels of a quarter oscillation period keep Simpson's error estimate honest
    let panel = (0.5 * PI / t).min(u_max);
    let n_panels = (u_max / panel).ceil() as usize;
    let mut evaluations = 1;
    let mut heap = BinaryHeap::with_capacity(2 * n_panels);
    let mut fa = f(0.0)?;
    for k in 0..n_panels {
        let a = k as f64 * panel;
        let b = ((k + 1) as f64 * panel).min(u_max);
        let m = 0.5 * (a + b);
        let (fm, fb) = (f(m)?, f(b)?);
        evaluations += 2;
        heap.push(SimpsonPanel::new(&f, a, b, [fa, fm, fb], &mut evaluations)?);
        fa = fb;
    }
    // interval halving on the panel with the largest error estimate
    let mut err: f64 = heap.iter().map(|p| p.err).sum();
    let mut splits = 0;
    while err > tol && splits < MAX_SPLITS {
        let Some(worst) = heap.pop() else { break };
        let m = 0.5 * (worst.a + worst.b);
        let [fa, fl, fm, fr, fb] = worst.f;
        let left = SimpsonPanel::new(&f, worst.a, m, [fa, fl, fm], &mut evaluations)?;
        let right = SimpsonPanel::new(&f, m, worst.b, [fm, fr, fb], &mut evaluations)?;
        err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
        splits += 1;
        // refresh the running sum against drift
        if splits % 4096 == 0 {
            err = heap.iter().map(|p| p.err).sum();
        }
    }
    // sum in position order so the result does not depend on heap layout
    let mut panels = heap.into_vec();
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    let total: f64 = panels.iter().map(|p| p.value).sum();
    Ok(Inversion { value: scale * total, u_max, truncation_error: tail(u_max), evaluations })
}

const MAX_SPLITS: usize = 2_000_000;

/// Simpson on `[a, b]` refined once, with the Richardson-corrected value and
/// the error estimate `|refined - coarse| / 15`.
struct SimpsonPanel {
    a: f64,
    b: f64,
    /// Integrand at `a`, `a + w/4`, `a + w/2`, `a + 3w/4`, `b`.
    f: [f64; 5],
    value: f64,
    err: f64,
}

impl SimpsonPanel {
    fn new(f: &impl Fn(f64) -> Result<f64>, a: f64, b: f64, ends: [f64; 3], evals: &mut usize) -> Result<Self> {
        let [fa, fm, fb] = ends;
        let w = b - a;
        let (fl, fr) = (f(a + 0.25 * w)?, f(a + 0.75 * w)?);
        *evals += 2;
        let whole = w / 6.0 * (fa + 4.0 * fm + fb);
        let halves = w / 12.0 * (fa + 4.0 * fl + 2.0 * fm + 4.0 * fr + fb);
        let delta = halves - whole;
        Ok(Self { a, b, f: [fa, fl, fm, fr, fb], value: halves + delta / 15.0, err: delta.abs() / 15.0 })
    }
}

impl PartialEq for SimpsonPanel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SimpsonPanel {}

impl PartialOrd for SimpsonPanel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimpsonPanel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err).then(other.a.total_cmp(&self.a))
    }
}

/// `P[tau_z <= t]` for the first passage to `z`.
pub fn passage_probability(
    target: ExtremeTarget,
    model: ExtremeModel,
    z: f64,
    t: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let ev = TransformEvaluator::new(target, model, z, Mode::Cdf)?;
    Ok(invert_bromwich(&ev, t, cfg)?.value)
}

/// CDF of the running extreme over `[0, t]` at `z`: `P[sup <= z]` for the
/// maximum, `P[inf <= z]` for the minimum.
pub fn extreme_cdf(target: ExtremeTarget, model: ExtremeModel, z: f64, t: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let p = passage_probability(target, model, z, t, cfg)?;
    Ok(if target.is_sup() { 1.0 - p } else { p })
}

/// Density of the running extreme at `z`; values in `(-abs_tol, 0)` are clipped to 0.
pub fn extreme_density(
    target: ExtremeTarget,
    model: ExtremeModel,
    z: f64,
    t: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let ev = TransformEvaluator::new(target, model, z, Mode::Density)?;
    let d = invert_bromwich(&ev, t, cfg)?.value;
    let d = if target.is_sup() { -d } else { d };
    Ok(if d < 0.0 && d > -cfg.abs_tol { 0.0 } else { d })
}

pub fn cir_sup_density(z: f64, t: f64, params: CirParams<f64>, cfg: &QuadratureConfig) -> Result<f64> {
    extreme_density(ExtremeTarget::CirSup, ExtremeModel::Cir(params), z, t, cfg)
}

pub fn cir_inf_density(z: f64, t: f64, params: CirParams<f64>, cfg: &QuadratureConfig) -> Result<f64> {
    extreme_density(ExtremeTarget::CirInf, ExtremeModel::Cir(params), z, t, cfg)
}

pub fn cev_sup_density(z: f64, t: f64, params: CevParams<f64>, cfg: &QuadratureConfig) -> Result<f64> {
    extreme_density(ExtremeTarget::CevSup, ExtremeModel::Cev(params), z, t, cfg)
}

pub fn cev_inf_density(z: f64, t: f64, params: CevParams<f64>, cfg: &QuadratureConfig) -> Result<f64> {
    extreme_density(ExtremeTarget::CevInf, ExtremeModel::Cev(params), z, t, cfg)
}

/// `E[exp(-s tau_z)]` for real `s > 0`.
pub fn hitting_laplace(target: ExtremeTarget, s: f64, z: f64, model: ExtremeModel) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("s = {s} must be positive")));
    }
    let ev = TransformEvaluator::new(target, model, z, Mode::Cdf)?;
    Ok(ev.laplace(C64::new(s, 0.0), QuadratureConfig::default().ode)?.re)
}

/// Empirical CDF of the running extreme, with its binomial standard error,
/// from `n_paths` level-`level` scheme paths. Each path contributes its
/// bridge survival probability rather than a 0/1 crossing indicator.
#[allow(clippy::too_many_arguments)]
pub fn empirical_extreme_cdf(
    target: ExtremeTarget,
    model: ExtremeModel,
    zs: &[f64],
    t: f64,
    level: u32,
    n_paths: u64,
    seed: u64,
    exec: &Executor,
) -> Result<Vec<(f64, f64)>> {
    let spec = match (target, model) {
        (ExtremeTarget::CirSup | ExtremeTarget::CirInf, ExtremeModel::Cir(p)) => ModelSpec::Cir(p),
        (ExtremeTarget::CevSup | ExtremeTarget::CevInf, ExtremeModel::Cev(p)) => ModelSpec::Cev(p),
        _ => return Err(Error::Parameter(format!("target {target:?} does not match the model"))),
    };
    spec.validate()?;
    let dyn_ = spec.dynamics()?;
    let x0 = spec.x0();
    let mut barriers = Vec::with_capacity(zs.len());
    for &z in zs {
        let ok = if target.is_sup() { z > x0 } else { z > 0.0 && z < x0 };
        if !ok {
            return Err(Error::Domain(format!("level z = {z} on the wrong side of x0 = {x0}")));
        }
        let kind = if target.is_sup() { BarrierKind::UpOut } else { BarrierKind::DownOut };
        let kind = if dyn_.orientation == Orientation::Decreasing { kind.flipped() } else { kind };
        barriers.push((dyn_.transform(z), kind));
    }
    let (surv, _) = survival_curve(&dyn_, spec.tag(), dyn_.transform(x0), t, level, &barriers, n_paths, seed, exec)?;
    Ok(surv
        .into_iter()
        .map(|(p, _)| {
            let cdf = if target.is_sup() { p } else { 1.0 - p };
            (cdf, (cdf * (1.0 - cdf) / n_paths as f64).sqrt())
        })
        .collect())
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// `int_{z1}^{z2} density` by `n`-point Gauss-Legendre.
pub fn integrate_density(
    target: ExtremeTarget,
    model: ExtremeModel,
    z1: f64,
    z2: f64,
    t: f64,
    n: usize,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let (m, r) = (0.5 * (z1 + z2), 0.5 * (z2 - z1));
    let mut acc = 0.0;
    for (x, w) in gauss_legendre(n) {
        acc += w * extreme_density(target, model, m + r * x, t, cfg)?;
    }
    Ok(r * acc)
}

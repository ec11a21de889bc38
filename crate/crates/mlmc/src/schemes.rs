//! Drift-implicit Euler scheme for the Lamperti-transformed process, the
//! Brownian interpolation of the coarse scheme, and fine/coarse coupling.

use crate::error::{Error, Result};
use crate::models::{Kind, LampertiDynamics, ModelTag};
use crate::real::Real;
use crate::rng::{GaussianStream, SeedTag};

/// Gaussian increments of one sample on the level-`l` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianSkeleton<T> {
    pub level: u32,
    pub maturity: T,
    pub fine_increments: Vec<T>,
    pub seed_tag: SeedTag,
}

impl<T: Real> BrownianSkeleton<T> {
    pub fn generate(level: u32, maturity: T, seed_tag: SeedTag) -> Self {
        let mut s = Self { level, maturity, fine_increments: Vec::new(), seed_tag };
        s.regenerate(seed_tag);
        s
    }

    /// Builds a skeleton from given increments; the length must be a power of two.
    pub fn from_increments(maturity: T, increments: Vec<T>, seed_tag: SeedTag) -> Result<Self> {
        let n = increments.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Level(format!("skeleton length {n} is not a power of two")));
        }
        Ok(Self { level: n.trailing_zeros(), maturity, fine_increments: increments, seed_tag })
    }

    /// Refills the increments in place for another sample.
    pub fn regenerate(&mut self, seed_tag: SeedTag) {
        let mut g = GaussianStream::for_sample(seed_tag, 1u64 << self.level);
        self.regenerate_from(&mut g, seed_tag);
    }

    /// [`Self::regenerate`] reusing `g`, which must serve samples of
    /// `2^level` draws under `seed_tag`'s master and stream.
    pub fn regenerate_from(&mut self, g: &mut GaussianStream, seed_tag: SeedTag) {
        let n = 1usize << self.level;
        let sd = (self.maturity.to_f64_lossy() / n as f64).sqrt();
        g.start_sample(seed_tag.index);
        self.seed_tag = seed_tag;
        self.fine_increments.clear();
        self.fine_increments.extend((0..n).map(|_| T::lit(sd * g.normal())));
    }

    pub fn h(&self) -> T {
        self.maturity / T::from_usize(1usize << self.level).unwrap()
    }

    /// Sums consecutive blocks of `2^(level - target)` increments.
    pub fn restrict(&self, target: u32) -> Result<BrownianSkeleton<T>> {
        if target > self.level {
            return Err(Error::Level(format!("cannot restrict level {} to {target}", self.level)));
        }
        let mut inc = self.fine_increments.clone();
        for _ in target..self.level {
            inc = pairwise_sums(&inc);
        }
        Ok(BrownianSkeleton { level: target, maturity: self.maturity, fine_increments: inc, seed_tag: self.seed_tag })
    }
}

fn pairwise_sums<T: Real>(x: &[T]) -> Vec<T> {
    x.chunks_exact(2).map(|p| p[0] + p[1]).collect()
}

/// `output[i] = fine[2i] + fine[2i+1]`.
pub fn coarse_increments<T: Real>(skeleton: &BrownianSkeleton<T>) -> Result<Vec<T>> {
    if skeleton.level == 0 {
        return Err(Error::Level("coarse increments need level >= 1".into()));
    }
    Ok(pairwise_sums(&skeleton.fine_increments))
}

/// Solves `y = y_prev + L(y) dt + gamma dw` for the positive root.
pub fn implicit_step<T: Real>(dyn_: &LampertiDynamics<T>, tag: ModelTag<T>, y_prev: T, dt: T, dw: T) -> Result<T> {
    let two = T::lit(2.0);
    let c = y_prev + dyn_.gamma * dw;
    match (tag, &dyn_.kind) {
        (ModelTag::Cir, Kind::Cir { kappa, a_minus_g2, .. }) => {
            let den = two + *kappa * dt;
            if !(den > T::zero()) {
                return Err(Error::StepSize { dt: dt.to_f64_lossy(), reason: "2 + kappa dt <= 0".into() });
            }
            let disc = den * *a_minus_g2 * dt + c * c;
            if disc < T::zero() {
                return Err(Error::PositivityLoss { sample: 0, step: 0 });
            }
            let y = (disc.sqrt() + c) / den;
            if y > T::zero() {
                Ok(y)
            } else {
                Err(Error::PositivityLoss { sample: 0, step: 0 })
            }
        }
        (ModelTag::Cev, Kind::Cev { alpha, mu, sigma }) => {
            let am1 = *alpha - T::one();
            let k = T::one() + *mu * am1 * dt;
            if !(k > T::zero()) {
                return Err(Error::StepSize { dt: dt.to_f64_lossy(), reason: "2 + 2 mu (alpha - 1) dt <= 0".into() });
            }
            let disc = two * *sigma * *sigma * *alpha * am1 * k * dt + c * c;
            Ok((disc.sqrt() + c) / (two * k))
        }
        (ModelTag::Generic { l_prime_bound }, _) => {
            if l_prime_bound > T::zero() && !(dt * two * l_prime_bound < T::one()) {
                return Err(Error::StepSize {
                    dt: dt.to_f64_lossy(),
                    reason: "dt must be below 1 / (2 L' bound)".into(),
                });
            }
            newton_step(dyn_, c, dt)
        }
        _ => Err(Error::Parameter("model tag does not match the dynamics".into())),
    }
}

/// Safeguarded Newton for `F(y) = y - c - L(y) dt`, increasing in `y` on the
/// admissible step range.
fn newton_step<T: Real>(dyn_: &LampertiDynamics<T>, c: T, dt: T) -> Result<T> {
    let f = |y: T| y - c - dyn_.drift(y) * dt;
    let fail = || Error::Solver { y_prev: c.to_f64_lossy() };
    let two = T::lit(2.0);
    let tiny = T::min_positive_value().sqrt();

    let mut hi = c.abs().max(T::one());
    let mut it = 0;
    while !(f(hi) > T::zero()) {
        hi = hi * two;
        it += 1;
        if it > 2000 || !hi.is_finite() {
            return Err(fail());
        }
    }
    let mut lo = hi / two;
    while !(f(lo) < T::zero()) {
        if f(lo) == T::zero() {
            return Ok(lo);
        }
        lo = lo / two;
        if lo < tiny {
            return Err(Error::PositivityLoss { sample: 0, step: 0 });
        }
    }

    let tol = T::lit(1e-12);
    let mut y = (lo + hi) / two;
    for _ in 0..100 {
        let fy = f(y);
        if fy < T::zero() {
            lo = y;
        } else {
            hi = y;
        }
        let d = T::one() - dyn_.drift_prime(y) * dt;
        let mut next = y - fy / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = (lo + hi) / two;
        }
        if (next - y).abs() <= tol * next.abs() || hi - lo <= tol * hi {
            return Ok(next);
        }
        y = next;
    }
    Err(fail())
}

/// Implicit Euler path on the skeleton's grid; `output[0] = y0`.
pub fn simulate_fine_path<T: Real>(
    dyn_: &LampertiDynamics<T>,
    tag: ModelTag<T>,
    y0: T,
    skeleton: &BrownianSkeleton<T>,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(skeleton.fine_increments.len() + 1);
    path_into(dyn_, tag, y0, skeleton.h(), &skeleton.fine_increments, &mut out)
        .map_err(|e| tag_sample(e, skeleton.seed_tag.index))?;
    Ok(out)
}

pub(crate) fn path_into<T: Real>(
    dyn_: &LampertiDynamics<T>,
    tag: ModelTag<T>,
    y0: T,
    h: T,
    increments: &[T],
    out: &mut Vec<T>,
) -> Result<()> {
    out.clear();
    out.push(y0);
    let mut y = y0;
    for (i, &dw) in increments.iter().enumerate() {
        y = implicit_step(dyn_, tag, y, h, dw).map_err(|e| match e {
            Error::PositivityLoss { sample, .. } => Error::PositivityLoss { sample, step: i },
            other => other,
        })?;
        out.push(y);
    }
    Ok(())
}

fn tag_sample(e: Error, sample: u64) -> Error {
    match e {
        Error::PositivityLoss { step, .. } => Error::PositivityLoss { sample, step },
        other => other,
    }
}

/// Coarse scheme interpolated at the first fine time of a coarse interval:
/// `y_i + L(y_ip1) h_fine + gamma w_half`. Not clamped.
#[inline]
pub fn interpolate_midpoint<T: Real>(dyn_: &LampertiDynamics<T>, y_i: T, y_ip1: T, w_half: T, h_fine: T) -> T {
    y_i + dyn_.drift(y_ip1) * h_fine + dyn_.gamma * w_half
}

/// Fine path, coarse path and interpolated coarse midpoints on one skeleton.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoupledLevelSample<T> {
    pub fine_values: Vec<T>,
    pub coarse_values: Vec<T>,
    pub coarse_midpoints: Vec<T>,
}

impl<T: Real> CoupledLevelSample<T> {
    pub fn terminal_fine(&self) -> T {
        *self.fine_values.last().expect("empty sample")
    }

    pub fn terminal_coarse(&self) -> T {
        *self.coarse_values.last().expect("empty sample")
    }
}

pub fn simulate_coupled<T: Real>(
    dyn_: &LampertiDynamics<T>,
    tag: ModelTag<T>,
    y0: T,
    skeleton: &BrownianSkeleton<T>,
) -> Result<CoupledLevelSample<T>> {
    let mut s = CoupledLevelSample::default();
    let mut scratch = Vec::new();
    simulate_coupled_into(dyn_, tag, y0, skeleton, &mut scratch, &mut s)?;
    Ok(s)
}

/// Buffer-reusing form of [`simulate_coupled`].
pub(crate) fn simulate_coupled_into<T: Real>(
    dyn_: &LampertiDynamics<T>,
    tag: ModelTag<T>,
    y0: T,
    skeleton: &BrownianSkeleton<T>,
    coarse_inc: &mut Vec<T>,
    out: &mut CoupledLevelSample<T>,
) -> Result<()> {
    if skeleton.level == 0 {
        return Err(Error::Level("coupled sample needs level >= 1".into()));
    }
    let fine = &skeleton.fine_increments;
    let h = skeleton.h();
    let wrap = |e| tag_sample(e, skeleton.seed_tag.index);
    path_into(dyn_, tag, y0, h, fine, &mut out.fine_values).map_err(wrap)?;

    coarse_inc.clear();
    coarse_inc.extend(fine.chunks_exact(2).map(|p| p[0] + p[1]));
    path_into(dyn_, tag, y0, h + h, coarse_inc, &mut out.coarse_values).map_err(wrap)?;

    out.coarse_midpoints.clear();
    let cv = &out.coarse_values;
    out.coarse_midpoints
        .extend((0..coarse_inc.len()).map(|i| interpolate_midpoint(dyn_, cv[i], cv[i + 1], fine[2 * i], h)));
    Ok(())
}

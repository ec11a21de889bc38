//! CIR and CEV parameter sets and their Lamperti-transformed dynamics.
//!
//! Both models are mapped to `dY = L(Y) dt + gamma dW` with constant noise:
//! CIR through `Y = sqrt(X)`, CEV through `Y = X^(1 - alpha)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// `dX = (a - kappa X) dt + sigma sqrt(X) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirParams<T> {
    pub a: T,
    pub kappa: T,
    pub sigma: T,
    pub x0: T,
}

impl<T: Real> CirParams<T> {
    pub fn new(a: T, kappa: T, sigma: T, x0: T) -> Result<Self> {
        let p = Self { a, kappa, sigma, x0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > T::zero()) || !self.sigma.is_finite() {
            return Err(Error::Parameter(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.x0 > T::zero()) || !self.x0.is_finite() {
            return Err(Error::Parameter(format!("x0 must be > 0, got {}", self.x0)));
        }
        if !(self.a >= T::zero()) || !self.a.is_finite() {
            return Err(Error::Parameter(format!("a must be >= 0, got {}", self.a)));
        }
        if !self.kappa.is_finite() {
            return Err(Error::Parameter("kappa must be finite".into()));
        }
        Ok(())
    }

    pub fn gamma(&self) -> T {
        self.sigma / T::lit(2.0)
    }
}

/// `dX = mu X dt + sigma X^alpha dW` with `alpha > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CevParams<T> {
    pub mu: T,
    pub sigma: T,
    pub alpha: T,
    pub x0: T,
}

impl<T: Real> CevParams<T> {
    pub fn new(mu: T, sigma: T, alpha: T, x0: T) -> Result<Self> {
        let p = Self { mu, sigma, alpha, x0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > T::zero()) || !self.sigma.is_finite() {
            return Err(Error::Parameter(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.x0 > T::zero()) || !self.x0.is_finite() {
            return Err(Error::Parameter(format!("x0 must be > 0, got {}", self.x0)));
        }
        if !(self.alpha > T::one()) || !self.alpha.is_finite() {
            return Err(Error::Parameter(format!("alpha must be > 1, got {}", self.alpha)));
        }
        if !self.mu.is_finite() {
            return Err(Error::Parameter("mu must be finite".into()));
        }
        Ok(())
    }

    pub fn beta(&self) -> T {
        self.alpha - T::one()
    }

    /// `|mu| / (beta sigma^2)`.
    pub fn c(&self) -> T {
        self.mu.abs() / (self.beta() * self.sigma * self.sigma)
    }

    pub fn gamma(&self) -> T {
        self.sigma * (T::one() - self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelSpec<T> {
    Cir(CirParams<T>),
    Cev(CevParams<T>),
}

impl<T: Real> ModelSpec<T> {
    pub fn x0(&self) -> T {
        match self {
            ModelSpec::Cir(p) => p.x0,
            ModelSpec::Cev(p) => p.x0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Cir(p) => p.validate(),
            ModelSpec::Cev(p) => p.validate(),
        }
    }

    pub fn dynamics(&self) -> Result<LampertiDynamics<T>> {
        match self {
            ModelSpec::Cir(p) => build_cir_dynamics(*p),
            ModelSpec::Cev(p) => build_cev_dynamics(*p),
        }
    }

    pub fn tag(&self) -> ModelTag<T> {
        match self {
            ModelSpec::Cir(_) => ModelTag::Cir,
            ModelSpec::Cev(_) => ModelTag::Cev,
        }
    }
}

/// Monotonicity of the Lamperti transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Increasing,
    Decreasing,
}

/// Selects the implicit-step solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelTag<T> {
    Cir,
    Cev,
    /// Safeguarded Newton; the caller bounds `L'` from above so that the
    /// step equation is strictly monotone for `dt < 1 / (2 l_prime_bound)`.
    Generic {
        l_prime_bound: T,
    },
}

/// User-supplied transformed dynamics for the generic step solver.
pub trait DriftModel<T>: Send + Sync {
    fn drift(&self, y: T) -> T;
    fn drift_prime(&self, y: T) -> T;
    fn transform(&self, x: T) -> T;
    fn inverse_transform(&self, y: T) -> T;
}

#[derive(Clone)]
pub(crate) enum Kind<T> {
    Cir {
        /// `(a - sigma^2/4) / 2`
        c1: T,
        kappa: T,
        /// `a - gamma^2`
        a_minus_g2: T,
    },
    Cev {
        alpha: T,
        mu: T,
        sigma: T,
    },
    Custom(Arc<dyn DriftModel<T>>),
}

/// `dY = L(Y) dt + gamma dW` on `(0, inf)`.
#[derive(Clone)]
pub struct LampertiDynamics<T> {
    pub gamma: T,
    pub orientation: Orientation,
    pub(crate) kind: Kind<T>,
}

impl<T: fmt::Debug> fmt::Debug for LampertiDynamics<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            Kind::Cir { .. } => "cir",
            Kind::Cev { .. } => "cev",
            Kind::Custom(_) => "custom",
        };
        f.debug_struct("LampertiDynamics")
            .field("model", &name)
            .field("gamma", &self.gamma)
            .field("orientation", &self.orientation)
            .finish()
    }
}

pub fn build_cir_dynamics<T: Real>(params: CirParams<T>) -> Result<LampertiDynamics<T>> {
    params.validate()?;
    let g = params.gamma();
    Ok(LampertiDynamics {
        gamma: g,
        orientation: Orientation::Increasing,
        kind: Kind::Cir {
            c1: (params.a - params.sigma * params.sigma / T::lit(4.0)) / T::lit(2.0),
            kappa: params.kappa,
            a_minus_g2: params.a - g * g,
        },
    })
}

pub fn build_cev_dynamics<T: Real>(params: CevParams<T>) -> Result<LampertiDynamics<T>> {
    params.validate()?;
    Ok(LampertiDynamics {
        gamma: params.gamma(),
        orientation: Orientation::Decreasing,
        kind: Kind::Cev { alpha: params.alpha, mu: params.mu, sigma: params.sigma },
    })
}

impl<T: Real> LampertiDynamics<T> {
    pub fn custom(gamma: T, orientation: Orientation, model: Arc<dyn DriftModel<T>>) -> Result<Self> {
        if gamma == T::zero() || !gamma.is_finite() {
            return Err(Error::Parameter("gamma must be nonzero".into()));
        }
        Ok(Self { gamma, orientation, kind: Kind::Custom(model) })
    }

    #[inline]
    pub fn drift(&self, y: T) -> T {
        match &self.kind {
            Kind::Cir { c1, kappa, .. } => *c1 / y - *kappa / T::lit(2.0) * y,
            Kind::Cev { alpha, mu, sigma } => {
                (T::one() - *alpha) * (*mu * y - *alpha * *sigma * *sigma / (T::lit(2.0) * y))
            }
            Kind::Custom(m) => m.drift(y),
        }
    }

    #[inline]
    pub fn drift_prime(&self, y: T) -> T {
        match &self.kind {
            Kind::Cir { c1, kappa, .. } => -*c1 / (y * y) - *kappa / T::lit(2.0),
            Kind::Cev { alpha, mu, sigma } => {
                (T::one() - *alpha) * (*mu + *alpha * *sigma * *sigma / (T::lit(2.0) * y * y))
            }
            Kind::Custom(m) => m.drift_prime(y),
        }
    }

    #[inline]
    pub fn transform(&self, x: T) -> T {
        match &self.kind {
            Kind::Cir { .. } => x.sqrt(),
            Kind::Cev { alpha, .. } => x.powf(T::one() - *alpha),
            Kind::Custom(m) => m.transform(x),
        }
    }

    #[inline]
    pub fn inverse_transform(&self, y: T) -> T {
        match &self.kind {
            Kind::Cir { .. } => y * y,
            Kind::Cev { alpha, .. } => y.powf(T::one() / (T::one() - *alpha)),
            Kind::Custom(m) => m.inverse_transform(y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarrierKind {
    DownOut,
    UpOut,
}

impl BarrierKind {
    pub fn flipped(self) -> Self {
        match self {
            BarrierKind::DownOut => BarrierKind::UpOut,
            BarrierKind::UpOut => BarrierKind::DownOut,
        }
    }
}

/// Knock-out call in asset coordinates, plus its image in `Y` space once
/// [`map_barrier`] has been applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierContract<T> {
    pub kind: BarrierKind,
    pub barrier: T,
    pub strike: T,
    pub rate: T,
    pub maturity: T,
    pub transformed_barrier: Option<T>,
    pub transformed_kind: Option<BarrierKind>,
}

impl<T: Real> BarrierContract<T> {
    pub fn new(kind: BarrierKind, barrier: T, strike: T, rate: T, maturity: T) -> Self {
        Self { kind, barrier, strike, rate, maturity, transformed_barrier: None, transformed_kind: None }
    }

    pub fn validate(&self, x0: T) -> Result<()> {
        if !(self.barrier > T::zero()) {
            return Err(Error::Contract(format!("barrier must be > 0, got {}", self.barrier)));
        }
        if !(self.strike >= T::zero()) {
            return Err(Error::Contract(format!("strike must be >= 0, got {}", self.strike)));
        }
        if !(self.maturity > T::zero()) {
            return Err(Error::Contract(format!("maturity must be > 0, got {}", self.maturity)));
        }
        match self.kind {
            BarrierKind::DownOut if !(x0 > self.barrier) => {
                Err(Error::Contract(format!("down-out requires x0 > barrier ({} <= {})", x0, self.barrier)))
            }
            BarrierKind::UpOut if !(x0 < self.barrier) => {
                Err(Error::Contract(format!("up-out requires x0 < barrier ({} >= {})", x0, self.barrier)))
            }
            _ => Ok(()),
        }
    }

    /// Barrier level and side in `Y` space. Panics if the contract was not mapped.
    pub fn y_barrier(&self) -> (T, BarrierKind) {
        (self.transformed_barrier.expect("contract not mapped"), self.transformed_kind.expect("contract not mapped"))
    }
}

/// Fills the `Y`-space barrier; an up-out contract becomes down-out (and vice
/// versa) when the transform is decreasing.
pub fn map_barrier<T: Real>(
    contract: &BarrierContract<T>,
    dyn_: &LampertiDynamics<T>,
    x0: T,
) -> Result<BarrierContract<T>> {
    contract.validate(x0)?;
    let kind = match dyn_.orientation {
        Orientation::Increasing => contract.kind,
        Orientation::Decreasing => contract.kind.flipped(),
    };
    Ok(BarrierContract {
        transformed_barrier: Some(dyn_.transform(contract.barrier)),
        transformed_kind: Some(kind),
        ..*contract
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub well_posed: bool,
    pub messages: Vec<String>,
    pub theory_warnings: Vec<String>,
    pub max_moment_order: f64,
}

/// Checks hard well-posedness and the advisory moment conditions for order `p`.
pub fn validate_theory<T: Real>(spec: &ModelSpec<T>, p: f64) -> ValidationReport {
    let mut messages = Vec::new();
    let mut warnings = Vec::new();
    let well_posed = match spec.validate() {
        Ok(()) => true,
        Err(e) => {
            messages.push(e.to_string());
            false
        }
    };
    let max_p = match spec {
        ModelSpec::Cir(c) => {
            let (a, s2) = (c.a.to_f64_lossy(), (c.sigma * c.sigma).to_f64_lossy());
            if !(s2 < a) {
                warnings.push(format!("sigma^2 < a violated (sigma^2 = {s2}, a = {a})"));
            }
            4.0 / 3.0 * a / s2
        }
        ModelSpec::Cev(c) => {
            let alpha = c.alpha.to_f64_lossy();
            if !(alpha > 1.0 && alpha < 7.0 / 6.0) {
                warnings.push(format!("alpha in (1, 7/6) violated (alpha = {alpha})"));
            }
            (2.0 * alpha - 1.0) / (6.0 * (alpha - 1.0))
        }
    };
    if p >= max_p {
        warnings.push(format!("moment order p = {p} >= admissible bound {max_p}"));
    }
    ValidationReport { well_posed, messages, theory_warnings: warnings, max_moment_order: max_p }
}

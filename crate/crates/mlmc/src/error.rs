use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid contract: {0}")]
    Contract(String),
    #[error("step size {dt} not admissible: {reason}")]
    StepSize { dt: f64, reason: String },
    #[error("positivity lost at step {step} (sample {sample})")]
    PositivityLoss { sample: u64, step: usize },
    #[error("level error: {0}")]
    Level(String),
    #[error("positivity-loss rate {rate:.3e} at level {level} exceeds threshold {threshold:.1e}")]
    PositivityThreshold { level: u32, rate: f64, threshold: f64 },
    #[error("MLMC did not converge: bias {bias:.3e} > {target:.3e} at L_max = {l_max}")]
    NonConvergence { bias: f64, target: f64, l_max: u32, levels: usize },
    #[error("Newton solver failed to converge from y_prev = {y_prev}")]
    Solver { y_prev: f64 },
    #[error(transparent)]
    SpecFun(#[from] crate::specfun::SpecFunError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported parameters: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument left the domain of a smooth map (non-positive
    /// bundle component, zero income, invalid price, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data violated a structural invariant (shape mismatch, weights
    /// not summing to one, endowment rows not summing to the total resources).
    #[error("validation error: {0}")]
    Validation(String),

    /// Damped Newton stalled before reaching the residual tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// A price iterate could not be kept inside the positive orthant.
    #[error("price iterate left the positive orthant at iteration {iteration}")]
    LeftDomain { iteration: usize },

    /// Index or spectral classification requested at a non-regular equilibrium.
    #[error("equilibrium is not regular (|det J| = {det_abs:.3e} below threshold {threshold:.3e})")]
    NotRegular { det_abs: f64, threshold: f64 },

    /// The Pareto solver failed for every start point; the requested utility
    /// levels are infeasible or outside the solver's reach.
    #[error("pareto solver infeasible: {0}")]
    Infeasible(String),

    /// The intersection determinant is too small to sign reliably.
    #[error("determinant near singular: |delta| = {delta_abs:.3e} below scaled threshold {threshold:.3e}")]
    NearSingular { delta_abs: f64, threshold: f64 },

    /// Continuation left the neighborhood where the local equilibrium price
    /// selection is defined.
    #[error("continuation lost the local branch at sub-step {step}: {reason}")]
    BranchLost { step: usize, reason: String },

    /// A transfer would make the donor's endowment non-positive or is empty.
    #[error("invalid transfer: {0}")]
    InvalidTransfer(String),

    /// The tatonnement integrator could not keep the state in the orthant
    /// even after halving the step 20 times.
    #[error("integration step too large at t = {time}")]
    StepTooLarge { time: f64 },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

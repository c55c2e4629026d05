use thiserror::Error;

use crate::novelty_ct::FeasibilityReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimensions or sample counts disagree.
    #[error("shape error: {0}")]
    Shape(String),

    /// A problem definition violates its own preconditions.
    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("integration failed: non-finite state at t = {time}")]
    Integration { time: f64 },

    #[error("gramian is ill-conditioned (estimate {estimate:.3e})")]
    IllConditioned { estimate: f64 },

    #[error("gramian is not positive semidefinite (pivot {pivot:.3e})")]
    NotPositiveSemidefinite { pivot: f64 },

    #[error("no minimally novel input exists: margins prior = {:.6e}, next = {:.6e}", .0.margin_prior, .0.margin_next)]
    Infeasible(Box<FeasibilityReport>),

    /// The closed form has no unique optimum. `value` is the objective shared by
    /// every feasible input when that is known.
    #[error("degenerate problem: {reason}")]
    Degenerate { reason: String, value: Option<f64> },

    #[error("step range error: {0}")]
    Range(String),

    #[error("iterative solver did not converge after {iterations} iterations (gap {gap:.3e})")]
    Convergence { iterations: usize, gap: f64 },

    #[error("graph generation failed: {0}")]
    Generation(String),

    #[error("usage error: {0}")]
    Usage(String),
}

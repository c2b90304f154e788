use alloc::boxed::Box;
use alloc::string::String;

use crate::doe::DesignResult;

/// Errors raised by the numerical core.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite state at t = {time} (step {step})")]
    NonFiniteState { time: f64, step: usize },

    #[error("dictionary would contain {count} functions, above the cap of {cap}")]
    Size { count: usize, cap: usize },

    #[error("trajectories use different sampling intervals ({first} vs {other})")]
    MixedSampling { first: f64, other: f64 },

    #[error("degenerate data: every singular value of the lifted snapshot matrix is below tolerance")]
    DegenerateData,

    #[error("input mask marks state coordinate {0} as input-dependent")]
    Mask(usize),

    #[error("z = {re}{im:+}i is numerically a pole of the transfer function")]
    Pole { re: f64, im: f64 },

    #[error("lag {lag} is not available from {samples} samples")]
    Lag { lag: usize, samples: usize },

    #[error("frequency grid of {n_freq} points cannot resolve a lag support of {support}")]
    Grid { n_freq: usize, support: usize },

    #[error("rejection sampling accepted {accepted} of {draws} draws")]
    RejectionBudget { accepted: usize, draws: usize },

    #[error("design budget exhausted after {} iterations", .0.iterations_used)]
    BudgetExhausted(Box<DesignResult>),

    #[error("time grids of prediction and truth differ")]
    GridMismatch,

    #[error("need at least {needed} data points, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

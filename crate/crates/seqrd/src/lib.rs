//! Planning under information constraints for passive POMDPs.
//!
//! A passive POMDP is a hidden Markov chain (initial distribution, transition
//! kernel, observation kernel) watched by an agent whose only choice is how to
//! update a finite memory state after each observation. The agent pays a
//! per-step cost `d(w, m)` for holding memory state `m` while the world is in
//! state `w`, and its memory updates are charged against three information
//! rates: the combined rate of the update channel, the memory-carryover rate,
//! and the sensing rate. Planning means choosing the sequence of stochastic
//! update rules that minimizes average cost subject to rate budgets; this
//! crate solves the Lagrangian relaxation, where each budget becomes a
//! multiplier and the solution traces the rate-distortion boundary.
//!
//! Module map:
//!
//! * [`model`] - problem data: kernels, costs, beliefs, policies, multipliers.
//! * [`infotheory`] - distortion, information rates, and the one-step
//!   Lagrangian for a fixed belief.
//! * [`onestep`] - alternating-minimization solver for the final step, which
//!   is an ordinary rate-distortion problem.
//! * [`planner`] - belief propagation, cost-to-go recursion, and the full
//!   finite-horizon solver.
//! * [`boundary`] - multiplier sweeps, regime classification, and checks of
//!   the rate-distortion boundary geometry.
//! * [`oracle`] - slow, independent reference computations used to validate
//!   the solvers (exact enumeration, brute-force search, Monte Carlo).
//! * [`cli`] - the `seqrd` command-line front end.
//!
//! All internal quantities are in nats; conversion to bits happens only at
//! presentation time.

pub mod boundary;
pub mod cli;
pub mod infotheory;
pub mod model;
pub mod onestep;
pub mod oracle;
pub mod planner;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("{matrix} row {row} is not stochastic (sum = {sum})")]
    NonStochasticRow {
        matrix: String,
        row: usize,
        sum: f64,
    },

    #[error("negative entry {value} in {context}")]
    NegativeEntry { context: String, value: f64 },

    #[error("{context} has total mass {mass}, expected 1")]
    NotNormalized { context: String, mass: f64 },

    #[error("invalid multipliers: {0}")]
    InvalidMultipliers(String),

    #[error("undefined posterior: memory {m_prev} and observation {obs} have zero joint probability")]
    UndefinedPosterior { m_prev: usize, obs: usize },

    #[error("impossible observation {obs}: zero predictive probability")]
    ImpossibleObservation { obs: usize },

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("failed to parse {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

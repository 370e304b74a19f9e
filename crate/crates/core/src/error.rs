use thiserror::Error;

use crate::Species;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A rate, diffusivity or mass lies outside its admissible range.
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    /// Input data that cannot be used (empty grid, zero initial mass, ...).
    #[error("invalid input: {0}")]
    Domain(String),

    /// A value that cannot occur for valid inputs was produced anyway.
    #[error("internal consistency failure: {0}")]
    InternalConsistency(String),

    /// The state passed to a relative-entropy routine does not carry the
    /// masses the equilibrium was built from.
    #[error("mass mismatch: state has (m1, m2) = ({got_m1}, {got_m2}), equilibrium expects ({want_m1}, {want_m2})")]
    MassMismatch {
        got_m1: f64,
        got_m2: f64,
        want_m1: f64,
        want_m2: f64,
    },

    #[error("step at t = {t} still produced a negative {species} concentration after {halvings} halvings")]
    StiffStep {
        t: f64,
        species: Species,
        halvings: u32,
    },

    #[error("tridiagonal solve broke down: {0}")]
    LinearSolve(String),

    #[error("sign pattern (mu_E, mu_C, mu_S, mu_P) = {pattern} is excluded: {reason}")]
    ExcludedPattern { pattern: String, reason: &'static str },

    #[error("no admissible sample with sign pattern {pattern} after {attempts} attempts")]
    CaseUnreachable { pattern: String, attempts: usize },

    #[error("decay fit needs at least {needed} usable points, found {found}")]
    InsufficientData { needed: usize, found: usize },
}

//! Four-species reversible enzyme reaction-diffusion system
//! `S + E <-> C <-> E + P` on the unit interval with zero-flux boundaries.
//!
//! The crate provides
//! - the closed-form detailed-balance equilibrium ([`model`]),
//! - a mass-conservative semi-implicit finite-difference solver ([`solver`]),
//! - the entropy, entropy dissipation and relative entropy functionals
//!   together with duality diagnostics ([`entropy`]),
//! - the explicit exponential-decay certificate `(C1, C2)` ([`certificate`]),
//! - sampled numerical checks of every inequality the certificate relies on
//!   ([`verifier`]).

pub mod certificate;
pub mod entropy;
pub mod error;
pub mod grid;
pub mod model;
pub mod solver;
pub mod verifier;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};

/// Chemical species, in the canonical storage order `S, E, C, P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Species {
    S,
    E,
    C,
    P,
}

impl Species {
    pub const ALL: [Species; 4] = [Species::S, Species::E, Species::C, Species::P];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Species::S => "S",
            Species::E => "E",
            Species::C => "C",
            Species::P => "P",
        };
        f.write_str(name)
    }
}

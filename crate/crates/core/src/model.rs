//! Reaction parameters, entropy weights, conservation laws and the
//! detailed-balance equilibrium.

use serde::{Deserialize, Serialize};

use crate::solver::FieldState;
use crate::{Error, Result};

/// Kinetic rates and diffusion coefficients.
///
/// `k_plus` binds `S + E -> C`, `k_minus` releases `C -> S + E`,
/// `kp_plus` releases `C -> E + P` and `kp_minus` binds `E + P -> C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionParameters {
    pub k_plus: f64,
    pub k_minus: f64,
    pub kp_plus: f64,
    pub kp_minus: f64,
    pub d_s: f64,
    pub d_e: f64,
    pub d_c: f64,
    pub d_p: f64,
}

impl ReactionParameters {
    /// All four rates equal to `rate`, all diffusivities equal to `diffusion`.
    pub fn uniform(rate: f64, diffusion: f64) -> Self {
        Self {
            k_plus: rate,
            k_minus: rate,
            kp_plus: rate,
            kp_minus: rate,
            d_s: diffusion,
            d_e: diffusion,
            d_c: diffusion,
            d_p: diffusion,
        }
    }

    pub fn rates(&self) -> [f64; 4] {
        [self.k_plus, self.k_minus, self.kp_plus, self.kp_minus]
    }

    /// Diffusivities in species order `S, E, C, P`.
    pub fn diffusion(&self) -> [f64; 4] {
        [self.d_s, self.d_e, self.d_c, self.d_p]
    }

    pub fn d_min(&self) -> f64 {
        self.diffusion().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn d_max(&self) -> f64 {
        self.diffusion().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Strict check: every rate and diffusivity finite and positive.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::ParameterDomain(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Relaxed check used by the time stepper, which also runs pure
    /// diffusion problems: rates may vanish, diffusivities may not.
    pub fn validate_for_transport(&self) -> Result<()> {
        for (name, v) in self.named() {
            let is_rate = name.starts_with('k');
            let ok = v.is_finite() && if is_rate { v >= 0.0 } else { v > 0.0 };
            if !ok {
                return Err(Error::ParameterDomain(format!(
                    "{name} out of range for transport, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn named(&self) -> [(&'static str, f64); 8] {
        [
            ("k_plus", self.k_plus),
            ("k_minus", self.k_minus),
            ("kp_plus", self.kp_plus),
            ("kp_minus", self.kp_minus),
            ("d_s", self.d_s),
            ("d_e", self.d_e),
            ("d_c", self.d_c),
            ("d_p", self.d_p),
        ]
    }
}

/// Entropy weights `sigma_i` making the dissipation nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaWeights {
    pub sigma_s: f64,
    pub sigma_e: f64,
    pub sigma_c: f64,
    pub sigma_p: f64,
}

impl SigmaWeights {
    pub fn as_array(&self) -> [f64; 4] {
        [self.sigma_s, self.sigma_e, self.sigma_c, self.sigma_p]
    }
}

/// Weights on the `alpha = 1`, `beta = k_minus / kp_plus` branch:
/// `sigma_C = sigma_E = k_minus`, `sigma_S = k_plus / k_minus`,
/// `sigma_P = kp_minus / kp_plus`.
pub fn sigma_weights(params: &ReactionParameters) -> Result<SigmaWeights> {
    params.validate()?;
    Ok(SigmaWeights {
        sigma_s: params.k_plus / params.k_minus,
        sigma_e: params.k_minus,
        sigma_c: params.k_minus,
        sigma_p: params.kp_minus / params.kp_plus,
    })
}

/// Total enzyme mass `m1 = int(E + C)` and total substrate mass
/// `m2 = int(S + C + P)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedMasses {
    pub m1: f64,
    pub m2: f64,
}

impl ConservedMasses {
    pub fn new(m1: f64, m2: f64) -> Result<Self> {
        let masses = Self { m1, m2 };
        masses.validate()?;
        Ok(masses)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m1.is_finite() && self.m1 > 0.0 && self.m2.is_finite() && self.m2 > 0.0) {
            return Err(Error::ParameterDomain(format!(
                "conserved masses must be positive, got m1 = {}, m2 = {}",
                self.m1, self.m2
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.m1 + self.m2
    }
}

/// Masses of a field state by grid quadrature.
pub fn conserved_masses(state: &FieldState) -> Result<ConservedMasses> {
    if state.grid().n_cells() == 0 {
        return Err(Error::Domain("empty grid".into()));
    }
    let [s, e, c, p] = state.fields().map(|f| f.integrate());
    Ok(ConservedMasses {
        m1: e + c,
        m2: s + c + p,
    })
}

/// The unique positive detailed-balance steady state for given masses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumState {
    pub n_s_inf: f64,
    pub n_e_inf: f64,
    pub n_c_inf: f64,
    pub n_p_inf: f64,
    pub masses: ConservedMasses,
    /// `K = k_minus / k_plus + kp_plus / kp_minus`
    pub k_aggregate: f64,
    /// `M = m1 + m2`
    pub m_aggregate: f64,
}

impl EquilibriumState {
    /// Concentrations in species order `S, E, C, P`.
    pub fn concentrations(&self) -> [f64; 4] {
        [self.n_s_inf, self.n_e_inf, self.n_c_inf, self.n_p_inf]
    }
}

/// Closed-form equilibrium.
///
/// `n_C` is the smaller root of `x^2 - (M + K) x + m1 m2 = 0`, evaluated as
/// `2 m1 m2 / ((M + K) + sqrt((M + K)^2 - 4 m1 m2))` so that the
/// `m1 << m2` regime does not lose digits to cancellation.
pub fn compute_equilibrium(
    params: &ReactionParameters,
    masses: &ConservedMasses,
) -> Result<EquilibriumState> {
    params.validate()?;
    masses.validate()?;
    let ConservedMasses { m1, m2 } = *masses;
    let k_aggregate = params.k_minus / params.k_plus + params.kp_plus / params.kp_minus;
    let m_aggregate = m1 + m2;
    let b = m_aggregate + k_aggregate;
    let disc = b * b - 4.0 * m1 * m2;
    if !(disc >= 0.0) {
        return Err(Error::InternalConsistency(format!(
            "negative discriminant {disc} for m1 = {m1}, m2 = {m2}, K = {k_aggregate}"
        )));
    }
    let n_c = 2.0 * m1 * m2 / (b + disc.sqrt());
    let n_e = m1 - n_c;
    if !(n_c > 0.0 && n_c < m1.min(m2) && n_e > 0.0) {
        return Err(Error::InternalConsistency(format!(
            "complex concentration {n_c} outside (0, min(m1, m2) = {})",
            m1.min(m2)
        )));
    }
    let n_s = params.k_minus * n_c / (params.k_plus * n_e);
    let n_p = params.kp_plus * n_c / (params.kp_minus * n_e);
    Ok(EquilibriumState {
        n_s_inf: n_s,
        n_e_inf: n_e,
        n_c_inf: n_c,
        n_p_inf: n_p,
        masses: *masses,
        k_aggregate,
        m_aggregate,
    })
}

/// `(k_minus n_C - k_plus n_S n_E, kp_plus n_C - kp_minus n_P n_E)`
pub fn detailed_balance_residual(eq: &EquilibriumState, params: &ReactionParameters) -> (f64, f64) {
    let r1 = params.k_minus * eq.n_c_inf - params.k_plus * eq.n_s_inf * eq.n_e_inf;
    let r2 = params.kp_plus * eq.n_c_inf - params.kp_minus * eq.n_p_inf * eq.n_e_inf;
    (r1, r2)
}

/// `(n_E + n_C - m1, n_S + n_C + n_P - m2)`
pub fn conservation_residual(eq: &EquilibriumState) -> (f64, f64) {
    (
        eq.n_e_inf + eq.n_c_inf - eq.masses.m1,
        eq.n_s_inf + eq.n_c_inf + eq.n_p_inf - eq.masses.m2,
    )
}

//! Seeded numerical checks of the inequalities the decay certificate is
//! built from.
//!
//! Every randomized check draws its samples from a `ChaCha8Rng` seeded per
//! sample, so any reported `worst_seed` can be replayed on its own.
//!
//! Square-root coordinates: for a concentration field `n_i` write
//! `N_i = sqrt(n_i)`, `mean N_i = N_i_inf (1 + mu_i)` and
//! `delta2_i = ||N_i - mean N_i||^2`.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::certificate::{c4_coupling, k_constants, CertificateConstants, CertificateVariant};
use crate::entropy::{phi, relative_density, EntropyReport};
use crate::grid::{dirichlet_energy, Field, Grid};
use crate::model::{compute_equilibrium, ConservedMasses, EquilibriumState, ReactionParameters};
use crate::solver::FieldState;
use crate::{Error, Result};

/// `mu` values within this distance of zero count as zero (sign `-`).
pub const MU_ZERO_TOL: f64 = 1e-12;

/// SplitMix64 finaliser, used to derive independent per-sample seeds.
pub fn mix_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sample `index` in stream `stream` under base seed `base`.
pub fn sample_seed(base: u64, stream: u64, index: u64) -> u64 {
    mix_seed(base ^ mix_seed((stream << 40) ^ index))
}

// ---------------------------------------------------------------------------
// Square-root splitting of averages

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqrtSplitMargin {
    /// `(mean sqrt u - sqrt(mean v))^2 + ||sqrt u - mean sqrt u||^2
    ///  - (sqrt(mean u) - sqrt(mean v))^2`, nonnegative for all inputs.
    pub margin: f64,
    /// Same with `mean sqrt v` in place of `sqrt(mean v)`. Equal to `margin`
    /// for constant `v`; negative for some non-constant `v`.
    pub literal_margin: f64,
}

pub fn sqrt_split_margin(u: &Field, v: &Field) -> SqrtSplitMargin {
    let su = u.sqrt();
    let a = su.integrate();
    let d2 = su.map(|x| (x - a) * (x - a)).integrate();
    let lhs = (u.integrate().sqrt() - v.integrate().sqrt()).powi(2);
    let b = v.integrate().sqrt();
    let b_lit = v.sqrt().integrate();
    SqrtSplitMargin {
        margin: (a - b).powi(2) + d2 - lhs,
        literal_margin: (a - b_lit).powi(2) + d2 - lhs,
    }
}

// ---------------------------------------------------------------------------
// Csiszar-Kullback-Pinsker

/// `int u log(u/v) - (u - v) - 3 / (2|u|_1 + 4|v|_1) |u - v|_1^2` for
/// nonnegative `u` and positive `v`.
pub fn ckp_margin(u: &Field, v: &Field) -> f64 {
    let rel = u.zip_map(v, relative_density).integrate();
    let l1 = u.l1_distance(v);
    let denom = 2.0 * u.integrate() + 4.0 * v.integrate();
    rel - 3.0 / denom * l1 * l1
}

// ---------------------------------------------------------------------------
// Elementary inequalities

/// `(x - 1)^2 - (x log x - x + 1)`
pub fn phi_quadratic_margin(x: f64) -> f64 {
    (x - 1.0).powi(2) - phi(x)
}

/// `(x - y)(log x - log y) - 4 (sqrt x - sqrt y)^2`
pub fn log_difference_margin(x: f64, y: f64) -> f64 {
    let diff = x - y;
    let log_ratio = (diff / y).ln_1p();
    let root_diff = diff / (x.sqrt() + y.sqrt());
    diff * log_ratio - 4.0 * root_diff * root_diff
}

/// `a^2 + b^2 - (a - b)^2 / 2`
pub fn sum_of_squares_margin(a: f64, b: f64) -> f64 {
    a * a + b * b - (a - b).powi(2) / 2.0
}

/// `(a - b)^2 - (a^2 / 2 - b^2)`
pub fn shifted_square_margin(a: f64, b: f64) -> f64 {
    (a - b).powi(2) - (a * a / 2.0 - b * b)
}

// ---------------------------------------------------------------------------
// Log-Sobolev

/// `L int |grad sqrt n|^2 - (int n log n - mean n log mean n)`.
pub fn log_sobolev_margin(n: &Field, l_logsob: f64) -> f64 {
    let mean = n.integrate();
    let lhs = if mean > 0.0 {
        n.map(|x| relative_density(x, mean)).integrate()
    } else {
        0.0
    };
    l_logsob * dirichlet_energy(&n.sqrt()) - lhs
}

// ---------------------------------------------------------------------------
// Perturbation coordinates and the sign table

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationCoordinates {
    pub mu_s: f64,
    pub mu_e: f64,
    pub mu_c: f64,
    pub mu_p: f64,
    pub delta2_s: f64,
    pub delta2_e: f64,
    pub delta2_c: f64,
    pub delta2_p: f64,
}

impl PerturbationCoordinates {
    pub fn from_state(state: &FieldState, eq: &EquilibriumState) -> Self {
        let conc = eq.concentrations();
        let mut mu = [0.0; 4];
        let mut delta2 = [0.0; 4];
        for (k, f) in state.fields().iter().enumerate() {
            let root = f.sqrt();
            let mean = root.integrate();
            mu[k] = mean / conc[k].sqrt() - 1.0;
            delta2[k] = root.map(|x| (x - mean) * (x - mean)).integrate();
        }
        Self {
            mu_s: mu[0],
            mu_e: mu[1],
            mu_c: mu[2],
            mu_p: mu[3],
            delta2_s: delta2[0],
            delta2_e: delta2[1],
            delta2_c: delta2[2],
            delta2_p: delta2[3],
        }
    }

    /// Species order `S, E, C, P`.
    pub fn mu(&self) -> [f64; 4] {
        [self.mu_s, self.mu_e, self.mu_c, self.mu_p]
    }

    pub fn delta2(&self) -> [f64; 4] {
        [self.delta2_s, self.delta2_e, self.delta2_c, self.delta2_p]
    }

    /// Residuals of the two conservation laws written in these coordinates.
    pub fn constraint_residuals(&self, eq: &EquilibriumState) -> (f64, f64) {
        let conc = eq.concentrations();
        let part = |k: usize| conc[k] * (1.0 + self.mu()[k]).powi(2) + self.delta2()[k];
        (
            part(1) + part(2) - eq.masses.m1,
            part(0) + part(2) + part(3) - eq.masses.m2,
        )
    }

    pub fn sign_pattern(&self) -> SignPattern {
        let pos = |m: f64| m > MU_ZERO_TOL;
        SignPattern {
            e: pos(self.mu_e),
            c: pos(self.mu_c),
            s: pos(self.mu_s),
            p: pos(self.mu_p),
        }
    }
}

/// Which of `(mu_E, mu_C, mu_S, mu_P)` are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct SignPattern {
    pub e: bool,
    pub c: bool,
    pub s: bool,
    pub p: bool,
}

impl SignPattern {
    pub const fn new(e: bool, c: bool, s: bool, p: bool) -> Self {
        Self { e, c, s, p }
    }

    /// Why the pattern cannot occur, if it cannot.
    pub fn exclusion(&self) -> Option<&'static str> {
        if self.e && self.c {
            Some("free enzyme and complex cannot both exceed equilibrium under enzyme conservation")
        } else if self.s && self.c && self.p {
            Some("substrate, complex and product cannot all exceed equilibrium under substrate conservation")
        } else {
            None
        }
    }
}

impl fmt::Display for SignPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |b: bool| if b { '+' } else { '-' };
        write!(f, "({},{},{},{})", s(self.e), s(self.c), s(self.s), s(self.p))
    }
}

/// The eleven admissible sign patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum CaseLabel {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    VIII,
    IX,
    X,
    XI,
}

impl CaseLabel {
    pub const ALL: [CaseLabel; 11] = [
        CaseLabel::I,
        CaseLabel::II,
        CaseLabel::III,
        CaseLabel::IV,
        CaseLabel::V,
        CaseLabel::VI,
        CaseLabel::VII,
        CaseLabel::VIII,
        CaseLabel::IX,
        CaseLabel::X,
        CaseLabel::XI,
    ];

    pub fn pattern(self) -> SignPattern {
        use CaseLabel::*;
        let (e, c, s, p) = match self {
            I => (false, false, false, false),
            II => (false, false, false, true),
            III => (false, false, true, false),
            IV => (false, false, true, true),
            V => (true, false, false, false),
            VI => (true, false, false, true),
            VII => (true, false, true, false),
            VIII => (true, false, true, true),
            IX => (false, true, false, false),
            X => (false, true, false, true),
            XI => (false, true, true, false),
        };
        SignPattern::new(e, c, s, p)
    }

    pub fn from_pattern(p: SignPattern) -> Result<Self> {
        if let Some(reason) = p.exclusion() {
            return Err(Error::ExcludedPattern {
                pattern: p.to_string(),
                reason,
            });
        }
        Ok(*Self::ALL
            .iter()
            .find(|c| c.pattern() == p)
            .expect("the eleven labels cover every non-excluded pattern"))
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub fn classify_case(coords: &PerturbationCoordinates) -> Result<CaseLabel> {
    CaseLabel::from_pattern(coords.sign_pattern())
}

/// The two patterns ruled out by the conservation laws, with `mu_E <= 0`
/// in the second.
pub const EXCLUDED_PATTERNS: [SignPattern; 2] = [
    SignPattern::new(true, true, false, false),
    SignPattern::new(false, true, true, true),
];

// ---------------------------------------------------------------------------
// Sampling admissible configurations

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplerConfig {
    pub n_cells: usize,
    pub max_attempts: usize,
    /// Shape roughness is drawn log-uniformly from this range.
    pub amplitude_range: (f64, f64),
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_cells: 32,
            max_attempts: 100_000,
            amplitude_range: (1e-3, 10.0),
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo * (hi / lo).powf(rng.gen::<f64>())
}

/// Positive profile with unit mean and log-uniform roughness.
fn random_shape(rng: &mut ChaCha8Rng, n: usize, range: (f64, f64)) -> Vec<f64> {
    let a = log_uniform(rng, range);
    let mut v: Vec<f64> = (0..n).map(|_| (2.0 * a * (rng.gen::<f64>() - 0.5)).exp()).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    v.iter_mut().for_each(|x| *x /= mean);
    v
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + rng.gen::<f64>() * (hi - lo)
}

/// Uniform draw from `(lo, hi)`, or half of the time a log-normal-ish
/// perturbation of `centre` when it lands inside the interval. The second
/// mode keeps every species close to equilibrium at once, which the
/// all-negative pattern needs when one equilibrium value is tiny.
fn mass_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64, centre: f64) -> f64 {
    if rng.gen_bool(0.5) {
        let spread = log_uniform(rng, (1e-4, 1.0));
        let m = centre * (spread * (2.0 * rng.gen::<f64>() - 1.0)).exp();
        if m > lo && m < hi {
            return m;
        }
    }
    uniform_in(rng, lo, hi)
}

/// One draw of four fields carrying exactly the masses of `eq`.
///
/// With a `target` pattern, each species whose sign is `+` gets a mass
/// above its equilibrium value whenever the conservation laws leave room
/// for it; this is necessary for `mu > 0`, so no configuration with that
/// pattern is lost. Roughness is left to rejection.
pub fn draw_state(
    rng: &mut ChaCha8Rng,
    grid: Grid,
    eq: &EquilibriumState,
    target: Option<SignPattern>,
    cfg: &SamplerConfig,
) -> Result<FieldState> {
    let n = grid.n_cells();
    let ConservedMasses { m1, m2 } = eq.masses;
    let c_cap = m1.min(m2);
    let t = target.unwrap_or(SignPattern::new(false, false, false, false));
    let (lo, hi) = if t.c && eq.n_c_inf < c_cap {
        (eq.n_c_inf, c_cap)
    } else if t.e {
        // free enzyme above equilibrium needs the complex below it
        (0.0, eq.n_c_inf.min(c_cap))
    } else {
        (0.0, c_cap)
    };
    let m_c = mass_in(rng, lo, hi, eq.n_c_inf);
    let m_e = m1 - m_c;
    let rest = m2 - m_c;
    let (lo, hi) = match (t.s, t.p) {
        (true, true) if eq.n_s_inf + eq.n_p_inf < rest => (eq.n_s_inf, rest - eq.n_p_inf),
        (true, false) if eq.n_s_inf < rest => (eq.n_s_inf, rest),
        (false, true) if eq.n_p_inf < rest => (0.0, rest - eq.n_p_inf),
        _ => (0.0, rest),
    };
    let share = eq.n_s_inf / (eq.n_s_inf + eq.n_p_inf);
    let m_s = mass_in(rng, lo, hi, share * rest);
    let m_p = rest - m_s;
    let fields = [m_s, m_e, m_c, m_p].map(|m| {
        let shape = random_shape(rng, n, cfg.amplitude_range);
        Field::new(grid, shape.into_iter().map(|g| m * g).collect())
    });
    let [s, e, c, p] = fields;
    FieldState::from_fields(0.0, [s?, e?, c?, p?])
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSample {
    pub state: FieldState,
    pub coords: PerturbationCoordinates,
    pub attempts: usize,
}

/// Rejection-samples a configuration with the given sign pattern.
pub fn sample_pattern(
    eq: &EquilibriumState,
    pattern: SignPattern,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<AdmissibleSample> {
    let grid = Grid::new(cfg.n_cells)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=cfg.max_attempts {
        let state = draw_state(&mut rng, grid, eq, Some(pattern), cfg)?;
        let coords = PerturbationCoordinates::from_state(&state, eq);
        if coords.sign_pattern() == pattern {
            return Ok(AdmissibleSample {
                state,
                coords,
                attempts: attempt,
            });
        }
    }
    Err(Error::CaseUnreachable {
        pattern: pattern.to_string(),
        attempts: cfg.max_attempts,
    })
}

pub fn sample_admissible(
    eq: &EquilibriumState,
    case: CaseLabel,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<AdmissibleSample> {
    sample_pattern(eq, case.pattern(), seed, cfg)
}

// ---------------------------------------------------------------------------
// Master inequality

/// Constants entering the three forms of the master inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MasterConstants {
    pub c3: f64,
    pub c4: f64,
    pub k3: f64,
    /// `sqrt(k_plus) K1 + sqrt(kp_minus) K2` (or the printed variant).
    pub coupling: f64,
}

impl MasterConstants {
    pub fn new(params: &ReactionParameters, eq: &EquilibriumState, variant: CertificateVariant) -> Result<Self> {
        let k = k_constants(params, eq, &eq.masses, variant)?;
        let (c3, c4) = crate::certificate::c3_c4(&k, params, variant);
        Ok(Self {
            c3,
            c4,
            k3: k.k3,
            coupling: c4_coupling(&k, params, variant),
        })
    }

    pub fn from_certificate(cert: &CertificateConstants, params: &ReactionParameters, eq: &EquilibriumState, variant: CertificateVariant) -> Result<Self> {
        let k = k_constants(params, eq, &eq.masses, variant)?;
        Ok(Self {
            c3: cert.c3,
            c4: cert.c4,
            k3: cert.k3,
            coupling: c4_coupling(&k, params, variant),
        })
    }

    pub fn with_c3_scaled(self, factor: f64) -> Self {
        Self {
            c3: self.c3 * factor,
            ..self
        }
    }
}

/// `rhs - lhs` of the master inequality in its three forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MasterMargins {
    /// Reaction terms as L2 norms of the fields.
    pub field_form: f64,
    /// Reaction terms evaluated at the averages, remainder charged to `c3`.
    pub averaged_form: f64,
    /// Averaged reaction terms rewritten through `mu` and bounded by `K3`.
    pub mu_form: f64,
    /// Magnitude of the terms involved, for relative tolerances.
    pub scale: f64,
}

impl MasterMargins {
    pub fn min(&self) -> f64 {
        self.field_form.min(self.averaged_form).min(self.mu_form)
    }
}

pub fn check_master_inequality(
    state: &FieldState,
    coords: &PerturbationCoordinates,
    mc: &MasterConstants,
    params: &ReactionParameters,
    eq: &EquilibriumState,
) -> MasterMargins {
    let conc = eq.concentrations();
    let mu = coords.mu();
    let delta_sum: f64 = coords.delta2().iter().sum();
    let lhs: f64 = (0..4).map(|k| conc[k] * mu[k] * mu[k]).sum::<f64>() + delta_sum;

    let [s, e, c, p] = state.fields().map(Field::sqrt);
    let (kp, km, kpp, kpm) = (
        params.k_plus.sqrt(),
        params.k_minus.sqrt(),
        params.kp_plus.sqrt(),
        params.kp_minus.sqrt(),
    );
    let first = Field::from_vec_unchecked(
        s.grid(),
        (0..s.values().len())
            .map(|j| {
                let r1 = kp * s.values()[j] * e.values()[j] - km * c.values()[j];
                let r2 = kpm * p.values()[j] * e.values()[j] - kpp * c.values()[j];
                r1 * r1 + r2 * r2
            })
            .collect(),
    );
    let reac_field = first.integrate();
    let (ns, ne, nc, np) = (s.integrate(), e.integrate(), c.integrate(), p.integrate());
    let reac_avg = (kp * ns * ne - km * nc).powi(2) + (kpm * np * ne - kpp * nc).powi(2);
    let i1 = ((1.0 + coords.mu_s) * (1.0 + coords.mu_e) - (1.0 + coords.mu_c)).powi(2);
    let i2 = ((1.0 + coords.mu_p) * (1.0 + coords.mu_e) - (1.0 + coords.mu_c)).powi(2);

    let reduced = mc.c3 - mc.c4 * mc.coupling;
    let rhs_field = mc.c3 * delta_sum + mc.c4 * reac_field;
    MasterMargins {
        field_form: rhs_field - lhs,
        averaged_form: reduced * delta_sum + mc.c4 * reac_avg - lhs,
        mu_form: reduced * delta_sum + mc.c4 * mc.k3 * (i1 + i2) - lhs,
        scale: conc.iter().sum::<f64>() + lhs + rhs_field.abs(),
    }
}

// ---------------------------------------------------------------------------
// Checks along trajectories

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryCheck {
    pub min_margin: f64,
    /// Output time of the smallest margin.
    pub at_t: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn trajectory_check(margins: impl Iterator<Item = (f64, f64)>, tolerance: f64) -> TrajectoryCheck {
    let mut min_margin = f64::INFINITY;
    let mut at_t = f64::NAN;
    for (t, m) in margins {
        if !(m >= min_margin) {
            min_margin = m;
            at_t = t;
        }
    }
    TrajectoryCheck {
        min_margin,
        at_t,
        tolerance,
        passed: min_margin >= tolerance,
    }
}

/// `min_t D - c1 E_rel` against `-1e-8 max D`.
pub fn check_eedi(reports: &[EntropyReport], c1: f64) -> TrajectoryCheck {
    let d_max = reports.iter().map(|r| r.d).fold(0.0, f64::max);
    trajectory_check(reports.iter().map(|r| (r.t, r.d - c1 * r.e_rel)), -1e-8 * d_max)
}

/// `min_t c2 exp(-c1 t) - sum_i ||n_i - n_i_inf||_{L1}^2`.
pub fn check_l1_decay(reports: &[EntropyReport], c1: f64, c2: f64) -> TrajectoryCheck {
    trajectory_check(
        reports.iter().map(|r| {
            let sq: f64 = r.l1_dist.iter().map(|x| x * x).sum();
            (r.t, c2 * (-c1 * r.t).exp() - sq)
        }),
        -1e-12 * c2.max(f64::MIN_POSITIVE),
    )
}

/// `min_t E_rel(0) exp(-c1 t) - E_rel(t)`.
pub fn check_entropy_decay(reports: &[EntropyReport], c1: f64) -> TrajectoryCheck {
    let e0 = reports.first().map_or(0.0, |r| r.e_rel);
    trajectory_check(
        reports.iter().map(|r| (r.t, e0 * (-c1 * (r.t - reports[0].t)).exp() - r.e_rel)),
        -1e-12 * e0.max(f64::MIN_POSITIVE),
    )
}

/// Fisher part of the dissipation against `(4 D_min / L) E(n | mean n)`,
/// the bound used when reactions are switched off.
pub fn check_log_sobolev_eedi(states: &[FieldState], params: &ReactionParameters, l_logsob: f64) -> TrajectoryCheck {
    let rate = 4.0 * params.d_min() / l_logsob;
    let mut fisher_max = 0.0f64;
    let margins: Vec<(f64, f64)> = states
        .iter()
        .map(|st| {
            let mut fisher = 0.0;
            let mut rel = 0.0;
            for (f, d) in st.fields().iter().zip(params.diffusion()) {
                fisher += d * crate::grid::fisher_information(f);
                let mean = f.integrate();
                if mean > 0.0 {
                    rel += f.map(|x| relative_density(x, mean)).integrate();
                }
            }
            fisher_max = fisher_max.max(fisher);
            (st.t, fisher - rate * rel)
        })
        .collect();
    trajectory_check(margins.into_iter(), -1e-8 * fisher_max)
}

// ---------------------------------------------------------------------------
// Aggregated report

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub samples: usize,
    pub min_margin: f64,
    pub worst_seed: u64,
    pub tolerance: f64,
    pub passed: bool,
    /// Offending configuration of the worst sample, when the check failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

struct Tracker {
    samples: usize,
    min: f64,
    worst_seed: u64,
    tolerance: f64,
    witness: Option<String>,
}

impl Tracker {
    fn new(tolerance: f64) -> Self {
        Self {
            samples: 0,
            min: f64::INFINITY,
            worst_seed: 0,
            tolerance,
            witness: None,
        }
    }

    fn record(&mut self, margin: f64, seed: u64, describe: impl FnOnce() -> String) {
        self.samples += 1;
        if !(margin >= self.min) {
            self.min = margin;
            self.worst_seed = seed;
            if !(margin >= self.tolerance) {
                self.witness = Some(describe());
            }
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            samples: self.samples,
            min_margin: self.min,
            worst_seed: self.worst_seed,
            tolerance: self.tolerance,
            passed: self.min >= self.tolerance,
            witness: self.witness,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub split_samples: usize,
    pub ckp_samples: usize,
    pub elementary_samples: usize,
    pub log_sobolev_samples: usize,
    pub master_samples_per_case: usize,
    pub sampler: SamplerConfig,
    pub variant: CertificateVariant,
    /// Multiplies `c3` before the master checks; 1 except when probing
    /// that the checks can fail.
    pub c3_scale: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            split_samples: 10_000,
            ckp_samples: 10_000,
            elementary_samples: 100_000,
            log_sobolev_samples: 10_000,
            master_samples_per_case: 1_000,
            sampler: SamplerConfig::default(),
            variant: CertificateVariant::Consistent,
            c3_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: BTreeMap<String, CheckResult>,
    /// Reported but not required to pass.
    pub informational: BTreeMap<String, CheckResult>,
    /// Largest `mu_i` seen by the sampler, species order `S, E, C, P`.
    pub mu_max_empirical: [f64; 4],
    pub notes: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.values().all(|c| c.passed)
    }
}

mod stream {
    pub const SPLIT: u64 = 1;
    pub const CKP: u64 = 2;
    pub const ELEMENTARY: u64 = 3;
    pub const LOG_SOBOLEV: u64 = 4;
    pub const MASTER: u64 = 16;
    pub const EXCLUDED: u64 = 64;
}

/// Nonnegative test field on a random grid; optionally with zeros.
pub fn random_test_field(rng: &mut ChaCha8Rng, grid: Grid, allow_zeros: bool) -> Field {
    let amp = log_uniform(rng, (1e-3, 10.0));
    let n = grid.n_cells();
    let kind = rng.gen_range(0..if allow_zeros { 3 } else { 2 });
    let values: Vec<f64> = match kind {
        0 => (0..n).map(|_| amp * rng.gen::<f64>() + 1e-3 * amp).collect(),
        1 => {
            let modes: Vec<(f64, f64)> = (1..=3).map(|k| (k as f64, rng.gen_range(-1.0..1.0) / k as f64)).collect();
            let raw: Vec<f64> = grid
                .midpoints()
                .map(|x| {
                    modes
                        .iter()
                        .map(|(k, c)| c * (std::f64::consts::PI * k * x).cos())
                        .sum::<f64>()
                })
                .collect();
            let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let lift = rng.gen_range(1e-3..1.0);
            raw.iter().map(|r| amp * (r - lo + lift)).collect()
        }
        _ => (0..n)
            .map(|_| if rng.gen_bool(0.4) { 0.0 } else { amp * rng.gen::<f64>() })
            .collect(),
    };
    Field::from_vec_unchecked(grid, values)
}

fn random_grid(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Grid {
    Grid::new(rng.gen_range(lo..=hi)).expect("lo >= 2")
}

fn field_pair_checks(cfg: &VerifyConfig, report: &mut VerifyReport) {
    let mut split = Tracker::new(-1e-12);
    let mut literal = Tracker::new(-1e-12);
    for i in 0..cfg.split_samples as u64 {
        let seed = sample_seed(cfg.seed, stream::SPLIT, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_grid(&mut rng, 2, 64);
        let u = random_test_field(&mut rng, g, true);
        let v = random_test_field(&mut rng, g, true);
        let m = sqrt_split_margin(&u, &v);
        split.record(m.margin, seed, || format!("u = {:?}, v = {:?}", u.values(), v.values()));
        literal.record(m.literal_margin, seed, || format!("u = {:?}, v = {:?}", u.values(), v.values()));
    }
    report.checks.insert("sqrt_mean_split".into(), split.finish());
    report
        .informational
        .insert("sqrt_mean_split_literal".into(), literal.finish());

    let mut ckp = Tracker::new(-1e-12);
    for i in 0..cfg.ckp_samples as u64 {
        let seed = sample_seed(cfg.seed, stream::CKP, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_grid(&mut rng, 2, 64);
        let u = random_test_field(&mut rng, g, true);
        let v = random_test_field(&mut rng, g, false);
        ckp.record(ckp_margin(&u, &v), seed, || {
            format!("u = {:?}, v = {:?}", u.values(), v.values())
        });
    }
    report.checks.insert("ckp".into(), ckp.finish());
}

fn elementary_checks(cfg: &VerifyConfig, report: &mut VerifyReport) {
    let mut t = [0.0; 4].map(|_| Tracker::new(0.0));
    // equality points first
    t[0].record(phi_quadratic_margin(1.0), 0, || "x = 1".into());
    t[1].record(log_difference_margin(2.0, 2.0), 0, || "x = y = 2".into());
    t[2].record(sum_of_squares_margin(3.0, -3.0), 0, || "a = 3, b = -3".into());
    t[3].record(shifted_square_margin(4.0, 2.0), 0, || "a = 4, b = 2".into());
    let pos = |rng: &mut ChaCha8Rng| 100.0 - rng.gen_range(0.0..100.0);
    let signed = |rng: &mut ChaCha8Rng| rng.gen_range(-100.0..=100.0);
    for i in 0..cfg.elementary_samples as u64 {
        let seed = sample_seed(cfg.seed, stream::ELEMENTARY, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = (pos(&mut rng), pos(&mut rng));
        let (a, b) = (signed(&mut rng), signed(&mut rng));
        t[0].record(phi_quadratic_margin(x), seed, || format!("x = {x:e}"));
        t[1].record(log_difference_margin(x, y), seed, || format!("x = {x:e}, y = {y:e}"));
        t[2].record(sum_of_squares_margin(a, b), seed, || format!("a = {a:e}, b = {b:e}"));
        t[3].record(shifted_square_margin(a, b), seed, || format!("a = {a:e}, b = {b:e}"));
    }
    let names = [
        "elementary_phi_quadratic",
        "elementary_log_difference",
        "elementary_sum_of_squares",
        "elementary_shifted_square",
    ];
    for (name, tr) in names.into_iter().zip(t) {
        report.checks.insert(name.into(), tr.finish());
    }
}

fn log_sobolev_check(cfg: &VerifyConfig, l_logsob: f64, report: &mut VerifyReport) {
    let mut tr = Tracker::new(-1e-12);
    for i in 0..cfg.log_sobolev_samples as u64 {
        let seed = sample_seed(cfg.seed, stream::LOG_SOBOLEV, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_grid(&mut rng, 8, 128);
        let n = random_test_field(&mut rng, g, true);
        tr.record(log_sobolev_margin(&n, l_logsob), seed, || format!("n = {:?}", n.values()));
    }
    let res = tr.finish();
    if !res.passed {
        report.notes.push(format!(
            "configured L too small: log-Sobolev inequality with L = {l_logsob} fails (seed {})",
            res.worst_seed
        ));
    }
    report.checks.insert("log_sobolev".into(), res);
}

fn master_checks(
    cfg: &VerifyConfig,
    params: &ReactionParameters,
    eq: &EquilibriumState,
    cert: &CertificateConstants,
    report: &mut VerifyReport,
) -> Result<()> {
    let mc = MasterConstants::from_certificate(cert, params, eq, cfg.variant)?.with_c3_scaled(cfg.c3_scale);
    let small = MasterConstants {
        c3: 3.0,
        c4: 0.0,
        ..mc
    };
    let tol = -1e-10;
    let mut forms = [0; 3].map(|_| Tracker::new(tol));
    let mut case_one = Tracker::new(tol);
    let mut constraints = Tracker::new(-1e-10);
    let mut reach = Tracker::new(0.0);
    let mut mu_max = [f64::NEG_INFINITY; 4];

    for (ci, case) in CaseLabel::ALL.into_iter().enumerate() {
        let mut unreachable = false;
        for i in 0..cfg.master_samples_per_case as u64 {
            let seed = sample_seed(cfg.seed, stream::MASTER + ci as u64, i);
            let sample = match sample_admissible(eq, case, seed, &cfg.sampler) {
                Ok(s) => s,
                Err(Error::CaseUnreachable { .. }) => {
                    unreachable = true;
                    reach.record(-1.0, seed, || format!("case {case} unreachable"));
                    break;
                }
                Err(e) => return Err(e),
            };
            let coords = sample.coords;
            for (m, x) in mu_max.iter_mut().zip(coords.mu()) {
                *m = m.max(x);
            }
            let (r1, r2) = coords.constraint_residuals(eq);
            let rel = r1.abs().max(r2.abs()) / eq.masses.total();
            constraints.record(-rel, seed, || format!("case {case}: residuals ({r1:e}, {r2:e})"));

            let m = check_master_inequality(&sample.state, &coords, &mc, params, eq);
            let describe = |form: &str, v: f64| {
                format!(
                    "case {case}, {form} margin {v:e} (scale {:e}); coords {coords:?}; fields {:?}",
                    m.scale,
                    sample.state.fields().map(|f| f.values().to_vec())
                )
            };
            forms[0].record(m.field_form / m.scale, seed, || describe("field form", m.field_form));
            forms[1].record(m.averaged_form / m.scale, seed, || describe("averaged form", m.averaged_form));
            forms[2].record(m.mu_form / m.scale, seed, || describe("mu form", m.mu_form));
            if case == CaseLabel::I {
                let s = check_master_inequality(&sample.state, &coords, &small, params, eq);
                case_one.record(s.mu_form / s.scale, seed, || describe("(3, 0) form", s.mu_form));
            }
        }
        if !unreachable {
            reach.record(0.0, 0, String::new);
        }
    }
    let names = ["master_field_form", "master_averaged_form", "master_mu_form"];
    for (name, tr) in names.into_iter().zip(forms) {
        report.checks.insert(name.into(), tr.finish());
    }
    report.checks.insert("master_case_i_small_constants".into(), case_one.finish());
    report.checks.insert("sampler_constraints".into(), constraints.finish());
    report.checks.insert("case_reachability".into(), reach.finish());

    let mut caps = Tracker::new(0.0);
    for (k, (seen, cap)) in mu_max.iter().zip(cert.mu_max()).enumerate() {
        caps.record(cap - seen, k as u64, || format!("species {k}: mu {seen} exceeds cap {cap}"));
    }
    report.checks.insert("mu_max_caps".into(), caps.finish());
    report.mu_max_empirical = mu_max;

    for (k, pattern) in EXCLUDED_PATTERNS.into_iter().enumerate() {
        let seed = sample_seed(cfg.seed, stream::EXCLUDED, k as u64);
        let mut tr = Tracker::new(0.0);
        let margin = match sample_pattern(eq, pattern, seed, &cfg.sampler) {
            Err(Error::CaseUnreachable { .. }) => 0.0,
            Err(e) => return Err(e),
            Ok(_) => -1.0,
        };
        tr.record(margin, seed, || format!("excluded pattern {pattern} was reached"));
        tr.samples = cfg.sampler.max_attempts;
        let name = if k == 0 { "excluded_enzyme_complex" } else { "excluded_substrate_complex_product" };
        report.checks.insert(name.into(), tr.finish());
    }
    Ok(())
}

/// Runs every sampled check for the given parameters and masses.
pub fn run_verification(
    params: &ReactionParameters,
    masses: &ConservedMasses,
    l_logsob: f64,
    cfg: &VerifyConfig,
) -> Result<VerifyReport> {
    let eq = compute_equilibrium(params, masses)?;
    let grid = Grid::new(cfg.sampler.n_cells)?;
    let cert = CertificateConstants::compute(params, &eq, &grid, l_logsob, cfg.variant)?;
    let mut report = VerifyReport {
        checks: BTreeMap::new(),
        informational: BTreeMap::new(),
        mu_max_empirical: [0.0; 4],
        notes: Vec::new(),
    };
    field_pair_checks(cfg, &mut report);
    elementary_checks(cfg, &mut report);
    log_sobolev_check(cfg, l_logsob, &mut report);
    master_checks(cfg, params, &eq, &cert, &mut report)?;
    Ok(report)
}

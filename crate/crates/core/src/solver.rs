//! Semi-implicit time stepping: implicit (backward Euler) diffusion and
//! explicit mass-action reactions.
//!
//! Each step solves, per species,
//! `(I - dt D_i Lap_h) n_i' = n_i + dt R_i(n)`
//! where the reaction right-hand sides are assembled from two shared fluxes
//! so that `R_E + R_C` and `R_S + R_C + R_P` cancel identically. Both
//! conservation laws then hold up to round-off, and the solve matrix is a
//! symmetric M-matrix whose inverse is doubly stochastic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Field, Grid};
use crate::model::{conserved_masses, ReactionParameters};
use crate::{Error, Result, Species};

/// The four concentration fields at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub n_s: Field,
    pub n_e: Field,
    pub n_c: Field,
    pub n_p: Field,
}

impl FieldState {
    /// Builds a state from fields in species order, checking the shared grid
    /// and nonnegativity.
    pub fn from_fields(t: f64, fields: [Field; 4]) -> Result<Self> {
        let grid = fields[0].grid();
        for (sp, f) in Species::ALL.iter().zip(&fields) {
            if f.grid() != grid {
                return Err(Error::Domain(format!("field {sp} lives on a different grid")));
            }
            if let Some(v) = f.values().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Domain(format!(
                    "field {sp} has inadmissible value {v}"
                )));
            }
        }
        let [n_s, n_e, n_c, n_p] = fields;
        Ok(Self {
            t,
            n_s,
            n_e,
            n_c,
            n_p,
        })
    }

    /// Spatially constant state.
    pub fn constant(grid: Grid, concentrations: [f64; 4]) -> Result<Self> {
        Self::from_fields(0.0, concentrations.map(|c| Field::constant(grid, c)))
    }

    pub fn grid(&self) -> Grid {
        self.n_s.grid()
    }

    pub fn fields(&self) -> [&Field; 4] {
        [&self.n_s, &self.n_e, &self.n_c, &self.n_p]
    }

    pub fn fields_mut(&mut self) -> [&mut Field; 4] {
        [&mut self.n_s, &mut self.n_e, &mut self.n_c, &mut self.n_p]
    }

    pub fn field(&self, species: Species) -> &Field {
        self.fields()[species.index()]
    }

    pub fn min_concentration(&self) -> f64 {
        self.fields()
            .iter()
            .map(|f| f.min())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Spatial profile of one species before it is scaled to its mass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    #[default]
    Constant,
    /// Level `left` on `x < split`, `right` elsewhere.
    Step {
        left: f64,
        right: f64,
        #[serde(default = "default_split")]
        split: f64,
    },
    /// `base + cos^2(pi (x - center))`
    Bump {
        #[serde(default = "default_bump_base")]
        base: f64,
        #[serde(default = "default_split")]
        center: f64,
    },
    /// `floor + U(0, 1)` per cell, drawn from the run seed.
    Random {
        #[serde(default = "default_random_floor")]
        floor: f64,
    },
}

fn default_split() -> f64 {
    0.5
}
fn default_bump_base() -> f64 {
    0.1
}
fn default_random_floor() -> f64 {
    0.1
}
fn default_complex_share() -> f64 {
    0.25
}
fn default_substrate_share() -> f64 {
    0.5
}

impl Profile {
    fn shape(&self, grid: Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            Profile::Constant => vec![1.0; grid.n_cells()],
            Profile::Step { left, right, split } => grid
                .midpoints()
                .map(|x| if x < split { left } else { right })
                .collect(),
            Profile::Bump { base, center } => grid
                .midpoints()
                .map(|x| base + (std::f64::consts::PI * (x - center)).cos().powi(2))
                .collect(),
            Profile::Random { floor } => (0..grid.n_cells())
                .map(|_| floor + rng.gen::<f64>())
                .collect(),
        }
    }
}

/// Initial data: target conserved masses, how they are split among the
/// species, and one profile per species.
///
/// The complex receives `complex_share * min(m1, m2)`, the enzyme the rest of
/// `m1`, and the remaining substrate mass is divided between `S` and `P` by
/// `substrate_share`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub m1: f64,
    pub m2: f64,
    #[serde(default = "default_complex_share")]
    pub complex_share: f64,
    #[serde(default = "default_substrate_share")]
    pub substrate_share: f64,
    #[serde(default)]
    pub s: Profile,
    #[serde(default)]
    pub e: Profile,
    #[serde(default)]
    pub c: Profile,
    #[serde(default)]
    pub p: Profile,
}

impl InitialData {
    pub fn uniform(m1: f64, m2: f64, profile: Profile) -> Self {
        Self {
            m1,
            m2,
            complex_share: default_complex_share(),
            substrate_share: default_substrate_share(),
            s: profile,
            e: profile,
            c: profile,
            p: profile,
        }
    }

    /// Per-species masses in order `S, E, C, P`.
    pub fn species_masses(&self) -> Result<[f64; 4]> {
        if !(self.m1 > 0.0 && self.m2 > 0.0 && self.m1.is_finite() && self.m2.is_finite()) {
            return Err(Error::Domain(format!(
                "initial data needs positive enzyme and substrate mass, got m1 = {}, m2 = {}",
                self.m1, self.m2
            )));
        }
        for (name, share) in [
            ("complex_share", self.complex_share),
            ("substrate_share", self.substrate_share),
        ] {
            if !(share > 0.0 && share < 1.0) {
                return Err(Error::Domain(format!("{name} must lie in (0, 1), got {share}")));
            }
        }
        let c = self.complex_share * self.m1.min(self.m2);
        let e = self.m1 - c;
        let rest = self.m2 - c;
        let s = self.substrate_share * rest;
        Ok([s, e, c, rest - s])
    }

    /// Samples the profiles and rescales each to its species mass.
    pub fn build(&self, grid: Grid, seed: u64) -> Result<FieldState> {
        let masses = self.species_masses()?;
        let profiles = [self.s, self.e, self.c, self.p];
        let mut fields = Vec::with_capacity(4);
        for (k, (profile, mass)) in profiles.iter().zip(masses).enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            let shape = profile.shape(grid, &mut rng);
            if shape.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Domain(format!(
                    "profile for species {} produced negative or non-finite values",
                    Species::ALL[k]
                )));
            }
            let integral = shape.iter().sum::<f64>() / grid.n_cells() as f64;
            if !(integral > 0.0) {
                return Err(Error::Domain(format!(
                    "profile for species {} has zero integral",
                    Species::ALL[k]
                )));
            }
            let scale = mass / integral;
            fields.push(Field::new(grid, shape.into_iter().map(|v| v * scale).collect())?);
        }
        let fields: [Field; 4] = fields.try_into().expect("four species");
        FieldState::from_fields(0.0, fields)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Values in `[-nonneg_floor, 0)` are clamped to zero; anything lower
    /// triggers step halving.
    #[serde(default)]
    pub nonneg_floor: f64,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: u32,
    /// Observer stride in steps.
    #[serde(default = "default_output_every")]
    pub output_every: usize,
}

fn default_max_halvings() -> u32 {
    40
}
fn default_output_every() -> usize {
    1
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            nonneg_floor: 0.0,
            max_halvings: default_max_halvings(),
            output_every: default_output_every(),
        }
    }

    pub fn with_output_every(mut self, stride: usize) -> Self {
        self.output_every = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Domain(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::Domain(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if !(self.nonneg_floor.is_finite() && self.nonneg_floor >= 0.0) {
            return Err(Error::Domain(format!(
                "nonneg_floor must be >= 0, got {}",
                self.nonneg_floor
            )));
        }
        if self.output_every == 0 {
            return Err(Error::Domain("output_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of steps to reach `t_end`; the last step is not shortened, so
    /// `t_end` is rounded to the nearest multiple of `dt`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// The two reaction fluxes:
/// `f1 = k_plus n_S n_E - k_minus n_C` (complex formation from `S + E`) and
/// `f2 = kp_minus n_E n_P - kp_plus n_C` (complex formation from `E + P`).
pub fn reaction_rates(state: &FieldState, params: &ReactionParameters) -> (Field, Field) {
    let n = state.grid().n_cells();
    let (s, e, c, p) = (
        state.n_s.values(),
        state.n_e.values(),
        state.n_c.values(),
        state.n_p.values(),
    );
    let mut f1 = Vec::with_capacity(n);
    let mut f2 = Vec::with_capacity(n);
    for j in 0..n {
        f1.push(params.k_plus * s[j] * e[j] - params.k_minus * c[j]);
        f2.push(params.kp_minus * e[j] * p[j] - params.kp_plus * c[j]);
    }
    let grid = state.grid();
    (
        Field::from_vec_unchecked(grid, f1),
        Field::from_vec_unchecked(grid, f2),
    )
}

/// Pointwise right-hand sides in species order:
/// `S: -f1`, `E: -(f1 + f2)`, `C: f1 + f2`, `P: -f2`.
pub fn reaction_rhs(state: &FieldState, params: &ReactionParameters) -> [Field; 4] {
    let (f1, f2) = reaction_rates(state, params);
    let sum = f1.zip_map(&f2, |a, b| a + b);
    [f1.map(|v| -v), sum.map(|v| -v), sum, f2.map(|v| -v)]
}

/// LU factors of `I - dt D Lap_h` with mirrored ghost cells.
#[derive(Debug, Clone)]
struct ImplicitDiffusion {
    off: f64,
    c_prime: Vec<f64>,
    inv_den: Vec<f64>,
}

impl ImplicitDiffusion {
    fn new(n: usize, dt: f64, d: f64) -> Result<Self> {
        let r = dt * d * (n * n) as f64;
        let off = -r;
        let diag = |j: usize| {
            if j == 0 || j + 1 == n {
                1.0 + r
            } else {
                1.0 + 2.0 * r
            }
        };
        let mut c_prime = vec![0.0; n];
        let mut inv_den = vec![0.0; n];
        let mut prev_c = 0.0;
        for j in 0..n {
            let den = diag(j) - off * prev_c;
            if !(den.is_finite() && den > 0.0) {
                return Err(Error::LinearSolve(format!(
                    "pivot {den} at row {j} (dt = {dt}, D = {d})"
                )));
            }
            inv_den[j] = 1.0 / den;
            c_prime[j] = off * inv_den[j];
            prev_c = c_prime[j];
        }
        Ok(Self {
            off,
            c_prime,
            inv_den,
        })
    }

    fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_den[0];
        for j in 1..n {
            rhs[j] = (rhs[j] - self.off * rhs[j - 1]) * self.inv_den[j];
        }
        for j in (0..n - 1).rev() {
            rhs[j] -= self.c_prime[j] * rhs[j + 1];
        }
    }
}

/// Bookkeeping for one (possibly subdivided) step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    /// Deepest halving level used.
    pub halvings: u32,
    pub substeps: u32,
    /// Cells whose small negative value was reset to zero.
    pub clamp_events: usize,
    /// Mass added by clamping, summed over species.
    pub clamp_mass: f64,
}

impl StepStats {
    fn absorb(&mut self, other: StepStats) {
        self.halvings = self.halvings.max(other.halvings);
        self.substeps += other.substeps;
        self.clamp_events += other.clamp_events;
        self.clamp_mass += other.clamp_mass;
    }
}

/// Reusable stepper holding the factorisations for the base step.
pub struct Stepper {
    params: ReactionParameters,
    cfg: SolverConfig,
    grid: Grid,
    base: [ImplicitDiffusion; 4],
}

impl Stepper {
    pub fn new(params: &ReactionParameters, cfg: &SolverConfig, grid: Grid) -> Result<Self> {
        params.validate_for_transport()?;
        cfg.validate()?;
        let base = Self::factor(params, grid, cfg.dt)?;
        Ok(Self {
            params: *params,
            cfg: *cfg,
            grid,
            base,
        })
    }

    fn factor(params: &ReactionParameters, grid: Grid, dt: f64) -> Result<[ImplicitDiffusion; 4]> {
        let d = params.diffusion();
        Ok([
            ImplicitDiffusion::new(grid.n_cells(), dt, d[0])?,
            ImplicitDiffusion::new(grid.n_cells(), dt, d[1])?,
            ImplicitDiffusion::new(grid.n_cells(), dt, d[2])?,
            ImplicitDiffusion::new(grid.n_cells(), dt, d[3])?,
        ])
    }

    /// Advances by the configured `dt`, subdividing recursively when a
    /// trial step leaves a concentration below `-nonneg_floor`.
    pub fn advance(&self, state: &FieldState) -> Result<(FieldState, StepStats)> {
        if state.grid() != self.grid {
            return Err(Error::Domain("state grid differs from stepper grid".into()));
        }
        self.advance_by(state, self.cfg.dt, 0, None)
    }

    fn advance_by(
        &self,
        state: &FieldState,
        dt: f64,
        depth: u32,
        factors: Option<&[ImplicitDiffusion; 4]>,
    ) -> Result<(FieldState, StepStats)> {
        let owned;
        let factors = match factors {
            Some(f) => f,
            None if depth == 0 => &self.base,
            None => {
                owned = Self::factor(&self.params, self.grid, dt)?;
                &owned
            }
        };
        let trial = self.euler_step(state, dt, factors);
        let worst = Species::ALL
            .iter()
            .zip(&trial)
            .map(|(&sp, v)| (sp, v.iter().copied().fold(f64::INFINITY, f64::min)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("four species");
        if worst.1 < -self.cfg.nonneg_floor {
            if depth >= self.cfg.max_halvings {
                return Err(Error::StiffStep {
                    t: state.t,
                    species: worst.0,
                    halvings: depth,
                });
            }
            let half = dt / 2.0;
            let half_factors = Self::factor(&self.params, self.grid, half)?;
            let (mid, mut stats) = self.advance_by(state, half, depth + 1, Some(&half_factors))?;
            let (end, second) = self.advance_by(&mid, half, depth + 1, Some(&half_factors))?;
            stats.absorb(second);
            stats.halvings = stats.halvings.max(depth + 1);
            return Ok((end, stats));
        }

        let mut stats = StepStats {
            halvings: depth,
            substeps: 1,
            ..StepStats::default()
        };
        let h = self.grid.h();
        let fields = trial.map(|mut v| {
            for x in v.iter_mut() {
                if *x < 0.0 {
                    stats.clamp_events += 1;
                    stats.clamp_mass += -*x * h;
                    *x = 0.0;
                }
            }
            Field::from_vec_unchecked(self.grid, v)
        });
        let [n_s, n_e, n_c, n_p] = fields;
        Ok((
            FieldState {
                t: state.t + dt,
                n_s,
                n_e,
                n_c,
                n_p,
            },
            stats,
        ))
    }

    fn euler_step(&self, state: &FieldState, dt: f64, factors: &[ImplicitDiffusion; 4]) -> [Vec<f64>; 4] {
        let rhs = reaction_rhs(state, &self.params);
        let olds = state.fields();
        let mut out: [Vec<f64>; 4] = Default::default();
        for k in 0..4 {
            let mut b: Vec<f64> = olds[k]
                .values()
                .iter()
                .zip(rhs[k].values())
                .map(|(&n, &r)| n + dt * r)
                .collect();
            factors[k].solve_in_place(&mut b);
            out[k] = b;
        }
        out
    }
}

/// One step of size `cfg.dt`.
pub fn step(
    state: &FieldState,
    params: &ReactionParameters,
    cfg: &SolverConfig,
) -> Result<(FieldState, StepStats)> {
    Stepper::new(params, cfg, state.grid())?.advance(state)
}

/// What the observer sees at each output time.
#[derive(Debug)]
pub struct Sample<'a> {
    pub step: usize,
    pub state: &'a FieldState,
    /// State one step earlier; `None` for the initial sample.
    pub previous: Option<&'a FieldState>,
    pub dt: f64,
    /// Cumulative clamping events up to and including this step.
    pub clamp_events: usize,
}

pub trait Observer {
    fn observe(&mut self, sample: &Sample<'_>) -> Result<()>;
}

impl<F: FnMut(&Sample<'_>) -> Result<()>> Observer for F {
    fn observe(&mut self, sample: &Sample<'_>) -> Result<()> {
        self(sample)
    }
}

/// Observer that records nothing.
pub struct NoObserver;

impl Observer for NoObserver {
    fn observe(&mut self, _: &Sample<'_>) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// States at output times, starting with the initial data.
    pub snapshots: Vec<FieldState>,
    pub clamp_events: usize,
    pub clamp_mass: f64,
    pub max_halvings: u32,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &FieldState {
        self.snapshots.last().expect("trajectory always holds the initial state")
    }
}

/// Integrates from `initial` to `cfg.t_end`, calling `observer` on the
/// initial state, every `cfg.output_every` steps, and on the final step.
pub fn simulate(
    initial: &FieldState,
    params: &ReactionParameters,
    cfg: &SolverConfig,
    observer: &mut dyn Observer,
) -> Result<Trajectory> {
    let masses = conserved_masses(initial)?;
    if !(masses.m1 > 0.0 && masses.m2 > 0.0) {
        return Err(Error::Domain(format!(
            "initial data must carry positive enzyme and substrate mass, got m1 = {}, m2 = {}",
            masses.m1, masses.m2
        )));
    }
    let initial = FieldState::from_fields(initial.t, initial.fields().map(Clone::clone))?;
    let stepper = Stepper::new(params, cfg, initial.grid())?;
    let n_steps = cfg.n_steps();
    let t0 = initial.t;

    observer.observe(&Sample {
        step: 0,
        state: &initial,
        previous: None,
        dt: cfg.dt,
        clamp_events: 0,
    })?;
    let mut traj = Trajectory {
        snapshots: vec![initial.clone()],
        clamp_events: 0,
        clamp_mass: 0.0,
        max_halvings: 0,
    };
    let mut current = initial;
    for k in 1..=n_steps {
        let (mut next, stats) = stepper.advance(&current)?;
        next.t = t0 + k as f64 * cfg.dt;
        traj.clamp_events += stats.clamp_events;
        traj.clamp_mass += stats.clamp_mass;
        traj.max_halvings = traj.max_halvings.max(stats.halvings);
        if k % cfg.output_every == 0 || k == n_steps {
            observer.observe(&Sample {
                step: k,
                state: &next,
                previous: Some(&current),
                dt: cfg.dt,
                clamp_events: traj.clamp_events,
            })?;
            traj.snapshots.push(next.clone());
        }
        current = next;
    }
    Ok(traj)
}

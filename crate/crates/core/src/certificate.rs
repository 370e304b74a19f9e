//! Explicit exponential-decay certificate.
//!
//! The entropy-dissipation inequality `D(n) >= c1 E(n | n_inf)` is assembled
//! from two pieces: a log-Sobolev part with rate `c_bar1 = 4 D_min / L`, and
//! a part controlling the distance of the spatial averages from equilibrium,
//! with rate `c_tilde1 = 4 min(P D_min, 1) / (c35 max(c3, c4))`. The final rate
//! is `c1 = min(c_bar1, c_tilde1) / 2`, and together with
//! `c2 = E(n0 | n_inf) / min(1/2m1, 1/2m2, 1/(m1 + m2))` it yields
//! `sum_i ||n_i(t) - n_i_inf||_{L1}^2 <= c2 exp(-c1 t)`.

use serde::{Deserialize, Serialize};

use crate::entropy::relative_entropy;
use crate::grid::{poincare_constant, Grid};
use crate::model::{ConservedMasses, EquilibriumState, ReactionParameters};
use crate::solver::FieldState;
use crate::{Error, Result};

/// Threshold splitting the `mu_E` range in the two cases with `mu_C > 0`
/// and exactly one of `mu_S`, `mu_P` positive.
pub const ETA: f64 = -0.5;

/// Default log-Sobolev constant for the unit interval. The sharp value is
/// `2 / pi^2`, so 1 is admissible but not tight.
pub const DEFAULT_L_LOGSOB: f64 = 1.0;

/// Which reading of two ambiguous constants to use.
///
/// `Consistent` takes `K3 = min(k_minus, kp_plus) n_C_inf` and couples `K2`
/// through `sqrt(kp_minus)`, matching how both enter the expansion of the
/// reaction terms. `Printed` takes `K3 = min(sqrt k_minus, sqrt kp_plus) n_C_inf`
/// and `sqrt(k_minus) K2` instead. Both agree when all rates equal one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateVariant {
    #[default]
    Consistent,
    Printed,
}

/// Intermediate constants of the averaged-distance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    pub k7: f64,
    /// Upper bounds on `mu_i` in species order `S, E, C, P`.
    pub mu_max: [f64; 4],
    /// `2 max_i(1 / n_i_inf) max(2 m1, 2 m2, m1 + m2)`
    pub c35: f64,
}

pub fn k_constants(
    params: &ReactionParameters,
    eq: &EquilibriumState,
    masses: &ConservedMasses,
    variant: CertificateVariant,
) -> Result<KConstants> {
    params.validate()?;
    masses.validate()?;
    let conc = eq.concentrations();
    if conc.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
        return Err(Error::Domain(format!("degenerate equilibrium {conc:?}")));
    }
    let [n_s, n_e, n_c, n_p] = conc;
    let ConservedMasses { m1, m2 } = *masses;

    let k1 = (params.k_plus * m1 * m2).sqrt() + (params.k_minus * (m1 + m2) / 2.0).sqrt();
    let k2 = (params.kp_minus * m1 * m2).sqrt() + (params.kp_plus * (m1 + m2) / 2.0).sqrt();
    let k3 = match variant {
        CertificateVariant::Consistent => params.k_minus.min(params.kp_plus) * n_c,
        CertificateVariant::Printed => params.k_minus.sqrt().min(params.kp_plus.sqrt()) * n_c,
    };
    let k4 = conc.iter().map(|n| 1.0 / n).fold(f64::INFINITY, f64::min);

    // sqrt averages are bounded by sqrt of the species' share of the masses
    let mu_max = [
        (m2 / n_s).sqrt() - 1.0,
        (m1 / n_e).sqrt() - 1.0,
        (m1.min(m2) / n_c).sqrt() - 1.0,
        (m2 / n_p).sqrt() - 1.0,
    ];
    let k5 = (mu_max[0].powi(2) + mu_max[3].powi(2)) / n_e;
    let k6 = n_s * (1.0 + n_p + n_c) + n_e;
    let k7 = n_p * (1.0 + n_s + n_c) + n_e;
    let inv_min = conc.iter().map(|n| 1.0 / n).fold(0.0, f64::max);
    let c35 = 2.0 * inv_min * (2.0 * m1).max(2.0 * m2).max(m1 + m2);
    Ok(KConstants {
        k1,
        k2,
        k3,
        k4,
        k5,
        k6,
        k7,
        mu_max,
        c35,
    })
}

/// `(c3, c4)` of the master inequality.
pub fn c3_c4(k: &KConstants, params: &ReactionParameters, variant: CertificateVariant) -> (f64, f64) {
    let c4 = (16.0 / k.k4).max(k.k6 / 4.0).max(k.k7 / 4.0) / k.k3;
    let coupling = match variant {
        CertificateVariant::Consistent => params.k_plus.sqrt() * k.k1 + params.kp_minus.sqrt() * k.k2,
        CertificateVariant::Printed => params.k_plus.sqrt() * k.k1 + params.k_minus.sqrt() * k.k2,
    };
    let c3 = 3f64.max(2.0 * (1.0 + k.k5 / k.k4)) + c4 * coupling;
    (c3, c4)
}

/// `c3 - c4 * coupling`, the coefficient left in front of the variance sum
/// once the reaction remainders are absorbed.
pub fn c4_coupling(k: &KConstants, params: &ReactionParameters, variant: CertificateVariant) -> f64 {
    match variant {
        CertificateVariant::Consistent => params.k_plus.sqrt() * k.k1 + params.kp_minus.sqrt() * k.k2,
        CertificateVariant::Printed => params.k_plus.sqrt() * k.k1 + params.k_minus.sqrt() * k.k2,
    }
}

/// `(c_bar1, c_tilde1, c1)`.
pub fn convergence_rate(
    c3: f64,
    c4: f64,
    k: &KConstants,
    params: &ReactionParameters,
    grid: &Grid,
    l_logsob: f64,
) -> Result<(f64, f64, f64)> {
    if !(l_logsob.is_finite() && l_logsob > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "log-Sobolev constant must be > 0, got {l_logsob}"
        )));
    }
    let d_min = params.d_min();
    let c_bar1 = 4.0 * d_min / l_logsob;
    let p = poincare_constant(grid);
    let c_tilde1 = 4.0 * (p * d_min).min(1.0) / (k.c35 * c3.max(c4));
    Ok((c_bar1, c_tilde1, c_bar1.min(c_tilde1) / 2.0))
}

/// Relative entropy of the initial data divided by the smallest squared-L1
/// weight.
pub fn c2(initial: &FieldState, eq: &EquilibriumState, masses: &ConservedMasses) -> Result<f64> {
    let e0 = relative_entropy(initial, eq)?;
    Ok(e0 / c2_divisor(masses))
}

/// `min(1/2m1, 1/2m2, 1/(m1 + m2))`
pub fn c2_divisor(masses: &ConservedMasses) -> f64 {
    (1.0 / (2.0 * masses.m1))
        .min(1.0 / (2.0 * masses.m2))
        .min(1.0 / (masses.m1 + masses.m2))
}

/// Every constant of the certificate; serialises with the stable key set
/// used by the command line tool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    pub k7: f64,
    pub mu_max_s: f64,
    pub mu_max_e: f64,
    pub mu_max_c: f64,
    pub mu_max_p: f64,
    #[serde(rename = "c35")]
    pub c_35: f64,
    pub p_omega: f64,
    pub l_logsob: f64,
    pub c_bar1: f64,
    pub c_tilde1: f64,
    pub c3: f64,
    pub c4: f64,
    pub c1: f64,
    pub eta: f64,
}

impl CertificateConstants {
    pub fn compute(
        params: &ReactionParameters,
        eq: &EquilibriumState,
        grid: &Grid,
        l_logsob: f64,
        variant: CertificateVariant,
    ) -> Result<Self> {
        let k = k_constants(params, eq, &eq.masses, variant)?;
        let (c3, c4) = c3_c4(&k, params, variant);
        let (c_bar1, c_tilde1, c1) = convergence_rate(c3, c4, &k, params, grid, l_logsob)?;
        Ok(Self {
            k1: k.k1,
            k2: k.k2,
            k3: k.k3,
            k4: k.k4,
            k5: k.k5,
            k6: k.k6,
            k7: k.k7,
            mu_max_s: k.mu_max[0],
            mu_max_e: k.mu_max[1],
            mu_max_c: k.mu_max[2],
            mu_max_p: k.mu_max[3],
            c_35: k.c35,
            p_omega: poincare_constant(grid),
            l_logsob,
            c_bar1,
            c_tilde1,
            c3,
            c4,
            c1,
            eta: ETA,
        })
    }

    pub fn mu_max(&self) -> [f64; 4] {
        [self.mu_max_s, self.mu_max_e, self.mu_max_c, self.mu_max_p]
    }
}

/// Right-hand side of the squared-L1 decay bound at time `t`.
pub fn l1_bound(c1: f64, c2: f64, t: f64) -> f64 {
    c2 * (-c1 * t).exp()
}

/// Least-squares exponential rate of a relative-entropy series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub lambda_fit: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub n_points: usize,
    /// The window was cut short because the series underflowed.
    pub shrunk: bool,
}

/// Values below this are treated as underflow by [`decay_fit`].
pub const UNDERFLOW: f64 = 1e-300;

/// Fits `log E_rel = a - lambda t` over `window`. If the series drops below
/// [`UNDERFLOW`] inside the window, the window ends just before it.
pub fn decay_fit(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    const MIN_POINTS: usize = 10;
    let mut shrunk = false;
    let mut pts = Vec::new();
    for &(t, e) in series.iter().filter(|(t, _)| *t >= window.0 && *t <= window.1) {
        if !(e > UNDERFLOW) {
            shrunk = true;
            break;
        }
        pts.push((t, e.ln()));
    }
    if pts.len() < MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_POINTS,
            found: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - t_mean).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - t_mean) * (p.1 - y_mean)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - y_mean).powi(2)).sum();
    let slope = sty / stt;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (y_mean + slope * (p.0 - t_mean))).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let window = (pts[0].0, pts[pts.len() - 1].0);
    Ok(DecayFit {
        lambda_fit: -slope,
        window,
        r_squared,
        n_points: pts.len(),
        shrunk,
    })
}

/// Tail window for [`decay_fit`]: the second half of the stretch over which
/// the series stays above `rel_floor` times its initial value.
pub fn tail_window(series: &[(f64, f64)], rel_floor: f64) -> (f64, f64) {
    let Some(&(t0, e0)) = series.first() else {
        return (0.0, 0.0);
    };
    let floor = (rel_floor * e0).max(UNDERFLOW);
    let t_last = series
        .iter()
        .take_while(|(_, e)| *e > floor)
        .last()
        .map_or(t0, |p| p.0);
    (t0 + 0.5 * (t_last - t0), t_last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::compute_equilibrium;

    fn symmetric() -> (ReactionParameters, EquilibriumState, Grid) {
        let p = ReactionParameters::uniform(1.0, 1.0);
        let eq = compute_equilibrium(&p, &ConservedMasses::new(1.0, 1.0).unwrap()).unwrap();
        (p, eq, Grid::new(64).unwrap())
    }

    /// Closed forms at the unit point, written out with `s = sqrt 3`:
    /// `n = ((s-1)/2, s-1, 2-s, (s-1)/2)`.
    #[test]
    fn symmetric_point_constants() {
        let (p, eq, g) = symmetric();
        let s = 3f64.sqrt();
        let k = k_constants(&p, &eq, &eq.masses, CertificateVariant::Consistent).unwrap();
        assert!((k.k1 - 2.0).abs() < 1e-15 && (k.k2 - 2.0).abs() < 1e-15);
        assert!((k.k4 - 1.0 / (s - 1.0)).abs() < 1e-14);
        assert!((k.k4 - 1.366025403784).abs() < 1e-11);
        let k6 = (s - 1.0) / 2.0 * (1.0 + (s - 1.0) / 2.0 + 2.0 - s) + s - 1.0;
        assert!((k.k6 - k6).abs() < 1e-14 && (k.k6 - 1.330127018922).abs() < 1e-11);
        assert_eq!(k.k6, k.k7);
        assert!((k.k3 - (2.0 - s)).abs() < 1e-15);

        let (c3, c4) = c3_c4(&k, &p, CertificateVariant::Consistent);
        // 16/K4 dominates the maximum here
        assert!(k.k6 / 4.0 < 16.0 / k.k4 && k.k7 / 4.0 < 16.0 / k.k4);
        assert!((c4 - 16.0 / (k.k3 * k.k4)).abs() < 1e-12);
        assert!((c4 - 43.712).abs() < 5e-3, "c4 = {c4}");
        assert!((c3 - 178.55).abs() < 5e-2, "c3 = {c3}");

        let (cb, ct, c1) = convergence_rate(c3, c4, &k, &p, &g, 1.0).unwrap();
        assert!((k.c35 - 4.0 / (2.0 - s)).abs() < 1e-12);
        assert!((k.c35 - 14.928).abs() < 1e-3);
        assert_eq!(cb, 4.0);
        assert!((ct - 1.5006e-3).abs() < 1e-6, "c_tilde1 = {ct}");
        assert!((c1 - ct / 2.0).abs() < 1e-18);
        assert!(c1 <= cb && c1 <= ct);
    }

    #[test]
    fn variants_agree_at_unit_rates_and_differ_otherwise() {
        let (p, eq, g) = symmetric();
        let a = CertificateConstants::compute(&p, &eq, &g, 1.0, CertificateVariant::Consistent).unwrap();
        let b = CertificateConstants::compute(&p, &eq, &g, 1.0, CertificateVariant::Printed).unwrap();
        assert_eq!(a, b);

        let q = ReactionParameters {
            k_plus: 0.5,
            k_minus: 0.25,
            kp_plus: 2.0,
            kp_minus: 4.0,
            ..p
        };
        let eq = compute_equilibrium(&q, &ConservedMasses::new(1.0, 2.0).unwrap()).unwrap();
        let a = CertificateConstants::compute(&q, &eq, &g, 1.0, CertificateVariant::Consistent).unwrap();
        let b = CertificateConstants::compute(&q, &eq, &g, 1.0, CertificateVariant::Printed).unwrap();
        assert!(a.k3 < b.k3);
        assert_ne!(a.c3, b.c3);
    }

    #[test]
    fn mirror_symmetry_swaps_constants() {
        let p = ReactionParameters {
            k_plus: 2.0,
            k_minus: 0.7,
            kp_plus: 1.3,
            kp_minus: 0.4,
            ..ReactionParameters::uniform(1.0, 1.0)
        };
        let mirrored = ReactionParameters {
            k_plus: p.kp_minus,
            k_minus: p.kp_plus,
            kp_plus: p.k_minus,
            kp_minus: p.k_plus,
            ..p
        };
        let m = ConservedMasses::new(0.8, 1.7).unwrap();
        let eq = compute_equilibrium(&p, &m).unwrap();
        let eqm = compute_equilibrium(&mirrored, &m).unwrap();
        assert!((eq.n_s_inf - eqm.n_p_inf).abs() < 1e-14);
        let k = k_constants(&p, &eq, &m, CertificateVariant::Consistent).unwrap();
        let km = k_constants(&mirrored, &eqm, &m, CertificateVariant::Consistent).unwrap();
        assert!((k.k1 - km.k2).abs() < 1e-14 && (k.k2 - km.k1).abs() < 1e-14);
        assert!((k.k6 - km.k7).abs() < 1e-14 && (k.k7 - km.k6).abs() < 1e-14);
    }

    #[test]
    fn scaling_rates_and_diffusion() {
        let (p, eq, g) = symmetric();
        let k = k_constants(&p, &eq, &eq.masses, CertificateVariant::Consistent).unwrap();
        let (_, c4) = c3_c4(&k, &p, CertificateVariant::Consistent);
        let doubled = ReactionParameters {
            k_plus: 2.0,
            k_minus: 2.0,
            kp_plus: 2.0,
            kp_minus: 2.0,
            ..p
        };
        // equilibrium depends only on rate ratios
        let k2 = k_constants(&doubled, &eq, &eq.masses, CertificateVariant::Consistent).unwrap();
        let (_, c4d) = c3_c4(&k2, &doubled, CertificateVariant::Consistent);
        assert!((c4d - c4 / 2.0).abs() < 1e-12);

        let base = CertificateConstants::compute(&p, &eq, &g, 1.0, CertificateVariant::Consistent).unwrap();
        let fast = ReactionParameters {
            d_s: 3.0,
            d_e: 3.0,
            d_c: 3.0,
            d_p: 3.0,
            ..p
        };
        let scaled = CertificateConstants::compute(&fast, &eq, &g, 1.0, CertificateVariant::Consistent).unwrap();
        assert_eq!(scaled.c_tilde1, base.c_tilde1);
        assert_eq!(scaled.c_bar1, 3.0 * base.c_bar1);
    }

    #[test]
    fn rate_is_monotone_in_its_inputs() {
        let (p, eq, g) = symmetric();
        let k = k_constants(&p, &eq, &eq.masses, CertificateVariant::Consistent).unwrap();
        let (c3, c4) = c3_c4(&k, &p, CertificateVariant::Consistent);
        let (_, _, c1) = convergence_rate(c3, c4, &k, &p, &g, 1.0).unwrap();
        let (_, _, c1_big) = convergence_rate(2.0 * c3, c4, &k, &p, &g, 1.0).unwrap();
        assert!(c1_big <= c1);
        let slow = ReactionParameters { d_c: 0.05, ..p };
        let (_, _, c1_slow) = convergence_rate(c3, c4, &k, &slow, &g, 1.0).unwrap();
        assert!(c1_slow <= c1);
        assert!(convergence_rate(c3, c4, &k, &p, &g, 0.0).is_err());
    }

    #[test]
    fn c2_examples() {
        let (_, eq, g) = symmetric();
        let st = FieldState::constant(g, eq.concentrations()).unwrap();
        assert_eq!(c2(&st, &eq, &eq.masses).unwrap(), 0.0);
        assert_eq!(c2_divisor(&eq.masses), 0.5);
        let mut st = st;
        st.n_s = crate::grid::Field::from_fn(g, |x| 2.0 * eq.n_s_inf * x);
        let e0 = relative_entropy(&st, &eq).unwrap();
        assert!((c2(&st, &eq, &eq.masses).unwrap() - 2.0 * e0).abs() < 1e-15);
    }

    #[test]
    fn decay_fit_examples() {
        let series: Vec<(f64, f64)> = (0..50).map(|k| {
            let t = 0.1 * k as f64;
            (t, 3.0 * (-2.0 * t).exp())
        }).collect();
        let fit = decay_fit(&series, (0.0, 10.0)).unwrap();
        assert!((fit.lambda_fit - 2.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(!fit.shrunk);

        let flat: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, 0.5)).collect();
        let fit = decay_fit(&flat, (0.0, 100.0)).unwrap();
        assert_eq!(fit.lambda_fit, 0.0);

        let mut under = series.clone();
        for p in under.iter_mut().skip(30) {
            p.1 = 1e-320;
        }
        let fit = decay_fit(&under, (0.0, 10.0)).unwrap();
        assert!(fit.shrunk);
        assert_eq!(fit.n_points, 30);

        assert!(matches!(
            decay_fit(&series[..5], (0.0, 10.0)),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn tail_window_stops_at_floor() {
        let series: Vec<(f64, f64)> = (0..=100).map(|k| (k as f64, (-(k as f64)).exp())).collect();
        let (a, b) = tail_window(&series, 1e-20);
        assert_eq!(b, 46.0);
        assert_eq!(a, 23.0);
    }
}

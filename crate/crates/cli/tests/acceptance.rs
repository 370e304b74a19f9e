//! Acceptance suite: one function per criterion, each printing a PASS/FAIL
//! line. The lines go straight to stdout so they show up in captured runs.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use enztrend::certificate::{c2, decay_fit, tail_window, CertificateConstants};
use enztrend::entropy::{duality_diagnostics, entropy, entropy_dissipation, EntropyReport};
use enztrend::grid::{Field, Grid};
use enztrend::model::{
    compute_equilibrium, conservation_residual, detailed_balance_residual, sigma_weights, ConservedMasses,
    ReactionParameters,
};
use enztrend::solver::{simulate, InitialData, Profile, Sample, SolverConfig};
use enztrend::verifier::{random_test_field, run_verification, sqrt_split_margin, CaseLabel, VerifyConfig, VerifyReport};
use enztrend_cli::{prepare, run_rows, RunConfig, FIT_FLOOR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SHIPPED: [&str; 5] = ["symmetric", "m1_ll_m2", "unequal_diffusivities", "step", "random"];

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.json"))
}

fn shipped(name: &str) -> RunConfig {
    RunConfig::load(&config_path(name)).unwrap()
}

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn report(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            out.passed = false;
            out.detail.push_str(&format!("; runtime {elapsed:?} exceeds {limit:?}"));
        }
    }
    let line = format!(
        "{} criterion {id:>2} ({name}): {} [{:.2?}]\n",
        if out.passed { "PASS" } else { "FAIL" },
        out.detail,
        elapsed
    );
    let _ = std::io::stdout().write_all(line.as_bytes());
    out.passed
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

// ---------------------------------------------------------------------------
// Independent well-mixed ODE reference

fn ode_rhs(p: &ReactionParameters, y: [f64; 4]) -> [f64; 4] {
    let [s, e, c, pp] = y;
    let f1 = p.k_plus * s * e - p.k_minus * c;
    let f2 = p.kp_minus * e * pp - p.kp_plus * c;
    [-f1, -(f1 + f2), f1 + f2, -f2]
}

fn rk4(p: &ReactionParameters, y: [f64; 4], dt: f64) -> [f64; 4] {
    let add = |a: [f64; 4], b: [f64; 4], s: f64| [0, 1, 2, 3].map(|i| a[i] + s * b[i]);
    let k1 = ode_rhs(p, y);
    let k2 = ode_rhs(p, add(y, k1, dt / 2.0));
    let k3 = ode_rhs(p, add(y, k2, dt / 2.0));
    let k4 = ode_rhs(p, add(y, k3, dt));
    [0, 1, 2, 3].map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

fn relax(p: &ReactionParameters, mut y: [f64; 4]) -> [f64; 4] {
    let scale: f64 = y.iter().sum();
    let fastest = p.rates().iter().fold(0.0f64, |a, &b| a.max(b)) * scale.max(1.0);
    let dt = 0.2 / fastest;
    for _ in 0..20_000_000 {
        y = rk4(p, y, dt);
        if ode_rhs(p, y).iter().all(|r| r.abs() < 1e-14 * fastest * scale) {
            break;
        }
    }
    y
}

fn equilibrium_reproduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_res, mut worst_ode) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let p = ReactionParameters {
            k_plus: log_uniform(&mut rng, 0.1, 10.0),
            k_minus: log_uniform(&mut rng, 0.1, 10.0),
            kp_plus: log_uniform(&mut rng, 0.1, 10.0),
            kp_minus: log_uniform(&mut rng, 0.1, 10.0),
            ..ReactionParameters::uniform(1.0, 1.0)
        };
        let masses = ConservedMasses::new(log_uniform(&mut rng, 0.05, 20.0), log_uniform(&mut rng, 0.05, 20.0)).unwrap();
        let eq = compute_equilibrium(&p, &masses).unwrap();
        let (r1, r2) = detailed_balance_residual(&eq, &p);
        let (c1, c2) = conservation_residual(&eq);
        worst_res = worst_res
            .max(r1.abs() / (p.k_minus * eq.n_c_inf))
            .max(r2.abs() / (p.kp_plus * eq.n_c_inf))
            .max(c1.abs() / masses.m1)
            .max(c2.abs() / masses.m2);
        let y = relax(&p, [masses.m2, masses.m1, 0.0, 0.0]);
        for (got, want) in y.iter().zip(eq.concentrations()) {
            worst_ode = worst_ode.max((got - want).abs() / want);
        }
    }
    Outcome::new(
        worst_res < 1e-12 && worst_ode < 1e-8,
        format!("100 sets, max relative residual {worst_res:.2e} (< 1e-12), max ODE gap {worst_ode:.2e} (< 1e-8)"),
    )
}

// ---------------------------------------------------------------------------
// Simulation-based criteria

struct Run {
    name: &'static str,
    reports: Vec<EntropyReport>,
    clamp_events: usize,
    cert: CertificateConstants,
    c2: f64,
    steps_per_row: f64,
}

fn run_config(name: &'static str, cfg: &RunConfig) -> Run {
    let prep = prepare(cfg).unwrap();
    let rows = run_rows(cfg, &prep).unwrap();
    let cert = CertificateConstants::compute(&cfg.rates, &prep.eq, &prep.grid, cfg.l_logsob(), cfg.variant).unwrap();
    Run {
        name,
        clamp_events: rows.last().map_or(0, |r| r.clamp_events),
        reports: rows.iter().map(|r| r.report).collect(),
        c2: c2(&prep.initial, &prep.eq, &prep.masses).unwrap(),
        cert,
        steps_per_row: cfg.time.output_every as f64,
    }
}

fn long_symmetric() -> RunConfig {
    let mut cfg = shipped("symmetric");
    cfg.time.t_end = 50.0;
    cfg
}

fn conservation(run: &Run) -> Outcome {
    let m0 = run.reports[0].masses;
    let worst = run
        .reports
        .iter()
        .map(|r| ((r.masses.m1 - m0.m1).abs() + (r.masses.m2 - m0.m2).abs()) / m0.total())
        .fold(0.0, f64::max);
    Outcome::new(
        worst < 1e-10 && run.clamp_events == 0,
        format!(
            "{} rows to t = 50, max relative mass drift {worst:.2e} (< 1e-10), {} clamp events",
            run.reports.len(),
            run.clamp_events
        ),
    )
}

/// Worst relative gap between the centred difference of `E` and `D`.
fn entropy_rate_gap(dt: f64) -> f64 {
    let cfg = shipped("symmetric");
    let p = ReactionParameters {
        k_plus: 2.0,
        k_minus: 0.5,
        d_e: 0.3,
        ..cfg.rates
    };
    let sigma = sigma_weights(&p).unwrap();
    let st = InitialData::uniform(1.0, 1.0, Profile::Bump { base: 0.1, center: 0.5 })
        .build(Grid::new(cfg.grid.n_cells).unwrap(), 0)
        .unwrap();
    let mut rows = Vec::new();
    let mut obs = |s: &Sample<'_>| -> enztrend::Result<()> {
        rows.push((entropy(s.state, &sigma), entropy_dissipation(s.state, &p, &sigma).d));
        Ok(())
    };
    simulate(&st, &p, &SolverConfig::new(dt, 0.05), &mut obs).unwrap();
    (1..rows.len() - 1)
        .map(|k| (-(rows[k + 1].0 - rows[k - 1].0) / (2.0 * dt) - rows[k].1).abs() / rows[k].1)
        .fold(0.0, f64::max)
}

fn entropy_structure(run: &Run) -> Outcome {
    let worst_rise = run
        .reports
        .windows(2)
        .map(|w| (w[1].e - w[0].e) / run.steps_per_row)
        .fold(f64::NEG_INFINITY, f64::max);
    let gaps: Vec<f64> = [4e-4, 2e-4, 1e-4].into_iter().map(entropy_rate_gap).collect();
    let ratios: Vec<f64> = gaps.windows(2).map(|w| w[0] / w[1]).collect();
    let first_order = ratios.iter().all(|r| (1.7..2.3).contains(r));
    Outcome::new(
        worst_rise <= 1e-8 && gaps[2] < 0.05 && first_order,
        format!(
            "max per-step rise of E {worst_rise:.2e} (<= 1e-8); |-dE/dt - D|/D = {:.2e} at dt = 1e-4 (< 5%), halving ratios {:.2}, {:.2}",
            gaps[2], ratios[0], ratios[1]
        ),
    )
}

fn l1_bound(runs: &[Run]) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for run in runs {
        let worst = run
            .reports
            .iter()
            .map(|r| {
                let sq: f64 = r.l1_dist.iter().map(|x| x * x).sum();
                (run.c2 * (-run.cert.c1 * r.t).exp() - sq) / run.c2
            })
            .fold(f64::INFINITY, f64::min);
        ok &= worst >= 0.0;
        parts.push(format!("{} {worst:.2e}", run.name));
    }
    Outcome::new(ok, format!("min relative margin of C2 e^(-C1 t) - sum ||n_i - n_i,inf||_L1^2: {}", parts.join(", ")))
}

fn eedi(runs: &[Run]) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for run in runs {
        let d_max = run.reports.iter().map(|r| r.d).fold(0.0, f64::max);
        let worst = run
            .reports
            .iter()
            .map(|r| r.d - run.cert.c1 * r.e_rel)
            .fold(f64::INFINITY, f64::min);
        ok &= worst >= -1e-8 * d_max;
        parts.push(format!("{} {worst:.2e}", run.name));
    }
    Outcome::new(ok, format!("min of D - C1 E_rel: {}", parts.join(", ")))
}

fn fitted_rate(runs: &[Run]) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for run in runs {
        let series: Vec<(f64, f64)> = run.reports.iter().map(|r| (r.t, r.e_rel)).collect();
        match decay_fit(&series, tail_window(&series, FIT_FLOOR)) {
            Ok(fit) => {
                ok &= fit.lambda_fit >= run.cert.c1;
                parts.push(format!("{} {:.3e} >= {:.3e}", run.name, fit.lambda_fit, run.cert.c1));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{} fit failed: {e}", run.name));
            }
        }
    }
    Outcome::new(ok, format!("lambda_fit vs C1: {}", parts.join(", ")))
}

fn duality(names: &[&'static str]) -> Outcome {
    let (mut a_viol, mut worst_ratio, mut worst_int) = (0usize, 0.0f64, f64::NEG_INFINITY);
    let mut ok = true;
    for name in names {
        let cfg = shipped(name);
        let prep = prepare(&cfg).unwrap();
        let mut obs = |s: &Sample<'_>| -> enztrend::Result<()> {
            if let Some(prev) = s.previous {
                let d = duality_diagnostics(prev, s.state, &cfg.rates, &prep.sigma);
                let slack = 1e-12 * d.z.max().max(1.0) / s.dt;
                a_viol += d.a_violations;
                worst_ratio = worst_ratio.max(d.residual_max / d.tau);
                worst_int = worst_int.max(d.residual_integral);
                ok &= d.residual_max <= d.tau && d.residual_integral <= slack;
            }
            Ok(())
        };
        simulate(&prep.initial, &cfg.rates, &cfg.time.solver_config(), &mut obs).unwrap();
    }
    Outcome::new(
        ok && a_viol == 0,
        format!(
            "{a_viol} cells with A outside [D_min, D_max]; max residual/tau {worst_ratio:.2e} (<= 1); max residual integral {worst_int:.2e} (<= quadrature slack)"
        ),
    )
}

// ---------------------------------------------------------------------------
// Sampled inequalities

fn verify_with(name: &str, f: impl FnOnce(VerifyConfig) -> VerifyConfig) -> VerifyReport {
    let cfg = shipped(name);
    let prep = prepare(&cfg).unwrap();
    let none = VerifyConfig {
        seed: cfg.seed,
        split_samples: 0,
        ckp_samples: 0,
        elementary_samples: 0,
        log_sobolev_samples: 0,
        master_samples_per_case: 0,
        ..VerifyConfig::default()
    };
    run_verification(&cfg.rates, &prep.masses, cfg.l_logsob(), &f(none)).unwrap()
}

fn sqrt_split() -> Outcome {
    let r = verify_with("symmetric", |c| VerifyConfig { split_samples: 10_000, ..c });
    let split = &r.checks["sqrt_mean_split"];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_zero = 0.0f64;
    for _ in 0..1_000 {
        let g = Grid::new(rng.gen_range(2..=64)).unwrap();
        let u = random_test_field(&mut rng, g, true);
        worst_zero = worst_zero.max(sqrt_split_margin(&u, &Field::constant(g, 0.0)).margin.abs());
    }
    Outcome::new(
        split.samples == 10_000 && split.min_margin >= -1e-12 && worst_zero <= 1e-13,
        format!(
            "{} pairs, min margin {:.2e} (>= -1e-12); |margin| at v = 0 up to {worst_zero:.2e} (<= 1e-13)",
            split.samples, split.min_margin
        ),
    )
}

fn ckp() -> Outcome {
    let r = verify_with("symmetric", |c| VerifyConfig { ckp_samples: 10_000, ..c });
    let c = &r.checks["ckp"];
    Outcome::new(
        c.samples == 10_000 && c.min_margin >= -1e-12,
        format!("{} pairs, min margin {:.2e} (>= -1e-12)", c.samples, c.min_margin),
    )
}

fn master() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in SHIPPED {
        let r = verify_with(name, |c| VerifyConfig {
            master_samples_per_case: 1_000,
            ..c
        });
        let forms = ["master_field_form", "master_averaged_form", "master_mu_form"];
        let full = forms
            .iter()
            .all(|f| r.checks[*f].passed && r.checks[*f].samples == 1_000 * CaseLabel::ALL.len());
        let small = &r.checks["master_case_i_small_constants"];
        let excluded = r.checks["excluded_enzyme_complex"].passed && r.checks["excluded_substrate_complex_product"].passed;
        let reach = r.checks["case_reachability"].passed && r.checks["sampler_constraints"].passed;
        let this = full && small.passed && small.samples == 1_000 && excluded && reach;
        ok &= this;
        let min = forms.iter().map(|f| r.checks[*f].min_margin).fold(f64::INFINITY, f64::min);
        parts.push(format!("{name} min {min:.2e}{}", if this { "" } else { " FAILED" }));
    }
    Outcome::new(
        ok,
        format!(
            "1000 samples in each of 11 cases, (3, 0) in case I, excluded patterns unreachable within 1e5 draws: {}",
            parts.join(", ")
        ),
    )
}

fn elementary() -> Outcome {
    let r = verify_with("symmetric", |c| VerifyConfig {
        elementary_samples: 100_000,
        ..c
    });
    let names = [
        "elementary_phi_quadratic",
        "elementary_log_difference",
        "elementary_sum_of_squares",
        "elementary_shifted_square",
    ];
    let ok = names
        .iter()
        .all(|n| r.checks[*n].min_margin >= 0.0 && r.checks[*n].samples > 100_000);
    let mins: Vec<String> = names.iter().map(|n| format!("{:.2e}", r.checks[*n].min_margin)).collect();
    Outcome::new(ok, format!("1e5 samples each, min margins {}", mins.join(", ")))
}

// ---------------------------------------------------------------------------
// Determinism of the binary

fn run_bin(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_enztrend"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn determinism() -> Outcome {
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for name in SHIPPED {
        let path = config_path(name);
        let path = path.to_str().unwrap();
        for cmd in ["simulate", "certificate", "equilibrium", "verify"] {
            let (a, b) = (run_bin(&[cmd, path]), run_bin(&[cmd, path]));
            compared += 1;
            if a != b || a.is_empty() {
                mismatches.push(format!("{cmd} {name}"));
            }
        }
    }
    Outcome::new(
        mismatches.is_empty(),
        format!("{compared} command/config pairs run twice, mismatches: {mismatches:?}"),
    )
}

#[test]
fn acceptance() {
    let secs = |s| Some(Duration::from_secs(s));
    let mut results = Vec::new();
    results.push(report(1, "equilibrium reproduction", secs(5), equilibrium_reproduction));

    let mut long = None;
    results.push(report(2, "conservation", secs(10), || {
        let run = run_config("symmetric", &long_symmetric());
        let out = conservation(&run);
        long = Some(run);
        out
    }));
    let long = long.unwrap();
    results.push(report(3, "entropy structure", None, || entropy_structure(&long)));

    let mut runs = Vec::new();
    results.push(report(4, "L1 decay bound", secs(60), || {
        runs = SHIPPED.iter().map(|n| run_config(n, &shipped(n))).collect();
        l1_bound(&runs)
    }));
    results.push(report(5, "EEDI", None, || eedi(&runs)));
    results.push(report(6, "fitted rate dominates C1", None, || fitted_rate(&runs)));

    results.push(report(7, "square-root splitting", secs(2), sqrt_split));
    results.push(report(8, "CKP inequality", None, ckp));
    results.push(report(9, "master inequality", secs(30), master));
    results.push(report(10, "duality diagnostics", None, || duality(&SHIPPED)));
    results.push(report(11, "elementary inequalities", None, elementary));
    results.push(report(12, "determinism", None, determinism));

    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

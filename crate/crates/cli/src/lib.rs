//! Subcommands of the `enztrend` tool: `simulate`, `certificate`, `verify`
//! and `equilibrium`.
//!
//! Every command takes a [`RunConfig`] and returns its output as a string so
//! that runs can be compared byte for byte.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use enztrend::certificate::{
    c2, decay_fit, tail_window, CertificateConstants, CertificateVariant,
};
use enztrend::entropy::{duality_diagnostics, entropy_report, EntropyReport};
use enztrend::grid::Grid;
use enztrend::model::{
    compute_equilibrium, conservation_residual, conserved_masses, detailed_balance_residual,
    sigma_weights, ConservedMasses, EquilibriumState, SigmaWeights,
};
use enztrend::solver::{simulate, FieldState, Sample};
use enztrend::verifier::{
    check_eedi, check_entropy_decay, check_l1_decay, run_verification, CheckResult,
    TrajectoryCheck, VerifyConfig, VerifyReport,
};
use serde_json::{json, Map, Value};
use thiserror::Error;

pub use config::RunConfig;

/// Exact CSV header written by `simulate`.
pub const CSV_HEADER: &str = "t,E,E_rel,D,fisher,reaction,ckp_bound,m1,m2,l1_S,l1_E,l1_C,l1_P,min_conc,duality_resid,clamp_events";

/// Relative floor below which the tail of `E_rel` is left out of rate fits.
pub const FIT_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(enztrend::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Io { .. } => 3,
            CliError::VerifyFailed(_) => 4,
        }
    }
}

fn config_err(e: enztrend::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Everything derived from a config before time stepping.
pub struct Prepared {
    pub grid: Grid,
    pub initial: FieldState,
    pub masses: ConservedMasses,
    pub eq: EquilibriumState,
    pub sigma: SigmaWeights,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    cfg.rates.validate().map_err(config_err)?;
    cfg.time.solver_config().validate().map_err(config_err)?;
    let grid = Grid::new(cfg.grid.n_cells).map_err(config_err)?;
    let initial = cfg.initial.build(grid, cfg.seed).map_err(config_err)?;
    let masses = conserved_masses(&initial).map_err(config_err)?;
    let eq = compute_equilibrium(&cfg.rates, &masses).map_err(config_err)?;
    let sigma = sigma_weights(&cfg.rates).map_err(config_err)?;
    Ok(Prepared {
        grid,
        initial,
        masses,
        eq,
        sigma,
    })
}

/// One CSV row's worth of diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub report: EntropyReport,
    pub duality_resid: f64,
    pub clamp_events: usize,
}

/// Runs the configured simulation and collects a row per output time.
pub fn run_rows(cfg: &RunConfig, prep: &Prepared) -> Result<Vec<Row>, CliError> {
    let mut rows = Vec::new();
    let mut observer = |s: &Sample<'_>| -> enztrend::Result<()> {
        let report = entropy_report(s.state, &cfg.rates, &prep.sigma, &prep.eq)?;
        let duality_resid = s.previous.map_or(f64::NAN, |prev| {
            duality_diagnostics(prev, s.state, &cfg.rates, &prep.sigma).residual_max
        });
        rows.push(Row {
            report,
            duality_resid,
            clamp_events: s.clamp_events,
        });
        log::debug!("t = {:.6} E_rel = {:e}", s.state.t, report.e_rel);
        Ok(())
    };
    let traj = simulate(&prep.initial, &cfg.rates, &cfg.time.solver_config(), &mut observer)
        .map_err(CliError::Solver)?;
    log::info!(
        "simulated to t = {} with {} clamp events",
        traj.last().t,
        traj.clamp_events
    );
    Ok(rows)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn format_csv(rows: &[Row]) -> String {
    let mut out = String::with_capacity(rows.len() * 400);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let r = &row.report;
        let cols = [
            r.t,
            r.e,
            r.e_rel,
            r.d,
            r.fisher_total,
            r.reaction_part,
            r.ckp_bound,
            r.masses.m1,
            r.masses.m2,
            r.l1_dist[0],
            r.l1_dist[1],
            r.l1_dist[2],
            r.l1_dist[3],
            r.min_conc,
            row.duality_resid,
        ];
        for c in cols {
            out.push_str(&num(c));
            out.push(',');
        }
        let _ = writeln!(out, "{}", row.clamp_events);
    }
    out
}

pub fn simulate_csv(cfg: &RunConfig) -> Result<String, CliError> {
    let prep = prepare(cfg)?;
    Ok(format_csv(&run_rows(cfg, &prep)?))
}

/// Writes the CSV to `output_path` if set and returns it otherwise.
pub fn run_simulate(cfg: &RunConfig) -> Result<Option<String>, CliError> {
    let csv = simulate_csv(cfg)?;
    match &cfg.output_path {
        Some(path) => {
            std::fs::write(path, csv).map_err(|e| CliError::io(path, e))?;
            Ok(None)
        }
        None => Ok(Some(csv)),
    }
}

/// The columns of a trajectory CSV needed to check the decay bound.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryColumns {
    pub t: Vec<f64>,
    pub e_rel: Vec<f64>,
    pub l1_sq_sum: Vec<f64>,
}

pub fn parse_trajectory_csv(text: &str) -> Result<TrajectoryColumns, CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config("trajectory CSV is empty".into()))?;
    let names: Vec<&str> = header.split(',').collect();
    let col = |name: &str| {
        names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| CliError::Config(format!("trajectory CSV lacks column `{name}`")))
    };
    let (it, ie) = (col("t")?, col("E_rel")?);
    let il = [col("l1_S")?, col("l1_E")?, col("l1_C")?, col("l1_P")?];
    let mut out = TrajectoryColumns {
        t: Vec::new(),
        e_rel: Vec::new(),
        l1_sq_sum: Vec::new(),
    };
    for (k, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64, CliError> {
            fields
                .get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| CliError::Config(format!("trajectory CSV row {} is malformed", k + 2)))
        };
        out.t.push(get(it)?);
        out.e_rel.push(get(ie)?);
        let mut sq = 0.0;
        for i in il {
            sq += get(i)?.powi(2);
        }
        out.l1_sq_sum.push(sq);
    }
    Ok(out)
}

fn certificate_for(
    cfg: &RunConfig,
    prep: &Prepared,
    variant: CertificateVariant,
) -> Result<CertificateConstants, CliError> {
    CertificateConstants::compute(&cfg.rates, &prep.eq, &prep.grid, cfg.l_logsob(), variant)
        .map_err(config_err)
}

/// Certificate constants as a flat JSON object. With `trajectory`, also the
/// fitted decay rate and whether the squared-L1 bound holds on every row.
pub fn certificate_value(cfg: &RunConfig, trajectory: Option<&str>) -> Result<Value, CliError> {
    let prep = prepare(cfg)?;
    let cert = certificate_for(cfg, &prep, cfg.variant)?;
    let alt_variant = match cfg.variant {
        CertificateVariant::Consistent => CertificateVariant::Printed,
        CertificateVariant::Printed => CertificateVariant::Consistent,
    };
    let alt = certificate_for(cfg, &prep, alt_variant)?;
    let c2 = c2(&prep.initial, &prep.eq, &prep.masses).map_err(config_err)?;

    let mut map: Map<String, Value> = match serde_json::to_value(cert).expect("serialisable") {
        Value::Object(m) => m,
        _ => unreachable!("struct serialises to an object"),
    };
    map.insert("c2".into(), json!(c2));
    map.insert("l_logsob_source".into(), json!(cfg.l_logsob_source()));
    map.insert(
        "c_bar1_note".into(),
        json!("conditional on the configured log-Sobolev constant l_logsob"),
    );
    map.insert("variant".into(), json!(cfg.variant));
    map.insert(
        "alternate_variant".into(),
        json!({
            "variant": alt_variant,
            "k3": alt.k3,
            "c3": alt.c3,
            "c4": alt.c4,
            "c_tilde1": alt.c_tilde1,
            "c1": alt.c1,
        }),
    );

    if let Some(text) = trajectory {
        let cols = parse_trajectory_csv(text)?;
        let mut min_margin = f64::INFINITY;
        for (t, sq) in cols.t.iter().zip(&cols.l1_sq_sum) {
            min_margin = min_margin.min(c2 * (-cert.c1 * t).exp() - sq);
        }
        let tol = -1e-12 * c2.max(f64::MIN_POSITIVE);
        let series: Vec<(f64, f64)> = cols.t.iter().copied().zip(cols.e_rel.iter().copied()).collect();
        let fit = decay_fit(&series, tail_window(&series, FIT_FLOOR)).ok();
        map.insert("lambda_fit".into(), json!(fit.map(|f| f.lambda_fit)));
        map.insert("fit_window".into(), json!(fit.map(|f| [f.window.0, f.window.1])));
        map.insert("bound_min_margin".into(), json!(min_margin));
        map.insert("bound_holds".into(), json!(min_margin >= tol));
    }
    Ok(Value::Object(map))
}

pub fn run_certificate(cfg: &RunConfig, trajectory: Option<&Path>) -> Result<String, CliError> {
    let text = match trajectory {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?),
        None => None,
    };
    Ok(pretty(&certificate_value(cfg, text.as_deref())?))
}

pub fn equilibrium_value(cfg: &RunConfig) -> Result<Value, CliError> {
    let prep = prepare(cfg)?;
    let (r1, r2) = detailed_balance_residual(&prep.eq, &cfg.rates);
    let (c1, c2) = conservation_residual(&prep.eq);
    let mut v = serde_json::to_value(prep.eq).expect("serialisable");
    v["detailed_balance_residual"] = json!([r1, r2]);
    v["conservation_residual"] = json!([c1, c2]);
    v["sigma"] = serde_json::to_value(prep.sigma).expect("serialisable");
    Ok(v)
}

pub fn run_equilibrium(cfg: &RunConfig) -> Result<String, CliError> {
    Ok(pretty(&equilibrium_value(cfg)?))
}

fn trajectory_result(check: TrajectoryCheck, rows: usize, seed: u64) -> CheckResult {
    CheckResult {
        samples: rows,
        min_margin: check.min_margin,
        worst_seed: seed,
        tolerance: check.tolerance,
        passed: check.passed,
        witness: (!check.passed).then(|| format!("worst output time t = {}", check.at_t)),
    }
}

/// Sampled verifier suites seeded from the config, plus the entropy
/// inequalities along the configured trajectory.
pub fn verify_report(cfg: &RunConfig, c3_scale: f64) -> Result<VerifyReport, CliError> {
    let prep = prepare(cfg)?;
    let vcfg = VerifyConfig {
        seed: cfg.seed,
        variant: cfg.variant,
        c3_scale,
        ..VerifyConfig::default()
    };
    let mut report =
        run_verification(&cfg.rates, &prep.masses, cfg.l_logsob(), &vcfg).map_err(CliError::Solver)?;

    let cert = certificate_for(cfg, &prep, cfg.variant)?;
    let c2 = c2(&prep.initial, &prep.eq, &prep.masses).map_err(config_err)?;
    let rows = run_rows(cfg, &prep)?;
    let reports: Vec<EntropyReport> = rows.iter().map(|r| r.report).collect();
    let n = reports.len();
    for (name, check) in [
        ("eedi", check_eedi(&reports, cert.c1)),
        ("l1_decay_bound", check_l1_decay(&reports, cert.c1, c2)),
        ("entropy_decay_bound", check_entropy_decay(&reports, cert.c1)),
    ] {
        report
            .checks
            .insert(name.into(), trajectory_result(check, n, cfg.seed));
    }
    Ok(report)
}

pub fn verify_value(report: &VerifyReport) -> Value {
    let mut v = serde_json::to_value(report).expect("serialisable");
    v["passed"] = json!(report.passed());
    v
}

/// The JSON report and whether every check passed.
pub fn run_verify(cfg: &RunConfig, c3_scale: f64) -> Result<(String, bool), CliError> {
    let report = verify_report(cfg, c3_scale)?;
    Ok((pretty(&verify_value(&report)), report.passed()))
}

/// Names of the failed checks, for the exit message.
pub fn failed_checks(report_json: &str) -> Vec<String> {
    let v: Value = serde_json::from_str(report_json).unwrap_or(Value::Null);
    v["checks"]
        .as_object()
        .map(|m| {
            m.iter()
                .filter(|(_, c)| c["passed"] == Value::Bool(false))
                .map(|(k, _)| k.clone())
                .collect()
        })
        .unwrap_or_default()
}

/// Runs `f` once per swept value and collects `{key: value, result}` pairs.
pub fn sweep(
    base: &Value,
    spec: &str,
    f: impl Fn(&RunConfig) -> Result<Value, CliError>,
) -> Result<String, CliError> {
    let (key, values) = config::parse_sweep(spec)?;
    let mut out = Vec::with_capacity(values.len());
    for raw in values {
        let mut v = base.clone();
        config::set_dotted(&mut v, &key, &raw)?;
        let cfg = RunConfig::from_value(v)?;
        let swept = serde_json::from_str::<Value>(&raw).unwrap_or(Value::String(raw.clone()));
        out.push(json!({ "key": key, "value": swept, "result": f(&cfg)? }));
    }
    Ok(pretty(&Value::Array(out)))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

//! Batch execution and reporting: run configurations with file/CLI override
//! precedence, trace CSV and summary JSON serialization, parameter sweeps,
//! and the per-scenario invariant verification suite.
//!
//! Exit-code contract: 0 when a run records a regular terminal event
//! (collapse, convergence, or the time limit), 1 on usage errors, 2 on an
//! invariant violation, 3 on numerical failure (step underflow or an
//! exhausted step budget).

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::flow::{self, Direction, FlowParams, FlowTrace};
use crate::kaehler;
use crate::manifolds::Point;
use crate::numerics::Terminal;
use crate::scenarios::{self, Scenario};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Mean-curvature cap used by verification and acceptance-grade runs: large
/// enough that the volume-ratio clause declares collapse first, so terminal
/// samples carry both a deep volume drop and a blown-up |H|.
pub const VERIFY_COLLAPSE_H_NORM: f64 = 1e8;

/// A fully resolved run request.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: String,
    pub init: HashMap<String, f64>,
    pub flow: FlowParams,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(scenario: impl Into<String>) -> RunConfig {
        RunConfig {
            scenario: scenario.into(),
            init: HashMap::new(),
            flow: FlowParams::default(),
            out_dir: default_out_dir(),
            seed: 42,
        }
    }
}

/// Default output directory: ORBITFLOW_OUT when set, else ./out.
pub fn default_out_dir() -> PathBuf {
    match std::env::var_os("ORBITFLOW_OUT") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from("out"),
    }
}

// ---------------------------------------------------------------------------
// configuration file + overrides
// ---------------------------------------------------------------------------

/// Optional overrides collected from a config file or the command line.
/// Keys mirror the flow- and step-control field names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub direction: Option<Direction>,
    pub t_max: Option<f64>,
    pub collapse_vol2_ratio: Option<f64>,
    pub collapse_h_norm: Option<f64>,
    pub converged_h_norm: Option<f64>,
    pub fd_step: Option<f64>,
    pub h_init: Option<f64>,
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub max_steps: Option<usize>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.direction {
            cfg.flow.direction = v;
        }
        if let Some(v) = self.t_max {
            cfg.flow.t_max = v;
        }
        if let Some(v) = self.collapse_vol2_ratio {
            cfg.flow.collapse_vol2_ratio = v;
        }
        if let Some(v) = self.collapse_h_norm {
            cfg.flow.collapse_h_norm = v;
        }
        if let Some(v) = self.converged_h_norm {
            cfg.flow.converged_h_norm = v;
        }
        if let Some(v) = self.fd_step {
            cfg.flow.fd_step = v;
        }
        if let Some(v) = self.h_init {
            cfg.flow.step.h_init = v;
        }
        if let Some(v) = self.h_min {
            cfg.flow.step.h_min = v;
        }
        if let Some(v) = self.h_max {
            cfg.flow.step.h_max = v;
        }
        if let Some(v) = self.rel_tol {
            cfg.flow.step.rel_tol = v;
        }
        if let Some(v) = self.abs_tol {
            cfg.flow.step.abs_tol = v;
        }
        if let Some(v) = self.max_steps {
            cfg.flow.step.max_steps = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
    }
}

pub fn parse_direction(s: &str) -> Result<Direction, RunError> {
    match s {
        "fwd" | "forward" => Ok(Direction::Forward),
        "bwd" | "backward" => Ok(Direction::Backward),
        other => Err(RunError::Usage(format!(
            "unknown direction '{other}' (expected fwd|bwd)"
        ))),
    }
}

/// Parse a flat key=value config file. Blank lines and `#` comments are
/// ignored; keys mirror the flow/step field names.
pub fn parse_config_file(path: &Path) -> Result<Overrides, RunError> {
    let text = std::fs::read_to_string(path)?;
    parse_config_text(&text).map_err(|e| RunError::Usage(format!("{}: {e}", path.display())))
}

fn parse_config_text(text: &str) -> Result<Overrides, String> {
    let mut over = Overrides::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |e: std::num::ParseFloatError| format!("line {}: {e}", lineno + 1);
        match key {
            "direction" => {
                over.direction =
                    Some(parse_direction(value).map_err(|e| format!("line {}: {e}", lineno + 1))?)
            }
            "t_max" => over.t_max = Some(value.parse().map_err(bad)?),
            "collapse_vol2_ratio" => over.collapse_vol2_ratio = Some(value.parse().map_err(bad)?),
            "collapse_h_norm" => over.collapse_h_norm = Some(value.parse().map_err(bad)?),
            "converged_h_norm" => over.converged_h_norm = Some(value.parse().map_err(bad)?),
            "fd_step" => over.fd_step = Some(value.parse().map_err(bad)?),
            "h_init" => over.h_init = Some(value.parse().map_err(bad)?),
            "h_min" => over.h_min = Some(value.parse().map_err(bad)?),
            "h_max" => over.h_max = Some(value.parse().map_err(bad)?),
            "rel_tol" => over.rel_tol = Some(value.parse().map_err(bad)?),
            "abs_tol" => over.abs_tol = Some(value.parse().map_err(bad)?),
            "max_steps" => {
                over.max_steps = Some(
                    value
                        .parse()
                        .map_err(|e| format!("line {}: {e}", lineno + 1))?,
                )
            }
            "seed" => {
                over.seed = Some(
                    value
                        .parse()
                        .map_err(|e| format!("line {}: {e}", lineno + 1))?,
                )
            }
            other => return Err(format!("line {}: unknown key '{other}'", lineno + 1)),
        }
    }
    Ok(over)
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub scenario: String,
    pub direction: String,
    pub t_max: f64,
    pub init: BTreeMap<String, f64>,
    pub seed: u64,
    pub out_dir: String,
    pub collapse_vol2_ratio: f64,
    pub collapse_h_norm: f64,
    pub converged_h_norm: f64,
    pub fd_step: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

fn echo(cfg: &RunConfig, resolved_init: &BTreeMap<String, f64>) -> ConfigEcho {
    ConfigEcho {
        scenario: cfg.scenario.clone(),
        direction: cfg.flow.direction.to_string(),
        t_max: cfg.flow.t_max,
        init: resolved_init.clone(),
        seed: cfg.seed,
        out_dir: cfg.out_dir.display().to_string(),
        collapse_vol2_ratio: cfg.flow.collapse_vol2_ratio,
        collapse_h_norm: cfg.flow.collapse_h_norm,
        converged_h_norm: cfg.flow.converged_h_norm,
        fd_step: cfg.flow.fd_step,
        h_init: cfg.flow.step.h_init,
        h_min: cfg.flow.step.h_min,
        h_max: cfg.flow.step.h_max,
        rel_tol: cfg.flow.step.rel_tol,
        abs_tol: cfg.flow.step.abs_tol,
        max_steps: cfg.flow.step.max_steps,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub direction: String,
    pub terminal: String,
    pub t_final: f64,
    pub vol2_final: f64,
    #[serde(rename = "H_norm_final")]
    pub h_norm_final: f64,
    pub mu_final: Option<Vec<f64>>,
    pub vanishing_directions: Option<Vec<Vec<f64>>>,
    pub config: ConfigEcho,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub summary: RunSummary,
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Execute one flow run and write the trace CSV and summary JSON.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let scenario = scenarios::build(&cfg.scenario).map_err(|e| RunError::Usage(e.to_string()))?;
    let p0 = scenario
        .initial_point(&cfg.init)
        .map_err(|e| RunError::Usage(e.to_string()))?;
    let trace = flow::mcf(&scenario.action, scenario.moment.as_ref(), &p0, &cfg.flow)
        .map_err(|e| RunError::Usage(e.to_string()))?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    let tag = match cfg.flow.direction {
        Direction::Forward => "fwd",
        Direction::Backward => "bwd",
    };
    let trace_path = cfg.out_dir.join(format!("{}_{tag}_trace.csv", scenario.name));
    let summary_path = cfg
        .out_dir
        .join(format!("{}_{tag}_summary.json", scenario.name));

    std::fs::write(&trace_path, trace_csv(&scenario, &trace))?;

    let resolved_init: BTreeMap<String, f64> = scenario
        .initial
        .params
        .iter()
        .map(|(name, default)| {
            (
                name.to_string(),
                cfg.init.get(*name).copied().unwrap_or(*default),
            )
        })
        .collect();
    let last = trace.terminal_state();
    let summary = RunSummary {
        scenario: scenario.name.to_string(),
        direction: cfg.flow.direction.to_string(),
        terminal: trace.terminal.to_string(),
        t_final: last.t,
        vol2_final: last.vol2,
        h_norm_final: last.h_norm,
        mu_final: last.mu.clone(),
        vanishing_directions: if trace.terminal == Terminal::Collapse {
            Some(
                trace
                    .vanishing
                    .iter()
                    .map(|v| v.iter().copied().collect())
                    .collect(),
            )
        } else {
            None
        },
        config: echo(cfg, &resolved_init),
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    std::fs::write(&summary_path, json)?;

    let exit_code = match trace.terminal {
        Terminal::Collapse | Terminal::Converged | Terminal::TimeLimit => {
            if run_invariants_ok(&trace, cfg.flow.direction) {
                EXIT_OK
            } else {
                EXIT_INVARIANT
            }
        }
        Terminal::StepUnderflow | Terminal::MaxSteps => EXIT_NUMERICAL,
    };
    Ok(RunOutcome {
        exit_code,
        summary,
        trace_path,
        summary_path,
    })
}

/// Cheap post-run invariants: constraint residual of every sample, type
/// preservation, and direction-consistent volume monotonicity.
fn run_invariants_ok(trace: &FlowTrace, direction: Direction) -> bool {
    for s in &trace.samples {
        if s.p.residual() >= 1e-10 {
            return false;
        }
    }
    if !flow::check_type_preservation(trace) {
        return false;
    }
    for w in trace.samples.windows(2) {
        match direction {
            Direction::Forward => {
                if w[0].h_norm > 1e-10 && w[1].vol2 >= w[0].vol2 {
                    return false;
                }
            }
            Direction::Backward => {
                if w[1].vol2 < w[0].vol2 {
                    return false;
                }
            }
        }
    }
    true
}

fn trace_csv(scenario: &Scenario, trace: &FlowTrace) -> String {
    let d = scenario.manifold.ambient_dim;
    let kaehler = scenario.moment.is_some();
    let k = scenario.moment.as_ref().map_or(0, |m| m.k());
    let mut out = String::new();
    out.push('t');
    for i in 0..d {
        let _ = write!(out, ",p_{i}");
    }
    out.push_str(",vol2,H_norm,orbit_dim");
    if kaehler {
        for i in 0..k {
            let _ = write!(out, ",mu_{i}");
        }
        out.push_str(",isotropy_residual");
    }
    out.push('\n');
    for s in &trace.samples {
        let _ = write!(out, "{}", s.t);
        let gauged = s.p.gauged_coords();
        for i in 0..d {
            let _ = write!(out, ",{}", gauged[i]);
        }
        let _ = write!(out, ",{},{},{}", s.vol2, s.h_norm, s.orbit_dim);
        if kaehler {
            let mu = s.mu.as_ref().expect("moment recorded on Kaehler runs");
            for v in mu {
                let _ = write!(out, ",{v}");
            }
            let _ = write!(
                out,
                ",{}",
                s.isotropy_residual
                    .expect("residual recorded on Kaehler runs")
            );
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<f64>,
}

/// Parse `name=lo:hi:count` axes separated by commas.
pub fn parse_grid(spec: &str) -> Result<Vec<GridAxis>, RunError> {
    let mut axes = Vec::new();
    for part in spec.split(',') {
        let (name, range) = part.split_once('=').ok_or_else(|| {
            RunError::Usage(format!("grid axis '{part}': expected name=lo:hi:count"))
        })?;
        let pieces: Vec<&str> = range.split(':').collect();
        if pieces.len() != 3 {
            return Err(RunError::Usage(format!(
                "grid axis '{part}': expected name=lo:hi:count"
            )));
        }
        let lo: f64 = pieces[0]
            .parse()
            .map_err(|e| RunError::Usage(format!("grid axis '{part}': {e}")))?;
        let hi: f64 = pieces[1]
            .parse()
            .map_err(|e| RunError::Usage(format!("grid axis '{part}': {e}")))?;
        let count: usize = pieces[2]
            .parse()
            .map_err(|e| RunError::Usage(format!("grid axis '{part}': {e}")))?;
        if count == 0 {
            return Err(RunError::Usage(format!(
                "grid axis '{part}': count must be >= 1"
            )));
        }
        let values = if count == 1 {
            vec![lo]
        } else {
            (0..count)
                .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .collect()
        };
        axes.push(GridAxis {
            name: name.trim().to_string(),
            values,
        });
    }
    Ok(axes)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub params: Vec<(String, f64)>,
    pub terminal: Terminal,
    pub t_final: f64,
    pub vol2_final: f64,
    pub mu_norm_final: Option<f64>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub exit_code: i32,
    pub rows: Vec<SweepRow>,
    pub csv_path: PathBuf,
}

/// Run one flow per grid cell and write the aggregate CSV
/// (one row per start: terminal event, final time, final volume, final
/// moment norm).
pub fn sweep(cfg: &RunConfig, grid_spec: &str) -> Result<SweepOutcome, RunError> {
    let scenario = scenarios::build(&cfg.scenario).map_err(|e| RunError::Usage(e.to_string()))?;
    let axes = parse_grid(grid_spec)?;
    if axes.is_empty() {
        return Err(RunError::Usage("empty grid".into()));
    }

    let mut rows = Vec::new();
    let mut exit_code = EXIT_OK;
    let mut index = vec![0usize; axes.len()];
    'cells: loop {
        let mut init = cfg.init.clone();
        let mut params = Vec::new();
        for (axis, &i) in axes.iter().zip(&index) {
            init.insert(axis.name.clone(), axis.values[i]);
            params.push((axis.name.clone(), axis.values[i]));
        }
        let p0 = scenario
            .initial_point(&init)
            .map_err(|e| RunError::Usage(e.to_string()))?;
        let trace = flow::mcf(&scenario.action, scenario.moment.as_ref(), &p0, &cfg.flow)
            .map_err(|e| RunError::Usage(e.to_string()))?;
        let last = trace.terminal_state();
        let mu_norm_final = scenario
            .moment
            .as_ref()
            .map(|mm| kaehler::moment_norm(&scenario.action, mm, &last.p).unwrap_or(f64::NAN));
        match trace.terminal {
            Terminal::StepUnderflow | Terminal::MaxSteps => {
                exit_code = exit_code.max(EXIT_NUMERICAL)
            }
            _ => {
                if !run_invariants_ok(&trace, cfg.flow.direction) {
                    exit_code = exit_code.max(EXIT_INVARIANT);
                }
            }
        }
        rows.push(SweepRow {
            params,
            terminal: trace.terminal,
            t_final: last.t,
            vol2_final: last.vol2,
            mu_norm_final,
        });

        // odometer increment
        for axis in (0..axes.len()).rev() {
            index[axis] += 1;
            if index[axis] < axes[axis].values.len() {
                continue 'cells;
            }
            index[axis] = 0;
            if axis == 0 {
                break 'cells;
            }
        }
    }

    std::fs::create_dir_all(&cfg.out_dir)?;
    let csv_path = cfg.out_dir.join(format!("{}_sweep.csv", scenario.name));
    let mut out = String::new();
    for (name, _) in &rows[0].params {
        let _ = write!(out, "{name},");
    }
    out.push_str("terminal,t_final,vol2_final,mu_norm_final\n");
    for row in &rows {
        for (_, v) in &row.params {
            let _ = write!(out, "{v},");
        }
        let _ = write!(out, "{},{},{}", row.terminal, row.t_final, row.vol2_final);
        match row.mu_norm_final {
            Some(v) => {
                let _ = write!(out, ",{v}");
            }
            None => out.push(','),
        }
        out.push('\n');
    }
    std::fs::write(&csv_path, out)?;

    Ok(SweepOutcome {
        exit_code,
        rows,
        csv_path,
    })
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

impl std::fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckStatus::Pass => f.write_str("PASS"),
            CheckStatus::Fail => f.write_str("FAIL"),
            CheckStatus::Skip => f.write_str("SKIP"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    pub value: f64,
    pub threshold: f64,
    pub note: String,
}

#[derive(Debug)]
pub struct VerifyReport {
    pub scenario: String,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            EXIT_OK
        } else {
            EXIT_INVARIANT
        }
    }
}

impl std::fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "verification: {}", self.scenario)?;
        writeln!(
            f,
            "{:<24} {:<6} {:>12} {:>12}  note",
            "check", "status", "value", "threshold"
        )?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<24} {:<6} {:>12.4e} {:>12.4e}  {}",
                c.name, c.status, c.value, c.threshold, c.note
            )?;
        }
        let verdict = if self.all_passed() {
            "all checks passed"
        } else {
            "FAILURES present"
        };
        write!(f, "{verdict}")
    }
}

fn pass_fail(value: f64, threshold: f64) -> CheckStatus {
    if value < threshold {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

/// Flow parameters for verification traces: defaults plus the raised
/// mean-curvature cap.
pub fn verify_flow_params(direction: Direction) -> FlowParams {
    FlowParams {
        direction,
        collapse_h_norm: VERIFY_COLLAPSE_H_NORM,
        ..FlowParams::default()
    }
}

/// Run every invariant check applicable to the scenario and collect a
/// pass/fail table.
pub fn verify(scenario_name: &str, seed: u64) -> Result<VerifyReport, RunError> {
    let scenario = scenarios::build(scenario_name).map_err(|e| RunError::Usage(e.to_string()))?;
    let mut checks = Vec::new();

    let p0 = scenario
        .initial_point(&HashMap::new())
        .expect("default initial point");
    let fwd = flow::mcf(
        &scenario.action,
        scenario.moment.as_ref(),
        &p0,
        &verify_flow_params(Direction::Forward),
    )
    .expect("forward verification trace");
    let bwd = flow::mcf(
        &scenario.action,
        scenario.moment.as_ref(),
        &p0,
        &verify_flow_params(Direction::Backward),
    )
    .expect("backward verification trace");

    checks.push(gradient_oracle_check(&scenario, seed));
    checks.push(orthogonality_check(&scenario, &fwd, &bwd));
    checks.push(monotonicity_check(&fwd, &bwd));
    checks.push(type_preservation_check(&fwd, &bwd));

    match &scenario.moment {
        None => {
            checks.push(CheckResult {
                name: "moment_condition",
                status: CheckStatus::Skip,
                value: 0.0,
                threshold: 0.0,
                note: "scenario is not Kaehler".into(),
            });
        }
        Some(mm) => {
            checks.push(moment_condition_check(&scenario, mm, seed));
            if scenario.is_lagrangian_setup() {
                checks.push(lagrangian_tangency_check(&scenario, mm, &fwd, &bwd));
                checks.push(exponential_law_check(&scenario, mm, &fwd));
                checks.push(frozen_norm_check(&scenario, mm, seed));
                checks.push(minimality_check(&scenario, mm, &p0, seed));
            } else {
                let probe = &scenario.seeded_regular_points(1, seed ^ 0x150)[0];
                let (_, residual) = kaehler::is_isotropic_orbit(&scenario.action, probe, 1e-8);
                let note = format!(
                    "not a Lagrangian setup (orbit dim {} of {}, isotropy residual {residual:.2e}); \
                     Lagrangian checks skipped",
                    scenario.action.max_orbit_dim,
                    scenario.manifold.intrinsic_dim
                );
                for name in [
                    "lagrangian_tangency",
                    "exponential_law",
                    "frozen_norm_law",
                    "minimal_iff_mu_zero",
                ] {
                    checks.push(CheckResult {
                        name,
                        status: CheckStatus::Skip,
                        value: residual,
                        threshold: 0.0,
                        note: note.clone(),
                    });
                }
            }
        }
    }

    Ok(VerifyReport {
        scenario: scenario_name.to_string(),
        checks,
    })
}

fn gradient_oracle_check(scenario: &Scenario, seed: u64) -> CheckResult {
    let points = scenario.seeded_regular_points(100, seed ^ 0x6AD);
    let oracles: Vec<_> = points
        .iter()
        .map(|p| {
            scenario
                .analytic_mean_curvature(p)
                .expect("built-ins carry oracles")
        })
        .collect();
    let stationary = oracles.iter().all(|h| h.norm() < 1e-10);
    let mut worst = 0.0f64;
    for (p, oracle) in points.iter().zip(&oracles) {
        let fd = flow::mean_curvature(&scenario.action, p, FlowParams::default().fd_step)
            .expect("regular point");
        let err = if stationary {
            fd.norm()
        } else {
            (&fd - oracle).norm() / oracle.norm()
        };
        worst = worst.max(err);
    }
    let threshold = if stationary { 1e-7 } else { 1e-6 };
    CheckResult {
        name: "gradient_oracle",
        status: pass_fail(worst, threshold),
        value: worst,
        threshold,
        note: if stationary {
            "closed-form H vanishes; absolute error of the FD field at 100 seeded points".into()
        } else {
            "max relative FD-vs-closed-form error at 100 seeded points".into()
        },
    }
}

fn orthogonality_check(scenario: &Scenario, fwd: &FlowTrace, bwd: &FlowTrace) -> CheckResult {
    let mut worst = 0.0f64;
    for trace in [fwd, bwd] {
        for s in &trace.samples {
            // below roundoff scale H is numerically zero and the angle is
            // undefined
            if s.h_norm <= 1e-12 {
                continue;
            }
            for i in 0..scenario.action.k() {
                let field = scenario.action.fundamental_field(i, &s.p);
                let denom = s.h_norm * field.norm();
                if denom > 0.0 {
                    worst = worst.max(s.h.dot(&field).abs() / denom);
                }
            }
        }
    }
    CheckResult {
        name: "orthogonality",
        status: pass_fail(worst, 1e-6),
        value: worst,
        threshold: 1e-6,
        note: "max |<H, X~>| / (|H| |X~|) over both traces".into(),
    }
}

fn monotonicity_check(fwd: &FlowTrace, bwd: &FlowTrace) -> CheckResult {
    let rf = flow::verify_monotonicity(fwd);
    let rb = flow::verify_monotonicity(bwd);
    let worst = rf.max_rel_discrepancy.max(rb.max_rel_discrepancy);
    CheckResult {
        name: "monotonicity",
        status: pass_fail(worst, 1e-3),
        value: worst,
        threshold: 1e-3,
        note: format!(
            "d/dt log vol vs -|H|^2, {} samples checked",
            rf.checked + rb.checked
        ),
    }
}

fn type_preservation_check(fwd: &FlowTrace, bwd: &FlowTrace) -> CheckResult {
    let ok = flow::check_type_preservation(fwd) && flow::check_type_preservation(bwd);
    CheckResult {
        name: "type_preservation",
        status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
        value: if ok { 0.0 } else { 1.0 },
        threshold: 1.0,
        note: "orbit dimension constant along traces (terminal collapse sample exempt)".into(),
    }
}

fn moment_condition_check(scenario: &Scenario, mm: &kaehler::MomentMap, seed: u64) -> CheckResult {
    let mut worst = 0.0f64;
    for p in scenario.seeded_regular_points(32, seed ^ 0x3C0) {
        worst = worst.max(kaehler::verify_moment_condition(
            &scenario.action,
            mm,
            &p,
            FlowParams::default().fd_step,
        ));
    }
    CheckResult {
        name: "moment_condition",
        status: pass_fail(worst, 1e-6),
        value: worst,
        threshold: 1e-6,
        note: "max residual of d mu_X = omega(X~, .) at 32 seeded points".into(),
    }
}

fn lagrangian_tangency_check(
    scenario: &Scenario,
    mm: &kaehler::MomentMap,
    fwd: &FlowTrace,
    bwd: &FlowTrace,
) -> CheckResult {
    let mut all = true;
    let mut checked = 0usize;
    for trace in [fwd, bwd] {
        let n = trace.samples.len();
        for (i, s) in trace.samples.iter().enumerate() {
            // terminal collapse sample leaves the regular stratum
            if trace.terminal == Terminal::Collapse && i == n - 1 {
                continue;
            }
            match kaehler::is_lagrangian_point(&scenario.action, mm, &s.p, 1e-6) {
                Ok(true) => checked += 1,
                _ => all = false,
            }
        }
    }
    CheckResult {
        name: "lagrangian_tangency",
        status: if all { CheckStatus::Pass } else { CheckStatus::Fail },
        value: if all { 0.0 } else { 1.0 },
        threshold: 1.0,
        note: format!("Lagrangian membership held at {checked} samples"),
    }
}

fn exponential_law_check(
    scenario: &Scenario,
    mm: &kaehler::MomentMap,
    fwd: &FlowTrace,
) -> CheckResult {
    let c = scenario
        .einstein_constant
        .expect("Lagrangian setups are Kaehler-Einstein");
    // fit on the stretch well inside the regular stratum
    let vol2_0 = fwd.samples[0].vol2;
    let prefix: Vec<_> = fwd
        .samples
        .iter()
        .take_while(|s| s.vol2 >= 0.05 * vol2_0)
        .cloned()
        .collect();
    if prefix.len() < 5 {
        return CheckResult {
            name: "exponential_law",
            status: CheckStatus::Skip,
            value: 0.0,
            threshold: 0.0,
            note: "trace too short before leaving the regular window".into(),
        };
    }
    let sub = FlowTrace {
        samples: prefix,
        terminal: Terminal::TimeLimit,
        vanishing: Vec::new(),
    };
    match kaehler::verify_flow_moment_law(mm, &sub, c) {
        Ok((rate, residual)) => {
            let rel = (rate - c).abs() / c;
            let mut check = CheckResult {
                name: "exponential_law",
                status: pass_fail(rel, 0.01),
                value: rel,
                threshold: 0.01,
                note: format!(
                    "fitted c = {rate:.4} (expected {c}), max pointwise residual {residual:.2e}"
                ),
            };
            // the ray property: moment direction frozen along the flow
            let drift = moment_ray_drift(&sub);
            if drift >= 1e-3 {
                check.status = CheckStatus::Fail;
                check
                    .note
                    .push_str(&format!("; ray drift {drift:.2e} exceeds 1e-3"));
            }
            check
        }
        Err(e) => CheckResult {
            name: "exponential_law",
            status: CheckStatus::Skip,
            value: 0.0,
            threshold: 0.01,
            note: e.to_string(),
        },
    }
}

fn moment_ray_drift(trace: &FlowTrace) -> f64 {
    let norm = |m: &Vec<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let first = trace.samples.iter().find_map(|s| {
        let m = s.mu.as_ref()?;
        let n = norm(m);
        (n > 1e-4).then(|| m.iter().map(|v| v / n).collect::<Vec<f64>>())
    });
    let Some(dir0) = first else { return 0.0 };
    let mut worst = 0.0f64;
    for s in &trace.samples {
        let Some(m) = s.mu.as_ref() else { continue };
        let n = norm(m);
        if n <= 1e-4 {
            continue;
        }
        let drift = m
            .iter()
            .zip(&dir0)
            .map(|(v, d)| (v / n - d).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(drift);
    }
    worst
}

fn frozen_norm_check(scenario: &Scenario, mm: &kaehler::MomentMap, seed: u64) -> CheckResult {
    let c = scenario
        .einstein_constant
        .expect("Lagrangian setups are Kaehler-Einstein");
    let mut worst = 0.0f64;
    for p in scenario.seeded_regular_points(32, seed ^ 0xF40) {
        match kaehler::frozen_norm_law(&scenario.action, mm, &p, c, FlowParams::default().fd_step)
        {
            Ok((lhs, rhs)) => {
                let rel = (lhs - rhs).abs() / (rhs.abs() + 1e-9);
                worst = worst.max(rel);
            }
            Err(_) => worst = f64::INFINITY,
        }
    }
    CheckResult {
        name: "frozen_norm_law",
        status: pass_fail(worst, 1e-3),
        value: worst,
        threshold: 1e-3,
        note: "max relative gap of d|mu|^2(H) vs 2c|mu|^2 at 32 seeded points".into(),
    }
}

fn minimality_check(
    scenario: &Scenario,
    mm: &kaehler::MomentMap,
    p0: &Point,
    seed: u64,
) -> CheckResult {
    let c = scenario
        .einstein_constant
        .expect("Lagrangian setups are Kaehler-Einstein");
    let found = match kaehler::find_minimal_lagrangian(
        &scenario.action,
        mm,
        p0,
        &verify_flow_params(Direction::Backward),
    ) {
        Ok(f) => f,
        Err(e) => {
            return CheckResult {
                name: "minimal_iff_mu_zero",
                status: CheckStatus::Fail,
                value: f64::INFINITY,
                threshold: 1e-6,
                note: format!("backward search failed: {e}"),
            }
        }
    };
    let mut ok = found.h_norm < 1e-7 && found.mu_norm < 1e-6;
    let mut inconsistent = 0usize;
    for p in scenario.seeded_regular_points(32, seed ^ 0x9E1) {
        match kaehler::minimal_iff_moment_zero(
            &scenario.action,
            mm,
            &p,
            1e-6,
            c,
            FlowParams::default().fd_step,
        ) {
            Ok(v) if v.consistent() => {}
            _ => inconsistent += 1,
        }
    }
    if inconsistent > 0 {
        ok = false;
    }
    CheckResult {
        name: "minimal_iff_mu_zero",
        status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
        value: found.mu_norm,
        threshold: 1e-6,
        note: format!(
            "backward search: |H| = {:.2e}, |mu| = {:.2e}; {inconsistent} inconsistent verdicts at seeded points",
            found.h_norm, found.mu_norm
        ),
    }
}

//! Command-line front end: scenario listing, single runs, invariant
//! verification, and initial-condition sweeps. All logic lives in the
//! library; this binary parses arguments, resolves configuration precedence
//! (command line over config file over defaults), and maps outcomes to the
//! exit-code contract (0 ok, 1 usage, 2 invariant violation, 3 numerical
//! failure).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use orbitflow::runner::{self, RunConfig, RunError, EXIT_USAGE};
use orbitflow::scenarios;

#[derive(Parser)]
#[command(
    name = "orbitflow",
    about = "mean curvature flow of isometry-group orbits on built-in compact manifolds",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct FlowArgs {
    /// Flow direction: fwd or bwd
    #[arg(long)]
    direction: Option<String>,
    /// Maximum flow time
    #[arg(long = "t-max")]
    t_max: Option<f64>,
    /// Output directory (default: $ORBITFLOW_OUT or ./out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for all randomized diagnostics
    #[arg(long)]
    seed: Option<u64>,
    /// Flat key=value config file (keys mirror the flow/step field names)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value overrides, same keys as the config file (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// List built-in scenarios
    List,
    /// Run one flow and write trace/summary files
    Run {
        scenario: String,
        /// Shorthand for --init z0=VALUE
        #[arg(long)]
        z0: Option<f64>,
        /// Initial-point parameter, e.g. --init b0=0.2 (repeatable)
        #[arg(long = "init", value_name = "KEY=VALUE")]
        init: Vec<String>,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Run the invariant suite for a scenario
    Verify {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a grid of initial conditions and write an aggregate CSV
    Sweep {
        scenario: String,
        /// Grid spec: name=lo:hi:count[,name=lo:hi:count...]
        #[arg(long)]
        grid: String,
        #[command(flatten)]
        flow: FlowArgs,
    },
}

fn parse_kv(pairs: &[String]) -> Result<Vec<(String, f64)>, RunError> {
    pairs
        .iter()
        .map(|pair| {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| RunError::Usage(format!("expected KEY=VALUE, got '{pair}'")))?;
            let value: f64 = v
                .trim()
                .parse()
                .map_err(|e| RunError::Usage(format!("'{pair}': {e}")))?;
            Ok((k.trim().to_string(), value))
        })
        .collect()
}

fn resolve_config(scenario: &str, flow: &FlowArgs) -> Result<RunConfig, RunError> {
    let mut cfg = RunConfig::new(scenario);
    if let Some(path) = &flow.config {
        runner::parse_config_file(path)?.apply(&mut cfg);
    }
    if !flow.set.is_empty() {
        let joined = flow.set.join("\n");
        let tmp = std::env::temp_dir().join(format!("orbitflow_set_{}.cfg", std::process::id()));
        std::fs::write(&tmp, &joined)?;
        let overrides = runner::parse_config_file(&tmp);
        let _ = std::fs::remove_file(&tmp);
        overrides?.apply(&mut cfg);
    }
    if let Some(dir) = &flow.direction {
        cfg.flow.direction = runner::parse_direction(dir)?;
    }
    if let Some(t) = flow.t_max {
        cfg.flow.t_max = t;
    }
    if let Some(out) = &flow.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = flow.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<i32, RunError> {
    match cli.cmd {
        Cmd::List => {
            for (name, description) in scenarios::list() {
                println!("{name:<22} {description}");
            }
            Ok(0)
        }
        Cmd::Run {
            scenario,
            z0,
            init,
            flow,
        } => {
            let mut cfg = resolve_config(&scenario, &flow)?;
            if let Some(z0) = z0 {
                cfg.init.insert("z0".into(), z0);
            }
            for (k, v) in parse_kv(&init)? {
                cfg.init.insert(k, v);
            }
            let outcome = runner::run(&cfg)?;
            let s = &outcome.summary;
            println!(
                "{} {}: {} at t = {:.6} (vol2 {:.6e}, |H| {:.6e})",
                s.scenario, s.direction, s.terminal, s.t_final, s.vol2_final, s.h_norm_final
            );
            println!("trace:   {}", outcome.trace_path.display());
            println!("summary: {}", outcome.summary_path.display());
            Ok(outcome.exit_code)
        }
        Cmd::Verify { scenario, seed } => {
            let report = runner::verify(&scenario, seed.unwrap_or(42))?;
            println!("{report}");
            Ok(report.exit_code())
        }
        Cmd::Sweep {
            scenario,
            grid,
            flow,
        } => {
            let cfg = resolve_config(&scenario, &flow)?;
            let outcome = runner::sweep(&cfg, &grid)?;
            println!(
                "{} cells -> {}",
                outcome.rows.len(),
                outcome.csv_path.display()
            );
            Ok(outcome.exit_code)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not usage errors
            let code = if e.use_stderr() { EXIT_USAGE as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE as u8)
        }
    }
}

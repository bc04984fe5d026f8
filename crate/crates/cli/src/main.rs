use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

mod config;
mod output;
mod run;

use config::Needs;

#[derive(Parser)]
#[command(name = "cbdlab", version, about = "Numerical audits of convex-body sparse domination on dyadic grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `seed` key of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the property suites.
    Verify(Common),
    /// Run the sparse domination pipeline on random data.
    Dominate(Common),
    /// Characteristics and weighted operator norms of matrix weights.
    Weights(Common),
    /// Two-sided norm audit of a generalized commutator.
    Commutator(Common),
    /// Sparse form against the maximal pair function.
    Equivalence(Common),
    /// Re-render summary.csv from an existing report.json.
    Report {
        /// Accepted for uniformity with the other subcommands; unused.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to `<out>/report.json`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

type Body = fn(&config::ExperimentConfig) -> cbdlab_core::Result<run::Outcome>;

const NONE: Needs = Needs { kernel: false, pipeline: false, commutator: false, equivalence: false, weights: false };

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, needs, body): (&str, Common, Needs, Body) = match cli.command {
        Command::Verify(c) => ("verify", c, NONE, run::verify),
        Command::Dominate(c) => ("dominate", c, Needs { kernel: true, pipeline: true, ..NONE }, run::dominate),
        Command::Weights(c) => ("weights", c, Needs { weights: true, ..NONE }, run::weights),
        Command::Commutator(c) => ("commutator", c, Needs { kernel: true, commutator: true, ..NONE }, run::commutator),
        Command::Equivalence(c) => ("equivalence", c, Needs { equivalence: true, ..NONE }, run::equivalence),
        Command::Report { input, out, .. } => return rerender(input.unwrap_or_else(|| out.join("report.json")), &out),
    };

    let path = common.config.display().to_string();
    let text = match fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{path}: cannot read configuration: {e}");
            return ExitCode::from(2);
        }
    };
    let mut cfg = match config::parse(&path, &text, needs) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let outcome = match body(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("cbdlab {name}: {e}");
            return ExitCode::from(3);
        }
    };
    let pass = outcome.checks.iter().all(|c| c.pass && c.instances > 0);
    let report = json!({
        "tool": "cbdlab",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": name,
        "seed": cfg.seed,
        "pass": pass,
        "checks": outcome.checks,
        "result": outcome.result,
    });
    finish(&report, &common.out, true)
}

fn finish(report: &Value, out: &Path, write_json: bool) -> ExitCode {
    if let Err(e) = output::write_outputs(out, report, write_json) {
        eprintln!("{}: cannot write outputs: {e}", out.display());
        return ExitCode::from(3);
    }
    for c in report["checks"].as_array().into_iter().flatten() {
        let ratio = c["ratio"].as_f64().map_or("inf".to_string(), |r| format!("{r:.4}"));
        let mark = if c["pass"] == Value::Bool(true) { "ok  " } else { "FAIL" };
        println!("{mark} {ratio:>8}  {}", c["anchor"].as_str().unwrap_or(""));
    }
    let failed = output::failures(report);
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        for a in &failed {
            eprintln!("violated: {a}");
        }
        ExitCode::from(1)
    }
}

fn rerender(input: PathBuf, out: &Path) -> ExitCode {
    let report: Value = match fs::read_to_string(&input).map_err(|e| e.to_string()).and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string())) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{}: {e}", input.display());
            return ExitCode::from(2);
        }
    };
    finish(&report, out, false)
}

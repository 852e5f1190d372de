//! `courtaudit`: the audit pipeline as subcommands over one output directory.
//!
//! Each stage writes `<out>/<stage>/` atomically with a `manifest.json` and the
//! resolved `run_config.toml`. Later stages read earlier stages' outputs.

mod config;
mod error;
mod stages;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::{CliError, CliResult};
use workspace::Workspace;

#[derive(Parser)]
#[command(name = "courtaudit", version, about = "Audit court decision records for idiosyncrasies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate case and judge files into the canonical format.
    Ingest(Common),
    /// Binomial tests of case-label frequencies per (judge, circuit, decade).
    AuditAssignment(Common),
    /// Career win-rate test of every judge against the pooled rate.
    AuditDeviation(Common),
    /// Early-career citation matrix and its NMF embedding.
    Embed(Common),
    /// Per-case-type outcome classifiers on embedding or biographic features.
    Train(Common),
    /// Accuracy by confidence bin with bootstrap errors.
    Evaluate(Common),
    /// Per-judge predictability test over repeated balanced subsamples.
    JudgeTest(Common),
    /// Shapley attributions and attribute-on-embedding regressions.
    Explain(Common),
    /// Generate a synthetic court with known ground truth.
    Simulate(Common),
    /// Detection power and false-flag rates over a grid of synthetic courts.
    Power(Common),
    /// Collect completed stage summaries and plot tables into one bundle.
    Report(Common),
    /// Print the resolved configuration as TOML.
    Config(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; each stage writes a subdirectory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Case file, overriding `input.cases`.
    #[arg(long)]
    cases: Option<PathBuf>,
    /// Judge file, overriding `input.judges`.
    #[arg(long)]
    judges: Option<PathBuf>,
    /// Master seed, overriding `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override any key, e.g. `--set embed.k=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn run_config(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref(), &self.sets)?;
        if let Some(c) = &self.cases {
            cfg.input.cases = Some(c.clone());
        }
        if let Some(j) = &self.judges {
            cfg.input.judges = Some(j.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.resolve();
        Ok(cfg)
    }
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Ingest(c) => ("ingest", c),
            Command::AuditAssignment(c) => ("audit-assignment", c),
            Command::AuditDeviation(c) => ("audit-deviation", c),
            Command::Embed(c) => ("embed", c),
            Command::Train(c) => ("train", c),
            Command::Evaluate(c) => ("evaluate", c),
            Command::JudgeTest(c) => ("judge-test", c),
            Command::Explain(c) => ("explain", c),
            Command::Simulate(c) => ("simulate", c),
            Command::Power(c) => ("power", c),
            Command::Report(c) => ("report", c),
            Command::Config(c) => ("config", c),
        }
    }
}

fn run(command: &Command) -> CliResult<()> {
    let (stage, common) = command.parts();
    let cfg = common.run_config()?;
    if stage == "config" {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let ws = Workspace::open(&common.out)?;
    match stage {
        "ingest" => stages::ingest(&ws, &cfg),
        "audit-assignment" => stages::audit_assignment_stage(&ws, &cfg),
        "audit-deviation" => stages::audit_deviation(&ws, &cfg),
        "embed" => stages::embed(&ws, &cfg),
        "train" => stages::train(&ws, &cfg),
        "evaluate" => stages::evaluate(&ws, &cfg),
        "judge-test" => stages::judge_test(&ws, &cfg),
        "explain" => stages::explain(&ws, &cfg),
        "simulate" => stages::simulate(&ws, &cfg),
        "power" => stages::power(&ws, &cfg),
        "report" => stages::report(&ws, &cfg),
        other => Err(CliError::Config(format!("unknown stage `{other}`"))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (stage, _) = cli.command.parts();
            let record = e.record(stage);
            eprintln!(
                "{}",
                serde_json::to_string(&record).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", e.kind()))
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

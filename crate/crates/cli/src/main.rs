//! Command-line front end: JSON reports, optional CSV plot data, exit code
//! 0 when every asserted check passes, 1 on a failed check (witness in the
//! report), 2 on input errors.

mod commands;
mod config;
mod generate;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "afym", version, about = "Operators, envelopes, flat metrics and generating sequences for A-free Young measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Input file or plan directory (repeat for commands taking several).
    #[arg(long, global = true)]
    input: Vec<PathBuf>,
    /// Report path, or the artifact path for `ym generate` / `ym empirical`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// CSV plot data path.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Catalog operator name or operator file.
    #[arg(long, global = true)]
    operator: Option<String>,
    /// Catalog integrand (`name` or `name:p1,p2,…`) or integrand file; repeatable.
    #[arg(long, global = true)]
    integrand: Vec<String>,
    /// Envelope mode: projection, potential or lamination.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Override a command parameter; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Symbol checks for a constant-rank operator.
    Operator {
        #[command(subcommand)]
        cmd: OperatorCmd,
    },
    /// Wave-cone queries.
    Wavecone {
        #[command(subcommand)]
        cmd: WaveconeCmd,
    },
    /// Upper estimates of the A-quasiconvex envelope.
    Envelope {
        #[command(subcommand)]
        cmd: EnvelopeCmd,
    },
    /// Bounded-Lipschitz (Kantorovich) norms and distances.
    Metric {
        #[command(subcommand)]
        cmd: MetricCmd,
    },
    /// Young-measure verification, generation and comparison.
    Ym {
        #[command(subcommand)]
        cmd: YmCmd,
    },
}

#[derive(Subcommand, Debug)]
enum OperatorCmd {
    /// Constant rank, spanning cone and exactness against the potential.
    Check { name: Option<String> },
}

#[derive(Subcommand, Debug)]
enum WaveconeCmd {
    /// Is z (`--set z=…`) in the wave cone of --operator?
    Member,
}

#[derive(Subcommand, Debug)]
enum EnvelopeCmd {
    /// Envelope value at `--set z=…`, optionally along a segment to `--set to=…`.
    Estimate,
}

#[derive(Subcommand, Debug)]
enum MetricCmd {
    /// ‖μ‖ of one measure or lifted pair.
    Norm,
    /// Distance between two measures or two lifted pairs.
    Distance,
}

#[derive(Subcommand, Debug)]
enum YmCmd {
    /// Jensen suites, polar-in-cone check and homogeneous certificates.
    Verify,
    /// Build a generating sequence and write it as a plan directory.
    Generate { construction: String },
    /// Empirical Young measure of a plan's final snapshot.
    Empirical,
    /// Bank discrepancy of a plan against a target Young measure.
    Compare,
}

impl Cli {
    fn into_config(self) -> Result<(RunConfig, Command), afym::Error> {
        let c = self.common;
        let subcommand = match &self.command {
            Command::Operator { .. } => "operator check".to_string(),
            Command::Wavecone { .. } => "wavecone member".to_string(),
            Command::Envelope { .. } => "envelope estimate".to_string(),
            Command::Metric { cmd } => match cmd {
                MetricCmd::Norm => "metric norm".to_string(),
                MetricCmd::Distance => "metric distance".to_string(),
            },
            Command::Ym { cmd } => match cmd {
                YmCmd::Verify => "ym verify".to_string(),
                YmCmd::Generate { construction } => format!("ym generate {construction}"),
                YmCmd::Empirical => "ym empirical".to_string(),
                YmCmd::Compare => "ym compare".to_string(),
            },
        };
        let cfg = RunConfig {
            subcommand,
            inputs: c.input,
            output: c.output,
            csv: c.csv,
            seed: c.seed,
            grid: c.grid,
            tol: c.tol,
            operator: c.operator,
            integrands: c.integrand,
            mode: c.mode,
            overrides: Overrides::parse(&c.set)?,
        };
        Ok((cfg, self.command))
    }
}

fn run(cfg: &RunConfig, command: &Command) -> afym::Result<report::Outcome> {
    cfg.validate_inputs()?;
    match command {
        Command::Operator { cmd: OperatorCmd::Check { name } } => commands::operator_check(cfg, name.as_deref()),
        Command::Wavecone { cmd: WaveconeCmd::Member } => commands::wavecone_member(cfg),
        Command::Envelope { cmd: EnvelopeCmd::Estimate } => commands::envelope_estimate(cfg),
        Command::Metric { cmd: MetricCmd::Norm } => commands::metric_norm(cfg),
        Command::Metric { cmd: MetricCmd::Distance } => commands::metric_distance(cfg),
        Command::Ym { cmd: YmCmd::Verify } => commands::ym_verify(cfg),
        Command::Ym { cmd: YmCmd::Generate { construction } } => generate::ym_generate(cfg, construction),
        Command::Ym { cmd: YmCmd::Empirical } => commands::ym_empirical(cfg),
        Command::Ym { cmd: YmCmd::Compare } => commands::ym_compare(cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (cfg, command) = match cli.into_config() {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let code = match run(&cfg, &command) {
        Ok(outcome) => report::emit(&cfg, outcome),
        Err(e) => report::emit_error(&cfg, &e),
    };
    ExitCode::from(code)
}

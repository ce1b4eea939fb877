use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use binomial_di::experiment::{self, ExperimentConfig, Overrides};
use binomial_di::Result;

#[derive(Parser)]
#[command(name = "bdi", version, about = "Deterministic identification over the Binomial channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a saturated packing codebook and its saturation certificate
    Construct(Common),
    /// Estimate type I and type II error probabilities for a codebook
    Simulate(Common),
    /// Tabulate the rate lower and upper bounds over an n grid
    Bounds(Common),
    /// Run the property suite; exits with 2 if a property fails
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Codebook file (defaults to OUT/codebook.txt)
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// Comma-separated blocklengths for `bounds`
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    grid: Option<Vec<u64>>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            trials: self.trials,
            n: self.n,
            b: self.b,
            threads: self.threads,
            codebook: self.codebook.clone(),
            n_grid: self.grid.clone(),
        });
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Construct(c) => {
            let (cb, _) = experiment::cmd_construct(&c.resolve()?)?;
            println!("n={} M={} r0={}", cb.n(), cb.len(), cb.r0());
            Ok(true)
        }
        Command::Simulate(c) => {
            let (rows, _) = experiment::cmd_simulate(&c.resolve()?)?;
            let flagged = rows.iter().filter(|r| !r.within_bound).count();
            println!("{} rows, {flagged} above their bound", rows.len());
            Ok(true)
        }
        Command::Bounds(c) => {
            let (reports, _) = experiment::cmd_bounds(&c.resolve()?)?;
            println!("{:>12} {:>12} {:>12}", "n", "rate_lower", "rate_upper");
            for r in reports {
                println!("{:>12} {:>12.6} {:>12.6}", r.n, r.rate_lower, r.rate_upper);
            }
            Ok(true)
        }
        Command::Verify(c) => {
            let (report, _) = experiment::cmd_verify(&c.resolve()?)?;
            for check in &report.checks {
                let status = match (check.passed, check.required) {
                    (true, _) => "ok",
                    (false, true) => "FAIL",
                    (false, false) => "note",
                };
                println!("{status:>4}  {}: {}", check.name, check.detail);
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(experiment::exit_code(&e) as u8)
        }
    }
}

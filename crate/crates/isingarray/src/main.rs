use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use isingarray::commands::{parse_fixed, SimulateOutput};
use isingarray::config::TargetName;
use isingarray::{
    cmd_cliques, cmd_conditional, cmd_resolution, cmd_simulate, cmd_swap, cmd_sweep, cmd_train, ExperimentConfig,
};

/// Probabilistic telescope-array design with a learned Ising sampler.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    SgrA,
    M87,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Built-in defaults are used without one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    lambda1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    lambda2: Option<f64>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=6))]
    noise_case: Option<u8>,
    #[arg(long, value_enum)]
    target: Option<TargetArg>,
}

impl Common {
    fn load(&self) -> isingarray::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = Some(v);
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.lambda1 {
            cfg.lambda1 = v;
        }
        if let Some(v) = self.lambda2 {
            cfg.lambda2 = v;
        }
        if let Some(v) = self.fraction {
            cfg.fraction = v;
        }
        if let Some(v) = self.noise_case {
            cfg.noise_case = v;
        }
        if let Some(v) = self.target {
            cfg.target = match v {
                TargetArg::SgrA => TargetName::SgrA,
                TargetArg::M87 => TargetName::M87,
            };
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write uv coverage, measurements and closure phases of the truth image.
    Simulate(Common),
    /// Train the sampler and decoder jointly and write a run directory.
    Train(Common),
    /// Train one run per (lambda1, lambda2) cell of the configured grids.
    Sweep(Common),
    /// Train one run per configured resolution fraction.
    Resolution(Common),
    /// Cross-evaluate decoders and samplers of finished runs.
    Swap {
        #[command(flatten)]
        common: Common,
        /// Run directory (repeat for each run).
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        /// Trial of each run to use (1-based).
        #[arg(long, default_value_t = 1)]
        trial: usize,
    },
    /// Rank three-cliques of a θ file.
    Cliques {
        #[arg(long)]
        theta: PathBuf,
        #[arg(long, default_value_t = 0.04)]
        tau: f64,
        #[arg(long, default_value = "cliques.csv")]
        out: PathBuf,
    },
    /// Condition a θ file on fixed site states.
    Conditional {
        #[arg(long)]
        theta: PathBuf,
        /// Comma-separated `NAME` (selected) or `NAME=-1` entries.
        #[arg(long)]
        fixed: String,
        #[arg(long, default_value = "conditional.csv")]
        out: PathBuf,
    },
}

fn announce(out: &Path) {
    eprintln!("wrote {}", out.display());
}

fn run(cli: Cli) -> isingarray::Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.load()?;
            let SimulateOutput {
                uv_rows,
                measurement_rows,
                closure_rows,
            } = cmd_simulate(&cfg)?;
            eprintln!("{uv_rows} uv rows, {measurement_rows} measurements, {closure_rows} closure phases");
            announce(&cfg.out);
        }
        Command::Train(c) => {
            let cfg = c.load()?;
            let run = cmd_train(&cfg)?;
            for t in &run.trials {
                if let Some(e) = t.history.last() {
                    eprintln!("trial {}: final loss {:.5}", t.trial + 1, e.parts.total);
                }
            }
            announce(&cfg.out);
        }
        Command::Sweep(c) => {
            let cfg = c.load()?;
            for cell in cmd_sweep(&cfg)? {
                eprintln!("lambda1 {} lambda2 {}: {:.3} sites", cell.lambda1, cell.lambda2, cell.stats.mean);
            }
            announce(&cfg.out);
        }
        Command::Resolution(c) => {
            let cfg = c.load()?;
            cmd_resolution(&cfg)?;
            announce(&cfg.out);
        }
        Command::Swap { common, runs, trial } => {
            let cfg = common.load()?;
            if trial == 0 {
                return Err(isingarray::Error::Config("trials are numbered from 1".into()));
            }
            for row in cmd_swap(&cfg, &runs, trial - 1)? {
                eprintln!("{}", row.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" "));
            }
            announce(&cfg.out);
        }
        Command::Cliques { theta, tau, out } => {
            let report = cmd_cliques(&theta, tau, &out)?;
            eprintln!("{} three-cliques above {tau}", report.triples.len());
            announce(&out);
        }
        Command::Conditional { theta, fixed, out } => {
            let (names, _) = cmd_conditional(&theta, &parse_fixed(&fixed)?, &out)?;
            eprintln!("{} remaining sites", names.len());
            announce(&out);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

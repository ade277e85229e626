use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multilane_scenarios::config::{Experiment, ScenarioConfig};
use multilane_scenarios::{parse_config, run, RunError};

#[derive(Parser)]
#[command(name = "multilane", version, about = "Multi-lane traffic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Micro and macro runs from the same initial data.
    Consistency(Common),
    /// Uniform perturbation of an equilibrium.
    PerturbGlobal(Common),
    /// Gaussian bump on an equilibrium.
    PerturbLocal(Common),
    /// Three-lane road with a closed stretch.
    LaneClosure(Common),
    /// Class and predicted stability of a uniform two-lane state.
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires = "rho2")]
        rho1: Option<f64>,
        #[arg(long, requires = "rho1")]
        rho2: Option<f64>,
    },
    /// Uniform-flow trajectories.
    PhasePortrait(Common),
    /// Macro run from the configured initial data.
    Custom(Common),
}

fn load(experiment: Experiment, common: &Common) -> Result<ScenarioConfig, RunError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                RunError::Output(multilane_scenarios::output::OutputError::Io {
                    path: path.clone(),
                    source: e,
                })
            })?;
            parse_config(&text)?
        }
        None => ScenarioConfig::new(experiment),
    };
    if cfg.experiment != experiment {
        return Err(RunError::Config(multilane_scenarios::ConfigError {
            line: None,
            key: "experiment".into(),
            message: format!(
                "file describes `{}`, subcommand is `{}`",
                cfg.experiment.name(),
                experiment.name()
            ),
        }));
    }
    if let Some(out) = &common.out {
        cfg.output.dir = Some(out.clone());
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), RunError> {
    let (experiment, common, point) = match cli.command {
        Command::Consistency(c) => (Experiment::Consistency, c, None),
        Command::PerturbGlobal(c) => (Experiment::GlobalPerturbation, c, None),
        Command::PerturbLocal(c) => (Experiment::LocalPerturbation, c, None),
        Command::LaneClosure(c) => (Experiment::LaneClosure, c, None),
        Command::Classify { common, rho1, rho2 } => (Experiment::Classify, common, rho1.zip(rho2)),
        Command::PhasePortrait(c) => (Experiment::PhasePortrait, c, None),
        Command::Custom(c) => (Experiment::Custom, c, None),
    };
    let mut cfg = load(experiment, &common)?;
    if point.is_some() {
        cfg.equilibrium = point;
    }
    let output = run(&cfg)?;
    print!("{}", output.report.summary());
    if let Some(dir) = &cfg.output.dir {
        for path in output.write(dir)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("multilane: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

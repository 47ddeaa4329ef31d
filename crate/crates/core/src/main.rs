use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use burst_pide::commands::{cmd_classify, cmd_simulate, cmd_ssa, cmd_stationary, cmd_verify, Outcome};
use burst_pide::config::RunConfig;
use burst_pide::{Error, Result};

#[derive(Parser)]
#[command(name = "burst-pide", version, about = "Bursty gene-expression densities: stationary laws, solvers, entropy checks and stochastic simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalised stationary density and its shape class.
    Stationary(Common),
    /// Shape class of the stationary density.
    Classify(Common),
    /// Time-dependent run with entropy trace and decay fit.
    Simulate(Common),
    /// Stochastic simulation and histogram comparison.
    Ssa(Common),
    /// Invariant battery.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    /// Override the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the cells per axis.
    #[arg(long)]
    cells: Option<usize>,
    /// Override the solver time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the solver end time.
    #[arg(long)]
    t_end: Option<f64>,
    /// Override the SSA sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Override the seed of the ssa block and the entropy probes.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut c = RunConfig::load(&self.config)?;
        if let Some(o) = &self.output {
            c.output = o.clone();
        }
        if let Some(n) = self.cells {
            c.grid.cells = n;
        }
        if let Some(s) = c.solver.as_mut() {
            if let Some(dt) = self.dt {
                s.dt = dt;
            }
            if let Some(t) = self.t_end {
                s.t_end = t;
            }
        } else if self.dt.is_some() || self.t_end.is_some() {
            return Err(Error::Config("--dt/--t-end need a [solver] block".into()));
        }
        if let Some(s) = c.ssa.as_mut() {
            if let Some(n) = self.samples {
                s.samples = n;
            }
            if let Some(seed) = self.seed {
                s.seed = seed;
            }
        } else if self.samples.is_some() {
            return Err(Error::Config("--samples needs an [ssa] block".into()));
        }
        if let Some(seed) = self.seed {
            c.entropy.seed = seed;
        }
        c.validate()?;
        Ok(c)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&RunConfig) -> Result<Outcome>) = match &cli.command {
        Command::Stationary(c) => (c, cmd_stationary),
        Command::Classify(c) => (c, cmd_classify),
        Command::Simulate(c) => (c, cmd_simulate),
        Command::Ssa(c) => (c, cmd_ssa),
        Command::Verify(c) => (c, cmd_verify),
    };
    match common.load().and_then(|c| run(&c)) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            println!("{}", outcome.summary);
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidSpec(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

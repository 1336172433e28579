use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use servotune::config::{parse_list, parse_triple};
use servotune::{commands, Result, RunConfig};

#[derive(Parser)]
#[command(name = "servotune", version, about = "Simulate and tune a cascaded ball-screw servo drive")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one gain vector and report its metrics.
    Simulate(Common),
    /// Tune the gains with Bayesian optimization.
    Tune(Common),
    /// Grid search, ZN, ITAE, relay and BO side by side.
    Compare(Common),
    /// Repeated tuning runs for several initial design sizes.
    #[command(name = "sweep-m0")]
    SweepM0 {
        #[command(flatten)]
        common: Common,
        /// Comma-separated initial design sizes.
        #[arg(long)]
        m0_list: Option<String>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Exhaustive grid search (cached).
    Grid(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Plant preset.
    #[arg(long)]
    preset: Option<String>,
    /// Gains `Kp,Kv,Ki` (or `Kp,Kv,Tn` for the experimental box).
    #[arg(long, allow_hyphen_values = true)]
    gains: Option<String>,
    /// Cost weight preset.
    #[arg(long)]
    weights: Option<String>,
    /// Feasible set preset: sim, sim-full or exp.
    #[arg(long)]
    feasible: Option<String>,
    /// Simulation preset: fast or full.
    #[arg(long)]
    sim: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.preset {
            c.plant = v.clone();
        }
        if let Some(v) = &self.gains {
            c.gains = Some(parse_triple(v)?);
        }
        if let Some(v) = &self.weights {
            c.weights = v.clone();
        }
        if let Some(v) = &self.feasible {
            c.feasible = v.clone();
        }
        if let Some(v) = &self.sim {
            c.sim = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.m0 {
            c.bo.m0 = Some(v);
        }
        if let Some(v) = self.beta {
            c.bo.beta = Some(v);
        }
        if let Some(v) = self.max_iters {
            c.bo.max_iterations = Some(v);
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<servotune::RunRecord> {
    match cli.command {
        Command::Simulate(c) => commands::simulate(&c.resolve()?),
        Command::Tune(c) => commands::tune(&c.resolve()?),
        Command::Compare(c) => commands::compare(&c.resolve()?),
        Command::Grid(c) => commands::grid(&c.resolve()?),
        Command::SweepM0 { common, m0_list, repeats } => {
            let mut c = common.resolve()?;
            if let Some(l) = m0_list {
                c.sweep.m0 = parse_list(&l)?;
            }
            if let Some(r) = repeats {
                c.sweep.repeats = r;
            }
            commands::sweep_m0(&c)
        }
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(rec) => {
            println!("record written ({} files, config {})", rec.files.len() + 1, &rec.config_hash[..12]);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use chimera_ttt::generators::GeneratedInstance;
use chimera_ttt::harness::{
    cmd_generate, cmd_reference, cmd_report, cmd_run, cmd_targets, cmd_time, cmd_time_solver, write_report,
    ExperimentConfig, Profile,
};
use chimera_ttt::solvers::SolverId;

#[derive(Parser)]
#[command(name = "bench", version, about = "Time-to-target benchmark pipeline for Chimera Ising solvers")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; missing keys come from the profile
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Write the working graph and every instance
    Generate,
    /// Reference runs and target energies
    Reference,
    /// Recompute targets from stored reference samples
    Targets,
    /// Run the solver grid against the targets
    Run,
    /// Calibrate sampler timings, or time one solver on one instance
    Time {
        #[arg(long, requires = "instance")]
        solver: Option<String>,
        #[arg(long, requires = "solver")]
        instance: Option<PathBuf>,
    },
    /// Aggregate results into report.csv and report.json
    Report,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let profile = match c.profile {
        Some(ProfileArg::Paper) => Profile::Paper,
        Some(ProfileArg::Desk) | None => Profile::Desk,
    };
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path, profile)?,
        None => ExperimentConfig::for_profile(profile),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli.common)?;
    let start = Instant::now();
    match cli.command {
        Command::Generate => {
            let n = cmd_generate(&cfg)?;
            println!("generated {n} instances in {}", cfg.out.display());
        }
        Command::Reference => {
            let n = cmd_reference(&cfg)?;
            println!("reference runs and targets for {n} instances");
        }
        Command::Targets => {
            let n = cmd_targets(&cfg)?;
            println!("targets for {n} instances");
        }
        Command::Run => {
            let s = cmd_run(&cfg)?;
            println!(
                "{} instances ({} already complete), {} solver records, {} skips",
                s.instances, s.already_done, s.solver_records, s.skips
            );
        }
        Command::Time { solver, instance } => match (solver, instance) {
            (Some(id), Some(path)) => {
                let id: SolverId = id.parse()?;
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let inst = GeneratedInstance::from_text(&text)?;
                let model = cmd_time_solver(&id, &inst.problem, &cfg)?;
                println!("{}", serde_json::to_string_pretty(&model)?);
            }
            (None, None) => {
                let table = cmd_time(&cfg)?;
                println!("{} calibrated cells in {}", table.cells.len(), cfg.layout().timing().display());
            }
            _ => bail!("--solver and --instance go together"),
        },
        Command::Report => {
            let report = cmd_report(&cfg)?;
            write_report(&cfg.layout(), &report)?;
            for n in &report.notices {
                println!("note: {n}");
            }
            println!("{} report cells, {} dropped", report.cells.len(), report.dropped_cells().len());
        }
    }
    eprintln!("done in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

use clap::{Args, Parser, Subcommand};
use dropctl::config::RunConfig;
use dropctl::error::Error;
use dropctl::optimizer::Mode;
use dropctl::workflow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Ground states, controlled propagation and multilevel optimal control of dipolar condensates.
#[derive(Parser, Debug)]
#[command(name = "dropctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration; built-in full-scale defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the optimizer and perturbation seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Uses the fine cross-check discretization.
    #[arg(long)]
    fine: bool,
}

#[derive(Args, Debug, Clone)]
struct States {
    /// Stem of a stored initial state (e.g. out/psi0-<hash>); computed or taken from the cache when omitted.
    #[arg(long, requires = "psid")]
    psi0: Option<PathBuf>,
    /// Stem of a stored target state.
    #[arg(long, requires = "psi0")]
    psid: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Computes the trapped initial state and the self-bound target.
    Groundstate(Common),
    /// Propagates the initial state under a control file (linear ramps by default) and holds after T.
    Propagate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        states: States,
        /// Control set JSON written by `optimize`.
        #[arg(long)]
        controls: Option<PathBuf>,
    },
    /// Optimizes the controls.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        states: States,
        /// multilevel | direct-level-4 | sum-of-sines
        #[arg(long, default_value = "multilevel")]
        mode: Mode,
    },
    /// Accuracy sweep of the truncated and naive Poisson kernels.
    KernelBench(Common),
    /// Reruns a control file with perturbed endpoints, noise and fewer atoms.
    Perturb {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        states: States,
        #[arg(long)]
        controls: PathBuf,
    },
    /// Prints a configuration file with all defaults filled in.
    InitConfig {
        /// Desk-scale preset (32³ grid, 600 evaluations).
        #[arg(long)]
        desk: bool,
    },
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.optimizer.seed = seed;
        config.perturbation.seed = seed;
    }
    if common.fine {
        config = config.fine();
    }
    config.validate()?;
    Ok(config)
}

fn state_paths(states: &States) -> Option<(&Path, &Path)> {
    states.psi0.as_deref().zip(states.psid.as_deref())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Groundstate(common) => {
            let (files, s) = workflow::cmd_groundstate(&load(&common)?, &common.out)?;
            println!("initial state: E = {:.6e}, peak density {:.4e} /um^3, {} steps", s.initial_energy, s.initial_peak_density, s.initial_steps);
            println!("target state:  E = {:.6e}, peak density {:.4e} /um^3, {} steps", s.target_energy, s.target_peak_density, s.target_steps);
            println!("states: {} and {}", files.stem("psi0").display(), files.stem("psid").display());
        }
        Command::Propagate { common, states, controls } => {
            let (files, r) = workflow::cmd_propagate(&load(&common)?, &common.out, controls.as_deref(), state_paths(&states))?;
            println!("J = {:.6e} (normalized {:.4})", r.cost, r.normalized_cost.unwrap_or(f64::NAN));
            println!("atom loss by T: {:.3}%, atoms in Z at T: {:.3}%", 100.0 * r.atom_loss_fraction, 100.0 * r.atoms_in_region_fraction);
            println!("peak-density fluctuation after T: {:.3}%", 100.0 * r.peak_fluctuation_after_horizon);
            println!("series: {}", files.path("series", "csv").display());
        }
        Command::Optimize { common, states, mode } => {
            let (files, r) = workflow::cmd_optimize(&load(&common)?, &common.out, mode, state_paths(&states))?;
            println!("{mode}: best J = {:.6e} (normalized {:.4e}) after {} evaluations", r.cost, r.normalized_cost(), r.history.len());
            println!("controls: {}", files.path("controls", "json").display());
            println!("history: {}", files.path("history", "csv").display());
        }
        Command::KernelBench(common) => {
            let (files, rows) = workflow::cmd_kernel_bench(&load(&common)?, &common.out, common.fine)?;
            for r in rows {
                println!("{:9} {:>3}x{:>3}x{:>3} {:9} {:.3e}  {:.2}s", r.case, r.points[0], r.points[1], r.points[2], r.method, r.max_relative_error, r.seconds);
            }
            println!("report: {}", files.path("kernel-bench", "csv").display());
        }
        Command::Perturb { common, states, controls } => {
            let (files, r) = workflow::cmd_perturb(&load(&common)?, &common.out, &controls, state_paths(&states))?;
            let p = &r.propagation;
            println!("perturbed run with {} atoms: J = {:.6e} (normalized {:.4})", r.atoms, p.cost, p.normalized_cost.unwrap_or(f64::NAN));
            println!("report: {}", files.path("report", "json").display());
        }
        Command::InitConfig { desk } => {
            let c = if desk { RunConfig::desk() } else { RunConfig::default() };
            println!("{}", serde_json::to_string_pretty(&c.resolved())?);
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NumericFault { .. } | Error::Collapse { .. } => 3,
        Error::NotConverged { .. } => 4,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Error::NotConverged { energies, .. } | Error::Collapse { energies, .. } = &e {
                let tail: Vec<String> = energies.iter().rev().take(10).rev().map(|v| format!("{v:.6e}")).collect();
                eprintln!("energy history (last {}): {}", tail.len(), tail.join(" "));
            }
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

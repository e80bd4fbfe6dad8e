use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddft::commands::{cmd_equilibrium, cmd_evolve, cmd_particles, CommandError};
use ddft::config::RunConfig;
use ddft::validate::{list, run_suite, SuiteOptions};

/// Overdamped DDFT with hydrodynamic interactions.
#[derive(Parser)]
#[command(name = "ddft", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (sectioned text, or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (overrides `[run] seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the dynamics and record diagnostics.
    Evolve(RunArgs),
    /// Solve the self-consistent equilibrium.
    Equilibrium(RunArgs),
    /// Run the Brownian particle oracle.
    Particles {
        #[command(flatten)]
        run: RunArgs,
        /// Equilibrium density CSV (a `rho` column) to compare against.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Run the built-in acceptance suite.
    Validate {
        /// List the criteria without running them.
        #[arg(long)]
        list: bool,
        /// Run only these criteria (comma separated ids).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
        /// Test mode: make this criterion's limits unreachable.
        #[arg(long, hide = true)]
        corrupt_tolerance: Option<usize>,
    },
}

fn load(args: &RunArgs) -> Result<(RunConfig, PathBuf), CommandError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    let out = cfg.output.clone();
    Ok((cfg, out))
}

fn print_warnings(w: &[String]) {
    for line in w {
        eprintln!("{line}");
    }
}

fn run(cli: Cli) -> Result<(), CommandError> {
    let threads = ddft::threads_from_env().map_err(CommandError::Usage)?;
    match cli.command {
        Command::Evolve(args) => {
            let (cfg, out) = load(&args)?;
            let res = cmd_evolve(&cfg, &out)?;
            print_warnings(&res.metadata.warnings);
            let last = res.trajectory.rows.last();
            println!(
                "evolve: {} rows to t = {}, wrote {}",
                res.trajectory.rows.len(),
                last.map_or(0.0, |r| r.t),
                out.display()
            );
        }
        Command::Equilibrium(args) => {
            let (cfg, out) = load(&args)?;
            let (rep, _) = cmd_equilibrium(&cfg, &out)?;
            println!(
                "equilibrium: converged in {} iterations, asymptotic ratio {}, wrote {}",
                rep.iterations,
                rep.asymptotic_ratio.map_or("n/a".into(), |r| format!("{r:.3e}")),
                out.display()
            );
        }
        Command::Particles { run, compare } => {
            let (cfg, out) = load(&run)?;
            let rep = cmd_particles(&cfg, &out, compare.as_deref())?;
            print_warnings(&rep.warnings);
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            println!(
                "particles: {} samples, L1 vs equilibrium {}, L1 vs reference {}, wrote {}",
                rep.samples,
                fmt(rep.l1_vs_equilibrium),
                fmt(rep.comparison.as_ref().map(|c| c.l1)),
                out.display()
            );
        }
        Command::Validate { list: true, .. } => print!("{}", list()),
        Command::Validate { list: false, only, corrupt_tolerance } => {
            let results = run_suite(&SuiteOptions { only, corrupt: corrupt_tolerance, threads });
            for r in &results {
                println!("{}", r.line());
            }
            let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| format!("C{:02} {}", r.id, r.name)).collect();
            if !failed.is_empty() {
                println!("FAILED: {}", failed.join(", "));
                return Err(CommandError::Validation(failed.len()));
            }
            println!("all {} criteria passed", results.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CommandError::Validation(_)) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wrist_fic::check;
use wrist_fic::cli::{run_and_emit, ExperimentConfig};

#[derive(Parser)]
#[command(version, about = "Wrist pointing simulations with a quaternion fractal impedance controller")]
#[command(args_conflicts_with_subcommands = true)]
struct Args {
    /// Run the built-in property suite and exit.
    #[arg(long)]
    check: bool,

    /// Seed for the property suite.
    #[arg(long, default_value_t = 42, requires = "check")]
    seed: u64,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the conditions of a config file and write results.
    Run {
        config: PathBuf,
        /// Only run the condition with this name.
        #[arg(long)]
        condition: Option<String>,
        /// Output directory (overrides `out_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.check {
        let mut ok = true;
        for c in check::run_all(args.seed) {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            ok &= c.passed;
        }
        return if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE };
    }
    let Some(Command::Run { config, condition, out }) = args.command else {
        eprintln!("nothing to do: pass `run <config>` or `--check` (see --help)");
        return ExitCode::from(2);
    };
    let cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let out = out.unwrap_or_else(|| cfg.out_dir.clone());
    match run_and_emit(&cfg, condition.as_deref(), &out) {
        Ok(summaries) => {
            println!(
                "{:<16} {:>9} {:>9} {:>15} {:>12}",
                "condition", "rmse_y/mm", "rmse_z/mm", "effort/N*m", "residual/rad"
            );
            for s in summaries {
                println!(
                    "{:<16} {:>9.3} {:>9.3} {:>7.3} ± {:<5.3} {:>12.3e}",
                    s.condition,
                    s.rmse_y * 1e3,
                    s.rmse_z * 1e3,
                    s.effort_mean,
                    s.effort_std,
                    s.plane.map_or(f64::NAN, |p| p.rms_residual)
                );
            }
            println!("results written to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ggl_cli::{
    parse_config, preset, run_experiment, run_sweep, worker_count, write_sweep_summary, PRESETS,
};

#[derive(Parser)]
#[command(
    name = "nonsmooth-ggl",
    version,
    about = "Timestepping experiments for impacting mechanical systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file or a named preset.
    Run {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Use the 4 s horizon for slider presets.
        #[arg(long, requires = "preset")]
        full: bool,
        /// Directory for preset output.
        #[arg(long, default_value = "runs", requires = "preset")]
        out: PathBuf,
    },
    /// Print the preset names.
    ListPresets,
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::ListPresets => {
            for (name, what) in PRESETS {
                println!("{name:<18} {what}");
            }
            Ok(0)
        }
        Command::Run {
            config: Some(path), ..
        } => {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let cfg = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
            let report = run_experiment(&cfg)?;
            println!(
                "{}: min_gap {:e} m, E_end {} J, {} non-converged -> {}",
                cfg.scheme,
                report.summary.min_gap,
                report.summary.e_end,
                report.summary.non_converged,
                report.trajectory.display()
            );
            Ok(report.exit_code())
        }
        Command::Run {
            preset: Some(name),
            full,
            out,
            ..
        } => {
            let sweep = preset(&name, full, &out)?;
            let reports = run_sweep(&sweep, worker_count(sweep.runs.len()))?;
            for r in &reports {
                println!(
                    "{}: min_gap {:e} m, E_end {} J, {} non-converged -> {}",
                    r.summary.scheme,
                    r.summary.min_gap,
                    r.summary.e_end,
                    r.summary.non_converged,
                    r.trajectory.display()
                );
            }
            if let Some(s) = write_sweep_summary(&sweep, &reports, &out)? {
                if let Some(ratio) = s.unified_moreau_time_ratio {
                    println!("unified/moreau wall-time ratio {ratio:.2}");
                }
            }
            Ok(reports.iter().map(|r| r.exit_code()).max().unwrap_or(0))
        }
        Command::Run { .. } => unreachable!("clap requires --config or --preset"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kerr_readout::orchestrator::{cmd_average, cmd_classify, cmd_generate, cmd_report, cmd_scan, Overrides};
use kerr_readout::Result;

#[derive(Parser)]
#[command(name = "kerr-readout", version, about = "Qubit readout through a parametric Kerr resonator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate labelled homodyne trajectories into manifest.json + records.csv.
    Generate(Overrides),
    /// Master-equation photon number (and σ_z) for both qubit states.
    Average(Overrides),
    /// Repeated cross-validation over the (features, t_f, τ) grid.
    Classify {
        /// Directory written by `generate`.
        dataset: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    /// Readout error over an (ε, ω) grid.
    Scan(Overrides),
    /// Merge summary.csv files into one table.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Generate(o) => {
            let dir = cmd_generate(&o.resolve(false)?, o.force)?;
            println!("{}", dir.display());
        }
        Cmd::Average(o) => {
            let cfg = o.resolve(false)?;
            let avg = cmd_average(&cfg, o.force)?;
            println!("{} rows -> {}", avg.times.len(), cfg.out.display());
        }
        Cmd::Classify { dataset, o } => {
            for r in cmd_classify(&dataset, &o.resolve(false)?, o.force)? {
                println!("{} t_f={} tau={} error={:.4} std={:.4}", r.classifier, r.t_f, r.tau, r.error, r.std);
            }
        }
        Cmd::Scan(o) => {
            for r in cmd_scan(&o.resolve(true)?, o.force)? {
                match &r.outcome {
                    Ok((e, s)) => println!(
                        "epsilon={} omega={} error={e:.4} std={s:.4}{}",
                        r.epsilon,
                        r.omega,
                        if r.best { " *" } else { "" }
                    ),
                    Err(msg) => println!("epsilon={} omega={} failed: {msg}", r.epsilon, r.omega),
                }
            }
        }
        Cmd::Report { inputs, out, force } => {
            let rows = cmd_report(&inputs, &out, force)?;
            println!("{} rows -> {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

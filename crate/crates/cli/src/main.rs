use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::{info, warn};

use micropump_cli::config::{load_config, RunConfig};
use micropump_cli::output::{header_line, write_atomic};
use micropump_cli::report::modes_report;
use micropump_cli::{exit_code, run_single, run_sweep};

/// Flow simulator for a piezo-driven valveless micropump.
#[derive(Parser, Debug)]
#[command(name = "micropump", version)]
struct Cli {
    /// TOML configuration file; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Upper bound on sweep workers; defaults to the available cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Target grid spacing in metres (overrides grid.target_dx_m).
    #[arg(long, global = true)]
    dx: Option<f64>,
    /// Drive frequency in Hz for `run` (overrides drive.frequency_hz).
    #[arg(long, global = true)]
    freq: Option<f64>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dry-plate natural frequencies and the homogeneous verification table.
    Modes,
    /// One coupled run at a single drive frequency.
    Run,
    /// Frequency sweep; writes sweep.csv.
    Sweep,
    /// Print the built-in defaults as a config file.
    PrintDefaults,
}

fn effective_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(dx) = cli.dx {
        cfg.grid.target_dx_m = dx;
    }
    if let Some(f) = cli.freq {
        cfg.drive.frequency_hz = f;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn base_dir(cli: &Cli) -> PathBuf {
    cli.config
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    if let Command::PrintDefaults = cli.command {
        print!("{}", RunConfig::default().to_toml());
        return Ok(());
    }
    let cfg = effective_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let base = base_dir(cli);
    let out = cfg.output.dir.clone();
    match cli.command {
        Command::PrintDefaults => unreachable!(),
        Command::Modes => {
            let model = cfg.plate_model(&base)?;
            let report = modes_report(&model)?;
            print!("{}", report.text);
            let mut csv = header_line(&cfg);
            csv.push_str(&report.csv);
            write_atomic(&out.join("modes.csv"), &csv).context("writing modes.csv")?;
        }
        Command::Run => {
            let output = run_single(&cfg, &base, &out)?;
            let r = &output.result;
            println!("frequency            {} Hz", r.frequency_hz);
            println!("net flow             {:.6e} ul/min", r.net_flow_ul_min);
            println!("peak |Q|             {:.6e} ul/min", r.peak_flow_ul_min);
            println!("phase lag            {:.4} rad", r.phase_lag_rad);
            println!("centre amplitude     {:.4e} m", r.center_amplitude_m);
            println!("periodicity residual {:.4e}", r.periodicity_residual);
            if !r.periodic {
                warn!("response is not periodic after {} cycles", cfg.coupling.cycles_total);
            }
            info!("wrote {}", out.join("summary.csv").display());
        }
        Command::Sweep => {
            let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
            let jobs = cli.jobs.map_or(jobs, |j| j.max(1));
            let result = run_sweep(&cfg, &base, jobs)?;
            write_atomic(&out.join("sweep.csv"), &result.csv(&cfg)).context("writing sweep.csv")?;
            if let Some(res) = &result.resonance {
                println!(
                    "wet resonance estimate {:.1} Hz, dry f1 {:.1} Hz",
                    res.frequency_hz, res.dry_frequency_hz
                );
            }
            match (result.argmax_hz, result.peak_ul_min) {
                (Some(f), Some(q)) => {
                    println!("peak net flow {q:.6e} ul/min at {f:.1} Hz");
                    println!("paper reference: 157.56 ul/min at 3200 Hz (3-D chip model)");
                }
                _ => bail!(micropump_core::Error::NonFinite("every sweep frequency failed")),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

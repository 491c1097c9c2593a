use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fiber_entangle::experiments::{self, ExperimentConfig, LoadedConfig};
use fiber_entangle::Error;

#[derive(Parser)]
#[command(name = "simulate", about = "Entangled-photon fiber transmission experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Report expected counts instead of Poisson samples.
    #[arg(long, global = true)]
    noiseless: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Coincidence fringes versus analyzer angle.
    Fringe,
    /// S over a grid of Bob's angles.
    ChshScan,
    /// Nonlocal dip versus probe displacement.
    Dip,
    /// Intermodal delay and coherence factor.
    Dispersion,
    /// Channel parameters from observed counts.
    Fit,
    /// Print the effective config as JSON.
    PrintConfig,
}

fn run(cli: &Cli) -> Result<(), Error> {
    let LoadedConfig { mut config, dir } = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => LoadedConfig { config: ExperimentConfig::default(), dir: PathBuf::from(".") },
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.noiseless |= cli.noiseless;
    if let Command::PrintConfig = cli.command {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(());
    }
    std::fs::create_dir_all(&cli.out_dir)?;
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::Fringe => {
            for s in experiments::cmd_fringe(&config, out)? {
                println!(
                    "beta {:>7.2} deg  visibility {:.4}  (theory {:.4})",
                    s.beta_deg, s.visibility, s.visibility_theory
                );
            }
        }
        Command::ChshScan => {
            let s = experiments::cmd_chsh_scan(&config, out)?;
            println!("violating pixels: {} of {}", s.violated_pixels, s.total_pixels);
            println!("grid max S = {:.4} +/- {:.4} at {:?} deg", s.grid_max.s, s.grid_max.delta_s, s.grid_max.angles_deg);
            println!("max S = {:.4} +/- {:.4} at {:?} deg", s.maximized.s, s.maximized.delta_s, s.maximized.angles_deg);
        }
        Command::Dip => {
            for s in experiments::cmd_dip(&config, out)? {
                match (s.dip_mm, s.visibility) {
                    (Some(x), Some(v)) => println!("dPP {:.3} mm: dip at {:.3} mm, visibility {:.4}", s.delta_pp_mm, x, v),
                    _ => println!("dPP {:.3} mm: no dip", s.delta_pp_mm),
                }
            }
        }
        Command::Dispersion => {
            let s = experiments::cmd_dispersion(&config, out)?;
            println!("intermodal delay {:.4} ps/m", s.delay_ps_per_m);
            println!("delay over {} m: {:.4} ps, gamma {:.4}", s.length_m, s.delta_tau_ps, s.gamma);
            if let (Some(m), Some(g)) = (s.measured_delay_ps_per_m, s.gamma_measured) {
                println!("measured {m} ps/m: gamma {g:.4}");
            }
        }
        Command::PrintConfig => unreachable!(),
        Command::Fit => {
            let r = experiments::cmd_fit(&config, &dir, out)?;
            for e in &r.estimates {
                match e.std_error {
                    Some(se) => println!("{} = {:.6} +/- {:.6}", e.name, e.value, se),
                    None => println!("{} = {:.6}", e.name, e.value),
                }
            }
            println!("residual {:.6e}, converged {}", r.residual, r.converged);
            if r.unidentifiable {
                println!("warning: parameters not identifiable from these observations");
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config() {
        2
    } else if e.is_numerical() {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

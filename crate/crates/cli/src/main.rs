use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use harvest_cli::commands::{self, axis, Context, IdentifyArgs};
use harvest_cli::scenario::Preset;
use harvest_cli::{exit_code, ConfigError, Scenario, EXIT_IDENTIFICATION};
use harvest_core::load::SweepSpec;

/// Analysis, simulation and identification for resonant piezoelectric harvesters.
#[derive(Parser)]
#[command(name = "harvest", version)]
struct Cli {
    /// Scenario file of `section.key = value` lines, applied over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV outputs. Without it, data goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base parameter set. Defaults to ppa4011 when no --config is given.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    /// Seed for synthetic measurement noise.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form optimum, source impedance and wasted-power table.
    Analyze {
        /// Tuning amplitude, g.
        #[arg(long)]
        a_max: Option<f64>,
        /// Comma-separated amplitude ratios; give the flag with no value for none.
        #[arg(long, num_args = 0..=1, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
    },
    /// Normalized power grids and curves.
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
    /// Time-domain run of the configured load or controller.
    Simulate,
    /// Recover the harvester parameters from power surfaces.
    Identify {
        /// Generate surfaces from the configured harvester.
        #[arg(long)]
        synthetic: bool,
        /// Amplitudes of the synthetic surfaces, g.
        #[arg(long, value_delimiter = ',')]
        amplitudes: Option<Vec<f64>>,
        /// Relative noise on synthetic surfaces.
        #[arg(long)]
        noise: Option<f64>,
        /// Separately measured piezo capacitance, F.
        #[arg(long)]
        c_p: Option<f64>,
        /// Surface CSV files.
        files: Vec<PathBuf>,
    },
    /// Choose controller parts that emulate the optimal load.
    SizeController {
        /// Largest accepted relative error of R_e and C_n.
        #[arg(long)]
        tolerance: Option<f64>,
    },
}

#[derive(Subcommand)]
enum SweepKind {
    /// Power into a parallel R-X load over (R/R_opt, X/X_opt), log axes.
    Impedance {
        /// Coupling coefficient; defaults to the configured harvester.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        from: f64,
        #[arg(long, default_value_t = 10.0)]
        to: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Power into a voltage generator over (V/V_opt, phase).
    Generator {
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        #[arg(long, default_value_t = 2.0)]
        to: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Fixed-load powers and wasted power against amplitude ratio.
    Ratio {
        #[arg(long, default_value_t = 0.5)]
        from: f64,
        #[arg(long, default_value_t = 3.0)]
        to: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
}

fn load_scenario(cli: &Cli) -> Result<Scenario> {
    let text = match &cli.config {
        Some(p) => Some(
            fs::read_to_string(p).map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let origin = cli
        .config
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default();
    let scenario = Scenario::resolve(cli.preset, text.as_deref().map(|t| (t, origin.as_str())))?;
    Ok(scenario)
}

fn run(cli: Cli) -> Result<()> {
    let mut scenario = load_scenario(&cli)?;
    match &cli.command {
        Command::Analyze { a_max, ratios } => {
            if let Some(a) = a_max {
                scenario.analyze.a_max = *a;
            }
            if let Some(r) = ratios {
                scenario.analyze.ratios = r.clone();
            }
        }
        Command::Identify {
            amplitudes, noise, ..
        } => {
            if let Some(a) = amplitudes {
                scenario.identify.amplitudes = a.clone();
            }
            if let Some(n) = noise {
                scenario.identify.noise = *n;
            }
        }
        _ => {}
    }
    scenario.validate()?;

    let ctx = Context {
        scenario,
        out: cli.out.clone(),
        seed: cli.seed,
    };
    ctx.prepare_out()?;
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Analyze { .. } => commands::analyze(&ctx, &mut stdout),
        Command::Sweep { kind } => {
            let spec = match kind {
                SweepKind::Impedance {
                    rho,
                    from,
                    to,
                    points,
                } => SweepSpec::Impedance {
                    rho: rho.unwrap_or(ctx.scenario.harvester.rho),
                    r_n: axis(true, from, to, points),
                    x_n: axis(true, from, to, points),
                },
                SweepKind::Generator { from, to, points } => match SweepSpec::generator_default() {
                    SweepSpec::Generator { phi_n, .. } => SweepSpec::Generator {
                        v_n: axis(false, from, to, points),
                        phi_n,
                    },
                    _ => unreachable!(),
                },
                SweepKind::Ratio { from, to, points } => SweepSpec::Ratio {
                    ratio: axis(false, from, to, points),
                },
            };
            commands::sweep(&ctx, &spec, &mut stdout)
        }
        Command::Simulate => commands::simulate(&ctx, &mut stdout),
        Command::Identify {
            synthetic,
            files,
            c_p,
            ..
        } => commands::identify(
            &ctx,
            &IdentifyArgs {
                synthetic,
                files,
                c_p,
            },
            &mut stdout,
        ),
        Command::SizeController { tolerance } => commands::size(&ctx, tolerance, &mut stdout),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let label = if code == EXIT_IDENTIFICATION {
                "warning"
            } else {
                "error"
            };
            eprintln!("{label}: {e:#}");
            ExitCode::from(code)
        }
    }
}

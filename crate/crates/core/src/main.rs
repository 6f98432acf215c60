//! Command-line front end: simulation runs, nondimensionalization, flat
//! equilibria, symbol scans, dispersion roots, and the half-space mode
//! oracle. Exit codes: 0 success, 2 validation error, 3 numerical failure,
//! 4 margin/well-posedness halt.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use evapfront::config::{nondimensionalize, solve_equilibrium, PhysicalParams, RunConfig};
use evapfront::error::SimError;
use evapfront::modelproblem::{solve_halfspace_mode, HalfspaceOptions};
use evapfront::simulation::run_simulation_from;
use evapfront::symbol::{
    dispersion_root, layered_dispersion_root, n_parabolicity_scan, newton_polygon, SectorSpec,
    SymbolParams,
};

#[derive(Parser)]
#[command(name = "evapfront", version, about = "Evaporation-front simulator and boundary-symbol analysis")]
struct Cli {
    /// Seed for randomized initial data (overrides the config value).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured simulation and write its time series and snapshots.
    Simulate(SimulateArgs),
    /// Compute the dimensionless numbers from physical constants.
    Nondim(NondimArgs),
    /// Solve the flat-equilibrium relation alpha/H + beta/(1-H) = 1.
    Equilibrium(EquilibriumArgs),
    /// Sample the widened sectors and test the symbol's principal parts.
    SymbolScan(SymbolScanArgs),
    /// Find a root of the boundary symbol (half-space or finite layer).
    Dispersion(DispersionArgs),
    /// Integrate the half-space model evolution of one transverse mode.
    ModelOracle(ModelOracleArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for series.csv, report.json and snapshots.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Restore this snapshot before stepping.
    #[arg(long)]
    restore: Option<PathBuf>,
}

#[derive(Args)]
struct NondimArgs {
    /// TOML file with a [physical] section holding the dimensional constants.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct EquilibriumArgs {
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Args)]
struct SymbolScanArgs {
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, allow_negative_numbers = true)]
    beta: f64,
    /// Transport coefficients (repeat for more transverse dimensions).
    #[arg(long = "c", default_values_t = vec![0.0], allow_negative_numbers = true)]
    c: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0.05)]
    eta_sector: f64,
    #[arg(long, default_value_t = 32)]
    n_radial: usize,
    #[arg(long, default_value_t = 64)]
    n_angular: usize,
}

#[derive(Args)]
struct DispersionArgs {
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long = "c", default_values_t = vec![0.0], allow_negative_numbers = true)]
    c: Vec<f64>,
    /// Transverse wavenumber components (repeat per dimension).
    #[arg(long = "k", required = true, allow_negative_numbers = true)]
    k: Vec<f64>,
    /// Initial guess, real part.
    #[arg(long, allow_negative_numbers = true)]
    lambda0_re: Option<f64>,
    /// Initial guess, imaginary part.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    lambda0_im: f64,
    /// Also solve the finite-layer relation with this interface level.
    #[arg(long)]
    layer_h: Option<f64>,
}

#[derive(Args)]
struct ModelOracleArgs {
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long = "c", default_values_t = vec![0.0], allow_negative_numbers = true)]
    c: Vec<f64>,
    #[arg(long = "k", required = true, allow_negative_numbers = true)]
    k: Vec<f64>,
    /// Forcing preset: "ramp" is 1 - e^{-t}, "impulse" is t e^{-10 t}.
    #[arg(long, default_value = "impulse")]
    forcing: String,
    #[arg(long, default_value_t = 4.0)]
    t_end: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
}

fn complex_json(v: Complex64) -> serde_json::Value {
    serde_json::json!({"re": v.re, "im": v.im})
}

fn run(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Simulate(args) => {
            let text = std::fs::read_to_string(&args.config)?;
            let mut cfg = RunConfig::from_toml(&text)?;
            if cli.seed.is_some() {
                cfg.seed = cli.seed;
            }
            let snap = match &args.restore {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    Some(evapfront::simulation::Snapshot::from_json(&text)?)
                }
                None => None,
            };
            let outcome =
                run_simulation_from(&cfg, args.out_dir.as_deref(), snap.as_ref())?;
            println!("{}", serde_json::to_string_pretty(&outcome.report).unwrap());
            // An opt-in monitor halt still produced outputs, but the process
            // signals it through the exit code.
            if let Some(reason) = outcome.report.halted {
                return Err(SimError::WellposednessHalt(reason));
            }
            Ok(())
        }
        Command::Nondim(args) => {
            let text = std::fs::read_to_string(&args.config)?;
            #[derive(serde::Deserialize)]
            struct PhysFile {
                physical: PhysicalParams,
            }
            let phys: PhysFile = toml::from_str(&text)
                .map_err(|e| SimError::InvalidParameter(format!("config parse error: {e}")))?;
            let (params, units) = nondimensionalize(&phys.physical)?;
            let out = serde_json::json!({
                "params": params,
                "time_units": units,
            });
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
            Ok(())
        }
        Command::Equilibrium(args) => {
            let sols = solve_equilibrium(args.alpha, args.beta, args.h)?;
            let out: Vec<serde_json::Value> = sols
                .iter()
                .map(|(name, v)| serde_json::json!({"unknown": name, "value": v}))
                .collect();
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
            Ok(())
        }
        Command::SymbolScan(args) => {
            let p = SymbolParams::new(args.alpha, args.beta, args.c.clone());
            let spec =
                SectorSpec::widened(args.delta, args.eta_sector, args.n_radial, args.n_angular)?;
            let report = n_parabolicity_scan(&p, &spec, args.eta_sector)?;
            let polygon = newton_polygon(&p);
            let out = serde_json::json!({
                "scan": report,
                "newton_polygon": polygon,
            });
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
            Ok(())
        }
        Command::Dispersion(args) => {
            let p = SymbolParams::new(args.alpha, args.beta, args.c.clone());
            let lambda0 = args
                .lambda0_re
                .map(|re| Complex64::new(re, args.lambda0_im));
            let root = dispersion_root(&p, &args.k, lambda0)?;
            let mut out = serde_json::json!({
                "halfspace": {
                    "k": root.k,
                    "lambda": complex_json(root.lambda),
                    "residual": root.residual,
                    "branch_note": root.branch_note,
                }
            });
            if let Some(h) = args.layer_h {
                let lay = layered_dispersion_root(&p, &args.k, h)?;
                out["layered"] = serde_json::json!({
                    "k": lay.k,
                    "h": h,
                    "lambda": complex_json(lay.lambda),
                    "residual": lay.residual,
                    "branch_note": lay.branch_note,
                });
            }
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
            Ok(())
        }
        Command::ModelOracle(args) => {
            let forcing: Box<dyn Fn(f64) -> Complex64> = match args.forcing.as_str() {
                "ramp" => Box::new(|t: f64| Complex64::new(1.0 - (-t).exp(), 0.0)),
                "impulse" => Box::new(|t: f64| Complex64::new(t * (-10.0 * t).exp(), 0.0)),
                other => {
                    return Err(SimError::InvalidParameter(format!(
                        "unknown forcing preset '{other}'"
                    )))
                }
            };
            let sol = solve_halfspace_mode(
                args.alpha,
                args.beta,
                &args.c,
                &args.k,
                forcing.as_ref(),
                args.t_end,
                args.dt,
                &HalfspaceOptions::default(),
            )?;
            let out = serde_json::json!({
                "k": sol.k,
                "depth": sol.depth,
                "times": sol.times,
                "phi_hat": sol.phi_hat.iter().map(|v| complex_json(*v)).collect::<Vec<_>>(),
                "profile_consistency_error": sol.profile_consistency_error(),
            });
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

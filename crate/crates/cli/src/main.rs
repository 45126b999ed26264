//! `weakshift`: run weak-measurement scenarios, sweeps and the validation suite.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use weakshift_core::analytic::{lg_compatibility, lg_oam_residual};
use weakshift_core::entanglement::{c_matrix_direct, c_matrix_from_shifts, is_entangled, two_mode_gaussian, WeakProbeConfig};
use weakshift_core::fourier_corr::appendix_a_check;
use weakshift_core::pointer::{lg_mode, moments};
use weakshift_core::scenario::{reports_to_csv, run_scenario, run_sweep_with, sweep_to_json, report_to_json, to_json, write_outputs};
use weakshift_core::validate::{lg_grid, validate_all};
use weakshift_core::{Error, Grid, ScenarioConfig, SignConvention, TwoModeGaussianParams};

#[derive(Parser)]
#[command(name = "weakshift", version, about = "Weak measurement with correlated multimode pointers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and compare shifts with first-order predictions
    Run {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun a scenario with scaled coupling strengths
    Sweep {
        file: PathBuf,
        /// Strength multipliers; defaults to the scenario's `sweep` list
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
        multipliers: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross correlations of a Laguerre-Gauss pointer
    LgCheck {
        #[arg(long, allow_negative_numbers = true)]
        l: i32,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// C matrix of a two-mode Gaussian, direct and from simulated shifts
    Entangle {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, allow_negative_numbers = true)]
        gamma: f64,
        #[arg(long, default_value_t = 0.05)]
        lambda: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Formal p1-q2 moment after a partial Fourier transform
    AppendixA {
        #[arg(long)]
        sigma1: f64,
        #[arg(long)]
        sigma2: f64,
        #[arg(long, allow_negative_numbers = true)]
        c12: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every validation criterion
    Validate {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Predict with every sign reversed (negative control)
        #[arg(long)]
        flip_convention: bool,
    },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_VALIDATION)
            }
        }
    }
}

fn emit(out: Option<&Path>, stem: &str, csv: Option<&str>, json: &str) -> Result<(), Error> {
    let Some(dir) = out else {
        print!("{}", csv.unwrap_or(json));
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    if let Some(csv) = csv {
        std::fs::write(dir.join(format!("{stem}.csv")), csv)?;
    }
    std::fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}

fn dispatch(cmd: Command) -> Result<ExitCode, Error> {
    match cmd {
        Command::Run { file, out } => {
            let cfg = ScenarioConfig::load(&file)?;
            let report = run_scenario(&cfg)?;
            let csv = reports_to_csv([&report])?;
            emit(out.as_deref(), &report.scenario_id, Some(&csv), &report_to_json(&report)?)?;
            if out.is_some() {
                eprintln!(
                    "{}: probability {:.6e}, max residual {:.3e}, first-order gap {:.3e} ({:.2?})",
                    report.scenario_id,
                    report.postselection_probability,
                    report.max_residual(),
                    report.first_order_gap,
                    report.wall_time
                );
            }
        }
        Command::Sweep { file, multipliers, out } => {
            let cfg = ScenarioConfig::load(&file)?;
            let mult = match multipliers.or_else(|| cfg.sweep.clone()) {
                Some(m) => m,
                None => return Err(Error::Config {
                    path: "multipliers".into(),
                    message: "pass --multipliers or add a sweep list to the scenario".into(),
                }),
            };
            let sweep = run_sweep_with(&cfg, &mult, SignConvention::frozen())?;
            let csv = reports_to_csv(&sweep.reports)?;
            emit(out.as_deref(), &format!("{}_sweep", sweep.scenario_id), Some(&csv), &sweep_to_json(&sweep)?)?;
            match sweep.residual_slope {
                Some(s) => eprintln!("{}: residual slope {s:.4}", sweep.scenario_id),
                None => eprintln!("{}: residual slope undefined (zero residuals)", sweep.scenario_id),
            }
        }
        Command::LgCheck { l, sigma, out } => {
            let grid = lg_grid();
            let m = moments(&lg_mode(&grid, l, sigma)?)?;
            let v = json!({
                "l": l,
                "sigma": sigma,
                "grid": { "points": grid.points_per_axis(), "extent": grid.extents() },
                "corr_px_y": m.corr_qp(1, 0),
                "corr_py_x": m.corr_qp(0, 1),
                "corr_x_y": m.corr_qq(0, 1),
                "var_x": m.var_q(0),
                "equal_correlation_residual": lg_compatibility(&m, l),
                "angular_momentum_residual": lg_oam_residual(&m, l),
            });
            emit(out.as_deref(), &format!("lg_check_l{l}"), None, &to_json(&v))?;
        }
        Command::Entangle { alpha, beta, gamma, lambda, out } => {
            let params = TwoModeGaussianParams::new(alpha, beta, gamma)?;
            let cov = params.position_covariance();
            let scale = cov[(0, 0)].max(cov[(1, 1)]).sqrt().max(1.0) * 1.25;
            let phi = two_mode_gaussian(&Grid::default_for(2, scale)?, params)?;
            let direct = c_matrix_direct(&phi)?;
            let rec = c_matrix_from_shifts(&phi, &WeakProbeConfig::imaginary_pauli_z(lambda), SignConvention::frozen())?;
            let v = json!({
                "alpha": alpha, "beta": beta, "gamma": gamma, "lambda": lambda,
                "direct": { "entries": direct.entries, "det": direct.det(), "entangled": is_entangled(&direct) },
                "from_shifts": { "entries": rec.entries, "det": rec.det(), "entangled": is_entangled(&rec) },
            });
            emit(out.as_deref(), "entangle", None, &to_json(&v))?;
        }
        Command::AppendixA { sigma1, sigma2, c12, out } => {
            let r = appendix_a_check(sigma1, sigma2, c12)?;
            emit(out.as_deref(), "appendix_a", None, &to_json(&r))?;
        }
        Command::Validate { out, flip_convention } => {
            let conv = if flip_convention { SignConvention::frozen().flipped() } else { SignConvention::frozen() };
            let run = validate_all(conv)?;
            print!("{}", run.summary.table());
            if let Some(dir) = out.as_deref() {
                write_outputs(dir, "validation_summary", &run.summary.to_csv(), &run.summary.to_json())?;
                write_outputs(dir, "bundled_reports", &run.reports_csv()?, &run.reports_json()?)?;
            }
            if !run.summary.all_passed() {
                let failed: Vec<&str> = run.summary.criteria.iter().filter(|c| !c.passed).map(|c| c.id.as_str()).collect();
                eprintln!("failed criteria: {}", failed.join(", "));
                return Ok(ExitCode::from(EXIT_VALIDATION));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

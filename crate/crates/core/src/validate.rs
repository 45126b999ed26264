//! The full validation suite behind `weakshift validate`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{calibrate, calibration_pointer_spec, lg_compatibility, lg_oam_residual, SignConvention};
use crate::dynamics::Quadrature;
use crate::entanglement::{c_matrix_direct, c_matrix_from_shifts, is_entangled, two_mode_gaussian, TwoModeGaussianParams, WeakProbeConfig};
use crate::error::{Error, Result};
use crate::fourier_corr::appendix_a_check;
use crate::pointer::{displace_momentum, gaussian_pointer, lg_mode, moments, Grid, PointerWavefunction};
use crate::scenario::{fmt_f64, report_to_json, reports_to_csv, run_scaled, run_sweep_with, to_json, ScenarioConfig, ShiftReport};

/// Bundled scenario files as `(id, json)`.
pub const BUNDLED: [(&str, &str); 12] = [
    ("calibration", include_str!("../../../scenarios/calibration.json")),
    ("entangle_p_leg", include_str!("../../../scenarios/entangle_p_leg.json")),
    ("entangle_q_leg", include_str!("../../../scenarios/entangle_q_leg.json")),
    ("first_order_mode", include_str!("../../../scenarios/first_order_mode.json")),
    ("jozsa_3d", include_str!("../../../scenarios/jozsa_3d.json")),
    ("jozsa_baseline", include_str!("../../../scenarios/jozsa_baseline.json")),
    ("lg_probe", include_str!("../../../scenarios/lg_probe.json")),
    ("qutrit_sequential", include_str!("../../../scenarios/qutrit_sequential.json")),
    ("real_weak_value", include_str!("../../../scenarios/real_weak_value.json")),
    ("seq_corr_q3", include_str!("../../../scenarios/seq_corr_q3.json")),
    ("seq_full", include_str!("../../../scenarios/seq_full.json")),
    ("zero_coupling", include_str!("../../../scenarios/zero_coupling.json")),
];

pub fn bundled_config(id: &str) -> Result<ScenarioConfig> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(name, _)| *name == id)
        .ok_or_else(|| Error::config(id, "no bundled scenario with this id"))?;
    ScenarioConfig::from_json(text, id)
}

pub fn bundled_configs() -> Result<Vec<ScenarioConfig>> {
    BUNDLED.iter().map(|(id, text)| ScenarioConfig::from_json(text, id)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: String,
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CriterionResult {
    fn check(id: &str, name: &str, value: f64, tolerance: f64, detail: String) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
            detail,
        }
    }

    fn failed(id: &str, name: &str, err: &Error) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            passed: false,
            value: f64::NAN,
            tolerance: f64::NAN,
            detail: format!("error: {err}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub convention: SignConvention,
    pub criteria: Vec<CriterionResult>,
}

impl ValidationSummary {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,name,passed,value,tolerance\n");
        for c in &self.criteria {
            writeln!(out, "{},{},{},{},{}", c.id, c.name, c.passed, fmt_f64(c.value), fmt_f64(c.tolerance)).expect("string");
        }
        out
    }

    /// One human-readable line per criterion.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for c in &self.criteria {
            writeln!(
                out,
                "{} [{:>3}] {:<34} value {:>11.4e}  tol {:>9.2e}  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.id,
                c.name,
                c.value,
                c.tolerance,
                c.detail
            )
            .expect("string");
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ValidationRun {
    pub summary: ValidationSummary,
    /// Reports of every bundled scenario at its configured strengths.
    pub reports: Vec<ShiftReport>,
}

impl ValidationRun {
    pub fn reports_csv(&self) -> Result<String> {
        reports_to_csv(&self.reports)
    }

    pub fn reports_json(&self) -> Result<String> {
        let mut out = String::from("[\n");
        for (i, r) in self.reports.iter().enumerate() {
            out.push_str(report_to_json(r)?.trim_end());
            out.push_str(if i + 1 < self.reports.len() { ",\n" } else { "\n" });
        }
        out.push_str("]\n");
        Ok(out)
    }
}

fn guard(id: &str, name: &str, f: impl FnOnce() -> Result<CriterionResult>) -> CriterionResult {
    f().unwrap_or_else(|e| CriterionResult::failed(id, name, &e))
}

/// Runs every criterion with predictions signed by `conv`.
pub fn validate_all(conv: SignConvention) -> Result<ValidationRun> {
    let configs = bundled_configs()?;
    let first: Vec<Result<ShiftReport>> = configs.par_iter().map(|c| run_scaled(c, 1.0, conv)).collect();

    let mut criteria = vec![
        guard("0", "sign convention calibration", || calibration_criterion(conv)),
        guard("1", "LG equal cross correlations", lg_literal_criterion),
        guard("1b", "LG angular momentum law", lg_oam_criterion),
        guard("1c", "LG probe shift slopes", || lg_probe_criterion(conv)),
        guard("2", "single weak measurement shifts", || single_wm_criterion(conv)),
        guard("2b", "single weak measurement order", || single_wm_slope_criterion(conv)),
        guard("3", "sequential shifts", || sequential_criterion(conv)),
        guard("3b", "readout offset at zero coupling", || readout_offset_criterion(conv)),
        guard("4", "uncorrelated reduction", || jozsa_criterion(conv)),
        guard("5", "real weak value null", || real_weak_value_criterion(conv)),
        guard("6", "displacement invariance", displacement_criterion),
        guard("7", "entanglement protocol", || entanglement_criterion(conv)),
        guard("8", "formal moment i c12/sigma1^2", appendix_literal_criterion),
        guard("8b", "formal moment i c12/sigma2^2", appendix_closed_form_criterion),
    ];

    let mut reports = Vec::with_capacity(configs.len());
    let mut worst = (0.0f64, String::new());
    let mut error = None;
    for (cfg, r) in configs.iter().zip(first) {
        match r {
            Ok(r) => {
                let sc = cfg.build()?;
                let tol = oracle_tolerance(sc.total_strength());
                let ratio = r.first_order_gap / tol;
                if ratio > worst.0 || worst.1.is_empty() {
                    worst = (ratio, format!("{} gap {:.3e} vs {:.3e}", r.scenario_id, r.first_order_gap, tol));
                }
                reports.push(r);
            }
            Err(e) => error = Some(e),
        }
    }
    criteria.push(match &error {
        Some(e) => CriterionResult::failed("9", "first-order oracle", e),
        None => CriterionResult::check("9", "first-order oracle", worst.0, 1.0, format!("worst gap/tolerance: {}", worst.1)),
    });
    criteria.push(guard("10", "deterministic reports", || determinism_criterion(&configs, &reports, conv)));

    Ok(ValidationRun {
        summary: ValidationSummary { convention: conv, criteria },
        reports,
    })
}

/// `3 lambda^2` with `lambda` the summed strength, floored for zero coupling.
pub fn oracle_tolerance(total_strength: f64) -> f64 {
    (3.0 * total_strength * total_strength).max(1e-9)
}

fn calibration_criterion(conv: SignConvention) -> Result<CriterionResult> {
    let cal = calibrate()?;
    let mismatches = [
        (cal.convention.im_qq, conv.im_qq),
        (cal.convention.im_qp, conv.im_qp),
        (cal.convention.re, conv.re),
        (cal.convention.readout, conv.readout),
    ]
    .iter()
    .filter(|(a, b)| a != b)
    .count();
    Ok(CriterionResult::check(
        "0",
        "sign convention calibration",
        mismatches as f64,
        0.0,
        format!("calibrated {:?}, in use {:?}", cal.convention, conv),
    ))
}

pub fn lg_grid() -> Grid {
    Grid::uniform(2, 256, 12.0).expect("valid grid")
}

fn lg_literal_criterion() -> Result<CriterionResult> {
    let grid = lg_grid();
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for l in [0, 1, 2] {
        let m = moments(&lg_mode(&grid, l, 1.0)?)?;
        worst = worst.max(lg_compatibility(&m, l));
        write!(detail, "l={l}: corr(p_x,y)={:+.4} corr(p_y,x)={:+.4}; ", m.corr_qp(1, 0), m.corr_qp(0, 1)).expect("string");
    }
    Ok(CriterionResult::check("1", "LG equal cross correlations", worst, 1e-3, detail))
}

fn lg_oam_criterion() -> Result<CriterionResult> {
    let grid = lg_grid();
    let mut worst = 0.0f64;
    for l in [-2, -1, 0, 1, 2] {
        let m = moments(&lg_mode(&grid, l, 1.0)?)?;
        worst = worst.max(lg_oam_residual(&m, l));
    }
    Ok(CriterionResult::check(
        "1b",
        "LG angular momentum law",
        worst,
        1e-3,
        "corr(p_x,y) = -l/2, corr(p_y,x) = l/2, l in -2..2".into(),
    ))
}

fn lg_probe_criterion(conv: SignConvention) -> Result<CriterionResult> {
    let cfg = bundled_config("lg_probe")?;
    let sweep = run_sweep_with(&cfg, &[1.0, 0.5, 0.25], conv)?;
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for s in sweep.shift_slopes.iter().filter(|s| s.quadrature == Quadrature::Q) {
        worst = worst.max((s.measured - s.predicted).abs() / s.predicted.abs().max(1e-3));
        write!(detail, "axis {}: {:+.5} vs {:+.5}; ", s.axis, s.measured, s.predicted).expect("string");
    }
    Ok(CriterionResult::check("1c", "LG probe shift slopes", worst, 0.05, detail))
}

fn single_wm_criterion(conv: SignConvention) -> Result<CriterionResult> {
    let cfg = bundled_config("calibration")?;
    let r = run_scaled(&cfg, 1.0, conv)?;
    let lambda = r.lambda1;
    let worst = r.max_residual();
    Ok(CriterionResult::check(
        "2",
        "single weak measurement shifts",
        worst,
        3.0 * lambda * lambda,
        format!("lambda = {lambda}"),
    ))
}

fn single_wm_slope_criterion(conv: SignConvention) -> Result<CriterionResult> {
    let cfg = bundled_config("calibration")?;
    let s = run_sweep_with(&cfg, &[2.0, 1.0, 0.5], conv)?;
    let slope = s.residual_slope.unwrap_or(f64::NAN);
    let mut c = CriterionResult::check(
        "2b",
        "single weak measurement order",
        (slope - 2.0).abs(),
        0.3,
        format!("log-log residual slope {slope:.4} over lambda in 0.1, 0.05, 0.025"),
    );
    c.passed = c.passed && slope.is_finite();
    Ok(c)
}

fn sequential_criterion(conv: SignConvention) -> Result<CriterionResult> {
    let cfg = bundled_config("seq_full")?;
    let r = run_scaled(&cfg, 1.0, conv)?;
    let total = r.lambda1 + r.lambda2;
    Ok(CriterionResult::check(
        "3",
        "sequential shifts",
        r.max_residual(),
        3.0 * total * total,
        format!("lambda1 = {}, lambda2 = {}, 64^3 grid", r.lambda1, r.lambda2),
    ))
}

fn readout_offset_criterion(conv: SignConvention) -> Result<CriterionResult> {
    let cfg = bundled_config("seq_full")?;
    let r = run_scaled(&cfg, 0.0, conv)?;
    let row = r.row(2, Quadrature::P).expect("three axes");
    Ok(CriterionResult::check(
        "3b",
        "readout offset at zero coupling",
        row.residual,
        1e-9,
        format!("shift of <p3> {:+.12} for eigenvalue {:+}", row.shift, r.readout_value.unwrap_or(f64::NAN)),
    ))
}

fn jozsa_criterion(conv: SignConvention) -> Result<CriterionResult> {
    let cfg = bundled_config("jozsa_3d")?;
    let r = run_scaled(&cfg, 1.0, conv)?;
    let a = r.readout_value.unwrap_or(0.0);
    let q2 = r.row(1, Quadrature::Q).expect("axis").shift.abs();
    let q3 = r.row(2, Quadrature::Q).expect("axis").shift.abs();
    let p3 = (r.row(2, Quadrature::P).expect("axis").shift - conv.readout.value() * a).abs();
    let lambda = r.lambda1.abs().max(r.lambda2.abs());
    Ok(CriterionResult::check(
        "4",
        "uncorrelated reduction",
        q2.max(q3).max(p3),
        (3.0 * lambda * lambda).max(1e-6),
        format!("|dq2| = {q2:.2e}, |dq3| = {q3:.2e}, |dp3 - kick| = {p3:.2e}"),
    ))
}

fn real_weak_value_criterion(conv: SignConvention) -> Result<CriterionResult> {
    let cfg = bundled_config("real_weak_value")?;
    let sc = cfg.build()?;
    let r = run_scaled(&cfg, 1.0, conv)?;
    let coupled: Vec<usize> = sc.couplings().map(|c| c.axis).collect();
    let kick = sc.readout.as_ref().map(|ro| (ro.axis, conv.readout.value() * ro.value));
    let mut worst = 0.0f64;
    for row in &r.rows {
        let v = match row.quadrature {
            Quadrature::Q => row.shift,
            Quadrature::P if coupled.contains(&row.axis) => continue,
            Quadrature::P => row.shift - kick.filter(|(ax, _)| *ax == row.axis).map_or(0.0, |(_, k)| k),
        };
        worst = worst.max(v.abs());
    }
    let lambda = sc.couplings().map(|c| c.strength.abs()).fold(0.0, f64::max);
    Ok(CriterionResult::check(
        "5",
        "real weak value null",
        worst,
        (3.0 * lambda * lambda).max(1e-6),
        "position shifts and uncoupled momentum shifts".into(),
    ))
}

fn displacement_gap(phi: &PointerWavefunction) -> Result<f64> {
    let g = phi.grid();
    let shifts: Vec<f64> = (0..g.dims()).map(|a| [3.0, -2.0, 1.0][a] * g.dp(a)).collect();
    let m0 = moments(phi)?;
    let m1 = moments(&displace_momentum(phi, &shifts)?)?;
    Ok(m0.max_cov_diff(&m1))
}

fn displacement_criterion() -> Result<CriterionResult> {
    let gauss = gaussian_pointer(&Grid::uniform(2, 256, 8.0)?, &calibration_pointer_spec())?;
    let g3 = gaussian_pointer(
        &Grid::uniform(3, 64, 8.0)?,
        &crate::pointer::GaussianSpec::new(DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.3, 0.5, 1.0, 0.2, 0.3, 0.2, 1.0])),
    )?;
    let lg = lg_mode(&lg_grid(), 1, 1.0)?;
    let worst = displacement_gap(&gauss)?.max(displacement_gap(&g3)?).max(displacement_gap(&lg)?);
    Ok(CriterionResult::check(
        "6",
        "displacement invariance",
        worst,
        1e-9,
        "correlated Gaussians (2 and 3 axes) and LG l=1".into(),
    ))
}

pub const ENTANGLEMENT_GAMMAS: [f64; 5] = [0.0, 0.05, -0.05, 0.1, -0.1];

fn entanglement_criterion(conv: SignConvention) -> Result<CriterionResult> {
    let grid = Grid::default_for(2, 1.25)?;
    let probe = WeakProbeConfig::imaginary_pauli_z(0.05);
    let mut worst_rel = 0.0f64;
    let mut worst_small = 0.0f64;
    let mut sign_ok = true;
    let mut zero_det = 0.0f64;
    for gamma in ENTANGLEMENT_GAMMAS {
        let phi = two_mode_gaussian(&grid, TwoModeGaussianParams::new(0.25, 0.25, gamma)?)?;
        let direct = c_matrix_direct(&phi)?;
        let rec = c_matrix_from_shifts(&phi, &probe, conv)?;
        for (r, d) in rec.entries.iter().flatten().zip(direct.entries.iter().flatten()) {
            if d.abs() > 1e-3 {
                worst_rel = worst_rel.max(((r - d) / d).abs());
            } else {
                worst_small = worst_small.max((r - d).abs());
            }
        }
        sign_ok &= is_entangled(&rec) == is_entangled(&direct);
        if gamma == 0.0 {
            zero_det = rec.det().abs().max(direct.det().abs());
        }
    }
    let mut c = CriterionResult::check(
        "7",
        "entanglement protocol",
        worst_rel,
        0.05,
        format!("det signs agree: {sign_ok}; |det| at gamma=0: {zero_det:.2e}; small entries off by {worst_small:.2e}"),
    );
    c.passed = c.passed && sign_ok && zero_det <= 1e-6 && worst_small <= 1e-3;
    Ok(c)
}

pub const APPENDIX_SIGMA1: [f64; 3] = [0.8, 1.0, 1.25];
pub const APPENDIX_C12: [f64; 3] = [0.1, 0.2, 0.3];
pub const APPENDIX_SIGMA2: f64 = 1.0;

fn appendix_sweep() -> Result<Vec<crate::fourier_corr::AppendixACheck>> {
    let mut out = Vec::new();
    for s1 in APPENDIX_SIGMA1 {
        for c in APPENDIX_C12 {
            out.push(appendix_a_check(s1, APPENDIX_SIGMA2, c)?);
        }
    }
    Ok(out)
}

fn appendix_literal_criterion() -> Result<CriterionResult> {
    let checks = appendix_sweep()?;
    let worst = checks.iter().map(|c| c.residual).fold(0.0, f64::max);
    let fails = checks.iter().filter(|c| c.residual > 1e-6).count();
    Ok(CriterionResult::check(
        "8",
        "formal moment i c12/sigma1^2",
        worst,
        1e-6,
        format!("{fails} of {} sweep points outside tolerance (sigma2 = {APPENDIX_SIGMA2})", checks.len()),
    ))
}

fn appendix_closed_form_criterion() -> Result<CriterionResult> {
    let checks = appendix_sweep()?;
    let worst = checks.iter().map(|c| c.closed_form_residual).fold(0.0, f64::max);
    Ok(CriterionResult::check(
        "8b",
        "formal moment i c12/sigma2^2",
        worst,
        1e-6,
        format!("same {} sweep points", checks.len()),
    ))
}

fn determinism_criterion(configs: &[ScenarioConfig], first: &[ShiftReport], conv: SignConvention) -> Result<CriterionResult> {
    let second: Vec<ShiftReport> = configs.par_iter().map(|c| run_scaled(c, 1.0, conv)).collect::<Result<_>>()?;
    let mut differing = Vec::new();
    for (a, b) in first.iter().zip(&second) {
        if reports_to_csv([a])? != reports_to_csv([b])? || report_to_json(a)? != report_to_json(b)? {
            differing.push(a.scenario_id.clone());
        }
    }
    Ok(CriterionResult::check(
        "10",
        "deterministic reports",
        differing.len() as f64,
        0.0,
        if differing.is_empty() { format!("{} scenarios byte-identical on rerun", first.len()) } else { format!("differs: {}", differing.join(" ")) },
    ))
}

//! Scenario files, the exact simulation pipeline, strength sweeps and report
//! serialization.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "id": "jozsa_baseline",
//!   "system": { "dimension": 2, "pre": [[1, 0], [1, 0]] },
//!   "pointer": { "kind": "gaussian", "sigma": [[1, 0], [0, 1]], "mean_q": [0.5, 0] },
//!   "interactions": [
//!     { "couplings": [{ "observable": "pauli_z", "axis": 0, "quadrature": "q", "strength": 0.05 }] }
//!   ],
//!   "postselection": { "readout": { "axis": 1, "observable": "pauli_y", "eigen_index": 1 } }
//! }
//! ```
//!
//! Interaction groups run in order; couplings inside one group act
//! simultaneously. Postselection is either `{"direct": target}` with a target
//! of `{"amplitudes": [...]}` or `{"observable": ..., "eigen_index": k}`, or a
//! strong `readout` of an observable on a pointer axis followed by projection
//! onto its `eigen_index`-th eigenvector (ascending eigenvalues).

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{predict_linear, ReadoutTerm, SignConvention, WeakTerm};
use crate::dynamics::{
    apply_couplings, first_order_pointer, make_joint, postselect, strong_readout, CouplingMode, CouplingSpec, Quadrature,
    ReadoutShift,
};
use crate::entanglement::{two_mode_gaussian, TwoModeGaussianParams};
use crate::error::{Error, Result};
use crate::pointer::{gaussian_pointer, lg_mode, moments, GaussianSpec, Grid, MomentSet, PointerWavefunction};
use crate::quantum::{eigendecompose, weak_value, Observable, SystemState};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub system: SystemConfig,
    pub pointer: PointerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    pub interactions: Vec<InteractionGroup>,
    pub postselection: PostselectionConfig,
    #[serde(default = "default_mode")]
    pub mode: CouplingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<f64>>,
}

fn default_mode() -> CouplingMode {
    CouplingMode::Exact
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub dimension: usize,
    /// `[re, im]` per basis state; normalized on load.
    pub pre: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointerConfig {
    Gaussian {
        sigma: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_q: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_p: Option<Vec<f64>>,
    },
    Lg {
        l: i32,
        sigma: f64,
    },
    TwoModeGaussian {
        alpha: f64,
        beta: f64,
        gamma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points: Vec<usize>,
    pub extent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionGroup {
    pub couplings: Vec<CouplingConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub observable: ObservableConfig,
    pub axis: usize,
    pub quadrature: Quadrature,
    pub strength: f64,
}

/// `"pauli_x" | "pauli_y" | "pauli_z"`, `{"diagonal": [...]}` or a full
/// matrix `{"re": [[...]], "im": [[...]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableConfig {
    Named(String),
    Diagonal(DiagonalConfig),
    Matrix(MatrixConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalConfig {
    pub diagonal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PostselectionConfig {
    Direct(TargetConfig),
    Readout(ReadoutConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetConfig {
    Amplitudes(AmplitudesConfig),
    Eigen(EigenConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudesConfig {
    pub amplitudes: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    pub observable: ObservableConfig,
    pub eigen_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    pub axis: usize,
    pub observable: ObservableConfig,
    pub eigen_index: usize,
}

impl ScenarioConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("{origin}:{}:{}", e.line(), e.column()), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| Error::config(origin.clone(), e.to_string()))?;
        Self::from_json(&text, &origin)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Copy with every coupling strength multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut c = self.clone();
        for g in &mut c.interactions {
            for cp in &mut g.couplings {
                cp.strength *= factor;
            }
        }
        c
    }

    /// Checks the document and builds every physical object it describes.
    pub fn build(&self) -> Result<Scenario> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::config("id", "must be non-empty and use [A-Za-z0-9_-]"));
        }
        let dim = self.system.dimension;
        if self.system.pre.len() != dim {
            return Err(Error::config(
                "system.pre",
                format!("{} amplitudes for dimension {dim}", self.system.pre.len()),
            ));
        }
        let pre = state_from(&self.system.pre, "system.pre")?;

        let phi = self.build_pointer()?;
        let d = phi.dims();

        let mut groups = Vec::with_capacity(self.interactions.len());
        for (gi, g) in self.interactions.iter().enumerate() {
            if g.couplings.is_empty() {
                return Err(Error::config(format!("interactions[{gi}].couplings"), "empty group"));
            }
            let mut specs = Vec::with_capacity(g.couplings.len());
            for (ci, cp) in g.couplings.iter().enumerate() {
                let path = format!("interactions[{gi}].couplings[{ci}]");
                let obs = observable_from(&cp.observable, &format!("{path}.observable"))?;
                if obs.dim() != dim {
                    return Err(Error::config(
                        format!("{path}.observable"),
                        format!("dimension {} for a {dim}-level system", obs.dim()),
                    ));
                }
                if cp.axis >= d {
                    return Err(Error::config(format!("{path}.axis"), format!("axis {} on a {d}-axis pointer", cp.axis)));
                }
                if !cp.strength.is_finite() {
                    return Err(Error::config(format!("{path}.strength"), "not finite"));
                }
                specs.push(CouplingSpec::new(obs, cp.axis, cp.quadrature, cp.strength));
            }
            if specs.iter().any(|s| s.quadrature != specs[0].quadrature) {
                return Err(Error::config(
                    format!("interactions[{gi}]"),
                    "simultaneous couplings must share one quadrature",
                ));
            }
            groups.push(specs);
        }

        let (post, readout) = match &self.postselection {
            PostselectionConfig::Direct(TargetConfig::Amplitudes(a)) => {
                if a.amplitudes.len() != dim {
                    return Err(Error::config("postselection.direct.amplitudes", "length differs from system dimension"));
                }
                (state_from(&a.amplitudes, "postselection.direct.amplitudes")?, None)
            }
            PostselectionConfig::Direct(TargetConfig::Eigen(e)) => {
                let (v, _) = eigen_target(&e.observable, e.eigen_index, dim, "postselection.direct")?;
                (v, None)
            }
            PostselectionConfig::Readout(r) => {
                let (v, a) = eigen_target(&r.observable, r.eigen_index, dim, "postselection.readout")?;
                if r.axis >= d {
                    return Err(Error::config("postselection.readout.axis", format!("axis {} on a {d}-axis pointer", r.axis)));
                }
                let obs = observable_from(&r.observable, "postselection.readout.observable")?;
                (v, Some(Readout { axis: r.axis, observable: obs, value: a }))
            }
        };
        if let Some(sw) = &self.sweep {
            validate_multipliers(sw).map_err(|m| Error::config("sweep", m))?;
        }
        Ok(Scenario {
            id: self.id.clone(),
            pre,
            post,
            pointer: phi,
            groups,
            readout,
            mode: self.mode,
        })
    }

    fn build_pointer(&self) -> Result<PointerWavefunction> {
        let grid_for = |default: Result<Grid>| -> Result<Grid> {
            match &self.grid {
                Some(g) => Grid::new(g.points.clone(), g.extent.clone()).map_err(|e| Error::config("grid", e.to_string())),
                None => default,
            }
        };
        let wrap = |e: Error| Error::config("pointer", e.to_string());
        match &self.pointer {
            PointerConfig::Gaussian { sigma, theta, mean_q, mean_p } => {
                let d = sigma.len();
                let sig = square(sigma, "pointer.sigma")?;
                let mut spec = GaussianSpec::new(sig.clone());
                if let Some(t) = theta {
                    let t = square(t, "pointer.theta")?;
                    if t.nrows() != d {
                        return Err(Error::config("pointer.theta", "shape differs from sigma"));
                    }
                    spec = spec.with_theta(t);
                }
                if let Some(m) = mean_q {
                    if m.len() != d {
                        return Err(Error::config("pointer.mean_q", "length differs from sigma"));
                    }
                    spec = spec.with_mean_q(DVector::from_vec(m.clone()));
                }
                if let Some(m) = mean_p {
                    if m.len() != d {
                        return Err(Error::config("pointer.mean_p", "length differs from sigma"));
                    }
                    spec = spec.with_mean_p(DVector::from_vec(m.clone()));
                }
                let scale = (0..d).map(|i| sig[(i, i)].abs().sqrt()).fold(1.0, f64::max);
                let grid = grid_for(Grid::default_for(d, scale).map_err(|e| Error::config("pointer.sigma", e.to_string())))?;
                if grid.dims() != d {
                    return Err(Error::config("grid", format!("{} axes for a {d}-axis pointer", grid.dims())));
                }
                gaussian_pointer(&grid, &spec).map_err(wrap)
            }
            PointerConfig::Lg { l, sigma } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::config("pointer.sigma", "must be positive"));
                }
                let extent = 8.0 * sigma * (1.0 + f64::from(l.unsigned_abs())).sqrt();
                let grid = grid_for(Grid::uniform(2, 256, extent))?;
                lg_mode(&grid, *l, *sigma).map_err(wrap)
            }
            PointerConfig::TwoModeGaussian { alpha, beta, gamma } => {
                let params = TwoModeGaussianParams::new(*alpha, *beta, *gamma).map_err(wrap)?;
                let cov = params.position_covariance();
                let scale = cov[(0, 0)].max(cov[(1, 1)]).sqrt().max(1.0);
                let grid = grid_for(Grid::default_for(2, scale))?;
                two_mode_gaussian(&grid, params).map_err(wrap)
            }
        }
    }
}

fn validate_multipliers(m: &[f64]) -> std::result::Result<(), String> {
    if m.len() < 3 {
        return Err(format!("need at least 3 multipliers, got {}", m.len()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err("multipliers must be finite".into());
    }
    Ok(())
}

fn state_from(amps: &[[f64; 2]], path: &str) -> Result<SystemState> {
    let v: Vec<Complex64> = amps.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
    SystemState::new(&v).map_err(|e| Error::config(path, e.to_string()))
}

fn square(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::config(path, "matrix must be square and non-empty"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn observable_from(cfg: &ObservableConfig, path: &str) -> Result<Observable> {
    let obs = match cfg {
        ObservableConfig::Named(name) => match name.as_str() {
            "pauli_x" => Ok(Observable::pauli_x()),
            "pauli_y" => Ok(Observable::pauli_y()),
            "pauli_z" => Ok(Observable::pauli_z()),
            other => return Err(Error::config(path, format!("unknown observable {other:?}"))),
        },
        ObservableConfig::Diagonal(d) => {
            if d.diagonal.len() < 2 {
                return Err(Error::config(path, "diagonal needs at least 2 entries"));
            }
            Ok(Observable::diagonal(&d.diagonal))
        }
        ObservableConfig::Matrix(m) => {
            let re = square(&m.re, &format!("{path}.re"))?;
            let im = match &m.im {
                Some(im) => square(im, &format!("{path}.im"))?,
                None => DMatrix::zeros(re.nrows(), re.ncols()),
            };
            if im.shape() != re.shape() {
                return Err(Error::config(format!("{path}.im"), "shape differs from re"));
            }
            Observable::new(DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)])))
        }
    };
    obs.map_err(|e| Error::config(path, e.to_string()))
}

fn eigen_target(cfg: &ObservableConfig, index: usize, dim: usize, path: &str) -> Result<(SystemState, f64)> {
    let obs = observable_from(cfg, &format!("{path}.observable"))?;
    if obs.dim() != dim {
        return Err(Error::config(format!("{path}.observable"), format!("dimension {} for a {dim}-level system", obs.dim())));
    }
    if index >= dim {
        return Err(Error::config(format!("{path}.eigen_index"), format!("index {index} of {dim} eigenvectors")));
    }
    let s = eigendecompose(&obs).map_err(|e| Error::config(path, e.to_string()))?;
    Ok((s.eigenvector(index), s.eigenvalues[index]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub axis: usize,
    pub observable: Observable,
    pub value: f64,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub pre: SystemState,
    pub post: SystemState,
    pub pointer: PointerWavefunction,
    pub groups: Vec<Vec<CouplingSpec>>,
    pub readout: Option<Readout>,
    pub mode: CouplingMode,
}

impl Scenario {
    pub fn couplings(&self) -> impl Iterator<Item = &CouplingSpec> {
        self.groups.iter().flatten()
    }

    /// Sum of coupling strengths, the expansion parameter of the first-order
    /// predictions.
    pub fn total_strength(&self) -> f64 {
        self.couplings().map(|c| c.strength.abs()).sum()
    }

    /// Exact (or truncated, per `mode`) evolution and postselection.
    pub fn simulate(&self) -> Result<(PointerWavefunction, f64)> {
        let mut joint = make_joint(&self.pre, &self.pointer);
        for g in &self.groups {
            joint = apply_couplings(&joint, g, self.mode)?;
        }
        if let Some(r) = &self.readout {
            joint = strong_readout(&joint, &r.observable, r.axis)?;
        }
        postselect(&joint, &self.post)
    }

    pub fn first_order(&self) -> Result<PointerWavefunction> {
        let specs: Vec<CouplingSpec> = self.couplings().cloned().collect();
        let ro = self.readout.as_ref().map(|r| ReadoutShift { axis: r.axis, value: r.value });
        first_order_pointer(&self.pre, &self.post, &specs, &self.pointer, ro)
    }

    pub fn weak_terms(&self) -> Result<Vec<WeakTerm>> {
        self.couplings()
            .map(|c| {
                Ok(WeakTerm {
                    axis: c.axis,
                    quadrature: c.quadrature,
                    strength: c.strength,
                    weak_value: weak_value(&c.observable, &self.pre, &self.post)?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub axis: usize,
    pub quadrature: Quadrature,
    pub initial_mean: f64,
    pub final_mean: f64,
    pub shift: f64,
    pub predicted: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub points: Vec<usize>,
    pub extent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakValueEntry {
    pub axis: usize,
    pub quadrature: Quadrature,
    pub strength: f64,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub scenario_id: String,
    pub mode: CouplingMode,
    pub strength_multiplier: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub postselection_probability: f64,
    pub weak_values: Vec<WeakValueEntry>,
    pub readout_value: Option<f64>,
    pub convention: SignConvention,
    pub grid: GridMeta,
    pub rows: Vec<ShiftRow>,
    /// Largest difference between first-order and simulated pointer moments
    /// (means and covariances).
    pub first_order_gap: f64,
    /// Coupled axes with a nonzero same-axis `q`-`p` covariance, whose
    /// variance-derivative term the predictions leave out.
    pub nonstationary_axes: Vec<usize>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl ShiftReport {
    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    pub fn row(&self, axis: usize, quadrature: Quadrature) -> Option<&ShiftRow> {
        self.rows.iter().find(|r| r.axis == axis && r.quadrature == quadrature)
    }

    /// Recomputes `shift` and `residual` from the stored means and checks
    /// them bit-for-bit.
    pub fn verify(&self) -> Result<()> {
        for r in &self.rows {
            let shift = r.final_mean - r.initial_mean;
            let residual = (shift - r.predicted).abs();
            if shift.to_bits() != r.shift.to_bits() || residual.to_bits() != r.residual.to_bits() {
                return Err(Error::InvalidParams(format!(
                    "{}: stored shift/residual of axis {} {:?} do not match recomputation",
                    self.scenario_id, r.axis, r.quadrature
                )));
            }
        }
        Ok(())
    }
}

fn moment_gap(a: &MomentSet, b: &MomentSet) -> f64 {
    (&a.mean_q - &b.mean_q)
        .amax()
        .max((&a.mean_p - &b.mean_p).amax())
        .max(a.max_cov_diff(b))
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ShiftReport> {
    run_scaled(config, 1.0, SignConvention::frozen())
}

/// Runs `config` with strengths multiplied by `multiplier`, predicting with
/// `conv`.
pub fn run_scaled(config: &ScenarioConfig, multiplier: f64, conv: SignConvention) -> Result<ShiftReport> {
    let start = Instant::now();
    let id = config.id.clone();
    let inner = || -> Result<ShiftReport> {
        let sc = config.scaled(multiplier).build()?;
        let m0 = moments(&sc.pointer)?;
        let (ptr, prob) = sc.simulate()?;
        let m1 = moments(&ptr)?;
        let terms = sc.weak_terms()?;
        let ro = sc.readout.as_ref().map(|r| ReadoutTerm { axis: r.axis, value: r.value });
        let pred = predict_linear(&m0, &terms, ro, conv)?;
        let fo = moments(&sc.first_order()?)?;

        let d = m0.dims();
        let mut rows = Vec::with_capacity(2 * d);
        for axis in 0..d {
            for (quadrature, init, fin, predicted) in [
                (Quadrature::Q, m0.mean_q[axis], m1.mean_q[axis], pred.delta_q[axis]),
                (Quadrature::P, m0.mean_p[axis], m1.mean_p[axis], pred.delta_p[axis]),
            ] {
                let shift = fin - init;
                rows.push(ShiftRow {
                    axis,
                    quadrature,
                    initial_mean: init,
                    final_mean: fin,
                    shift,
                    predicted,
                    residual: (shift - predicted).abs(),
                });
            }
        }
        let strengths: Vec<f64> = sc.couplings().map(|c| c.strength).collect();
        let mut nonstationary: Vec<usize> = terms
            .iter()
            .filter(|t| t.weak_value.im != 0.0 && t.strength != 0.0 && m0.corr_qp(t.axis, t.axis).abs() > 1e-9)
            .map(|t| t.axis)
            .collect();
        nonstationary.sort_unstable();
        nonstationary.dedup();
        let grid = sc.pointer.grid();
        Ok(ShiftReport {
            scenario_id: sc.id.clone(),
            mode: sc.mode,
            strength_multiplier: multiplier,
            lambda1: strengths.first().copied().unwrap_or(0.0),
            lambda2: strengths.get(1).copied().unwrap_or(0.0),
            postselection_probability: prob,
            weak_values: terms
                .iter()
                .map(|t| WeakValueEntry {
                    axis: t.axis,
                    quadrature: t.quadrature,
                    strength: t.strength,
                    re: t.weak_value.re,
                    im: t.weak_value.im,
                })
                .collect(),
            readout_value: sc.readout.as_ref().map(|r| r.value),
            convention: conv,
            grid: GridMeta {
                points: grid.points_per_axis().to_vec(),
                extent: grid.extents().to_vec(),
            },
            rows,
            first_order_gap: moment_gap(&m1, &fo),
            nonstationary_axes: nonstationary,
            wall_time: Duration::ZERO,
        })
    };
    let mut report = inner().map_err(|e| e.in_scenario(&id))?;
    report.wall_time = start.elapsed();
    Ok(report)
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSlope {
    pub axis: usize,
    pub quadrature: Quadrature,
    /// d(shift)/d(multiplier) from a linear fit.
    pub measured: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenario_id: String,
    pub multipliers: Vec<f64>,
    pub reports: Vec<ShiftReport>,
    /// Slope of `log(max residual)` against `log(multiplier)`; absent when a
    /// residual is zero or fewer than three multipliers are nonzero.
    pub residual_slope: Option<f64>,
    pub shift_slopes: Vec<RowSlope>,
}

pub fn run_sweep(config: &ScenarioConfig, multipliers: &[f64]) -> Result<SweepReport> {
    run_sweep_with(config, multipliers, SignConvention::frozen())
}

pub fn run_sweep_with(config: &ScenarioConfig, multipliers: &[f64], conv: SignConvention) -> Result<SweepReport> {
    validate_multipliers(multipliers).map_err(|m| Error::config("multipliers", m).in_scenario(&config.id))?;
    let reports: Vec<ShiftReport> = multipliers
        .par_iter()
        .map(|&m| run_scaled(config, m, conv))
        .collect::<Result<_>>()?;

    let logs: Vec<(f64, f64)> = multipliers
        .iter()
        .zip(&reports)
        .filter(|(m, _)| **m != 0.0)
        .map(|(m, r)| (m.abs().ln(), r.max_residual().ln()))
        .collect();
    let residual_slope = if logs.len() >= 3 && logs.iter().all(|(_, y)| y.is_finite()) {
        let (x, y): (Vec<f64>, Vec<f64>) = logs.into_iter().unzip();
        fit_line(&x, &y).map(|(s, _)| s)
    } else {
        None
    };

    let mut shift_slopes = Vec::new();
    if let Some(first) = reports.first() {
        for (i, row) in first.rows.iter().enumerate() {
            let shifts: Vec<f64> = reports.iter().map(|r| r.rows[i].shift).collect();
            let preds: Vec<f64> = reports.iter().map(|r| r.rows[i].predicted).collect();
            if let (Some((measured, _)), Some((predicted, _))) = (fit_line(multipliers, &shifts), fit_line(multipliers, &preds)) {
                shift_slopes.push(RowSlope {
                    axis: row.axis,
                    quadrature: row.quadrature,
                    measured,
                    predicted,
                });
            }
        }
    }
    Ok(SweepReport {
        scenario_id: config.id.clone(),
        multipliers: multipliers.to_vec(),
        reports,
        residual_slope,
        shift_slopes,
    })
}

/// Formats floats with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub const CSV_HEADER: &str = "scenario_id,axis,quadrature,initial_mean,final_mean,shift,predicted,residual,lambda1,lambda2,prob";

fn quad_str(q: Quadrature) -> &'static str {
    match q {
        Quadrature::Q => "q",
        Quadrature::P => "p",
    }
}

pub fn reports_to_csv<'a>(reports: impl IntoIterator<Item = &'a ShiftReport>) -> Result<String> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for rep in reports {
        rep.verify()?;
        for r in &rep.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                rep.scenario_id,
                r.axis,
                quad_str(r.quadrature),
                fmt_f64(r.initial_mean),
                fmt_f64(r.final_mean),
                fmt_f64(r.shift),
                fmt_f64(r.predicted),
                fmt_f64(r.residual),
                fmt_f64(rep.lambda1),
                fmt_f64(rep.lambda2),
                fmt_f64(rep.postselection_probability),
            )
            .expect("write to string");
        }
    }
    Ok(out)
}

struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Compact JSON with every float written to 17 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits);
    value.serialize(&mut ser).expect("report serializes");
    buf.push(b'\n');
    String::from_utf8(buf).expect("utf8")
}

pub fn report_to_json(report: &ShiftReport) -> Result<String> {
    report.verify()?;
    Ok(to_json(report))
}

pub fn sweep_to_json(sweep: &SweepReport) -> Result<String> {
    for r in &sweep.reports {
        r.verify()?;
    }
    Ok(to_json(sweep))
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, stem: &str, csv: &str, json: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.csv")), csv)?;
    fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "id": "minimal",
        "system": { "dimension": 2, "pre": [[1, 0], [1, 0]] },
        "pointer": { "kind": "gaussian", "sigma": [[1, 0], [0, 1]], "mean_q": [0.5, 0] },
        "grid": { "points": [64, 64], "extent": [8, 8] },
        "interactions": [
            { "couplings": [{ "observable": "pauli_z", "axis": 0, "quadrature": "q", "strength": 0.05 }] }
        ],
        "postselection": { "readout": { "axis": 1, "observable": "pauli_y", "eigen_index": 1 } }
    }"#;

    fn minimal() -> ScenarioConfig {
        ScenarioConfig::from_json(MINIMAL, "minimal").unwrap()
    }

    #[test]
    fn parses_and_round_trips() {
        let c = minimal();
        assert_eq!(c.mode, CouplingMode::Exact);
        let again = ScenarioConfig::from_json(&c.to_json(), "again").unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.replace("\"id\": \"minimal\",", "\"id\": \"minimal\", \"colour\": 3,");
        let e = ScenarioConfig::from_json(&bad, "bad").unwrap_err();
        assert!(e.is_config(), "{e}");
        let bad = MINIMAL.replace("\"mean_q\"", "\"mean_x\"");
        assert!(ScenarioConfig::from_json(&bad, "bad").unwrap_err().is_config());
    }

    #[test]
    fn semantic_errors_carry_paths() {
        let bad = MINIMAL.replace("\"axis\": 0", "\"axis\": 5");
        match ScenarioConfig::from_json(&bad, "x").unwrap().build() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "interactions[0].couplings[0].axis"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(ScenarioConfig::from_json(&bad, "x").unwrap().build(), Err(Error::Config { .. })));
        let bad = MINIMAL.replace("pauli_z", "pauli_w");
        assert!(matches!(ScenarioConfig::from_json(&bad, "x").unwrap().build(), Err(Error::Config { .. })));
    }

    #[test]
    fn missing_file_is_config_error() {
        let e = ScenarioConfig::load(Path::new("/nonexistent/scenario.json")).unwrap_err();
        assert!(e.is_config());
    }

    #[test]
    fn run_is_bit_deterministic() {
        let c = minimal();
        let a = run_scenario(&c).unwrap();
        let b = run_scenario(&c).unwrap();
        assert_eq!(reports_to_csv([&a]).unwrap(), reports_to_csv([&b]).unwrap());
        assert_eq!(report_to_json(&a).unwrap(), report_to_json(&b).unwrap());
        assert_eq!(a.rows.len(), 4);
        // (Z)_w = i
        assert!(a.weak_values[0].re.abs() < 1e-12);
        assert!((a.weak_values[0].im - 1.0).abs() < 1e-12);
        assert!(a.row(0, Quadrature::Q).unwrap().residual < 3.0 * 0.05 * 0.05);
    }

    #[test]
    fn verify_catches_tampering() {
        let mut r = run_scenario(&minimal()).unwrap();
        r.rows[0].residual = f64::from_bits(r.rows[0].residual.to_bits() + 1);
        assert!(r.verify().is_err());
        assert!(reports_to_csv([&r]).is_err());
    }

    #[test]
    fn csv_has_seventeen_digits() {
        let r = run_scenario(&minimal()).unwrap();
        let csv = reports_to_csv([&r]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 11);
        let mantissa = first[3].split('e').next().unwrap().trim_start_matches('-').replace('.', "");
        assert_eq!(mantissa.len(), 17);
        assert_eq!(first[3].parse::<f64>().unwrap(), r.rows[0].initial_mean);
    }

    #[test]
    fn sweep_needs_three_multipliers() {
        assert!(matches!(run_sweep(&minimal(), &[1.0, 0.5]), Err(Error::Scenario { .. })));
    }

    #[test]
    fn zero_multiplier_sweep_has_no_slope() {
        let s = run_sweep(&minimal(), &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.residual_slope, None);
        for r in &s.reports {
            assert!(r.max_residual() <= 1e-9);
        }
    }

    #[test]
    fn fit_line_exact() {
        let (m, b) = fit_line(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((m - 2.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14);
        assert_eq!(fit_line(&[1.0, 1.0], &[0.0, 1.0]), None);
    }
}

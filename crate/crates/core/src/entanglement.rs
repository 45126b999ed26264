//! Entanglement test for two-axis pointers based on the cross-moment matrix
//! `C = [[<q1 q2>, <q1 p2>], [<p1 q2>, <p1 p2>]]`, either computed directly or
//! reconstructed from simulated weak-measurement shifts.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::SignConvention;
use crate::dynamics::{apply_couplings, make_joint, postselect, strong_readout, CouplingMode, CouplingSpec, Quadrature};
use crate::error::{Error, Result};
use crate::pointer::{gaussian_pointer, moments, GaussianSpec, Grid, PointerWavefunction};
use crate::quantum::{c, weak_value, Observable, SystemState};

pub const DET_TOLERANCE: f64 = 1e-6;
pub const MIN_IMAGINARY_WEAK_VALUE: f64 = 1e-6;

/// Centered cross-moment block between modes 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    pub entries: [[f64; 2]; 2],
}

impl CMatrix {
    pub fn q1q2(&self) -> f64 {
        self.entries[0][0]
    }

    pub fn q1p2(&self) -> f64 {
        self.entries[0][1]
    }

    pub fn p1q2(&self) -> f64 {
        self.entries[1][0]
    }

    pub fn p1p2(&self) -> f64 {
        self.entries[1][1]
    }

    pub fn det(&self) -> f64 {
        Matrix2::new(self.q1q2(), self.q1p2(), self.p1q2(), self.p1p2()).determinant()
    }
}

/// `exp[-(alpha q1^2 + beta q2^2 + 2 gamma q1 q2)]`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeGaussianParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl TwoModeGaussianParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let p = Self { alpha, beta, gamma };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        let finite = self.alpha.is_finite() && self.beta.is_finite() && self.gamma.is_finite();
        if !finite || self.alpha <= 0.0 || self.beta <= 0.0 || self.alpha * self.beta <= self.gamma * self.gamma {
            return Err(Error::InvalidParams(format!(
                "two-mode Gaussian needs alpha, beta > 0 and alpha beta > gamma^2 (alpha={}, beta={}, gamma={})",
                self.alpha, self.beta, self.gamma
            )));
        }
        Ok(())
    }

    /// Position covariance `(4 A)^{-1}` with `A = [[alpha, gamma], [gamma, beta]]`.
    pub fn position_covariance(&self) -> DMatrix<f64> {
        let det = 4.0 * (self.alpha * self.beta - self.gamma * self.gamma);
        DMatrix::from_row_slice(2, 2, &[self.beta, -self.gamma, -self.gamma, self.alpha]) / det
    }
}

pub fn two_mode_gaussian(grid: &Grid, params: TwoModeGaussianParams) -> Result<PointerWavefunction> {
    params.check()?;
    if grid.dims() != 2 {
        return Err(Error::Dimension(format!("two-mode Gaussian needs 2 axes, got {}", grid.dims())));
    }
    gaussian_pointer(grid, &GaussianSpec::new(params.position_covariance()))
}

pub fn c_matrix_direct(phi: &PointerWavefunction) -> Result<CMatrix> {
    if phi.dims() != 2 {
        return Err(Error::Dimension(format!("C matrix needs 2 axes, got {}", phi.dims())));
    }
    let m = moments(phi)?;
    Ok(CMatrix {
        entries: [[m.corr_qq(0, 1), m.corr_qp(0, 1)], [m.corr_qp(1, 0), m.corr_pp(0, 1)]],
    })
}

/// Weak probe used to read out the C matrix: a system observable coupled to
/// mode 1 with strength `lambda`, pre- and postselected so that its weak
/// value is complex. With `readout` set, postselection goes through a strong
/// unit coupling of that observable to `q2` instead of a direct projection;
/// `post` must then be one of its eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakProbeConfig {
    pub observable: Observable,
    pub pre: SystemState,
    pub post: SystemState,
    pub lambda: f64,
    pub readout: Option<Observable>,
    pub mode: CouplingMode,
}

impl WeakProbeConfig {
    /// Pauli-Z between `|+>` and `(|0> + i|1>)/sqrt2`, for which `(Z)_w = i`.
    pub fn imaginary_pauli_z(lambda: f64) -> Self {
        Self {
            observable: Observable::pauli_z(),
            pre: SystemState::new(&[c(1.0, 0.0), c(1.0, 0.0)]).expect("nonzero"),
            post: SystemState::new(&[c(1.0, 0.0), c(0.0, 1.0)]).expect("nonzero"),
            lambda,
            readout: None,
            mode: CouplingMode::Exact,
        }
    }

    pub fn weak_value(&self) -> Result<Complex64> {
        weak_value(&self.observable, &self.pre, &self.post)
    }

    fn readout_value(&self) -> Result<Option<f64>> {
        let Some(r) = &self.readout else { return Ok(None) };
        let v = self.post.as_vector();
        let rv = r.matrix() * v;
        let a = v.dotc(&rv).re;
        if (rv - v * Complex64::new(a, 0.0)).norm() > 1e-9 {
            return Err(Error::InvalidState("postselected state is not an eigenvector of the readout observable".into()));
        }
        Ok(Some(a))
    }
}

/// Which entry of C one experiment measures.
#[derive(Debug, Clone, Copy)]
struct Leg {
    row: usize,
    col: usize,
    coupled: Quadrature,
    measured: Quadrature,
}

const LEGS: [Leg; 4] = [
    Leg { row: 0, col: 0, coupled: Quadrature::Q, measured: Quadrature::Q },
    Leg { row: 0, col: 1, coupled: Quadrature::Q, measured: Quadrature::P },
    Leg { row: 1, col: 0, coupled: Quadrature::P, measured: Quadrature::Q },
    Leg { row: 1, col: 1, coupled: Quadrature::P, measured: Quadrature::P },
];

/// Reconstructs C from four simulated experiments: the probe couples to `q1`
/// (first row) or `p1` (second row) and the shift of `<q2>` or `<p2>` is
/// divided by the first-order factor `2 lambda Im(A)_w`, signed by `conv`.
pub fn c_matrix_from_shifts(phi: &PointerWavefunction, probe: &WeakProbeConfig, conv: SignConvention) -> Result<CMatrix> {
    if phi.dims() != 2 {
        return Err(Error::Dimension(format!("C matrix needs 2 axes, got {}", phi.dims())));
    }
    let w = probe.weak_value()?;
    if w.im.abs() < MIN_IMAGINARY_WEAK_VALUE {
        return Err(Error::UnusableProbe { im: w.im });
    }
    if !(probe.lambda.is_finite() && probe.lambda != 0.0) {
        return Err(Error::InvalidParams(format!("probe strength must be finite and nonzero, got {}", probe.lambda)));
    }
    let kick = probe.readout_value()?;
    let m0 = moments(phi)?;

    let values: Vec<Result<(Leg, f64)>> = LEGS
        .par_iter()
        .map(|&leg| {
            let joint = make_joint(&probe.pre, phi);
            let spec = CouplingSpec::new(probe.observable.clone(), 0, leg.coupled, probe.lambda);
            let mut joint = apply_couplings(&joint, &[spec], probe.mode)?;
            if let Some(r) = &probe.readout {
                joint = strong_readout(&joint, r, 1)?;
            }
            let (ptr, _) = postselect(&joint, &probe.post)?;
            let m = moments(&ptr)?;
            let shift = match leg.measured {
                Quadrature::Q => m.mean_q[1] - m0.mean_q[1],
                Quadrature::P => m.mean_p[1] - m0.mean_p[1] - kick.map_or(0.0, |a| conv.readout.value() * a),
            };
            let sign = if leg.coupled == leg.measured { conv.im_qq } else { conv.im_qp };
            Ok((leg, shift / (sign.value() * 2.0 * probe.lambda * w.im)))
        })
        .collect();

    let mut entries = [[0.0; 2]; 2];
    for v in values {
        let (leg, x) = v?;
        entries[leg.row][leg.col] = x;
    }
    Ok(CMatrix { entries })
}

pub fn is_entangled(c: &CMatrix) -> bool {
    c.det() < -DET_TOLERANCE
}

//! Finite-dimensional system side: normalized states, Hermitian observables,
//! their spectra, and weak values.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Smallest `|<post|pre>|` for which a weak value is reported.
pub const OVERLAP_FLOOR: f64 = 1e-8;

const HERMITIAN_TOL: f64 = 1e-12;

/// Largest system dimension accepted by scenario configs.
pub const MAX_SYSTEM_DIM: usize = 16;

/// Unit-norm pure state of a `d >= 2` level system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    amplitudes: DVector<Complex64>,
}

impl SystemState {
    pub fn new(amplitudes: &[Complex64]) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::InvalidState(format!(
                "dimension {} < 2",
                amplitudes.len()
            )));
        }
        let v = DVector::from_column_slice(amplitudes);
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidState("zero or non-finite vector".into()));
        }
        Ok(Self {
            amplitudes: v.unscale(norm),
        })
    }

    /// Computational basis state `|k>`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::InvalidState(format!("basis index {k} >= {dim}")));
        }
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        v[k] = Complex64::new(1.0, 0.0);
        Self::new(&v)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        self.amplitudes.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    /// `<self|other>`
    pub fn inner(&self, other: &SystemState) -> Result<Complex64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn with_global_phase(&self, angle: f64) -> Self {
        Self {
            amplitudes: self.amplitudes.map(|a| a * Complex64::from_polar(1.0, angle)),
        }
    }
}

/// Hermitian operator on the system space.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: DMatrix<Complex64>,
}

impl Observable {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidObservable(format!(
                "{}x{} matrix is not square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let dev = (&matrix - matrix.adjoint()).camax();
        if dev.is_nan() || dev > HERMITIAN_TOL {
            return Err(Error::InvalidObservable(format!(
                "max |M - M^dagger| = {dev:e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn from_rows(rows: &[&[Complex64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidObservable("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn pauli_x() -> Self {
        let (o, l) = (c(0.0, 0.0), c(1.0, 0.0));
        Self::from_rows(&[&[o, l], &[l, o]]).unwrap()
    }

    pub fn pauli_y() -> Self {
        let (o, i) = (c(0.0, 0.0), c(0.0, 1.0));
        Self::from_rows(&[&[o, -i], &[i, o]]).unwrap()
    }

    pub fn pauli_z() -> Self {
        Self::diagonal(&[1.0, -1.0])
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let d = DVector::from_iterator(values.len(), values.iter().map(|&v| c(v, 0.0)));
        Self {
            matrix: DMatrix::from_diagonal(&d),
        }
    }

    /// `value |s><s| + complement (1 - |s><s|)`: a two-outcome readout
    /// observable that has `s` as a nondegenerate eigenvector.
    pub fn split_on(state: &SystemState, value: f64, complement: f64) -> Self {
        let v = state.as_vector();
        let proj = v * v.adjoint();
        let id = DMatrix::<Complex64>::identity(v.len(), v.len());
        let matrix = proj.scale(value) + (id - &proj).scale(complement);
        let matrix = (&matrix + matrix.adjoint()).scale(0.5);
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: self.matrix.scale(factor),
        }
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_radius(&self) -> f64 {
        eigendecompose(self)
            .map(|s| s.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .unwrap_or(f64::NAN)
    }
}

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<Complex64>,
}

impl Spectrum {
    pub fn eigenvector(&self, k: usize) -> SystemState {
        let col: Vec<Complex64> = self.eigenvectors.column(k).iter().copied().collect();
        SystemState::new(&col).expect("eigenvectors are unit columns")
    }

    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let lambda = DMatrix::from_diagonal(&DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&v| c(v, 0.0)),
        ));
        &self.eigenvectors * lambda * self.eigenvectors.adjoint()
    }
}

pub fn make_state(amplitudes: &[Complex64]) -> Result<SystemState> {
    SystemState::new(amplitudes)
}

pub fn eigendecompose(a: &Observable) -> Result<Spectrum> {
    let m = a.matrix();
    let dev = (m - m.adjoint()).camax();
    if dev.is_nan() || dev > HERMITIAN_TOL {
        return Err(Error::InvalidObservable(format!(
            "max |M - M^dagger| = {dev:e}"
        )));
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// `<post|A|pre> / <post|pre>`.
pub fn weak_value(a: &Observable, pre: &SystemState, post: &SystemState) -> Result<Complex64> {
    check_dims(a.dim(), pre.dim())?;
    check_dims(a.dim(), post.dim())?;
    let overlap = post.inner(pre)?;
    if overlap.norm() < OVERLAP_FLOOR {
        return Err(Error::NearOrthogonalPostselection {
            overlap: overlap.norm(),
        });
    }
    let num = post.as_vector().dotc(&(a.matrix() * pre.as_vector()));
    Ok(num / overlap)
}

/// `<s|A|s>`; the imaginary part is roundoff for Hermitian `A` and is dropped.
pub fn expectation(a: &Observable, s: &SystemState) -> Result<f64> {
    check_dims(a.dim(), s.dim())?;
    Ok(s.as_vector().dotc(&(a.matrix() * s.as_vector())).re)
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{a} vs {b}")));
    }
    Ok(())
}

#[inline]
pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

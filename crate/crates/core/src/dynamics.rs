//! Joint system-pointer states, von Neumann couplings, strong readout and
//! postselection.
//!
//! Every exact evolution is `exp(-i lambda A (x) xi)` with `xi` a pointer
//! quadrature. In the representation where `xi` is diagonal this is a d x d
//! unitary per grid point.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointer::{displace_momentum, Grid, PointerWavefunction, Representation};
use crate::quantum::{eigendecompose, weak_value, Observable, SystemState};
use crate::spectral::{self, Direction};

/// Postselection probabilities below this are treated as failures.
pub const MIN_POSTSELECTION_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    Q,
    P,
}

impl Quadrature {
    pub fn representation(self) -> Representation {
        match self {
            Quadrature::Q => Representation::Position,
            Quadrature::P => Representation::Momentum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    Exact,
    FirstOrder,
}

/// One term `lambda A (x) xi_axis` of an interaction Hamiltonian integrated
/// over the interaction time.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    pub observable: Observable,
    pub axis: usize,
    pub quadrature: Quadrature,
    pub strength: f64,
}

impl CouplingSpec {
    pub fn new(observable: Observable, axis: usize, quadrature: Quadrature, strength: f64) -> Self {
        Self {
            observable,
            axis,
            quadrature,
            strength,
        }
    }

    pub fn q(observable: Observable, axis: usize, strength: f64) -> Self {
        Self::new(observable, axis, Quadrature::Q, strength)
    }

    pub fn p(observable: Observable, axis: usize, strength: f64) -> Self {
        Self::new(observable, axis, Quadrature::P, strength)
    }
}

/// Momentum kick `exp(-i a q_axis)` left on the pointer by a unit-strength
/// readout after postselecting the eigenvector with eigenvalue `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutShift {
    pub axis: usize,
    pub value: f64,
}

/// System (x) pointer amplitudes, stored point-major: `amps[point * d + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    grid: Grid,
    dim: usize,
    amps: Vec<Complex64>,
    reps: Vec<Representation>,
    truncated: bool,
}

impl JointState {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn system_dim(&self) -> usize {
        self.dim
    }

    pub fn representations(&self) -> &[Representation] {
        &self.reps
    }

    /// Set once a first-order (non-unitary, renormalized) step has been applied.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    fn cell_volume(&self) -> f64 {
        self.reps
            .iter()
            .enumerate()
            .map(|(a, r)| match r {
                Representation::Position => self.grid.dq(a),
                Representation::Momentum => self.grid.dp(a),
            })
            .product()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.cell_volume()
    }

    /// Diagonal of the reduced system density matrix.
    pub fn system_populations(&self) -> Vec<f64> {
        let dv = self.cell_volume();
        let mut pops = vec![0.0; self.dim];
        for chunk in self.amps.chunks(self.dim) {
            for (p, a) in pops.iter_mut().zip(chunk) {
                *p += a.norm_sqr() * dv;
            }
        }
        pops
    }

    fn set_axis_representation(&mut self, axis: usize, rep: Representation) {
        if self.reps[axis] == rep {
            return;
        }
        let dir = match rep {
            Representation::Position => Direction::ToPosition,
            Representation::Momentum => Direction::ToMomentum,
        };
        spectral::transform_axis(&mut self.amps, &self.grid, axis, self.dim, dir);
        self.reps[axis] = rep;
    }

    fn to_position(&self) -> Self {
        let mut out = self.clone();
        for axis in 0..self.grid.dims() {
            out.set_axis_representation(axis, Representation::Position);
        }
        out
    }
}

pub fn make_joint(s: &SystemState, phi: &PointerWavefunction) -> JointState {
    let dim = s.dim();
    let mut amps = Vec::with_capacity(phi.amplitudes().len() * dim);
    for a in phi.amplitudes() {
        amps.extend(s.amplitudes().iter().map(|c| c * a));
    }
    JointState {
        grid: phi.grid().clone(),
        dim,
        amps,
        reps: vec![phi.representation(); phi.dims()],
        truncated: false,
    }
}

fn validate_specs(state_dim: usize, grid: &Grid, specs: &[CouplingSpec]) -> Result<()> {
    let quad = specs[0].quadrature;
    for s in specs {
        if s.quadrature != quad {
            return Err(Error::Representation);
        }
        if s.axis >= grid.dims() {
            return Err(Error::Dimension(format!(
                "coupling axis {} on a {}-axis grid",
                s.axis,
                grid.dims()
            )));
        }
        if s.observable.dim() != state_dim {
            return Err(Error::Dimension(format!(
                "observable of dimension {} on a {}-level system",
                s.observable.dim(),
                state_dim
            )));
        }
        if !s.strength.is_finite() {
            return Err(Error::InvalidParams(format!("strength {}", s.strength)));
        }
    }
    Ok(())
}

/// Applies `exp(-i sum_k lambda_k A_k (x) xi_k)` (exact) or its first-order
/// truncation followed by renormalization. All `specs` must couple to the
/// same kind of quadrature.
pub fn apply_couplings(state: &JointState, specs: &[CouplingSpec], mode: CouplingMode) -> Result<JointState> {
    if specs.is_empty() {
        return Ok(state.clone());
    }
    validate_specs(state.dim, &state.grid, specs)?;
    let rep = specs[0].quadrature.representation();
    let mut out = state.clone();
    for s in specs {
        out.set_axis_representation(s.axis, rep);
    }
    let xi: Vec<Vec<f64>> = specs
        .iter()
        .map(|s| out.grid.coordinates(s.axis, rep))
        .collect();
    let d = out.dim;

    match mode {
        CouplingMode::Exact if specs.len() == 1 => {
            let spec = &specs[0];
            let spectrum = eigendecompose(&spec.observable)?;
            let v = &spectrum.eigenvectors;
            let vh = v.adjoint();
            let lambda = spec.strength;
            let coords = &xi[0];
            out.amps.par_chunks_mut(d).enumerate().for_each(|(i, chunk)| {
                let col = DVector::from_column_slice(chunk);
                let mut w = &vh * col;
                for (j, wj) in w.iter_mut().enumerate() {
                    *wj *= Complex64::from_polar(1.0, -lambda * coords[i] * spectrum.eigenvalues[j]);
                }
                chunk.copy_from_slice((v * w).as_slice());
            });
        }
        CouplingMode::Exact => {
            let mats: Vec<DMatrix<Complex64>> = specs
                .iter()
                .map(|s| s.observable.matrix().scale(s.strength))
                .collect();
            out.amps.par_chunks_mut(d).enumerate().for_each(|(i, chunk)| {
                let mut gen = DMatrix::<Complex64>::zeros(d, d);
                for (m, x) in mats.iter().zip(&xi) {
                    gen += m.scale(x[i]);
                }
                let gen = (&gen + gen.adjoint()).scale(0.5);
                let eig = gen.symmetric_eigen();
                let phases = DVector::from_iterator(
                    d,
                    eig.eigenvalues.iter().map(|&mu| Complex64::from_polar(1.0, -mu)),
                );
                let col = DVector::from_column_slice(chunk);
                let w = eig.eigenvectors.adjoint() * col;
                let w = w.component_mul(&phases);
                chunk.copy_from_slice((&eig.eigenvectors * w).as_slice());
            });
        }
        CouplingMode::FirstOrder => {
            let mats: Vec<DMatrix<Complex64>> = specs
                .iter()
                .map(|s| s.observable.matrix().scale(s.strength))
                .collect();
            let minus_i = Complex64::new(0.0, -1.0);
            out.amps.par_chunks_mut(d).enumerate().for_each(|(i, chunk)| {
                let col = DVector::from_column_slice(chunk);
                let mut acc = col.clone();
                for (m, x) in mats.iter().zip(&xi) {
                    acc += (m * &col) * (minus_i * x[i]);
                }
                chunk.copy_from_slice(acc.as_slice());
            });
            let norm = out.norm();
            let inv = 1.0 / norm.sqrt();
            out.amps.iter_mut().for_each(|a| *a *= inv);
            out.truncated = true;
        }
    }
    Ok(out)
}

/// Unit-strength coupling of `a3` to `q_axis`, realizing a projective
/// measurement of `a3` on that pointer axis.
pub fn strong_readout(state: &JointState, a3: &Observable, axis: usize) -> Result<JointState> {
    apply_couplings(
        state,
        &[CouplingSpec::q(a3.clone(), axis, 1.0)],
        CouplingMode::Exact,
    )
}

/// Projects the system onto `target`; returns the renormalized pointer (in
/// position representation) and the success probability.
pub fn postselect(state: &JointState, target: &SystemState) -> Result<(PointerWavefunction, f64)> {
    if target.dim() != state.dim {
        return Err(Error::Dimension(format!(
            "target of dimension {} for a {}-level system",
            target.dim(),
            state.dim
        )));
    }
    let pos = state.to_position();
    let t = target.amplitudes();
    let amps: Vec<Complex64> = pos
        .amps
        .chunks(state.dim)
        .map(|chunk| chunk.iter().zip(t).map(|(a, tc)| tc.conj() * a).sum())
        .collect();
    let dv = pos.grid.cell_volume(Representation::Position);
    let probability = amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * dv;
    if probability.is_nan() || probability < MIN_POSTSELECTION_PROBABILITY {
        return Err(Error::PostselectionFailed { probability });
    }
    let phi = PointerWavefunction::new(pos.grid.clone(), amps, Representation::Position)?;
    Ok((phi, probability))
}

/// Builds the postselected pointer directly from weak values:
/// `(1 - i sum_k lambda_k (A_k)_w xi_k)` applied after the readout kick,
/// then renormalized. No system degrees of freedom are simulated.
pub fn first_order_pointer(
    pre: &SystemState,
    post: &SystemState,
    specs: &[CouplingSpec],
    phi: &PointerWavefunction,
    readout: Option<ReadoutShift>,
) -> Result<PointerWavefunction> {
    let grid = phi.grid().clone();
    let mut base = phi.to_position();
    if let Some(r) = readout {
        if r.axis >= grid.dims() {
            return Err(Error::Dimension(format!("readout axis {}", r.axis)));
        }
        let mut shifts = vec![0.0; grid.dims()];
        shifts[r.axis] = -r.value;
        base = displace_momentum(&base, &shifts)?;
    }
    let mut out = base.amplitudes().to_vec();
    for s in specs {
        if s.axis >= grid.dims() {
            return Err(Error::Dimension(format!("coupling axis {}", s.axis)));
        }
        let w = weak_value(&s.observable, pre, post)?;
        let factor = Complex64::new(0.0, -1.0) * w * s.strength;
        let xi_phi: Vec<Complex64> = match s.quadrature {
            Quadrature::Q => {
                let q = grid.coordinates(s.axis, Representation::Position);
                base.amplitudes().iter().zip(&q).map(|(a, x)| a * x).collect()
            }
            Quadrature::P => spectral::momentum_operator(base.amplitudes(), &grid, s.axis),
        };
        for (o, x) in out.iter_mut().zip(&xi_phi) {
            *o += factor * x;
        }
    }
    PointerWavefunction::new(grid, out, Representation::Position)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointer::{gaussian_pointer, moments, GaussianSpec};
    use crate::quantum::c;
    use approx::assert_abs_diff_eq;

    fn plus() -> SystemState {
        SystemState::new(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap()
    }

    fn gaussian_2d(s12: f64) -> PointerWavefunction {
        let grid = Grid::uniform(2, 128, 8.0).unwrap();
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, s12, s12, 1.0]);
        gaussian_pointer(&grid, &GaussianSpec::new(sigma)).unwrap()
    }

    #[test]
    fn product_state_basics() {
        let phi = gaussian_2d(0.4);
        let s = SystemState::new(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let joint = make_joint(&s, &phi);
        assert_abs_diff_eq!(joint.norm(), 1.0, epsilon = 1e-12);
        let pops = joint.system_populations();
        assert_abs_diff_eq!(pops[0], 0.36, epsilon = 1e-12);
        assert_abs_diff_eq!(pops[1], 0.64, epsilon = 1e-12);

        let (back, prob) = postselect(&joint, &s).unwrap();
        assert_abs_diff_eq!(prob, 1.0, epsilon = 1e-12);
        let m0 = moments(&phi).unwrap();
        let m1 = moments(&back).unwrap();
        assert!(m0.max_cov_diff(&m1) < 1e-12);
    }

    #[test]
    fn orthogonal_target_fails() {
        let phi = gaussian_2d(0.0);
        let joint = make_joint(&SystemState::basis(2, 0).unwrap(), &phi);
        assert!(matches!(
            postselect(&joint, &SystemState::basis(2, 1).unwrap()),
            Err(Error::PostselectionFailed { .. })
        ));
    }

    #[test]
    fn zero_strength_is_identity() {
        let phi = gaussian_2d(0.3);
        let joint = make_joint(&plus(), &phi);
        let out = apply_couplings(&joint, &[CouplingSpec::q(Observable::pauli_x(), 0, 0.0)], CouplingMode::Exact).unwrap();
        let err = out.amps.iter().zip(&joint.amps).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-14);
        let out = strong_readout(&joint, &Observable::zero(2), 1).unwrap();
        let err = out.amps.iter().zip(&joint.amps).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-14);
    }

    #[test]
    fn diagonal_coupling_is_a_pure_phase() {
        let phi = gaussian_2d(0.3);
        let joint = make_joint(&plus(), &phi);
        let lambda = 0.7;
        let out = apply_couplings(&joint, &[CouplingSpec::q(Observable::pauli_z(), 0, lambda)], CouplingMode::Exact).unwrap();
        let q = joint.grid.coordinates(0, Representation::Position);
        for (i, (a, b)) in out.amps.chunks(2).zip(joint.amps.chunks(2)).enumerate() {
            let ph0 = Complex64::from_polar(1.0, -lambda * q[i]);
            assert!((a[0] - b[0] * ph0).norm() < 1e-14);
            assert!((a[1] - b[1] * ph0.conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn exact_evolution_is_unitary() {
        let phi = gaussian_2d(0.5);
        let joint = make_joint(&plus(), &phi);
        let specs = [
            CouplingSpec::p(Observable::pauli_x(), 0, 0.3),
            CouplingSpec::p(Observable::pauli_y(), 1, 0.2),
        ];
        let out = apply_couplings(&joint, &specs, CouplingMode::Exact).unwrap();
        assert_abs_diff_eq!(out.norm(), 1.0, epsilon = 1e-10);
        assert!(!out.is_truncated());
        let fo = apply_couplings(&joint, &specs, CouplingMode::FirstOrder).unwrap();
        assert!(fo.is_truncated());
        assert_abs_diff_eq!(fo.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mixed_quadratures_rejected() {
        let joint = make_joint(&plus(), &gaussian_2d(0.0));
        let specs = [
            CouplingSpec::q(Observable::pauli_x(), 0, 0.1),
            CouplingSpec::p(Observable::pauli_x(), 1, 0.1),
        ];
        assert_eq!(apply_couplings(&joint, &specs, CouplingMode::Exact), Err(Error::Representation));
    }

    #[test]
    fn couplings_on_different_axes_commute() {
        let joint = make_joint(&plus(), &gaussian_2d(0.5));
        let a = CouplingSpec::q(Observable::pauli_x(), 0, 0.3);
        let b = CouplingSpec::q(Observable::pauli_y(), 1, 0.2);
        // same observable on commuting quadratures, and commuting observables
        let ab = apply_couplings(&apply_couplings(&joint, std::slice::from_ref(&a), CouplingMode::Exact).unwrap(), std::slice::from_ref(&a), CouplingMode::Exact).unwrap();
        let joint_ab = apply_couplings(&joint, &[a.clone(), CouplingSpec::q(Observable::pauli_x(), 0, 0.3)], CouplingMode::Exact).unwrap();
        let err = ab.amps.iter().zip(&joint_ab.amps).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10);

        let z1 = CouplingSpec::q(Observable::pauli_z(), 0, 0.3);
        let z2 = CouplingSpec::q(Observable::diagonal(&[0.5, 2.0]), 1, 0.2);
        let s12 = apply_couplings(&apply_couplings(&joint, std::slice::from_ref(&z1), CouplingMode::Exact).unwrap(), std::slice::from_ref(&z2), CouplingMode::Exact).unwrap();
        let s21 = apply_couplings(&apply_couplings(&joint, &[z2], CouplingMode::Exact).unwrap(), &[z1], CouplingMode::Exact).unwrap();
        let err = s12.amps.iter().zip(&s21.amps).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10);
        let _ = b;
    }

    #[test]
    fn readout_of_eigenstate_kicks_momentum_by_eigenvalue() {
        let phi = gaussian_2d(0.0);
        let proj = Observable::diagonal(&[0.0, 1.0]);
        let joint = make_joint(&SystemState::basis(2, 1).unwrap(), &phi);
        let out = strong_readout(&joint, &proj, 1).unwrap();
        let (ptr, prob) = postselect(&out, &SystemState::basis(2, 1).unwrap()).unwrap();
        assert_abs_diff_eq!(prob, 1.0, epsilon = 1e-12);
        let m = moments(&ptr).unwrap();
        // exp(-i a q) convention: the kick is -a
        assert_abs_diff_eq!(m.mean_p[1], -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(m.mean_p[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn readout_splits_branches() {
        let phi = gaussian_2d(0.0);
        let a3 = Observable::diagonal(&[-0.5, 1.5]);
        let out = strong_readout(&make_joint(&plus(), &phi), &a3, 1).unwrap();
        for (k, a) in [(0, -0.5), (1, 1.5)] {
            let (ptr, prob) = postselect(&out, &SystemState::basis(2, k).unwrap()).unwrap();
            assert_abs_diff_eq!(prob, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(moments(&ptr).unwrap().mean_p[1], -a, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_coupling_probability_is_overlap() {
        let phi = gaussian_2d(0.2);
        let post = SystemState::new(&[c(0.8, 0.0), c(0.0, 0.6)]).unwrap();
        let joint = make_joint(&plus(), &phi);
        let out = apply_couplings(&joint, &[CouplingSpec::q(Observable::pauli_x(), 0, 0.0)], CouplingMode::Exact).unwrap();
        let (_, prob) = postselect(&out, &post).unwrap();
        assert_abs_diff_eq!(prob, post.inner(&plus()).unwrap().norm_sqr(), epsilon = 1e-12);
    }

    #[test]
    fn weak_coupling_probability_is_overlap_to_first_order() {
        let phi = gaussian_2d(0.0);
        let post = SystemState::new(&[c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        let lambda = 0.05;
        let joint = make_joint(&plus(), &phi);
        let out = apply_couplings(&joint, &[CouplingSpec::q(Observable::pauli_z(), 0, lambda)], CouplingMode::Exact).unwrap();
        let (_, prob) = postselect(&out, &post).unwrap();
        // <q1> = 0, so the O(lambda) correction vanishes and only O(lambda^2) remains
        assert!((prob - 0.5).abs() < lambda * lambda);
    }

    #[test]
    fn first_order_pointer_without_coupling_is_readout_shift() {
        let phi = gaussian_2d(0.3);
        let out = first_order_pointer(
            &plus(),
            &SystemState::basis(2, 0).unwrap(),
            &[CouplingSpec::q(Observable::pauli_x(), 0, 0.0)],
            &phi,
            Some(ReadoutShift { axis: 1, value: 1.0 }),
        )
        .unwrap();
        let expected = displace_momentum(&phi, &[0.0, -1.0]).unwrap();
        let err = out.amplitudes().iter().zip(expected.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn real_weak_value_keeps_position_density_at_first_order() {
        let phi = gaussian_2d(0.4);
        let zero = SystemState::basis(2, 0).unwrap();
        let lambda = 0.01;
        let out = first_order_pointer(&plus(), &zero, &[CouplingSpec::q(Observable::pauli_x(), 0, lambda)], &phi, None).unwrap();
        let m0 = moments(&phi).unwrap();
        let m1 = moments(&out).unwrap();
        assert!((&m1.mean_q - &m0.mean_q).amax() < lambda * lambda);
        assert_abs_diff_eq!(m1.mean_p[0] - m0.mean_p[0], -lambda, epsilon = lambda * lambda);
    }
}

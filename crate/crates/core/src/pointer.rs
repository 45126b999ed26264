//! Pointer wavefunctions on rectangular grids and their moment functionals.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, Direction};

const NORM_TOL: f64 = 1e-9;
const COVERAGE_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Position,
    Momentum,
}

/// Rectangular sampling of a 1-3 axis pointer. Axis `j` has `points[j]`
/// samples on `[-L_j, L_j)` with `dq_j dp_j N_j = 2 pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<usize>,
    extent: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<usize>, extent: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() > 3 {
            return Err(Error::InvalidGrid(format!("{} axes, need 1-3", points.len())));
        }
        if points.len() != extent.len() {
            return Err(Error::InvalidGrid("points/extent length mismatch".into()));
        }
        for (&n, &l) in points.iter().zip(&extent) {
            if n < 32 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "{n} points per axis; need a power of two >= 32"
                )));
            }
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("extent {l} must be positive")));
            }
        }
        Ok(Self { points, extent })
    }

    pub fn uniform(dims: usize, points: usize, extent: f64) -> Result<Self> {
        Self::new(vec![points; dims], vec![extent; dims])
    }

    /// 512 points in 1D, 256 per axis in 2D, 64 per axis in 3D, with
    /// half-width `8 * scale`.
    pub fn default_for(dims: usize, scale: f64) -> Result<Self> {
        let n = match dims {
            1 => 512,
            2 => 256,
            3 => 64,
            _ => return Err(Error::InvalidGrid(format!("{dims} axes, need 1-3"))),
        };
        Self::uniform(dims, n, 8.0 * scale)
    }

    pub fn dims(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self, axis: usize) -> usize {
        self.points[axis]
    }

    pub fn points_per_axis(&self) -> &[usize] {
        &self.points
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extent[axis]
    }

    pub fn extents(&self) -> &[f64] {
        &self.extent
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dq(&self, axis: usize) -> f64 {
        2.0 * self.extent[axis] / self.points[axis] as f64
    }

    pub fn dp(&self, axis: usize) -> f64 {
        PI / self.extent[axis]
    }

    pub fn q(&self, axis: usize, k: usize) -> f64 {
        -self.extent[axis] + k as f64 * self.dq(axis)
    }

    pub fn p(&self, axis: usize, j: usize) -> f64 {
        (j as f64 - (self.points[axis] / 2) as f64) * self.dp(axis)
    }

    /// Row-major stride (last axis contiguous).
    pub fn stride(&self, axis: usize) -> usize {
        self.points[axis + 1..].iter().product()
    }

    /// Index along `axis` of flat point `i`.
    #[inline]
    pub fn axis_index(&self, i: usize, axis: usize) -> usize {
        (i / self.stride(axis)) % self.points[axis]
    }

    /// Sample coordinates of every point along `axis` in the given representation.
    pub fn coordinates(&self, axis: usize, rep: Representation) -> Vec<f64> {
        let stride = self.stride(axis);
        let n = self.points[axis];
        (0..self.len())
            .map(|i| {
                let k = (i / stride) % n;
                match rep {
                    Representation::Position => self.q(axis, k),
                    Representation::Momentum => self.p(axis, k),
                }
            })
            .collect()
    }

    pub fn cell_volume(&self, rep: Representation) -> f64 {
        (0..self.dims())
            .map(|a| match rep {
                Representation::Position => self.dq(a),
                Representation::Momentum => self.dp(a),
            })
            .product()
    }

    pub(crate) fn q_range(&self, axis: usize) -> (f64, f64) {
        (-self.extent[axis], self.extent[axis] - self.dq(axis))
    }

    pub(crate) fn p_range(&self, axis: usize) -> (f64, f64) {
        let half = (self.points[axis] / 2) as f64 * self.dp(axis);
        (-half, half - self.dp(axis))
    }
}

/// Complex pointer amplitudes on a [`Grid`], normalized so that
/// `sum |phi|^2 dV = 1` in their representation.
#[derive(Debug, Clone, PartialEq)]
pub struct PointerWavefunction {
    grid: Grid,
    amplitudes: Vec<Complex64>,
    rep: Representation,
}

impl PointerWavefunction {
    /// Normalizes `amplitudes` on `grid`.
    pub fn new(grid: Grid, amplitudes: Vec<Complex64>, rep: Representation) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} amplitudes for {} grid points",
                amplitudes.len(),
                grid.len()
            )));
        }
        let mut phi = Self {
            grid,
            amplitudes,
            rep,
        };
        let norm = phi.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Normalization { norm });
        }
        let inv = 1.0 / norm.sqrt();
        phi.amplitudes.iter_mut().for_each(|a| *a *= inv);
        Ok(phi)
    }

    pub(crate) fn from_raw(grid: Grid, amplitudes: Vec<Complex64>, rep: Representation) -> Self {
        Self {
            grid,
            amplitudes,
            rep,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> usize {
        self.grid.dims()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn representation(&self) -> Representation {
        self.rep
    }

    /// Riemann-sum norm `sum |phi|^2 dV`.
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.cell_volume(self.rep)
    }

    pub fn to_momentum(&self) -> Self {
        to_momentum(self)
    }

    pub fn to_position(&self) -> Self {
        to_position(self)
    }

    fn convert(&self, target: Representation) -> Self {
        if self.rep == target {
            return self.clone();
        }
        let dir = match target {
            Representation::Momentum => Direction::ToMomentum,
            Representation::Position => Direction::ToPosition,
        };
        let mut data = self.amplitudes.clone();
        for axis in 0..self.dims() {
            spectral::transform_axis(&mut data, &self.grid, axis, 1, dir);
        }
        Self::from_raw(self.grid.clone(), data, target)
    }

    /// Largest `|phi|^2` on the outermost sample planes, relative to the peak.
    pub fn edge_weight(&self) -> f64 {
        let peak = self.amplitudes.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max);
        let mut edge: f64 = 0.0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            let on_edge = (0..self.dims()).any(|ax| {
                let k = self.grid.axis_index(i, ax);
                k == 0 || k + 1 == self.grid.points(ax)
            });
            if on_edge {
                edge = edge.max(a.norm_sqr());
            }
        }
        if peak > 0.0 {
            edge / peak
        } else {
            0.0
        }
    }
}

pub fn to_momentum(phi: &PointerWavefunction) -> PointerWavefunction {
    phi.convert(Representation::Momentum)
}

pub fn to_position(phi: &PointerWavefunction) -> PointerWavefunction {
    phi.convert(Representation::Position)
}

/// First and second moments of the position and momentum quadratures.
///
/// `cov_qp[(l, m)]` is `<q_l p_m> - <q_l><p_m>`; for `l == m` the symmetrized
/// product `(q p + p q)/2` is used.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub mean_q: DVector<f64>,
    pub mean_p: DVector<f64>,
    pub cov_qq: DMatrix<f64>,
    pub cov_qp: DMatrix<f64>,
    pub cov_pp: DMatrix<f64>,
}

impl MomentSet {
    pub fn dims(&self) -> usize {
        self.mean_q.len()
    }

    pub fn var_q(&self, l: usize) -> f64 {
        self.cov_qq[(l, l)]
    }

    pub fn var_p(&self, l: usize) -> f64 {
        self.cov_pp[(l, l)]
    }

    pub fn corr_qq(&self, l: usize, m: usize) -> f64 {
        self.cov_qq[(l, m)]
    }

    /// `corr(q_l, p_m)`
    pub fn corr_qp(&self, l: usize, m: usize) -> f64 {
        self.cov_qp[(l, m)]
    }

    pub fn corr_pp(&self, l: usize, m: usize) -> f64 {
        self.cov_pp[(l, m)]
    }

    /// Largest entry-wise difference across all three covariance blocks.
    pub fn max_cov_diff(&self, other: &MomentSet) -> f64 {
        (&self.cov_qq - &other.cov_qq)
            .amax()
            .max((&self.cov_qp - &other.cov_qp).amax())
            .max((&self.cov_pp - &other.cov_pp).amax())
    }
}

/// Centered Gaussian pointer parameters: position covariance `sigma`,
/// quadratic phase `theta`, and mean position/momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub sigma: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub mean_q: DVector<f64>,
    pub mean_p: DVector<f64>,
}

impl GaussianSpec {
    pub fn new(sigma: DMatrix<f64>) -> Self {
        let d = sigma.nrows();
        Self {
            sigma,
            theta: DMatrix::zeros(d, d),
            mean_q: DVector::zeros(d),
            mean_p: DVector::zeros(d),
        }
    }

    pub fn with_theta(mut self, theta: DMatrix<f64>) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_mean_q(mut self, mean_q: DVector<f64>) -> Self {
        self.mean_q = mean_q;
        self
    }

    pub fn with_mean_p(mut self, mean_p: DVector<f64>) -> Self {
        self.mean_p = mean_p;
        self
    }

    pub fn dims(&self) -> usize {
        self.sigma.nrows()
    }

    /// Closed-form momentum covariance `Sigma^{-1}/4 + Theta Sigma Theta`.
    pub fn momentum_covariance(&self) -> Option<DMatrix<f64>> {
        let inv = self.sigma.clone().cholesky()?.inverse();
        Some(inv.scale(0.25) + &self.theta * &self.sigma * &self.theta)
    }

    /// Closed-form cross block `corr(q_l, p_m) = (Sigma Theta)_{lm}`.
    pub fn cross_covariance(&self) -> DMatrix<f64> {
        &self.sigma * &self.theta
    }
}

/// `exp[-(q-mu)^T Sigma^{-1} (q-mu)/4 + i (q-mu)^T Theta (q-mu)/2 + i p0.q]`,
/// normalized on the grid.
pub fn gaussian_pointer(grid: &Grid, spec: &GaussianSpec) -> Result<PointerWavefunction> {
    let d = grid.dims();
    let shapes_ok = spec.sigma.shape() == (d, d)
        && spec.theta.shape() == (d, d)
        && spec.mean_q.len() == d
        && spec.mean_p.len() == d;
    if !shapes_ok {
        return Err(Error::Dimension(format!(
            "Gaussian parameters do not match a {d}-axis grid"
        )));
    }
    if (&spec.sigma - spec.sigma.transpose()).amax() > 1e-12
        || (&spec.theta - spec.theta.transpose()).amax() > 1e-12
    {
        return Err(Error::InvalidCovariance("Sigma and Theta must be symmetric".into()));
    }
    let chol = spec
        .sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidCovariance(format!("{}", spec.sigma)))?;
    let precision = chol.inverse();
    let cov_pp = spec.momentum_covariance().expect("cholesky succeeded above");

    for a in 0..d {
        let s = spec.sigma[(a, a)].sqrt();
        let (lo, hi) = grid.q_range(a);
        let (mu, spread) = (spec.mean_q[a], COVERAGE_SIGMAS * s);
        if mu - spread < lo || mu + spread > hi {
            return Err(Error::GridCoverage(format!(
                "axis {a}: position {mu} +/- {spread} outside [{lo}, {hi}]"
            )));
        }
        let (lo, hi) = grid.p_range(a);
        let (mu, spread) = (spec.mean_p[a], COVERAGE_SIGMAS * cov_pp[(a, a)].sqrt());
        if mu - spread < lo || mu + spread > hi {
            return Err(Error::GridCoverage(format!(
                "axis {a}: momentum {mu} +/- {spread} outside [{lo}, {hi}]"
            )));
        }
    }

    let coords: Vec<Vec<f64>> = (0..d)
        .map(|a| grid.coordinates(a, Representation::Position))
        .collect();
    let mut x = vec![0.0; d];
    let amps = (0..grid.len())
        .map(|i| {
            let mut plane = 0.0;
            for a in 0..d {
                x[a] = coords[a][i] - spec.mean_q[a];
                plane += spec.mean_p[a] * coords[a][i];
            }
            let (mut quad_re, mut quad_im) = (0.0, 0.0);
            for r in 0..d {
                for s in 0..d {
                    quad_re += x[r] * precision[(r, s)] * x[s];
                    quad_im += x[r] * spec.theta[(r, s)] * x[s];
                }
            }
            Complex64::from_polar((-0.25 * quad_re).exp(), 0.5 * quad_im + plane)
        })
        .collect();
    PointerWavefunction::new(grid.clone(), amps, Representation::Position)
}

/// Laguerre-Gauss mode `(x + i sgn(l) y)^{|l|} exp[-(x^2+y^2)/(4 sigma^2)]`.
pub fn lg_mode(grid: &Grid, l: i32, sigma: f64) -> Result<PointerWavefunction> {
    if grid.dims() != 2 {
        return Err(Error::Dimension(format!(
            "Laguerre-Gauss modes need 2 axes, grid has {}",
            grid.dims()
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParams(format!("sigma = {sigma}")));
    }
    let reach = COVERAGE_SIGMAS * sigma * (1.0 + l.unsigned_abs() as f64).sqrt();
    for a in 0..2 {
        if grid.extent(a) < reach {
            return Err(Error::GridCoverage(format!(
                "axis {a}: extent {} < {reach} needed for l = {l}",
                grid.extent(a)
            )));
        }
    }
    let sgn = f64::from(l.signum());
    let xs = grid.coordinates(0, Representation::Position);
    let ys = grid.coordinates(1, Representation::Position);
    let amps = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            Complex64::new(x, sgn * y).powu(l.unsigned_abs())
                * (-(x * x + y * y) / (4.0 * sigma * sigma)).exp()
        })
        .collect();
    PointerWavefunction::new(grid.clone(), amps, Representation::Position)
}

/// Means and covariances by Riemann quadrature in position and momentum space.
pub fn moments(phi: &PointerWavefunction) -> Result<MomentSet> {
    let norm = phi.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::Normalization { norm });
    }
    let grid = phi.grid();
    let d = grid.dims();
    let pos = phi.to_position();
    let mom = phi.to_momentum();

    let q: Vec<Vec<f64>> = (0..d)
        .map(|a| grid.coordinates(a, Representation::Position))
        .collect();
    let p: Vec<Vec<f64>> = (0..d)
        .map(|a| grid.coordinates(a, Representation::Momentum))
        .collect();
    let (mean_q, cov_qq) = real_moments(pos.amplitudes(), &q, grid.cell_volume(Representation::Position));
    let (mean_p, cov_pp) = real_moments(mom.amplitudes(), &p, grid.cell_volume(Representation::Momentum));

    let dv = grid.cell_volume(Representation::Position);
    let mut cov_qp = DMatrix::zeros(d, d);
    for m in 0..d {
        let p_phi = spectral::momentum_operator(pos.amplitudes(), grid, m);
        for l in 0..d {
            let s: Complex64 = pos
                .amplitudes()
                .iter()
                .zip(&p_phi)
                .zip(&q[l])
                .map(|((a, b), &ql)| a.conj() * b * ql)
                .sum();
            cov_qp[(l, m)] = s.re * dv - mean_q[l] * mean_p[m];
        }
    }

    Ok(MomentSet {
        mean_q,
        mean_p,
        cov_qq,
        cov_qp,
        cov_pp,
    })
}

fn real_moments(amps: &[Complex64], coords: &[Vec<f64>], dv: f64) -> (DVector<f64>, DMatrix<f64>) {
    let d = coords.len();
    let mut mean = DVector::zeros(d);
    let mut second = DMatrix::<f64>::zeros(d, d);
    for (i, a) in amps.iter().enumerate() {
        let w = a.norm_sqr() * dv;
        for r in 0..d {
            let x = coords[r][i];
            mean[r] += w * x;
            for s in r..d {
                second[(r, s)] += w * x * coords[s][i];
            }
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for r in 0..d {
        for s in r..d {
            let v = second[(r, s)] - mean[r] * mean[s];
            cov[(r, s)] = v;
            cov[(s, r)] = v;
        }
    }
    (mean, cov)
}

/// Multiplies by `exp(i sum_j l_j q_j)` in position space, translating the
/// momentum distribution by `shifts`.
pub fn displace_momentum(phi: &PointerWavefunction, shifts: &[f64]) -> Result<PointerWavefunction> {
    let grid = phi.grid();
    if shifts.len() != grid.dims() {
        return Err(Error::Dimension(format!(
            "{} shifts for {} axes",
            shifts.len(),
            grid.dims()
        )));
    }
    let mut pos = phi.to_position();
    for (axis, &l) in shifts.iter().enumerate() {
        if l == 0.0 {
            continue;
        }
        let stride = grid.stride(axis);
        let n = grid.points(axis);
        let phases: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(1.0, l * grid.q(axis, k)))
            .collect();
        for (i, a) in pos.amplitudes.iter_mut().enumerate() {
            *a *= phases[(i / stride) % n];
        }
    }
    Ok(pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sym2(a: f64, b: f64, c: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, b, c])
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(vec![16], vec![1.0]).is_err());
        assert!(Grid::new(vec![48], vec![1.0]).is_err());
        assert!(Grid::new(vec![64, 64, 64, 64], vec![1.0; 4]).is_err());
        assert!(Grid::new(vec![64], vec![-1.0]).is_err());
        let g = Grid::new(vec![64, 32], vec![4.0, 2.0]).unwrap();
        for a in 0..2 {
            assert_abs_diff_eq!(g.dq(a) * g.dp(a) * g.points(a) as f64, 2.0 * PI, epsilon = 1e-12);
        }
        assert_eq!(g.stride(0), 32);
        assert_eq!(g.stride(1), 1);
        assert_eq!(g.axis_index(33, 0), 1);
        assert_eq!(g.axis_index(33, 1), 1);
    }

    #[test]
    fn factorizable_gaussian_has_no_cross_terms() {
        let grid = Grid::default_for(2, 1.0).unwrap();
        let phi = gaussian_pointer(&grid, &GaussianSpec::new(DMatrix::identity(2, 2))).unwrap();
        let m = moments(&phi).unwrap();
        assert_abs_diff_eq!(m.var_q(0), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.var_q(1), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.corr_qq(0, 1), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.corr_qp(0, 1), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.corr_qp(1, 0), 0.0, epsilon = 1e-12);
        // var(p) = 1/(4 sigma^2) under the exp(-i p q) kernel
        assert_abs_diff_eq!(m.var_p(0), 0.25, epsilon = 1e-9);
    }

    #[test]
    fn correlated_gaussian_recovers_sigma() {
        let grid = Grid::default_for(2, 1.0).unwrap();
        let phi = gaussian_pointer(&grid, &GaussianSpec::new(sym2(1.0, 0.5, 1.0))).unwrap();
        let m = moments(&phi).unwrap();
        assert_abs_diff_eq!(m.corr_qq(0, 1), 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(m.corr_qp(0, 1), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.corr_qp(1, 0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_moments_match_closed_forms() {
        let grid = Grid::new(vec![128, 128, 64], vec![9.0, 9.0, 9.0]).unwrap();
        let sigma = DMatrix::from_row_slice(3, 3, &[1.2, 0.4, 0.1, 0.4, 0.9, -0.2, 0.1, -0.2, 0.7]);
        let theta = DMatrix::from_row_slice(3, 3, &[0.1, 0.3, 0.0, 0.3, -0.2, 0.15, 0.0, 0.15, 0.05]);
        let spec = GaussianSpec::new(sigma.clone())
            .with_theta(theta)
            .with_mean_q(DVector::from_vec(vec![0.3, -0.5, 0.2]))
            .with_mean_p(DVector::from_vec(vec![0.7, 0.0, -0.4]));
        let m = moments(&gaussian_pointer(&grid, &spec).unwrap()).unwrap();
        assert!((&m.mean_q - &spec.mean_q).amax() < 1e-9);
        assert!((&m.mean_p - &spec.mean_p).amax() < 1e-9);
        assert!((&m.cov_qq - &sigma).amax() < 1e-9);
        assert!((&m.cov_pp - spec.momentum_covariance().unwrap()).amax() < 1e-9);
        assert!((&m.cov_qp - spec.cross_covariance()).amax() < 1e-9);
    }

    #[test]
    fn gaussian_rejects_bad_inputs() {
        let grid = Grid::default_for(2, 1.0).unwrap();
        let bad = GaussianSpec::new(sym2(1.0, 1.5, 1.0));
        assert!(matches!(gaussian_pointer(&grid, &bad), Err(Error::InvalidCovariance(_))));
        let wide = GaussianSpec::new(sym2(9.0, 0.0, 1.0));
        assert!(matches!(gaussian_pointer(&grid, &wide), Err(Error::GridCoverage(_))));
        let wrong_dim = GaussianSpec::new(DMatrix::identity(3, 3));
        assert!(matches!(gaussian_pointer(&grid, &wrong_dim), Err(Error::Dimension(_))));
    }

    #[test]
    fn lg_mode_requires_two_axes_and_coverage() {
        let g3 = Grid::default_for(3, 1.0).unwrap();
        assert!(matches!(lg_mode(&g3, 1, 1.0), Err(Error::Dimension(_))));
        let small = Grid::uniform(2, 64, 5.0).unwrap();
        assert!(matches!(lg_mode(&small, 2, 1.0), Err(Error::GridCoverage(_))));
    }

    #[test]
    fn lg_zero_is_isotropic_gaussian() {
        let grid = Grid::default_for(2, 1.0).unwrap();
        let m = moments(&lg_mode(&grid, 0, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(m.corr_qq(0, 1), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.corr_qp(0, 1), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.corr_qp(1, 0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.var_q(0), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn lg_variance_is_measured_not_assumed() {
        // |x + iy|^2 exp(-r^2/2 sigma^2): var(x) = 2 sigma^2, not sigma^2
        let grid = Grid::uniform(2, 256, 8.0 * 2f64.sqrt()).unwrap();
        let m = moments(&lg_mode(&grid, 1, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(m.var_q(0), 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(m.var_q(1), 2.0, epsilon = 1e-8);
    }

    #[test]
    fn unnormalized_input_rejected() {
        let grid = Grid::uniform(1, 64, 8.0).unwrap();
        let amps = vec![Complex64::new(1.0, 0.0); 64];
        let phi = PointerWavefunction::from_raw(grid, amps, Representation::Position);
        assert!(matches!(moments(&phi), Err(Error::Normalization { .. })));
    }

    #[test]
    fn zero_displacement_is_identity() {
        let grid = Grid::uniform(2, 256, 10.0).unwrap();
        let phi = lg_mode(&grid, 1, 1.0).unwrap();
        assert_eq!(displace_momentum(&phi, &[0.0, 0.0]).unwrap(), phi);
    }

    #[test]
    fn on_grid_displacement_moves_mean_only() {
        let grid = Grid::default_for(2, 1.0).unwrap();
        let phi = gaussian_pointer(&grid, &GaussianSpec::new(sym2(1.0, 0.3, 0.8))).unwrap();
        let shifted = displace_momentum(&phi, &[grid.dp(0), 0.0]).unwrap();
        let (m0, m1) = (moments(&phi).unwrap(), moments(&shifted).unwrap());
        assert_abs_diff_eq!(m1.mean_p[0] - m0.mean_p[0], grid.dp(0), epsilon = 1e-12);
        assert!(m0.max_cov_diff(&m1) < 1e-9);
        assert!((&m0.mean_q - &m1.mean_q).amax() < 1e-12);
    }

    #[test]
    fn momentum_gaussian_width() {
        let grid = Grid::uniform(1, 512, 8.0 * 1.5).unwrap();
        let spec = GaussianSpec::new(DMatrix::from_element(1, 1, 2.25));
        let phi = gaussian_pointer(&grid, &spec).unwrap();
        let mom = phi.to_momentum();
        assert_abs_diff_eq!(mom.norm(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(moments(&phi).unwrap().var_p(0), 1.0 / (4.0 * 2.25), epsilon = 1e-10);
        let back = mom.to_position();
        let err = back
            .amplitudes()
            .iter()
            .zip(phi.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);
    }
}

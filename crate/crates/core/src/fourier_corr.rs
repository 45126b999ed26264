//! Partial Fourier transform of a correlated two-axis position density and
//! the formal `p1`-`q2` moment of the resulting complex array.
//!
//! The density is written in precision form,
//! `f ~ exp[-s1 q1^2 / 2 - s2 q2^2 / 2 - c q1 q2]` with `s1 = sigma1^2`,
//! `s2 = sigma2^2`, `c = c12`. Transforming `q1` gives
//! `f(p1, q2) ~ exp[-(s2 - c^2/s1) q2^2 / 2 - p1^2 / (2 s1) + i (c/s1) p1 q2]`,
//! which is complex, so the moment computed from it is a formal one.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointer::{Grid, PointerWavefunction, Representation};
use crate::spectral::{transform_axis, Direction};

const MASS_TOL: f64 = 1e-10;

/// Nonnegative density on a two-axis position grid with unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    grid: Grid,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if grid.dims() != 2 {
            return Err(Error::Dimension(format!("density needs 2 axes, got {}", grid.dims())));
        }
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!("{} values for {} grid points", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParams("density values must be finite and nonnegative".into()));
        }
        let mass: f64 = values.iter().sum::<f64>() * grid.cell_volume(Representation::Position);
        if mass.is_nan() || mass <= 0.0 {
            return Err(Error::Normalization { norm: mass });
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume(Representation::Position)
    }
}

pub fn density_from_wavefunction(phi: &PointerWavefunction) -> Result<DensityGrid> {
    let pos = phi.to_position();
    let values = pos.amplitudes().iter().map(|a| a.norm_sqr()).collect();
    let d = DensityGrid::new(pos.grid().clone(), values)?;
    debug_assert!((d.mass() - 1.0).abs() < MASS_TOL);
    Ok(d)
}

/// Precision parameters `(s1, s2, c)` of the correlated Gaussian density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionParams {
    pub sigma1: f64,
    pub sigma2: f64,
    pub c12: f64,
}

impl PrecisionParams {
    pub fn new(sigma1: f64, sigma2: f64, c12: f64) -> Result<Self> {
        let p = Self { sigma1, sigma2, c12 };
        let (s1, s2) = (sigma1 * sigma1, sigma2 * sigma2);
        if !(sigma1.is_finite() && sigma2.is_finite() && c12.is_finite()) || s1 <= 0.0 || s1 * s2 <= c12 * c12 {
            return Err(Error::InvalidParams(format!(
                "exponent is not negative definite (sigma1={sigma1}, sigma2={sigma2}, c12={c12})"
            )));
        }
        Ok(p)
    }

    fn s(&self) -> (f64, f64) {
        (self.sigma1 * self.sigma1, self.sigma2 * self.sigma2)
    }

    /// Covariance `[[s1, c], [c, s2]]^{-1}` of the density.
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let (s1, s2) = self.s();
        let det = s1 * s2 - self.c12 * self.c12;
        [[s2 / det, -self.c12 / det], [-self.c12 / det, s1 / det]]
    }

    pub fn log_density(&self, q1: f64, q2: f64) -> f64 {
        let (s1, s2) = self.s();
        -0.5 * s1 * q1 * q1 - 0.5 * s2 * q2 * q2 - self.c12 * q1 * q2
    }

    /// Normalized density's `q1` transform at `(p1, q2)`.
    pub fn transformed(&self, p1: f64, q2: f64) -> Complex64 {
        let (s1, s2) = self.s();
        let c = self.c12;
        let norm = (s1 * s2 - c * c).sqrt() / (2.0 * PI);
        let expo = Complex64::new(-0.5 * (s2 - c * c / s1) * q2 * q2 - p1 * p1 / (2.0 * s1), c / s1 * p1 * q2);
        norm * (2.0 * PI / s1).sqrt() * expo.exp()
    }
}

pub fn correlated_density(grid: &Grid, params: PrecisionParams) -> Result<DensityGrid> {
    if grid.dims() != 2 {
        return Err(Error::Dimension(format!("density needs 2 axes, got {}", grid.dims())));
    }
    let values = (0..grid.len())
        .map(|i| {
            let q1 = grid.q(0, grid.axis_index(i, 0));
            let q2 = grid.q(1, grid.axis_index(i, 1));
            params.log_density(q1, q2).exp()
        })
        .collect();
    DensityGrid::new(grid.clone(), values)
}

/// `\int exp(-i p q_axis) f dq_axis` on the momentum samples of `axis`; the
/// other axis stays in position. Layout matches the grid.
pub fn partial_fourier(f: &DensityGrid, axis: usize) -> Result<Vec<Complex64>> {
    if axis >= 2 {
        return Err(Error::Dimension(format!("axis {axis} of a 2-axis density")));
    }
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_axis(&mut data, &f.grid, axis, 1, Direction::ToMomentum);
    let root = (2.0 * PI).sqrt();
    data.iter_mut().for_each(|v| *v *= root);
    Ok(data)
}

/// `<p1 q2> - <p1><q2>` with the array (transformed along axis 0) used as a
/// weight normalized by its total.
pub fn formal_p1q2_moment(f: &DensityGrid) -> Result<Complex64> {
    let g = &f.grid;
    let t = partial_fourier(f, 0)?;
    let (mut z, mut mp, mut mq, mut mpq) = (Complex64::default(), Complex64::default(), Complex64::default(), Complex64::default());
    for (i, w) in t.iter().enumerate() {
        let p = g.p(0, g.axis_index(i, 0));
        let q = g.q(1, g.axis_index(i, 1));
        z += w;
        mp += w * p;
        mq += w * q;
        mpq += w * (p * q);
    }
    Ok(mpq / z - (mp / z) * (mq / z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppendixACheck {
    pub params: PrecisionParams,
    pub numeric: Complex64,
    /// `i c12 / sigma1^2`
    pub analytic: Complex64,
    pub residual: f64,
    /// `i c12 / sigma2^2`, the closed-form value of the same functional
    pub closed_form: Complex64,
    pub closed_form_residual: f64,
}

/// Grid used by [`appendix_a_check`]: wide enough for the density and
/// fine enough in `p1` for the transformed Gaussian.
pub fn appendix_a_grid(params: PrecisionParams) -> Result<Grid> {
    let cov = params.covariance();
    let sd = cov[0][0].max(cov[1][1]).sqrt();
    let (s1, _) = params.s();
    let p_sd = s1.sqrt();
    let mut extent: f64 = 12.0 * sd;
    let mut n = 256;
    while PI / extent > p_sd / 8.0 || (n as f64 / 2.0) * PI / extent < 12.0 * p_sd {
        if PI / extent > p_sd / 8.0 {
            extent *= 2.0;
        }
        n *= 2;
    }
    Grid::uniform(2, n, extent)
}

pub fn appendix_a_check(sigma1: f64, sigma2: f64, c12: f64) -> Result<AppendixACheck> {
    let params = PrecisionParams::new(sigma1, sigma2, c12)?;
    let grid = appendix_a_grid(params)?;
    let f = correlated_density(&grid, params)?;
    let numeric = formal_p1q2_moment(&f)?;
    let analytic = Complex64::new(0.0, c12 / (sigma1 * sigma1));
    let closed_form = Complex64::new(0.0, c12 / (sigma2 * sigma2));
    Ok(AppendixACheck {
        params,
        numeric,
        analytic,
        residual: (numeric - analytic).norm(),
        closed_form,
        closed_form_residual: (numeric - closed_form).norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointer::{gaussian_pointer, lg_mode, GaussianSpec};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn gaussian_density_has_half_exponent() {
        let grid = Grid::uniform(2, 128, 10.0).unwrap();
        let phi = gaussian_pointer(&grid, &GaussianSpec::new(DMatrix::identity(2, 2).scale(1.5))).unwrap();
        let f = density_from_wavefunction(&phi).unwrap();
        assert_abs_diff_eq!(f.mass(), 1.0, epsilon = 1e-10);
        let norm = 1.0 / (2.0 * PI * 1.5);
        for i in (0..grid.len()).step_by(97) {
            let (q1, q2) = (grid.q(0, grid.axis_index(i, 0)), grid.q(1, grid.axis_index(i, 1)));
            let exact = norm * (-(q1 * q1 + q2 * q2) / (2.0 * 1.5)).exp();
            assert_abs_diff_eq!(f.values()[i], exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn lg_density_is_a_ring() {
        let grid = Grid::uniform(2, 128, 10.0).unwrap();
        let f = density_from_wavefunction(&lg_mode(&grid, 1, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(f.mass(), 1.0, epsilon = 1e-10);
        assert!(f.values().iter().all(|&v| v >= 0.0));
        let centre = grid.len() / 2 + grid.points(1) / 2;
        assert_abs_diff_eq!(grid.q(0, grid.axis_index(centre, 0)), 0.0);
        assert_abs_diff_eq!(f.values()[centre], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        let g3 = Grid::uniform(3, 32, 5.0).unwrap();
        assert!(matches!(correlated_density(&g3, PrecisionParams::new(1.0, 1.0, 0.0).unwrap()), Err(Error::Dimension(_))));
        assert!(matches!(PrecisionParams::new(1.0, 1.0, 1.0), Err(Error::InvalidParams(_))));
        assert!(matches!(appendix_a_check(0.5, 0.5, 0.3), Err(Error::InvalidParams(_))));
        let g = Grid::uniform(2, 32, 5.0).unwrap();
        let f = correlated_density(&g, PrecisionParams::new(1.0, 1.0, 0.0).unwrap()).unwrap();
        assert!(matches!(partial_fourier(&f, 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn separable_density_stays_separable() {
        let grid = Grid::uniform(2, 64, 10.0).unwrap();
        let f = correlated_density(&grid, PrecisionParams::new(1.2, 0.9, 0.0).unwrap()).unwrap();
        let t = partial_fourier(&f, 0).unwrap();
        let n = grid.points(1);
        // rank one: t[j, k] t[j', k'] = t[j, k'] t[j', k]
        for (j, jj) in [(20, 33), (31, 40)] {
            for (k, kk) in [(25, 32), (30, 38)] {
                let lhs = t[j * n + k] * t[jj * n + kk];
                let rhs = t[j * n + kk] * t[jj * n + k];
                assert!((lhs - rhs).norm() < 1e-14);
            }
        }
        assert!(t.iter().all(|v| v.im.abs() < 1e-14));
    }

    #[test]
    fn transform_matches_closed_form() {
        let params = PrecisionParams::new(1.1, 0.9, 0.35).unwrap();
        let grid = appendix_a_grid(params).unwrap();
        let f = correlated_density(&grid, params).unwrap();
        let t = partial_fourier(&f, 0).unwrap();
        let worst = t
            .iter()
            .enumerate()
            .map(|(i, v)| (v - params.transformed(grid.p(0, grid.axis_index(i, 0)), grid.q(1, grid.axis_index(i, 1)))).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn zero_correlation_gives_zero_moment() {
        let r = appendix_a_check(1.3, 0.8, 0.0).unwrap();
        assert!(r.numeric.norm() < 1e-9);
        assert_eq!(r.analytic, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn equal_widths_reproduce_i_c_over_sigma1_squared() {
        let r = appendix_a_check(1.0, 1.0, 0.2).unwrap();
        assert_abs_diff_eq!(r.analytic.im, 0.2);
        assert!(r.residual <= 1e-6, "{r:?}");
    }

    #[test]
    fn moment_is_i_c_over_sigma2_squared() {
        for (s1, s2, c) in [(0.8, 1.0, 0.3), (1.25, 1.0, -0.2), (1.0, 1.4, 0.5), (0.9, 0.7, 0.1)] {
            let r = appendix_a_check(s1, s2, c).unwrap();
            assert!(r.closed_form_residual < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn moment_is_linear_in_c12() {
        let (s1, s2) = (1.25, 1.0);
        let a = appendix_a_check(s1, s2, 0.1).unwrap().numeric.im;
        let b = appendix_a_check(s1, s2, 0.3).unwrap().numeric.im;
        let slope = (b - a) / 0.2;
        assert!((slope * s2 * s2 - 1.0).abs() < 1e-4);
    }
}

//! Weak measurement with multidimensional, correlated pointer states.
//!
//! A finite-dimensional system is coupled to a continuous-variable pointer
//! discretized on a rectangular grid (one to three axes). Couplings are
//! applied exactly, per grid point, or truncated at first order; the
//! postselected pointer is compared against closed-form first-order shift
//! predictions that involve the pointer's cross-correlations.

pub mod analytic;
pub mod dynamics;
pub mod entanglement;
pub mod error;
pub mod fourier_corr;
pub mod pointer;
pub mod quantum;
pub mod scenario;
mod spectral;
pub mod validate;

pub use analytic::{Sign, ShiftPrediction, SignConvention};
pub use dynamics::{CouplingMode, CouplingSpec, JointState, Quadrature, ReadoutShift};
pub use entanglement::{CMatrix, TwoModeGaussianParams, WeakProbeConfig};
pub use error::{Error, Result};
pub use fourier_corr::DensityGrid;
pub use pointer::{GaussianSpec, Grid, MomentSet, PointerWavefunction, Representation};
pub use quantum::{Observable, Spectrum, SystemState};
pub use scenario::{ScenarioConfig, ShiftReport, SweepReport};

pub use num_complex::Complex64;

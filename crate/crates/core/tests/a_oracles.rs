//! Simulated quantities checked against closed forms evaluated offline at
//! high precision.

#![allow(clippy::excessive_precision)]

use num_complex::Complex64;
use weakshift_core::entanglement::{c_matrix_direct, c_matrix_from_shifts, two_mode_gaussian, WeakProbeConfig};
use weakshift_core::fourier_corr::appendix_a_check;
use weakshift_core::quantum::weak_value;
use weakshift_core::scenario::run_scaled;
use weakshift_core::validate::bundled_config;
use weakshift_core::{Grid, Observable, Quadrature, SignConvention, SystemState, TwoModeGaussianParams};

// Unit-variance pointer centred at q1 = 0.5, (Z)_w = i. The postselected
// density is phi^2 (1 + sin 2 lambda q1), so
// dq1 = k cos(k mu) e^{-k^2/2} / (1 + sin(k mu) e^{-k^2/2}) with k = 2 lambda.
const BASELINE_DQ1: [(f64, f64); 3] = [
    (0.1, 0.177_673_801_522_572_51),
    (0.05, 0.094_669_016_802_570_394),
    (0.025, 0.048_705_933_818_095_259),
];

#[test]
fn baseline_shift_matches_closed_form() {
    let cfg = bundled_config("jozsa_baseline").unwrap();
    for (lambda, dq1) in BASELINE_DQ1 {
        let r = run_scaled(&cfg, lambda / 0.05, SignConvention::frozen()).unwrap();
        let got = r.row(0, Quadrature::Q).unwrap().shift;
        assert!((got - dq1).abs() < 1e-9, "lambda {lambda}: {got} vs {dq1}");
        assert!((r.row(0, Quadrature::Q).unwrap().residual - (dq1 - 2.0 * lambda).abs()).abs() < 1e-9);
    }
}

#[test]
fn baseline_readout_kick_is_minus_eigenvalue() {
    let cfg = bundled_config("jozsa_baseline").unwrap();
    let r = run_scaled(&cfg, 1.0, SignConvention::frozen()).unwrap();
    assert_eq!(r.readout_value, Some(1.0));
    assert!((r.row(1, Quadrature::P).unwrap().shift + 1.0).abs() < 1e-10);
}

#[test]
fn pauli_z_weak_value_is_i() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let pre = SystemState::new(&[Complex64::new(s, 0.0), Complex64::new(s, 0.0)]).unwrap();
    let post = SystemState::new(&[Complex64::new(s, 0.0), Complex64::new(0.0, s)]).unwrap();
    let w = weak_value(&Observable::pauli_z(), &pre, &post).unwrap();
    assert!((w - Complex64::i()).norm() < 1e-15);
}

// alpha = beta = 1/4, gamma = 1/8: Sigma11 = 4/3, Sigma12 = -2/3,
// <p1^2> = 1/4, <p1 p2> = 1/8. The exact shifts damp each entry by
// exp(-2 lambda^2 var), lambda = 0.05.
const REC_Q1Q2: f64 = -0.662_237_004_170_022_94;
const REC_P1P2: f64 = 0.124_843_847_615_572_61;

#[test]
fn reconstructed_c_matrix_damping() {
    let phi = two_mode_gaussian(&Grid::default_for(2, 1.25).unwrap(), TwoModeGaussianParams::new(0.25, 0.25, 0.125).unwrap()).unwrap();
    let direct = c_matrix_direct(&phi).unwrap();
    assert!((direct.q1q2() + 2.0 / 3.0).abs() < 1e-10);
    assert!((direct.p1p2() - 0.125).abs() < 1e-10);
    assert!(direct.q1p2().abs() < 1e-10 && direct.p1q2().abs() < 1e-10);

    let rec = c_matrix_from_shifts(&phi, &WeakProbeConfig::imaginary_pauli_z(0.05), SignConvention::frozen()).unwrap();
    assert!((rec.q1q2() - REC_Q1Q2).abs() < 1e-9, "{}", rec.q1q2());
    assert!((rec.p1p2() - REC_P1P2).abs() < 1e-9, "{}", rec.p1p2());
    assert!(rec.q1p2().abs() < 1e-9 && rec.p1q2().abs() < 1e-9);
}

#[test]
fn formal_moment_values() {
    for (s1, c) in [(0.8, 0.3), (1.25, 0.1), (1.0, 0.2)] {
        let r = appendix_a_check(s1, 1.0, c).unwrap();
        assert!(r.numeric.re.abs() < 1e-9);
        assert!((r.numeric.im - c).abs() < 1e-6, "{s1} {c}: {}", r.numeric);
    }
    let r = appendix_a_check(1.0, 0.8, 0.2).unwrap();
    assert!((r.numeric.im - 0.3125).abs() < 1e-6, "{}", r.numeric);
}

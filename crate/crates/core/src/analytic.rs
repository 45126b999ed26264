//! Closed-form first-order pointer shifts.
//!
//! All predictions take the correlation data from a [`MomentSet`] of the
//! initial pointer and apply signs from a [`SignConvention`], which is fixed
//! by running the exact evolution on one calibration scenario. Terms that
//! depend on the time derivative of a pointer variance are zero here: the
//! pointer does not evolve freely between interactions.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{apply_couplings, make_joint, postselect, strong_readout, CouplingMode, CouplingSpec, Quadrature};
use crate::error::{Error, Result};
use crate::pointer::{gaussian_pointer, moments, GaussianSpec, Grid, MomentSet};
use crate::quantum::{c, eigendecompose, weak_value, Observable, SystemState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    fn of(x: f64) -> Self {
        if x >= 0.0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// Orientation of each family of first-order terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignConvention {
    /// `Im(A)_w` times a position-position (or momentum-momentum) covariance.
    pub im_qq: Sign,
    /// `Im(A)_w` times a mixed position-momentum covariance.
    pub im_qp: Sign,
    /// `Re(A)_w` translation of the conjugate quadrature.
    pub re: Sign,
    /// Momentum kick `a_l` of the readout axis after postselection.
    pub readout: Sign,
}

/// What the calibration run measured, next to the unsigned first-order
/// magnitudes it was compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub convention: SignConvention,
    pub lambda: f64,
    pub measured_dq1: f64,
    pub unsigned_dq1: f64,
    pub measured_dp2_corr: f64,
    pub unsigned_dp2_corr: f64,
    pub measured_kick: f64,
    pub readout_value: f64,
    pub measured_dp1_re: f64,
    pub unsigned_dp1_re: f64,
}

static FROZEN: OnceLock<SignConvention> = OnceLock::new();

impl SignConvention {
    /// Convention the exact `exp(-i lambda A xi)` evolution is expected to
    /// produce; the calibration run must reproduce it.
    pub const EXP_MINUS_I: SignConvention = SignConvention {
        im_qq: Sign::Plus,
        im_qp: Sign::Plus,
        re: Sign::Minus,
        readout: Sign::Minus,
    };

    /// Calibrated once per process and immutable afterwards.
    pub fn frozen() -> SignConvention {
        *FROZEN.get_or_init(|| {
            calibrate()
                .expect("calibration scenario is well posed")
                .convention
        })
    }

    pub fn flipped(self) -> Self {
        Self {
            im_qq: self.im_qq.flip(),
            im_qp: self.im_qp.flip(),
            re: self.re.flip(),
            readout: self.readout.flip(),
        }
    }
}

/// Pointer of the calibration run: unit variances, `corr(q1, q2) = 0.5`, a
/// quadratic phase giving `corr(q1, p2) = corr(q2, p1) = 0.3` with zero
/// same-axis terms, and `<q1> = 0.5`.
pub fn calibration_pointer_spec() -> GaussianSpec {
    let theta = DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, 1.0, -0.5]).scale(0.4);
    GaussianSpec::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]))
        .with_theta(theta)
        .with_mean_q(nalgebra::DVector::from_vec(vec![0.5, 0.0]))
}

/// A single weak coupling of Pauli-Z to `q1` with `(Z)_w = i`, readout of
/// Pauli-Y on axis 2. A second run with a real weak value `(X)_w = 1` fixes
/// the `Re` orientation.
pub fn calibrate() -> Result<Calibration> {
    let lambda = 0.05;
    let grid = Grid::uniform(2, 128, 8.0)?;
    let spec = calibration_pointer_spec();
    let phi = gaussian_pointer(&grid, &spec)?;
    let m0 = moments(&phi)?;

    let pre = SystemState::new(&[c(1.0, 0.0), c(1.0, 0.0)])?;
    let readout = Observable::pauli_y();
    let spectrum = eigendecompose(&readout)?;
    let post = spectrum.eigenvector(1);
    let a_l = spectrum.eigenvalues[1];

    let run = |obs: &Observable, lambda: f64, readout: &Observable, post: &SystemState| -> Result<MomentSet> {
        let joint = make_joint(&pre, &phi);
        let joint = apply_couplings(&joint, &[CouplingSpec::q(obs.clone(), 0, lambda)], CouplingMode::Exact)?;
        let joint = strong_readout(&joint, readout, 1)?;
        let (ptr, _) = postselect(&joint, post)?;
        moments(&ptr)
    };

    let z = Observable::pauli_z();
    let w = weak_value(&z, &pre, &post)?;
    let m_kick = run(&z, 0.0, &readout, &post)?;
    let measured_kick = m_kick.mean_p[1] - m0.mean_p[1];
    let m1 = run(&z, lambda, &readout, &post)?;
    let measured_dq1 = m1.mean_q[0] - m0.mean_q[0];
    let unsigned_dq1 = 2.0 * lambda * w.im * m0.var_q(0);
    let measured_dp2_corr = m1.mean_p[1] - m_kick.mean_p[1];
    let unsigned_dp2_corr = 2.0 * lambda * w.im * m0.corr_qp(0, 1);

    // real weak value leg: X between |+> and |0>, read out with Z
    let zero = SystemState::basis(2, 0)?;
    let x = Observable::pauli_x();
    let wx = weak_value(&x, &pre, &zero)?;
    let z_readout = Observable::pauli_z();
    let m_re0 = run(&x, 0.0, &z_readout, &zero)?;
    let m_re = run(&x, lambda, &z_readout, &zero)?;
    let measured_dp1_re = m_re.mean_p[0] - m_re0.mean_p[0];
    let unsigned_dp1_re = lambda * wx.re;

    let resolve = |measured: f64, unsigned: f64, what: &str| -> Result<Sign> {
        if !(measured.abs() > 0.5 * unsigned.abs() && measured.abs() < 1.5 * unsigned.abs()) {
            return Err(Error::InvalidParams(format!(
                "calibration inconclusive for {what}: measured {measured:e}, first-order magnitude {unsigned:e}"
            )));
        }
        Ok(Sign::of(measured / unsigned))
    };

    let convention = SignConvention {
        im_qq: resolve(measured_dq1, unsigned_dq1, "Im x cov(q,q)")?,
        im_qp: resolve(measured_dp2_corr, unsigned_dp2_corr, "Im x cov(q,p)")?,
        re: resolve(measured_dp1_re, unsigned_dp1_re, "Re")?,
        readout: resolve(measured_kick, a_l, "readout kick")?,
    };
    Ok(Calibration {
        convention,
        lambda,
        measured_dq1,
        unsigned_dq1,
        measured_dp2_corr,
        unsigned_dp2_corr,
        measured_kick,
        readout_value: a_l,
        measured_dp1_re,
        unsigned_dp1_re,
    })
}

/// Predicted changes of `<q_j>` and `<p_j>` per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftPrediction {
    pub delta_q: Vec<f64>,
    pub delta_p: Vec<f64>,
    /// The readout kick is included in `delta_p` of the readout axis.
    pub includes_readout_offset: bool,
}

impl ShiftPrediction {
    fn zeros(d: usize) -> Self {
        Self {
            delta_q: vec![0.0; d],
            delta_p: vec![0.0; d],
            includes_readout_offset: false,
        }
    }
}

/// A weak coupling reduced to the data the first-order shifts depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakTerm {
    pub axis: usize,
    pub quadrature: Quadrature,
    pub strength: f64,
    pub weak_value: Complex64,
}

/// Readout axis and eigenvalue of the postselected outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutTerm {
    pub axis: usize,
    pub value: f64,
}

/// First-order shifts for any set of weak couplings to single quadratures.
///
/// With `w = a + ib`: a coupling to `q_k` moves `<q_j>` by
/// `2 lambda b cov(q_j, q_k)` and `<p_j>` by `lambda a delta_jk` plus
/// `2 lambda b cov(q_k, p_j)` (`j != k`); a coupling to `p_k` acts
/// symmetrically. Same-axis `q`-`p` terms are the variance time-derivative
/// terms and are zero for a stationary pointer.
pub fn predict_linear(
    m: &MomentSet,
    terms: &[WeakTerm],
    readout: Option<ReadoutTerm>,
    conv: SignConvention,
) -> Result<ShiftPrediction> {
    let d = m.dims();
    let mut out = ShiftPrediction::zeros(d);
    let (s, s_cross, r) = (conv.im_qq.value(), conv.im_qp.value(), conv.re.value());
    for t in terms {
        if t.axis >= d {
            return Err(Error::Dimension(format!("coupling axis {} with {d} axes", t.axis)));
        }
        let (lam, a, b, k) = (t.strength, t.weak_value.re, t.weak_value.im, t.axis);
        for j in 0..d {
            match t.quadrature {
                Quadrature::Q => {
                    out.delta_q[j] += s * 2.0 * lam * b * m.corr_qq(j, k);
                    if j == k {
                        out.delta_p[j] += r * lam * a;
                    } else {
                        out.delta_p[j] += s_cross * 2.0 * lam * b * m.corr_qp(k, j);
                    }
                }
                Quadrature::P => {
                    out.delta_p[j] += s * 2.0 * lam * b * m.corr_pp(j, k);
                    if j == k {
                        out.delta_q[j] -= r * lam * a;
                    } else {
                        out.delta_q[j] += s_cross * 2.0 * lam * b * m.corr_qp(j, k);
                    }
                }
            }
        }
    }
    if let Some(ro) = readout {
        if ro.axis >= d {
            return Err(Error::Dimension(format!("readout axis {} with {d} axes", ro.axis)));
        }
        out.delta_p[ro.axis] += conv.readout.value() * ro.value;
        out.includes_readout_offset = true;
    }
    Ok(out)
}

/// Two weak couplings `A1 q1`, `A2 q2` followed by readout on `q3`.
pub fn predict_sequential(
    m: &MomentSet,
    lambda1: f64,
    lambda2: f64,
    a1w: Complex64,
    a2w: Complex64,
    a3l: f64,
    conv: SignConvention,
) -> Result<ShiftPrediction> {
    if m.dims() != 3 {
        return Err(Error::Dimension(format!("sequential shifts need 3 axes, got {}", m.dims())));
    }
    let (s, sx, r) = (conv.im_qq.value(), conv.im_qp.value(), conv.re.value());
    let (b1, b2) = (a1w.im, a2w.im);
    let delta_q = vec![
        s * (2.0 * lambda1 * b1 * m.var_q(0) + 2.0 * lambda2 * b2 * m.corr_qq(0, 1)),
        s * (2.0 * lambda2 * b2 * m.var_q(1) + 2.0 * lambda1 * b1 * m.corr_qq(0, 1)),
        s * (2.0 * lambda1 * b1 * m.corr_qq(0, 2) + 2.0 * lambda2 * b2 * m.corr_qq(1, 2)),
    ];
    let delta_p = vec![
        r * lambda1 * a1w.re + sx * 2.0 * lambda2 * b2 * m.corr_qp(1, 0),
        r * lambda2 * a2w.re + sx * 2.0 * lambda1 * b1 * m.corr_qp(0, 1),
        conv.readout.value() * a3l + sx * (2.0 * lambda1 * b1 * m.corr_qp(0, 2) + 2.0 * lambda2 * b2 * m.corr_qp(1, 2)),
    ];
    Ok(ShiftPrediction {
        delta_q,
        delta_p,
        includes_readout_offset: true,
    })
}

/// One weak coupling `A q1` followed by readout on `q2`.
pub fn predict_single(m: &MomentSet, lambda: f64, aw: Complex64, a2l: f64, conv: SignConvention) -> Result<ShiftPrediction> {
    if m.dims() != 2 {
        return Err(Error::Dimension(format!("single-coupling shifts need 2 axes, got {}", m.dims())));
    }
    let (s, sx, r) = (conv.im_qq.value(), conv.im_qp.value(), conv.re.value());
    let b = aw.im;
    Ok(ShiftPrediction {
        delta_q: vec![s * 2.0 * lambda * b * m.var_q(0), s * 2.0 * lambda * b * m.corr_qq(0, 1)],
        delta_p: vec![
            r * lambda * aw.re,
            conv.readout.value() * a2l + sx * 2.0 * lambda * b * m.corr_qp(0, 1),
        ],
        includes_readout_offset: true,
    })
}

/// Position shifts for the simultaneous coupling `g (A p_x + B p_y)` on a
/// Laguerre-Gauss pointer of charge `l`; momenta are unchanged.
pub fn predict_lg(l: i32, g: f64, aw: Complex64, bw: Complex64, conv: SignConvention) -> ShiftPrediction {
    let (sx, r) = (conv.im_qp.value(), conv.re.value());
    let l = f64::from(l);
    ShiftPrediction {
        delta_q: vec![
            g * (-r * aw.re + sx * l * bw.im),
            g * (-r * bw.re - sx * l * aw.im),
        ],
        delta_p: vec![0.0, 0.0],
        includes_readout_offset: false,
    }
}

/// `max(|corr(p_x,y) - l/2|, |corr(p_y,x) - l/2|, |corr(x,y)|)`, the residual
/// against equal cross correlations `l/2`.
pub fn lg_compatibility(m: &MomentSet, l: i32) -> f64 {
    let half = f64::from(l) / 2.0;
    (m.corr_qp(1, 0) - half)
        .abs()
        .max((m.corr_qp(0, 1) - half).abs())
        .max(m.corr_qq(0, 1).abs())
}

/// Residual against the orbital-angular-momentum law `<x p_y> = l/2`,
/// `<y p_x> = -l/2`, `corr(x,y) = 0`, which is what the `p_x`/`p_y` coupling
/// shifts of [`predict_lg`] require under the `exp(-i p q)` kernel.
pub fn lg_oam_residual(m: &MomentSet, l: i32) -> f64 {
    let half = f64::from(l) / 2.0;
    (m.corr_qp(1, 0) + half)
        .abs()
        .max((m.corr_qp(0, 1) - half).abs())
        .max(m.corr_qq(0, 1).abs())
}

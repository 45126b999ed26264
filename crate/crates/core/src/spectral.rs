//! Unitary discrete Fourier pair between position and momentum samples.
//!
//! Position samples sit at `q_k = -L + k dq`, momentum samples at
//! `p_j = (j - N/2) dp` with `dq dp N = 2 pi`. The transform approximates
//! `(2 pi)^{-1/2} \int e^{-i p q} f(q) dq` and is exactly unitary with respect
//! to the Riemann inner products `sum |f|^2 dq` and `sum |f~|^2 dp`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::pointer::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    ToMomentum,
    ToPosition,
}

/// Transforms every lane along `axis`. `data` holds `ncomp` interleaved
/// components per grid point (`data[point * ncomp + c]`).
pub(crate) fn transform_axis(
    data: &mut [Complex64],
    grid: &Grid,
    axis: usize,
    ncomp: usize,
    dir: Direction,
) {
    let n = grid.points(axis);
    debug_assert_eq!(data.len(), grid.len() * ncomp);
    let fft: Arc<dyn Fft<f64>> = {
        let mut planner = FftPlanner::new();
        match dir {
            Direction::ToMomentum => planner.plan_fft_forward(n),
            Direction::ToPosition => planner.plan_fft_inverse(n),
        }
    };
    let half_sign = if (n / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
    let scale = match dir {
        Direction::ToMomentum => grid.dq(axis),
        Direction::ToPosition => grid.dp(axis),
    } / (2.0 * PI).sqrt();
    // pre- and post-multipliers: (-1)^k on the position index, (-1)^(j - N/2)
    // on the momentum index
    let (pre, post): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|k| {
            let alt = if k % 2 == 0 { 1.0 } else { -1.0 };
            match dir {
                Direction::ToMomentum => (alt, alt * half_sign * scale),
                Direction::ToPosition => (alt * half_sign, alt * scale),
            }
        })
        .unzip();

    let stride = grid.stride(axis);
    let mut lane = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for base in lane_starts(grid, axis) {
        for c in 0..ncomp {
            for (k, slot) in lane.iter_mut().enumerate() {
                *slot = data[(base + k * stride) * ncomp + c] * pre[k];
            }
            fft.process_with_scratch(&mut lane, &mut scratch);
            for (j, v) in lane.iter().enumerate() {
                data[(base + j * stride) * ncomp + c] = v * post[j];
            }
        }
    }
}

/// Flat indices of the first element of each lane along `axis`.
pub(crate) fn lane_starts(grid: &Grid, axis: usize) -> Vec<usize> {
    let stride = grid.stride(axis);
    let n = grid.points(axis);
    (0..grid.len())
        .filter(|&i| (i / stride).is_multiple_of(n))
        .collect()
}

/// `p_axis f` for a position-space single-component array.
pub(crate) fn momentum_operator(data: &[Complex64], grid: &Grid, axis: usize) -> Vec<Complex64> {
    let mut out = data.to_vec();
    transform_axis(&mut out, grid, axis, 1, Direction::ToMomentum);
    let stride = grid.stride(axis);
    let n = grid.points(axis);
    for (i, v) in out.iter_mut().enumerate() {
        *v *= grid.p(axis, (i / stride) % n);
    }
    transform_axis(&mut out, grid, axis, 1, Direction::ToPosition);
    out
}

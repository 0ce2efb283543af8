//! Gridded pointer evolution, used to cross-check the analytic branch sums.
//!
//! The initial Gaussian is sampled on a periodic grid, each branch is
//! translated by multiplying its Fourier transform by `exp(−i p λ o_k)`, and
//! the postselected combination is renormalized by quadrature.

use std::f64::consts::PI;

use rustfft::FftPlanner;

use super::{BranchedState, Grid};
use crate::error::{Error, Result};
use crate::hilbert::{StateVector, C64};

/// Postselected pointer density on the nodes `lo + j·(hi − lo)/n`,
/// `j = 0..n` (the upper end is the periodic image of `lo`).
pub fn postselected_density(b: &BranchedState, post: &StateVector, grid: &Grid) -> Result<Vec<[f64; 2]>> {
    let n = grid.points;
    if n < 2 || !(grid.hi > grid.lo) {
        return Err(Error::InvalidParameter(format!("bad grid {grid:?}")));
    }
    let dx = (grid.hi - grid.lo) / n as f64;
    let xs: Vec<f64> = (0..n).map(|j| grid.lo + j as f64 * dx).collect();
    let momenta: Vec<f64> = (0..n)
        .map(|m| {
            let f = if m < n.div_ceil(2) { m as f64 } else { m as f64 - n as f64 };
            2.0 * PI * f / (n as f64 * dx)
        })
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);

    let mut base: Vec<C64> = xs.iter().map(|x| C64::new(b.pointer.amplitude(*x, 0.0), 0.0)).collect();
    forward.process(&mut base);

    let mut chi = vec![C64::new(0.0, 0.0); n];
    for br in &b.branches {
        let c = post.inner(&br.state)?;
        if c == C64::new(0.0, 0.0) {
            continue;
        }
        let mut shifted: Vec<C64> = base
            .iter()
            .zip(&momenta)
            .map(|(a, p)| a * C64::from_polar(1.0, -p * br.shift))
            .collect();
        inverse.process(&mut shifted);
        for (acc, v) in chi.iter_mut().zip(&shifted) {
            *acc += c * v / n as f64;
        }
    }
    let norm: f64 = chi.iter().map(|v| v.norm_sqr()).sum::<f64>() * dx;
    if norm <= 0.0 {
        return Err(Error::NoClick);
    }
    Ok(xs
        .into_iter()
        .zip(chi)
        .map(|(x, v)| [x, v.norm_sqr() / norm])
        .collect())
}

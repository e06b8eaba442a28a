//! Information density, mutual information and the capacity sandwich.
//!
//! For any input law `P_X` with output mixture `P_Y`,
//!
//! ```text
//! I(P_X) = Σ_i p_i i(x_i; P_X)  ≤  C(A, λ)  ≤  max_{x ∈ [0, A]} i(x; P_X)
//! ```
//!
//! where `i(x; P_X) = D(P_{Y|X}(·|x) ‖ P_Y)`. The gap between the two sides
//! certifies how far `P_X` is from capacity. Everything is in nats.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, OutputTruncation};
use crate::dist::{ChannelRows, InputDistribution, OutputDistribution};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Discretization of `[0, A]` used to locate `argmax_x i(x; P_X)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig<T> {
    /// Grid spacing is `min(max_spacing, A / min_cells)`.
    pub max_spacing: T,
    pub min_cells: usize,
    /// Absolute x-tolerance of the golden-section refinement.
    pub refine_tol: T,
}

impl<T: Real> Default for ScanConfig<T> {
    fn default() -> Self {
        Self {
            max_spacing: T::lit(1e-3),
            min_cells: 10_000,
            refine_tol: T::lit(1e-8),
        }
    }
}

impl<T: Real> ScanConfig<T> {
    /// Evenly spaced grid over `[0, A]`, both endpoints included.
    pub fn grid(&self, amplitude: T) -> Vec<T> {
        if amplitude <= T::zero() {
            return vec![T::zero()];
        }
        let spacing = self.max_spacing.min(amplitude / T::from_count(self.min_cells));
        let cells = (amplitude / spacing).ceil().to_usize().unwrap_or(1).max(1);
        let n = T::from_count(cells);
        (0..=cells)
            .map(|j| {
                if j == cells {
                    amplitude
                } else {
                    amplitude * T::from_count(j) / n
                }
            })
            .collect()
    }
}

/// Information density over the support and over a scan of `[0, A]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoDensityProfile<T> {
    /// `i(x_i; P_X)` for each support point.
    pub at_support: Vec<T>,
    /// `(x, i(x; P_X))` on the scan grid.
    pub scan_grid: Vec<(T, T)>,
    /// Refined maximizer of the scan and its density.
    pub peak: (T, T),
}

impl<T: Real> InfoDensityProfile<T> {
    /// Largest density seen anywhere: scan, refinement or support.
    pub fn max_density(&self) -> T {
        self.at_support
            .iter()
            .copied()
            .fold(self.peak.1, |acc, v| acc.max(v))
    }
}

/// `i(x; P_X)` without the domain check.
pub(crate) fn density_unchecked<T: Real>(
    x: T,
    out: &OutputDistribution<T>,
    params: &ChannelParams<T>,
    trunc: &OutputTruncation<T>,
) -> T {
    let log_q = out.log_probs();
    let mean = params.mean(x);
    if mean == T::zero() {
        return -log_q[0];
    }
    let ln_mean = mean.ln();
    let mut acc = T::zero();
    for (k, &lq) in log_q.iter().enumerate() {
        let lp = T::from_count(k) * ln_mean - mean - trunc.ln_fact(k);
        let p = lp.exp();
        if p > T::zero() {
            acc = acc + p * (lp - lq);
        }
    }
    acc
}

/// Information density `i(x; P_X) = D(P_{Y|X}(·|x) ‖ P_Y)` in nats, where
/// `out` is the output law induced by `P_X`.
pub fn info_density<T: Real>(
    x: T,
    out: &OutputDistribution<T>,
    params: &ChannelParams<T>,
    trunc: &OutputTruncation<T>,
) -> Result<T> {
    params.check_input(x)?;
    if out.log_probs().len() != trunc.len() {
        return Err(Error::InvalidDistribution(format!(
            "output law has {} symbols, truncation expects {}",
            out.log_probs().len(),
            trunc.len()
        )));
    }
    Ok(density_unchecked(x, out, params, trunc))
}

/// `I(X; Y) = Σ_i p_i i(x_i; P_X)` in nats.
pub fn mutual_information<T: Real>(
    dist: &InputDistribution<T>,
    params: &ChannelParams<T>,
    trunc: &OutputTruncation<T>,
) -> Result<T> {
    dist.check_masses(params)
        .map_err(|v| Error::InvalidDistribution(v.to_string()))?;
    let rows = ChannelRows::new(dist.points(), params, trunc);
    Ok(mutual_information_rows(&rows, dist.probs()))
}

pub(crate) fn mutual_information_rows<T: Real>(rows: &ChannelRows<T>, probs: &[T]) -> T {
    let out = rows.mixture(probs);
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| p * rows.density(i, &out))
        .fold(T::zero(), |acc, v| acc + v)
}

/// Evaluates the density on the support and on the scan grid, then refines
/// the grid maximizer by golden-section search between its neighbours.
pub fn density_profile<T: Real>(
    dist: &InputDistribution<T>,
    out: &OutputDistribution<T>,
    params: &ChannelParams<T>,
    trunc: &OutputTruncation<T>,
    scan: &ScanConfig<T>,
) -> Result<InfoDensityProfile<T>> {
    for &x in dist.points() {
        params.check_input(x)?;
    }
    let at_support = dist
        .points()
        .iter()
        .map(|&x| density_unchecked(x, out, params, trunc))
        .collect();

    let grid = scan.grid(params.amplitude());
    let scan_grid: Vec<(T, T)> = grid
        .par_iter()
        .map(|&x| (x, density_unchecked(x, out, params, trunc)))
        .collect();

    // first index attaining the maximum, for determinism
    let mut best = 0;
    for (j, &(_, v)) in scan_grid.iter().enumerate() {
        if v > scan_grid[best].1 {
            best = j;
        }
    }
    let lo = scan_grid[best.saturating_sub(1)].0;
    let hi = scan_grid[(best + 1).min(scan_grid.len() - 1)].0;
    let mut peak = scan_grid[best];
    if hi > lo {
        let refined = golden_section_max(
            |x| density_unchecked(x, out, params, trunc),
            lo,
            hi,
            scan.refine_tol,
        );
        if refined.1 > peak.1 {
            peak = refined;
        }
    }
    Ok(InfoDensityProfile {
        at_support,
        scan_grid,
        peak,
    })
}

/// Golden-section search for the maximum of `f` on `[lo, hi]`.
pub(crate) fn golden_section_max<T: Real, F: Fn(T) -> T>(f: F, lo: T, hi: T, tol: T) -> (T, T) {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) * T::lit(0.5);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `(I(P_X), max_x i(x; P_X))`: primal lower and dual upper bounds on
/// capacity.
pub fn capacity_sandwich<T: Real>(
    dist: &InputDistribution<T>,
    profile: &InfoDensityProfile<T>,
) -> (T, T) {
    let lower: T = dist
        .probs()
        .iter()
        .zip(&profile.at_support)
        .map(|(&p, &d)| p * d)
        .fold(T::zero(), |acc, v| acc + v);
    (lower, profile.max_density())
}

//! Projected gradient ascent on the support locations at fixed
//! probabilities, with Armijo backtracking.
//!
//! With `I = Σ_i p_i Σ_k P(k|x_i) ln(P(k|x_i) / P_Y(k))`, the terms coming
//! from the dependence of `P_Y` on `x_i` cancel because `Σ_k ∂P(k|x)/∂x = 0`,
//! which leaves
//!
//! ```text
//! ∂I/∂x_i = p_i Σ_k [P(k-1|x_i) - P(k|x_i)] ln(P(k|x_i) / P_Y(k)).
//! ```
//!
//! The points at 0 and A are pinned and never move.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, OutputTruncation};
use crate::dist::{ChannelRows, InputDistribution};
use crate::error::{Error, Result};
use crate::information::mutual_information_rows;
use crate::scalar::Real;

/// Armijo backtracking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig<T> {
    pub initial_step: T,
    pub shrink_factor: T,
    pub armijo_coefficient: T,
    pub max_backtracks: usize,
    pub precondition: Preconditioner,
}

/// Diagonal scaling applied to the gradient before the line search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    /// Plain gradient `g`.
    None,
    /// `g_i / p_i`: the slope of the information density at `x_i`.
    Mass,
    /// `g_i / (p_i max(|i''(x_i)|, h_min))`: a diagonal Newton step on each
    /// point's information density.
    Curvature,
}

impl<T: Real> Default for LineSearchConfig<T> {
    fn default() -> Self {
        Self {
            initial_step: T::one(),
            shrink_factor: T::lit(0.5),
            armijo_coefficient: T::lit(1e-4),
            max_backtracks: 40,
            precondition: Preconditioner::Curvature,
        }
    }
}

impl<T: Real> LineSearchConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v > T::zero() && v < T::one();
        if !(self.initial_step > T::zero() && self.initial_step.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "initial step must be positive, got {}",
                self.initial_step
            )));
        }
        if !unit(self.shrink_factor) {
            return Err(Error::InvalidConfig(format!(
                "shrink factor must lie in (0, 1), got {}",
                self.shrink_factor
            )));
        }
        if !unit(self.armijo_coefficient) {
            return Err(Error::InvalidConfig(format!(
                "Armijo coefficient must lie in (0, 1), got {}",
                self.armijo_coefficient
            )));
        }
        Ok(())
    }
}

/// Slope and curvature of `x ↦ i(x; P_X)` at support point `i`, holding
/// `P_Y` fixed.
fn density_derivatives<T: Real>(rows: &ChannelRows<T>, i: usize, log_q: &[T]) -> (T, T) {
    let log_p = rows.log_row(i);
    let p = rows.lin_row(i);
    let two = T::lit(2.0);
    let mut slope = T::zero();
    let mut curvature = T::zero();
    for k in 0..p.len() {
        let p1 = if k >= 1 { p[k - 1] } else { T::zero() };
        let p2 = if k >= 2 { p[k - 2] } else { T::zero() };
        let first = p1 - p[k];
        if !log_p[k].is_finite() {
            continue;
        }
        let log_ratio = log_p[k] - log_q[k];
        if first != T::zero() {
            slope = slope + first * log_ratio;
            if p[k] > T::zero() {
                curvature = curvature + first * first / p[k];
            }
        }
        let second = p2 - two * p1 + p[k];
        if second != T::zero() {
            curvature = curvature + second * log_ratio;
        }
    }
    (slope, curvature)
}

/// Gradient of `I` and the per-point curvature of the information density.
fn gradient_from_rows<T: Real>(
    dist: &InputDistribution<T>,
    rows: &ChannelRows<T>,
    amplitude: T,
) -> (Vec<T>, Vec<T>) {
    let out = rows.mixture(dist.probs());
    let log_q = out.log_probs();
    (0..dist.len())
        .map(|i| {
            if dist.is_pinned(i, amplitude) {
                return (T::zero(), T::zero());
            }
            let (slope, curvature) = density_derivatives(rows, i, log_q);
            (dist.probs()[i] * slope, curvature)
        })
        .unzip()
}

/// Smallest curvature magnitude used by [`Preconditioner::Curvature`].
const MIN_CURVATURE: f64 = 1e-3;

/// `∂I/∂x_i` for every support point; zero at the pinned endpoints.
pub fn mi_gradient<T: Real>(
    dist: &InputDistribution<T>,
    params: &ChannelParams<T>,
    trunc: &OutputTruncation<T>,
) -> Result<Vec<T>> {
    dist.check_masses(params)
        .map_err(|v| Error::InvalidDistribution(v.to_string()))?;
    let rows = ChannelRows::new(dist.points(), params, trunc);
    Ok(gradient_from_rows(dist, &rows, params.amplitude()).0)
}

/// One projected ascent step. Candidates `clamp(x + t d, 0, A)` are tried
/// for `t = initial_step · shrink^j`, where `d` is the gradient scaled by
/// the configured [`Preconditioner`]; the first one that keeps the points
/// strictly ordered and satisfies `I(x_t) ≥ I(x) + c gᵀ(x_t − x)` with a
/// strict increase is accepted. Otherwise the input comes back unchanged.
pub fn ga_step<T: Real>(
    dist: &InputDistribution<T>,
    cfg: &LineSearchConfig<T>,
    params: &ChannelParams<T>,
    trunc: &OutputTruncation<T>,
) -> Result<InputDistribution<T>> {
    cfg.validate()?;
    dist.check_masses(params)
        .map_err(|v| Error::InvalidDistribution(v.to_string()))?;
    Ok(step_unchecked(dist, cfg, params, trunc))
}

fn step_unchecked<T: Real>(
    dist: &InputDistribution<T>,
    cfg: &LineSearchConfig<T>,
    params: &ChannelParams<T>,
    trunc: &OutputTruncation<T>,
) -> InputDistribution<T> {
    let amplitude = params.amplitude();
    let rows = ChannelRows::new(dist.points(), params, trunc);
    let (grad, curvature) = gradient_from_rows(dist, &rows, amplitude);
    if grad.iter().all(|g| *g == T::zero()) || grad.iter().any(|g| !g.is_finite()) {
        return dist.clone();
    }
    let floor = T::lit(MIN_CURVATURE);
    let direction: Vec<T> = match cfg.precondition {
        Preconditioner::None => grad.clone(),
        Preconditioner::Mass => grad.iter().zip(dist.probs()).map(|(&g, &p)| g / p).collect(),
        Preconditioner::Curvature => grad
            .iter()
            .zip(dist.probs())
            .zip(&curvature)
            .map(|((&g, &p), &h)| g / (p * h.abs().max(floor)))
            .collect(),
    };
    let base = mutual_information_rows(&rows, dist.probs());
    let mut step = cfg.initial_step;
    for _ in 0..=cfg.max_backtracks {
        let candidate: Vec<T> = dist
            .points()
            .iter()
            .zip(&direction)
            .map(|(&x, &d)| (x + step * d).max(T::zero()).min(amplitude))
            .collect();
        let ordered = candidate.windows(2).all(|w| w[0] < w[1]);
        if ordered {
            let ascent: T = candidate
                .iter()
                .zip(dist.points())
                .zip(&grad)
                .map(|((&c, &x), &g)| g * (c - x))
                .sum();
            let rows = ChannelRows::new(&candidate, params, trunc);
            let value = mutual_information_rows(&rows, dist.probs());
            if value > base && value >= base + cfg.armijo_coefficient * ascent {
                let mut next = dist.clone();
                next.set_points(candidate);
                return next;
            }
        }
        step = step * cfg.shrink_factor;
    }
    dist.clone()
}

/// `n_iters` consecutive [`ga_step`]s.
pub fn ga_run<T: Real>(
    dist: &InputDistribution<T>,
    n_iters: usize,
    cfg: &LineSearchConfig<T>,
    params: &ChannelParams<T>,
    trunc: &OutputTruncation<T>,
) -> Result<InputDistribution<T>> {
    if n_iters == 0 {
        return Err(Error::InvalidConfig("n_iters must be at least 1".into()));
    }
    cfg.validate()?;
    dist.check_masses(params)
        .map_err(|v| Error::InvalidDistribution(v.to_string()))?;
    let mut current = dist.clone();
    for _ in 0..n_iters {
        let next = step_unchecked(&current, cfg, params, trunc);
        if next == current {
            break;
        }
        current = next;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::truncation_for;
    use crate::information::mutual_information;

    fn setup(a: f64, l: f64) -> (ChannelParams<f64>, OutputTruncation<f64>) {
        let p = ChannelParams::new(a, l).unwrap();
        let t = truncation_for(&p, 1e-12).unwrap().with_margin(10);
        (p, t)
    }

    fn finite_difference(
        d: &InputDistribution<f64>,
        i: usize,
        h: f64,
        p: &ChannelParams<f64>,
        t: &OutputTruncation<f64>,
    ) -> f64 {
        let shifted = |delta: f64| {
            let mut pts = d.points().to_vec();
            pts[i] += delta;
            InputDistribution::new(pts, d.probs().to_vec())
        };
        let up = mutual_information(&shifted(h), p, t).unwrap();
        let down = mutual_information(&shifted(-h), p, t).unwrap();
        (up - down) / (2.0 * h)
    }

    #[test]
    fn single_interior_point_matches_finite_difference() {
        // Off-support points with p = 1 have zero gradient (I = 0 for all x);
        // a two-point law exercises the mixture dependence instead.
        let (p, t) = setup(5.0, 0.5);
        let d = InputDistribution::new(vec![0.0, 2.3, 5.0], vec![0.3, 0.4, 0.3]);
        let g = mi_gradient(&d, &p, &t).unwrap();
        let fd = finite_difference(&d, 1, 1e-5, &p, &t);
        assert!((g[1] - fd).abs() <= 1e-6 * fd.abs().max(1e-8), "{} vs {fd}", g[1]);
    }

    #[test]
    fn pinned_endpoints_have_zero_gradient() {
        let (p, t) = setup(4.0, 1.0);
        let d = InputDistribution::uniform(vec![0.0, 1.5, 4.0]);
        let g = mi_gradient(&d, &p, &t).unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(g[2], 0.0);
        assert_ne!(g[1], 0.0);
    }

    #[test]
    fn binary_support_is_fixed() {
        let (p, t) = setup(3.0, 0.0);
        let d = InputDistribution::uniform(vec![0.0, 3.0]);
        let cfg = LineSearchConfig::default();
        assert_eq!(ga_step(&d, &cfg, &p, &t).unwrap(), d);
        assert_eq!(ga_run(&d, 20, &cfg, &p, &t).unwrap(), d);
    }

    #[test]
    fn step_never_decreases_information() {
        let (p, t) = setup(10.0, 1.0);
        let cfg = LineSearchConfig::default();
        let mut d = InputDistribution::new(
            vec![0.0, 0.9, 3.1, 6.0, 10.0],
            vec![0.3, 0.1, 0.2, 0.15, 0.25],
        );
        let mut last = mutual_information(&d, &p, &t).unwrap();
        for _ in 0..30 {
            d = ga_step(&d, &cfg, &p, &t).unwrap();
            let mi = mutual_information(&d, &p, &t).unwrap();
            assert!(mi >= last);
            assert!(d.points().windows(2).all(|w| w[0] < w[1]));
            assert!(d.points().iter().all(|&x| (0.0..=10.0).contains(&x)));
            last = mi;
        }
    }

    #[test]
    fn run_of_one_is_a_step() {
        let (p, t) = setup(6.0, 0.0);
        let cfg = LineSearchConfig::default();
        let d = InputDistribution::uniform(vec![0.0, 2.0, 6.0]);
        assert_eq!(
            ga_run(&d, 1, &cfg, &p, &t).unwrap(),
            ga_step(&d, &cfg, &p, &t).unwrap()
        );
    }

    #[test]
    fn rejects_bad_line_search_config() {
        let mut cfg = LineSearchConfig::<f64>::default();
        cfg.shrink_factor = 1.5;
        assert!(cfg.validate().is_err());
        cfg = LineSearchConfig::default();
        cfg.initial_step = 0.0;
        assert!(cfg.validate().is_err());
        cfg = LineSearchConfig::default();
        cfg.armijo_coefficient = 0.0;
        assert!(cfg.validate().is_err());
    }
}

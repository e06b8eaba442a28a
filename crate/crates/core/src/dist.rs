//! Finite-support input distributions and the output mixtures they induce.

use std::fmt;

use crate::channel::{ChannelParams, OutputTruncation};
use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Real};

/// Candidate input law: mass `probs[i]` at location `points[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputDistribution<T> {
    points: Vec<T>,
    probs: Vec<T>,
}

/// First invariant an [`InputDistribution`] fails.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    LengthMismatch { points: usize, probs: usize },
    OutOfRange { index: usize, x: f64 },
    NotIncreasing { index: usize },
    NonPositiveProbability { index: usize, p: f64 },
    BadTotal { total: f64 },
    MissingZero,
    MissingAmplitude,
    TooClose { index: usize, gap: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "support is empty"),
            Violation::LengthMismatch { points, probs } => {
                write!(f, "{points} points but {probs} probabilities")
            }
            Violation::OutOfRange { index, x } => {
                write!(f, "point {index} at {x} lies outside [0, A]")
            }
            Violation::NotIncreasing { index } => {
                write!(f, "points not strictly increasing at index {index}")
            }
            Violation::NonPositiveProbability { index, p } => {
                write!(f, "probability {index} is {p}, must be positive")
            }
            Violation::BadTotal { total } => write!(f, "probabilities sum to {total}"),
            Violation::MissingZero => write!(f, "endpoint 0 missing"),
            Violation::MissingAmplitude => write!(f, "endpoint A missing"),
            Violation::TooClose { index, gap } => {
                write!(f, "points {index} and {} are only {gap} apart", index + 1)
            }
        }
    }
}

impl<T: Real> InputDistribution<T> {
    /// Wraps paired lists without checking them; see [`Self::validate`].
    pub fn new(points: Vec<T>, probs: Vec<T>) -> Self {
        Self { points, probs }
    }

    /// Uniform probabilities over `points`.
    pub fn uniform(points: Vec<T>) -> Self {
        let p = T::one() / T::from_count(points.len().max(1));
        let probs = vec![p; points.len()];
        Self { points, probs }
    }

    /// Point mass at `x`.
    pub fn point_mass(x: T) -> Self {
        Self {
            points: vec![x],
            probs: vec![T::one()],
        }
    }

    #[inline]
    pub fn points(&self) -> &[T] {
        &self.points
    }

    #[inline]
    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_parts(self) -> (Vec<T>, Vec<T>) {
        (self.points, self.probs)
    }

    pub(crate) fn set_probs(&mut self, probs: Vec<T>) {
        debug_assert_eq!(probs.len(), self.points.len());
        self.probs = probs;
    }

    pub(crate) fn set_points(&mut self, points: Vec<T>) {
        debug_assert_eq!(points.len(), self.probs.len());
        self.points = points;
    }

    /// Whether index `i` is a pinned endpoint (the point at 0 or at A).
    pub fn is_pinned(&self, i: usize, amplitude: T) -> bool {
        (i == 0 && self.points[0] == T::zero())
            || (i + 1 == self.points.len() && self.points[i] == amplitude)
    }

    fn total_tolerance() -> T {
        T::lit(1e-12).max(T::epsilon() * T::lit(64.0))
    }

    /// Checks the structural invariants: matching lengths, strictly
    /// increasing points in `[0, A]`, positive probabilities summing to one,
    /// and both endpoints present.
    pub fn validate(&self, params: &ChannelParams<T>) -> std::result::Result<(), Violation> {
        self.check_masses(params)?;
        if self.points[0] != T::zero() {
            return Err(Violation::MissingZero);
        }
        if *self.points.last().unwrap() != params.amplitude() {
            return Err(Violation::MissingAmplitude);
        }
        Ok(())
    }

    /// [`Self::validate`] without the endpoint requirement.
    pub(crate) fn check_masses(
        &self,
        params: &ChannelParams<T>,
    ) -> std::result::Result<(), Violation> {
        if self.points.is_empty() {
            return Err(Violation::Empty);
        }
        if self.points.len() != self.probs.len() {
            return Err(Violation::LengthMismatch {
                points: self.points.len(),
                probs: self.probs.len(),
            });
        }
        for (index, &x) in self.points.iter().enumerate() {
            if params.check_input(x).is_err() {
                return Err(Violation::OutOfRange {
                    index,
                    x: x.as_f64(),
                });
            }
            if index > 0 && x <= self.points[index - 1] {
                return Err(Violation::NotIncreasing { index });
            }
        }
        for (index, &p) in self.probs.iter().enumerate() {
            if !(p > T::zero()) || !p.is_finite() {
                return Err(Violation::NonPositiveProbability {
                    index,
                    p: p.as_f64(),
                });
            }
        }
        let total: T = self.probs.iter().copied().sum();
        if (total - T::one()).abs() > Self::total_tolerance() {
            return Err(Violation::BadTotal {
                total: total.as_f64(),
            });
        }
        Ok(())
    }

    /// Errors unless consecutive points are at least `min_spacing` apart.
    pub fn check_spacing(&self, min_spacing: T) -> std::result::Result<(), Violation> {
        for (index, w) in self.points.windows(2).enumerate() {
            let gap = w[1] - w[0];
            if gap < min_spacing {
                return Err(Violation::TooClose {
                    index,
                    gap: gap.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Merges maximal runs of neighbours closer than `min_spacing` into one
    /// point carrying the summed probability. The merged point sits at the
    /// probability-weighted mean of the run, except that a run holding the
    /// point at 0 or at A collapses onto that endpoint. The two endpoints are
    /// never merged with each other.
    pub fn cluster(&self, min_spacing: T, params: &ChannelParams<T>) -> Self {
        let n = self.points.len();
        if n < 2 {
            return self.clone();
        }
        let amplitude = params.amplitude();
        let mut points = Vec::with_capacity(n);
        let mut probs = Vec::with_capacity(n);
        let mut start = 0;
        while start < n {
            let mut end = start;
            while end + 1 < n && self.points[end + 1] - self.points[end] < min_spacing {
                end += 1;
            }
            let has_zero = self.is_pinned(start, amplitude) && start == 0;
            let has_amp = end + 1 == n && self.is_pinned(end, amplitude);
            if start == end {
                points.push(self.points[start]);
                probs.push(self.probs[start]);
            } else if has_zero && has_amp {
                // Degenerate A < min_spacing: fold interior mass onto the
                // nearer endpoint.
                let half = amplitude * T::lit(0.5);
                let mut low = T::zero();
                let mut high = T::zero();
                for i in start..=end {
                    if self.points[i] <= half && i != end {
                        low = low + self.probs[i];
                    } else {
                        high = high + self.probs[i];
                    }
                }
                points.extend([T::zero(), amplitude]);
                probs.extend([low, high]);
            } else {
                let mass: T = self.probs[start..=end].iter().copied().sum();
                let location = if has_zero {
                    T::zero()
                } else if has_amp {
                    amplitude
                } else {
                    let moment: T = (start..=end)
                        .map(|i| self.probs[i] * self.points[i])
                        .sum();
                    (moment / mass)
                        .max(self.points[start])
                        .min(self.points[end])
                };
                points.push(location);
                probs.push(mass);
            }
            start = end + 1;
        }
        Self { points, probs }
    }

    /// Drops non-endpoint points whose probability is below `min_prob` and
    /// renormalizes. Returns whether anything was removed.
    pub fn prune(&mut self, min_prob: T, params: &ChannelParams<T>) -> bool {
        let amplitude = params.amplitude();
        let keep: Vec<bool> = (0..self.points.len())
            .map(|i| self.probs[i] >= min_prob || self.is_pinned(i, amplitude))
            .collect();
        if keep.iter().all(|&k| k) {
            return false;
        }
        let mut points = Vec::with_capacity(self.points.len());
        let mut probs = Vec::with_capacity(self.points.len());
        for (i, &k) in keep.iter().enumerate() {
            if k {
                points.push(self.points[i]);
                probs.push(self.probs[i]);
            }
        }
        self.points = points;
        self.probs = probs;
        self.normalize();
        true
    }

    /// Rescales probabilities to sum to one.
    pub fn normalize(&mut self) {
        let total: T = self.probs.iter().copied().sum();
        if total > T::zero() {
            for p in &mut self.probs {
                *p = *p / total;
            }
        }
    }

    /// Index of the point closest to `x`.
    pub fn nearest(&self, x: T) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for (i, &p) in self.points.iter().enumerate() {
            let d = (p - x).abs();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Output law `P_Y` on `{0, …, k_max}`, stored as log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputDistribution<T> {
    log_probs: Vec<T>,
}

impl<T: Real> OutputDistribution<T> {
    pub fn from_log_probs(log_probs: Vec<T>) -> Self {
        Self { log_probs }
    }

    #[inline]
    pub fn log_probs(&self) -> &[T] {
        &self.log_probs
    }

    /// Total retained mass `Σ_k P_Y(k)`.
    pub fn total_mass(&self) -> T {
        self.log_probs.iter().map(|v| v.exp()).sum()
    }
}

/// Per-point channel rows `ln P(k | x_i)` and `P(k | x_i)`, reused across
/// iterations while the support locations stay fixed.
#[derive(Debug, Clone)]
pub(crate) struct ChannelRows<T> {
    width: usize,
    log: Vec<T>,
    lin: Vec<T>,
}

impl<T: Real> ChannelRows<T> {
    pub(crate) fn new(points: &[T], params: &ChannelParams<T>, trunc: &OutputTruncation<T>) -> Self {
        let width = trunc.len();
        let mut log = vec![T::zero(); width * points.len()];
        for (i, &x) in points.iter().enumerate() {
            trunc.fill_log_row(params.mean(x), &mut log[i * width..(i + 1) * width]);
        }
        let lin = log.iter().map(|v| v.exp()).collect();
        Self { width, log, lin }
    }

    #[inline]
    pub(crate) fn log_row(&self, i: usize) -> &[T] {
        &self.log[i * self.width..(i + 1) * self.width]
    }

    #[inline]
    pub(crate) fn lin_row(&self, i: usize) -> &[T] {
        &self.lin[i * self.width..(i + 1) * self.width]
    }

    /// `ln P_Y(k) = ln Σ_i p_i P(k | x_i)` for each `k`. Sums in the linear
    /// domain and falls back to log-sum-exp where that would underflow.
    pub(crate) fn mixture(&self, probs: &[T]) -> OutputDistribution<T> {
        let safe = T::min_positive_value().sqrt();
        let mut log_w: Option<Vec<T>> = None;
        let mut terms = Vec::new();
        let log_probs = (0..self.width)
            .map(|k| {
                let linear: T = probs
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| p * self.lin[i * self.width + k])
                    .sum();
                if linear > safe {
                    return linear.ln();
                }
                let log_w = log_w.get_or_insert_with(|| probs.iter().map(|p| p.ln()).collect());
                terms.clear();
                terms.extend((0..probs.len()).map(|i| log_w[i] + self.log[i * self.width + k]));
                log_sum_exp(&terms)
            })
            .collect();
        OutputDistribution { log_probs }
    }

    /// `D(P(·|x_i) ‖ P_Y)` for support point `i`.
    pub(crate) fn density(&self, i: usize, out: &OutputDistribution<T>) -> T {
        kl_row(self.log_row(i), self.lin_row(i), out.log_probs())
    }
}

/// `Σ_k P(k) [ln P(k) - ln Q(k)]`, skipping zero-mass terms.
#[inline]
pub(crate) fn kl_row<T: Real>(log_p: &[T], p: &[T], log_q: &[T]) -> T {
    let mut acc = T::zero();
    for k in 0..p.len() {
        if p[k] > T::zero() {
            acc = acc + p[k] * (log_p[k] - log_q[k]);
        }
    }
    acc
}

/// Output mixture `P_Y = Σ_i p_i P_{Y|X}(· | x_i)`, via log-sum-exp.
pub fn induced_output<T: Real>(
    dist: &InputDistribution<T>,
    params: &ChannelParams<T>,
    trunc: &OutputTruncation<T>,
) -> Result<OutputDistribution<T>> {
    dist.check_masses(params)
        .map_err(|v| Error::InvalidDistribution(v.to_string()))?;
    Ok(ChannelRows::new(dist.points(), params, trunc).mixture(dist.probs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::truncation_for;

    fn params(a: f64, l: f64) -> ChannelParams<f64> {
        ChannelParams::new(a, l).unwrap()
    }

    #[test]
    fn validate_examples() {
        let p = params(3.0, 0.0);
        assert_eq!(
            InputDistribution::new(vec![0.0, 3.0], vec![0.5, 0.5]).validate(&p),
            Ok(())
        );
        let err = InputDistribution::new(vec![0.0, 3.0], vec![0.6, 0.6])
            .validate(&p)
            .unwrap_err();
        assert_eq!(err.to_string(), "probabilities sum to 1.2");
        let err = InputDistribution::new(vec![0.5, 3.0], vec![0.5, 0.5])
            .validate(&p)
            .unwrap_err();
        assert_eq!(err.to_string(), "endpoint 0 missing");
    }

    #[test]
    fn validate_catches_structure() {
        let p = params(3.0, 0.0);
        let v = |pts: Vec<f64>, pr: Vec<f64>| InputDistribution::new(pts, pr).validate(&p);
        assert_eq!(v(vec![], vec![]), Err(Violation::Empty));
        assert!(matches!(
            v(vec![0.0, 3.0], vec![1.0]),
            Err(Violation::LengthMismatch { .. })
        ));
        assert!(matches!(
            v(vec![0.0, 2.0, 1.0, 3.0], vec![0.25; 4]),
            Err(Violation::NotIncreasing { index: 2 })
        ));
        assert!(matches!(
            v(vec![0.0, 3.5], vec![0.5, 0.5]),
            Err(Violation::OutOfRange { index: 1, .. })
        ));
        assert!(matches!(
            v(vec![0.0, 1.0, 3.0], vec![0.5, 0.0, 0.5]),
            Err(Violation::NonPositiveProbability { index: 1, .. })
        ));
        assert_eq!(
            v(vec![0.0, 2.0], vec![0.5, 0.5]),
            Err(Violation::MissingAmplitude)
        );
    }

    #[test]
    fn degenerate_amplitude_is_single_point() {
        let p = params(0.0, 2.0);
        assert_eq!(InputDistribution::point_mass(0.0).validate(&p), Ok(()));
    }

    #[test]
    fn cluster_merges_run_at_weighted_mean() {
        let p = params(5.0, 0.0);
        let d = InputDistribution::new(vec![0.0, 1.0, 1.005, 5.0], vec![0.3, 0.2, 0.2, 0.3]);
        let c = d.cluster(0.01, &p);
        assert_eq!(c.probs(), &[0.3, 0.4, 0.3]);
        assert!((c.points()[1] - 1.0025).abs() < 1e-15);
        assert_eq!(c.points()[0], 0.0);
        assert_eq!(c.points()[2], 5.0);
    }

    #[test]
    fn cluster_identity_when_spread() {
        let p = params(5.0, 0.0);
        let d = InputDistribution::new(vec![0.0, 1.0, 2.5, 5.0], vec![0.25; 4]);
        assert_eq!(d.cluster(0.01, &p), d);
    }

    #[test]
    fn cluster_collapses_onto_endpoints() {
        let p = params(4.0, 0.0);
        let d = InputDistribution::new(vec![0.0, 0.004, 2.0, 4.0], vec![0.3, 0.1, 0.2, 0.4]);
        let c = d.cluster(0.01, &p);
        assert_eq!(c.points(), &[0.0, 2.0, 4.0]);
        assert!((c.probs()[0] - 0.4).abs() < 1e-15);

        let d = InputDistribution::new(vec![0.0, 2.0, 3.995, 4.0], vec![0.3, 0.2, 0.1, 0.4]);
        let c = d.cluster(0.01, &p);
        assert_eq!(c.points(), &[0.0, 2.0, 4.0]);
        assert!((c.probs()[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cluster_keeps_both_endpoints_for_tiny_amplitude() {
        let p = params(0.005, 0.0);
        let d = InputDistribution::new(vec![0.0, 0.001, 0.005], vec![0.4, 0.2, 0.4]);
        let c = d.cluster(0.01, &p);
        assert_eq!(c.points(), &[0.0, 0.005]);
        assert!((c.probs()[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn prune_keeps_endpoints() {
        let p = params(4.0, 0.0);
        let mut d = InputDistribution::new(
            vec![0.0, 1.0, 2.0, 4.0],
            vec![1e-14, 0.5, 1e-13, 0.5 - 1.1e-13],
        );
        assert!(d.prune(1e-12, &p));
        assert_eq!(d.points(), &[0.0, 1.0, 4.0]);
        let total: f64 = d.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(!d.prune(1e-12, &p));
    }

    #[test]
    fn induced_output_point_mass_at_zero() {
        let p = params(1.0, 0.0);
        let t = truncation_for(&p, 1e-12).unwrap();
        let out = induced_output(&InputDistribution::point_mass(0.0), &p, &t).unwrap();
        assert_eq!(out.log_probs()[0], 0.0);
        assert!(out.log_probs()[1..].iter().all(|v| *v == f64::NEG_INFINITY));
    }

    #[test]
    fn induced_output_uniform_binary_closed_form() {
        let p = params(1.0, 0.0);
        let t = truncation_for(&p, 1e-12).unwrap().with_margin(10);
        let d = InputDistribution::uniform(vec![0.0, 1.0]);
        let out = induced_output(&d, &p, &t).unwrap();
        assert!((out.log_probs()[0].exp() - 0.683_939_720_585_721_2).abs() < 1e-15);
        let mut fact = 1.0;
        for k in 1..8 {
            fact *= k as f64;
            let expected = (-1f64).exp() / (2.0 * fact);
            assert!((out.log_probs()[k].exp() - expected).abs() < 1e-15 * expected.max(1e-3));
        }
        let mass = out.total_mass();
        assert!(mass <= 1.0 + 1e-15 && mass >= 1.0 - 1e-12);
    }

    #[test]
    fn induced_output_rejects_out_of_range() {
        let p = params(1.0, 0.0);
        let t = truncation_for(&p, 1e-12).unwrap();
        let d = InputDistribution::uniform(vec![0.0, 2.0]);
        assert!(induced_output(&d, &p, &t).is_err());
    }
}

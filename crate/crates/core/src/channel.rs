//! Poisson channel law with dark current.
//!
//! Given input `x ∈ [0, A]` the output is Poisson with mean `x + λ`. All
//! probabilities are handled in the log domain; `0⁰ = 1` and `0! = 1`, so a
//! zero mean is the point mass at `k = 0`.

use crate::error::{Error, Result};
use crate::scalar::{ln_factorial, Real};

/// Amplitude constraint `A` and dark current `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams<T> {
    amplitude: T,
    dark_current: T,
}

impl<T: Real> ChannelParams<T> {
    pub fn new(amplitude: T, dark_current: T) -> Result<Self> {
        if !amplitude.is_finite() || amplitude < T::zero() {
            return Err(Error::InvalidParams(format!(
                "amplitude must be finite and nonnegative, got {amplitude}"
            )));
        }
        if !dark_current.is_finite() || dark_current < T::zero() {
            return Err(Error::InvalidParams(format!(
                "dark current must be finite and nonnegative, got {dark_current}"
            )));
        }
        Ok(Self {
            amplitude,
            dark_current,
        })
    }

    #[inline]
    pub fn amplitude(&self) -> T {
        self.amplitude
    }

    #[inline]
    pub fn dark_current(&self) -> T {
        self.dark_current
    }

    /// Poisson mean of the output for input `x`.
    #[inline]
    pub fn mean(&self, x: T) -> T {
        x + self.dark_current
    }

    /// Errors unless `0 ≤ x ≤ A`.
    pub fn check_input(&self, x: T) -> Result<()> {
        if x >= T::zero() && x <= self.amplitude {
            Ok(())
        } else {
            Err(Error::Domain {
                x: x.as_f64(),
                amplitude: self.amplitude.as_f64(),
            })
        }
    }
}

/// `ln P(k | mean)` for a Poisson law, given `ln k!`.
#[inline]
pub(crate) fn log_poisson<T: Real>(mean: T, k: usize, ln_k_fact: T) -> T {
    if mean == T::zero() {
        return if k == 0 { T::zero() } else { T::neg_infinity() };
    }
    T::from_count(k) * mean.ln() - mean - ln_k_fact
}

/// `ln P_{Y|X}(k | x)` in nats.
pub fn log_pmf<T: Real>(params: &ChannelParams<T>, x: T, k: usize) -> Result<T> {
    params.check_input(x)?;
    Ok(log_poisson(params.mean(x), k, ln_factorial(k)))
}

/// `∂P_{Y|X}(k | x) / ∂x = P(k-1 | x) - P(k | x)` with `P(-1 | x) = 0`.
pub fn pmf_derivative<T: Real>(params: &ChannelParams<T>, x: T, k: usize) -> Result<T> {
    params.check_input(x)?;
    let mean = params.mean(x);
    let here = log_poisson(mean, k, ln_factorial(k)).exp();
    let below = if k == 0 {
        T::zero()
    } else {
        log_poisson(mean, k - 1, ln_factorial(k - 1)).exp()
    };
    Ok(below - here)
}

/// Finite output alphabet `{0, …, k_max}` used in every sum over `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTruncation<T> {
    k_max: usize,
    tail_mass_bound: T,
    ln_fact: Vec<T>,
}

impl<T: Real> OutputTruncation<T> {
    fn with_k_max(k_max: usize, tail_mass_bound: T) -> Self {
        Self {
            k_max,
            tail_mass_bound,
            ln_fact: crate::scalar::ln_factorial_table(k_max),
        }
    }

    #[inline]
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Number of retained output symbols, `k_max + 1`.
    #[inline]
    pub fn len(&self) -> usize {
        self.k_max + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn tail_mass_bound(&self) -> T {
        self.tail_mass_bound
    }

    #[inline]
    pub(crate) fn ln_fact(&self, k: usize) -> T {
        self.ln_fact[k]
    }

    /// Extends the alphabet by `extra` symbols; the tail guarantee only gets
    /// stronger.
    pub fn with_margin(self, extra: usize) -> Self {
        Self::with_k_max(self.k_max + extra, self.tail_mass_bound)
    }

    /// Writes `ln P(k | mean)` for `k = 0..=k_max` into `row`.
    pub(crate) fn fill_log_row(&self, mean: T, row: &mut [T]) {
        debug_assert_eq!(row.len(), self.len());
        if mean == T::zero() {
            row.fill(T::neg_infinity());
            row[0] = T::zero();
            return;
        }
        let ln_mean = mean.ln();
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = T::from_count(k) * ln_mean - mean - self.ln_fact[k];
        }
    }

    /// `ln P(k | mean)` for `k = 0..=K`.
    pub fn log_row(&self, mean: T) -> Vec<T> {
        let mut row = vec![T::zero(); self.len()];
        self.fill_log_row(mean, &mut row);
        row
    }
}

/// Smallest `K` such that the Poisson(`A + λ`) mass beyond `K` is at most
/// `tail_mass_bound`. Since the mean is largest at `x = A`, the same `K`
/// bounds the tail for every admissible input.
pub fn truncation_for<T: Real>(
    params: &ChannelParams<T>,
    tail_mass_bound: T,
) -> Result<OutputTruncation<T>> {
    if !(tail_mass_bound > T::zero() && tail_mass_bound < T::one()) {
        return Err(Error::InvalidConfig(format!(
            "tail mass bound must lie in (0, 1), got {tail_mass_bound}"
        )));
    }
    let mean = params.mean(params.amplitude());
    if mean == T::zero() {
        return Ok(OutputTruncation::with_k_max(0, tail_mass_bound));
    }

    // Far enough out that the mass beyond is below the smallest normal float.
    let m = mean.as_f64();
    let upper = (m + 40.0 * m.sqrt() + 800.0).ceil() as usize;
    let ln_mean = mean.ln();
    let mut log_p = Vec::with_capacity(upper + 1);
    let mut ln_fact = T::zero();
    for k in 0..=upper {
        if k > 0 {
            ln_fact = ln_fact + T::from_count(k).ln();
        }
        log_p.push(T::from_count(k) * ln_mean - mean - ln_fact);
    }

    // tail[K] = Σ_{k > K} P(k), accumulated from the far end.
    let mut tail = T::zero();
    let mut k_max = upper;
    for k in (0..=upper).rev() {
        if tail > tail_mass_bound {
            break;
        }
        k_max = k;
        tail = tail + log_p[k].exp();
    }
    Ok(OutputTruncation::with_k_max(k_max, tail_mass_bound))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: f64, l: f64) -> ChannelParams<f64> {
        ChannelParams::new(a, l).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ChannelParams::new(-1.0, 0.0).is_err());
        assert!(ChannelParams::new(1.0, -0.5).is_err());
        assert!(ChannelParams::new(f64::NAN, 0.0).is_err());
        assert!(ChannelParams::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn log_pmf_examples() {
        assert_eq!(log_pmf(&params(1.0, 0.0), 0.0, 0).unwrap(), 0.0);
        assert!((log_pmf(&params(1.0, 0.0), 1.0, 0).unwrap() + 1.0).abs() < 1e-15);
        // 3 ln 3 - 3 - ln 6
        let v = log_pmf(&params(5.0, 1.0), 2.0, 3).unwrap();
        assert!((v - (-1.495_922_603_223_726)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn log_pmf_zero_mean_is_point_mass() {
        let p = params(2.0, 0.0);
        assert_eq!(log_pmf(&p, 0.0, 0).unwrap(), 0.0);
        assert_eq!(log_pmf(&p, 0.0, 4).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn log_pmf_domain_errors() {
        let p = params(2.0, 1.0);
        assert!(matches!(log_pmf(&p, -0.1, 0), Err(Error::Domain { .. })));
        assert!(matches!(log_pmf(&p, 2.1, 0), Err(Error::Domain { .. })));
        assert!(pmf_derivative(&p, f64::NAN, 1).is_err());
    }

    #[test]
    fn derivative_examples() {
        let d = pmf_derivative(&params(1.0, 1.0), 0.0, 0).unwrap();
        assert!((d + (-1f64).exp()).abs() < 1e-15);
        let d = pmf_derivative(&params(3.0, 0.0), 2.0, 2).unwrap();
        assert!(d.abs() < 1e-15);
        let p = params(4.0, 0.5);
        let d0 = pmf_derivative(&p, 1.3, 0).unwrap();
        assert!((d0 + log_pmf(&p, 1.3, 0).unwrap().exp()).abs() < 1e-15);
    }

    #[test]
    fn truncation_degenerate_channel() {
        let t = truncation_for(&params(0.0, 0.0), 1e-3).unwrap();
        assert_eq!(t.k_max(), 0);
    }

    #[test]
    fn truncation_rejects_bad_bound() {
        assert!(truncation_for(&params(1.0, 0.0), 0.0).is_err());
        assert!(truncation_for(&params(1.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn truncation_poisson5_matches_cumulative_oracle() {
        // Oracle: smallest K with 1 - Σ_{k≤K} P(k) ≤ bound, summed directly
        // with the recurrence P(k) = P(k-1)·m/k.
        let bound = 1e-12;
        let mut pmf = (-5.0f64).exp();
        let mut terms = vec![pmf];
        for k in 1..200 {
            pmf *= 5.0 / k as f64;
            terms.push(pmf);
        }
        let oracle = (0..200)
            .find(|&k| terms[k + 1..].iter().sum::<f64>() <= bound)
            .unwrap();
        let t = truncation_for(&params(5.0, 0.0), bound).unwrap();
        assert_eq!(t.k_max(), oracle);
        assert_eq!(oracle, 27);
    }

    #[test]
    fn truncation_is_monotone() {
        let k5 = truncation_for(&params(5.0, 1.0), 1e-12).unwrap().k_max();
        let k10 = truncation_for(&params(10.0, 1.0), 1e-12).unwrap().k_max();
        assert!(k10 >= k5);
        let loose = truncation_for(&params(10.0, 1.0), 1e-6).unwrap().k_max();
        assert!(loose <= k10);
    }

    #[test]
    fn margin_extends_alphabet() {
        let t = truncation_for(&params(5.0, 0.0), 1e-12).unwrap();
        let k = t.k_max();
        let t = t.with_margin(10);
        assert_eq!(t.k_max(), k + 10);
        assert_eq!(t.len(), k + 11);
    }

    #[test]
    fn row_matches_pointwise_evaluation() {
        let p = params(7.0, 2.0);
        let t = truncation_for(&p, 1e-12).unwrap();
        let row = t.log_row(p.mean(3.0));
        for (k, &v) in row.iter().enumerate() {
            let direct = log_pmf(&p, 3.0, k).unwrap();
            assert!((v - direct).abs() < 1e-11 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn large_mean_stays_finite() {
        let p = params(9_000.0, 1_000.0);
        let t = truncation_for(&p, 1e-12).unwrap();
        let row = t.log_row(p.mean(9_000.0));
        assert!(row.iter().all(|v| v.is_finite()));
        let total: f64 = row.iter().map(|v| v.exp()).sum();
        assert!(total > 1.0 - 1e-11 && total <= 1.0 + 1e-9, "{total}");
    }
}

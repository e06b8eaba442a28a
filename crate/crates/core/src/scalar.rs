//! Scalar abstraction shared by every numerical kernel.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point scalar the solver can run on: `f32` or `f64`.
///
/// All default tolerances are tuned for `f64`. `f32` compiles and is useful
/// for quick, coarse evaluations of the channel kernels, but it cannot reach
/// the `1e-6` nat certificates the solver targets.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    fn lit(value: f64) -> Self;

    /// Converts a count into `Self`.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as a float")
    }

    /// Lossy conversion used at the I/O boundary.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn lit(value: f64) -> Self {
                value as $t
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Numerically stable `ln Σ exp(v)`. Returns `-inf` for an empty slice or
/// when every entry is `-inf`.
pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let max = values
        .iter()
        .copied()
        .fold(T::neg_infinity(), |acc, v| if v > acc { v } else { acc });
    if max == T::neg_infinity() {
        return max;
    }
    if max == T::infinity() {
        return max;
    }
    let sum: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `ln Γ(z)` for `z > 0` via the Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma<T: Real>(z: T) -> T {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let half = T::lit(0.5);
    if z < half {
        // reflection: Γ(z)Γ(1-z) = π / sin(πz)
        let pi = T::PI();
        return (pi / (pi * z).sin()).abs().ln() - ln_gamma(T::one() - z);
    }
    let z = z - T::one();
    let mut acc = T::lit(COEFFS[0]);
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (z + T::from_count(i));
    }
    let t = z + T::lit(7.5);
    half * (T::lit(2.0) * T::PI()).ln() + (z + half) * t.ln() - t + acc.ln()
}

/// `ln k!`.
pub fn ln_factorial<T: Real>(k: usize) -> T {
    if k < 2 {
        return T::zero();
    }
    ln_gamma(T::from_count(k) + T::one())
}

/// Table of `ln k!` for `k = 0..=k_max`, built by cumulative summation.
pub fn ln_factorial_table<T: Real>(k_max: usize) -> Vec<T> {
    let mut table = Vec::with_capacity(k_max + 1);
    let (mut acc, mut carry) = (T::zero(), T::zero());
    table.push(acc);
    for k in 1..=k_max {
        // Neumaier-compensated running sum
        let term = T::from_count(k).ln();
        let next = acc + term;
        carry = carry
            + if acc.abs() >= term.abs() {
                (acc - next) + term
            } else {
                (term - next) + acc
            };
        acc = next;
        table.push(acc + carry);
    }
    table
}

//! Blahut-Arimoto iteration on the probabilities of a fixed support.

use crate::channel::{ChannelParams, OutputTruncation};
use crate::dist::{ChannelRows, InputDistribution};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Non-endpoint points lighter than this are removed after each step.
pub const PRUNE_MASS: f64 = 1e-12;

/// `ba_run` stops once no probability moves by more than this.
pub const STALL_TOLERANCE: f64 = 1e-14;

/// One multiplicative update `p_i ← p_i e^{i(x_i)} / Σ_j p_j e^{i(x_j)}`,
/// shifted by `max_i i(x_i)` before exponentiating.
fn update<T: Real>(rows: &ChannelRows<T>, probs: &[T]) -> Vec<T> {
    let out = rows.mixture(probs);
    let densities: Vec<T> = (0..probs.len()).map(|i| rows.density(i, &out)).collect();
    let shift = densities
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let mut next: Vec<T> = probs
        .iter()
        .zip(&densities)
        .map(|(&p, &d)| p * (d - shift).exp())
        .collect();
    let total: T = next.iter().copied().sum();
    for p in &mut next {
        *p = *p / total;
    }
    next
}

fn check<T: Real>(dist: &InputDistribution<T>, params: &ChannelParams<T>) -> Result<()> {
    dist.check_masses(params)
        .map_err(|v| Error::InvalidDistribution(v.to_string()))
}

/// A single Blahut-Arimoto step followed by pruning of negligible points.
pub fn ba_step<T: Real>(
    dist: &InputDistribution<T>,
    params: &ChannelParams<T>,
    trunc: &OutputTruncation<T>,
) -> Result<InputDistribution<T>> {
    check(dist, params)?;
    let rows = ChannelRows::new(dist.points(), params, trunc);
    let mut next = dist.clone();
    next.set_probs(update(&rows, dist.probs()));
    next.prune(T::lit(PRUNE_MASS), params);
    Ok(next)
}

/// Up to `n_iters` Blahut-Arimoto steps, stopping early once the largest
/// probability change falls below [`STALL_TOLERANCE`].
pub fn ba_run<T: Real>(
    dist: &InputDistribution<T>,
    n_iters: usize,
    params: &ChannelParams<T>,
    trunc: &OutputTruncation<T>,
) -> Result<InputDistribution<T>> {
    if n_iters == 0 {
        return Err(Error::InvalidConfig("n_iters must be at least 1".into()));
    }
    check(dist, params)?;
    let mut current = dist.clone();
    let mut rows = ChannelRows::new(current.points(), params, trunc);
    let stall = T::lit(STALL_TOLERANCE);
    for _ in 0..n_iters {
        let next = update(&rows, current.probs());
        let change = next
            .iter()
            .zip(current.probs())
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max);
        current.set_probs(next);
        if current.prune(T::lit(PRUNE_MASS), params) {
            rows = ChannelRows::new(current.points(), params, trunc);
            continue;
        }
        if change < stall {
            break;
        }
    }
    Ok(current)
}

/// Largest `|i(x_i) − I|` on the support, with the densities.
fn spread<T: Real>(rows: &ChannelRows<T>, probs: &[T]) -> (T, Vec<T>, T) {
    let out = rows.mixture(probs);
    let densities: Vec<T> = (0..probs.len()).map(|i| rows.density(i, &out)).collect();
    let info = probs
        .iter()
        .zip(&densities)
        .fold(T::zero(), |acc, (&p, &d)| acc + p * d);
    let worst = densities
        .iter()
        .map(|&d| (d - info).abs())
        .fold(T::zero(), T::max);
    (worst, densities, info)
}

/// Solves `m · z = rhs` by Gaussian elimination with partial pivoting.
fn solve_dense<T: Real>(mut m: Vec<Vec<T>>, mut rhs: Vec<T>) -> Option<Vec<T>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())?;
        if !(m[pivot][col].abs() > T::zero()) {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for c in col..n {
                m[row][c] = m[row][c] - f * m[col][c];
            }
            rhs[row] = rhs[row] - f * rhs[col];
        }
    }
    let mut z = vec![T::zero(); n];
    for row in (0..n).rev() {
        let tail = (row + 1..n).fold(T::zero(), |acc, c| acc + m[row][c] * z[c]);
        z[row] = (rhs[row] - tail) / m[row][row];
    }
    z.iter().all(|v| v.is_finite()).then_some(z)
}

/// Newton's method on the equalization conditions `i(x_i) = c` for all `i`,
/// `Σ p_i = 1`, with the locations held fixed.
///
/// Blahut-Arimoto converges linearly with a rate that tends to one when a
/// point's optimal mass is close to zero, which is exactly what happens
/// near a change in the number of support points. The Jacobian here is
/// `∂i(x_i)/∂p_j = −Σ_k P(k|x_i) P(k|x_j) / P_Y(k)`. Steps are damped so
/// every mass stays positive and are kept only if they shrink
/// `max_i |i(x_i) − I|`; a point whose optimal mass is zero is driven
/// towards zero by a factor of ten per iteration.
pub fn newton_polish<T: Real>(
    dist: &InputDistribution<T>,
    n_iters: usize,
    params: &ChannelParams<T>,
    trunc: &OutputTruncation<T>,
) -> Result<InputDistribution<T>> {
    check(dist, params)?;
    let n = dist.len();
    let mut current = dist.clone();
    if n < 2 {
        return Ok(current);
    }
    let rows = ChannelRows::new(current.points(), params, trunc);
    let mut probs = current.probs().to_vec();
    let (mut worst, mut densities, mut info) = spread(&rows, &probs);
    for _ in 0..n_iters {
        if worst <= T::lit(1e-14) {
            break;
        }
        let q: Vec<T> = rows.mixture(&probs).log_probs().iter().map(|v| v.exp()).collect();
        let mut m = vec![vec![T::zero(); n + 1]; n + 1];
        for i in 0..n {
            for j in i..n {
                let (wi, wj) = (rows.lin_row(i), rows.lin_row(j));
                let h = (0..q.len())
                    .filter(|&k| q[k] > T::zero())
                    .fold(T::zero(), |acc, k| acc + wi[k] * wj[k] / q[k]);
                m[i][j] = -h;
                m[j][i] = -h;
            }
            m[i][n] = -T::one();
            m[n][i] = T::one();
        }
        let mut rhs: Vec<T> = densities.iter().map(|&d| info - d).collect();
        rhs.push(T::zero());
        let Some(z) = solve_dense(m, rhs) else { break };

        let mut t = T::one();
        for i in 0..n {
            if z[i] < T::zero() {
                t = t.min(T::lit(0.9) * probs[i] / -z[i]);
            }
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial: Vec<T> = probs.iter().zip(&z).map(|(&p, &dz)| p + t * dz).collect();
            let total = trial.iter().fold(T::zero(), |acc, &p| acc + p);
            trial.iter_mut().for_each(|p| *p = *p / total);
            let (w, d, i) = spread(&rows, &trial);
            if w < worst {
                (probs, worst, densities, info) = (trial, w, d, i);
                accepted = true;
                break;
            }
            t = t * T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    current.set_probs(probs);
    current.prune(T::lit(PRUNE_MASS), params);
    Ok(current)
}

//! ε-KKT validation and the support repair rules.
//!
//! A candidate `P_X` is rejected when either
//!
//! * (exterior) `i(0; P_X) + ε < i(x; P_X)` for some `x ∈ [0, A]`, or
//! * (support) `|i(x; P_X) − i(0; P_X)| > ε` for some `x` in the support.
//!
//! The density at 0 stands in for the unknown capacity since 0 always
//! belongs to the optimal support.

use crate::channel::{ChannelParams, OutputTruncation};
use crate::dist::{ChannelRows, InputDistribution};
use crate::error::{Error, Result};
use crate::information::{density_profile, density_unchecked, InfoDensityProfile, ScanConfig};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport<T> {
    pub valid: bool,
    pub epsilon: T,
    /// Maximizer of the information density over `[0, A]`.
    pub candidate_x: T,
    pub max_density: T,
    pub density_at_zero: T,
    /// Some `x ∈ [0, A]` beats `i(0) + ε`.
    pub exterior_violation: bool,
    /// Support points whose density is more than ε away from `i(0)`.
    pub violating_points: Vec<T>,
    pub violating_indices: Vec<usize>,
    pub profile: InfoDensityProfile<T>,
}

impl<T: Real> KktReport<T> {
    pub fn support_violation(&self) -> bool {
        !self.violating_indices.is_empty()
    }

    /// Largest `|i(x_i) − i(0)|` over the support.
    pub fn support_residual(&self) -> T {
        self.profile
            .at_support
            .iter()
            .map(|&d| (d - self.density_at_zero).abs())
            .fold(T::zero(), T::max)
    }
}

/// Runs the ε-KKT test on `dist`. Comparisons at exactly ε are not
/// violations.
pub fn kkt_validate<T: Real>(
    dist: &InputDistribution<T>,
    epsilon: T,
    params: &ChannelParams<T>,
    trunc: &OutputTruncation<T>,
    scan: &ScanConfig<T>,
) -> Result<KktReport<T>> {
    if !(epsilon > T::zero()) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    dist.check_masses(params)
        .map_err(|v| Error::InvalidDistribution(v.to_string()))?;
    let out = ChannelRows::new(dist.points(), params, trunc).mixture(dist.probs());
    let profile = density_profile(dist, &out, params, trunc, scan)?;
    let density_at_zero = density_unchecked(T::zero(), &out, params, trunc);

    let (mut candidate_x, mut max_density) = profile.peak;
    for (&x, &d) in dist.points().iter().zip(&profile.at_support) {
        if d > max_density {
            candidate_x = x;
            max_density = d;
        }
    }
    let exterior_violation = density_at_zero + epsilon < max_density;

    let mut violating_points = Vec::new();
    let mut violating_indices = Vec::new();
    for (i, (&x, &d)) in dist.points().iter().zip(&profile.at_support).enumerate() {
        if (d - density_at_zero).abs() > epsilon {
            violating_points.push(x);
            violating_indices.push(i);
        }
    }
    Ok(KktReport {
        valid: !exterior_violation && violating_indices.is_empty(),
        epsilon,
        candidate_x,
        max_density,
        density_at_zero,
        exterior_violation,
        violating_points,
        violating_indices,
        profile,
    })
}

/// What [`kkt_update`] did to the support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateAction<T> {
    /// Two nearby violating points were replaced by the candidate.
    Merged { left: T, right: T, at: T },
    /// The candidate was added and probabilities reset to uniform.
    Inserted { at: T },
    /// No structural change; the caller should polish probabilities.
    Polish,
}

/// Repairs a rejected distribution.
///
/// * Both tests failed and two violating points `x₁ < x₂` with
///   `x₂ − x₁ < δ` bracket the candidate: they are replaced by the candidate,
///   which takes their combined mass. The closest such pair wins, ties going
///   to the smaller `x₁`; the pinned endpoints never take part.
/// * Otherwise, if the exterior test failed, the candidate joins the support
///   and every probability is reset to `1/|supp|`, unless it lands within
///   `min_spacing` of an existing point.
/// * Anything else returns [`UpdateAction::Polish`] with `dist` unchanged.
pub fn kkt_update<T: Real>(
    dist: &InputDistribution<T>,
    report: &KktReport<T>,
    delta: T,
    min_spacing: T,
    params: &ChannelParams<T>,
) -> Result<(InputDistribution<T>, UpdateAction<T>)> {
    if report.valid {
        return Err(Error::AlreadyValid);
    }
    let amplitude = params.amplitude();
    let x_hat = report.candidate_x;

    if report.exterior_violation && report.support_violation() {
        let idx = &report.violating_indices;
        let mut best: Option<(usize, usize, T)> = None;
        for a in 0..idx.len() {
            for b in a + 1..idx.len() {
                let (i, j) = (idx[a], idx[b]);
                if dist.is_pinned(i, amplitude) || dist.is_pinned(j, amplitude) {
                    continue;
                }
                let (x1, x2) = (dist.points()[i], dist.points()[j]);
                let gap = x2 - x1;
                if gap >= delta || x_hat < x1 || x_hat > x2 {
                    continue;
                }
                // nothing else may sit strictly between them
                if j != i + 1 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bi, _, bgap)) => gap < bgap || (gap == bgap && x1 < dist.points()[bi]),
                };
                if better {
                    best = Some((i, j, gap));
                }
            }
        }
        if let Some((i, j, _)) = best {
            let mut points = Vec::with_capacity(dist.len() - 1);
            let mut probs = Vec::with_capacity(dist.len() - 1);
            for k in 0..dist.len() {
                if k == i {
                    points.push(x_hat);
                    probs.push(dist.probs()[i] + dist.probs()[j]);
                } else if k != j {
                    points.push(dist.points()[k]);
                    probs.push(dist.probs()[k]);
                }
            }
            let action = UpdateAction::Merged {
                left: dist.points()[i],
                right: dist.points()[j],
                at: x_hat,
            };
            return Ok((InputDistribution::new(points, probs), action));
        }
    }

    if report.exterior_violation {
        let collides = dist
            .points()
            .iter()
            .any(|&x| (x - x_hat).abs() < min_spacing);
        if !collides {
            let mut points = dist.points().to_vec();
            let pos = points.partition_point(|&x| x < x_hat);
            points.insert(pos, x_hat);
            return Ok((
                InputDistribution::uniform(points),
                UpdateAction::Inserted { at: x_hat },
            ));
        }
    }
    Ok((dist.clone(), UpdateAction::Polish))
}

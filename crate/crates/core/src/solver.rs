//! End-to-end capacity solver.
//!
//! Each outer iteration alternates Blahut-Arimoto on the probabilities with
//! gradient ascent on the locations, clusters points that drifted together,
//! and runs the ε-KKT test. A rejected distribution is repaired and the loop
//! repeats until the test passes or the iteration budget runs out.

use serde::{Deserialize, Serialize};

use crate::blahut_arimoto::{ba_run, newton_polish};
use crate::channel::{truncation_for, ChannelParams, OutputTruncation};
use crate::dist::{ChannelRows, InputDistribution};
use crate::error::{Error, Result};
use crate::gradient_ascent::{ga_run, LineSearchConfig};
use crate::information::{capacity_sandwich, mutual_information_rows, ScanConfig};
use crate::kkt::{kkt_update, kkt_validate, KktReport, UpdateAction};
use crate::scalar::Real;

/// Newton iterations applied to the probabilities after a polish step.
const NEWTON_ITERATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    pub epsilon: T,
    pub n_ba: usize,
    pub n_ga: usize,
    pub inner_loop_count: usize,
    pub max_outer_iterations: usize,
    pub min_spacing: T,
    /// Merge radius of the repair rule.
    pub delta: T,
    pub line_search: LineSearchConfig<T>,
    pub tail_mass_bound: T,
    /// Extra output symbols beyond the tail-bound cutoff.
    pub truncation_margin: usize,
    pub scan: ScanConfig<T>,
    /// Interior points lighter than this are dropped when they fail the
    /// support test, and once more after convergence if the lighter
    /// support still passes.
    pub negligible_mass: T,
    /// After convergence, adjacent points closer than this many output
    /// standard deviations are tried as a single point.
    pub merge_radius: T,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            epsilon: T::lit(1e-6),
            n_ba: 100,
            n_ga: 20,
            inner_loop_count: 100,
            max_outer_iterations: 200,
            min_spacing: T::lit(1e-2),
            delta: T::lit(0.1),
            line_search: LineSearchConfig::default(),
            tail_mass_bound: T::lit(1e-12),
            truncation_margin: 10,
            scan: ScanConfig::default(),
            negligible_mass: T::lit(1e-6),
            merge_radius: T::lit(0.1),
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.epsilon > T::zero() && self.epsilon < T::one()) {
            return bad("epsilon must lie in (0, 1)");
        }
        if self.n_ba == 0 || self.n_ga == 0 || self.inner_loop_count == 0 {
            return bad("iteration counts must be positive");
        }
        if self.max_outer_iterations == 0 {
            return bad("max_outer_iterations must be positive");
        }
        if !(self.min_spacing > T::zero() && self.min_spacing.is_finite()) {
            return bad("min_spacing must be positive");
        }
        if !(self.delta > T::zero() && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        if !(self.tail_mass_bound > T::zero() && self.tail_mass_bound < T::one()) {
            return bad("tail_mass_bound must lie in (0, 1)");
        }
        if !(self.negligible_mass >= T::zero() && self.negligible_mass < T::one()) {
            return bad("negligible_mass must lie in [0, 1)");
        }
        if !(self.merge_radius >= T::zero()) {
            return bad("merge_radius must be nonnegative");
        }
        if !(self.scan.max_spacing > T::zero()) || self.scan.min_cells == 0 {
            return bad("scan spacing must be positive");
        }
        self.line_search.validate()
    }

    /// Output alphabet for `params` under this configuration.
    pub fn truncation(&self, params: &ChannelParams<T>) -> Result<OutputTruncation<T>> {
        Ok(truncation_for(params, self.tail_mass_bound)?.with_margin(self.truncation_margin))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult<T> {
    pub distribution: InputDistribution<T>,
    /// Mutual information of `distribution`, the capacity estimate.
    pub capacity_nats: T,
    /// `max_x i(x; P_X) − I(P_X)`.
    pub duality_gap: T,
    pub kkt: KktReport<T>,
    pub support_size: usize,
    /// `e^{I}`: any optimal law has at least this many mass points.
    pub support_lower_bound: T,
    /// `A ln² A` for `A > 1`, otherwise the support size.
    pub support_upper_order: T,
    pub outer_iterations: usize,
    pub converged: bool,
}

/// Observations emitted after every KKT test.
#[derive(Debug, Clone)]
pub struct OuterEvent<T> {
    pub iteration: usize,
    pub support_size: usize,
    pub information: T,
    pub duality_gap: T,
    pub valid: bool,
    pub action: Option<UpdateAction<T>>,
}

/// Starting support. A warm start is stretched affinely from its own
/// `[0, A_old]` onto `[0, A]` and keeps its probabilities; otherwise the
/// support is `max(2, ⌈2√A⌉)` equispaced points with uniform mass.
pub fn initial_support<T: Real>(
    params: &ChannelParams<T>,
    warm_start: Option<&InputDistribution<T>>,
) -> InputDistribution<T> {
    let amplitude = params.amplitude();
    if amplitude == T::zero() {
        return InputDistribution::point_mass(T::zero());
    }
    if let Some(warm) = warm_start {
        if let Some(stretched) = stretch(warm, amplitude) {
            return stretched;
        }
    }
    let mut n = (T::lit(2.0) * amplitude.sqrt()).ceil().to_usize().unwrap_or(2).max(2);
    if amplitude > T::E() {
        let ln_a = amplitude.ln();
        let cap = (amplitude * ln_a * ln_a).ceil().to_usize().unwrap_or(n);
        n = n.min(cap.max(2));
    }
    let last = T::from_count(n - 1);
    let points = (0..n)
        .map(|i| {
            if i + 1 == n {
                amplitude
            } else {
                amplitude * T::from_count(i) / last
            }
        })
        .collect();
    InputDistribution::uniform(points)
}

fn stretch<T: Real>(warm: &InputDistribution<T>, amplitude: T) -> Option<InputDistribution<T>> {
    let old = *warm.points().last()?;
    if !(old > T::zero()) || warm.len() != warm.probs().len() || warm.len() < 2 {
        return None;
    }
    let scale = amplitude / old;
    let n = warm.len();
    let mut points: Vec<T> = warm.points().iter().map(|&x| x * scale).collect();
    points[0] = T::zero();
    points[n - 1] = amplitude;
    if !points.windows(2).all(|w| w[0] < w[1]) {
        return None;
    }
    let mut dist = InputDistribution::new(points, warm.probs().to_vec());
    dist.normalize();
    Some(dist)
}

/// Runs the full algorithm. See [`solve_with_observer`].
pub fn solve<T: Real>(
    params: &ChannelParams<T>,
    cfg: &SolverConfig<T>,
    warm_start: Option<&InputDistribution<T>>,
) -> Result<SolveResult<T>> {
    solve_with_observer(params, cfg, warm_start, |_| {})
}

/// Runs the full algorithm, reporting each outer iteration to `observer`.
///
/// Failing to converge within `max_outer_iterations` is not an error: the
/// result carries `converged = false` and the best state seen, ranked by
/// duality gap.
pub fn solve_with_observer<T: Real, F: FnMut(&OuterEvent<T>)>(
    params: &ChannelParams<T>,
    cfg: &SolverConfig<T>,
    warm_start: Option<&InputDistribution<T>>,
    mut observer: F,
) -> Result<SolveResult<T>> {
    cfg.validate()?;
    let trunc = cfg.truncation(params)?;
    let mut dist = initial_support(params, warm_start);
    dist.validate(params)
        .map_err(|v| Error::InvalidDistribution(v.to_string()))?;

    let mut best: Option<(InputDistribution<T>, KktReport<T>, T, T)> = None;
    let mut outer = 0;
    let mut converged = false;
    while outer < cfg.max_outer_iterations {
        outer += 1;
        if params.amplitude() > T::zero() {
            dist = inner_loop(dist, params, cfg, &trunc)?;
            dist = dist.cluster(cfg.min_spacing, params);
        }
        let report = kkt_validate(&dist, cfg.epsilon, params, &trunc, &cfg.scan)?;
        let (lower, upper) = capacity_sandwich(&dist, &report.profile);
        let gap = upper - lower;
        let valid = report.valid;

        let mut event = OuterEvent {
            iteration: outer,
            support_size: dist.len(),
            information: lower,
            duality_gap: gap,
            valid,
            action: None,
        };
        let improves = best.as_ref().map_or(true, |b| valid || gap < b.3);
        if valid {
            observer(&event);
            best = Some((dist, report, lower, gap));
            converged = true;
            break;
        }
        let (mut next, action) = kkt_update(&dist, &report, cfg.delta, cfg.min_spacing, params)?;
        event.action = Some(action);
        observer(&event);
        if action == UpdateAction::Polish {
            let light: Vec<usize> = report
                .violating_indices
                .iter()
                .copied()
                .filter(|&i| next.probs()[i] < cfg.negligible_mass)
                .collect();
            remove_points(&mut next, &light, params.amplitude());
            next = ba_run(&next, cfg.n_ba, params, &trunc)?;
            next = newton_polish(&next, NEWTON_ITERATIONS, params, &trunc)?;
        }
        if improves {
            best = Some((dist, report, lower, gap));
        }
        dist = next;
    }

    let mut best = best.expect("at least one outer iteration");
    if converged && params.amplitude() > T::zero() {
        best = consolidate(best, params, cfg, &trunc)?;
    }
    let (distribution, kkt, capacity, gap) = best;
    let amplitude = params.amplitude();
    let support_size = distribution.len();
    let support_upper_order = if amplitude > T::one() {
        let l = amplitude.ln();
        amplitude * l * l
    } else {
        T::from_count(support_size)
    };
    Ok(SolveResult {
        support_size,
        capacity_nats: capacity,
        duality_gap: gap,
        support_lower_bound: capacity.exp(),
        support_upper_order,
        distribution,
        kkt,
        outer_iterations: outer,
        converged,
    })
}

/// Removes the points at `indices`, except the pinned endpoints, and
/// renormalizes. Returns whether anything was removed.
fn remove_points<T: Real>(dist: &mut InputDistribution<T>, indices: &[usize], amplitude: T) -> bool {
    let keep: Vec<bool> = (0..dist.len())
        .map(|i| dist.is_pinned(i, amplitude) || !indices.contains(&i))
        .collect();
    if keep.iter().all(|&k| k) {
        return false;
    }
    let (points, probs): (Vec<T>, Vec<T>) = dist
        .points()
        .iter()
        .zip(dist.probs())
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|((&x, &p), _)| (x, p))
        .unzip();
    *dist = InputDistribution::new(points, probs);
    dist.normalize();
    true
}

type Certified<T> = (InputDistribution<T>, KktReport<T>, T, T);

/// Re-optimizes `dist` and returns it with its report if it passes the
/// ε-KKT test.
fn certify<T: Real>(
    dist: InputDistribution<T>,
    params: &ChannelParams<T>,
    cfg: &SolverConfig<T>,
    trunc: &OutputTruncation<T>,
) -> Result<Option<Certified<T>>> {
    let dist = inner_loop(dist, params, cfg, trunc)?.cluster(cfg.min_spacing, params);
    let report = kkt_validate(&dist, cfg.epsilon, params, trunc, &cfg.scan)?;
    if !report.valid {
        return Ok(None);
    }
    let (lower, upper) = capacity_sandwich(&dist, &report.profile);
    Ok(Some((dist, report, lower, upper - lower)))
}

/// Replaces points `i` and `i + 1` by one point carrying their mass, at
/// their weighted mean or on the endpoint if one of them is pinned.
fn merge_adjacent<T: Real>(
    dist: &InputDistribution<T>,
    i: usize,
    amplitude: T,
) -> InputDistribution<T> {
    let (x, p) = (dist.points(), dist.probs());
    let mass = p[i] + p[i + 1];
    let at = if dist.is_pinned(i, amplitude) {
        x[i]
    } else if dist.is_pinned(i + 1, amplitude) {
        x[i + 1]
    } else {
        (p[i] * x[i] + p[i + 1] * x[i + 1]) / mass
    };
    let mut points = x.to_vec();
    let mut probs = p.to_vec();
    points.splice(i..=i + 1, [at]);
    probs.splice(i..=i + 1, [mass]);
    InputDistribution::new(points, probs)
}

/// Searches for a smaller certified support once the ε-KKT test has passed.
///
/// Interior points lighter than `negligible_mass` are dropped first. Then
/// adjacent pairs closer than `merge_radius · √(1 + x̄ + λ)` (a fraction of
/// the output standard deviation at their midpoint) are merged, closest
/// first. Every candidate is re-optimized and kept only if it passes the
/// test again, so the result is never worse certified than the input.
fn consolidate<T: Real>(
    certified: Certified<T>,
    params: &ChannelParams<T>,
    cfg: &SolverConfig<T>,
    trunc: &OutputTruncation<T>,
) -> Result<Certified<T>> {
    let amplitude = params.amplitude();
    let mut current = certified;

    let light: Vec<usize> = (0..current.0.len())
        .filter(|&i| current.0.probs()[i] < cfg.negligible_mass)
        .collect();
    let mut lighter = current.0.clone();
    if remove_points(&mut lighter, &light, amplitude) {
        if let Some(found) = certify(lighter, params, cfg, trunc)? {
            current = found;
        }
    }

    loop {
        let dist = &current.0;
        let mut pairs: Vec<(usize, T)> = (0..dist.len().saturating_sub(1))
            .filter(|&i| !(dist.is_pinned(i, amplitude) && dist.is_pinned(i + 1, amplitude)))
            .filter_map(|i| {
                let (a, b) = (dist.points()[i], dist.points()[i + 1]);
                let scale = (T::one() + (a + b) * T::lit(0.5) + params.dark_current()).sqrt();
                let ratio = (b - a) / scale;
                (ratio < cfg.merge_radius).then_some((i, ratio))
            })
            .collect();
        pairs.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));

        let mut merged = None;
        for (i, _) in pairs {
            let candidate = merge_adjacent(dist, i, amplitude);
            if let Some(found) = certify(candidate, params, cfg, trunc)? {
                merged = Some(found);
                break;
            }
        }
        match merged {
            Some(found) => current = found,
            None => return Ok(current),
        }
    }
}

/// Up to `inner_loop_count` passes of Blahut-Arimoto then gradient ascent,
/// stopping once a pass gains less than `1e-12` nats and moves no point by
/// more than `1e-10`.
fn inner_loop<T: Real>(
    mut dist: InputDistribution<T>,
    params: &ChannelParams<T>,
    cfg: &SolverConfig<T>,
    trunc: &OutputTruncation<T>,
) -> Result<InputDistribution<T>> {
    let info = |d: &InputDistribution<T>| {
        mutual_information_rows(&ChannelRows::new(d.points(), params, trunc), d.probs())
    };
    let mut last = info(&dist);
    for _ in 0..cfg.inner_loop_count {
        let before = dist.points().to_vec();
        dist = ba_run(&dist, cfg.n_ba, params, trunc)?;
        dist = ga_run(&dist, cfg.n_ga, &cfg.line_search, params, trunc)?;
        let now = info(&dist);
        let moved = before.len() != dist.len()
            || before
                .iter()
                .zip(dist.points())
                .any(|(&a, &b)| (a - b).abs() >= T::lit(1e-10));
        if !moved && now - last < T::lit(1e-12) {
            break;
        }
        last = now;
    }
    Ok(dist)
}

/// Support-size diagnostics for a finished solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportBounds<T> {
    pub support_size: usize,
    /// `e^{I}`, a hard lower bound on the optimal support size.
    pub information_bound: T,
    /// `A ln² A` (order of the upper bound), `None` for `A ≤ 1`.
    pub upper_order: Option<T>,
    /// `c₁ √A e^{−c₂ √(λ/A)}` with caller-supplied constants; heuristic.
    pub dark_current_heuristic: T,
    /// `support_size < ⌈e^{I}⌉`.
    pub violates_information_bound: bool,
}

pub fn support_bounds<T: Real>(
    result: &SolveResult<T>,
    params: &ChannelParams<T>,
    c1: T,
    c2: T,
) -> SupportBounds<T> {
    let amplitude = params.amplitude();
    let information_bound = result.capacity_nats.exp();
    let upper_order = (amplitude > T::one()).then(|| {
        let l = amplitude.ln();
        amplitude * l * l
    });
    let dark_current_heuristic = if amplitude > T::zero() {
        c1 * amplitude.sqrt() * (-c2 * (params.dark_current() / amplitude).sqrt()).exp()
    } else {
        T::zero()
    };
    let required = information_bound.ceil().to_usize().unwrap_or(usize::MAX);
    SupportBounds {
        support_size: result.support_size,
        information_bound,
        upper_order,
        dark_current_heuristic,
        violates_information_bound: result.support_size < required,
    }
}

//! Parameter sweeps over the amplitude or the dark current.
//!
//! Grid points are solved in order, each warm-started from the previous
//! certified law. At a handful of log-spaced checkpoints the point is also
//! solved from scratch and the better of the two results is kept, which
//! catches a warm start that settled into a poorer local optimum.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::channel::ChannelParams;
use crate::dist::InputDistribution;
use crate::error::{Error, Result};
use crate::export::{export_records, round_sig, Format, SweepRecord, LIST_DIGITS};
use crate::solver::{solve, SolveResult, SolverConfig};

/// Number of grid points that are re-solved from a cold start.
pub const CHECKPOINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// Grid over `A` at fixed `λ`.
    Amplitude,
    /// Grid over `λ` at fixed `A`.
    DarkCurrent,
    /// One solve; the grid holds `A` and the fixed value is `λ`.
    Single,
}

impl FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amplitude" => Ok(SweepMode::Amplitude),
            "dark-current" => Ok(SweepMode::DarkCurrent),
            "single" => Ok(SweepMode::Single),
            other => Err(Error::InvalidConfig(format!("unknown sweep mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Lin,
    Log,
}

/// `start:stop:count` with linear or logarithmic spacing, e.g.
/// `1:64:32,log`. The spacing defaults to linear. Log-spaced values are
/// rounded to 12 significant digits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let last = (self.count - 1) as f64;
        let mut values: Vec<f64> = (0..self.count)
            .map(|i| {
                let t = i as f64 / last;
                match self.spacing {
                    Spacing::Lin => self.start + (self.stop - self.start) * t,
                    Spacing::Log => round_sig(
                        (self.start.ln() + (self.stop.ln() - self.start.ln()) * t).exp(),
                        LIST_DIGITS,
                    ),
                }
            })
            .collect();
        values[0] = self.start;
        values[self.count - 1] = self.stop;
        values
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let spacing = match self.spacing {
            Spacing::Lin => "lin",
            Spacing::Log => "log",
        };
        write!(f, "{}:{}:{},{}", self.start, self.stop, self.count, spacing)
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidConfig(format!("grid `{s}`: {why}"));
        let (range, spacing) = match s.split_once(',') {
            Some((range, "lin")) => (range, Spacing::Lin),
            Some((range, "log")) => (range, Spacing::Log),
            Some(_) => return Err(bad("spacing must be `lin` or `log`")),
            None => (s, Spacing::Lin),
        };
        let parts: Vec<&str> = range.split(':').collect();
        let [start, stop, count] = parts[..] else {
            return Err(bad("expected start:stop:count"));
        };
        let start: f64 = start.trim().parse().map_err(|_| bad("start is not a number"))?;
        let stop: f64 = stop.trim().parse().map_err(|_| bad("stop is not a number"))?;
        let count: usize = count.trim().parse().map_err(|_| bad("count is not a positive integer"))?;
        if !start.is_finite() || !stop.is_finite() || start < 0.0 {
            return Err(bad("bounds must be finite and nonnegative"));
        }
        if count == 0 {
            return Err(bad("count must be at least 1"));
        }
        if count > 1 && stop <= start {
            return Err(bad("stop must exceed start"));
        }
        if spacing == Spacing::Log && start <= 0.0 {
            return Err(bad("log spacing needs a positive start"));
        }
        Ok(GridSpec {
            start,
            stop,
            count,
            spacing,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub mode: SweepMode,
    /// `λ` for amplitude sweeps and single solves, `A` for dark-current sweeps.
    pub fixed_value: f64,
    pub grid: Vec<f64>,
    pub solver_config: SolverConfig<f64>,
    pub output_path: PathBuf,
    pub format: Format,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("sweep grid is empty".into()));
        }
        if self.mode == SweepMode::Single && self.grid.len() != 1 {
            return Err(Error::InvalidConfig("a single solve takes exactly one grid value".into()));
        }
        if let Some(&v) = self.grid.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidConfig(format!("grid value {v} is not a nonnegative number")));
        }
        if !self.grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig("grid must be strictly increasing".into()));
        }
        self.solver_config.validate()?;
        self.params_at(self.grid[0]).map(|_| ())
    }

    pub fn params_at(&self, value: f64) -> Result<ChannelParams<f64>> {
        match self.mode {
            SweepMode::Amplitude | SweepMode::Single => ChannelParams::new(value, self.fixed_value),
            SweepMode::DarkCurrent => ChannelParams::new(self.fixed_value, value),
        }
    }
}

/// Up to [`CHECKPOINTS`] grid indices, log-spaced over `0..n` so that the
/// first and last points are always included.
pub fn checkpoint_indices(n: usize) -> Vec<usize> {
    if n <= CHECKPOINTS {
        return (0..n).collect();
    }
    let span = (n as f64).ln();
    let mut indices: Vec<usize> = (0..CHECKPOINTS)
        .map(|k| {
            let t = k as f64 / (CHECKPOINTS - 1) as f64;
            ((span * t).exp().round() as usize).clamp(1, n) - 1
        })
        .collect();
    indices.dedup();
    indices
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Start {
    Warm,
    Cold,
}

/// Warm- and cold-started solves of one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointComparison {
    pub warm_capacity: f64,
    pub cold_capacity: f64,
    pub warm_support: usize,
    pub cold_support: usize,
    pub warm_converged: bool,
    pub cold_converged: bool,
    pub chosen: Start,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointOutcome {
    pub index: usize,
    pub record: SweepRecord,
    pub start: Start,
    pub checkpoint: Option<CheckpointComparison>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub points: Vec<PointOutcome>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

impl SweepOutcome {
    pub fn records(&self) -> Vec<SweepRecord> {
        self.points.iter().map(|p| p.record.clone()).collect()
    }

    pub fn all_converged(&self) -> bool {
        self.points.iter().all(|p| p.record.converged)
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn better(warm: &SolveResult<f64>, cold: &SolveResult<f64>, epsilon: f64) -> Start {
    match (warm.converged, cold.converged) {
        (false, true) => Start::Cold,
        (true, false) => Start::Warm,
        _ if cold.capacity_nats > warm.capacity_nats + epsilon => Start::Cold,
        _ => Start::Warm,
    }
}

/// Solves every grid point in order and reports each one to `on_point` as
/// soon as it is done. A point that fails to converge is still recorded.
pub fn run_sweep<F: FnMut(&PointOutcome)>(spec: &SweepSpec, mut on_point: F) -> Result<SweepOutcome> {
    spec.validate()?;
    let cfg = &spec.solver_config;
    let checkpoints = checkpoint_indices(spec.grid.len());
    let started_unix = unix_now();
    let mut previous: Option<InputDistribution<f64>> = None;
    let mut points = Vec::with_capacity(spec.grid.len());

    for (index, &value) in spec.grid.iter().enumerate() {
        let params = spec.params_at(value)?;
        let clock = Instant::now();
        let warm = solve(&params, cfg, previous.as_ref())?;
        let mut start = if previous.is_some() { Start::Warm } else { Start::Cold };
        let mut result = warm;
        let mut checkpoint = None;
        if previous.is_some() && checkpoints.contains(&index) {
            let cold = solve(&params, cfg, None)?;
            let chosen = better(&result, &cold, cfg.epsilon);
            checkpoint = Some(CheckpointComparison {
                warm_capacity: result.capacity_nats,
                cold_capacity: cold.capacity_nats,
                warm_support: result.support_size,
                cold_support: cold.support_size,
                warm_converged: result.converged,
                cold_converged: cold.converged,
                chosen,
            });
            if chosen == Start::Cold {
                result = cold;
                start = Start::Cold;
            }
        }
        let outcome = PointOutcome {
            index,
            record: SweepRecord::from_result(&params, &result),
            start,
            checkpoint,
            wall_seconds: clock.elapsed().as_secs_f64(),
        };
        on_point(&outcome);
        points.push(outcome);
        previous = Some(result.distribution);
    }
    Ok(SweepOutcome {
        points,
        started_unix,
        finished_unix: unix_now(),
    })
}

/// `<stem>.manifest.json` next to `output`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into());
    output.with_file_name(format!("{stem}.manifest.json"))
}

#[derive(Debug, Serialize)]
struct ManifestPoint<'a> {
    index: usize,
    amplitude: f64,
    dark_current: f64,
    converged: bool,
    start: Start,
    checkpoint: Option<&'a CheckpointComparison>,
}

#[derive(Debug, Serialize)]
struct Timing {
    started_unix: f64,
    finished_unix: f64,
    wall_seconds: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    mode: SweepMode,
    fixed_value: f64,
    grid: &'a [f64],
    format: Format,
    output: String,
    solver_config: &'a SolverConfig<f64>,
    points: Vec<ManifestPoint<'a>>,
    /// Everything that changes from run to run lives here.
    timing: Timing,
}

/// Writes the data file and its manifest, returning the manifest path.
pub fn write_outputs(spec: &SweepSpec, outcome: &SweepOutcome) -> Result<PathBuf> {
    export_records(&outcome.records(), spec.format, &spec.output_path)?;
    let manifest = Manifest {
        tool: "poisson-capacity",
        version: crate::VERSION,
        mode: spec.mode,
        fixed_value: spec.fixed_value,
        grid: &spec.grid,
        format: spec.format,
        output: spec
            .output_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        solver_config: &spec.solver_config,
        points: outcome
            .points
            .iter()
            .map(|p| ManifestPoint {
                index: p.index,
                amplitude: p.record.amplitude,
                dark_current: p.record.dark_current,
                converged: p.record.converged,
                start: p.start,
                checkpoint: p.checkpoint.as_ref(),
            })
            .collect(),
        timing: Timing {
            started_unix: outcome.started_unix,
            finished_unix: outcome.finished_unix,
            wall_seconds: outcome.points.iter().map(|p| p.wall_seconds).collect(),
        },
    };
    let path = manifest_path(&spec.output_path);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    std::fs::write(&path, text + "\n").map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(mode: SweepMode, fixed: f64, grid: Vec<f64>) -> SweepSpec {
        SweepSpec {
            mode,
            fixed_value: fixed,
            grid,
            solver_config: SolverConfig::default(),
            output_path: PathBuf::from("out.csv"),
            format: Format::Csv,
        }
    }

    #[test]
    fn grid_parsing() {
        let g: GridSpec = "1:64:4,log".parse().unwrap();
        let v = g.values();
        assert_eq!(v.len(), 4);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[3], 64.0);
        assert_eq!(v[1], 4.0);
        assert_eq!(v[2], 16.0);

        let g: GridSpec = "0:100:5".parse().unwrap();
        assert_eq!(g.spacing, Spacing::Lin);
        assert_eq!(g.values(), vec![0.0, 25.0, 50.0, 75.0, 100.0]);
        assert_eq!(g.to_string(), "0:100:5,lin");

        assert_eq!("3:3:1,lin".parse::<GridSpec>().unwrap().values(), vec![3.0]);
    }

    #[test]
    fn bad_grids_are_rejected() {
        for s in ["0:10:5,log", "5:1:3", "1:2", "1:2:0", "a:2:3", "1:2:3,cubic", "-1:2:3"] {
            assert!(s.parse::<GridSpec>().is_err(), "{s}");
        }
    }

    #[test]
    fn checkpoints_are_log_spaced_and_cover_both_ends() {
        assert_eq!(checkpoint_indices(5), vec![0, 1, 2, 3, 4]);
        let idx = checkpoint_indices(64);
        assert_eq!(idx.len(), CHECKPOINTS);
        assert_eq!(idx, vec![0, 1, 2, 5, 10, 19, 34, 63]);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        let idx = checkpoint_indices(10);
        assert_eq!(idx.first(), Some(&0));
        assert_eq!(idx.last(), Some(&9));
    }

    #[test]
    fn spec_validation() {
        assert!(spec(SweepMode::Amplitude, 0.0, vec![]).validate().is_err());
        assert!(spec(SweepMode::Amplitude, 0.0, vec![2.0, 1.0]).validate().is_err());
        assert!(spec(SweepMode::Amplitude, 0.0, vec![1.0, 1.0]).validate().is_err());
        assert!(spec(SweepMode::Amplitude, -1.0, vec![1.0]).validate().is_err());
        assert!(spec(SweepMode::Single, 0.0, vec![1.0, 2.0]).validate().is_err());
        assert!(spec(SweepMode::DarkCurrent, 5.0, vec![0.0, 1.0]).validate().is_ok());
    }

    #[test]
    fn params_follow_the_mode() {
        let p = spec(SweepMode::DarkCurrent, 50.0, vec![3.0]).params_at(3.0).unwrap();
        assert_eq!((p.amplitude(), p.dark_current()), (50.0, 3.0));
        let p = spec(SweepMode::Amplitude, 1.0, vec![3.0]).params_at(3.0).unwrap();
        assert_eq!((p.amplitude(), p.dark_current()), (3.0, 1.0));
    }

    #[test]
    fn small_sweep_is_ordered_and_deterministic() {
        let s = spec(SweepMode::Amplitude, 0.0, vec![0.0, 1.0, 2.0, 4.0]);
        let mut seen = Vec::new();
        let a = run_sweep(&s, |p| seen.push(p.index)).unwrap();
        assert_eq!(seen, vec![0, 1, 2, 3]);
        assert!(a.all_converged());
        assert_eq!(a.points[0].record.capacity_nats, 0.0);
        assert!(a.points[1..].iter().all(|p| p.checkpoint.is_some()));
        let b = run_sweep(&s, |_| {}).unwrap();
        assert_eq!(a.records(), b.records());
    }

    #[test]
    fn outputs_are_written_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(SweepMode::DarkCurrent, 2.0, vec![0.0, 1.0]);
        s.output_path = dir.path().join("lambda.csv");
        let outcome = run_sweep(&s, |_| {}).unwrap();
        let manifest = write_outputs(&s, &outcome).unwrap();
        assert_eq!(manifest, dir.path().join("lambda.manifest.json"));
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
        assert_eq!(value["version"], crate::VERSION);
        assert_eq!(value["mode"], "dark-current");
        assert_eq!(value["timing"]["wall_seconds"].as_array().unwrap().len(), 2);
        assert_eq!(value["solver_config"]["n_ba"], 100);
        let text = std::fs::read_to_string(&s.output_path).unwrap();
        assert_eq!(text.lines().count(), 3);
    }
}

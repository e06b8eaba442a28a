//! Tabular export of solver results.
//!
//! CSV files have a header row followed by one row per record, columns in
//! the order of the [`SweepRecord`] fields. The `points` and `probs` cells
//! hold semicolon-joined values rounded to 12 significant digits; every
//! other number is written as the shortest decimal that parses back to the
//! same `f64`.
//!
//! JSON files hold an array of objects with the same keys:
//!
//! ```text
//! [
//!   {
//!     "amplitude": number, "dark_current": number,
//!     "capacity_nats": number, "capacity_bits": number,
//!     "n_points": integer, "duality_gap": number,
//!     "kkt_residual": number, "support_lower_bound": number,
//!     "converged": boolean, "outer_iterations": integer,
//!     "points": [number, ...], "probs": [number, ...]
//!   },
//!   ...
//! ]
//! ```

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::solver::SolveResult;

/// Significant digits kept for support points and probabilities.
pub const LIST_DIGITS: usize = 12;

pub const CSV_HEADER: [&str; 12] = [
    "amplitude",
    "dark_current",
    "capacity_nats",
    "capacity_bits",
    "n_points",
    "duality_gap",
    "kkt_residual",
    "support_lower_bound",
    "converged",
    "outer_iterations",
    "points",
    "probs",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub amplitude: f64,
    pub dark_current: f64,
    pub capacity_nats: f64,
    pub capacity_bits: f64,
    pub n_points: usize,
    pub duality_gap: f64,
    /// Largest deviation of the density on the support from `i(0)`.
    pub kkt_residual: f64,
    /// `e^C`, a lower bound on the support size.
    pub support_lower_bound: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub points: Vec<f64>,
    pub probs: Vec<f64>,
}

impl SweepRecord {
    pub fn from_result(params: &ChannelParams<f64>, result: &SolveResult<f64>) -> Self {
        Self {
            amplitude: params.amplitude(),
            dark_current: params.dark_current(),
            capacity_nats: result.capacity_nats,
            capacity_bits: result.capacity_nats / std::f64::consts::LN_2,
            n_points: result.support_size,
            duality_gap: result.duality_gap,
            kkt_residual: result.kkt.support_residual(),
            support_lower_bound: result.support_lower_bound,
            converged: result.converged,
            outer_iterations: result.outer_iterations,
            points: result.distribution.points().to_vec(),
            probs: result.distribution.probs().to_vec(),
        }
    }

    /// Copy with `points` and `probs` rounded the way they are exported.
    pub fn rounded(&self) -> Self {
        Self {
            points: self.points.iter().map(|&x| round_sig(x, LIST_DIGITS)).collect(),
            probs: self.probs.iter().map(|&x| round_sig(x, LIST_DIGITS)).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidConfig(format!("unknown format `{other}`"))),
        }
    }
}

/// Rounds `x` to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .unwrap_or(x)
}

/// Shortest decimal that parses back to `x`, in exponent form when the
/// plain form would be long.
pub fn format_shortest(x: f64) -> String {
    let magnitude = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&magnitude) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn join_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|&x| format_shortest(round_sig(x, LIST_DIGITS)))
        .collect::<Vec<_>>()
        .join(";")
}

fn split_list(cell: &str) -> std::result::Result<Vec<f64>, String> {
    if cell.trim().is_empty() {
        return Ok(Vec::new());
    }
    cell.split(';')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}")))
        .collect()
}

/// Writes `records` as CSV.
pub fn write_csv<W: Write>(records: &[SweepRecord], writer: W) -> std::result::Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(CSV_HEADER)?;
    for r in records {
        out.write_record([
            format_shortest(r.amplitude),
            format_shortest(r.dark_current),
            format_shortest(r.capacity_nats),
            format_shortest(r.capacity_bits),
            r.n_points.to_string(),
            format_shortest(r.duality_gap),
            format_shortest(r.kkt_residual),
            format_shortest(r.support_lower_bound),
            r.converged.to_string(),
            r.outer_iterations.to_string(),
            join_list(&r.points),
            join_list(&r.probs),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `records` as a pretty-printed JSON array.
pub fn write_json<W: Write>(records: &[SweepRecord], mut writer: W) -> std::io::Result<()> {
    let rounded: Vec<SweepRecord> = records.iter().map(SweepRecord::rounded).collect();
    serde_json::to_writer_pretty(&mut writer, &rounded)?;
    writeln!(writer)
}

pub fn to_string(records: &[SweepRecord], format: Format) -> Result<String> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(records, &mut buf).map_err(|e| Error::Format {
            path: "<memory>".into(),
            message: e.to_string(),
        })?,
        Format::Json => write_json(records, &mut buf).map_err(|e| Error::Format {
            path: "<memory>".into(),
            message: e.to_string(),
        })?,
    }
    Ok(String::from_utf8(buf).expect("exporters only emit UTF-8"))
}

/// Writes `records` to `path`.
pub fn export_records(records: &[SweepRecord], format: Format, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no records to export".into()));
    }
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    match format {
        Format::Csv => write_csv(records, &mut writer).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(source),
            other => Error::Format {
                path: path.to_path_buf(),
                message: format!("{other:?}"),
            },
        })?,
        Format::Json => write_json(records, &mut writer).map_err(io_err)?,
    }
    writer.flush().map_err(io_err)
}

/// Parses CSV produced by [`write_csv`].
pub fn parse_csv<R: Read>(reader: R) -> std::result::Result<Vec<SweepRecord>, String> {
    let mut input = csv::Reader::from_reader(reader);
    let header = input.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()));
    }
    let mut records = Vec::new();
    for (line, row) in input.records().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        let at = |i: usize| row.get(i).ok_or_else(|| format!("row {line}: missing column {}", CSV_HEADER[i]));
        fn num<T: FromStr>(s: &str, name: &str) -> std::result::Result<T, String>
        where
            T::Err: fmt::Display,
        {
            s.parse().map_err(|e| format!("{name} `{s}`: {e}"))
        }
        records.push(SweepRecord {
            amplitude: num(at(0)?, CSV_HEADER[0])?,
            dark_current: num(at(1)?, CSV_HEADER[1])?,
            capacity_nats: num(at(2)?, CSV_HEADER[2])?,
            capacity_bits: num(at(3)?, CSV_HEADER[3])?,
            n_points: num(at(4)?, CSV_HEADER[4])?,
            duality_gap: num(at(5)?, CSV_HEADER[5])?,
            kkt_residual: num(at(6)?, CSV_HEADER[6])?,
            support_lower_bound: num(at(7)?, CSV_HEADER[7])?,
            converged: num(at(8)?, CSV_HEADER[8])?,
            outer_iterations: num(at(9)?, CSV_HEADER[9])?,
            points: split_list(at(10)?)?,
            probs: split_list(at(11)?)?,
        });
    }
    Ok(records)
}

pub fn parse_json<R: Read>(reader: R) -> std::result::Result<Vec<SweepRecord>, String> {
    serde_json::from_reader(reader).map_err(|e| e.to_string())
}

/// Reads records back from a file written by [`export_records`].
pub fn import_records(path: &Path, format: Format) -> Result<Vec<SweepRecord>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        Format::Csv => parse_csv(file),
        Format::Json => parse_json(file),
    }
    .map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use poisson_capacity::export::{export_records, Format, SweepRecord};
use poisson_capacity::sweep::{run_sweep, write_outputs, GridSpec, PointOutcome, Start, SweepMode, SweepSpec};
use poisson_capacity::{solve, ChannelParams, SolverConfig};

const EXIT_INVALID: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;

/// Capacity of the amplitude-constrained Poisson channel with dark current.
#[derive(Debug, Parser)]
#[command(name = "poisson-capacity", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a single (A, λ) point.
    #[command(allow_negative_numbers = true)]
    Solve {
        /// Peak amplitude A.
        #[arg(long)]
        amplitude: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep A at fixed λ, or λ at fixed A.
    #[command(allow_negative_numbers = true)]
    Sweep {
        #[arg(long = "sweep", value_enum)]
        mode: SweepArg,
        /// λ for an amplitude sweep, A for a dark-current sweep.
        #[arg(long)]
        fixed: f64,
        /// start:stop:count[,lin|log]
        #[arg(long)]
        grid: String,
        /// Also write a matplotlib script next to the data.
        #[arg(long)]
        plot_script: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepArg {
    Amplitude,
    DarkCurrent,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct Common {
    /// Dark current λ (fixed for solves and amplitude sweeps).
    #[arg(long, default_value_t = 0.0)]
    dark_current: f64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Blahut-Arimoto iterations per inner pass.
    #[arg(long)]
    n_ba: Option<usize>,
    /// Gradient-ascent iterations per inner pass.
    #[arg(long)]
    n_ga: Option<usize>,
    /// Clustering distance.
    #[arg(long)]
    min_spacing: Option<f64>,
    #[arg(long)]
    max_outer_iterations: Option<usize>,
    /// Data file; required for sweeps.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Report capacities in bits instead of nats.
    #[arg(long)]
    bits: bool,
}

impl Common {
    fn solver_config(&self) -> Result<SolverConfig, String> {
        let mut cfg = SolverConfig {
            epsilon: self.epsilon,
            ..SolverConfig::default()
        };
        if let Some(n) = self.n_ba {
            cfg.n_ba = n;
        }
        if let Some(n) = self.n_ga {
            cfg.n_ga = n;
        }
        if let Some(d) = self.min_spacing {
            cfg.min_spacing = d;
        }
        if let Some(n) = self.max_outer_iterations {
            cfg.max_outer_iterations = n;
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    fn format(&self) -> Format {
        match self.format {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }

    fn capacity(&self, nats: f64) -> String {
        if self.bits {
            format!("{} bits", nats / std::f64::consts::LN_2)
        } else {
            format!("{nats} nats")
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INVALID)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Solve { amplitude, common } => run_solve(amplitude, &common),
        Command::Sweep {
            mode,
            fixed,
            grid,
            plot_script,
            common,
        } => run_sweep_command(mode, fixed, &grid, plot_script, &common),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NOT_CONVERGED),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn print_record(record: &SweepRecord, common: &Common) {
    println!("amplitude     {}", record.amplitude);
    println!("dark current  {}", record.dark_current);
    println!("capacity      {}", common.capacity(record.capacity_nats));
    println!("duality gap   {:e}", record.duality_gap);
    println!("converged     {} after {} outer iterations", record.converged, record.outer_iterations);
    println!("support       {} points", record.n_points);
    for (x, p) in record.points.iter().zip(&record.probs) {
        println!("  x = {x:<22} p = {p}");
    }
}

fn run_solve(amplitude: f64, common: &Common) -> Result<bool, String> {
    let cfg = common.solver_config()?;
    let params = ChannelParams::new(amplitude, common.dark_current).map_err(|e| e.to_string())?;
    let result = solve(&params, &cfg, None).map_err(|e| e.to_string())?;
    let record = SweepRecord::from_result(&params, &result);
    if let Some(path) = &common.output {
        export_records(std::slice::from_ref(&record), common.format(), path).map_err(|e| e.to_string())?;
    }
    print_record(&record, common);
    Ok(record.converged)
}

fn log_point(point: &PointOutcome, total: usize, common: &Common) {
    let r = &point.record;
    eprintln!(
        "[{}/{}] A={} λ={} C={} n={} gap={:.3e} converged={} ({:.2}s)",
        point.index + 1,
        total,
        r.amplitude,
        r.dark_current,
        common.capacity(r.capacity_nats),
        r.n_points,
        r.duality_gap,
        r.converged,
        point.wall_seconds
    );
    if let Some(c) = &point.checkpoint {
        let chosen = match c.chosen {
            Start::Warm => "warm",
            Start::Cold => "cold",
        };
        eprintln!(
            "    checkpoint: warm C={} n={}, cold C={} n={}; kept {chosen}",
            c.warm_capacity, c.warm_support, c.cold_capacity, c.cold_support
        );
    }
}

fn run_sweep_command(
    mode: SweepArg,
    fixed: f64,
    grid: &str,
    plot_script: bool,
    common: &Common,
) -> Result<bool, String> {
    let output = common
        .output
        .clone()
        .ok_or_else(|| "sweep needs --output".to_string())?;
    let grid: GridSpec = grid.parse().map_err(|e: poisson_capacity::Error| e.to_string())?;
    let mode = match mode {
        SweepArg::Amplitude => SweepMode::Amplitude,
        SweepArg::DarkCurrent => SweepMode::DarkCurrent,
    };
    let spec = SweepSpec {
        mode,
        fixed_value: fixed,
        grid: grid.values(),
        solver_config: common.solver_config()?,
        output_path: output.clone(),
        format: common.format(),
    };
    spec.validate().map_err(|e| e.to_string())?;
    let total = spec.grid.len();
    let outcome = run_sweep(&spec, |p| log_point(p, total, common)).map_err(|e| e.to_string())?;
    let manifest = write_outputs(&spec, &outcome).map_err(|e| e.to_string())?;
    println!("wrote {}", output.display());
    println!("wrote {}", manifest.display());
    if plot_script {
        let script = write_plot_script(&output, spec.format, mode)?;
        println!("wrote {}", script.display());
    }
    let failed = outcome.points.iter().filter(|p| !p.record.converged).count();
    if failed > 0 {
        eprintln!("{failed} of {total} points did not converge");
    }
    Ok(failed == 0)
}

fn write_plot_script(output: &Path, format: Format, mode: SweepMode) -> Result<PathBuf, String> {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into());
    let path = output.with_file_name(format!("{stem}.plot.py"));
    let data = output
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (axis, label) = match mode {
        SweepMode::DarkCurrent => ("dark_current", "dark current λ"),
        _ => ("amplitude", "amplitude A"),
    };
    let loader = match format {
        Format::Csv => {
            "import csv\n\
             with open(DATA, newline='') as f:\n\
             \x20   rows = list(csv.DictReader(f))\n\
             for r in rows:\n\
             \x20   r['points'] = [float(v) for v in r['points'].split(';') if v]\n\
             \x20   r['probs'] = [float(v) for v in r['probs'].split(';') if v]\n"
        }
        Format::Json => {
            "import json\n\
             with open(DATA) as f:\n\
             \x20   rows = json.load(f)\n"
        }
    };
    let script = format!(
        "import os\n\
         import matplotlib.pyplot as plt\n\n\
         DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), {data:?})\n\
         {loader}\n\
         xs = [float(r[{axis:?}]) for r in rows]\n\
         fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(7, 8))\n\
         top.plot(xs, [float(r['capacity_nats']) for r in rows], marker='.')\n\
         top.set_ylabel('capacity [nats]')\n\
         for x, r in zip(xs, rows):\n\
         \x20   bottom.scatter([x] * len(r['points']), r['points'], c=r['probs'], s=12, cmap='viridis')\n\
         bottom.set_ylabel('support points')\n\
         bottom.set_xlabel({label:?})\n\
         fig.tight_layout()\n\
         fig.savefig(os.path.splitext(DATA)[0] + '.png', dpi=150)\n"
    );
    std::fs::write(&path, script).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(path)
}

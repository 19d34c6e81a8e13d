//! Sweep execution: worker pool, checkpointed CSV, SVG and crossing report.

use std::fs;
use std::io;
use std::path::Path;

use log::warn;
use swaprelay::coincidence::{
    sweep_angle, sweep_chi, sweep_distance, sweep_nmax, RowValues, SweepRow, SweepTable, SweepVariable,
    BELL_THRESHOLD, CUTOFF_VISIBILITY,
};
use swaprelay::RelayError;

use crate::config::{ConfigError, RunConfig};
use crate::plot::{self, Series};
use crate::table::{self, CsvSink, OutRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid parameters: {0}")]
    Validation(RelayError),
    #[error("computation failed: {0}")]
    Computation(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    /// 1 for bad input, 2 for failures while computing or writing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Validation(_) => 1,
            CliError::Computation(_) | CliError::Io { .. } => 2,
        }
    }
}

impl From<RelayError> for CliError {
    fn from(e: RelayError) -> Self {
        if e.is_validation() {
            CliError::Validation(e)
        } else {
            CliError::Computation(e.to_string())
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn sweep_name(variable: SweepVariable) -> &'static str {
    match variable {
        SweepVariable::Angle => "angle",
        SweepVariable::Chi => "chi",
        SweepVariable::Distance => "distance",
        SweepVariable::NMax => "nmax",
    }
}

/// Completed sweep plus how many rows came from an earlier, interrupted run.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub variable: SweepVariable,
    pub rows: Vec<OutRow>,
    pub resumed: usize,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.values.is_none()).count()
    }

    fn ok_points(&self, pick: impl Fn(&RowValues) -> f64) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.values.as_ref().map(|v| (r.x, pick(v))))
            .collect()
    }

    /// First grid value at which V falls below `threshold`.
    pub fn crossing(&self, threshold: f64) -> Crossing {
        let points = self.ok_points(|v| v.visibility);
        match points.first() {
            None => Crossing::NoData,
            Some(&(_, v)) if v < threshold => Crossing::BelowThroughout,
            _ => points
                .windows(2)
                .find_map(|w| {
                    let ((x0, v0), (x1, v1)) = (w[0], w[1]);
                    (v1 < threshold).then(|| Crossing::At(x0 + (v0 - threshold) / (v0 - v1) * (x1 - x0)))
                })
                .unwrap_or(Crossing::AboveThroughout),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crossing {
    At(f64),
    BelowThroughout,
    AboveThroughout,
    NoData,
}

impl std::fmt::Display for Crossing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Crossing::At(x) => write!(f, "{x:.1}"),
            Crossing::BelowThroughout => write!(f, "below on the whole grid"),
            Crossing::AboveThroughout => write!(f, "above on the whole grid"),
            Crossing::NoData => write!(f, "no successful rows"),
        }
    }
}

/// Builds a pool with `workers` threads and runs `f` inside it.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Computation(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

fn evaluate(config: &RunConfig, grid: &[f64]) -> Result<SweepTable, RelayError> {
    let (p, a) = (&config.params, config.alpha_tilde);
    match config.sweep {
        SweepVariable::Angle => sweep_angle(p, a, grid),
        SweepVariable::Chi => sweep_chi(p, a, grid),
        SweepVariable::Distance => sweep_distance(p, a, grid),
        SweepVariable::NMax => {
            let values: Vec<u8> = grid.iter().map(|&x| x as u8).collect();
            sweep_nmax(p, a, &values)
        }
    }
}

fn to_out_rows(rows: Vec<SweepRow>) -> Vec<OutRow> {
    rows.into_iter()
        .map(|r| {
            if let Err(e) = &r.result {
                warn!("{} failed: {e}", r.x);
            }
            OutRow {
                x: r.x,
                values: r.result.ok(),
            }
        })
        .collect()
}

/// Runs the configured sweep, writing CSV and SVG if paths are set.
///
/// Grid points are evaluated in batches of `workers`; each finished batch is
/// appended to the CSV in grid order, so an interrupted run resumes where it
/// stopped and the bytes do not depend on the worker count.
pub fn run_sweep(config: &RunConfig) -> Result<SweepOutcome, CliError> {
    let grid = config.grid_points()?;
    let column = config.sweep.name();
    let mut rows = Vec::new();
    let mut sink = None;
    if let Some(path) = &config.out_csv {
        let preamble = table::preamble(sweep_name(config.sweep), &config.params, config.alpha_tilde, &config.grid.to_string());
        let (s, done) = CsvSink::open(path, &preamble, &table::header(column), &grid).map_err(io_err(path))?;
        rows = done;
        sink = Some(s);
    }
    let resumed = rows.len();
    with_workers(config.workers, || -> Result<(), CliError> {
        for batch in grid[resumed..].chunks(config.workers) {
            let table = evaluate(config, batch)?;
            let batch_rows = to_out_rows(table.rows);
            if let (Some(s), Some(path)) = (sink.as_mut(), &config.out_csv) {
                s.append(&batch_rows).map_err(io_err(path))?;
            }
            rows.extend(batch_rows);
        }
        Ok(())
    })??;
    let outcome = SweepOutcome {
        variable: config.sweep,
        rows,
        resumed,
    };
    if let Some(path) = &config.out_svg {
        fs::write(path, render_svg(config, &outcome)).map_err(io_err(path))?;
    }
    let failures = outcome.failures();
    if failures > config.max_row_errors {
        return Err(CliError::Computation(format!(
            "{failures} of {} rows failed (tolerance {})",
            outcome.rows.len(),
            config.max_row_errors
        )));
    }
    Ok(outcome)
}

fn render_svg(config: &RunConfig, outcome: &SweepOutcome) -> String {
    let n = config.params.n_stations();
    let title = format!("N = {n}, {} sweep", sweep_name(config.sweep));
    let series = match config.sweep {
        SweepVariable::Angle => vec![
            Series {
                label: "Q1010 + Q0101",
                points: outcome.ok_points(|v| v.v_max),
            },
            Series {
                label: "Q0110 + Q1001",
                points: outcome.ok_points(|v| v.v_min),
            },
        ],
        _ => vec![Series {
            label: "V",
            points: outcome.ok_points(|v| v.visibility),
        }],
    };
    let y_label = if config.sweep == SweepVariable::Angle { "coincidence probability" } else { "visibility" };
    plot::render(&title, config.sweep.name(), y_label, &series)
}

/// Human-readable summary lines for a finished sweep.
pub fn report(config: &RunConfig, outcome: &SweepOutcome) -> Vec<String> {
    let n = config.params.n_stations();
    let mut lines = vec![format!(
        "N={n} {} sweep: {} rows ({} resumed, {} failed)",
        sweep_name(config.sweep),
        outcome.rows.len(),
        outcome.resumed,
        outcome.failures()
    )];
    match config.sweep {
        SweepVariable::Angle => {
            let max = outcome.ok_points(|v| v.v_max);
            let argmax = max.iter().copied().fold(None, |best: Option<(f64, f64)>, p| match best {
                Some(b) if b.1 >= p.1 => Some(b),
                _ => Some(p),
            });
            let argmin = max.iter().copied().fold(None, |best: Option<(f64, f64)>, p| match best {
                Some(b) if b.1 <= p.1 => Some(b),
                _ => Some(p),
            });
            if let (Some(hi), Some(lo)) = (argmax, argmin) {
                lines.push(format!("Q1010+Q0101 maximal at delta_tilde = {:.6}, minimal at {:.6}", hi.0, lo.0));
            }
        }
        SweepVariable::Distance => {
            lines.push(format!("Bell threshold crossing (V < {BELL_THRESHOLD:.4}), km: {}", outcome.crossing(BELL_THRESHOLD)));
            lines.push(format!("cutoff (V < {CUTOFF_VISIBILITY}), km: {}", outcome.crossing(CUTOFF_VISIBILITY)));
        }
        SweepVariable::Chi | SweepVariable::NMax => {
            for (x, v) in outcome.ok_points(|v| v.visibility) {
                lines.push(format!("{} = {x}: V = {v:.6}", config.sweep.name()));
            }
        }
    }
    lines
}

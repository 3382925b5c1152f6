//! Trace CSVs, stats sidecars and oracle files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use delayed_md::games::CriticalPoint;
use delayed_md::runner::{Reference, RunOutput, RunStats};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const TRACE_HEADER: &str = "run_id,iteration,rel_dist,potential_gap,ghat_norm,starved_players,wall_ms";

/// 17 significant digits; NaN is written as `nan`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_trace(path: &Path, runs: &[RunOutput]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for (run_id, run) in runs.iter().enumerate() {
            for row in &run.trace {
                writeln!(
                    w,
                    "{run_id},{},{},{},{},{},{}",
                    row.iteration,
                    format_float(row.rel_dist),
                    format_float(row.potential_gap),
                    format_float(row.ghat_norm),
                    row.starved_players,
                    format_float(row.wall_ms),
                )?;
            }
        }
        w.flush()
    };
    write().map_err(|e| io_error(path, e))
}

/// `runs.csv` → `runs.stats.json`.
pub fn stats_path(trace: &Path) -> PathBuf {
    trace.with_extension("stats.json")
}

#[derive(Serialize)]
struct StatsEntry<'a> {
    run_id: usize,
    seed: u64,
    #[serde(flatten)]
    stats: &'a RunStats,
}

pub fn write_stats(path: &Path, runs: &[RunOutput]) -> Result<(), CliError> {
    let entries: Vec<StatsEntry> = runs
        .iter()
        .enumerate()
        .map(|(run_id, r)| StatsEntry {
            run_id,
            seed: r.seed,
            stats: &r.stats,
        })
        .collect();
    write_json(path, &entries)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Reference solution written by `oracle` and read back by `run`/`sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleFile {
    pub profile: Vec<Vec<f64>>,
    pub potential: Option<f64>,
    /// Natural-map residual at `profile`.
    pub vi_residual: f64,
    pub step: f64,
    pub iterations: usize,
}

impl OracleFile {
    pub fn from_critical_point(cp: &CriticalPoint) -> Self {
        Self {
            profile: cp.profile.iter().map(|b| b.as_slice().to_vec()).collect(),
            potential: cp.potential,
            vi_residual: cp.residual,
            step: cp.step,
            iterations: cp.iterations,
        }
    }

    pub fn reference(&self) -> Reference {
        Reference {
            profile: self.profile.iter().map(|b| DVector::from_vec(b.clone())).collect(),
            potential: self.potential,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

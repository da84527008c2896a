//! Per-cell metrics JSON and the per-mode aggregate CSV.

use std::fs;
use std::path::{Path, PathBuf};

use lwp_core::trainer::RunRecord;
use lwp_core::{ExperimentResult, LossWeights, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightsJson {
    pub lambda_c: f64,
    pub lambda_o: f64,
    pub lambda_d: f64,
}

impl From<LossWeights> for WeightsJson {
    fn from(w: LossWeights) -> Self {
        Self {
            lambda_c: w.lambda_c,
            lambda_o: w.lambda_o,
            lambda_d: w.lambda_d,
        }
    }
}

/// Deterministic summary of one (mode, seed) cell. Timings live elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub mode: String,
    pub seed: u64,
    pub generator: String,
    /// Weights from the config, before the mode switches terms off.
    pub loss_weights: WeightsJson,
    pub variant: String,
    pub mask: bool,
    pub accuracy_matrix: Vec<Vec<f64>>,
    pub final_average_accuracy: f64,
    /// `null` for single-task streams.
    pub bwt: Option<f64>,
    pub ece_per_task: Vec<f64>,
    pub gram_deviation_trace: Vec<f64>,
    pub epochs_run: Vec<usize>,
    pub best_epoch: Vec<usize>,
}

impl CellMetrics {
    pub fn new(result: &ExperimentResult, cfg: &TrainConfig, generator: &str) -> Self {
        Self {
            mode: result.mode.name().to_string(),
            seed: cfg.seed,
            generator: generator.to_string(),
            loss_weights: cfg.weights.into(),
            variant: cfg.variant.name().to_string(),
            mask: cfg.use_mask,
            accuracy_matrix: result.accuracy.rows().to_vec(),
            final_average_accuracy: result.accuracy.final_average().unwrap_or(0.0),
            bwt: result.backward_transfer(),
            ece_per_task: result.ece_per_task.clone(),
            gram_deviation_trace: result.gram_deviation_trace.clone(),
            epochs_run: result.records.iter().map(|r| r.train_losses.len()).collect(),
            best_epoch: result.records.iter().map(|r| r.best_epoch).collect(),
        }
    }

    pub fn mean_ece(&self) -> f64 {
        mean(&self.ece_per_task)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Wall-clock seconds per task; kept out of the metrics file so that stays
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub mode: String,
    pub seed: u64,
    pub task_secs: Vec<f64>,
    pub steps: Vec<u64>,
}

impl CellTiming {
    pub fn new(mode: &str, seed: u64, records: &[RunRecord]) -> Self {
        Self {
            mode: mode.to_string(),
            seed,
            task_secs: records.iter().map(|r| r.wall_clock_secs).collect(),
            steps: records.iter().map(|r| r.steps).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}

pub fn cell_dir(out: &Path, mode: &str, seed: u64) -> PathBuf {
    out.join(mode).join(format!("seed{seed}"))
}

/// Every `<dir>/<mode>/seed<k>/metrics.json`, sorted by mode then seed.
pub fn collect_metrics(dir: &Path) -> Result<Vec<CellMetrics>> {
    let mut cells = Vec::new();
    let entries = fs::read_dir(dir).map_err(Error::io(dir))?;
    for mode_dir in entries {
        let mode_dir = mode_dir.map_err(Error::io(dir))?.path();
        if !mode_dir.is_dir() {
            continue;
        }
        let seeds = fs::read_dir(&mode_dir).map_err(Error::io(&mode_dir))?;
        for seed_dir in seeds {
            let p = seed_dir.map_err(Error::io(&mode_dir))?.path().join("metrics.json");
            if p.is_file() {
                cells.push(CellMetrics::load(&p)?);
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::format(dir, "no metrics.json files found"));
    }
    cells.sort_by(|a, b| (mode_rank(&a.mode), &a.mode, a.seed).cmp(&(mode_rank(&b.mode), &b.mode, b.seed)));
    Ok(cells)
}

/// Canonical mode order for tables and plots.
pub(crate) fn mode_rank(mode: &str) -> usize {
    ["lwp", "lwf", "naive_ft", "stl"]
        .iter()
        .position(|m| *m == mode)
        .unwrap_or(usize::MAX)
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator); NaN below two values.
pub fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mode: String,
    pub seeds: usize,
    pub final_acc: (f64, f64),
    pub bwt: (f64, f64),
    pub ece: (f64, f64),
}

/// Mean and sample sd per mode, in canonical mode order. A missing BWT
/// (single-task stream) gives NaN.
pub fn summarize(cells: &[CellMetrics]) -> Vec<ModeSummary> {
    let mut modes: Vec<&str> = cells.iter().map(|c| c.mode.as_str()).collect();
    modes.sort_by_key(|m| (mode_rank(m), *m));
    modes.dedup();
    modes
        .into_iter()
        .map(|mode| {
            let of: Vec<&CellMetrics> = cells.iter().filter(|c| c.mode == mode).collect();
            let stat = |f: &dyn Fn(&CellMetrics) -> f64| {
                let v: Vec<f64> = of.iter().map(|c| f(c)).collect();
                (mean(&v), sample_sd(&v))
            };
            ModeSummary {
                mode: mode.to_string(),
                seeds: of.len(),
                final_acc: stat(&|c| c.final_average_accuracy),
                bwt: stat(&|c| c.bwt.unwrap_or(f64::NAN)),
                ece: stat(&|c| c.mean_ece()),
            }
        })
        .collect()
}

pub const AGGREGATE_HEADER: [&str; 8] = [
    "mode",
    "seeds",
    "final_acc_mean",
    "final_acc_sd",
    "bwt_mean",
    "bwt_sd",
    "ece_mean",
    "ece_sd",
];

/// Writes `aggregate.csv`; NaN is written as an empty field.
pub fn write_aggregate(cells: &[CellMetrics], path: &Path) -> Result<()> {
    let num = |v: f64| if v.is_nan() { String::new() } else { v.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    w.write_record(AGGREGATE_HEADER)
        .map_err(|e| Error::format(path, e.to_string()))?;
    for s in summarize(cells) {
        w.write_record([
            s.mode.clone(),
            s.seeds.to_string(),
            num(s.final_acc.0),
            num(s.final_acc.1),
            num(s.bwt.0),
            num(s.bwt.1),
            num(s.ece.0),
            num(s.ece.1),
        ])
        .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(Error::io(path))
}

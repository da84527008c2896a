//! Executes every (mode, seed) cell of an experiment and writes results.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lwp_core::trainer::{run_sequence_with, Clock};
use lwp_core::Mode;
use rayon::prelude::*;

use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::plot::write_plots;
use crate::results::{cell_dir, write_aggregate, CellMetrics, CellTiming};

/// Environment variable holding the number of cells run at once.
pub const WORKERS_ENV: &str = "LWP_WORKERS";

struct WallClock(Instant);

impl Clock for WallClock {
    fn now_secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn worker_count() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::config(WORKERS_ENV, format!("expected a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Trains one cell and writes its metrics, timing and per-task checkpoints.
pub fn run_cell(cfg: &ExperimentConfig, mode: Mode, seed: u64) -> Result<CellMetrics> {
    let dir = cell_dir(&cfg.out, mode.name(), seed);
    fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
    let stream = cfg.stream.build(seed)?;
    let train = cfg.cell(mode, seed);
    let mut save_err = None;
    let result = run_sequence_with(&stream, &train, &WallClock(Instant::now()), &mut |t, model, _| {
        if save_err.is_none() {
            save_err = checkpoint::save(model, &dir.join(format!("checkpoint_task{t}.json"))).err();
        }
    })?;
    if let Some(e) = save_err {
        return Err(e);
    }
    let metrics = CellMetrics::new(&result, &train, cfg.stream.generator());
    metrics.save(&dir.join("metrics.json"))?;
    CellTiming::new(mode.name(), seed, &result.records).save(&dir.join("timing.json"))?;
    Ok(metrics)
}

#[derive(Debug)]
pub struct RunOutput {
    pub cells: Vec<CellMetrics>,
    pub aggregate: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// Runs all cells on a pool of `workers` threads, then writes the aggregate
/// and plots once every cell has finished. The first failing cell in
/// (mode, seed) order is reported.
pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<RunOutput> {
    fs::create_dir_all(&cfg.out).map_err(Error::io(&cfg.out))?;
    let cells: Vec<(Mode, u64)> = cfg
        .modes
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(WORKERS_ENV, e.to_string()))?;
    let outcomes: Vec<Result<CellMetrics>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(mode, seed)| {
                run_cell(cfg, mode, seed).map_err(|e| Error::Cell {
                    mode: mode.name().to_string(),
                    seed,
                    source: Box::new(e),
                })
            })
            .collect()
    });
    let metrics = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let aggregate = cfg.out.join("aggregate.csv");
    write_aggregate(&metrics, &aggregate)?;
    let plots = write_plots(&metrics, &cfg.out.join("plots"))?;
    Ok(RunOutput {
        cells: metrics,
        aggregate,
        plots,
    })
}

/// Loads the config at `path` and runs it with [`worker_count`] workers.
pub fn run_config(path: &Path) -> Result<RunOutput> {
    let cfg = ExperimentConfig::load(path)?;
    run(&cfg, worker_count()?)
}

//! Tabular task streams: one CSV file per task plus a small JSON schema.
//!
//! Schema: `{"features": [...], "label": "y", "classes": 2, "split": "split"}`.
//! `split` is optional; when present its column holds `train`, `val` or
//! `test`. Without it each file is partitioned 70/15/15 by a seeded
//! permutation.

use std::fs;
use std::path::{Path, PathBuf};

use lwp_core::tasks::{partition, Split, TaskSplit, DATA_STREAM};
use lwp_core::{Matrix, Rng, TaskStream};
use serde::{Deserialize, Serialize};

use crate::embeddings::csv_err;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<String>,
    pub label: String,
    pub classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

impl Schema {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        let schema: Schema = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if schema.features.is_empty() {
            return Err(Error::format(path, "schema lists no features"));
        }
        if schema.classes < 2 {
            return Err(Error::format(path, format!("classes must be >= 2, got {}", schema.classes)));
        }
        Ok(schema)
    }
}

/// Rows of one file, grouped by split.
struct TaskRows {
    x: [Vec<f64>; 3],
    y: [Vec<f64>; 3],
}

fn read_task(path: &Path, schema: &Schema) -> Result<TaskRows> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::format(path, format!("missing column {name:?}")))
    };
    let feature_cols = schema.features.iter().map(|f| column(f)).collect::<Result<Vec<_>>>()?;
    let label_col = column(&schema.label)?;
    let split_col = schema.split.as_deref().map(column).transpose()?;

    let mut rows = TaskRows {
        x: Default::default(),
        y: Default::default(),
    };
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = i + 2;
        if rec.len() != header.len() {
            return Err(Error::format(
                path,
                format!("line {line}: ragged row with {} fields, header has {}", rec.len(), header.len()),
            ));
        }
        let part = match split_col {
            None => 0,
            Some(c) => match rec[c].trim() {
                "train" => 0,
                "val" => 1,
                "test" => 2,
                other => return Err(Error::format(path, format!("line {line}: unknown split {other:?}"))),
            },
        };
        for (&c, name) in feature_cols.iter().zip(&schema.features) {
            let v: f64 = rec[c].trim().parse().map_err(|_| {
                Error::format(path, format!("line {line}: non-numeric value {:?} in feature {name:?}", &rec[c]))
            })?;
            if !v.is_finite() {
                return Err(Error::format(path, format!("line {line}: non-finite value in feature {name:?}")));
            }
            rows.x[part].push(v);
        }
        let raw = rec[label_col].trim();
        let label = raw
            .parse::<usize>()
            .ok()
            .filter(|&l| l < schema.classes)
            .ok_or_else(|| {
                Error::format(
                    path,
                    format!("line {line}: unknown label {raw:?} for {} classes", schema.classes),
                )
            })?;
        rows.y[part].push(label as f64);
    }
    Ok(rows)
}

fn split_from(x: Vec<f64>, y: Vec<f64>, d: usize) -> Split {
    let n = y.len();
    Split {
        x: Matrix::from_vec(n, d, x).expect("row widths checked"),
        y: Matrix::from_vec(n, 1, y).expect("one label per row"),
    }
}

/// Loads one task per file in order and z-scores every split with task 0's
/// training statistics. `seed` drives the partition when the schema has no
/// split column.
pub fn load_csv_stream(paths: &[PathBuf], schema: &Schema, seed: u64) -> Result<TaskStream> {
    if paths.is_empty() {
        return Err(Error::config("files", "no task files given"));
    }
    let d = schema.features.len();
    let mut rng = Rng::derived(seed, DATA_STREAM);
    let mut tasks = Vec::with_capacity(paths.len());
    for path in paths {
        let rows = read_task(path, schema)?;
        let [xtr, xva, xte] = rows.x;
        let [ytr, yva, yte] = rows.y;
        let (train, val, test) = if schema.split.is_some() {
            (split_from(xtr, ytr, d), split_from(xva, yva, d), split_from(xte, yte, d))
        } else {
            let all = split_from(xtr, ytr, d);
            let parts = partition(all.len(), &mut rng);
            let pick = |idx: &[usize]| Split {
                x: all.x.select_rows(idx),
                y: all.y.select_rows(idx),
            };
            (pick(&parts[0]), pick(&parts[1]), pick(&parts[2]))
        };
        for (name, s) in [("train", &train), ("val", &val), ("test", &test)] {
            if s.is_empty() {
                return Err(Error::format(path, format!("empty {name} split")));
            }
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("task{}", tasks.len()));
        tasks.push(TaskSplit {
            name,
            classes: schema.classes,
            train,
            val,
            test,
        });
    }
    let mut stream = TaskStream::new(tasks, false)?;
    stream.zscore_from_first_train();
    Ok(stream)
}

/// Dumps a stream as one CSV per task (`task<t>_<name>.csv`) with a `split`
/// column, plus `schema.json`. Returns the task file paths in order.
pub fn write_stream(stream: &TaskStream, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let d = stream.input_dim();
    let features: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    let classes = stream.tasks().iter().map(|t| t.classes).max().unwrap_or(2);
    let mut paths = Vec::new();
    for (t, task) in stream.tasks().iter().enumerate() {
        let path = dir.join(format!("task{t}_{}.csv", task.name));
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        let mut header = features.clone();
        header.push("label".into());
        header.push("split".into());
        w.write_record(&header).map_err(|e| csv_err(&path, e))?;
        for (name, split) in [("train", &task.train), ("val", &task.val), ("test", &task.test)] {
            for i in 0..split.len() {
                let mut rec: Vec<String> = split.x.row(i).iter().map(|v| v.to_string()).collect();
                rec.push((split.y[(i, 0)] as usize).to_string());
                rec.push(name.into());
                w.write_record(&rec).map_err(|e| csv_err(&path, e))?;
            }
        }
        w.flush().map_err(Error::io(&path))?;
        paths.push(path);
    }
    let schema = Schema {
        features,
        label: "label".into(),
        classes,
        split: Some("split".into()),
    };
    let schema_path = dir.join("schema.json");
    fs::write(&schema_path, serde_json::to_string_pretty(&schema).expect("schema serializes"))
        .map_err(Error::io(&schema_path))?;
    Ok(paths)
}

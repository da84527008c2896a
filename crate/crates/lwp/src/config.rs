//! Experiment configuration: `[section]` headers with `key = value` lines.
//!
//! ```ini
//! [stream]
//! ; toy, attribute, shift or csv
//! generator = toy
//! n = 2000
//!
//! [train]
//! epochs = 30
//! lambda_d = 0.01
//!
//! [experiment]
//! seeds = 0, 1, 2, 3, 4
//! modes = lwp, naive_ft
//! out = results
//! ```
//!
//! Missing keys take their defaults. Unknown sections or keys are errors.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::{Ini, Properties};
use lwp_core::losses::PseudolabelMode;
use lwp_core::optim::AdamConfig;
use lwp_core::tasks::{gen_shift_stream, gen_toy_xor_circles, AttributeParams, ToyOrder};
use lwp_core::trainer::ModelConfig;
use lwp_core::{Activation, DistanceVariant, LossWeights, Mode, Sigma, TaskStream, TrainConfig};

use crate::csv_stream::{load_csv_stream, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum StreamSpec {
    Toy { n: usize, noise: f64, order: ToyOrder },
    Attribute(AttributeParams),
    Shift { params: AttributeParams, shift_scale: f64 },
    Csv { schema: PathBuf, files: Vec<PathBuf> },
}

impl StreamSpec {
    pub fn generator(&self) -> &'static str {
        match self {
            StreamSpec::Toy { .. } => "toy",
            StreamSpec::Attribute(_) => "attribute",
            StreamSpec::Shift { .. } => "shift",
            StreamSpec::Csv { .. } => "csv",
        }
    }

    /// Builds the stream for one seed.
    pub fn build(&self, seed: u64) -> Result<TaskStream> {
        Ok(match self {
            StreamSpec::Toy { n, noise, order } => gen_toy_xor_circles(*n, *noise, seed, *order)?,
            StreamSpec::Attribute(p) => gen_shift_stream(&AttributeParams { seed, ..*p }, 0.0)?,
            StreamSpec::Shift { params, shift_scale } => {
                gen_shift_stream(&AttributeParams { seed, ..*params }, *shift_scale)?
            }
            StreamSpec::Csv { schema, files } => load_csv_stream(files, &Schema::load(schema)?, seed)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub stream: StreamSpec,
    /// Template; `mode` and `seed` are set per cell.
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub modes: Vec<Mode>,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let ini = Ini::load_from_file(path).map_err(|e| Error::config("file", format!("{}: {e}", path.display())))?;
        Self::from_ini(&ini)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::config("file", e.to_string()))?;
        Self::from_ini(&ini)
    }

    fn from_ini(ini: &Ini) -> Result<Self> {
        let empty = Properties::new();
        for (name, props) in ini.iter() {
            let known: &[&str] = match name {
                Some("stream") => STREAM_KEYS,
                Some("train") => TRAIN_KEYS,
                Some("experiment") => EXPERIMENT_KEYS,
                None if props.is_empty() => continue,
                None => return Err(Error::config(first_key(props), "key outside any section")),
                Some(other) => return Err(Error::config(other, "unknown section")),
            };
            for (k, _) in props.iter() {
                if !known.contains(&k) {
                    return Err(Error::config(format!("{}.{k}", name.unwrap_or("")), "unknown key"));
                }
            }
        }
        let s = Section::new("stream", ini.section(Some("stream")).unwrap_or(&empty));
        let t = Section::new("train", ini.section(Some("train")).unwrap_or(&empty));
        let e = Section::new("experiment", ini.section(Some("experiment")).unwrap_or(&empty));
        let cfg = Self {
            stream: parse_stream(&s)?,
            train: parse_train(&t)?,
            seeds: parse_seeds(&e)?,
            modes: parse_modes(&e)?,
            out: PathBuf::from(e.raw("out").unwrap_or("results")),
        };
        Ok(cfg)
    }

    /// The training config of one (mode, seed) cell.
    pub fn cell(&self, mode: Mode, seed: u64) -> TrainConfig {
        TrainConfig {
            mode,
            seed,
            ..self.train.clone()
        }
    }
}

const STREAM_KEYS: &[&str] = &[
    "generator", "n", "noise", "order", "dim", "tasks", "components", "spread", "shift_scale", "schema", "files",
];
const TRAIN_KEYS: &[&str] = &[
    "epochs", "batch_size", "lr", "beta1", "beta2", "epsilon", "lambda_c", "lambda_o", "lambda_d", "variant", "sigma",
    "mask", "temperature", "pseudolabels", "patience", "hidden", "latent", "activation", "ece_bins",
];
const EXPERIMENT_KEYS: &[&str] = &["seeds", "modes", "out"];

fn first_key(p: &Properties) -> String {
    p.iter().next().map(|(k, _)| k.to_string()).unwrap_or_default()
}

struct Section<'a> {
    name: &'static str,
    props: &'a Properties,
}

impl<'a> Section<'a> {
    fn new(name: &'static str, props: &'a Properties) -> Self {
        Self { name, props }
    }

    fn field(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.props.get(key).map(str::trim)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::config(self.field(key), format!("cannot parse {v:?}: {e}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|x| {
                x.parse()
                    .map_err(|e| Error::config(self.field(key), format!("cannot parse {x:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn bad(&self, key: &str, message: impl Into<String>) -> Error {
        Error::config(self.field(key), message)
    }
}

fn parse_stream(s: &Section) -> Result<StreamSpec> {
    let generator = s.raw("generator").unwrap_or("toy");
    let base = AttributeParams::default();
    let params = || -> Result<AttributeParams> {
        let p = AttributeParams {
            n: s.get("n", base.n)?,
            dim: s.get("dim", base.dim)?,
            tasks: s.get("tasks", base.tasks)?,
            components: s.get("components", base.components)?,
            spread: s.get("spread", base.spread)?,
            seed: 0,
        };
        if p.tasks < 2 {
            return Err(s.bad("tasks", "need at least 2 tasks"));
        }
        if p.dim < p.tasks {
            return Err(s.bad("dim", format!("dim {} is smaller than tasks {}", p.dim, p.tasks)));
        }
        Ok(p)
    };
    Ok(match generator {
        "toy" => {
            let n = s.get("n", 2000usize)?;
            if n < 8 {
                return Err(s.bad("n", "toy stream needs n >= 8"));
            }
            let noise = s.get("noise", 0.05f64)?;
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(s.bad("noise", "must be >= 0"));
            }
            let order = match s.raw("order").unwrap_or("circles_first") {
                "circles_first" => ToyOrder::CirclesFirst,
                "xor_first" => ToyOrder::XorFirst,
                other => return Err(s.bad("order", format!("unknown order {other:?}"))),
            };
            StreamSpec::Toy { n, noise, order }
        }
        "attribute" => StreamSpec::Attribute(params()?),
        "shift" => {
            let shift_scale = s.get("shift_scale", 0.5f64)?;
            if !(shift_scale >= 0.0 && shift_scale.is_finite()) {
                return Err(s.bad("shift_scale", "must be >= 0"));
            }
            StreamSpec::Shift {
                params: params()?,
                shift_scale,
            }
        }
        "csv" => {
            let schema = s.raw("schema").ok_or_else(|| s.bad("schema", "required for csv streams"))?;
            let files: Vec<PathBuf> = s.list("files")?.unwrap_or_default();
            if files.is_empty() {
                return Err(s.bad("files", "required for csv streams"));
            }
            StreamSpec::Csv {
                schema: PathBuf::from(schema),
                files,
            }
        }
        other => return Err(s.bad("generator", format!("unknown generator {other:?}"))),
    })
}

fn parse_train(t: &Section) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let dw = d.weights;
    let weights = LossWeights::new(
        t.get("lambda_c", dw.lambda_c)?,
        t.get("lambda_o", dw.lambda_o)?,
        t.get("lambda_d", dw.lambda_d)?,
    )
    .map_err(|e| t.bad(param_name(&e, "lambda_d"), e.to_string()))?;
    let sigma = match t.raw("sigma") {
        None => None,
        Some("median") => Some(Sigma::Median),
        Some(_) => Some(Sigma::Fixed(t.get("sigma", 1.0f64)?)),
    };
    let variant_name = t.raw("variant").unwrap_or(d.variant.name());
    let sigma = match (variant_name, sigma) {
        ("rbf_gram", None) => Some(Sigma::Median),
        (_, s) => s,
    };
    let variant = DistanceVariant::parse(variant_name, sigma).map_err(|e| match e {
        lwp_core::Error::InvalidParam { name, .. } => t.bad(name, e.to_string()),
        _ => t.bad("variant", e.to_string()),
    })?;
    let pseudolabels = match t.raw("pseudolabels").unwrap_or("soft") {
        "soft" => PseudolabelMode::Soft,
        "hard" => PseudolabelMode::Hard,
        other => return Err(t.bad("pseudolabels", format!("unknown pseudolabel mode {other:?}"))),
    };
    let activation = match t.raw("activation") {
        None => d.model.activation,
        Some(a) => Activation::parse(a).ok_or_else(|| t.bad("activation", format!("unknown activation {a:?}")))?,
    };
    let model = ModelConfig {
        hidden: t.list("hidden")?.unwrap_or(d.model.hidden.clone()),
        latent: t.get("latent", d.model.latent)?,
        activation,
    };
    if model.latent == 0 {
        return Err(t.bad("latent", "must be >= 1"));
    }
    if model.hidden.contains(&0) {
        return Err(t.bad("hidden", "layer widths must be >= 1"));
    }
    let cfg = TrainConfig {
        epochs: t.get("epochs", d.epochs)?,
        batch_size: t.get("batch_size", d.batch_size)?,
        adam: AdamConfig {
            lr: t.get("lr", d.adam.lr)?,
            beta1: t.get("beta1", d.adam.beta1)?,
            beta2: t.get("beta2", d.adam.beta2)?,
            epsilon: t.get("epsilon", d.adam.epsilon)?,
        },
        weights,
        variant,
        use_mask: t.get("mask", d.use_mask)?,
        temperature: t.get("temperature", d.temperature)?,
        pseudolabels,
        patience: t.get("patience", d.patience)?,
        seed: 0,
        mode: Mode::Lwp,
        model,
        ece_bins: t.get("ece_bins", d.ece_bins)?,
    };
    for (key, v) in [("beta1", cfg.adam.beta1), ("beta2", cfg.adam.beta2)] {
        if !(0.0..1.0).contains(&v) {
            return Err(t.bad(key, format!("must be in [0, 1), got {v}")));
        }
    }
    if !(cfg.adam.epsilon.is_finite() && cfg.adam.epsilon > 0.0) {
        return Err(t.bad("epsilon", format!("must be > 0, got {}", cfg.adam.epsilon)));
    }
    cfg.validate().map_err(|e| t.bad(param_name(&e, "train"), e.to_string()))?;
    Ok(cfg)
}

fn param_name(e: &lwp_core::Error, fallback: &'static str) -> &'static str {
    match e {
        lwp_core::Error::InvalidParam { name, .. } => name,
        _ => fallback,
    }
}

fn parse_seeds(e: &Section) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = e.list("seeds")?.unwrap_or_else(|| vec![0]);
    if seeds.is_empty() {
        return Err(e.bad("seeds", "need at least one seed"));
    }
    let unique: BTreeSet<_> = seeds.iter().collect();
    if unique.len() != seeds.len() {
        return Err(e.bad("seeds", "duplicate seed"));
    }
    Ok(seeds)
}

fn parse_modes(e: &Section) -> Result<Vec<Mode>> {
    let names: Vec<String> = e.list("modes")?.unwrap_or_else(|| vec!["lwp".to_string()]);
    if names.is_empty() {
        return Err(e.bad("modes", "need at least one mode"));
    }
    let mut modes = Vec::new();
    for n in &names {
        let m = Mode::parse(n).ok_or_else(|| {
            e.bad("modes", format!("unknown mode {n:?}; expected one of lwp, lwf, naive_ft, stl"))
        })?;
        if modes.contains(&m) {
            return Err(e.bad("modes", format!("duplicate mode {n:?}")));
        }
        modes.push(m);
    }
    Ok(modes)
}

//! Run configuration: one TOML file of flat dotted keys plus `key=value`
//! overrides.
//!
//! Nested tables and dotted keys are equivalent, so `model.dim = 32` and
//! `[model]\ndim = 32` mean the same thing. Every key must be known.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hetrec_core::eval::{EvalConfig, Strategy};
use hetrec_core::graph::{parse_edge_type, EdgeType};
use hetrec_core::model::{ModelConfig, ModelKind, PhiMode};
use hetrec_core::sample::{PairOrder, PipelineConfig};
use hetrec_core::train::{AdamConfig, NegDist, NegMode, NegativeSampler, TrainConfig};
use hetrec_ps::SparseOptimizer;
use toml::Value;

use crate::error::CliError;

/// Keys holding filesystem paths. Relative values read from a config file
/// resolve against the file's directory.
const PATH_KEYS: &[&str] = &[
    "graph.edges_path",
    "graph.side_info_path",
    "train.warm_start_path",
    "train.checkpoint_path",
    "train.metrics_path",
    "eval.truth_path",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schema: Vec<EdgeType>,
    pub edges_path: Option<PathBuf>,
    pub side_info_path: Option<PathBuf>,

    pub metapaths: Vec<String>,
    pub walk_len: usize,
    pub walks_per_node: usize,

    pub pipeline: PipelineConfig,
    pub model: ModelConfig,

    pub neg_mode: NegMode,
    pub neg_num: usize,
    pub neg_dist: NegDist,
    pub pair_budget: u64,
    pub sparse_lr: f32,
    pub sparse_optimizer: SparseOptimizer,
    pub dense_lr: f64,
    pub warm_start_path: Option<PathBuf>,
    pub seed: u64,
    pub workers: usize,
    pub log_every: u64,
    pub checkpoint_path: PathBuf,
    pub metrics_path: Option<PathBuf>,

    pub shards: usize,
    pub endpoints: Vec<String>,

    pub strategy: Strategy,
    pub eval_n: usize,
    pub eval_k: usize,
    pub exclude_train: bool,
    pub user_type: String,
    pub item_type: String,
    pub truth_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let eval = EvalConfig::default();
        RunConfig {
            schema: Vec::new(),
            edges_path: None,
            side_info_path: None,
            metapaths: Vec::new(),
            walk_len: 20,
            walks_per_node: 1,
            pipeline: PipelineConfig::default(),
            model: ModelConfig::default(),
            neg_mode: train.negatives.mode,
            neg_num: train.negatives.num_negatives,
            neg_dist: train.negatives.distribution,
            pair_budget: train.pair_budget,
            sparse_lr: train.sparse_lr,
            sparse_optimizer: SparseOptimizer::Sgd,
            dense_lr: train.dense.lr,
            warm_start_path: None,
            seed: 1,
            workers: train.workers,
            log_every: train.log_every,
            checkpoint_path: PathBuf::from("checkpoint.bin"),
            metrics_path: None,
            shards: 4,
            endpoints: Vec::new(),
            strategy: eval.strategy,
            eval_n: eval.n,
            eval_k: eval.k,
            exclude_train: eval.exclude_train,
            user_type: "u".into(),
            item_type: "i".into(),
            truth_path: None,
        }
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::config(format!("{key}: {msg}"))
}

fn as_str(key: &str, v: &Value) -> Result<String, CliError> {
    v.as_str().map(str::to_owned).ok_or_else(|| bad(key, format!("expected a string, got {v}")))
}

fn as_u64(key: &str, v: &Value) -> Result<u64, CliError> {
    match v.as_integer() {
        Some(i) if i >= 0 => Ok(i as u64),
        _ => Err(bad(key, format!("expected a non-negative integer, got {v}"))),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize, CliError> {
    as_u64(key, v).map(|x| x as usize)
}

fn as_f64(key: &str, v: &Value) -> Result<f64, CliError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad(key, format!("expected a number, got {v}"))),
    }
}

fn as_bool(key: &str, v: &Value) -> Result<bool, CliError> {
    v.as_bool().ok_or_else(|| bad(key, format!("expected true or false, got {v}")))
}

fn as_list<T>(key: &str, v: &Value, each: impl Fn(&str, &Value) -> Result<T, CliError>) -> Result<Vec<T>, CliError> {
    match v {
        Value::Array(a) => a.iter().map(|x| each(key, x)).collect(),
        // A lone value stands for a one-element list.
        other => Ok(vec![each(key, other)?]),
    }
}

fn parse_enum<T: std::str::FromStr<Err = String>>(key: &str, v: &Value) -> Result<T, CliError> {
    as_str(key, v)?.parse().map_err(|e: String| bad(key, e))
}

fn schema_entry(key: &str, v: &Value) -> Result<EdgeType, CliError> {
    let (spec, symmetric) = match v {
        Value::String(s) => (s.clone(), true),
        Value::Table(t) => {
            let mut spec = None;
            let mut symmetric = true;
            for (k, x) in t {
                match k.as_str() {
                    "type" => spec = Some(as_str(key, x)?),
                    "symmetric" => symmetric = as_bool(key, x)?,
                    other => return Err(bad(key, format!("unknown schema field {other:?}"))),
                }
            }
            (spec.ok_or_else(|| bad(key, "schema table needs a `type`"))?, symmetric)
        }
        _ => return Err(bad(key, format!("expected an edge type or {{ type, symmetric }}, got {v}"))),
    };
    let t = parse_edge_type(&spec).map_err(|e| bad(key, e))?;
    Ok(t.with_symmetric(symmetric))
}

/// Flattens nested tables into dotted keys. Arrays are leaves.
fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) if key != "graph.schema" => flatten(&key, t, out),
            _ => {
                out.insert(key, v.clone());
            }
        }
    }
}

/// Parses the right-hand side of `--set key=value`: a TOML value, or a bare
/// string when it is not one.
pub fn parse_override(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s.split_once('=').ok_or_else(|| CliError::config(format!("override {s:?} is not key=value")))?;
    let k = k.trim().to_owned();
    let v = v.trim();
    let value = format!("x = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| Value::String(v.to_owned()));
    Ok((k, value))
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base: Option<&Path>) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::config(e.message().to_owned()))?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);
        if let Some(base) = base {
            for key in PATH_KEYS {
                if let Some(Value::String(p)) = flat.get_mut(*key) {
                    if Path::new(p.as_str()).is_relative() {
                        *p = base.join(&*p).to_string_lossy().into_owned();
                    }
                }
            }
        }
        let mut cfg = RunConfig::default();
        for (k, v) in &flat {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, path.parent())?;
        for o in overrides {
            let (k, v) = parse_override(o)?;
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &Value) -> Result<(), CliError> {
        let path = |v: &Value| as_str(key, v).map(PathBuf::from);
        match key {
            "graph.schema" => self.schema = as_list(key, v, schema_entry)?,
            "graph.edges_path" => self.edges_path = Some(path(v)?),
            "graph.side_info_path" => self.side_info_path = Some(path(v)?),
            "walk.metapaths" => self.metapaths = as_list(key, v, as_str)?,
            "walk.len" => self.walk_len = as_usize(key, v)?,
            "walk.per_node" => self.walks_per_node = as_usize(key, v)?,
            "pipeline.win_size" => self.pipeline.win_size = as_usize(key, v)?,
            "pipeline.fanouts" => self.pipeline.fanouts = as_list(key, v, as_usize)?,
            "pipeline.order" => self.pipeline.order = parse_enum::<PairOrder>(key, v)?,
            "pipeline.batch_size" => self.pipeline.batch_size = as_usize(key, v)?,
            "model.kind" => self.model.kind = parse_enum::<ModelKind>(key, v)?,
            "model.layers" => self.model.layers = as_usize(key, v)?,
            "model.dim" => self.model.dim = as_usize(key, v)?,
            "model.alpha" => self.model.alpha = as_f64(key, v)?,
            "model.phi" => self.model.phi = parse_enum::<PhiMode>(key, v)?,
            "model.side_info" => self.model.use_side_info = as_bool(key, v)?,
            "model.relations" => self.model.relations = as_list(key, v, as_str)?,
            "train.neg_mode" => self.neg_mode = parse_enum::<NegMode>(key, v)?,
            "train.neg_num" => self.neg_num = as_usize(key, v)?,
            "train.neg_dist" => self.neg_dist = parse_enum::<NegDist>(key, v)?,
            "train.pair_budget" => self.pair_budget = as_u64(key, v)?,
            "train.sparse_lr" => self.sparse_lr = as_f64(key, v)? as f32,
            "train.sparse_optimizer" => {
                self.sparse_optimizer = match as_str(key, v)?.to_ascii_lowercase().as_str() {
                    "sgd" => SparseOptimizer::Sgd,
                    "adam" => SparseOptimizer::adam(),
                    other => return Err(bad(key, format!("unknown optimizer {other:?}; expected sgd or adam"))),
                }
            }
            "train.dense_lr" => self.dense_lr = as_f64(key, v)?,
            "train.warm_start_path" => self.warm_start_path = Some(path(v)?),
            "train.seed" => self.seed = as_u64(key, v)?,
            "train.workers" => self.workers = as_usize(key, v)?,
            "train.log_every" => self.log_every = as_u64(key, v)?,
            "train.checkpoint_path" => self.checkpoint_path = path(v)?,
            "train.metrics_path" => self.metrics_path = Some(path(v)?),
            "ps.shards" => self.shards = as_usize(key, v)?,
            "ps.endpoints" => self.endpoints = as_list(key, v, as_str)?,
            "eval.strategy" => self.strategy = parse_enum::<Strategy>(key, v)?,
            "eval.N" => self.eval_n = as_usize(key, v)?,
            "eval.K" => self.eval_k = as_usize(key, v)?,
            "eval.exclude_train" => self.exclude_train = as_bool(key, v)?,
            "eval.user_type" => self.user_type = as_str(key, v)?,
            "eval.item_type" => self.item_type = as_str(key, v)?,
            "eval.truth_path" => self.truth_path = Some(path(v)?),
            _ => return Err(CliError::config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Cross-field checks. Missing inputs that only some commands need are
    /// checked by those commands.
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate().map_err(CliError::config)?;
        self.train_config().validate().map_err(CliError::config)?;
        if self.walk_len == 0 || self.walks_per_node == 0 {
            return Err(CliError::config("walk.len and walk.per_node must be >= 1"));
        }
        if self.pipeline.win_size == 0 {
            return Err(CliError::config("pipeline.win_size must be >= 1"));
        }
        if self.model.kind.is_gnn() && self.pipeline.fanouts.len() < self.model.layers {
            return Err(CliError::config(format!(
                "pipeline.fanouts lists {} hops but model.layers is {}",
                self.pipeline.fanouts.len(),
                self.model.layers
            )));
        }
        if self.shards == 0 {
            return Err(CliError::config("ps.shards must be >= 1"));
        }
        if self.eval_n == 0 || self.eval_k == 0 {
            return Err(CliError::config("eval.N and eval.K must be >= 1"));
        }
        if self.dense_lr.is_nan() || self.dense_lr <= 0.0 {
            return Err(CliError::config("train.dense_lr must be positive"));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.pipeline.batch_size,
            pair_budget: self.pair_budget,
            sparse_lr: self.sparse_lr,
            dense: AdamConfig { lr: self.dense_lr, ..AdamConfig::default() },
            negatives: NegativeSampler { mode: self.neg_mode, num_negatives: self.neg_num, distribution: self.neg_dist },
            seed: self.seed,
            workers: self.workers,
            log_every: self.log_every,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig { n: self.eval_n, k: self.eval_k, strategy: self.strategy, exclude_train: self.exclude_train }
    }

    /// Every key with its resolved value, as TOML that loads back to the same
    /// configuration.
    pub fn resolved(&self) -> String {
        fn s(x: impl ToString) -> Value {
            Value::String(x.to_string())
        }
        fn i(x: impl TryInto<i64>) -> Value {
            Value::Integer(x.try_into().unwrap_or(i64::MAX))
        }
        fn list<T>(xs: &[T], f: impl Fn(&T) -> Value) -> Value {
            Value::Array(xs.iter().map(f).collect())
        }
        fn opt(p: &Option<PathBuf>) -> Option<Value> {
            p.as_ref().map(|p| s(p.display()))
        }
        let neg_mode = match self.neg_mode {
            NegMode::Random => "random",
            NegMode::InBatch => "in_batch",
        };
        let neg_dist = match self.neg_dist {
            NegDist::Uniform => "uniform",
            NegDist::Degree075 => "degree075",
        };
        let order = match self.pipeline.order {
            PairOrder::EgoFirst => "ego_first",
            PairOrder::PairFirst => "pair_first",
        };
        let optimizer = match self.sparse_optimizer {
            SparseOptimizer::Sgd => "sgd",
            SparseOptimizer::Adam { .. } => "adam",
        };
        let schema = list(&self.schema, |t| {
            let mut tab = toml::Table::new();
            tab.insert("type".into(), s(t.name()));
            tab.insert("symmetric".into(), Value::Boolean(t.symmetric));
            Value::Table(tab)
        });
        let entries: Vec<(&str, Option<Value>)> = vec![
            ("graph.schema", Some(schema)),
            ("graph.edges_path", opt(&self.edges_path)),
            ("graph.side_info_path", opt(&self.side_info_path)),
            ("walk.metapaths", Some(list(&self.metapaths, |x| s(x)))),
            ("walk.len", Some(i(self.walk_len))),
            ("walk.per_node", Some(i(self.walks_per_node))),
            ("pipeline.win_size", Some(i(self.pipeline.win_size))),
            ("pipeline.fanouts", Some(list(&self.pipeline.fanouts, |&x| i(x)))),
            ("pipeline.order", Some(s(order))),
            ("pipeline.batch_size", Some(i(self.pipeline.batch_size))),
            ("model.kind", Some(s(self.model.kind.name()))),
            ("model.layers", Some(i(self.model.layers))),
            ("model.dim", Some(i(self.model.dim))),
            ("model.alpha", Some(Value::Float(self.model.alpha))),
            ("model.phi", Some(s(self.model.phi.name()))),
            ("model.side_info", Some(Value::Boolean(self.model.use_side_info))),
            ("model.relations", Some(list(&self.model.relations, |x| s(x)))),
            ("train.neg_mode", Some(s(neg_mode))),
            ("train.neg_num", Some(i(self.neg_num))),
            ("train.neg_dist", Some(s(neg_dist))),
            ("train.pair_budget", Some(i(self.pair_budget))),
            ("train.sparse_lr", Some(Value::Float(self.sparse_lr as f64))),
            ("train.sparse_optimizer", Some(s(optimizer))),
            ("train.dense_lr", Some(Value::Float(self.dense_lr))),
            ("train.warm_start_path", opt(&self.warm_start_path)),
            ("train.seed", Some(i(self.seed))),
            ("train.workers", Some(i(self.workers))),
            ("train.log_every", Some(i(self.log_every))),
            ("train.checkpoint_path", Some(s(self.checkpoint_path.display()))),
            ("train.metrics_path", opt(&self.metrics_path)),
            ("ps.shards", Some(i(self.shards))),
            ("ps.endpoints", Some(list(&self.endpoints, |x| s(x)))),
            ("eval.strategy", Some(s(self.strategy.name()))),
            ("eval.N", Some(i(self.eval_n))),
            ("eval.K", Some(i(self.eval_k))),
            ("eval.exclude_train", Some(Value::Boolean(self.exclude_train))),
            ("eval.user_type", Some(s(&self.user_type))),
            ("eval.item_type", Some(s(&self.item_type))),
            ("eval.truth_path", opt(&self.truth_path)),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            match v {
                Some(v) => writeln!(out, "{k} = {v}").unwrap(),
                None => writeln!(out, "# {k} unset").unwrap(),
            }
        }
        out
    }
}

//! The training loop: walks -> pair batches -> pull -> forward/backward ->
//! push, with dense weights updated locally by Adam.

mod adam;
mod infer;
pub mod loss;
mod negatives;
mod step;

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use hetrec_ps::{read_checkpoint, write_checkpoint, ParamStore, PsError};

pub use adam::{AdamConfig, DenseAdam};
pub use infer::{node_embeddings, INFER_TAG};
pub use loss::{loss_explicit, loss_inbatch, sample_inbatch_negatives, score, BatchLoss, PairLoss};
pub use negatives::{NegDist, NegMode, NegativeSampler, NegativeTable};
pub use step::{BatchGrads, NegativePlan, PreparedBatch};

use crate::graph::HetGraph;
use crate::model::{DenseParams, ModelConfig, SparseValues};
use crate::rng::rng_for;
use crate::sample::{BatchStream, PipelineConfig, PipelineOrder, TrainPair};
use crate::walk::{WalkConfig, WalkError, WalkPlan};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Store(#[from] PsError),
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Exact number of training pairs to consume.
    pub pair_budget: u64,
    pub sparse_lr: f32,
    pub dense: AdamConfig,
    pub negatives: NegativeSampler,
    pub seed: u64,
    /// 1 runs serially and is bitwise reproducible.
    pub workers: usize,
    /// Metrics line every this many steps.
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1000,
            pair_budget: 1_000_000,
            sparse_lr: 0.1,
            dense: AdamConfig::default(),
            negatives: NegativeSampler::default(),
            seed: 0,
            workers: 1,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("train batch_size must be positive".into());
        }
        if self.negatives.num_negatives == 0 {
            return Err("train.neg_num must be >= 1".into());
        }
        if self.negatives.mode == NegMode::InBatch && self.batch_size < 2 {
            return Err("in-batch negatives need batch_size >= 2".into());
        }
        if !(self.sparse_lr > 0.0 && self.sparse_lr.is_finite()) {
            return Err("train.sparse_lr must be positive".into());
        }
        if self.workers == 0 {
            return Err("train.workers must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    pub steps: u64,
    pub pairs: u64,
    pub epochs: u64,
    /// Mean batch loss over the whole run.
    pub mean_loss: f64,
    /// Mean batch loss of the last logging window.
    pub last_loss: f64,
    pub elapsed: Duration,
    /// Sparse keys referenced by batches before deduplication.
    pub key_slots: u64,
    /// Of those, keys referenced only by random negatives.
    pub negative_key_slots: u64,
    /// Keys actually pulled after per-batch deduplication.
    pub pulled_keys: u64,
    pub ego_samples: u64,
}

impl TrainStats {
    pub fn pairs_per_sec(&self) -> f64 {
        self.pairs as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }
}

const NEG_TAG: u64 = 0x4e45_4753;

pub struct Trainer {
    graph: Arc<HetGraph>,
    plan: WalkPlan,
    pipeline: PipelineConfig,
    model: ModelConfig,
    cfg: TrainConfig,
    channels: Vec<usize>,
    store: Arc<dyn ParamStore>,
    dense: DenseParams<f32>,
    adam: DenseAdam<f32>,
    neg_table: Option<NegativeTable>,
    order: PipelineOrder,
}

struct Window {
    loss_sum: f64,
    loss_all: f64,
    batches: u64,
    started: Instant,
}

impl Trainer {
    pub fn new(
        graph: Arc<HetGraph>,
        walk: &WalkConfig,
        pipeline: PipelineConfig,
        model: ModelConfig,
        cfg: TrainConfig,
        store: Arc<dyn ParamStore>,
    ) -> Result<Self, TrainError> {
        model.validate().map_err(TrainError::Config)?;
        cfg.validate().map_err(TrainError::Config)?;
        if store.dim() != model.dim {
            return Err(TrainError::Config(format!("store dim {} differs from model.dim {}", store.dim(), model.dim)));
        }
        if model.kind.is_gnn() && pipeline.fanouts.len() < model.layers {
            return Err(TrainError::Config(format!(
                "pipeline.fanouts has {} hops but model.layers is {}",
                pipeline.fanouts.len(),
                model.layers
            )));
        }
        if pipeline.win_size == 0 {
            return Err(TrainError::Config("pipeline.win_size must be >= 1".into()));
        }
        let channels = model.resolve_channels(&graph).map_err(TrainError::Config)?;
        let plan = WalkPlan::new(&graph, walk)?;
        let dense = DenseParams::init(&model, channels.len(), cfg.seed);
        let adam = DenseAdam::new(cfg.dense, &dense);
        let neg_table =
            (cfg.negatives.mode == NegMode::Random).then(|| NegativeTable::new(&graph, cfg.negatives.distribution));
        let order = PipelineOrder::new(pipeline.order);
        Ok(Trainer { graph, plan, pipeline, model, cfg, channels, store, dense, adam, neg_table, order })
    }

    pub fn dense(&self) -> &DenseParams<f32> {
        &self.dense
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn model(&self) -> &ModelConfig {
        &self.model
    }

    pub fn store(&self) -> &Arc<dyn ParamStore> {
        &self.store
    }

    /// Current representations of `nodes`; see [`node_embeddings`].
    pub fn embed(&self, nodes: &[crate::NodeRef]) -> Result<Vec<Vec<f32>>, PsError> {
        let fanouts = &self.pipeline.fanouts;
        node_embeddings(&self.graph, &self.model, &self.channels, fanouts, &self.dense, self.store.as_ref(), nodes, self.cfg.seed)
    }

    fn negatives_for(&self, step: u64, batch: &[TrainPair]) -> NegativePlan {
        let mut rng = rng_for(&[self.cfg.seed, step, NEG_TAG]);
        let m = self.cfg.negatives.num_negatives;
        match &self.neg_table {
            None => NegativePlan::InBatch(sample_inbatch_negatives(batch.len(), m, &mut rng)),
            Some(t) => NegativePlan::Explicit(batch.iter().map(|p| t.draw(p.context, m, &mut rng)).collect()),
        }
    }

    /// Trains until the pair budget is spent, an epoch yields no pairs, or
    /// `stop` is raised.
    pub fn run(&mut self, mut metrics: Option<&mut dyn Write>, stop: Option<&AtomicBool>) -> Result<TrainStats, TrainError> {
        let mut stats = TrainStats::default();
        let started = Instant::now();
        let samples_before = self.order.ego_samples();
        let sampler = self.model.kind.is_gnn().then(|| self.order.sampler(self.channels.clone(), self.pipeline.fanouts.clone()));
        let pipe = PipelineConfig { batch_size: self.cfg.batch_size, ..self.pipeline.clone() };
        let mut win = Window { loss_sum: 0.0, loss_all: 0.0, batches: 0, started };
        let stopped = || stop.is_some_and(|s| s.load(Ordering::Relaxed));
        let graph = self.graph.clone();
        let plan = self.plan.clone();
        let mut epoch = 0u64;
        while stats.pairs < self.cfg.pair_budget && !stopped() {
            let before = stats.pairs;
            let walks = plan.epoch(&graph, epoch);
            let stream = BatchStream::new(&graph, walks, &pipe, sampler.clone(), self.cfg.seed);
            if self.cfg.workers <= 1 {
                for mut batch in stream {
                    let left = self.cfg.pair_budget - stats.pairs;
                    if left == 0 || stopped() {
                        break;
                    }
                    batch.truncate(left.min(batch.len() as u64) as usize);
                    let negs = self.negatives_for(stats.steps, &batch);
                    let prepared = PreparedBatch::new(&graph, &self.model, &batch, negs);
                    let loss = self.apply(&prepared)?;
                    self.record(&mut stats, &mut win, &prepared, loss, &mut metrics);
                }
            } else {
                self.run_parallel(stream, &mut stats, &mut win, &mut metrics, stop)?;
            }
            epoch += 1;
            stats.epochs = epoch;
            if stats.pairs == before {
                log::warn!("epoch {} produced no training pairs; stopping", epoch - 1);
                break;
            }
        }
        stats.elapsed = started.elapsed();
        stats.mean_loss = if stats.steps > 0 { win.loss_all / stats.steps as f64 } else { 0.0 };
        if win.batches > 0 {
            stats.last_loss = win.loss_sum / win.batches as f64;
        }
        stats.ego_samples = self.order.ego_samples() - samples_before;
        Ok(stats)
    }

    /// Pull, compute, push, and the dense step.
    fn apply(&mut self, prepared: &PreparedBatch) -> Result<f64, TrainError> {
        let (loss, grads) = compute_and_push(self.store.as_ref(), &self.model, prepared, &self.dense, self.cfg.sparse_lr)?;
        self.adam.step(&mut self.dense, &grads);
        Ok(loss)
    }

    fn record(&self, stats: &mut TrainStats, win: &mut Window, prepared: &PreparedBatch, loss: f64, metrics: &mut Option<&mut dyn Write>) {
        stats.steps += 1;
        stats.pairs += prepared.rows() as u64;
        stats.key_slots += prepared.key_slots;
        stats.negative_key_slots += prepared.negative_key_slots;
        stats.pulled_keys += prepared.unique_keys().len() as u64;
        win.loss_sum += loss;
        win.loss_all += loss;
        win.batches += 1;
        if self.cfg.log_every > 0 && stats.steps.is_multiple_of(self.cfg.log_every) {
            let mean = win.loss_sum / win.batches as f64;
            stats.last_loss = mean;
            let rate = stats.pairs as f64 / win.started.elapsed().as_secs_f64().max(1e-9);
            if let Some(w) = metrics.as_deref_mut() {
                if let Err(e) = writeln!(w, "{}\t{}\t{:.6}\t{:.1}", stats.steps, stats.pairs, mean, rate) {
                    log::warn!("metrics write failed: {e}");
                }
            }
            win.loss_sum = 0.0;
            win.batches = 0;
        }
    }

    fn run_parallel<I: Iterator<Item = crate::walk::Path> + Send>(
        &mut self,
        stream: BatchStream<'_, I>,
        stats: &mut TrainStats,
        win: &mut Window,
        metrics: &mut Option<&mut dyn Write>,
        stop: Option<&AtomicBool>,
    ) -> Result<(), TrainError> {
        let workers = self.cfg.workers;
        let budget_left = self.cfg.pair_budget - stats.pairs;
        let first_step = stats.steps;
        let (tx, rx) = crossbeam_channel::bounded::<PreparedBatch>(workers * 2);
        let (done_tx, done_rx) = crossbeam_channel::unbounded::<Result<(PreparedBatch, f64), TrainError>>();
        let shared = RwLock::new(self.dense.clone());
        let adam = Mutex::new(self.adam.clone());
        let this = &*self;
        std::thread::scope(|s| {
            s.spawn(move || {
                let mut left = budget_left;
                for (step, mut batch) in (first_step..).zip(stream) {
                    if left == 0 || stop.is_some_and(|f| f.load(Ordering::Relaxed)) {
                        break;
                    }
                    batch.truncate(left.min(batch.len() as u64) as usize);
                    left -= batch.len() as u64;
                    let negs = this.negatives_for(step, &batch);
                    if tx.send(PreparedBatch::new(&this.graph, &this.model, &batch, negs)).is_err() {
                        break;
                    }
                }
            });
            for _ in 0..workers {
                let (rx, done_tx, shared, adam) = (rx.clone(), done_tx.clone(), &shared, &adam);
                s.spawn(move || {
                    for prepared in rx.iter() {
                        let snapshot = shared.read().unwrap().clone();
                        let res = compute_and_push(this.store.as_ref(), &this.model, &prepared, &snapshot, this.cfg.sparse_lr);
                        let res = res.map(|(loss, grads)| {
                            let mut dense = shared.write().unwrap();
                            adam.lock().unwrap().step(&mut dense, &grads);
                            (prepared, loss)
                        });
                        let failed = res.is_err();
                        if done_tx.send(res).is_err() || failed {
                            break;
                        }
                    }
                });
            }
            drop(done_tx);
            drop(rx);
            let mut result = Ok(());
            for r in done_rx.iter() {
                match r {
                    Ok((prepared, loss)) => this.record(stats, win, &prepared, loss, metrics),
                    Err(e) => {
                        result = Err(e);
                        break;
                    }
                }
            }
            // Unblock everything on error by dropping the receiver.
            drop(done_rx);
            result
        })?;
        self.dense = shared.into_inner().unwrap();
        self.adam = adam.into_inner().unwrap();
        Ok(())
    }

    /// Sparse table to `path`, dense weights (if any) to `path.dense`.
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        self.store.save(path)?;
        save_dense(path, &self.dense)?;
        Ok(())
    }

    pub fn load_dense(&mut self, path: &Path) -> Result<usize, TrainError> {
        let n = load_dense(&dense_path(path), &mut self.dense)?;
        Ok(n)
    }
}

fn compute_and_push(
    store: &dyn ParamStore,
    model: &ModelConfig,
    prepared: &PreparedBatch,
    dense: &DenseParams<f32>,
    lr: f32,
) -> Result<(f64, DenseParams<f32>), TrainError> {
    let keys = prepared.unique_keys();
    let pulled = store.pull(&keys)?;
    let vals: SparseValues<f32> = SparseValues::from_flat(store.dim(), &keys, &pulled);
    let grads = prepared.compute(model, &vals, dense);
    let (keys, flat) = grads.sparse.into_parts();
    if !keys.is_empty() {
        store.push(&keys, &flat, lr)?;
    }
    Ok((grads.loss as f64, grads.dense))
}

pub fn dense_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".dense");
    PathBuf::from(s)
}

/// Writes dense weights next to a sparse checkpoint; nothing for models
/// without dense weights.
pub fn save_dense(path: &Path, dense: &DenseParams<f32>) -> Result<(), PsError> {
    if dense.num_params() == 0 {
        return Ok(());
    }
    let recs = dense.to_records();
    write_checkpoint(&dense_path(path), dense.dim, recs.iter().map(|(k, v)| (*k, v.as_slice())))
}

pub fn load_dense(file: &Path, dense: &mut DenseParams<f32>) -> Result<usize, PsError> {
    if dense.num_params() == 0 {
        return Ok(0);
    }
    let ck = read_checkpoint(file)?;
    if ck.dim != dense.dim {
        return Err(PsError::DimMismatch { expected: dense.dim, got: ck.dim });
    }
    let map: HashMap<u64, Vec<f32>> = ck.records.into_iter().collect();
    dense.load_records(&map).map_err(PsError::Truncated)
}

/// Loads a checkpoint over the table, keeping keys it does not mention.
/// Returns the number of keys loaded.
pub fn warm_start(store: &dyn ParamStore, path: &Path) -> Result<u64, PsError> {
    store.warm_start(path)
}

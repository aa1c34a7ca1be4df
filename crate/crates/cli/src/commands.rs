use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use hetrec_core::eval::{self, EmbeddingMatrix, EvalData, GroundTruth};
use hetrec_core::graph::{build_graph, EdgeRecord, HetGraph};
use hetrec_core::io::{read_edges, read_interactions, read_side_info, write_interactions};
use hetrec_core::model::{DenseParams, NodeFeatureSpec};
use hetrec_core::split::temporal_split;
use hetrec_core::train::{self, node_embeddings, Trainer};
use hetrec_core::walk::{parse_metapath, WalkConfig};
use hetrec_core::NodeRef;
use hetrec_ps::{ParamStore, RemoteTable, Shard, ShardServer, ShardedTable};
use log::info;

use crate::config::RunConfig;
use crate::error::CliError;

const PULL_CHUNK: usize = 8192;

fn require<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| CliError::config(format!("{key} is required for this command")))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn load_graph(cfg: &RunConfig, edges: Option<Vec<EdgeRecord>>) -> Result<HetGraph, CliError> {
    if cfg.schema.is_empty() {
        return Err(CliError::config("graph.schema is empty"));
    }
    let edges = match edges {
        Some(e) => e,
        None => read_edges(require(&cfg.edges_path, "graph.edges_path")?)?,
    };
    let side = match &cfg.side_info_path {
        Some(p) => read_side_info(p)?,
        None => Vec::new(),
    };
    Ok(build_graph(&cfg.schema, &edges, &side)?)
}

fn open_store(cfg: &RunConfig) -> Arc<dyn ParamStore> {
    if cfg.endpoints.is_empty() {
        Arc::new(ShardedTable::with_optimizer(cfg.model.dim, cfg.shards, cfg.seed, cfg.sparse_optimizer))
    } else {
        Arc::new(RemoteTable::new(cfg.endpoints.clone(), cfg.model.dim))
    }
}

fn all_nodes(g: &HetGraph) -> Vec<NodeRef> {
    (0..g.node_types().len() as u16).flat_map(|t| g.nodes_of(t)).collect()
}

fn type_nodes(g: &HetGraph, name: &str) -> Result<Vec<NodeRef>, CliError> {
    let t = g.type_ord(name).ok_or_else(|| CliError::config(format!("node type {name:?} is not in the graph")))?;
    Ok(g.nodes_of(t).collect())
}

fn print_stats(g: &HetGraph, out: &mut dyn Write) -> io::Result<()> {
    for (t, name) in g.node_types().iter().enumerate() {
        writeln!(out, "nodes\t{name}\t{}", g.node_count(t as u16))?;
    }
    for r in 0..g.relations().len() {
        let src = g.src_type_of(r);
        let n = g.node_count(src);
        let (mut lo, mut hi) = (usize::MAX, 0);
        for v in 0..n {
            let d = g.degree(r, v);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let edges = g.edge_count(r);
        let mean = if n == 0 { 0.0 } else { edges as f64 / n as f64 };
        if n == 0 {
            lo = 0;
        }
        writeln!(out, "relation\t{}\t{edges}\t{lo}\t{mean:.3}\t{hi}", g.relation(r).name())?;
    }
    writeln!(out, "side_info\t{}", g.has_side_info())
}

pub struct IngestArgs {
    pub log: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub train_frac: f64,
    pub val_frac: f64,
}

pub fn ingest(cfg: &RunConfig, args: &IngestArgs) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let edges = match &args.log {
        None => None,
        Some(log_path) => {
            let dir = args.out_dir.as_ref().ok_or_else(|| CliError::new("usage_error", "--log needs --out-dir"))?;
            let ok = |f: f64| f > 0.0 && f < 1.0;
            if !ok(args.train_frac) || !ok(args.val_frac) || args.train_frac + args.val_frac >= 1.0 {
                return Err(CliError::new("usage_error", "split fractions must be positive and sum below 1"));
            }
            let log = read_interactions(log_path)?;
            let split = temporal_split(&log, args.train_frac, args.val_frac);
            std::fs::create_dir_all(dir)?;
            for (name, part) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
                write_interactions(&dir.join(format!("{name}.tsv")), part)?;
                writeln!(out, "split\t{name}\t{}", part.len())?;
            }
            let edges = split.train.to_edges(&cfg.user_type, &cfg.item_type);
            let mut w = create(&dir.join("train_edges.tsv"))?;
            for e in &edges {
                writeln!(w, "{}\t{}\t{}", e.edge_type, e.src, e.dst)?;
            }
            w.flush()?;
            Some(edges)
        }
    };
    let g = load_graph(cfg, edges)?;
    print_stats(&g, &mut out)?;
    Ok(())
}

/// Pulls every key the model can touch so the saved table covers all nodes,
/// whatever the walks happen to visit.
fn materialize(g: &HetGraph, cfg: &RunConfig, store: &dyn ParamStore) -> Result<usize, CliError> {
    let mut keys: Vec<u64> = all_nodes(g)
        .into_iter()
        .flat_map(|n| NodeFeatureSpec::of(g, n, cfg.model.use_side_info).keys().collect::<Vec<_>>())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    for chunk in keys.chunks(PULL_CHUNK) {
        store.pull(chunk)?;
    }
    Ok(keys.len())
}

pub fn train(cfg: &RunConfig, stop: Arc<AtomicBool>) -> Result<(), CliError> {
    if cfg.metapaths.is_empty() {
        return Err(CliError::config("walk.metapaths is empty"));
    }
    let resolved = cfg.resolved();
    info!("resolved configuration:\n{resolved}");
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "# resolved configuration")?;
    write!(out, "{resolved}")?;
    out.flush()?;

    let g = Arc::new(load_graph(cfg, None)?);
    let metapaths = cfg.metapaths.iter().map(|m| parse_metapath(m, g.relations())).collect::<Result<Vec<_>, _>>()?;
    let walk = WalkConfig { metapaths, walk_len: cfg.walk_len, walks_per_node: cfg.walks_per_node, seed: cfg.seed };
    let store = open_store(cfg);
    if let Some(p) = &cfg.warm_start_path {
        let n = train::warm_start(store.as_ref(), p)?;
        writeln!(out, "warm_start\t{}\t{n}", p.display())?;
    }
    let keys = materialize(&g, cfg, store.as_ref())?;
    info!("{keys} embedding keys initialized");

    let mut trainer = Trainer::new(g, &walk, cfg.pipeline.clone(), cfg.model.clone(), cfg.train_config(), store)?;
    let metrics_path = cfg.metrics_path.clone().unwrap_or_else(|| {
        let mut s = cfg.checkpoint_path.as_os_str().to_owned();
        s.push(".metrics.tsv");
        PathBuf::from(s)
    });
    let mut metrics = create(&metrics_path)?;
    writeln!(metrics, "step\tpairs\tloss\tpairs_per_sec")?;
    let stats = trainer.run(Some(&mut metrics), Some(&stop))?;
    metrics.flush()?;
    trainer.save(&cfg.checkpoint_path)?;
    let interrupted = stop.load(Ordering::SeqCst);
    writeln!(
        out,
        "trained\tsteps={}\tpairs={}\tepochs={}\tmean_loss={:.6}\tpairs_per_sec={:.0}\tinterrupted={interrupted}",
        stats.steps,
        stats.pairs,
        stats.epochs,
        stats.mean_loss,
        stats.pairs_per_sec()
    )?;
    writeln!(out, "checkpoint\t{}", cfg.checkpoint_path.display())?;
    writeln!(out, "metrics\t{}", metrics_path.display())?;
    Ok(())
}

/// Graph, store and dense weights behind a saved model.
struct Loaded {
    graph: HetGraph,
    store: Arc<dyn ParamStore>,
    dense: DenseParams<f32>,
    channels: Vec<usize>,
}

impl Loaded {
    fn open(cfg: &RunConfig, checkpoint: &Path) -> Result<Self, CliError> {
        let graph = load_graph(cfg, None)?;
        let store = open_store(cfg);
        // Remote shards already hold their state; a local table reads the file.
        if cfg.endpoints.is_empty() {
            store.load(checkpoint)?;
        }
        let channels = cfg.model.resolve_channels(&graph).map_err(CliError::config)?;
        let mut dense = DenseParams::init(&cfg.model, channels.len(), cfg.seed);
        train::load_dense(&train::dense_path(checkpoint), &mut dense)?;
        Ok(Loaded { graph, store, dense, channels })
    }

    fn embed(&self, cfg: &RunConfig, nodes: &[NodeRef]) -> Result<Vec<Vec<f32>>, CliError> {
        Ok(node_embeddings(
            &self.graph,
            &cfg.model,
            &self.channels,
            &cfg.pipeline.fanouts,
            &self.dense,
            self.store.as_ref(),
            nodes,
            cfg.seed,
        )?)
    }
}

pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    pub truth: Option<PathBuf>,
    pub per_user: Option<PathBuf>,
}

pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<(), CliError> {
    let truth_path = match &args.truth {
        Some(p) => p,
        None => require(&cfg.truth_path, "eval.truth_path")?,
    };
    let m = Loaded::open(cfg, &args.checkpoint)?;
    let g = &m.graph;
    let users = type_nodes(g, &cfg.user_type)?;
    let items = type_nodes(g, &cfg.item_type)?;
    let (ut, it) = (g.type_ord(&cfg.user_type).unwrap(), g.type_ord(&cfg.item_type).unwrap());
    let matrix = |nodes: &[NodeRef], embs: Vec<Vec<f32>>| {
        EmbeddingMatrix::from_rows(cfg.model.dim, nodes.iter().map(|n| n.key()).zip(embs))
    };
    let user_m = matrix(&users, m.embed(cfg, &users)?);
    let item_m = matrix(&items, m.embed(cfg, &items)?);

    let mut history = Vec::new();
    for r in 0..g.relations().len() {
        if g.src_type_of(r) == ut && g.dst_type_of(r) == it {
            for u in &users {
                history.extend(g.neighbors_by_id(r, u.index()).iter().map(|&i| (u.key(), NodeRef::new(it, i).key())));
            }
        }
    }
    let data = EvalData::new(user_m, item_m, history);

    // Held-out users or items unknown to the graph still count against recall.
    let log = read_interactions(truth_path)?;
    let mut gt = GroundTruth::new();
    let mut unknown_users: HashMap<String, u64> = HashMap::new();
    let mut cold: HashSet<(u64, String)> = HashSet::new();
    for r in &log.records {
        let u = match g.lookup(&cfg.user_type, &r.user) {
            Some(n) => n.key(),
            None => {
                let next = u64::MAX - unknown_users.len() as u64;
                *unknown_users.entry(r.user.clone()).or_insert(next)
            }
        };
        let t = gt.entry(u).or_default();
        match g.lookup(&cfg.item_type, &r.item) {
            Some(i) => {
                t.items.insert(i.key());
            }
            None => {
                if cold.insert((u, r.item.clone())) {
                    t.unseen += 1;
                }
            }
        }
    }

    let report = eval::evaluate(&data, &gt, &cfg.eval_config());
    let stdout = io::stdout();
    let mut out = stdout.lock();
    eval::write_report(&mut out, std::slice::from_ref(&report))?;
    if let Some(p) = &args.per_user {
        let names: HashMap<u64, String> = unknown_users.into_iter().map(|(name, id)| (id, name)).collect();
        let name = |id: u64| match NodeRef::from_key(id) {
            Some(n) if !names.contains_key(&id) => g.external_id(n).to_owned(),
            _ => names.get(&id).cloned().unwrap_or_else(|| id.to_string()),
        };
        let mut w = create(p)?;
        eval::write_per_user(&mut w, &report, &name)?;
        w.flush()?;
    }
    Ok(())
}

pub struct DumpArgs {
    pub checkpoint: PathBuf,
    pub out: Option<PathBuf>,
    pub node_type: Option<String>,
}

/// One `node_id<TAB>v1 v2 ...` line per node. Without a type filter ids are
/// written as `type:id` so that equal ids of different types stay apart.
pub fn dump_embeddings(cfg: &RunConfig, args: &DumpArgs) -> Result<(), CliError> {
    let m = Loaded::open(cfg, &args.checkpoint)?;
    let g = &m.graph;
    let nodes = match &args.node_type {
        Some(t) => type_nodes(g, t)?,
        None => all_nodes(g),
    };
    let embs = m.embed(cfg, &nodes)?;
    let mut w: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for (n, v) in nodes.iter().zip(&embs) {
        match &args.node_type {
            Some(_) => write!(w, "{}\t", g.external_id(*n))?,
            None => write!(w, "{}:{}\t", g.type_name(n.type_ord()), g.external_id(*n))?,
        }
        for (k, x) in v.iter().enumerate() {
            if k > 0 {
                w.write_all(b" ")?;
            }
            write!(w, "{x}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub struct ServeArgs {
    pub index: usize,
    pub addr: Option<String>,
}

pub fn serve_shard(cfg: &RunConfig, args: &ServeArgs, stop: Arc<AtomicBool>) -> Result<(), CliError> {
    let num_shards = if cfg.endpoints.is_empty() { cfg.shards } else { cfg.endpoints.len() };
    if args.index >= num_shards {
        return Err(CliError::config(format!("shard index {} out of range for {num_shards} shards", args.index)));
    }
    let addr = match &args.addr {
        Some(a) => a.clone(),
        None => cfg
            .endpoints
            .get(args.index)
            .cloned()
            .ok_or_else(|| CliError::config("ps.endpoints has no entry for this shard; pass --addr"))?,
    };
    let shard = Shard::new(cfg.model.dim, cfg.seed, cfg.sparse_optimizer);
    let server = ShardServer::bind(addr.as_str(), shard, args.index, num_shards)
        .map_err(|e| CliError::io(format!("bind {addr}: {e}")))?;
    let local = server.local_addr()?;
    let handle = server.shutdown_handle()?;
    let worker = server.spawn();
    {
        let mut out = io::stdout().lock();
        writeln!(out, "listening\t{local}\tshard={}/{num_shards}", args.index)?;
        out.flush()?;
    }
    while !stop.load(Ordering::SeqCst) && !worker.is_finished() {
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    handle.shutdown();
    worker.join().map_err(|_| CliError::new("ps_error", "shard server thread panicked"))?;
    Ok(())
}

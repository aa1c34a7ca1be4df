//! Brute-force retrieval and recall@K under three strategies:
//!
//! * ICF: every train item of the user retrieves its top-N similar items;
//!   the union is ranked by how often each item was retrieved.
//! * UCF: the user's top-N similar users vote with their train items.
//! * U2I: items ranked by inner product with the user embedding.
//!
//! Ties rank by summed similarity, then ascending id.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::model::linalg::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Icf,
    Ucf,
    U2i,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Icf => "ICF",
            Strategy::Ucf => "UCF",
            Strategy::U2i => "U2I",
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "icf" => Ok(Strategy::Icf),
            "ucf" => Ok(Strategy::Ucf),
            "u2i" => Ok(Strategy::U2i),
            _ => Err(format!("unknown strategy {s:?}; expected ICF, UCF or U2I")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalConfig {
    /// Per-seed retrieval depth.
    pub n: usize,
    /// Recommendation list length.
    pub k: usize,
    pub strategy: Strategy,
    pub exclude_train: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { n: 20, k: 50, strategy: Strategy::U2i, exclude_train: true }
    }
}

/// Row-major embeddings addressed by id.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<u64>,
    data: Vec<f32>,
    index: HashMap<u64, usize>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Self {
        EmbeddingMatrix { dim, ..Default::default() }
    }

    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = (u64, Vec<f32>)>) -> Self {
        let mut m = Self::new(dim);
        for (id, v) in rows {
            m.push(id, &v);
        }
        m
    }

    pub fn push(&mut self, id: u64, v: &[f32]) {
        assert_eq!(v.len(), self.dim);
        assert!(self.index.insert(id, self.ids.len()).is_none(), "duplicate id {id}");
        self.ids.push(id);
        self.data.extend_from_slice(v);
    }

    pub fn get(&self, id: u64) -> Option<&[f32]> {
        self.index.get(&id).map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f32])> {
        self.ids.iter().copied().zip(self.data.chunks(self.dim.max(1)))
    }
}

fn rank(a: &(u64, f32), b: &(u64, f32)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Exact top-`n` candidates by descending inner product, ties by ascending
/// id, skipping `exclude`. Returns all survivors if fewer than `n`.
pub fn topn_similar(query: &[f32], candidates: &EmbeddingMatrix, n: usize, exclude: &dyn Fn(u64) -> bool) -> Vec<(u64, f32)> {
    let mut scored: Vec<(u64, f32)> =
        candidates.iter().filter(|(id, _)| !exclude(*id)).map(|(id, v)| (id, dot(query, v))).collect();
    if n == 0 {
        return Vec::new();
    }
    if scored.len() > n {
        scored.select_nth_unstable_by(n - 1, rank);
        scored.truncate(n);
    }
    scored.sort_unstable_by(rank);
    scored
}

/// Everything recommendation needs, frozen.
#[derive(Debug, Clone, Default)]
pub struct EvalData {
    pub users: EmbeddingMatrix,
    pub items: EmbeddingMatrix,
    /// Distinct train items per user, in first-interaction order.
    pub train: HashMap<u64, Vec<u64>>,
}

impl EvalData {
    pub fn new(users: EmbeddingMatrix, items: EmbeddingMatrix, train: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut map: HashMap<u64, Vec<u64>> = HashMap::new();
        for (u, i) in train {
            let list = map.entry(u).or_default();
            if !list.contains(&i) {
                list.push(i);
            }
        }
        EvalData { users, items, train: map }
    }

    fn history(&self, user: u64) -> &[u64] {
        self.train.get(&user).map_or(&[], Vec::as_slice)
    }
}

fn vote_rank(votes: HashMap<u64, (u32, f64)>, k: usize) -> Vec<u64> {
    let mut v: Vec<(u64, u32, f64)> = votes.into_iter().map(|(id, (c, s))| (id, c, s)).collect();
    v.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(b.2.total_cmp(&a.2)).then(a.0.cmp(&b.0)));
    v.into_iter().take(k).map(|x| x.0).collect()
}

/// Top-`k` item ids for `user`.
pub fn recommend(strategy: Strategy, user: u64, data: &EvalData, cfg: &EvalConfig) -> Vec<u64> {
    let history = data.history(user);
    let seen: HashSet<u64> = if cfg.exclude_train { history.iter().copied().collect() } else { HashSet::new() };
    match strategy {
        Strategy::U2i => match data.users.get(user) {
            Some(q) => topn_similar(q, &data.items, cfg.k, &|i| seen.contains(&i)).into_iter().map(|x| x.0).collect(),
            None => Vec::new(),
        },
        Strategy::Icf => {
            let mut votes: HashMap<u64, (u32, f64)> = HashMap::new();
            for &seed in history {
                let Some(q) = data.items.get(seed) else { continue };
                for (i, s) in topn_similar(q, &data.items, cfg.n, &|i| i == seed || seen.contains(&i)) {
                    let e = votes.entry(i).or_default();
                    e.0 += 1;
                    e.1 += s as f64;
                }
            }
            vote_rank(votes, cfg.k)
        }
        Strategy::Ucf => {
            let Some(q) = data.users.get(user) else { return Vec::new() };
            if history.is_empty() {
                return Vec::new();
            }
            let mut votes: HashMap<u64, (u32, f64)> = HashMap::new();
            for (other, s) in topn_similar(q, &data.users, cfg.n, &|u| u == user) {
                for &i in data.history(other) {
                    if seen.contains(&i) {
                        continue;
                    }
                    let e = votes.entry(i).or_default();
                    e.0 += 1;
                    e.1 += s as f64;
                }
            }
            vote_rank(votes, cfg.k)
        }
    }
}

/// Held-out items per user. `unseen` counts truth items that have no
/// embedding and can never be hit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Truth {
    pub items: HashSet<u64>,
    pub unseen: usize,
}

impl Truth {
    pub fn size(&self) -> usize {
        self.items.len() + self.unseen
    }
}

pub type GroundTruth = BTreeMap<u64, Truth>;

pub fn ground_truth(pairs: impl IntoIterator<Item = (u64, u64)>) -> GroundTruth {
    let mut gt = GroundTruth::new();
    for (u, i) in pairs {
        gt.entry(u).or_default().items.insert(i);
    }
    gt
}

pub fn user_recall(recs: &[u64], truth: &Truth) -> f64 {
    if truth.size() == 0 {
        return 0.0;
    }
    let hits = recs.iter().filter(|i| truth.items.contains(i)).count();
    hits as f64 / truth.size() as f64
}

/// Mean per-user recall over users with non-empty truth; users without a
/// recommendation list score zero.
pub fn recall_at_k(recs: &HashMap<u64, Vec<u64>>, truth: &GroundTruth) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (u, t) in truth {
        if t.size() == 0 {
            continue;
        }
        sum += recs.get(u).map_or(0.0, |r| user_recall(r, t));
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub strategy: Strategy,
    pub k: usize,
    pub recall: f64,
    /// `(user, recall, hits, truth size)` ascending by user.
    pub per_user: Vec<(u64, f64, usize, usize)>,
}

/// Scores every user with non-empty truth, in parallel.
pub fn evaluate(data: &EvalData, truth: &GroundTruth, cfg: &EvalConfig) -> EvalReport {
    let users: Vec<(&u64, &Truth)> = truth.iter().filter(|(_, t)| t.size() > 0).collect();
    let per_user: Vec<(u64, f64, usize, usize)> = users
        .par_iter()
        .map(|(&u, t)| {
            let recs = recommend(cfg.strategy, u, data, cfg);
            let hits = recs.iter().filter(|i| t.items.contains(i)).count();
            (u, hits as f64 / t.size() as f64, hits, t.size())
        })
        .collect();
    let recall = if per_user.is_empty() { 0.0 } else { per_user.iter().map(|x| x.1).sum::<f64>() / per_user.len() as f64 };
    EvalReport { strategy: cfg.strategy, k: cfg.k, recall, per_user }
}

pub fn write_report<W: Write>(w: &mut W, reports: &[EvalReport]) -> io::Result<()> {
    for r in reports {
        writeln!(w, "{}\t{}\t{:.6}", r.strategy.name(), r.k, r.recall)?;
    }
    Ok(())
}

/// `user \t recall \t hits \t truth size`, users by external id.
pub fn write_per_user<W: Write>(w: &mut W, report: &EvalReport, name: &dyn Fn(u64) -> String) -> io::Result<()> {
    for (u, r, hits, size) in &report.per_user {
        writeln!(w, "{}\t{:.6}\t{}\t{}", name(*u), r, hits, size)?;
    }
    Ok(())
}

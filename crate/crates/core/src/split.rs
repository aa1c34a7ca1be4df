//! Per-user temporal train/validation/test split.

use std::collections::HashMap;

use crate::graph::EdgeRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    /// Relation name (`click`) or a full edge-type spec (`u2click2i`).
    pub behavior: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionLog {
    pub records: Vec<Interaction>,
}

impl InteractionLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Graph edges for these interactions. A bare behavior `b` becomes the
    /// edge type `{user_type}2{b}2{item_type}`.
    pub fn to_edges(&self, user_type: &str, item_type: &str) -> Vec<EdgeRecord> {
        self.records
            .iter()
            .map(|r| {
                let et = if r.behavior.contains('2') {
                    r.behavior.clone()
                } else {
                    format!("{user_type}2{}2{item_type}", r.behavior)
                };
                EdgeRecord { edge_type: et, src: r.user.clone(), dst: r.item.clone() }
            })
            .collect()
    }

    /// Items per user, in record order (duplicates kept).
    pub fn items_by_user(&self) -> HashMap<&str, Vec<&str>> {
        let mut m: HashMap<&str, Vec<&str>> = HashMap::new();
        for r in &self.records {
            m.entry(&r.user).or_default().push(&r.item);
        }
        m
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: InteractionLog,
    pub val: InteractionLog,
    pub test: InteractionLog,
}

// Guards floor() against products like 10 * 0.9 landing a hair below 9.
const FLOOR_EPS: f64 = 1e-9;

fn floor_count(n: usize, frac: f64) -> usize {
    ((n as f64 * frac) + FLOOR_EPS).floor().min(n as f64) as usize
}

/// Sorts each user's records by timestamp (ties keep input order) and cuts at
/// `floor(n * train_frac)` and `floor(n * (train_frac + val_frac))`. Users are
/// emitted in order of first appearance.
pub fn temporal_split(log: &InteractionLog, train_frac: f64, val_frac: f64) -> Split {
    assert!(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0, "invalid split fractions");
    let mut order: Vec<&str> = Vec::new();
    let mut per_user: HashMap<&str, Vec<&Interaction>> = HashMap::new();
    for r in &log.records {
        per_user
            .entry(&r.user)
            .or_insert_with(|| {
                order.push(&r.user);
                Vec::new()
            })
            .push(r);
    }
    let mut out = Split::default();
    for u in order {
        let mut recs = per_user.remove(u).unwrap();
        recs.sort_by_key(|r| r.timestamp);
        let n = recs.len();
        let a = floor_count(n, train_frac);
        let b = floor_count(n, train_frac + val_frac).max(a);
        for (i, r) in recs.into_iter().enumerate() {
            let dst = if i < a {
                &mut out.train
            } else if i < b {
                &mut out.val
            } else {
                &mut out.test
            };
            dst.records.push(r.clone());
        }
    }
    out
}

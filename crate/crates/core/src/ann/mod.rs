//! Polarity-partitioned top-K cosine neighbor search.
//!
//! Each polarity gets its own sub-index, so a query can only ever return
//! statements sharing its label. The exact backend scans the partition; the
//! approximate backend walks an HNSW graph built per partition.

mod hnsw;
mod neighbors;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::corpus::{Polarity, StatementId};
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};

pub use hnsw::HnswParams;
pub use neighbors::{read_neighbors, write_neighbors, NeighborRecord};

pub const DEFAULT_K: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: StatementId,
    /// Clamped dot product of the two unit vectors, rounded to f32.
    pub cosine: f32,
}

/// Cosine descending, then id ascending.
pub fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.cosine
        .total_cmp(&a.cosine)
        .then_with(|| a.id.cmp(&b.id))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Backend {
    #[default]
    Exact,
    Approximate(HnswParams),
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Exact => "exact",
            Backend::Approximate(_) => "approximate",
        }
    }
}

struct Partition {
    ids: Vec<StatementId>,
    graph: Option<hnsw::Hnsw>,
}

/// Immutable neighbor index over an [`EmbeddingStore`].
pub struct AnnIndex<'s> {
    store: &'s EmbeddingStore,
    partitions: BTreeMap<Polarity, Partition>,
    /// Position of each statement inside its partition.
    slot: Vec<u32>,
    pub k_default: usize,
}

pub(crate) fn similarity(store: &EmbeddingStore, a: StatementId, b: StatementId) -> f32 {
    store.cosine(a, b) as f32
}

impl<'s> AnnIndex<'s> {
    pub fn build(store: &'s EmbeddingStore, backend: &Backend) -> Result<Self> {
        if store.is_empty() {
            return Err(Error::validation("cannot index an empty embedding store"));
        }
        let mut slot = vec![0u32; store.len()];
        let mut members: BTreeMap<Polarity, Vec<StatementId>> = BTreeMap::new();
        for (k, &p) in store.polarities().iter().enumerate() {
            let ids = members.entry(p).or_default();
            slot[k] = ids.len() as u32;
            ids.push(StatementId(k as u32));
        }
        let partitions = members
            .into_iter()
            .map(|(p, ids)| {
                let graph = match backend {
                    Backend::Exact => None,
                    Backend::Approximate(params) => Some(hnsw::Hnsw::build(store, &ids, params)),
                };
                (p, Partition { ids, graph })
            })
            .collect();
        Ok(AnnIndex {
            store,
            partitions,
            slot,
            k_default: DEFAULT_K,
        })
    }

    pub fn store(&self) -> &'s EmbeddingStore {
        self.store
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn partition_sizes(&self) -> BTreeMap<Polarity, usize> {
        self.partitions
            .iter()
            .map(|(&p, part)| (p, part.ids.len()))
            .collect()
    }

    /// Up to `k` same-polarity neighbors of `s`, self excluded, sorted by
    /// cosine descending with id ascending on ties.
    pub fn query_topk(&self, s: StatementId, k: usize) -> Result<Vec<Neighbor>> {
        if s.index() >= self.store.len() {
            return Err(Error::validation(format!("unknown statement {s}")));
        }
        let part = &self.partitions[&self.store.polarity(s)];
        if k == 0 {
            return Ok(Vec::new());
        }
        Ok(match &part.graph {
            None => exact_topk(self.store, &part.ids, s, k),
            Some(g) => g.search(self.store, &part.ids, self.slot[s.index()], k),
        })
    }

    /// Neighbor lists for every statement, indexed by statement id.
    /// Queries run in parallel; output does not depend on scheduling.
    pub fn query_all(&self, k: usize) -> Vec<Vec<Neighbor>> {
        (0..self.store.len() as u32)
            .into_par_iter()
            .map(|q| self.query_topk(StatementId(q), k).expect("id in range"))
            .collect()
    }
}

fn exact_topk(store: &EmbeddingStore, ids: &[StatementId], s: StatementId, k: usize) -> Vec<Neighbor> {
    let mut scored: Vec<Neighbor> = ids
        .iter()
        .filter(|&&id| id != s)
        .map(|&id| Neighbor {
            id,
            cosine: similarity(store, s, id),
        })
        .collect();
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, neighbor_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(neighbor_order);
    scored
}

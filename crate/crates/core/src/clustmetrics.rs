//! Unsupervised cluster quality under the dissimilarity `d(x, y) = 1 - cos(x, y)`.
//!
//! Both dispersion measures are averaged per statement (divided by the number
//! of clustered statements) and centroids are normalized means. Distances
//! enter to the first power by default; [`DistancePower::Squared`] is the
//! alternative.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Polarity, StatementId, UniverseIndex};
use crate::embed::EmbeddingStore;
use crate::refine::ClusterMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistancePower {
    #[default]
    Linear,
    Squared,
}

impl DistancePower {
    fn apply(self, d: f64) -> f64 {
        match self {
            DistancePower::Linear => d,
            DistancePower::Squared => d * d,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 - cos(a, b)` with explicit norms, clamped to `[0, 2]`.
fn distance(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let cos = (dot / (norm(a) * norm(b))).clamp(-1.0, 1.0);
    (1.0 - cos).max(0.0)
}

fn row64(store: &EmbeddingStore, s: StatementId) -> Vec<f64> {
    store.row(s).iter().map(|&x| x as f64).collect()
}

/// Normalized mean of the member rows; falls back to the smallest-id
/// member's row when the mean vanishes.
fn centroid(store: &EmbeddingStore, members: &[StatementId]) -> Vec<f64> {
    let mut sum = vec![0.0; store.dim()];
    for &m in members {
        for (acc, &x) in sum.iter_mut().zip(store.row(m)) {
            *acc += x as f64;
        }
    }
    let n = norm(&sum);
    if n > 1e-12 {
        sum.iter_mut().for_each(|x| *x /= n);
        sum
    } else {
        let first = *members.iter().min().expect("non-empty cluster");
        log::warn!("zero-norm centroid; using {first} as centroid");
        row64(store, first)
    }
}

pub fn sse(map: &ClusterMap, store: &EmbeddingStore) -> f64 {
    sse_with(map, store, DistancePower::Linear)
}

/// Mean over statements of the distance to their cluster centroid.
pub fn sse_with(map: &ClusterMap, store: &EmbeddingStore, power: DistancePower) -> f64 {
    if map.statement_count() == 0 {
        return 0.0;
    }
    let terms: Vec<f64> = map
        .clusters()
        .par_iter()
        .map(|c| {
            if c.members.len() < 2 {
                return 0.0;
            }
            let center = centroid(store, &c.members);
            c.members
                .iter()
                .map(|&m| power.apply(distance(&row64(store, m), &center)))
                .sum()
        })
        .collect();
    terms.iter().sum::<f64>() / map.statement_count() as f64
}

pub fn ssb(map: &ClusterMap, store: &EmbeddingStore) -> f64 {
    ssb_with(map, store, DistancePower::Linear)
}

/// Size-weighted mean distance from cluster centroids to the global centroid.
pub fn ssb_with(map: &ClusterMap, store: &EmbeddingStore, power: DistancePower) -> f64 {
    if map.statement_count() == 0 {
        return 0.0;
    }
    let all: Vec<StatementId> = (0..map.statement_count() as u32).map(StatementId).collect();
    let global = centroid(store, &all);
    let terms: Vec<f64> = map
        .clusters()
        .par_iter()
        .map(|c| {
            let center = centroid(store, &c.members);
            c.members.len() as f64 * power.apply(distance(&center, &global))
        })
        .collect();
    terms.iter().sum::<f64>() / map.statement_count() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterQualityReport {
    pub n_statements: usize,
    pub n_clusters: usize,
    pub reduction_pct: f64,
    pub sse: f64,
    pub ssb: f64,
}

pub fn quality_report(map: &ClusterMap, store: &EmbeddingStore, power: DistancePower) -> ClusterQualityReport {
    let n = map.statement_count();
    ClusterQualityReport {
        n_statements: n,
        n_clusters: map.len(),
        reduction_pct: reduction_pct(n, map.len()),
        sse: sse_with(map, store, power),
        ssb: ssb_with(map, store, power),
    }
}

fn reduction_pct(before: usize, after: usize) -> f64 {
    if before == 0 {
        0.0
    } else {
        100.0 * (1.0 - after as f64 / before as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: usize,
    pub avg: f64,
    pub max: usize,
}

impl Spread {
    fn of(sizes: impl IntoIterator<Item = usize>) -> Self {
        let v: Vec<usize> = sizes.into_iter().collect();
        if v.is_empty() {
            return Spread {
                min: 0,
                avg: 0.0,
                max: 0,
            };
        }
        Spread {
            min: *v.iter().min().unwrap(),
            avg: v.iter().sum::<usize>() as f64 / v.len() as f64,
            max: *v.iter().max().unwrap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub unique_statements: usize,
    pub unique_by_polarity: BTreeMap<Polarity, usize>,
    pub triplets: usize,
    pub per_interaction: Spread,
    pub per_item: Spread,
    pub per_user: Spread,
}

impl DatasetStats {
    pub fn of(d: &Dataset) -> Self {
        let used = d.referenced_statements();
        let mut unique_by_polarity: BTreeMap<Polarity, usize> =
            Polarity::ALL.iter().map(|&p| (p, 0)).collect();
        for &s in &used {
            *unique_by_polarity.get_mut(&d.polarity(s)).unwrap() += 1;
        }
        let u = UniverseIndex::from_interactions(&d.interactions);
        DatasetStats {
            unique_statements: used.len(),
            unique_by_polarity,
            triplets: d.triplet_count(),
            per_interaction: Spread::of(d.interactions.iter().map(|i| i.statements.len())),
            per_item: Spread::of(u.by_item.values().map(Vec::len)),
            per_user: Spread::of(u.by_user.values().map(Vec::len)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionStats {
    pub n_clusters: usize,
    pub before: DatasetStats,
    pub after: DatasetStats,
    /// `100 * (1 - unique_after / unique_before)`.
    pub reduction_pct: f64,
    pub reduction_pct_by_polarity: BTreeMap<Polarity, f64>,
}

pub fn reduction_stats(before: &Dataset, after: &Dataset, map: &ClusterMap) -> ReductionStats {
    let b = DatasetStats::of(before);
    let a = DatasetStats::of(after);
    let by_pol = Polarity::ALL
        .iter()
        .map(|p| {
            (
                *p,
                reduction_pct(b.unique_by_polarity[p], a.unique_by_polarity[p]),
            )
        })
        .collect();
    ReductionStats {
        n_clusters: map.len(),
        reduction_pct: reduction_pct(b.unique_statements, a.unique_statements),
        reduction_pct_by_polarity: by_pol,
        before: b,
        after: a,
    }
}

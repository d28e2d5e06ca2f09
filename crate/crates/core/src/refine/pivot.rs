use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};

use super::SimilarityGraph;
use crate::corpus::StatementId;
use crate::embed::EmbeddingStore;

pub const DEFAULT_TAU_INTRA: f64 = 0.85;
pub const DEFAULT_TAU_REMERGE: f64 = 0.90;
pub const DEFAULT_SIZE_CAP: usize = 2000;

/// A component is cohesive when every member pair has cosine strictly above
/// `tau_intra`. Singletons are cohesive; components larger than `size_cap`
/// are not, without any pair being computed.
pub fn is_cohesive(
    component: &[StatementId],
    store: &EmbeddingStore,
    tau_intra: f64,
    size_cap: usize,
) -> bool {
    if component.len() <= 1 {
        return true;
    }
    if component.len() > size_cap {
        return false;
    }
    component.iter().enumerate().all(|(k, &a)| {
        component[k + 1..]
            .iter()
            .all(|&b| store.cosine(a, b) > tau_intra)
    })
}

/// Splits a non-cohesive component around high-degree pivots.
///
/// Each round takes the remaining node with the most remaining neighbors
/// (smallest id on ties) and forms a block from it and those neighbors. The
/// block joins the open cluster when the pivot's cosine to every pivot
/// already in that cluster is at least `tau_remerge`; otherwise the open
/// cluster is emitted and the block starts a new one. Blocks leave the
/// remaining set as they are formed, so the output partitions the input.
pub fn refine_component(
    component: &[StatementId],
    g: &SimilarityGraph,
    store: &EmbeddingStore,
    tau_remerge: f64,
) -> Vec<Vec<StatementId>> {
    let pos: HashMap<StatementId, usize> =
        component.iter().enumerate().map(|(k, &s)| (s, k)).collect();
    let local: Vec<Vec<usize>> = component
        .iter()
        .map(|&s| {
            g.neighbors(s)
                .iter()
                .filter_map(|t| pos.get(t).copied())
                .collect()
        })
        .collect();

    let mut remaining = vec![true; component.len()];
    let mut degree: Vec<usize> = local.iter().map(Vec::len).collect();
    // ordered by (degree descending, id ascending)
    let mut queue: BTreeSet<(Reverse<usize>, StatementId, usize)> = component
        .iter()
        .enumerate()
        .map(|(k, &s)| (Reverse(degree[k]), s, k))
        .collect();

    let mut clusters = Vec::new();
    let mut open: Vec<StatementId> = Vec::new();
    let mut pivots: Vec<StatementId> = Vec::new();

    while let Some((_, pivot, p)) = queue.pop_first() {
        let mut block = vec![p];
        block.extend(local[p].iter().copied().filter(|&q| remaining[q]));
        for &b in &block {
            remaining[b] = false;
            if b != p {
                queue.remove(&(Reverse(degree[b]), component[b], b));
            }
        }
        for &b in &block {
            for &q in &local[b] {
                if remaining[q] {
                    queue.remove(&(Reverse(degree[q]), component[q], q));
                    degree[q] -= 1;
                    queue.insert((Reverse(degree[q]), component[q], q));
                }
            }
        }
        let members = block.iter().map(|&b| component[b]);

        if open.is_empty() {
            open.extend(members);
            pivots = vec![pivot];
        } else if pivots
            .iter()
            .map(|&q| store.cosine(pivot, q))
            .fold(f64::INFINITY, f64::min)
            >= tau_remerge
        {
            open.extend(members);
            pivots.push(pivot);
        } else {
            let mut done = std::mem::take(&mut open);
            done.sort_unstable();
            clusters.push(done);
            open.extend(members);
            pivots = vec![pivot];
        }
    }
    if !open.is_empty() {
        open.sort_unstable();
        clusters.push(open);
    }
    clusters
}

const TIE_EPS: f64 = 1e-12;

/// Member with the highest mean cosine to the other members (smallest id on
/// ties, where scores within 1e-12 count as tied). Uses the identity `mean_j cos(x, y_j) = (x·Σy − x·x) / (n − 1)`.
pub fn select_representative(members: &[StatementId], store: &EmbeddingStore) -> StatementId {
    assert!(!members.is_empty(), "cluster must be non-empty");
    if members.len() == 1 {
        return members[0];
    }
    let mut sum = vec![0.0f64; store.dim()];
    for &m in members {
        for (acc, &x) in sum.iter_mut().zip(store.row(m)) {
            *acc += x as f64;
        }
    }
    let mut best = (f64::NEG_INFINITY, members[0]);
    for &m in members {
        let row = store.row(m);
        let to_sum: f64 = row.iter().zip(&sum).map(|(&x, s)| x as f64 * s).sum();
        let own: f64 = row.iter().map(|&x| x as f64 * x as f64).sum();
        let score = (to_sum - own) / (members.len() - 1) as f64;
        if score > best.0 + TIE_EPS || ((score - best.0).abs() <= TIE_EPS && m < best.1) {
            best = (score, m);
        }
    }
    best.1
}

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{neighbor_order, similarity, Neighbor};
use crate::corpus::StatementId;
use crate::embed::EmbeddingStore;

#[derive(Debug, Clone, PartialEq)]
pub struct HnswParams {
    /// Links per node on upper layers; layer 0 allows twice as many.
    pub m: usize,
    pub ef_construction: usize,
    /// Beam width at query time (raised to k + 1 when smaller).
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams {
            m: 16,
            ef_construction: 200,
            ef_search: 256,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Scored {
    sim: f32,
    node: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    // Greater = more similar; smaller node wins ties.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Hierarchical navigable small-world graph over one partition. Nodes are
/// positions in the partition's id list.
pub(super) struct Hnsw {
    layers: Vec<Vec<Vec<u32>>>,
    entry: u32,
    params: HnswParams,
}

struct Ctx<'a> {
    store: &'a EmbeddingStore,
    ids: &'a [StatementId],
}

impl Ctx<'_> {
    fn sim(&self, a: u32, b: u32) -> f32 {
        similarity(self.store, self.ids[a as usize], self.ids[b as usize])
    }
}

impl Hnsw {
    pub(super) fn build(store: &EmbeddingStore, ids: &[StatementId], params: &HnswParams) -> Self {
        let ctx = Ctx { store, ids };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let ml = 1.0 / (params.m.max(2) as f64).ln();
        let mut g = Hnsw {
            layers: vec![vec![Vec::new(); ids.len()]],
            entry: 0,
            params: params.clone(),
        };
        for node in 0..ids.len() as u32 {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let level = (-u.ln() * ml).floor() as usize;
            if node == 0 {
                g.ensure_layers(level);
                continue;
            }
            g.insert(&ctx, node, level);
        }
        g
    }

    fn top(&self) -> usize {
        self.layers.len() - 1
    }

    fn ensure_layers(&mut self, level: usize) {
        let n = self.layers[0].len();
        while self.layers.len() <= level {
            self.layers.push(vec![Vec::new(); n]);
        }
    }

    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    fn insert(&mut self, ctx: &Ctx<'_>, node: u32, level: usize) {
        let top = self.top();
        let mut ep = vec![Scored {
            sim: ctx.sim(node, self.entry),
            node: self.entry,
        }];
        for layer in (level + 1..=top).rev() {
            ep = self.search_layer(ctx, node, &ep, 1, layer);
        }
        for layer in (0..=level.min(top)).rev() {
            let found = self.search_layer(ctx, node, &ep, self.params.ef_construction, layer);
            let chosen: Vec<u32> = found.iter().take(self.params.m).map(|s| s.node).collect();
            for &nb in &chosen {
                let cap = self.cap(layer);
                let links = &mut self.layers[layer][nb as usize];
                links.push(node);
                if links.len() > cap {
                    let mut scored: Vec<Scored> = links
                        .iter()
                        .map(|&x| Scored {
                            sim: ctx.sim(nb, x),
                            node: x,
                        })
                        .collect();
                    scored.sort_by(|a, b| b.cmp(a));
                    scored.truncate(cap);
                    *links = scored.into_iter().map(|s| s.node).collect();
                }
            }
            self.layers[layer][node as usize] = chosen;
            ep = found;
        }
        if level > top {
            self.ensure_layers(level);
            self.entry = node;
        }
    }

    /// Beam search on one layer; returns up to `ef` nodes, most similar first.
    fn search_layer(
        &self,
        ctx: &Ctx<'_>,
        query: u32,
        entry: &[Scored],
        ef: usize,
        layer: usize,
    ) -> Vec<Scored> {
        let links = &self.layers[layer];
        let mut visited = vec![false; links.len()];
        let mut candidates: BinaryHeap<Scored> = BinaryHeap::new();
        let mut best: BinaryHeap<std::cmp::Reverse<Scored>> = BinaryHeap::new();
        for &e in entry {
            if !visited[e.node as usize] {
                visited[e.node as usize] = true;
                candidates.push(e);
                best.push(std::cmp::Reverse(e));
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(c) = candidates.pop() {
            let worst = best.peek().map(|r| r.0);
            if let Some(w) = worst {
                if best.len() >= ef && c < w {
                    break;
                }
            }
            for &nb in &links[c.node as usize] {
                if visited[nb as usize] {
                    continue;
                }
                visited[nb as usize] = true;
                let s = Scored {
                    sim: ctx.sim(query, nb),
                    node: nb,
                };
                if best.len() < ef || s > best.peek().unwrap().0 {
                    candidates.push(s);
                    best.push(std::cmp::Reverse(s));
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored> = best.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    pub(super) fn search(
        &self,
        store: &EmbeddingStore,
        ids: &[StatementId],
        query: u32,
        k: usize,
    ) -> Vec<Neighbor> {
        let ctx = Ctx { store, ids };
        let mut ep = vec![Scored {
            sim: ctx.sim(query, self.entry),
            node: self.entry,
        }];
        for layer in (1..=self.top()).rev() {
            ep = self.search_layer(&ctx, query, &ep, 1, layer);
        }
        let ef = self.params.ef_search.max(k + 1);
        let mut out: Vec<Neighbor> = self
            .search_layer(&ctx, query, &ep, ef, 0)
            .into_iter()
            .filter(|s| s.node != query)
            .map(|s| Neighbor {
                id: ids[s.node as usize],
                cosine: s.sim,
            })
            .collect();
        out.sort_by(neighbor_order);
        out.truncate(k);
        out
    }
}

//! Graph refinement of validated paraphrase pairs into canonical clusters.
//!
//! Validated pairs define an undirected graph over every statement. Each
//! connected component is kept as one cluster when it is cohesive (minimum
//! pairwise cosine above `tau_intra`); otherwise it is split by the pivot
//! procedure in [`refine_component`]. Every cluster is represented by its
//! most central member, and [`consolidate`] rewrites a dataset onto those
//! representatives.

mod graph;
mod pivot;

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Interaction, Polarity, StatementId};
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};

pub use graph::{connected_components, SimilarityGraph};
pub use pivot::{
    is_cohesive, refine_component, select_representative, DEFAULT_SIZE_CAP, DEFAULT_TAU_INTRA,
    DEFAULT_TAU_REMERGE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// A whole connected component that passed the cohesion gate.
    Cohesive,
    /// A block produced by pivot refinement.
    Refined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    #[serde(rename = "rep")]
    pub representative: StatementId,
    pub members: Vec<StatementId>,
    pub origin: Origin,
}

/// Partition of all statements into clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMap {
    clusters: Vec<Cluster>,
    assignment: Vec<u32>,
}

impl ClusterMap {
    /// Validates that `clusters` partition statements `0..n` and that every
    /// representative is a member.
    pub fn new(n: usize, clusters: Vec<Cluster>) -> Result<Self> {
        const UNSET: u32 = u32::MAX;
        let mut assignment = vec![UNSET; n];
        for (c, cl) in clusters.iter().enumerate() {
            if cl.members.is_empty() {
                return Err(Error::validation(format!("cluster {c} is empty")));
            }
            if cl.members.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::validation(format!("cluster {c} members are not sorted")));
            }
            if cl.members.binary_search(&cl.representative).is_err() {
                return Err(Error::validation(format!(
                    "cluster {c} representative {} is not a member",
                    cl.representative
                )));
            }
            for m in &cl.members {
                match assignment.get_mut(m.index()) {
                    None => {
                        return Err(Error::validation(format!(
                            "cluster {c} names unknown statement {m}"
                        )))
                    }
                    Some(slot) if *slot != UNSET => {
                        return Err(Error::validation(format!(
                            "statement {m} appears in clusters {slot} and {c}"
                        )))
                    }
                    Some(slot) => *slot = c as u32,
                }
            }
        }
        if let Some(k) = assignment.iter().position(|&a| a == UNSET) {
            return Err(Error::validation(format!("statement s{k} is not in any cluster")));
        }
        Ok(ClusterMap {
            clusters,
            assignment,
        })
    }

    /// Every statement in its own cluster.
    pub fn singletons(n: usize) -> Self {
        let clusters = (0..n as u32)
            .map(|k| Cluster {
                representative: StatementId(k),
                members: vec![StatementId(k)],
                origin: Origin::Cohesive,
            })
            .collect();
        ClusterMap::new(n, clusters).expect("singletons partition")
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn statement_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn cluster_of(&self, s: StatementId) -> Option<usize> {
        self.assignment.get(s.index()).map(|&c| c as usize)
    }

    pub fn representative_of(&self, s: StatementId) -> Option<StatementId> {
        self.cluster_of(s).map(|c| self.clusters[c].representative)
    }

    /// Cluster index per statement id.
    pub fn labels(&self) -> &[u32] {
        &self.assignment
    }

    /// Errors if any cluster mixes polarities.
    pub fn check_polarity(&self, polarities: &[Polarity]) -> Result<()> {
        for (c, cl) in self.clusters.iter().enumerate() {
            let p = polarities[cl.members[0].index()];
            if let Some(m) = cl.members.iter().find(|m| polarities[m.index()] != p) {
                return Err(Error::validation(format!(
                    "cluster {c} mixes polarities ({m} is not {p})"
                )));
            }
        }
        Ok(())
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        for c in &self.clusters {
            serde_json::to_writer(&mut w, c)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a cluster file; `n` is the number of statements it must cover.
    pub fn read_jsonl(path: impl AsRef<Path>, n: usize) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut clusters = Vec::new();
        for (k, line) in std::io::BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            clusters.push(
                serde_json::from_str(&line).map_err(|e| Error::parse(path, k + 1, e.to_string()))?,
            );
        }
        ClusterMap::new(n, clusters)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    pub tau_intra: f64,
    pub tau_remerge: f64,
    pub size_cap: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            tau_intra: DEFAULT_TAU_INTRA,
            tau_remerge: DEFAULT_TAU_REMERGE,
            size_cap: DEFAULT_SIZE_CAP,
        }
    }
}

/// Clusters every statement in `store` given validated pair edges.
///
/// Components are processed in parallel and assembled in component order
/// (smallest member id), so the result does not depend on thread count.
pub fn cluster_statements(
    store: &EmbeddingStore,
    edges: impl IntoIterator<Item = (StatementId, StatementId)>,
    params: &RefineParams,
) -> Result<ClusterMap> {
    let g = SimilarityGraph::from_edges(store.len(), edges)?;
    for a in 0..store.len() as u32 {
        let a = StatementId(a);
        if let Some(b) = g.neighbors(a).iter().find(|&&b| store.polarity(b) != store.polarity(a)) {
            return Err(Error::validation(format!("cross-polarity edge ({a}, {b})")));
        }
    }
    let components = connected_components(&g);
    let clusters: Vec<Vec<Cluster>> = components
        .par_iter()
        .map(|comp| {
            let (blocks, origin) =
                if is_cohesive(comp, store, params.tau_intra, params.size_cap) {
                    (vec![comp.clone()], Origin::Cohesive)
                } else {
                    (
                        refine_component(comp, &g, store, params.tau_remerge),
                        Origin::Refined,
                    )
                };
            blocks
                .into_iter()
                .map(|members| Cluster {
                    representative: select_representative(&members, store),
                    members,
                    origin,
                })
                .collect()
        })
        .collect();
    let map = ClusterMap::new(store.len(), clusters.into_iter().flatten().collect())?;
    map.check_polarity(store.polarities())?;
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConsolidationReport {
    pub unique_before: usize,
    pub unique_after: usize,
    pub triplets_before: usize,
    pub triplets_after: usize,
}

/// Replaces every statement by its cluster representative and deduplicates
/// within each interaction. The statement table is carried over unchanged.
pub fn consolidate(d: &Dataset, map: &ClusterMap) -> Result<(Dataset, ConsolidationReport)> {
    let interactions = d
        .interactions
        .iter()
        .map(|it| {
            let mut statements = it
                .statements
                .iter()
                .map(|&s| {
                    map.representative_of(s)
                        .ok_or_else(|| Error::validation(format!("statement {s} has no cluster")))
                })
                .collect::<Result<Vec<_>>>()?;
            statements.sort_unstable();
            statements.dedup();
            debug_assert!(!statements.is_empty());
            Ok(Interaction {
                statements,
                ..it.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = Dataset::new(d.statements.clone(), interactions)?;
    let report = ConsolidationReport {
        unique_before: d.referenced_statements().len(),
        unique_after: out.referenced_statements().len(),
        triplets_before: d.triplet_count(),
        triplets_after: out.triplet_count(),
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Statement;

    fn s(v: u32) -> StatementId {
        StatementId(v)
    }

    fn dataset(n: usize, rows: &[(&str, &str, &[u32])]) -> Dataset {
        let statements = (0..n)
            .map(|k| Statement {
                id: s(k as u32),
                text: format!("statement {k}"),
                polarity: Polarity::Pos,
            })
            .collect();
        let interactions = rows
            .iter()
            .enumerate()
            .map(|(t, &(u, i, ss))| Interaction {
                user: u.into(),
                item: i.into(),
                timestamp: t as i64,
                rating: None,
                statements: ss.iter().map(|&x| s(x)).collect(),
            })
            .collect();
        Dataset::new(statements, interactions).unwrap()
    }

    fn map(n: usize, groups: &[(&[u32], u32)]) -> ClusterMap {
        let clusters = groups
            .iter()
            .map(|&(m, r)| Cluster {
                representative: s(r),
                members: m.iter().map(|&x| s(x)).collect(),
                origin: Origin::Cohesive,
            })
            .collect();
        ClusterMap::new(n, clusters).unwrap()
    }

    #[test]
    fn partition_is_validated() {
        let bad = vec![Cluster {
            representative: s(0),
            members: vec![s(0)],
            origin: Origin::Cohesive,
        }];
        assert!(ClusterMap::new(2, bad.clone()).is_err());
        let mut twice = bad.clone();
        twice.push(bad[0].clone());
        assert!(ClusterMap::new(1, twice).is_err());
        let not_member = vec![Cluster {
            representative: s(1),
            members: vec![s(0)],
            origin: Origin::Cohesive,
        }];
        assert!(ClusterMap::new(1, not_member).is_err());
    }

    #[test]
    fn consolidate_merges_within_interaction() {
        let d = dataset(3, &[("u", "i", &[1, 2]), ("v", "i", &[0])]);
        let m = map(3, &[(&[0], 0), (&[1, 2], 1)]);
        let (out, report) = consolidate(&d, &m).unwrap();
        assert_eq!(out.interactions[0].statements, vec![s(1)]);
        assert_eq!(report.triplets_before - report.triplets_after, 1);
        assert_eq!(report.unique_after, 2);
    }

    #[test]
    fn consolidate_identity() {
        let d = dataset(3, &[("u", "i", &[1, 2]), ("v", "i", &[0])]);
        let (out, report) = consolidate(&d, &ClusterMap::singletons(3)).unwrap();
        assert_eq!(out, d);
        assert_eq!(report.unique_before, report.unique_after);
    }

    #[test]
    fn consolidate_hand_counted_fixture() {
        // 10 interactions over 8 statements; statements 3 and 6 are paraphrases.
        let rows: [(&str, &str, &[u32]); 10] = [
            ("u1", "a", &[0, 3]),
            ("u1", "b", &[1]),
            ("u2", "a", &[2, 6]),
            ("u2", "c", &[4, 5]),
            ("u3", "a", &[3, 6]),
            ("u3", "d", &[7]),
            ("u4", "b", &[1, 2]),
            ("u4", "c", &[6]),
            ("u5", "d", &[0, 7]),
            ("u5", "e", &[5]),
        ];
        let d = dataset(8, &rows);
        let m = map(
            8,
            &[
                (&[0], 0),
                (&[1], 1),
                (&[2], 2),
                (&[3, 6], 3),
                (&[4], 4),
                (&[5], 5),
                (&[7], 7),
            ],
        );
        let (out, r) = consolidate(&d, &m).unwrap();
        assert_eq!(r.unique_before, 8);
        assert_eq!(r.unique_after, 7);
        assert_eq!(r.triplets_before, 16);
        assert_eq!(r.triplets_after, 15);
        assert_eq!(out.interactions[4].statements, vec![s(3)]);
    }

    #[test]
    fn unmapped_statement_is_error() {
        let d = dataset(3, &[("u", "i", &[2])]);
        let m = ClusterMap::singletons(2);
        assert!(consolidate(&d, &m).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let m = map(4, &[(&[0, 2], 2), (&[1], 1), (&[3], 3)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clusters.jsonl");
        m.write_jsonl(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(r#"{"rep":2,"members":[0,2],"origin":"cohesive"}"#));
        assert_eq!(ClusterMap::read_jsonl(&p, 4).unwrap(), m);
        assert!(ClusterMap::read_jsonl(&p, 5).is_err());
    }

    #[test]
    fn cross_polarity_edges_are_rejected() {
        let st = EmbeddingStore::from_rows(
            &[vec![1.0, 0.0], vec![1.0, 0.01]],
            vec![Polarity::Pos, Polarity::Neg],
        )
        .unwrap();
        assert!(cluster_statements(&st, [(s(0), s(1))], &RefineParams::default()).is_err());
    }

    #[test]
    fn noisy_component_goes_through_refinement() {
        // 0,1,2 tight; 3 far away but chained to 2
        let rows: Vec<Vec<f64>> = [0.0f64, 1.0, 2.0, 70.0]
            .iter()
            .map(|a| vec![a.to_radians().cos(), a.to_radians().sin()])
            .collect();
        let st = EmbeddingStore::from_rows(&rows, vec![Polarity::Pos; 4]).unwrap();
        let edges = [(s(0), s(1)), (s(1), s(2)), (s(2), s(3))];
        let m = cluster_statements(&st, edges, &RefineParams::default()).unwrap();
        assert!(m.clusters().iter().all(|c| c.origin == Origin::Refined));
        let sizes: Vec<usize> = m.clusters().iter().map(|c| c.members.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 4);
        assert!(m.len() >= 2);
    }
}

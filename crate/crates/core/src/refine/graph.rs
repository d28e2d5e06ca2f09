use crate::corpus::StatementId;
use crate::error::{Error, Result};

/// Undirected graph over all statements; edges are validated paraphrase pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    adj: Vec<Vec<StatementId>>,
}

impl SimilarityGraph {
    /// Builds a graph on nodes `0..n`. Duplicate edges collapse; self loops
    /// and out-of-range endpoints are errors.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (StatementId, StatementId)>,
    ) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for (a, b) in edges {
            if a == b {
                return Err(Error::validation(format!("self loop on {a}")));
            }
            if a.index() >= n || b.index() >= n {
                return Err(Error::validation(format!(
                    "edge ({a}, {b}) outside the {n} known statements"
                )));
            }
            adj[a.index()].push(b);
            adj[b.index()].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(SimilarityGraph { adj })
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, s: StatementId) -> &[StatementId] {
        &self.adj[s.index()]
    }
}

/// Maximal connected components. Members are sorted and components are
/// ordered by their smallest id.
pub fn connected_components(g: &SimilarityGraph) -> Vec<Vec<StatementId>> {
    let n = g.node_count();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(StatementId(start as u32));
        let mut comp = Vec::new();
        while let Some(x) = stack.pop() {
            comp.push(x);
            for &y in g.neighbors(x) {
                if !seen[y.index()] {
                    seen[y.index()] = true;
                    stack.push(y);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

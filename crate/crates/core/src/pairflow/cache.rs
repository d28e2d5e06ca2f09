use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::corpus::StatementId;
use crate::error::{Error, Result};

/// Scorer results keyed by `(a, b, scorer id)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreCache {
    map: BTreeMap<(String, u32, u32), f64>,
}

impl ScoreCache {
    pub fn get(&self, a: StatementId, b: StatementId, scorer: &str) -> Option<f64> {
        self.map.get(&(scorer.to_string(), a.0, b.0)).copied()
    }

    pub fn insert(&mut self, a: StatementId, b: StatementId, scorer: &str, prob: f64) {
        self.map.insert((scorer.to_string(), a.0, b.0), prob);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Loads a cache file; a missing file yields an empty cache.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = match std::fs::File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(Error::io(path, e)),
        };
        let mut cache = Self::default();
        for (k, line) in std::io::BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let parts: Vec<&str> = line.splitn(4, '\t').collect();
            let parsed = match parts.as_slice() {
                [a, b, p, id] => a
                    .parse()
                    .ok()
                    .zip(b.parse().ok())
                    .zip(p.parse::<f64>().ok())
                    .map(|((a, b), p)| (a, b, p, *id)),
                _ => None,
            };
            let (a, b, p, id) =
                parsed.ok_or_else(|| Error::parse(path, k + 1, "expected a, b, prob, scorer"))?;
            cache.insert(StatementId(a), StatementId(b), id, p);
        }
        Ok(cache)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        for ((id, a, b), p) in &self.map {
            writeln!(w, "{a}\t{b}\t{p}\t{id}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

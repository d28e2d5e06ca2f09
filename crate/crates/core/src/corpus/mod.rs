//! Interaction data: statements, user–item interactions, temporal splits and
//! the statement universes derived from them.

mod io;
mod split;
mod universe;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    ingest, load_interactions, read_canonical, read_interactions_jsonl, read_statements_tsv,
    write_canonical, write_interactions_jsonl, write_raw_jsonl, LoadReport, RawInteraction,
    RawStatement,
};
pub use split::{temporal_split, validate_split, SplitDataset};
pub use universe::UniverseIndex;

/// Dense statement identifier, assigned in first-seen corpus order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct StatementId(pub u32);

impl StatementId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StatementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Sentiment label attached to every statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Pos,
    Neg,
    Neu,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Pos, Polarity::Neg, Polarity::Neu];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Pos => "pos",
            Polarity::Neg => "neg",
            Polarity::Neu => "neu",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pos" | "positive" => Ok(Polarity::Pos),
            "neg" | "negative" => Ok(Polarity::Neg),
            "neu" | "neutral" => Ok(Polarity::Neu),
            other => Err(Error::validation(format!("unknown polarity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub id: StatementId,
    pub text: String,
    pub polarity: Polarity,
}

/// One user–item event. `statements` is kept sorted and duplicate-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
    #[serde(default)]
    pub rating: Option<f64>,
    pub statements: Vec<StatementId>,
}

impl Interaction {
    pub fn key(&self) -> (&str, &str) {
        (&self.user, &self.item)
    }
}

/// A validated corpus. Statement ids are dense: `statements[k].id == k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub statements: Vec<Statement>,
    pub interactions: Vec<Interaction>,
}

impl Dataset {
    /// Builds a dataset and checks every invariant.
    pub fn new(statements: Vec<Statement>, interactions: Vec<Interaction>) -> Result<Self> {
        let d = Dataset {
            statements,
            interactions,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, s) in self.statements.iter().enumerate() {
            if s.id.index() != k {
                return Err(Error::validation(format!(
                    "statement table is not dense: row {k} carries id {}",
                    s.id.0
                )));
            }
            if s.text.trim().is_empty() {
                return Err(Error::validation(format!("statement {} has empty text", s.id)));
            }
        }
        let mut seen = HashSet::with_capacity(self.interactions.len());
        for it in &self.interactions {
            if !seen.insert(it.key()) {
                return Err(Error::validation(format!(
                    "duplicate interaction for (user={}, item={})",
                    it.user, it.item
                )));
            }
            if it.statements.is_empty() {
                return Err(Error::validation(format!(
                    "interaction (user={}, item={}) has no statements",
                    it.user, it.item
                )));
            }
            if it.statements.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::validation(format!(
                    "interaction (user={}, item={}) statement ids are not sorted and distinct",
                    it.user, it.item
                )));
            }
            if let Some(bad) = it
                .statements
                .iter()
                .find(|s| s.index() >= self.statements.len())
            {
                return Err(Error::validation(format!(
                    "interaction (user={}, item={}) references unknown statement {bad}",
                    it.user, it.item
                )));
            }
        }
        Ok(())
    }

    pub fn statement(&self, id: StatementId) -> Option<&Statement> {
        self.statements.get(id.index())
    }

    pub fn polarity(&self, id: StatementId) -> Polarity {
        self.statements[id.index()].polarity
    }

    pub fn users(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.interactions.iter().map(|i| i.user.as_str()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn items(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.interactions.iter().map(|i| i.item.as_str()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Number of (user, item, statement) triplets.
    pub fn triplet_count(&self) -> usize {
        self.interactions.iter().map(|i| i.statements.len()).sum()
    }

    /// Sorted ids of the statements referenced by at least one interaction.
    pub fn referenced_statements(&self) -> Vec<StatementId> {
        let mut used = vec![false; self.statements.len()];
        for it in &self.interactions {
            for s in &it.statements {
                used[s.index()] = true;
            }
        }
        used.iter()
            .enumerate()
            .filter(|(_, &u)| u)
            .map(|(k, _)| StatementId(k as u32))
            .collect()
    }
}

/// Collapses runs of whitespace (tabs and newlines included) into single spaces.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

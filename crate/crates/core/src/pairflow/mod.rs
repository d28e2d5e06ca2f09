//! Candidate paraphrase pairs and their two-stage validation: a cosine gate
//! over neighbor lists, then a pairwise paraphrase scorer.

mod cache;
mod scorer;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::Serialize;

use crate::ann::{AnnIndex, NeighborRecord};
use crate::corpus::{Polarity, Statement, StatementId};
use crate::error::{Error, Result};
use crate::http::run_bounded;

pub use cache::ScoreCache;
pub use scorer::{ConstantScorer, CosineSquashScorer, HttpScorer, PairText, ParaphraseScorer};

pub const DEFAULT_TAU_PAIR: f64 = 0.9;
pub const DEFAULT_SCORER_THRESHOLD: f64 = 0.9;

/// Unordered statement pair stored as `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidatePair {
    pub a: StatementId,
    pub b: StatementId,
    pub cosine: f32,
}

impl CandidatePair {
    pub fn key(&self) -> (StatementId, StatementId) {
        (self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredPair {
    pub pair: CandidatePair,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidatedPairSet {
    pub pairs: Vec<ScoredPair>,
    pub scorer_id: String,
}

impl ValidatedPairSet {
    pub fn edges(&self) -> impl Iterator<Item = (StatementId, StatementId)> + '_ {
        self.pairs.iter().map(|p| p.pair.key())
    }
}

/// Canonicalizes neighbor records into deduplicated pairs whose cosine is at
/// least `tau_pair` (compared at f32 precision), sorted by `(a, b)`. Self pairs are ignored; a pair whose
/// endpoints carry different polarities is an error.
pub fn candidates_from_neighbors(
    records: impl IntoIterator<Item = NeighborRecord>,
    polarities: &[Polarity],
    tau_pair: f64,
) -> Result<Vec<CandidatePair>> {
    let mut pairs: BTreeMap<(StatementId, StatementId), f32> = BTreeMap::new();
    for r in records {
        if r.query == r.neighbor || r.cosine < tau_pair as f32 {
            continue;
        }
        let pol = |s: StatementId| {
            polarities
                .get(s.index())
                .copied()
                .ok_or_else(|| Error::validation(format!("neighbor record names unknown statement {s}")))
        };
        if pol(r.query)? != pol(r.neighbor)? {
            return Err(Error::validation(format!(
                "cross-polarity neighbor pair ({}, {})",
                r.query, r.neighbor
            )));
        }
        let key = if r.query < r.neighbor {
            (r.query, r.neighbor)
        } else {
            (r.neighbor, r.query)
        };
        pairs.entry(key).or_insert(r.cosine);
    }
    Ok(pairs
        .into_iter()
        .map(|((a, b), cosine)| CandidatePair { a, b, cosine })
        .collect())
}

/// First gate: union of same-polarity top-`k` neighbors with cosine at least
/// `tau_pair`.
pub fn form_candidate_pairs(index: &AnnIndex<'_>, k: usize, tau_pair: f64) -> Vec<CandidatePair> {
    let lists = index.query_all(k);
    let records = lists.iter().enumerate().flat_map(|(q, list)| {
        list.iter().map(move |n| NeighborRecord {
            query: StatementId(q as u32),
            neighbor: n.id,
            cosine: n.cosine,
        })
    });
    candidates_from_neighbors(records, index.store().polarities(), tau_pair)
        .expect("index partitions are polarity-pure")
}

#[derive(Debug, Clone)]
pub struct FilterOptions {
    pub threshold: f64,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            threshold: DEFAULT_SCORER_THRESHOLD,
            batch_size: 32,
            max_in_flight: 4,
        }
    }
}

/// Second gate: keeps pairs whose scorer probability is strictly greater than
/// the threshold. The scorer sees `(text_a, text_b)` in id order, once per
/// pair not already in `cache`.
pub fn filter_pairs(
    candidates: &[CandidatePair],
    statements: &[Statement],
    scorer: &dyn ParaphraseScorer,
    opts: &FilterOptions,
    cache: &mut ScoreCache,
) -> Result<ValidatedPairSet> {
    let scorer_id = scorer.id();
    let text = |s: StatementId| -> Result<&str> {
        statements
            .get(s.index())
            .map(|st| st.text.as_str())
            .ok_or_else(|| Error::validation(format!("pair names unknown statement {s}")))
    };

    let mut todo: Vec<PairText<'_>> = Vec::new();
    for p in candidates {
        if cache.get(p.a, p.b, &scorer_id).is_none() {
            todo.push(PairText {
                a: p.a,
                b: p.b,
                text_a: text(p.a)?,
                text_b: text(p.b)?,
                cosine: p.cosine,
            });
        }
    }
    todo.dedup_by_key(|p| (p.a, p.b));

    let batches: Vec<&[PairText<'_>]> = todo.chunks(opts.batch_size.max(1)).collect();
    let results = run_bounded(&batches, opts.max_in_flight, |_, batch| scorer.score(batch));
    let mut unscored = Vec::new();
    let mut first_error = None;
    for (batch, res) in batches.iter().zip(results) {
        match res {
            Ok(probs) if probs.len() == batch.len() => {
                for (p, prob) in batch.iter().zip(probs) {
                    if !(0.0..=1.0).contains(&prob) {
                        return Err(Error::provider(format!(
                            "scorer returned probability {prob} for pair ({}, {})",
                            p.a, p.b
                        )));
                    }
                    cache.insert(p.a, p.b, &scorer_id, prob);
                }
            }
            Ok(probs) => {
                return Err(Error::provider(format!(
                    "scorer returned {} probabilities for {} pairs",
                    probs.len(),
                    batch.len()
                )))
            }
            Err(e) => {
                unscored.extend(batch.iter().map(|p| format!("({}, {})", p.a, p.b)));
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        let shown = unscored.iter().take(20).cloned().collect::<Vec<_>>().join(", ");
        let more = unscored.len().saturating_sub(20);
        return Err(Error::provider(format!(
            "{} pairs unscored [{shown}{}]: {e}",
            unscored.len(),
            if more > 0 { format!(", +{more} more") } else { String::new() }
        )));
    }

    let pairs = candidates
        .iter()
        .filter_map(|p| {
            let prob = cache.get(p.a, p.b, &scorer_id).expect("scored above");
            (prob > opts.threshold).then_some(ScoredPair { pair: *p, prob })
        })
        .collect();
    Ok(ValidatedPairSet { pairs, scorer_id })
}

/// Writes `a`, `b`, `cosine`, `prob` rows (no header).
pub fn write_pairs_tsv(path: impl AsRef<Path>, set: &ValidatedPairSet) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for p in &set.pairs {
        writeln!(w, "{}\t{}\t{}\t{}", p.pair.a.0, p.pair.b.0, p.pair.cosine, p.prob)
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pairs_tsv(path: impl AsRef<Path>) -> Result<Vec<ScoredPair>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::parse(path, k + 1, m.to_string());
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad("expected 4 tab-separated fields"));
        }
        let a: u32 = f[0].parse().map_err(|_| bad("bad id"))?;
        let b: u32 = f[1].parse().map_err(|_| bad("bad id"))?;
        if a >= b {
            return Err(bad("pair ids must satisfy a < b"));
        }
        out.push(ScoredPair {
            pair: CandidatePair {
                a: StatementId(a),
                b: StatementId(b),
                cosine: f[2].parse().map_err(|_| bad("bad cosine"))?,
            },
            prob: f[3].parse().map_err(|_| bad("bad probability"))?,
        });
    }
    Ok(out)
}

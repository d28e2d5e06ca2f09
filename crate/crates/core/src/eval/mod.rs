//! Ranking evaluation: candidate sets per regime, P@k / R@k / NDCG@k per
//! interaction, fixed-order aggregation and paired significance tests.

mod report;
mod stats;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Interaction, StatementId, UniverseIndex};
use crate::error::{Error, Result};
use crate::rank::{rank_topk, Scorer};

pub use report::{parse_markdown_table, to_markdown, write_report, ReportFormat};
pub use stats::{ln_gamma, paired_ttest, reg_incomplete_beta, stars, student_t_two_sided, TTest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// Every statement in the dataset is a candidate.
    #[default]
    Global,
    /// Only the statements attached to the target item are candidates.
    Item,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Validation,
    #[default]
    Test,
}

/// NDCG normalizer. `Displayed` sums `1/log2(j+1)` over all `k` positions
/// regardless of the number of relevant statements; `Ideal` truncates at
/// `min(k, |truth|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalizer {
    #[default]
    Displayed,
    Ideal,
}

macro_rules! lowercase_enum_str {
    ($t:ty, $($v:ident => $s:literal),+) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(<$t>::$v => $s),+ })
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($s => Ok(<$t>::$v),)+
                    other => Err(Error::validation(format!(
                        "unknown {} '{other}'", stringify!($t).to_ascii_lowercase()
                    ))),
                }
            }
        }
    };
}

lowercase_enum_str!(Level, Global => "global", Item => "item");
lowercase_enum_str!(EvalSplit, Validation => "validation", Test => "test");
lowercase_enum_str!(Normalizer, Displayed => "displayed", Ideal => "ideal");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub level: Level,
    pub ks: Vec<usize>,
    pub split: EvalSplit,
    #[serde(default)]
    pub normalizer: Normalizer,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            level: Level::Global,
            ks: vec![5, 10],
            split: EvalSplit::Test,
            normalizer: Normalizer::Displayed,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks[0] == 0 {
            return Err(Error::validation("ks must be non-empty positive integers"));
        }
        if self.ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("ks must be strictly increasing"));
        }
        Ok(())
    }

    pub fn max_k(&self) -> usize {
        self.ks.last().copied().unwrap_or(0)
    }
}

pub fn candidate_set<'u>(
    _user: &str,
    item: &str,
    level: Level,
    universe: &'u UniverseIndex,
) -> &'u [StatementId] {
    match level {
        Level::Global => &universe.global,
        Level::Item => universe.item(item),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "P")]
    Precision,
    #[serde(rename = "R")]
    Recall,
    #[serde(rename = "NDCG")]
    Ndcg,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Precision, Metric::Recall, Metric::Ndcg];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Precision => "P",
            Metric::Recall => "R",
            Metric::Ndcg => "NDCG",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtK {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
}

impl AtK {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::Ndcg => self.ndcg,
        }
    }
}

fn discount(j: usize) -> f64 {
    1.0 / ((j + 1) as f64).log2()
}

/// Binary-relevance P@k, R@k and NDCG@k for one ranked list. Positions past
/// the end of `ranked` count as non-relevant.
pub fn eval_interaction(
    ranked: &[StatementId],
    truth: &[StatementId],
    ks: &[usize],
    normalizer: Normalizer,
) -> Result<Vec<AtK>> {
    let mut truth = truth.to_vec();
    truth.sort_unstable();
    truth.dedup();
    if truth.is_empty() {
        return Err(Error::validation("empty ground truth"));
    }
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let rel: Vec<bool> = (0..max_k)
        .map(|j| ranked.get(j).is_some_and(|s| truth.binary_search(s).is_ok()))
        .collect();
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = rel[..k].iter().filter(|&&r| r).count() as f64;
            let dcg: f64 = (1..=k).filter(|&j| rel[j - 1]).map(discount).sum();
            let z_len = match normalizer {
                Normalizer::Displayed => k,
                Normalizer::Ideal => k.min(truth.len()),
            };
            let z: f64 = (1..=z_len).map(discount).sum();
            AtK {
                k,
                precision: hits / k as f64,
                recall: hits / truth.len() as f64,
                ndcg: dcg / z,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub name: String,
    pub means: Vec<AtK>,
    /// Per-interaction values, aligned across methods.
    pub raw: Vec<Vec<AtK>>,
}

impl MethodReport {
    pub fn mean(&self, metric: Metric, k: usize) -> Option<f64> {
        self.means.iter().find(|a| a.k == k).map(|a| a.get(metric))
    }

    pub fn column(&self, metric: Metric, k: usize) -> Vec<f64> {
        self.raw
            .iter()
            .map(|r| r.iter().find(|a| a.k == k).map_or(0.0, |a| a.get(metric)))
            .collect()
    }
}

/// Unweighted means, summed in interaction order.
pub fn aggregate(name: &str, raw: Vec<Vec<AtK>>, ks: &[usize]) -> MethodReport {
    let n = raw.len().max(1) as f64;
    let means = ks
        .iter()
        .enumerate()
        .map(|(c, &k)| {
            let (mut p, mut r, mut g) = (0.0f64, 0.0f64, 0.0f64);
            for row in &raw {
                p += row[c].precision;
                r += row[c].recall;
                g += row[c].ndcg;
            }
            AtK {
                k,
                precision: p / n,
                recall: r / n,
                ndcg: g / n,
            }
        })
        .collect();
    MethodReport {
        name: name.to_string(),
        means,
        raw,
    }
}

/// Paired test of the best method in a column against the runner-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTest {
    pub metric: Metric,
    pub k: usize,
    pub best: String,
    pub runner_up: String,
    pub test: TTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: EvalConfig,
    pub n_interactions: usize,
    /// Interactions without any candidate at the chosen level.
    pub skipped: usize,
    pub methods: Vec<MethodReport>,
    pub significance: Vec<ColumnTest>,
}

impl MetricsReport {
    /// Column order used in tables: for each k, P, R, NDCG.
    pub fn columns(&self) -> Vec<(Metric, usize)> {
        self.config
            .ks
            .iter()
            .flat_map(|&k| Metric::ALL.iter().map(move |&m| (m, k)))
            .collect()
    }

    /// Index of the method with the highest mean in a column (first on ties).
    pub fn best(&self, metric: Metric, k: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (idx, m) in self.methods.iter().enumerate() {
            let v = m.mean(metric, k)?;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((idx, v));
            }
        }
        best.map(|b| b.0)
    }

    pub fn test_for(&self, metric: Metric, k: usize) -> Option<&ColumnTest> {
        self.significance
            .iter()
            .find(|t| t.metric == metric && t.k == k)
    }
}

fn significance(methods: &[MethodReport], columns: &[(Metric, usize)]) -> Result<Vec<ColumnTest>> {
    let mut out = Vec::new();
    if methods.len() < 2 || methods[0].raw.len() < 2 {
        return Ok(out);
    }
    for &(metric, k) in columns {
        let mut order: Vec<usize> = (0..methods.len()).collect();
        // stable: ties keep method order
        order.sort_by(|&a, &b| {
            methods[b]
                .mean(metric, k)
                .unwrap_or(0.0)
                .total_cmp(&methods[a].mean(metric, k).unwrap_or(0.0))
        });
        let (best, second) = (&methods[order[0]], &methods[order[1]]);
        out.push(ColumnTest {
            metric,
            k,
            best: best.name.clone(),
            runner_up: second.name.clone(),
            test: paired_ttest(&best.column(metric, k), &second.column(metric, k))?,
        });
    }
    Ok(out)
}

/// Builds a report from already aggregated methods.
pub fn build_report(
    config: &EvalConfig,
    methods: Vec<MethodReport>,
    skipped: usize,
) -> Result<MetricsReport> {
    let n = methods.first().map_or(0, |m| m.raw.len());
    if methods.iter().any(|m| m.raw.len() != n) {
        return Err(Error::validation("methods were evaluated on different interactions"));
    }
    let mut report = MetricsReport {
        config: config.clone(),
        n_interactions: n,
        skipped,
        methods,
        significance: Vec::new(),
    };
    report.significance = significance(&report.methods, &report.columns())?;
    Ok(report)
}

/// Ranks and scores every target interaction with every scorer.
pub fn evaluate(
    targets: &[Interaction],
    universe: &UniverseIndex,
    scorers: &[&dyn Scorer],
    config: &EvalConfig,
) -> Result<MetricsReport> {
    config.validate()?;
    let rows: Vec<Option<Vec<Vec<AtK>>>> = targets
        .par_iter()
        .map(|it| {
            let cands = candidate_set(&it.user, &it.item, config.level, universe);
            if cands.is_empty() {
                return Ok(None);
            }
            scorers
                .iter()
                .map(|sc| {
                    let scores = sc.score(&it.user, &it.item, cands);
                    let ranked = rank_topk(&it.user, &it.item, cands, &scores, config.max_k())?;
                    eval_interaction(&ranked.order, &it.statements, &config.ks, config.normalizer)
                })
                .collect::<Result<Vec<_>>>()
                .map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    let skipped = rows.iter().filter(|r| r.is_none()).count();
    if skipped > 0 {
        log::warn!("{skipped} interactions have no candidates at {} level", config.level);
    }
    let kept: Vec<Vec<Vec<AtK>>> = rows.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::validation("no interaction could be evaluated"));
    }
    let methods = scorers
        .iter()
        .enumerate()
        .map(|(m, sc)| aggregate(&sc.name(), kept.iter().map(|r| r[m].clone()).collect(), &config.ks))
        .collect();
    build_report(config, methods, skipped)
}

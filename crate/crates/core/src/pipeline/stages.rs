//! Pipeline stages as file-to-file functions, shared by the runner and the
//! single-stage CLI commands.
//!
//! A dataset directory holds `statements.tsv` and `interactions.jsonl`; a
//! split directory holds `train.jsonl`, `validation.jsonl` and `test.jsonl`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ann::{read_neighbors, write_neighbors, AnnIndex, Backend};
use crate::clustmetrics::{quality_report, reduction_stats, ClusterQualityReport, DistancePower, ReductionStats};
use crate::corpus::{
    load_interactions, read_canonical, read_interactions_jsonl, read_statements_tsv, temporal_split,
    validate_split, write_canonical, write_interactions_jsonl, write_raw_jsonl, Dataset,
    Interaction, LoadReport, SplitDataset, UniverseIndex,
};
use crate::embed::{embed_statements, EmbedOptions, EmbeddingProvider, EmbeddingStore};
use crate::error::{Error, Result};
use crate::eval::{evaluate, write_report, EvalConfig, EvalSplit, Level, MetricsReport, ReportFormat};
use crate::extract::{extract_corpus, read_reviews_jsonl, ExtractReport, GenerationProvider, PromptTemplates};
use crate::pairflow::{
    candidates_from_neighbors, filter_pairs, read_pairs_tsv, write_pairs_tsv, FilterOptions,
    ParaphraseScorer, ScoreCache,
};
use crate::rank::{
    fit_popularity, load_external_scores, rank_topk, write_rankings_jsonl, BaselineScorer,
    ExternalScores, Method, PopularityModel, RankedList, Scorer,
};
use crate::refine::{cluster_statements, consolidate, ClusterMap, ConsolidationReport, RefineParams};

pub const STATEMENTS_FILE: &str = "statements.tsv";
pub const INTERACTIONS_FILE: &str = "interactions.jsonl";

pub fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let body = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_dataset_dir(dir: &Path) -> Result<Dataset> {
    read_canonical(dir.join(STATEMENTS_FILE), dir.join(INTERACTIONS_FILE))
}

pub fn write_dataset_dir(dir: &Path, d: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_canonical(dir.join(STATEMENTS_FILE), dir.join(INTERACTIONS_FILE), d)
}

pub fn split_file(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.jsonl"))
}

pub fn read_split(dir: &Path, split: &str) -> Result<Vec<Interaction>> {
    read_interactions_jsonl(split_file(dir, split))
}

pub fn extract(
    reviews: &Path,
    generator: &dyn GenerationProvider,
    templates: &PromptTemplates,
    max_in_flight: usize,
    out: &Path,
) -> Result<ExtractReport> {
    let records = read_reviews_jsonl(reviews)?;
    let (corpus, report) = extract_corpus(&records, generator, templates, max_in_flight)?;
    ensure_parent(out)?;
    write_raw_jsonl(out, &corpus)?;
    Ok(report)
}

/// Loads the interaction corpus, writes its canonical form to `dataset_dir`
/// and the embeddings to `store_path`.
pub fn embed(
    corpus: &Path,
    provider: &dyn EmbeddingProvider,
    opts: &EmbedOptions,
    dataset_dir: &Path,
    store_path: &Path,
) -> Result<(LoadReport, EmbeddingStore)> {
    let (dataset, report) = load_interactions(corpus)?;
    write_dataset_dir(dataset_dir, &dataset)?;
    let store = embed_statements(&dataset.statements, provider, opts)?;
    ensure_parent(store_path)?;
    store.save(store_path)?;
    Ok((report, store))
}

pub fn ann(store_path: &Path, k: usize, backend: &Backend, out: &Path) -> Result<usize> {
    let store = EmbeddingStore::load(store_path)?;
    let index = AnnIndex::build(&store, backend)?;
    let lists = index.query_all(k);
    ensure_parent(out)?;
    write_neighbors(out, &lists)?;
    Ok(lists.iter().map(Vec::len).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairsSummary {
    pub candidates: usize,
    pub validated: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn pairs(
    neighbors: &Path,
    store_path: &Path,
    statements: &Path,
    tau_pair: f64,
    scorer: &dyn ParaphraseScorer,
    opts: &FilterOptions,
    cache_path: Option<&Path>,
    out: &Path,
) -> Result<PairsSummary> {
    let store = EmbeddingStore::load(store_path)?;
    let table = read_statements_tsv(statements)?;
    if table.len() != store.len() {
        return Err(Error::validation(format!(
            "{} statements but {} embeddings",
            table.len(),
            store.len()
        )));
    }
    let cands = candidates_from_neighbors(read_neighbors(neighbors)?, store.polarities(), tau_pair)?;
    let mut cache = match cache_path {
        Some(p) => ScoreCache::load(p)?,
        None => ScoreCache::default(),
    };
    let validated = filter_pairs(&cands, &table, scorer, opts, &mut cache)?;
    if let Some(p) = cache_path {
        ensure_parent(p)?;
        cache.save(p)?;
    }
    ensure_parent(out)?;
    write_pairs_tsv(out, &validated)?;
    Ok(PairsSummary {
        candidates: cands.len(),
        validated: validated.pairs.len(),
    })
}

pub fn cluster(store_path: &Path, pairs: &Path, params: &RefineParams, out: &Path) -> Result<ClusterMap> {
    let store = EmbeddingStore::load(store_path)?;
    let edges: Vec<_> = read_pairs_tsv(pairs)?.iter().map(|p| (p.pair.a, p.pair.b)).collect();
    let map = cluster_statements(&store, edges, params)?;
    ensure_parent(out)?;
    map.write_jsonl(out)?;
    Ok(map)
}

pub fn clustmetrics(
    store_path: &Path,
    clusters: &Path,
    power: DistancePower,
    out: &Path,
) -> Result<ClusterQualityReport> {
    let store = EmbeddingStore::load(store_path)?;
    let map = ClusterMap::read_jsonl(clusters, store.len())?;
    let report = quality_report(&map, &store, power);
    write_json(out, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationSummary {
    pub consolidation: ConsolidationReport,
    pub reduction: ReductionStats,
}

pub fn consolidate_dataset(
    dataset_dir: &Path,
    clusters: &Path,
    out_dir: &Path,
    report: &Path,
) -> Result<ConsolidationSummary> {
    let before = read_dataset_dir(dataset_dir)?;
    let map = ClusterMap::read_jsonl(clusters, before.statements.len())?;
    let (after, consolidation) = consolidate(&before, &map)?;
    write_dataset_dir(out_dir, &after)?;
    let summary = ConsolidationSummary {
        consolidation,
        reduction: reduction_stats(&before, &after, &map),
    };
    write_json(report, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

pub fn split(dataset_dir: &Path, out_dir: &Path) -> Result<SplitSummary> {
    let d = read_dataset_dir(dataset_dir)?;
    let s: SplitDataset = temporal_split(&d);
    validate_split(&d.interactions, &s)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_interactions_jsonl(split_file(out_dir, "train"), &s.train)?;
    write_interactions_jsonl(split_file(out_dir, "validation"), &s.validation)?;
    write_interactions_jsonl(split_file(out_dir, "test"), &s.test)?;
    Ok(SplitSummary {
        train: s.train.len(),
        validation: s.validation.len(),
        test: s.test.len(),
    })
}

/// A ranking method as named on the command line: a baseline name or
/// `external:<scores.tsv>`.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    Baseline(Method),
    External(PathBuf),
}

impl MethodSpec {
    pub fn parse(spec: &str, seed: u64) -> Result<Self> {
        match spec.trim().strip_prefix("external:") {
            Some(path) if !path.is_empty() => Ok(MethodSpec::External(PathBuf::from(path))),
            Some(_) => Err(Error::validation("external method needs a score file")),
            None => Method::parse(spec, seed).map(MethodSpec::Baseline),
        }
    }

    /// Name used in reports and file names.
    pub fn name(&self) -> String {
        match self {
            MethodSpec::Baseline(m) => m.to_string(),
            MethodSpec::External(p) => format!(
                "external:{}",
                p.file_stem().and_then(|s| s.to_str()).unwrap_or("scores")
            ),
        }
    }
}

enum Owned<'m> {
    Baseline(BaselineScorer<'m>),
    External(ExternalScores),
}

impl Owned<'_> {
    fn scorer(&self) -> &dyn Scorer {
        match self {
            Owned::Baseline(b) => b,
            Owned::External(e) => e,
        }
    }
}

fn build_scorers<'m>(model: &'m PopularityModel, methods: &[MethodSpec]) -> Result<Vec<Owned<'m>>> {
    methods
        .iter()
        .map(|m| match m {
            MethodSpec::Baseline(b) => Ok(Owned::Baseline(BaselineScorer::new(model, *b))),
            MethodSpec::External(p) => load_external_scores(p).map(Owned::External),
        })
        .collect()
}

/// Ranked lists of every target interaction, one list per method.
pub fn rank(
    dataset_dir: &Path,
    split_dir: &Path,
    target: EvalSplit,
    level: Level,
    methods: &[MethodSpec],
    k: usize,
) -> Result<Vec<Vec<RankedList>>> {
    use rayon::prelude::*;
    let full = read_dataset_dir(dataset_dir)?;
    let universe = UniverseIndex::from_interactions(&full.interactions);
    let model = fit_popularity(&read_split(split_dir, "train")?);
    let targets = read_split(split_dir, &target.to_string())?;
    let owned = build_scorers(&model, methods)?;
    owned
        .iter()
        .map(|o| {
            let sc = o.scorer();
            targets
                .par_iter()
                .filter_map(|it| {
                    let cands = crate::eval::candidate_set(&it.user, &it.item, level, &universe);
                    (!cands.is_empty()).then(|| {
                        rank_topk(&it.user, &it.item, cands, &sc.score(&it.user, &it.item, cands), k)
                    })
                })
                .collect()
        })
        .collect()
}

pub fn write_rankings(path: &Path, lists: &[RankedList]) -> Result<()> {
    ensure_parent(path)?;
    write_rankings_jsonl(path, lists)
}

pub fn eval(
    dataset_dir: &Path,
    split_dir: &Path,
    methods: &[MethodSpec],
    config: &EvalConfig,
) -> Result<MetricsReport> {
    let full = read_dataset_dir(dataset_dir)?;
    let universe = UniverseIndex::from_interactions(&full.interactions);
    let model = fit_popularity(&read_split(split_dir, "train")?);
    let targets = read_split(split_dir, &config.split.to_string())?;
    let owned = build_scorers(&model, methods)?;
    let scorers: Vec<&dyn Scorer> = owned.iter().map(Owned::scorer).collect();
    evaluate(&targets, &universe, &scorers, config)
}

/// Writes `report` to `out`; a path without extension gets both a `.json`
/// and a `.md` file.
pub fn write_eval_report(out: &Path, report: &MetricsReport) -> Result<Vec<PathBuf>> {
    ensure_parent(out)?;
    if out.extension().is_some() {
        write_report(out, report, ReportFormat::from_path(out))?;
        return Ok(vec![out.to_path_buf()]);
    }
    let json = out.with_extension("json");
    let md = out.with_extension("md");
    write_report(&json, report, ReportFormat::Json)?;
    write_report(&md, report, ReportFormat::Markdown)?;
    Ok(vec![json, md])
}

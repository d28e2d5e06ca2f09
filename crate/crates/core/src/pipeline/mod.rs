//! End-to-end runner: extract → embed → ann → pairs → cluster → consolidate
//! → split → rank → eval, driven by one TOML file.
//!
//! Every stage gets a key chained from its own settings, its input files and
//! the previous stage's key. A stage is skipped when the manifest of the last
//! run in the same output directory recorded the same key and all of its
//! outputs still exist with the recorded checksums. Changing a setting
//! therefore reruns that stage and everything after it.

pub mod providers;
pub mod stages;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ann::{Backend, HnswParams, DEFAULT_K};
use crate::clustmetrics::DistancePower;
use crate::embed::EmbedOptions;
use crate::error::{Error, Result};
use crate::eval::{EvalConfig, EvalSplit, Level, Normalizer};
use crate::extract::PromptTemplates;
use crate::pairflow::{FilterOptions, DEFAULT_SCORER_THRESHOLD, DEFAULT_TAU_PAIR};
use crate::refine::{RefineParams, DEFAULT_SIZE_CAP, DEFAULT_TAU_INTRA, DEFAULT_TAU_REMERGE};
use stages::MethodSpec;

pub const STAGES: [&str; 9] = [
    "extract",
    "embed",
    "ann",
    "pairs",
    "cluster",
    "consolidate",
    "split",
    "rank",
    "eval",
];

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out_dir: PathBuf,
    /// Worker threads for data-parallel work; 0 uses all cores.
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            out_dir: PathBuf::from("run"),
            threads: 0,
        }
    }
}

/// Exactly one of `reviews` (raw review text, extraction runs) or `corpus`
/// (interaction JSONL with statements, copied through).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    pub reviews: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    pub provider: String,
    pub max_in_flight: usize,
    pub max_tokens: u32,
    pub extract_template: Option<PathBuf>,
    pub verify_template: Option<PathBuf>,
}

impl Default for ExtractSection {
    fn default() -> Self {
        ExtractSection {
            provider: "mock".into(),
            max_in_flight: 4,
            max_tokens: PromptTemplates::default().max_tokens,
            extract_template: None,
            verify_template: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub provider: String,
    /// Only used by the mock provider.
    pub dim: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for EmbedSection {
    fn default() -> Self {
        let o = EmbedOptions::default();
        EmbedSection {
            provider: "mock".into(),
            dim: 64,
            seed: 0,
            batch_size: o.batch_size,
            max_in_flight: o.max_in_flight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnSection {
    pub k: usize,
    /// `exact` or `approximate`.
    pub backend: String,
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for AnnSection {
    fn default() -> Self {
        let h = HnswParams::default();
        AnnSection {
            k: DEFAULT_K,
            backend: "exact".into(),
            m: h.m,
            ef_construction: h.ef_construction,
            ef_search: h.ef_search,
            seed: h.seed,
        }
    }
}

impl AnnSection {
    pub fn backend(&self) -> Result<Backend> {
        match self.backend.as_str() {
            "exact" => Ok(Backend::Exact),
            "approximate" | "hnsw" => Ok(Backend::Approximate(HnswParams {
                m: self.m,
                ef_construction: self.ef_construction,
                ef_search: self.ef_search,
                seed: self.seed,
            })),
            other => Err(Error::validation(format!("unknown ann backend '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairsSection {
    pub tau_pair: f64,
    pub scorer: String,
    pub threshold: f64,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for PairsSection {
    fn default() -> Self {
        let o = FilterOptions::default();
        PairsSection {
            tau_pair: DEFAULT_TAU_PAIR,
            scorer: "mock".into(),
            threshold: DEFAULT_SCORER_THRESHOLD,
            batch_size: o.batch_size,
            max_in_flight: o.max_in_flight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub tau_intra: f64,
    pub tau_remerge: f64,
    pub size_cap: usize,
    /// Squared distances in the quality report.
    pub squared_distance: bool,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            tau_intra: DEFAULT_TAU_INTRA,
            tau_remerge: DEFAULT_TAU_REMERGE,
            size_cap: DEFAULT_SIZE_CAP,
            squared_distance: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSection {
    pub methods: Vec<String>,
    /// Score files consumed as `external:<path>` methods.
    pub external: Vec<PathBuf>,
    pub seed: u64,
    pub level: Level,
    pub top_k: usize,
}

impl Default for RankSection {
    fn default() -> Self {
        RankSection {
            methods: ["userpop", "itempop", "globalpop", "random"]
                .map(String::from)
                .to_vec(),
            external: Vec::new(),
            seed: 0,
            level: Level::Item,
            top_k: 10,
        }
    }
}

impl RankSection {
    pub fn specs(&self) -> Result<Vec<MethodSpec>> {
        let mut out = self
            .methods
            .iter()
            .map(|m| MethodSpec::parse(m, self.seed))
            .collect::<Result<Vec<_>>>()?;
        out.extend(self.external.iter().cloned().map(MethodSpec::External));
        if out.is_empty() {
            return Err(Error::validation("no ranking methods configured"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub levels: Vec<Level>,
    pub ks: Vec<usize>,
    pub split: EvalSplit,
    pub normalizer: Normalizer,
}

impl Default for EvalSection {
    fn default() -> Self {
        let c = EvalConfig::default();
        EvalSection {
            levels: vec![Level::Global, Level::Item],
            ks: c.ks,
            split: c.split,
            normalizer: c.normalizer,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub run: RunSection,
    pub input: InputSection,
    pub extract: ExtractSection,
    pub embed: EmbedSection,
    pub ann: AnnSection,
    pub pairs: PairsSection,
    pub cluster: ClusterSection,
    pub rank: RankSection,
    pub eval: EvalSection,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))
    }

    /// Reads a config file; relative paths are taken relative to its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.run.out_dir);
        for p in [&mut self.input.reviews, &mut self.input.corpus]
            .into_iter()
            .chain([&mut self.extract.extract_template, &mut self.extract.verify_template])
            .flatten()
        {
            resolve(base, p);
        }
        for p in &mut self.rank.external {
            resolve(base, p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.input.reviews, &self.input.corpus) {
            (Some(_), Some(_)) => return Err(Error::validation("set only one of input.reviews and input.corpus")),
            (None, None) => return Err(Error::validation("set input.reviews or input.corpus")),
            _ => {}
        }
        self.ann.backend()?;
        self.rank.specs()?;
        self.eval_config(Level::Global).validate()?;
        if self.eval.levels.is_empty() {
            return Err(Error::validation("eval.levels is empty"));
        }
        if self.ann.k == 0 || self.rank.top_k == 0 {
            return Err(Error::validation("ann.k and rank.top_k must be positive"));
        }
        Ok(())
    }

    pub fn templates(&self) -> Result<PromptTemplates> {
        let mut t = PromptTemplates {
            max_tokens: self.extract.max_tokens,
            ..PromptTemplates::default()
        };
        if let Some(p) = &self.extract.extract_template {
            t.extract = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        }
        if let Some(p) = &self.extract.verify_template {
            t.verify = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        }
        t.validate()?;
        Ok(t)
    }

    pub fn eval_config(&self, level: Level) -> EvalConfig {
        EvalConfig {
            level,
            ks: self.eval.ks.clone(),
            split: self.eval.split,
            normalizer: self.eval.normalizer,
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            k: self.ann.k,
            tau_pair: self.pairs.tau_pair,
            cross_threshold: self.pairs.threshold,
            tau_intra: self.cluster.tau_intra,
            tau_remerge: self.cluster.tau_remerge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub k: usize,
    pub tau_pair: f64,
    pub cross_threshold: f64,
    pub tau_intra: f64,
    pub tau_remerge: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub embed: u64,
    pub ann: u64,
    pub rank: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub key: String,
    pub status: StageStatus,
    pub seconds: f64,
    /// Output path (relative to the run directory) to sha256.
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub summary: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub thresholds: Thresholds,
    pub seeds: Seeds,
    pub threads: usize,
    /// Input path to sha256.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Output files of a stage, relative to the run directory.
pub fn stage_outputs(stage: &str, cfg: &PipelineConfig) -> Result<Vec<String>> {
    let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    Ok(match stage {
        "extract" => v(&["corpus.jsonl", "extract_report.json"]),
        "embed" => v(&["dataset/statements.tsv", "dataset/interactions.jsonl", "store.bin", "store.bin.json", "load_report.json"]),
        "ann" => v(&["neighbors.bin"]),
        "pairs" => v(&["pairs.tsv", "pairs_summary.json"]),
        "cluster" => v(&["clusters.jsonl", "quality.json"]),
        "consolidate" => v(&[
            "consolidated/statements.tsv",
            "consolidated/interactions.jsonl",
            "consolidation.json",
        ]),
        "split" => v(&["split/train.jsonl", "split/validation.jsonl", "split/test.jsonl"]),
        "rank" => cfg
            .rank
            .specs()?
            .iter()
            .map(|m| format!("rankings/{}.jsonl", file_safe(&m.name())))
            .collect(),
        "eval" => cfg
            .eval
            .levels
            .iter()
            .flat_map(|l| [format!("report_{l}.json"), format!("report_{l}.md")])
            .collect(),
        other => return Err(Error::validation(format!("unknown stage '{other}'"))),
    })
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Settings and input files that determine a stage's outputs.
fn stage_fingerprint(stage: &str, cfg: &PipelineConfig) -> Result<(serde_json::Value, Vec<PathBuf>)> {
    use serde_json::json;
    let mut files = Vec::new();
    let settings = match stage {
        "extract" => {
            files.extend(cfg.input.reviews.iter().chain(&cfg.input.corpus).cloned());
            files.extend(cfg.extract.extract_template.iter().chain(&cfg.extract.verify_template).cloned());
            json!({ "extract": cfg.extract, "from_reviews": cfg.input.reviews.is_some() })
        }
        "embed" => json!(cfg.embed),
        "ann" => json!(cfg.ann),
        "pairs" => json!(cfg.pairs),
        "cluster" => json!(cfg.cluster),
        "consolidate" | "split" => json!({}),
        "rank" => {
            files.extend(cfg.rank.external.iter().cloned());
            json!({ "rank": cfg.rank, "split": cfg.eval.split })
        }
        "eval" => {
            files.extend(cfg.rank.external.iter().cloned());
            json!({ "eval": cfg.eval, "methods": cfg.rank.methods, "seed": cfg.rank.seed })
        }
        other => return Err(Error::validation(format!("unknown stage '{other}'"))),
    };
    let settings = match settings {
        serde_json::Value::Object(mut m) => {
            // paths of external files enter through their checksums only
            if let Some(serde_json::Value::Object(r)) = m.get_mut("rank") {
                r.remove("external");
            }
            if let Some(serde_json::Value::Object(e)) = m.get_mut("extract") {
                e.remove("extract_template");
                e.remove("verify_template");
            }
            serde_json::Value::Object(m)
        }
        v => v,
    };
    Ok((settings, files))
}

fn stage_key(stage: &str, cfg: &PipelineConfig, prev: &str) -> Result<String> {
    let (settings, files) = stage_fingerprint(stage, cfg)?;
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(&settings)?);
    h.update([0]);
    for f in files {
        h.update(sha256_file(&f)?.as_bytes());
    }
    h.update([0]);
    h.update(prev.as_bytes());
    Ok(hex::encode(h.finalize()))
}

fn run_stage(stage: &str, cfg: &PipelineConfig) -> Result<serde_json::Value> {
    let out = &cfg.run.out_dir;
    let p = |rel: &str| out.join(rel);
    match stage {
        "extract" => {
            let corpus = p("corpus.jsonl");
            let report = if let Some(reviews) = &cfg.input.reviews {
                let gen = providers::generator(&cfg.extract.provider)?;
                stages::extract(reviews, gen.as_ref(), &cfg.templates()?, cfg.extract.max_in_flight, &corpus)?
            } else {
                let src = cfg.input.corpus.as_ref().expect("validated");
                stages::ensure_parent(&corpus)?;
                std::fs::copy(src, &corpus).map_err(|e| Error::io(src, e))?;
                Default::default()
            };
            stages::write_json(&p("extract_report.json"), &report)?;
            to_json(&report)
        }
        "embed" => {
            let e = &cfg.embed;
            let provider = providers::embedder(&e.provider, e.dim, e.seed)?;
            let opts = EmbedOptions {
                batch_size: e.batch_size,
                max_in_flight: e.max_in_flight,
            };
            let (report, store) =
                stages::embed(&p("corpus.jsonl"), provider.as_ref(), &opts, &p("dataset"), &p("store.bin"))?;
            stages::write_json(&p("load_report.json"), &report)?;
            Ok(serde_json::json!({
                "statements": store.len(),
                "dim": store.dim(),
                "provider": provider.id(),
                "load": report,
            }))
        }
        "ann" => {
            let n = stages::ann(&p("store.bin"), cfg.ann.k, &cfg.ann.backend()?, &p("neighbors.bin"))?;
            Ok(serde_json::json!({ "records": n }))
        }
        "pairs" => {
            let scorer = providers::paraphrase_scorer(&cfg.pairs.scorer)?;
            let opts = FilterOptions {
                threshold: cfg.pairs.threshold,
                batch_size: cfg.pairs.batch_size,
                max_in_flight: cfg.pairs.max_in_flight,
            };
            let s = stages::pairs(
                &p("neighbors.bin"),
                &p("store.bin"),
                &p("dataset/statements.tsv"),
                cfg.pairs.tau_pair,
                scorer.as_ref(),
                &opts,
                Some(&p("cache/pair_scores.tsv")),
                &p("pairs.tsv"),
            )?;
            stages::write_json(&p("pairs_summary.json"), &s)?;
            to_json(&s)
        }
        "cluster" => {
            let c = &cfg.cluster;
            let params = RefineParams {
                tau_intra: c.tau_intra,
                tau_remerge: c.tau_remerge,
                size_cap: c.size_cap,
            };
            stages::cluster(&p("store.bin"), &p("pairs.tsv"), &params, &p("clusters.jsonl"))?;
            let power = if c.squared_distance {
                DistancePower::Squared
            } else {
                DistancePower::Linear
            };
            let q = stages::clustmetrics(&p("store.bin"), &p("clusters.jsonl"), power, &p("quality.json"))?;
            to_json(&q)
        }
        "consolidate" => {
            let s = stages::consolidate_dataset(
                &p("dataset"),
                &p("clusters.jsonl"),
                &p("consolidated"),
                &p("consolidation.json"),
            )?;
            to_json(&s.consolidation)
        }
        "split" => to_json(&stages::split(&p("consolidated"), &p("split"))?),
        "rank" => {
            let specs = cfg.rank.specs()?;
            let lists = stages::rank(
                &p("consolidated"),
                &p("split"),
                cfg.eval.split,
                cfg.rank.level,
                &specs,
                cfg.rank.top_k,
            )?;
            for (m, l) in specs.iter().zip(&lists) {
                stages::write_rankings(&p(&format!("rankings/{}.jsonl", file_safe(&m.name()))), l)?;
            }
            Ok(serde_json::json!({ "methods": specs.len(), "lists": lists.first().map_or(0, Vec::len) }))
        }
        "eval" => {
            let specs = cfg.rank.specs()?;
            let mut summary = serde_json::Map::new();
            for &level in &cfg.eval.levels {
                let r = stages::eval(&p("consolidated"), &p("split"), &specs, &cfg.eval_config(level))?;
                stages::write_eval_report(&p(&format!("report_{level}")), &r)?;
                summary.insert(
                    level.to_string(),
                    serde_json::json!({ "interactions": r.n_interactions, "skipped": r.skipped }),
                );
            }
            Ok(serde_json::Value::Object(summary))
        }
        other => Err(Error::validation(format!("unknown stage '{other}'"))),
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn write_manifest(cfg: &PipelineConfig, m: &RunManifest) -> Result<()> {
    stages::write_json(&cfg.run.out_dir.join(MANIFEST_FILE), m)
}

fn reusable(prev: Option<&StageRecord>, key: &str, outputs: &[String], out_dir: &Path) -> bool {
    let Some(prev) = prev else { return false };
    if prev.key != key || prev.status == StageStatus::Failed || prev.outputs.len() != outputs.len() {
        return false;
    }
    outputs.iter().all(|o| {
        prev.outputs
            .get(o)
            .is_some_and(|want| sha256_file(&out_dir.join(o)).is_ok_and(|got| &got == want))
    })
}

/// Runs every stage, reusing outputs of an earlier run in the same directory
/// where possible, and writes `manifest.json` after each stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.threads)
        .build()
        .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(cfg, pool.current_num_threads()))
}

fn run_in_pool(cfg: &PipelineConfig, threads: usize) -> Result<RunManifest> {
    let out_dir = &cfg.run.out_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let previous = RunManifest::read(out_dir.join(MANIFEST_FILE)).ok();

    let mut inputs = BTreeMap::new();
    let input_files = cfg
        .input
        .reviews
        .iter()
        .chain(&cfg.input.corpus)
        .chain(&cfg.extract.extract_template)
        .chain(&cfg.extract.verify_template)
        .chain(&cfg.rank.external);
    for f in input_files {
        inputs.insert(f.display().to_string(), sha256_file(f)?);
    }
    let mut manifest = RunManifest {
        config: cfg.clone(),
        thresholds: cfg.thresholds(),
        seeds: Seeds {
            embed: cfg.embed.seed,
            ann: cfg.ann.seed,
            rank: cfg.rank.seed,
        },
        threads,
        inputs,
        stages: Vec::new(),
    };

    let mut key = String::new();
    for stage in STAGES {
        key = stage_key(stage, cfg, &key)?;
        let outputs = stage_outputs(stage, cfg)?;
        let prev = previous.as_ref().and_then(|m| m.stage(stage));
        if reusable(prev, &key, &outputs, out_dir) {
            let prev = prev.expect("checked");
            log::info!("{stage}: up to date");
            manifest.stages.push(StageRecord {
                status: StageStatus::Skipped,
                seconds: 0.0,
                ..prev.clone()
            });
            write_manifest(cfg, &manifest)?;
            continue;
        }
        log::info!("{stage}: running");
        let t0 = Instant::now();
        let result = run_stage(stage, cfg).and_then(|summary| {
            let mut sums = BTreeMap::new();
            for o in &outputs {
                sums.insert(o.clone(), sha256_file(&out_dir.join(o))?);
            }
            Ok((summary, sums))
        });
        let seconds = t0.elapsed().as_secs_f64();
        match result {
            Ok((summary, sums)) => {
                manifest.stages.push(StageRecord {
                    name: stage.to_string(),
                    key: key.clone(),
                    status: StageStatus::Ran,
                    seconds,
                    outputs: sums,
                    summary,
                    error: None,
                });
                write_manifest(cfg, &manifest)?;
            }
            Err(e) => {
                manifest.stages.push(StageRecord {
                    name: stage.to_string(),
                    key: key.clone(),
                    status: StageStatus::Failed,
                    seconds,
                    outputs: BTreeMap::new(),
                    summary: serde_json::Value::Null,
                    error: Some(e.to_string()),
                });
                write_manifest(cfg, &manifest)?;
                return Err(e.in_stage(stage));
            }
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_thresholds() {
        let t = PipelineConfig::default().thresholds();
        assert_eq!(t.k, 128);
        assert_eq!(t.tau_pair, 0.9);
        assert_eq!(t.cross_threshold, 0.9);
        assert_eq!(t.tau_intra, 0.85);
        assert_eq!(t.tau_remerge, 0.90);
    }

    #[test]
    fn toml_overrides_and_rejects_unknown_keys() {
        let cfg = PipelineConfig::from_toml(
            "[input]\ncorpus = \"c.jsonl\"\n[cluster]\ntau_intra = 0.8\n[eval]\nlevels = [\"item\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.cluster.tau_intra, 0.8);
        assert_eq!(cfg.cluster.tau_remerge, 0.90);
        assert_eq!(cfg.eval.levels, vec![Level::Item]);
        assert!(cfg.validate().is_ok());
        assert!(PipelineConfig::from_toml("[cluster]\ntau = 1\n").is_err());
        assert!(PipelineConfig::default().validate().is_err());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut cfg = PipelineConfig::from_toml("[input]\nreviews = \"r.jsonl\"\n").unwrap();
        cfg.resolve_paths(Path::new("/data/x"));
        assert_eq!(cfg.input.reviews.unwrap(), PathBuf::from("/data/x/r.jsonl"));
        assert_eq!(cfg.run.out_dir, PathBuf::from("/data/x/run"));
    }

    #[test]
    fn rank_outputs_are_named_by_method() {
        let mut cfg = PipelineConfig::default();
        cfg.rank.external = vec![PathBuf::from("/tmp/model.tsv")];
        let outs = stage_outputs("rank", &cfg).unwrap();
        assert_eq!(outs.last().unwrap(), "rankings/external_model.jsonl");
        assert_eq!(outs.len(), 5);
    }
}

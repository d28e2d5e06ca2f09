use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use stmtbench::ann::Backend;
use stmtbench::clustmetrics::DistancePower;
use stmtbench::embed::EmbedOptions;
use stmtbench::eval::{EvalConfig, EvalSplit, Level, Normalizer};
use stmtbench::extract::PromptTemplates;
use stmtbench::pairflow::FilterOptions;
use stmtbench::pipeline::stages::{self, MethodSpec};
use stmtbench::pipeline::{providers, run_pipeline, AnnSection, PipelineConfig, StageStatus};
use stmtbench::refine::RefineParams;
use stmtbench::{Error, Result};

/// Statement-ranking benchmark toolkit.
#[derive(Parser)]
#[command(name = "stmtbench", version)]
struct Cli {
    /// Worker threads for data-parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract and verify statements from raw reviews.
    Extract(ExtractArgs),
    /// Canonicalize a corpus and embed its statements.
    Embed(EmbedArgs),
    /// Same-polarity top-K neighbor search.
    Ann(AnnArgs),
    /// Candidate pairs from neighbors, filtered by a paraphrase scorer.
    Pairs(PairsArgs),
    /// Cluster statements from validated pairs; optionally consolidate.
    Cluster(ClusterArgs),
    /// SSE / SSB / reduction of a cluster map.
    Clustmetrics(ClustmetricsArgs),
    /// Temporal leave-last-out split.
    Split(SplitArgs),
    /// Write ranked lists for one method.
    Rank(RankArgs),
    /// P@k, R@k and NDCG@k with significance tests.
    Eval(EvalArgs),
    /// Run the full pipeline from a TOML config.
    Run(RunArgs),
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    reviews: PathBuf,
    /// `mock` or the base URL of a generation service.
    #[arg(long, default_value = "mock")]
    provider: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long)]
    extract_template: Option<PathBuf>,
    #[arg(long)]
    verify_template: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    /// Interaction JSONL with statement texts.
    #[arg(long)]
    input: PathBuf,
    /// `mock` or the base URL of an embedding service.
    #[arg(long, default_value = "mock")]
    provider: String,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Where the canonical dataset goes (default: next to --out).
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
}

#[derive(Args)]
struct AnnArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value_t = 128)]
    k: usize,
    /// `exact` or `approximate`.
    #[arg(long, default_value = "exact")]
    backend: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PairsArgs {
    #[arg(long)]
    neighbors: PathBuf,
    /// Default: store.bin next to --neighbors.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Default: statements.tsv next to --neighbors.
    #[arg(long)]
    statements: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    tau_pair: f64,
    /// `mock` or the base URL of a pair-scoring service.
    #[arg(long, default_value = "mock")]
    scorer: String,
    #[arg(long, default_value_t = 0.9)]
    threshold: f64,
    /// Score cache reused across runs.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value_t = 0.85)]
    tau_intra: f64,
    #[arg(long, default_value_t = 0.90)]
    tau_remerge: f64,
    #[arg(long, default_value_t = 2000)]
    size_cap: usize,
    #[arg(long)]
    out: PathBuf,
    /// Dataset to consolidate onto cluster representatives.
    #[arg(long, requires = "consolidated_dir")]
    dataset_dir: Option<PathBuf>,
    #[arg(long, requires = "dataset_dir")]
    consolidated_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ClustmetricsArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
    /// Square the distances.
    #[arg(long)]
    squared: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    /// Directory with statements.tsv and interactions.jsonl.
    #[arg(long)]
    dataset_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RankArgs {
    /// Split the popularity tables are fitted on (only `train`).
    #[arg(long, default_value = "train")]
    split: String,
    /// Split whose interactions are ranked.
    #[arg(long, default_value = "test")]
    target: EvalSplit,
    #[arg(long)]
    method: String,
    /// Score file for `--method external`.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "item")]
    level: Level,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Full (consolidated) dataset, for candidate sets.
    #[arg(long)]
    dataset_dir: PathBuf,
    #[arg(long)]
    split_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, default_value = "test")]
    split: EvalSplit,
    #[arg(long, default_value = "global")]
    level: Level,
    #[arg(long, value_delimiter = ',', default_value = "5,10")]
    ks: Vec<usize>,
    /// Comma-separated; `external:<file.tsv>` for precomputed scores.
    #[arg(long, value_delimiter = ',', default_value = "userpop,itempop,globalpop,random")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "displayed")]
    normalizer: Normalizer,
    #[arg(long)]
    dataset_dir: PathBuf,
    #[arg(long)]
    split_dir: PathBuf,
    /// `.json` or `.md`; without an extension both are written.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides run.out_dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn sibling(of: &Path, name: &str) -> PathBuf {
    of.parent().unwrap_or(Path::new("")).join(name)
}

fn print(v: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract(a) => {
            let mut t = PromptTemplates::default();
            if let Some(p) = &a.extract_template {
                t.extract = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            }
            if let Some(p) = &a.verify_template {
                t.verify = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            }
            let gen = providers::generator(&a.provider)?;
            let r = stages::extract(&a.reviews, gen.as_ref(), &t, a.max_in_flight, &a.out)?;
            print(json!(r));
        }
        Command::Embed(a) => {
            let provider = providers::embedder(&a.provider, a.dim, a.seed)?;
            let opts = EmbedOptions {
                batch_size: a.batch_size,
                max_in_flight: a.max_in_flight,
            };
            let dir = a.dataset_dir.unwrap_or_else(|| sibling(&a.out, ""));
            let (report, store) = stages::embed(&a.input, provider.as_ref(), &opts, &dir, &a.out)?;
            print(json!({ "statements": store.len(), "dim": store.dim(), "load": report }));
        }
        Command::Ann(a) => {
            let backend: Backend = AnnSection {
                backend: a.backend,
                ..AnnSection::default()
            }
            .backend()?;
            let n = stages::ann(&a.store, a.k, &backend, &a.out)?;
            print(json!({ "records": n }));
        }
        Command::Pairs(a) => {
            let store = a.store.unwrap_or_else(|| sibling(&a.neighbors, "store.bin"));
            let statements = a
                .statements
                .unwrap_or_else(|| sibling(&a.neighbors, stages::STATEMENTS_FILE));
            let scorer = providers::paraphrase_scorer(&a.scorer)?;
            let opts = FilterOptions {
                threshold: a.threshold,
                ..FilterOptions::default()
            };
            let s = stages::pairs(
                &a.neighbors,
                &store,
                &statements,
                a.tau_pair,
                scorer.as_ref(),
                &opts,
                a.cache.as_deref(),
                &a.out,
            )?;
            print(json!(s));
        }
        Command::Cluster(a) => {
            let params = RefineParams {
                tau_intra: a.tau_intra,
                tau_remerge: a.tau_remerge,
                size_cap: a.size_cap,
            };
            let map = stages::cluster(&a.store, &a.pairs, &params, &a.out)?;
            let mut out = json!({ "statements": map.statement_count(), "clusters": map.len() });
            if let (Some(d), Some(c)) = (&a.dataset_dir, &a.consolidated_dir) {
                let s = stages::consolidate_dataset(d, &a.out, c, &c.join("consolidation.json"))?;
                out["consolidation"] = json!(s.consolidation);
            }
            print(out);
        }
        Command::Clustmetrics(a) => {
            let power = if a.squared {
                DistancePower::Squared
            } else {
                DistancePower::Linear
            };
            print(json!(stages::clustmetrics(&a.store, &a.clusters, power, &a.out)?));
        }
        Command::Split(a) => print(json!(stages::split(&a.dataset_dir, &a.out_dir)?)),
        Command::Rank(a) => {
            if a.split != "train" {
                return Err(Error::validation("popularity tables are fitted on the train split only"));
            }
            let spec = if a.method == "external" {
                let p = a
                    .scores
                    .ok_or_else(|| Error::validation("--method external needs --scores"))?;
                MethodSpec::External(p)
            } else {
                MethodSpec::parse(&a.method, a.seed)?
            };
            let lists = stages::rank(&a.dataset_dir, &a.split_dir, a.target, a.level, &[spec], a.k)?;
            stages::write_rankings(&a.out, &lists[0])?;
            print(json!({ "lists": lists[0].len() }));
        }
        Command::Eval(a) => {
            let config = EvalConfig {
                level: a.level,
                ks: a.ks,
                split: a.split,
                normalizer: a.normalizer,
            };
            let specs = a
                .methods
                .iter()
                .map(|m| MethodSpec::parse(m, a.seed))
                .collect::<Result<Vec<_>>>()?;
            let report = stages::eval(&a.dataset_dir, &a.split_dir, &specs, &config)?;
            let written = stages::write_eval_report(&a.out, &report)?;
            print(json!({
                "interactions": report.n_interactions,
                "skipped": report.skipped,
                "written": written,
            }));
        }
        Command::Run(a) => {
            let mut cfg = PipelineConfig::load(&a.config)?;
            if let Some(d) = a.out_dir {
                cfg.run.out_dir = d;
            }
            if cli.threads > 0 {
                cfg.run.threads = cli.threads;
            }
            let m = run_pipeline(&cfg)?;
            let stages: Vec<_> = m
                .stages
                .iter()
                .map(|s| {
                    let status = match s.status {
                        StageStatus::Ran => "ran",
                        StageStatus::Skipped => "skipped",
                        StageStatus::Failed => "failed",
                    };
                    json!({ "stage": s.name, "status": status, "seconds": s.seconds })
                })
                .collect();
            print(json!({ "out_dir": cfg.run.out_dir, "stages": stages }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if !matches!(cli.command, Command::Run(_)) && cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

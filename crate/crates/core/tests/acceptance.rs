//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};

use stmtbench::ann::{AnnIndex, Backend};
use stmtbench::clustmetrics::{sse, ssb};
use stmtbench::corpus::{
    temporal_split, validate_split, Dataset, Interaction, Polarity, SplitDataset, Statement,
    StatementId, UniverseIndex,
};
use stmtbench::embed::EmbeddingStore;
use stmtbench::eval::{
    candidate_set, eval_interaction, evaluate, paired_ttest, stars, EvalConfig, EvalSplit, Level,
    Metric, Normalizer,
};
use stmtbench::pairflow::{filter_pairs, form_candidate_pairs, ConstantScorer, FilterOptions, ScoreCache};
use stmtbench::pipeline::{run_pipeline, PipelineConfig, MANIFEST_FILE};
use stmtbench::rank::{fit_popularity, rank_topk, BaselineScorer, Method, Scorer};
use stmtbench::refine::{cluster_statements, refine_component, ClusterMap, RefineParams, SimilarityGraph};

type Outcome = Result<String, String>;

fn sid(k: u32) -> StatementId {
    StatementId(k)
}

fn check(cond: bool, ok: String, bad: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(bad)
    }
}

// ---------------------------------------------------------------- oracles

fn oracle_discount(j: usize) -> f64 {
    1.0 / ((j + 1) as f64).log2()
}

/// (P, R, NDCG) at k with binary relevance and the displayed-length normalizer.
fn oracle_metrics(ranked: &[StatementId], truth: &BTreeSet<StatementId>, k: usize) -> (f64, f64, f64) {
    let mut hits = 0.0;
    let mut dcg = 0.0;
    for j in 1..=k {
        if let Some(s) = ranked.get(j - 1) {
            if truth.contains(s) {
                hits += 1.0;
                dcg += oracle_discount(j);
            }
        }
    }
    let mut z = 0.0;
    for j in 1..=k {
        z += oracle_discount(j);
    }
    (hits / k as f64, hits / truth.len() as f64, dcg / z)
}

fn adjusted_rand_index(a: &[u32], b: &[u32]) -> f64 {
    let choose2 = |x: u64| (x * x.saturating_sub(1) / 2) as f64;
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    let mut ra: HashMap<u32, u64> = HashMap::new();
    let mut rb: HashMap<u32, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = joint.values().map(|&v| choose2(v)).sum();
    let sa: f64 = ra.values().map(|&v| choose2(v)).sum();
    let sb: f64 = rb.values().map(|&v| choose2(v)).sum();
    let total = choose2(a.len() as u64);
    let expected = sa * sb / total;
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

fn unit(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
    unit(&mut v);
    v
}

fn texts(n: usize, polarities: &[Polarity]) -> Vec<Statement> {
    (0..n)
        .map(|k| Statement {
            id: sid(k as u32),
            text: format!("statement {k}"),
            polarity: polarities[k],
        })
        .collect()
}

fn interaction(user: &str, item: &str, ts: i64, mut st: Vec<StatementId>) -> Interaction {
    st.sort_unstable();
    st.dedup();
    Interaction {
        user: user.to_string(),
        item: item.to_string(),
        timestamp: ts,
        rating: None,
        statements: st,
    }
}

// ---------------------------------------------------------------- fixtures

/// 50 users over 15 items and 60 statements, 3 to 9 interactions per user.
fn baseline_fixture() -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let n_st = 60;
    let statements = texts(n_st, &vec![Polarity::Pos; n_st]);
    let mut interactions = Vec::new();
    for u in 0..50 {
        let mut items: Vec<usize> = (0..15).collect();
        items.shuffle(&mut rng);
        let m = rng.gen_range(3..=9);
        for (t, &i) in items[..m].iter().enumerate() {
            let len = rng.gen_range(1..=5);
            let st = (0..len).map(|_| sid(rng.gen_range(0..n_st as u32))).collect();
            interactions.push(interaction(&format!("u{u:02}"), &format!("i{i:02}"), t as i64 * 10 + u, st));
        }
    }
    Dataset::new(statements, interactions).unwrap()
}

/// Users with 1 and 2 interactions, timestamp ties, and a long history.
fn small_user_fixture() -> Dataset {
    let statements = texts(4, &[Polarity::Pos; 4]);
    let i = |u: &str, it: &str, ts: i64| interaction(u, it, ts, vec![sid((ts % 4) as u32)]);
    let interactions = vec![
        i("solo", "a", 5),
        i("pair", "b", 9),
        i("pair", "a", 3),
        i("tie", "c", 1),
        i("tie", "b", 1),
        i("tie", "a", 1),
        i("long", "a", 4),
        i("long", "b", 2),
        i("long", "c", 8),
        i("long", "d", 6),
        i("long", "e", 7),
    ];
    Dataset::new(statements, interactions).unwrap()
}

/// Each user repeats one personal statement in every interaction; each item
/// contributes one of its ten pool statements.
fn personal_fixture() -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n_users, n_items, pool) = (30u32, 20u32, 10u32);
    let n_st = (n_users + n_items * pool) as usize;
    let statements = texts(n_st, &vec![Polarity::Pos; n_st]);
    let mut interactions = Vec::new();
    for u in 0..n_users {
        let mut items: Vec<u32> = (0..n_items).collect();
        items.shuffle(&mut rng);
        for (t, &i) in items[..8].iter().enumerate() {
            let pooled = n_users + i * pool + rng.gen_range(0..pool);
            interactions.push(interaction(
                &format!("u{u:02}"),
                &format!("i{i:02}"),
                t as i64,
                vec![sid(u), sid(pooled)],
            ));
        }
    }
    Dataset::new(statements, interactions).unwrap()
}

/// Five statements each present in half of all interactions among 400 rare ones.
fn frequent_fixture() -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n_st = 405;
    let statements = texts(n_st, &vec![Polarity::Pos; n_st]);
    let mut interactions = Vec::new();
    for u in 0..40 {
        for t in 0..6 {
            let mut st: Vec<StatementId> = (0..5).filter(|_| rng.gen_bool(0.5)).map(sid).collect();
            st.push(sid(rng.gen_range(5..n_st as u32)));
            interactions.push(interaction(&format!("u{u:02}"), &format!("i{:02}", (u * 7 + t * 3) % 25), t as i64, st));
        }
    }
    Dataset::new(statements, interactions).unwrap()
}

fn planar(angles: &[f64]) -> EmbeddingStore {
    let rows: Vec<Vec<f64>> = angles
        .iter()
        .map(|a| vec![a.to_radians().cos(), a.to_radians().sin()])
        .collect();
    EmbeddingStore::from_rows(&rows, vec![Polarity::Pos; angles.len()]).unwrap()
}

fn fixture_config() -> PipelineConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/pipeline.toml");
    PipelineConfig::load(path).unwrap()
}

// ---------------------------------------------------------------- criteria

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let ks = [5, 10];
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let pool: Vec<StatementId> = (0..40).map(sid).collect();
        let len = rng.gen_range(3..=20);
        let ranked: Vec<StatementId> = pool.choose_multiple(&mut rng, len).copied().collect();
        let n_truth = rng.gen_range(1..=8);
        let truth: BTreeSet<StatementId> = pool.choose_multiple(&mut rng, n_truth).copied().collect();
        let truth_vec: Vec<StatementId> = truth.iter().copied().collect();
        let got = eval_interaction(&ranked, &truth_vec, &ks, Normalizer::Displayed).map_err(|e| e.to_string())?;
        for (m, &k) in got.iter().zip(&ks) {
            let (p, r, n) = oracle_metrics(&ranked, &truth, k);
            worst = worst
                .max((m.precision - p).abs())
                .max((m.recall - r).abs())
                .max((m.ndcg - n).abs());
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-9 && elapsed < Duration::from_secs(5),
        format!("max |diff| = {worst:.3e}, {elapsed:.2?}"),
        format!("max |diff| = {worst:.3e} (limit 1e-9), {elapsed:.2?} (limit 5 s)"),
    )
}

fn ndcg_worked_example() -> Outcome {
    let ranked: Vec<StatementId> = (0..5).map(sid).collect();
    let truth = [sid(0), sid(2)];
    let got = eval_interaction(&ranked, &truth, &[5], Normalizer::Displayed).map_err(|e| e.to_string())?;
    let z5: f64 = (1..=5).map(oracle_discount).sum();
    let want = 1.5 / z5;
    let diff = (got[0].ndcg - want).abs();
    check(
        diff <= 1e-9,
        format!("NDCG@5 = {:.12} = 1.5 / {z5:.12}", got[0].ndcg),
        format!("NDCG@5 = {} vs {want}", got[0].ndcg),
    )
}

fn baseline_exactness() -> Outcome {
    let d = baseline_fixture();
    let split = temporal_split(&d);
    let model = fit_popularity(&split.train);
    let universe = UniverseIndex::from_interactions(&d.interactions);
    let count = |pred: &dyn Fn(&Interaction) -> bool, s: StatementId| -> u32 {
        split
            .train
            .iter()
            .filter(|it| pred(it) && it.statements.contains(&s))
            .count() as u32
    };
    let mut checked = 0usize;
    let mut global_order: Option<Vec<StatementId>> = None;
    for target in &split.test {
        let cands = candidate_set(&target.user, &target.item, Level::Item, &universe);
        for (method, pred) in [
            (Method::UserPop, &(|it: &Interaction| it.user == target.user) as &dyn Fn(&Interaction) -> bool),
            (Method::ItemPop, &|it: &Interaction| it.item == target.item),
            (Method::GlobalPop, &|_: &Interaction| true),
        ] {
            let got = BaselineScorer::new(&model, method).score(&target.user, &target.item, cands);
            for (&s, &g) in cands.iter().zip(&got) {
                let want = count(pred, s);
                if g != want as f64 {
                    return Err(format!("{method} ({}, {}) {s}: {g} vs {want}", target.user, target.item));
                }
                checked += 1;
            }
        }
        let all = candidate_set(&target.user, &target.item, Level::Global, &universe);
        let scores = BaselineScorer::new(&model, Method::GlobalPop).score(&target.user, &target.item, all);
        let order = rank_topk(&target.user, &target.item, all, &scores, all.len())
            .map_err(|e| e.to_string())?
            .order;
        match &global_order {
            None => global_order = Some(order),
            Some(o) if *o != order => return Err(format!("globalpop order differs for {}", target.user)),
            _ => {}
        }
    }
    check(
        split.test.len() == 50,
        format!("{checked} scores equal recounts; globalpop order identical across {} pairs", split.test.len()),
        format!("expected 50 test interactions, got {}", split.test.len()),
    )
}

fn exact_ann_oracle() -> Outcome {
    let (n, dim, k) = (10_000usize, 64usize, 128usize);
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| gaussian_unit(&mut rng, dim)).collect();
    let pols: Vec<Polarity> = (0..n)
        .map(|_| [Polarity::Pos, Polarity::Neg, Polarity::Neu][rng.gen_range(0..3)])
        .collect();
    let store = EmbeddingStore::from_rows(&rows, pols.clone()).map_err(|e| e.to_string())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let lists = pool.install(|| {
        let index = AnnIndex::build(&store, &Backend::Exact).unwrap();
        index.query_all(k)
    });
    let elapsed = start.elapsed();

    let row = |s: usize| store.row(sid(s as u32));
    let mut mismatches = 0usize;
    for q in 0..n {
        let mut scan: Vec<(f32, usize)> = (0..n)
            .filter(|&o| o != q && pols[o] == pols[q])
            .map(|o| {
                let mut acc = 0.0f64;
                for (x, y) in row(q).iter().zip(row(o)) {
                    acc += *x as f64 * *y as f64;
                }
                (acc.clamp(-1.0, 1.0) as f32, o)
            })
            .collect();
        scan.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scan.truncate(k);
        let got: Vec<(f32, usize)> = lists[q].iter().map(|nb| (nb.cosine, nb.id.index())).collect();
        if got != scan {
            mismatches += 1;
        }
    }
    check(
        mismatches == 0 && elapsed < Duration::from_secs(60),
        format!("0 mismatches over {n} queries, index+query {elapsed:.2?} on 1 thread"),
        format!("{mismatches} mismatching queries, {elapsed:.2?} (limit 60 s)"),
    )
}

struct Planted {
    store: EmbeddingStore,
    labels: Vec<u32>,
    recovered: ClusterMap,
}

fn planted() -> Planted {
    let (centers, members, dim, sigma) = (1000usize, 5usize, 256usize, 0.008);
    let mut rng = ChaCha8Rng::seed_from_u64(256);
    let mut rows = Vec::with_capacity(centers * members);
    let mut labels = Vec::with_capacity(centers * members);
    let mut pols = Vec::with_capacity(centers * members);
    for c in 0..centers {
        let center = gaussian_unit(&mut rng, dim);
        for _ in 0..members {
            let mut v: Vec<f64> = center
                .iter()
                .map(|&x| x + sigma * normal(&mut rng))
                .collect();
            unit(&mut v);
            rows.push(v);
            labels.push(c as u32);
            pols.push([Polarity::Pos, Polarity::Neg, Polarity::Neu][c % 3]);
        }
    }
    let store = EmbeddingStore::from_rows(&rows, pols.clone()).unwrap();
    let index = AnnIndex::build(&store, &Backend::Exact).unwrap();
    let candidates = form_candidate_pairs(&index, 128, 0.9);
    let statements = texts(rows.len(), &pols);
    let validated = filter_pairs(
        &candidates,
        &statements,
        &ConstantScorer(1.0),
        &FilterOptions::default(),
        &mut ScoreCache::default(),
    )
    .unwrap();
    let params = RefineParams {
        tau_intra: 0.85,
        tau_remerge: 0.90,
        size_cap: 2000,
    };
    let recovered = cluster_statements(&store, validated.edges(), &params).unwrap();
    Planted {
        store,
        labels,
        recovered,
    }
}

fn planted_recovery(p: &Planted) -> Outcome {
    let mut intra_min = f64::INFINITY;
    let mut inter_max = f64::NEG_INFINITY;
    let n = p.labels.len();
    for a in 0..n {
        for b in a + 1..n {
            let c = p.store.cosine(sid(a as u32), sid(b as u32));
            if p.labels[a] == p.labels[b] {
                intra_min = intra_min.min(c);
            } else {
                inter_max = inter_max.max(c);
            }
        }
    }
    if intra_min < 0.95 || inter_max > 0.5 {
        return Err(format!("fixture out of bounds: intra min {intra_min:.4}, inter max {inter_max:.4}"));
    }
    let ari = adjusted_rand_index(&p.labels, p.recovered.labels());
    check(
        ari == 1.0,
        format!(
            "ARI = {ari} ({} clusters; intra cos >= {intra_min:.4}, inter cos <= {inter_max:.4})",
            p.recovered.len()
        ),
        format!("ARI = {ari}, {} clusters", p.recovered.len()),
    )
}

fn refinement_trace() -> Outcome {
    let ids = |v: &[u32]| v.iter().map(|&x| sid(x)).collect::<Vec<_>>();
    // a=0, b=1, c=2, d=3 with cos(d, b) = 0.7
    let chain = planar(&[0.0, 0.0, 0.0, 0.7f64.acos().to_degrees()]);
    let g = SimilarityGraph::from_edges(4, [(sid(0), sid(1)), (sid(1), sid(2)), (sid(2), sid(3))])
        .map_err(|e| e.to_string())?;
    let got = refine_component(&ids(&[0, 1, 2, 3]), &g, &chain, 0.90);
    if got != vec![ids(&[0, 1, 2]), ids(&[3])] {
        return Err(format!("chain: {got:?}"));
    }

    let close = planar(&[0.0, 5.0, 10.0, 12.0, 3.0]);
    let g = SimilarityGraph::from_edges(5, (0..4).map(|k| (sid(k), sid(k + 1)))).map_err(|e| e.to_string())?;
    let all = ids(&[0, 1, 2, 3, 4]);
    let got = refine_component(&all, &g, &close, 0.90);
    if got != vec![all.clone()] {
        return Err(format!("all-merge: {got:?}"));
    }

    let star = planar(&[0.0; 5]);
    let g = SimilarityGraph::from_edges(5, (1..5).map(|k| (sid(0), sid(k)))).map_err(|e| e.to_string())?;
    let got = refine_component(&all, &g, &star, 0.90);
    check(
        got == vec![all.clone()],
        "chain -> {a,b,c},{d}; all-merge -> 1 cluster; star -> 1 cluster".into(),
        format!("star: {got:?}"),
    )
}

fn clustering_direction(p: &Planted) -> Outcome {
    let singles = sse(&ClusterMap::singletons(p.store.len()), &p.store);
    let rec_sse = sse(&p.recovered, &p.store);
    let rec_ssb = ssb(&p.recovered, &p.store);

    // random partition with the recovered cluster sizes
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut perm: Vec<u32> = (0..p.store.len() as u32).collect();
    perm.shuffle(&mut rng);
    let mut labels = vec![0u32; p.store.len()];
    let mut at = 0;
    for (c, cl) in p.recovered.clusters().iter().enumerate() {
        for &s in &perm[at..at + cl.members.len()] {
            labels[s as usize] = c as u32;
        }
        at += cl.members.len();
    }
    let mut groups: BTreeMap<u32, Vec<StatementId>> = BTreeMap::new();
    for (s, &c) in labels.iter().enumerate() {
        groups.entry(c).or_default().push(sid(s as u32));
    }
    let random = ClusterMap::new(
        p.store.len(),
        groups
            .into_values()
            .map(|members| stmtbench::refine::Cluster {
                representative: members[0],
                members,
                origin: stmtbench::refine::Origin::Cohesive,
            })
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let rand_ssb = ssb(&random, &p.store);
    check(
        singles == 0.0 && rec_sse < 0.01 && rec_ssb > rand_ssb,
        format!("singleton SSE = {singles}; recovered SSE = {rec_sse:.5}; SSB {rec_ssb:.5} > random {rand_ssb:.5}"),
        format!("singleton SSE = {singles}; recovered SSE = {rec_sse}; SSB {rec_ssb} vs random {rand_ssb}"),
    )
}

fn check_split(name: &str, d: &Dataset, s: &SplitDataset) -> Result<(), String> {
    validate_split(&d.interactions, s).map_err(|e| format!("{name}: {e}"))?;
    let key = |it: &Interaction| (it.user.clone(), it.item.clone());
    let mut all: Vec<_> = s.train.iter().chain(&s.validation).chain(&s.test).map(key).collect();
    let mut want: Vec<_> = d.interactions.iter().map(key).collect();
    all.sort();
    want.sort();
    if all != want {
        return Err(format!("{name}: splits do not partition the interactions"));
    }
    let mut per_user: BTreeMap<&str, (Vec<i64>, Vec<i64>, Vec<i64>)> = BTreeMap::new();
    for it in &s.train {
        per_user.entry(&it.user).or_default().0.push(it.timestamp);
    }
    for it in &s.validation {
        per_user.entry(&it.user).or_default().1.push(it.timestamp);
    }
    for it in &s.test {
        per_user.entry(&it.user).or_default().2.push(it.timestamp);
    }
    for (u, (tr, va, te)) in &per_user {
        let n = tr.len() + va.len() + te.len();
        let shape = (va.len(), te.len());
        let want_shape = match n {
            1 => (0, 0),
            2 => (0, 1),
            _ => (1, 1),
        };
        if shape != want_shape {
            return Err(format!("{name}: user {u} with {n} interactions split as {shape:?}"));
        }
        let tr_max = tr.iter().max().copied().unwrap_or(i64::MIN);
        let va_ts = va.first().copied();
        let te_ts = te.first().copied().unwrap_or(i64::MAX);
        if tr_max > va_ts.unwrap_or(tr_max) || va_ts.unwrap_or(tr_max) > te_ts || tr_max > te_ts {
            return Err(format!("{name}: user {u} violates train <= val <= test"));
        }
    }
    Ok(())
}

fn split_correctness(run_dir: &Path) -> Outcome {
    let mut fixtures = vec![
        ("baseline", baseline_fixture()),
        ("small-users", small_user_fixture()),
        ("personal", personal_fixture()),
        ("frequent", frequent_fixture()),
    ];
    let reviews = stmtbench::pipeline::stages::read_dataset_dir(&run_dir.join("consolidated"))
        .map_err(|e| e.to_string())?;
    fixtures.push(("bundled reviews", reviews));
    for (name, d) in &fixtures {
        check_split(name, d, &temporal_split(d))?;
    }
    let small = temporal_split(&fixtures[1].1);
    let solo_train_only = small.train.iter().any(|i| i.user == "solo")
        && !small.validation.iter().chain(&small.test).any(|i| i.user == "solo");
    check(
        solo_train_only,
        format!("{} fixtures partition cleanly, time-ordered, small users per rule", fixtures.len()),
        "single-interaction user left train".into(),
    )
}

fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != MANIFEST_FILE {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism(tmp: &Path) -> Outcome {
    let mut trees = Vec::new();
    for (run, threads) in [(0, 1), (1, 1), (2, 8), (3, 8)] {
        let mut cfg = fixture_config();
        cfg.run.out_dir = tmp.join(format!("det{run}"));
        cfg.run.threads = threads;
        run_pipeline(&cfg).map_err(|e| e.to_string())?;
        trees.push(read_tree(&cfg.run.out_dir));
    }
    let required = [
        "dataset/statements.tsv",
        "consolidated/statements.tsv",
        "clusters.jsonl",
        "report_item.json",
        "report_global.md",
    ];
    if let Some(r) = required.iter().find(|r| !trees[0].contains_key(Path::new(r))) {
        return Err(format!("missing output {r}"));
    }
    let same = trees.iter().all(|t| *t == trees[0]);
    check(
        same,
        format!("{} output files byte-identical across 2 runs at 1 thread and 2 at 8", trees[0].len()),
        "outputs differ between runs".into(),
    )
}

fn ttest() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for (n, shift) in [(5, 0.5), (20, 0.2), (40, 0.0), (200, 0.1), (1000, 0.05)] {
        let a: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|x: &f64| x + shift + 0.5 * normal(&mut rng))
            .collect();
        let got = paired_ttest(&a, &b).map_err(|e| e.to_string())?;
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let t = mean / (sd / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).unwrap();
        let reference = 2.0 * dist.cdf(-t.abs());
        worst = worst.max((got.p - reference).abs());
    }
    let same = [0.3, 0.1, 0.7, 0.2];
    let identical = paired_ttest(&same, &same).map_err(|e| e.to_string())?.p;
    let star_ok = stars(0.05) == ""
        && stars(0.0499) == "*"
        && stars(0.01) == "*"
        && stars(0.0099) == "**"
        && stars(0.001) == "**"
        && stars(0.00099) == "***";
    check(
        worst <= 1e-6 && identical == 1.0 && star_ok,
        format!("max |p - reference| = {worst:.2e}; identical samples p = {identical}; stars at 0.05/0.01/0.001"),
        format!("max |p diff| = {worst:.2e}, identical p = {identical}, stars ok = {star_ok}"),
    )
}

fn ndcg10(d: &Dataset, level: Level, methods: &[Method]) -> Result<Vec<f64>, String> {
    let split = temporal_split(d);
    let model = fit_popularity(&split.train);
    let universe = UniverseIndex::from_interactions(&d.interactions);
    let scorers: Vec<BaselineScorer> = methods.iter().map(|&m| BaselineScorer::new(&model, m)).collect();
    let refs: Vec<&dyn Scorer> = scorers.iter().map(|s| s as &dyn Scorer).collect();
    let config = EvalConfig {
        level,
        ks: vec![10],
        split: EvalSplit::Test,
        normalizer: Normalizer::Displayed,
    };
    let report = evaluate(&split.test, &universe, &refs, &config).map_err(|e| e.to_string())?;
    Ok(report
        .methods
        .iter()
        .map(|m| m.mean(Metric::Ndcg, 10).unwrap())
        .collect())
}

fn ranking_regimes() -> Outcome {
    let random = Method::Random { seed: 3 };
    let item = ndcg10(&personal_fixture(), Level::Item, &[Method::UserPop, Method::ItemPop, random])?;
    let global = ndcg10(&frequent_fixture(), Level::Global, &[Method::GlobalPop, random])?;
    check(
        item[0] > item[1] && item[0] > item[2] && global[0] > global[1],
        format!(
            "item NDCG@10 userpop {:.4} > itempop {:.4}, random {:.4}; global globalpop {:.4} > random {:.4}",
            item[0], item[1], item[2], global[0], global[1]
        ),
        format!("item {item:?}, global {global:?}"),
    )
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut cfg = fixture_config();
    cfg.run.out_dir = tmp.path().join("bundled");
    let bundled = run_pipeline(&cfg).map(|_| cfg.run.out_dir.clone());

    let planted = planted();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("metric oracle equivalence", Box::new(metric_oracle)),
        ("NDCG worked example", Box::new(ndcg_worked_example)),
        ("baseline exactness", Box::new(baseline_exactness)),
        ("exact ANN oracle", Box::new(exact_ann_oracle)),
        ("planted-cluster recovery", Box::new(|| planted_recovery(&planted))),
        ("refinement trace conformance", Box::new(refinement_trace)),
        ("clustering metric direction", Box::new(|| clustering_direction(&planted))),
        (
            "split correctness",
            Box::new(|| match &bundled {
                Ok(dir) => split_correctness(dir),
                Err(e) => Err(format!("bundled pipeline failed: {e}")),
            }),
        ),
        ("determinism", Box::new(|| determinism(tmp.path()))),
        ("paired t-test", Box::new(ttest)),
        ("ranking-regime sanity", Box::new(ranking_regimes)),
    ];

    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

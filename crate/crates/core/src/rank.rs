//! Statement scorers: popularity baselines, a seeded random baseline and an
//! adapter for externally computed scores.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Interaction, StatementId};
use crate::error::{Error, Result};

type Counts = BTreeMap<StatementId, u32>;

/// Set-membership counts over training interactions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PopularityModel {
    pub user_counts: BTreeMap<String, Counts>,
    pub item_counts: BTreeMap<String, Counts>,
    pub global_counts: Counts,
}

/// Fits the popularity tables. Pass only the training split.
pub fn fit_popularity(train: &[Interaction]) -> PopularityModel {
    let mut m = PopularityModel::default();
    for it in train {
        let u = m.user_counts.entry(it.user.clone()).or_default();
        for &s in &it.statements {
            *u.entry(s).or_default() += 1;
        }
        let i = m.item_counts.entry(it.item.clone()).or_default();
        for &s in &it.statements {
            *i.entry(s).or_default() += 1;
        }
        for &s in &it.statements {
            *m.global_counts.entry(s).or_default() += 1;
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    UserPop,
    ItemPop,
    GlobalPop,
    Random { seed: u64 },
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::UserPop => f.write_str("userpop"),
            Method::ItemPop => f.write_str("itempop"),
            Method::GlobalPop => f.write_str("globalpop"),
            Method::Random { .. } => f.write_str("random"),
        }
    }
}

impl Method {
    /// Parses a method name; `seed` is used for `random`.
    pub fn parse(name: &str, seed: u64) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "userpop" => Ok(Method::UserPop),
            "itempop" => Ok(Method::ItemPop),
            "globalpop" => Ok(Method::GlobalPop),
            "random" => Ok(Method::Random { seed }),
            other => Err(Error::validation(format!("unknown ranking method '{other}'"))),
        }
    }
}

/// Scores a candidate list for one (user, item) pair. Scores align with
/// `cands`.
pub trait Scorer: Send + Sync {
    fn name(&self) -> String;
    fn score(&self, user: &str, item: &str, cands: &[StatementId]) -> Vec<f64>;
}

pub struct BaselineScorer<'m> {
    pub model: &'m PopularityModel,
    pub method: Method,
}

impl<'m> BaselineScorer<'m> {
    pub fn new(model: &'m PopularityModel, method: Method) -> Self {
        BaselineScorer { model, method }
    }
}

fn lookup(table: Option<&Counts>, cands: &[StatementId]) -> Vec<f64> {
    match table {
        Some(t) => cands
            .iter()
            .map(|s| t.get(s).copied().unwrap_or(0) as f64)
            .collect(),
        None => vec![0.0; cands.len()],
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform score in `[0, 1)` determined by `(seed, user, item, statement)`.
pub fn random_score(seed: u64, user: &str, item: &str, s: StatementId) -> f64 {
    random_scores(seed, user, item, &[s])[0]
}

fn random_scores(seed: u64, user: &str, item: &str, cands: &[StatementId]) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((user.len() as u64).to_le_bytes());
    h.update(user.as_bytes());
    h.update(item.as_bytes());
    let digest = h.finalize();
    let base = u64::from_le_bytes(digest[..8].try_into().unwrap());
    cands
        .iter()
        .map(|s| {
            let x = splitmix64(base ^ splitmix64(s.0 as u64));
            (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
        })
        .collect()
}

impl Scorer for BaselineScorer<'_> {
    fn name(&self) -> String {
        self.method.to_string()
    }

    fn score(&self, user: &str, item: &str, cands: &[StatementId]) -> Vec<f64> {
        match self.method {
            Method::UserPop => lookup(self.model.user_counts.get(user), cands),
            Method::ItemPop => lookup(self.model.item_counts.get(item), cands),
            Method::GlobalPop => lookup(Some(&self.model.global_counts), cands),
            Method::Random { seed } => random_scores(seed, user, item, cands),
        }
    }
}

/// Scores read from a `user<TAB>item<TAB>statement<TAB>score` file.
/// Candidates absent from the file score negative infinity.
#[derive(Debug, Clone, Default)]
pub struct ExternalScores {
    pub name: String,
    scores: HashMap<(String, String), HashMap<StatementId, f64>>,
}

impl ExternalScores {
    pub fn len(&self) -> usize {
        self.scores.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, user: &str, item: &str, s: StatementId) -> Option<f64> {
        self.scores
            .get(&(user.to_string(), item.to_string()))
            .and_then(|m| m.get(&s).copied())
    }
}

fn parse_statement_id(field: &str) -> Option<StatementId> {
    let f = field.trim();
    f.strip_prefix('s').unwrap_or(f).parse().ok().map(StatementId)
}

pub fn load_external_scores(path: impl AsRef<Path>) -> Result<ExternalScores> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = ExternalScores {
        name: format!(
            "external:{}",
            path.file_stem().and_then(|s| s.to_str()).unwrap_or("scores")
        ),
        scores: HashMap::new(),
    };
    for (k, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let s = parse_statement_id(fields[2])
            .ok_or_else(|| Error::parse(path, lineno, format!("bad statement id '{}'", fields[2])))?;
        let score: f64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad score '{}'", fields[3])))?;
        if score.is_nan() {
            return Err(Error::parse(path, lineno, "score is NaN"));
        }
        let slot = out
            .scores
            .entry((fields[0].to_string(), fields[1].to_string()))
            .or_default();
        if slot.insert(s, score).is_some() {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate score for ({}, {}, {s})", fields[0], fields[1]),
            ));
        }
    }
    Ok(out)
}

impl Scorer for ExternalScores {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn score(&self, user: &str, item: &str, cands: &[StatementId]) -> Vec<f64> {
        match self.scores.get(&(user.to_string(), item.to_string())) {
            Some(m) => cands
                .iter()
                .map(|s| m.get(s).copied().unwrap_or(f64::NEG_INFINITY))
                .collect(),
            None => vec![f64::NEG_INFINITY; cands.len()],
        }
    }
}

/// Top of a ranking for one interaction. Scores are non-increasing along
/// `order`; ties are ordered by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub user: String,
    pub item: String,
    pub order: Vec<StatementId>,
    #[serde(with = "nonfinite")]
    pub scores: Vec<f64>,
}

/// JSON has no infinities; unscored entries are written as `null`.
mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.is_finite().then_some(*x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}

fn by_rank(a: &(StatementId, f64), b: &(StatementId, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Orders candidates by (score descending, id ascending) and keeps the first
/// `k` (all of them when fewer).
pub fn rank_topk(
    user: &str,
    item: &str,
    cands: &[StatementId],
    scores: &[f64],
    k: usize,
) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::validation("k must be positive"));
    }
    if cands.len() != scores.len() {
        return Err(Error::validation(format!(
            "{} scores for {} candidates",
            scores.len(),
            cands.len()
        )));
    }
    let mut pairs: Vec<(StatementId, f64)> = cands.iter().copied().zip(scores.iter().copied()).collect();
    if pairs.len() > k {
        pairs.select_nth_unstable_by(k - 1, by_rank);
        pairs.truncate(k);
    }
    pairs.sort_unstable_by(by_rank);
    Ok(RankedList {
        user: user.to_string(),
        item: item.to_string(),
        order: pairs.iter().map(|p| p.0).collect(),
        scores: pairs.iter().map(|p| p.1).collect(),
    })
}

pub fn write_rankings_jsonl(path: impl AsRef<Path>, lists: &[RankedList]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for l in lists {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rankings_jsonl(path: impl AsRef<Path>) -> Result<Vec<RankedList>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, k + 1, e.to_string()))?);
        }
    }
    Ok(out)
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::parse(s, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(v: u32) -> StatementId {
        StatementId(v)
    }

    fn it(u: &str, i: &str, ss: &[u32]) -> Interaction {
        Interaction {
            user: u.into(),
            item: i.into(),
            timestamp: 0,
            rating: None,
            statements: ss.iter().map(|&x| s(x)).collect(),
        }
    }

    #[test]
    fn user_counts_by_hand() {
        let m = fit_popularity(&[it("u1", "i1", &[1, 2]), it("u1", "i2", &[1, 3])]);
        let u = &m.user_counts["u1"];
        assert_eq!((u[&s(1)], u[&s(2)], u[&s(3)]), (2, 1, 1));
    }

    #[test]
    fn single_interaction_tables_agree() {
        let m = fit_popularity(&[it("u", "i", &[4, 7])]);
        assert_eq!(m.user_counts["u"], m.global_counts);
        assert_eq!(m.item_counts["i"], m.global_counts);
    }

    fn random_train(seed: u64) -> Vec<Interaction> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        while out.len() < 120 {
            let u = format!("u{}", rng.gen_range(0..15));
            let i = format!("i{}", rng.gen_range(0..10));
            if !seen.insert((u.clone(), i.clone())) {
                continue;
            }
            let mut ss: Vec<u32> = (0..rng.gen_range(1..5)).map(|_| rng.gen_range(0..30)).collect();
            ss.sort_unstable();
            ss.dedup();
            out.push(it(&u, &i, &ss));
        }
        out
    }

    #[test]
    fn global_is_column_sum_and_matches_recount() {
        let train = random_train(5);
        let m = fit_popularity(&train);
        for x in 0..30 {
            let col: u32 = m.item_counts.values().map(|c| c.get(&s(x)).copied().unwrap_or(0)).sum();
            let row: u32 = m.user_counts.values().map(|c| c.get(&s(x)).copied().unwrap_or(0)).sum();
            let brute = train.iter().filter(|t| t.statements.contains(&s(x))).count() as u32;
            assert_eq!(m.global_counts.get(&s(x)).copied().unwrap_or(0), brute);
            assert_eq!(col, brute);
            assert_eq!(row, brute);
        }
    }

    #[test]
    fn cold_start_is_zero() {
        let m = fit_popularity(&[it("u", "i", &[0, 1])]);
        let cands = [s(0), s(1)];
        assert_eq!(BaselineScorer::new(&m, Method::UserPop).score("nobody", "i", &cands), vec![0.0, 0.0]);
        assert_eq!(BaselineScorer::new(&m, Method::ItemPop).score("u", "nothing", &cands), vec![0.0, 0.0]);
    }

    #[test]
    fn globalpop_ignores_user_and_item() {
        let m = fit_popularity(&random_train(6));
        let sc = BaselineScorer::new(&m, Method::GlobalPop);
        let cands: Vec<StatementId> = (0..30).map(s).collect();
        assert_eq!(sc.score("u1", "i1", &cands), sc.score("zz", "yy", &cands));
    }

    #[test]
    fn random_is_reproducible_and_seeded() {
        let m = PopularityModel::default();
        let cands: Vec<StatementId> = (0..50).map(s).collect();
        let a = BaselineScorer::new(&m, Method::Random { seed: 1 }).score("u", "i", &cands);
        let b = BaselineScorer::new(&m, Method::Random { seed: 1 }).score("u", "i", &cands);
        let c = BaselineScorer::new(&m, Method::Random { seed: 2 }).score("u", "i", &cands);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|x| (0.0..1.0).contains(x)));
        assert_eq!(a[7], random_score(1, "u", "i", s(7)));
    }

    #[test]
    fn topk_examples() {
        let r = rank_topk("u", "i", &[s(10), s(11), s(12)], &[3.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(r.order, vec![s(10), s(12)]);
        let r = rank_topk("u", "i", &[s(5), s(2), s(9)], &[1.0; 3], 10).unwrap();
        assert_eq!(r.order, vec![s(2), s(5), s(9)]);
        assert!(rank_topk("u", "i", &[s(1)], &[0.0], 0).is_err());
    }

    #[test]
    fn topk_matches_full_sort_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.gen_range(1..60);
            let cands: Vec<StatementId> = (0..n).map(|x| s(x * 3)).collect();
            // few distinct values so ties are common
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64).collect();
            let k = rng.gen_range(1..20);
            let mut oracle: Vec<usize> = (0..n as usize).collect();
            oracle.sort_by(|&a, &b| {
                scores[b].partial_cmp(&scores[a]).unwrap().then(cands[a].cmp(&cands[b]))
            });
            let want: Vec<StatementId> = oracle.iter().take(k).map(|&x| cands[x]).collect();
            let got = rank_topk("u", "i", &cands, &scores, k).unwrap();
            assert_eq!(got.order, want);
            let scaled: Vec<f64> = scores.iter().map(|x| x * 3.5).collect();
            assert_eq!(rank_topk("u", "i", &cands, &scaled, k).unwrap().order, want);
        }
    }

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("scores.tsv");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn external_scores() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "u\ti\t0\t0.1\nu\ti\t1\t0.9\nu\ti\ts2\t0.5\n");
        let ext = load_external_scores(&p).unwrap();
        assert_eq!(ext.len(), 3);
        let cands = [s(0), s(1), s(2), s(3), s(4)];
        let sc = ext.score("u", "i", &cands);
        let r = rank_topk("u", "i", &cands, &sc, 5).unwrap();
        assert_eq!(r.order, vec![s(1), s(2), s(0), s(3), s(4)]);
        let none = ext.score("v", "i", &cands);
        assert_eq!(rank_topk("v", "i", &cands, &none, 5).unwrap().order, cands.to_vec());
    }

    #[test]
    fn external_errors_name_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "u\ti\t0\t0.1\nu\ti\t1\n");
        match load_external_scores(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let p = write(&dir, "u\ti\t0\t0.1\nu\ti\t0\t0.3\n");
        assert!(matches!(load_external_scores(&p), Err(Error::Parse { line: 2, .. })));
        let p = write(&dir, "u\ti\tzero\t0.1\n");
        assert!(load_external_scores(&p).is_err());
    }

    #[test]
    fn rankings_round_trip_with_unscored() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let l = RankedList {
            user: "u".into(),
            item: "i".into(),
            order: vec![s(1), s(0)],
            scores: vec![2.0, f64::NEG_INFINITY],
        };
        write_rankings_jsonl(&p, &[l.clone()]).unwrap();
        assert_eq!(read_rankings_jsonl(&p).unwrap(), vec![l]);
    }
}

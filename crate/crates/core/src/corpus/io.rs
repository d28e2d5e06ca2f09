use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{normalize_whitespace, Dataset, Interaction, Polarity, Statement, StatementId};
use crate::error::{Error, Result};

/// Statement as it appears in the interaction JSONL input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawStatement {
    pub text: String,
    pub polarity: String,
}

/// One line of the interaction JSONL input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawInteraction {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
    #[serde(default)]
    pub rating: Option<f64>,
    pub statements: Vec<RawStatement>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    /// Interactions dropped because they carried no statements.
    pub dropped_empty: usize,
    /// Repeated statements within one interaction folded into one.
    pub merged_within_interaction: usize,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn jsonl_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (k, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::parse(path, k + 1, e.to_string()))?;
        out.push((k + 1, rec));
    }
    Ok(out)
}

/// Reads the interaction JSONL format and builds a validated [`Dataset`].
pub fn load_interactions(path: impl AsRef<Path>) -> Result<(Dataset, LoadReport)> {
    let path = path.as_ref();
    let records = jsonl_lines::<RawInteraction>(path)?;
    ingest(records.into_iter().map(|(_, r)| r))
}

/// Builds a dataset from raw records. Statement identity is the pair
/// (whitespace-normalized text, polarity); ids are dense in first-seen order.
pub fn ingest(records: impl IntoIterator<Item = RawInteraction>) -> Result<(Dataset, LoadReport)> {
    let mut report = LoadReport::default();
    let mut statements: Vec<Statement> = Vec::new();
    let mut ids: HashMap<(String, Polarity), StatementId> = HashMap::new();
    let mut pairs: HashSet<(String, String)> = HashSet::new();
    let mut interactions = Vec::new();

    for rec in records {
        if !pairs.insert((rec.user.clone(), rec.item.clone())) {
            return Err(Error::validation(format!(
                "duplicate interaction for (user={}, item={})",
                rec.user, rec.item
            )));
        }
        let mut sids = Vec::with_capacity(rec.statements.len());
        for raw in &rec.statements {
            let polarity: Polarity = raw.polarity.parse()?;
            let text = normalize_whitespace(&raw.text);
            if text.is_empty() {
                return Err(Error::validation(format!(
                    "empty statement text in interaction (user={}, item={})",
                    rec.user, rec.item
                )));
            }
            let next = StatementId(statements.len() as u32);
            let id = *ids.entry((text.clone(), polarity)).or_insert_with(|| {
                statements.push(Statement {
                    id: next,
                    text,
                    polarity,
                });
                next
            });
            sids.push(id);
        }
        let before = sids.len();
        sids.sort_unstable();
        sids.dedup();
        report.merged_within_interaction += before - sids.len();
        if sids.is_empty() {
            report.dropped_empty += 1;
            continue;
        }
        interactions.push(Interaction {
            user: rec.user,
            item: rec.item,
            timestamp: rec.timestamp,
            rating: rec.rating,
            statements: sids,
        });
    }
    if report.dropped_empty > 0 {
        log::info!("dropped {} interactions without statements", report.dropped_empty);
    }
    Ok((Dataset::new(statements, interactions)?, report))
}

/// Writes records in the interaction JSONL input format.
pub fn write_raw_jsonl(path: impl AsRef<Path>, records: &[RawInteraction]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes interactions that reference statement ids, one JSON object per line.
pub fn write_interactions_jsonl(path: impl AsRef<Path>, interactions: &[Interaction]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for it in interactions {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_interactions_jsonl(path: impl AsRef<Path>) -> Result<Vec<Interaction>> {
    let path = path.as_ref();
    jsonl_lines::<Interaction>(path)?
        .into_iter()
        .map(|(line, mut it)| {
            let n = it.statements.len();
            it.statements.sort_unstable();
            it.statements.dedup();
            if it.statements.len() != n {
                return Err(Error::parse(path, line, "repeated statement id"));
            }
            Ok(it)
        })
        .collect()
}

/// Canonical serialization: a statement table as TSV (`id`, `polarity`,
/// `text`) plus interactions JSONL referencing statement ids.
pub fn write_canonical(
    statements_path: impl AsRef<Path>,
    interactions_path: impl AsRef<Path>,
    d: &Dataset,
) -> Result<()> {
    let path = statements_path.as_ref();
    let mut w = create(path)?;
    for s in &d.statements {
        writeln!(w, "{}\t{}\t{}", s.id.0, s.polarity, s.text).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_interactions_jsonl(interactions_path, &d.interactions)
}

pub fn read_statements_tsv(path: impl AsRef<Path>) -> Result<Vec<Statement>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (k, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(pol), Some(text)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(path, k + 1, "expected 3 tab-separated fields"));
        };
        let id: u32 = id
            .parse()
            .map_err(|_| Error::parse(path, k + 1, format!("bad statement id {id:?}")))?;
        let polarity = pol
            .parse()
            .map_err(|e: Error| Error::parse(path, k + 1, e.to_string()))?;
        out.push(Statement {
            id: StatementId(id),
            text: text.to_string(),
            polarity,
        });
    }
    Ok(out)
}

pub fn read_canonical(
    statements_path: impl AsRef<Path>,
    interactions_path: impl AsRef<Path>,
) -> Result<Dataset> {
    let statements = read_statements_tsv(statements_path)?;
    let interactions = read_interactions_jsonl(interactions_path)?;
    Dataset::new(statements, interactions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    const THREE: &str = r#"{"user":"u1","item":"i1","timestamp":10,"rating":5,"statements":[{"text":"Great battery life","polarity":"pos"},{"text":"Too heavy","polarity":"neg"}]}
{"user":"u1","item":"i2","timestamp":20,"rating":null,"statements":[{"text":"Great battery life","polarity":"pos"},{"text":"Runs hot","polarity":"neg"}]}
{"user":"u2","item":"i1","timestamp":15,"statements":[{"text":"Too  heavy","polarity":"neg"},{"text":"Sturdy case","polarity":"neu"}]}
"#;

    #[test]
    fn loads_three_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.jsonl", THREE);
        let (d, report) = load_interactions(&p).unwrap();
        assert_eq!(d.interactions.len(), 3);
        assert!(d.statements.len() <= 6);
        // first-seen order, whitespace-normalized identity
        let texts: Vec<_> = d.statements.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["Great battery life", "Too heavy", "Runs hot", "Sturdy case"]);
        assert_eq!(d.interactions[2].statements, vec![StatementId(1), StatementId(3)]);
        assert_eq!(report, LoadReport::default());
    }

    #[test]
    fn empty_statement_list_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{THREE}{}\n",
            r#"{"user":"u3","item":"i9","timestamp":1,"statements":[]}"#
        );
        let p = write(&dir, "c.jsonl", &body);
        let (d, report) = load_interactions(&p).unwrap();
        assert_eq!(report.dropped_empty, 1);
        assert_eq!(d.interactions.len(), 3);
    }

    #[test]
    fn duplicate_pair_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"user":"u1","item":"i1","timestamp":1,"statements":[{"text":"a","polarity":"pos"}]}
{"user":"u1","item":"i1","timestamp":2,"statements":[{"text":"b","polarity":"pos"}]}
"#;
        let p = write(&dir, "c.jsonl", body);
        let err = load_interactions(&p).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("user=u1, item=i1"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{THREE}{{\"user\": \"u9\",\n");
        let p = write(&dir, "c.jsonl", &body);
        match load_interactions(&p).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_polarity_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"user":"u1","item":"i1","timestamp":1,"statements":[{"text":"a","polarity":"mixed"}]}"#;
        let p = write(&dir, "c.jsonl", body);
        assert!(matches!(
            load_interactions(&p).unwrap_err(),
            Error::Validation(_)
        ));
    }

    #[test]
    fn canonical_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.jsonl", THREE);
        let (d, _) = load_interactions(&p).unwrap();
        let st = dir.path().join("statements.tsv");
        let it = dir.path().join("interactions.jsonl");
        write_canonical(&st, &it, &d).unwrap();
        let back = read_canonical(&st, &it).unwrap();
        assert_eq!(back, d);
    }
}

//! Two-stage statement extraction from review text against a text
//! generation provider: candidate extraction, then verification.
//!
//! Extraction responses use one `STATEMENT<TAB>POLARITY` line per statement;
//! verification responses use one `INDEX<TAB>keep|drop` line per candidate.
//! Lines that do not follow the grammar are dropped and counted.

mod provider;

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_whitespace, Polarity, RawInteraction, RawStatement};
use crate::error::{Error, Result};
use crate::http::run_bounded;

pub use provider::{
    mock_extract, mock_keeps, GenerationProvider, GenerationRequest, GenerationTask, HttpGenerator,
    MockGenerator,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateStatement {
    pub text: String,
    pub polarity: Polarity,
    pub source_review: String,
}

pub const DEFAULT_EXTRACT_TEMPLATE: &str = "Extract every atomic, explanatory statement the \
reviewer makes about the product. Write one statement per line as STATEMENT<TAB>POLARITY, where \
POLARITY is pos, neg or neu. Output nothing else.\n\nReview:\n{review}\n";

pub const DEFAULT_VERIFY_TEMPLATE: &str = "Each line below is INDEX<TAB>POLARITY<TAB>STATEMENT. \
Keep a statement only if it explains an opinion about the product, expresses a single idea and \
does not repeat an earlier line. Answer with one line per statement: INDEX<TAB>keep or \
INDEX<TAB>drop.\n\n{candidates}\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplates {
    /// Must contain `{review}`.
    pub extract: String,
    /// Must contain `{candidates}`.
    pub verify: String,
    pub max_tokens: u32,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            extract: DEFAULT_EXTRACT_TEMPLATE.to_string(),
            verify: DEFAULT_VERIFY_TEMPLATE.to_string(),
            max_tokens: 512,
        }
    }
}

impl PromptTemplates {
    pub fn validate(&self) -> Result<()> {
        if !self.extract.contains("{review}") {
            return Err(Error::validation("extract template lacks {review}"));
        }
        if !self.verify.contains("{candidates}") {
            return Err(Error::validation("verify template lacks {candidates}"));
        }
        Ok(())
    }

    pub fn extract_prompt(&self, review: &str) -> String {
        self.extract.replace("{review}", review)
    }

    pub fn verify_prompt(&self, cands: &[CandidateStatement]) -> String {
        let listing: Vec<String> = cands
            .iter()
            .enumerate()
            .map(|(k, c)| format!("{k}\t{}\t{}", c.polarity, c.text))
            .collect();
        self.verify.replace("{candidates}", &listing.join("\n"))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub candidates: Vec<CandidateStatement>,
    pub dropped_lines: usize,
}

/// Parses `STATEMENT<TAB>POLARITY` lines; blank lines are ignored, anything
/// else malformed is counted in `dropped_lines`.
pub fn parse_extraction(review_id: &str, text: &str) -> Extraction {
    let mut out = Extraction::default();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = line.rsplit_once('\t').and_then(|(stmt, pol)| {
            let stmt = normalize_whitespace(stmt);
            let pol: Polarity = pol.parse().ok()?;
            (!stmt.is_empty()).then_some((stmt, pol))
        });
        match parsed {
            Some((text, polarity)) => out.candidates.push(CandidateStatement {
                text,
                polarity,
                source_review: review_id.to_string(),
            }),
            None => out.dropped_lines += 1,
        }
    }
    out
}

pub fn extract_candidates(
    review_id: &str,
    review: &str,
    provider: &dyn GenerationProvider,
    templates: &PromptTemplates,
) -> Result<Extraction> {
    if review.trim().is_empty() {
        return Ok(Extraction::default());
    }
    let req = GenerationRequest {
        prompt: templates.extract_prompt(review),
        max_tokens: templates.max_tokens,
        task: GenerationTask::Extract { review },
    };
    let text = provider
        .generate(&req)
        .map_err(|e| Error::provider(format!("review {review_id}: {e}")))?;
    Ok(parse_extraction(review_id, &text))
}

/// Indices marked `keep` in a verification response.
pub fn parse_verdicts(text: &str, n: usize) -> (Vec<bool>, usize) {
    let mut keep = vec![false; n];
    let mut dropped = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let verdict = line.split_once('\t').and_then(|(idx, v)| {
            let idx: usize = idx.trim().parse().ok()?;
            let v = match v.trim().to_ascii_lowercase().as_str() {
                "keep" => true,
                "drop" => false,
                _ => return None,
            };
            (idx < n).then_some((idx, v))
        });
        match verdict {
            Some((idx, v)) => keep[idx] = v,
            None => dropped += 1,
        }
    }
    (keep, dropped)
}

/// Keeps the candidates the verifier marks compliant, then removes repeated
/// texts (first occurrence survives). The result is a subsequence of `cands`.
pub fn verify_candidates(
    review_id: &str,
    cands: &[CandidateStatement],
    provider: &dyn GenerationProvider,
    templates: &PromptTemplates,
) -> Result<Vec<CandidateStatement>> {
    if cands.is_empty() {
        return Ok(Vec::new());
    }
    let req = GenerationRequest {
        prompt: templates.verify_prompt(cands),
        max_tokens: templates.max_tokens,
        task: GenerationTask::Verify { candidates: cands },
    };
    let text = provider
        .generate(&req)
        .map_err(|e| Error::provider(format!("review {review_id}: {e}")))?;
    let (keep, dropped) = parse_verdicts(&text, cands.len());
    if dropped > 0 {
        log::debug!("review {review_id}: {dropped} unparseable verdict lines");
    }
    let mut seen = HashSet::new();
    Ok(cands
        .iter()
        .zip(keep)
        .filter(|(c, k)| *k && seen.insert(c.text.to_lowercase()))
        .map(|(c, _)| c.clone())
        .collect())
}

/// One line of the review JSONL input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    #[serde(default)]
    pub id: Option<String>,
    pub user: String,
    pub item: String,
    pub timestamp: i64,
    #[serde(default)]
    pub rating: Option<f64>,
    #[serde(alias = "text")]
    pub review: String,
}

impl ReviewRecord {
    pub fn review_id(&self) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| format!("{}/{}", self.user, self.item))
    }
}

pub fn read_reviews_jsonl(path: impl AsRef<Path>) -> Result<Vec<ReviewRecord>> {
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

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractReport {
    pub reviews: usize,
    pub candidates: usize,
    pub dropped_lines: usize,
    pub verified: usize,
    /// Reviews that yielded no verified statement.
    pub empty: usize,
}

/// Runs both stages over every review, at most `max_in_flight` at a time.
/// Output order follows input order.
pub fn extract_corpus(
    reviews: &[ReviewRecord],
    provider: &dyn GenerationProvider,
    templates: &PromptTemplates,
    max_in_flight: usize,
) -> Result<(Vec<RawInteraction>, ExtractReport)> {
    templates.validate()?;
    let results = run_bounded(reviews, max_in_flight, |_, r| {
        let id = r.review_id();
        let ex = extract_candidates(&id, &r.review, provider, templates)?;
        let kept = verify_candidates(&id, &ex.candidates, provider, templates)?;
        Ok::<_, Error>((ex, kept))
    });
    let mut report = ExtractReport {
        reviews: reviews.len(),
        ..Default::default()
    };
    let mut out = Vec::with_capacity(reviews.len());
    for (r, res) in reviews.iter().zip(results) {
        let (ex, kept) = res?;
        report.candidates += ex.candidates.len();
        report.dropped_lines += ex.dropped_lines;
        report.verified += kept.len();
        report.empty += kept.is_empty() as usize;
        out.push(RawInteraction {
            user: r.user.clone(),
            item: r.item.clone(),
            timestamp: r.timestamp,
            rating: r.rating,
            statements: kept
                .into_iter()
                .map(|c| RawStatement {
                    text: c.text,
                    polarity: c.polarity.as_str().to_string(),
                })
                .collect(),
        });
    }
    Ok((out, report))
}

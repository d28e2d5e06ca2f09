use serde::{Deserialize, Serialize};

use super::CandidateStatement;
use crate::corpus::{normalize_whitespace, Polarity};
use crate::error::Result;
use crate::http::JsonClient;

/// What the prompt asks for. HTTP providers only see the rendered prompt;
/// the mock works from the structured task.
#[derive(Debug, Clone, Copy)]
pub enum GenerationTask<'a> {
    Extract { review: &'a str },
    Verify { candidates: &'a [CandidateStatement] },
}

#[derive(Debug, Clone)]
pub struct GenerationRequest<'a> {
    pub prompt: String,
    pub max_tokens: u32,
    pub task: GenerationTask<'a>,
}

pub trait GenerationProvider: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<String>;
    fn id(&self) -> String;
}

const POSITIVE: &[&str] = &[
    "amazing", "awesome", "beautiful", "best", "bright", "clear", "comfortable", "durable", "easy",
    "excellent", "fantastic", "fast", "good", "great", "happy", "love", "loved", "loves", "nice",
    "perfect", "quiet", "recommend", "reliable", "solid", "sturdy", "well", "works", "worth",
];

const NEGATIVE: &[&str] = &[
    "awful", "bad", "broke", "broken", "cheap", "damaged", "defective", "difficult",
    "disappointed", "disappointing", "expensive", "flimsy", "hard", "heavy", "leak", "leaks",
    "loud", "noisy", "poor", "returned", "slow", "terrible", "uncomfortable", "useless", "waste",
    "worse", "worst",
];

const FIRST_PERSON: &[&str] = &["i", "me", "my", "mine", "myself", "we", "us", "our", "ours"];

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
}

fn lexicon_polarity(sentence: &str) -> Polarity {
    let score: i32 = words(sentence)
        .map(|w| {
            if POSITIVE.contains(&w.as_str()) {
                1
            } else if NEGATIVE.contains(&w.as_str()) {
                -1
            } else {
                0
            }
        })
        .sum();
    match score.signum() {
        1 => Polarity::Pos,
        -1 => Polarity::Neg,
        _ => Polarity::Neu,
    }
}

/// Sentences split on `.`, `!` and `?`, each labelled by the signed keyword
/// count (neutral when it is zero).
pub fn mock_extract(review: &str) -> Vec<(String, Polarity)> {
    review
        .split(['.', '!', '?'])
        .map(normalize_whitespace)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let p = lexicon_polarity(&s);
            (s, p)
        })
        .collect()
}

/// Rejects first-person statements and statements joined by "and" or "but".
pub fn mock_keeps(text: &str) -> bool {
    !words(text).any(|w| FIRST_PERSON.contains(&w.as_str()) || w == "and" || w == "but")
}

/// Rule-based offline stand-in for a generation model.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockGenerator;

impl GenerationProvider for MockGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        let mut out = String::new();
        match req.task {
            GenerationTask::Extract { review } => {
                for (s, p) in mock_extract(review) {
                    out.push_str(&format!("{s}\t{p}\n"));
                }
            }
            GenerationTask::Verify { candidates } => {
                for (k, c) in candidates.iter().enumerate() {
                    let v = if mock_keeps(&c.text) { "keep" } else { "drop" };
                    out.push_str(&format!("{k}\t{v}\n"));
                }
            }
        }
        Ok(out)
    }

    fn id(&self) -> String {
        "mock-generator".into()
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// `POST /generate {"prompt", "max_tokens"} -> {"text"}`.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    client: JsonClient,
}

impl HttpGenerator {
    pub fn new(client: JsonClient) -> Self {
        HttpGenerator { client }
    }
}

impl GenerationProvider for HttpGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        let resp: GenerateResponse = self.client.post(
            "/generate",
            &GenerateRequest {
                prompt: &req.prompt,
                max_tokens: req.max_tokens,
            },
        )?;
        Ok(resp.text)
    }

    fn id(&self) -> String {
        format!("http({})", self.client.base_url())
    }
}

use serde::{Deserialize, Serialize};

use crate::corpus::StatementId;
use crate::error::{Error, Result};
use crate::http::JsonClient;

/// A pair handed to the scorer, texts in canonical (smaller id first) order.
#[derive(Debug, Clone, Copy)]
pub struct PairText<'a> {
    pub a: StatementId,
    pub b: StatementId,
    pub text_a: &'a str,
    pub text_b: &'a str,
    pub cosine: f32,
}

/// Binary paraphrase classifier returning a probability per pair.
pub trait ParaphraseScorer: Send + Sync {
    fn score(&self, batch: &[PairText<'_>]) -> Result<Vec<f64>>;

    /// Provenance string; also the score-cache namespace.
    fn id(&self) -> String {
        "custom".to_string()
    }
}

/// Returns the same probability for every pair.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl ParaphraseScorer for ConstantScorer {
    fn score(&self, batch: &[PairText<'_>]) -> Result<Vec<f64>> {
        Ok(vec![self.0; batch.len()])
    }

    fn id(&self) -> String {
        format!("constant({})", self.0)
    }
}

/// Offline scorer: logistic squashing of the pair's cosine,
/// `p = 1 / (1 + exp(-slope * (cos - center)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSquashScorer {
    pub center: f64,
    pub slope: f64,
}

impl Default for CosineSquashScorer {
    fn default() -> Self {
        CosineSquashScorer {
            center: 0.9,
            slope: 100.0,
        }
    }
}

impl CosineSquashScorer {
    pub fn prob(&self, cosine: f64) -> f64 {
        1.0 / (1.0 + (-self.slope * (cosine - self.center)).exp())
    }

    /// Cosine at which the probability equals `p`.
    pub fn preimage(&self, p: f64) -> f64 {
        self.center + (p / (1.0 - p)).ln() / self.slope
    }
}

impl ParaphraseScorer for CosineSquashScorer {
    fn score(&self, batch: &[PairText<'_>]) -> Result<Vec<f64>> {
        Ok(batch.iter().map(|p| self.prob(p.cosine as f64)).collect())
    }

    fn id(&self) -> String {
        format!("mock-squash(center={},slope={})", self.center, self.slope)
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    pairs: Vec<[&'a str; 2]>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    probs: Vec<f64>,
}

/// Client for `POST /score_pairs`.
#[derive(Debug, Clone)]
pub struct HttpScorer {
    client: JsonClient,
}

impl HttpScorer {
    pub fn new(client: JsonClient) -> Self {
        HttpScorer { client }
    }
}

impl ParaphraseScorer for HttpScorer {
    fn score(&self, batch: &[PairText<'_>]) -> Result<Vec<f64>> {
        let req = ScoreRequest {
            pairs: batch.iter().map(|p| [p.text_a, p.text_b]).collect(),
        };
        let resp: ScoreResponse = self.client.post("/score_pairs", &req)?;
        if resp.probs.len() != batch.len() {
            return Err(Error::provider(format!(
                "/score_pairs returned {} probabilities for {} pairs",
                resp.probs.len(),
                batch.len()
            )));
        }
        Ok(resp.probs)
    }

    fn id(&self) -> String {
        format!("http({})", self.client.base_url())
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Polarity;
use crate::error::{Error, Result};
use crate::http::JsonClient;

/// Source of raw (not necessarily normalized) text embeddings.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;

    /// Identifier recorded in run manifests.
    fn id(&self) -> String {
        "custom".to_string()
    }
}

/// Lower-cases, drops punctuation and collapses whitespace, so that texts
/// differing only in case or punctuation share a mock vector.
fn mock_key(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Deterministic pseudo-random unit vector for `text`.
///
/// The text (after case/punctuation folding) and `seed` are hashed into a
/// ChaCha seed that drives `dim` standard normal draws. Polarity does not
/// participate. `dim` below 2 is raised to 2.
pub fn mock_embed(text: &str, _polarity: Polarity, dim: usize, seed: u64) -> Vec<f64> {
    mock_vector(text, dim, seed)
}

fn mock_vector(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(mock_key(text).as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    loop {
        let mut v: Vec<f64> = (0..dim.max(2))
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        if super::normalize(&mut v).is_ok() {
            return v;
        }
    }
}

/// Offline embedder backed by [`mock_embed`].
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        MockEmbedder { dim, seed }
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        Ok(texts
            .iter()
            .map(|t| mock_vector(t, self.dim, self.seed))
            .collect())
    }

    fn id(&self) -> String {
        format!("mock(dim={},seed={})", self.dim, self.seed)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

/// Client for `POST /embed`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    client: JsonClient,
}

impl HttpEmbedder {
    pub fn new(client: JsonClient) -> Self {
        HttpEmbedder { client }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let resp: EmbedResponse = self.client.post("/embed", &EmbedRequest { texts })?;
        if let Some(bad) = resp.vectors.iter().find(|v| v.len() != resp.dim) {
            return Err(Error::provider(format!(
                "/embed declared dim {} but returned a vector of length {}",
                resp.dim,
                bad.len()
            )));
        }
        Ok(resp.vectors)
    }

    fn id(&self) -> String {
        format!("http({})", self.client.base_url())
    }
}

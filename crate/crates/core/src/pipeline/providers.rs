//! Provider selection from a spec string: `mock` or an `http(s)://` base URL.

use crate::embed::{EmbeddingProvider, HttpEmbedder, MockEmbedder};
use crate::error::{Error, Result};
use crate::extract::{GenerationProvider, HttpGenerator, MockGenerator};
use crate::http::JsonClient;
use crate::pairflow::{CosineSquashScorer, HttpScorer, ParaphraseScorer};

fn url(spec: &str) -> Option<&str> {
    let s = spec.trim();
    (s.starts_with("http://") || s.starts_with("https://")).then_some(s)
}

fn unknown(kind: &str, spec: &str) -> Error {
    Error::validation(format!("unknown {kind} provider '{spec}' (expected 'mock' or an http(s) URL)"))
}

pub fn embedder(spec: &str, dim: usize, seed: u64) -> Result<Box<dyn EmbeddingProvider>> {
    if spec.trim() == "mock" {
        if dim < 2 {
            return Err(Error::validation("mock embedding dim must be at least 2"));
        }
        return Ok(Box::new(MockEmbedder::new(dim, seed)));
    }
    url(spec)
        .map(|u| Box::new(HttpEmbedder::new(JsonClient::new(u))) as Box<dyn EmbeddingProvider>)
        .ok_or_else(|| unknown("embedding", spec))
}

pub fn paraphrase_scorer(spec: &str) -> Result<Box<dyn ParaphraseScorer>> {
    if spec.trim() == "mock" {
        return Ok(Box::new(CosineSquashScorer::default()));
    }
    url(spec)
        .map(|u| Box::new(HttpScorer::new(JsonClient::new(u))) as Box<dyn ParaphraseScorer>)
        .ok_or_else(|| unknown("pair scorer", spec))
}

pub fn generator(spec: &str) -> Result<Box<dyn GenerationProvider>> {
    if spec.trim() == "mock" {
        return Ok(Box::new(MockGenerator));
    }
    url(spec)
        .map(|u| Box::new(HttpGenerator::new(JsonClient::new(u))) as Box<dyn GenerationProvider>)
        .ok_or_else(|| unknown("generation", spec))
}

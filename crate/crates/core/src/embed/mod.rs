//! Unit-norm statement embeddings.
//!
//! Vectors come from an [`EmbeddingProvider`] (an HTTP service or the
//! deterministic [`MockEmbedder`]), are validated and ℓ2-normalized with
//! 64-bit accumulation, and are stored as 32-bit floats in an
//! [`EmbeddingStore`] indexed by statement id.

mod provider;
mod store;

pub use provider::{mock_embed, EmbeddingProvider, HttpEmbedder, MockEmbedder};
pub use store::{EmbeddingStore, StoreSidecar};

use crate::corpus::Statement;
use crate::error::{Error, Result};
use crate::http::run_bounded;

#[derive(Debug, Clone)]
pub struct EmbedOptions {
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            batch_size: 64,
            max_in_flight: 4,
        }
    }
}

/// Normalizes `v` in place. Fails on non-finite components or zero norm.
pub(crate) fn normalize(v: &mut [f64]) -> std::result::Result<(), &'static str> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err("non-finite component");
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err("zero vector");
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(())
}

/// Embeds `statements` (ordered by id) into a store.
pub fn embed_statements(
    statements: &[Statement],
    provider: &dyn EmbeddingProvider,
    opts: &EmbedOptions,
) -> Result<EmbeddingStore> {
    if statements.is_empty() {
        return Err(Error::validation("no statements to embed"));
    }
    for (k, s) in statements.iter().enumerate() {
        if s.id.index() != k {
            return Err(Error::validation(format!(
                "statements must be ordered by dense id; row {k} is {}",
                s.id
            )));
        }
    }
    let batches: Vec<&[Statement]> = statements.chunks(opts.batch_size.max(1)).collect();
    let responses = run_bounded(&batches, opts.max_in_flight, |_, batch| {
        let texts: Vec<&str> = batch.iter().map(|s| s.text.as_str()).collect();
        provider.embed(&texts)
    });

    let mut dim = None;
    let mut data = Vec::new();
    for (batch, resp) in batches.iter().zip(responses) {
        let vectors = resp?;
        if vectors.len() != batch.len() {
            return Err(Error::provider(format!(
                "provider returned {} vectors for {} texts",
                vectors.len(),
                batch.len()
            )));
        }
        for (s, mut v) in batch.iter().zip(vectors) {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::provider(format!(
                        "dimension mismatch at statement {}: expected {d}, got {}",
                        s.id,
                        v.len()
                    )))
                }
                _ => {}
            }
            if v.is_empty() {
                return Err(Error::provider(format!("empty vector for statement {}", s.id)));
            }
            normalize(&mut v)
                .map_err(|why| Error::provider(format!("statement {}: {why}", s.id)))?;
            data.extend(v.iter().map(|&x| x as f32));
        }
    }
    let polarities = statements.iter().map(|s| s.polarity).collect();
    EmbeddingStore::new(dim.unwrap_or(0), data, polarities)
}

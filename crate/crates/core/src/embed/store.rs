use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Polarity, StatementId};
use crate::error::{Error, Result};

const NORM_TOLERANCE: f64 = 1e-6;

/// Row-major matrix of unit vectors, one row per statement id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    data: Vec<f32>,
    polarities: Vec<Polarity>,
}

/// JSON file written next to the binary store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSidecar {
    pub count: usize,
    pub dim: usize,
    /// Hex SHA-256 of the binary payload.
    pub checksum: String,
    pub polarities: Vec<Polarity>,
}

impl EmbeddingStore {
    /// Wraps already-normalized rows, checking shape and norms.
    pub fn new(dim: usize, data: Vec<f32>, polarities: Vec<Polarity>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("embedding dimension must be positive"));
        }
        if data.len() != dim * polarities.len() {
            return Err(Error::validation(format!(
                "store has {} floats, expected {} rows x {dim}",
                data.len(),
                polarities.len()
            )));
        }
        let store = EmbeddingStore {
            dim,
            data,
            polarities,
        };
        for k in 0..store.len() {
            let row = store.row(StatementId(k as u32));
            let norm = row.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::validation(format!(
                    "row s{k} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(store)
    }

    /// Normalizes arbitrary non-zero rows (in 64-bit) and builds a store.
    pub fn from_rows(rows: &[Vec<f64>], polarities: Vec<Polarity>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (k, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::validation(format!("row s{k} has the wrong dimension")));
            }
            let mut v = r.clone();
            super::normalize(&mut v).map_err(|why| Error::validation(format!("row s{k}: {why}")))?;
            data.extend(v.iter().map(|&x| x as f32));
        }
        EmbeddingStore::new(dim, data, polarities)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.polarities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polarities.is_empty()
    }

    pub fn row(&self, id: StatementId) -> &[f32] {
        let k = id.index();
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn polarity(&self, id: StatementId) -> Polarity {
        self.polarities[id.index()]
    }

    pub fn polarities(&self) -> &[Polarity] {
        &self.polarities
    }

    /// Dot product of two rows with 64-bit accumulation, clamped to [-1, 1].
    pub fn cosine(&self, a: StatementId, b: StatementId) -> f64 {
        dot(self.row(a), self.row(b)).clamp(-1.0, 1.0)
    }

    /// Little-endian f32 payload, row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    pub fn sidecar(&self) -> StoreSidecar {
        StoreSidecar {
            count: self.len(),
            dim: self.dim,
            checksum: hex::encode(Sha256::digest(self.to_bytes())),
            polarities: self.polarities.clone(),
        }
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Writes `path` (binary) and `path.json` (sidecar).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let side = Self::sidecar_path(path);
        let json = serde_json::to_vec_pretty(&self.sidecar())?;
        std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side = Self::sidecar_path(path);
        let meta: StoreSidecar = serde_json::from_slice(
            &std::fs::read(&side).map_err(|e| Error::io(&side, e))?,
        )?;
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let checksum = hex::encode(Sha256::digest(&bytes));
        if checksum != meta.checksum {
            return Err(Error::validation(format!(
                "{}: checksum mismatch (sidecar {}, file {checksum})",
                path.display(),
                meta.checksum
            )));
        }
        if bytes.len() != meta.count * meta.dim * 4 || meta.polarities.len() != meta.count {
            return Err(Error::validation(format!(
                "{}: size does not match sidecar",
                path.display()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        EmbeddingStore::new(meta.dim, data, meta.polarities)
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

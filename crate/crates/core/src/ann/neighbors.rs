use std::io::Write;
use std::path::Path;

use super::Neighbor;
use crate::corpus::StatementId;
use crate::error::{Error, Result};

const RECORD_BYTES: usize = 12;

/// One row of the neighbor file: little-endian `u32` query id, `u32`
/// neighbor id, `f32` cosine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborRecord {
    pub query: StatementId,
    pub neighbor: StatementId,
    pub cosine: f32,
}

/// Writes `lists[q]` for every query id `q`, in query then rank order.
pub fn write_neighbors(path: impl AsRef<Path>, lists: &[Vec<Neighbor>]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for (q, list) in lists.iter().enumerate() {
        for n in list {
            let mut rec = [0u8; RECORD_BYTES];
            rec[..4].copy_from_slice(&(q as u32).to_le_bytes());
            rec[4..8].copy_from_slice(&n.id.0.to_le_bytes());
            rec[8..].copy_from_slice(&n.cosine.to_le_bytes());
            w.write_all(&rec).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_neighbors(path: impl AsRef<Path>) -> Result<Vec<NeighborRecord>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::validation(format!(
            "{}: length {} is not a multiple of {RECORD_BYTES}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(RECORD_BYTES)
        .map(|c| NeighborRecord {
            query: StatementId(u32::from_le_bytes(c[..4].try_into().unwrap())),
            neighbor: StatementId(u32::from_le_bytes(c[4..8].try_into().unwrap())),
            cosine: f32::from_le_bytes(c[8..].try_into().unwrap()),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let lists = vec![
            vec![
                Neighbor {
                    id: StatementId(2),
                    cosine: 0.97,
                },
                Neighbor {
                    id: StatementId(1),
                    cosine: -0.25,
                },
            ],
            vec![],
            vec![Neighbor {
                id: StatementId(0),
                cosine: 0.97,
            }],
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.bin");
        write_neighbors(&p, &lists).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 36);
        let recs = read_neighbors(&p).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[2].query, StatementId(2));
        assert_eq!(recs[1].cosine, -0.25);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.bin");
        std::fs::write(&p, [0u8; 13]).unwrap();
        assert!(read_neighbors(&p).is_err());
    }
}

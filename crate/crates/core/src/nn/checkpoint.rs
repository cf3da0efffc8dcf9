//! `NESG` weight checkpoints.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "NESG" | version | block_count | { block_id | rank | dims[rank] | f32 values[product(dims)] }*
//! ```

use std::path::Path;

use super::{BlockValues, Provenance, WeightSnapshot};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NESG";
pub const VERSION: u32 = 1;

pub fn encode_checkpoint(snapshot: &WeightSnapshot) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(snapshot.blocks.len() as u32).to_le_bytes());
    for block in &snapshot.blocks {
        out.extend_from_slice(&(block.id as u32).to_le_bytes());
        out.extend_from_slice(&(block.shape.len() as u32).to_le_bytes());
        for &d in &block.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &block.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated checkpoint while reading {what}"),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Decoded snapshots carry [`Provenance::Beta`]; only retrained weights are checkpointed.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<WeightSnapshot> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"NESG\""));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32("block count")? as usize;
    let mut blocks = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let id = r.u32("block id")? as usize;
        let rank_at = r.pos;
        let rank = r.u32("rank")? as usize;
        if rank == 0 {
            return Err(Error::format(rank_at as u64, "block rank must be at least 1"));
        }
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|len| len.checked_mul(4).is_some())
            .ok_or_else(|| Error::format(rank_at as u64, "block size overflows"))?;
        let raw = r.take(len * 4, "block values")?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        blocks.push(BlockValues { id, shape, values });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after last block"));
    }
    Ok(WeightSnapshot {
        provenance: Provenance::Beta,
        blocks,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, snapshot: &WeightSnapshot) -> Result<()> {
    std::fs::write(path, encode_checkpoint(snapshot))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<WeightSnapshot> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_model, Architecture};
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let model = build_model(&Architecture::new(vec![2, 3, 2]).unwrap(), 1);
        let bytes = encode_checkpoint(&model.snapshot(Provenance::Beta));
        assert_eq!(&bytes[..4], b"NESG");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[4, 0, 0, 0]);
        // block 0: id 0, rank 2, dims 3 x 2
        assert_eq!(&bytes[12..28], &[0, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0]);
        let total = 12 + 4 * 2 * 4 + 4 * (2 + 1 + 2 + 1) + 4 * (6 + 3 + 6 + 2);
        assert_eq!(bytes.len(), total);
    }

    #[test]
    fn rejects_corruption_with_offsets() {
        let model = build_model(&Architecture::new(vec![2, 3, 2]).unwrap(), 1);
        let bytes = encode_checkpoint(&model.snapshot(Provenance::Beta));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { offset: 0, .. })));

        let truncated = &bytes[..bytes.len() - 1];
        assert!(matches!(decode_checkpoint(truncated), Err(Error::Format { .. })));

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(
            decode_checkpoint(&trailing),
            Err(Error::Format { offset, .. }) if offset as usize == bytes.len()
        ));
    }

    proptest! {
        #[test]
        fn encode_decode_encode_is_byte_identical(
            blocks in prop::collection::vec(
                (prop::collection::vec(1usize..5, 1..4), any::<u32>()),
                1..6,
            )
        ) {
            let snapshot = WeightSnapshot {
                provenance: Provenance::Beta,
                blocks: blocks
                    .iter()
                    .enumerate()
                    .map(|(id, (shape, bits))| {
                        let len: usize = shape.iter().product();
                        BlockValues {
                            id,
                            shape: shape.clone(),
                            values: (0..len as u32).map(|k| f32::from_bits(bits.wrapping_add(k.wrapping_mul(2654435761)))).collect(),
                        }
                    })
                    .collect(),
            };
            let bytes = encode_checkpoint(&snapshot);
            let decoded = decode_checkpoint(&bytes).unwrap();
            prop_assert!(decoded.same_bits(&snapshot));
            prop_assert_eq!(encode_checkpoint(&decoded), bytes);
        }
    }
}

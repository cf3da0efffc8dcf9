//! IDX files (the MNIST container): big-endian `u32` magic, big-endian `u32`
//! dimensions, then unsigned bytes. Only unsigned-byte images (3 dims, magic
//! `0x00000803`) and labels (1 dim, magic `0x00000801`) are accepted.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(offset as u64, format!("truncated header while reading {what}")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = read_u32(bytes, 0, "magic")?;
    if magic != expected {
        return Err(Error::format(
            0,
            format!("bad magic 0x{magic:08x}, expected 0x{expected:08x}"),
        ));
    }
    Ok(())
}

fn payload(bytes: &[u8], start: usize, len: usize) -> Result<&[u8]> {
    let end = start
        .checked_add(len)
        .ok_or_else(|| Error::format(start as u64, "payload size overflows"))?;
    if bytes.len() < end {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: expected {len} bytes from offset {start}"),
        ));
    }
    if bytes.len() > end {
        return Err(Error::format(end as u64, "trailing bytes after payload"));
    }
    Ok(&bytes[start..end])
}

pub fn decode_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4, "image count")? as usize;
    let rows = read_u32(bytes, 8, "row count")? as usize;
    let cols = read_u32(bytes, 12, "column count")? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format(4, "image dimensions overflow"))?;
    let pixels = payload(bytes, 16, len)?.to_vec();
    Ok(IdxImages { count, rows, cols, pixels })
}

pub fn decode_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = read_u32(bytes, 4, "label count")? as usize;
    Ok(payload(bytes, 8, count)?.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

impl IdxImages {
    /// Row-major flattened pixels scaled to `[0, 1]`.
    pub fn features(&self) -> Vec<f32> {
        self.pixels.iter().map(|&p| p as f32 / 255.0).collect()
    }
}

/// Decodes an image/label file pair into a dataset; class count is `max(label) + 1`
/// (at least 2).
pub fn decode_idx_pair(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let images = decode_idx_images(images)?;
    let labels = decode_idx_labels(labels)?;
    if images.count != labels.len() {
        return Err(Error::format(
            4,
            format!("image count {} does not match label count {}", images.count, labels.len()),
        ));
    }
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let class_count = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
    Dataset::new(images.features(), labels, images.rows * images.cols, class_count)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = std::fs::read(images_path.as_ref())?;
    let labels = std::fs::read(labels_path.as_ref())?;
    decode_idx_pair(&images, &labels)
}

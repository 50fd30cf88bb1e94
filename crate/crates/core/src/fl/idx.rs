//! Reader for the IDX binary format used by the MNIST distribution.
//!
//! Layout: a 4-byte big-endian magic (`0x00000803` for u8 image tensors,
//! `0x00000801` for u8 label vectors), one big-endian u32 per dimension, then
//! the raw bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fl::dataset::LabeledDataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(offset, "truncated header"))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(format_err(0, format!("bad image magic {magic:#010x}")));
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(format_err(8, format!("degenerate image size {rows}x{cols}")));
    }
    let len = count
        .checked_mul(rows)
        .and_then(|n| n.checked_mul(cols))
        .ok_or_else(|| format_err(4, "image dimensions overflow"))?;
    let body = &bytes[16..];
    if body.len() < len {
        return Err(format_err(
            16 + body.len(),
            format!("expected {len} pixel bytes, found {}", body.len()),
        ));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body[..len].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(format_err(0, format!("bad label magic {magic:#010x}")));
    }
    let count = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(format_err(
            8 + body.len(),
            format!("expected {count} label bytes, found {}", body.len()),
        ));
    }
    Ok(body[..count].to_vec())
}

/// Pairs parsed images and labels into a dataset with pixels scaled to [0, 1],
/// keeping the first `limit` samples.
pub fn idx_to_dataset(
    images: &IdxImages,
    labels: &[u8],
    num_classes: usize,
    limit: usize,
) -> Result<LabeledDataset> {
    if images.count != labels.len() {
        return Err(format_err(
            4,
            format!("{} images but {} labels", images.count, labels.len()),
        ));
    }
    let n = limit.min(images.count);
    let dim = images.rows * images.cols;
    let features = images.pixels[..n * dim]
        .iter()
        .map(|&p| f64::from(p) / 255.0)
        .collect();
    let labels: Vec<usize> = labels[..n].iter().map(|&l| usize::from(l)).collect();
    if let Some(pos) = labels.iter().position(|&l| l >= num_classes) {
        return Err(format_err(
            8 + pos,
            format!("label {} >= num_classes {num_classes}", labels[pos]),
        ));
    }
    LabeledDataset::new(dim, num_classes, features, labels)
}

pub fn load_idx_dataset(
    images_path: &Path,
    labels_path: &Path,
    num_classes: usize,
    limit: usize,
) -> Result<LabeledDataset> {
    let images = parse_idx_images(&std::fs::read(images_path)?)?;
    let labels = parse_idx_labels(&std::fs::read(labels_path)?)?;
    idx_to_dataset(&images, &labels, num_classes, limit)
}

/// Serialises images/labels back to IDX bytes (fixtures and tests).
pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for v in [images.count, images.rows, images.cols] {
        out.extend_from_slice(&(v as u32).to_be_bytes());
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

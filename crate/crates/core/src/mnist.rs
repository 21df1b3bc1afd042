//! MNIST IDX files and fixed-size batching.

use std::fs;
use std::path::Path;

use crate::error::{HeError, Result};
use crate::matrix::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImages {
    pub images: Vec<Matrix>,
    pub labels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| HeError::Idx(format!("{what} header truncated")))
}

/// Images scaled to `[0, 1]` by dividing each byte by 255.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Matrix>> {
    let magic = be_u32(bytes, 0, "image")?;
    if magic != IMAGES_MAGIC {
        return Err(HeError::Idx(format!("image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4, "image")? as usize;
    let rows = be_u32(bytes, 8, "image")? as usize;
    let cols = be_u32(bytes, 12, "image")? as usize;
    let size = rows * cols;
    let payload = &bytes[16..];
    if payload.len() < count * size {
        return Err(HeError::Idx(format!(
            "image payload truncated: {count} images of {rows}x{cols} need {} bytes, found {}",
            count * size,
            payload.len()
        )));
    }
    payload
        .chunks_exact(size.max(1))
        .take(count)
        .map(|px| Matrix::from_vec(rows, cols, px.iter().map(|&b| f64::from(b) / 255.0).collect()))
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "label")?;
    if magic != LABELS_MAGIC {
        return Err(HeError::Idx(format!("label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4, "label")? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(HeError::Idx(format!(
            "label payload truncated: {count} labels, found {} bytes",
            payload.len()
        )));
    }
    Ok(payload[..count].to_vec())
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<Matrix>> {
    parse_idx_images(&fs::read(path)?)
}

pub fn load_mnist_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<LabeledImages> {
    let images = load_idx_images(images)?;
    let labels = parse_idx_labels(&fs::read(labels)?)?;
    if images.len() != labels.len() {
        return Err(HeError::Idx(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    Ok(LabeledImages { images, labels })
}

/// Serializes images to IDX, rounding each pixel `x` to `round(255·x)`.
pub fn idx_images_bytes(images: &[Matrix]) -> Vec<u8> {
    let (rows, cols) = images.first().map_or((0, 0), |m| (m.rows(), m.cols()));
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for im in images {
        out.extend(im.as_slice().iter().map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    out
}

pub fn idx_labels_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// `size` consecutive images; the final batch is topped up with zero
/// images, which are not counted in `real`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub first: usize,
    pub images: Vec<Matrix>,
    pub real: usize,
}

impl Batch {
    pub fn is_padded(&self, row: usize) -> bool {
        row >= self.real
    }
}

pub fn partition_batches(images: &[Matrix], size: usize) -> Result<Vec<Batch>> {
    if size == 0 {
        return Err(HeError::arg("batch size must be positive"));
    }
    let Some(first) = images.first() else {
        return Ok(Vec::new());
    };
    let (h, w) = (first.rows(), first.cols());
    Ok(images
        .chunks(size)
        .enumerate()
        .map(|(b, chunk)| {
            let mut imgs = chunk.to_vec();
            imgs.resize(size, Matrix::zeros(h, w));
            Batch {
                first: b * size,
                images: imgs,
                real: chunk.len(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(count: usize) -> Vec<Matrix> {
        (0..count)
            .map(|t| Matrix::from_fn(2, 3, |a, b| ((a * 3 + b + t) % 256) as f64 / 255.0))
            .collect()
    }

    #[test]
    fn round_trip() {
        let imgs = tiny(5);
        assert_eq!(parse_idx_images(&idx_images_bytes(&imgs)).unwrap(), imgs);
        assert_eq!(parse_idx_labels(&idx_labels_bytes(&[1, 2, 3])).unwrap(), [1, 2, 3]);
    }

    #[test]
    fn full_byte_is_one() {
        let mut bytes = idx_images_bytes(&[Matrix::zeros(1, 1)]);
        *bytes.last_mut().unwrap() = 255;
        assert_eq!(parse_idx_images(&bytes).unwrap()[0][(0, 0)], 1.0);
    }

    #[test]
    fn malformed_files() {
        let mut bytes = idx_images_bytes(&tiny(2));
        bytes[3] = 0x01;
        assert!(matches!(parse_idx_images(&bytes), Err(HeError::Idx(_))));
        let bytes = idx_images_bytes(&tiny(2));
        assert!(parse_idx_images(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse_idx_images(&bytes[..10]).is_err());
        assert!(parse_idx_labels(&idx_images_bytes(&tiny(1))).is_err());
        assert!(parse_idx_labels(&idx_labels_bytes(&[1, 2])[..9]).is_err());
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        fs::write(&ip, idx_images_bytes(&tiny(3))).unwrap();
        fs::write(&lp, idx_labels_bytes(&[0, 1])).unwrap();
        assert!(load_mnist_idx(&ip, &lp).is_err());
        fs::write(&lp, idx_labels_bytes(&[0, 1, 2])).unwrap();
        assert_eq!(load_mnist_idx(&ip, &lp).unwrap().labels, [0, 1, 2]);
    }

    #[test]
    fn ten_thousand_in_blocks_of_32() {
        let imgs = vec![Matrix::zeros(1, 1); 10_000];
        let batches = partition_batches(&imgs, 32).unwrap();
        assert_eq!(batches.len(), 313);
        let last = batches.last().unwrap();
        assert_eq!((last.first, last.real, last.images.len()), (9984, 16, 32));
        assert!(last.is_padded(16) && !last.is_padded(15));
        assert!(batches[..312].iter().all(|b| b.real == 32));
    }
}

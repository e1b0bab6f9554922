use std::fs;
use std::path::Path;

use super::{Dataset, Example};
use crate::error::{Error, Result};
use crate::nn::{Modality, IMAGE_PIXELS, IMAGE_SIDE};

pub const MNIST_CLASSES: usize = 10;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Maps a raw byte to `[−1, 1]`.
pub fn pixel_value(byte: u8) -> f64 {
    byte as f64 / 127.5 - 1.0
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Data(format!("{what}: truncated header")))
}

fn parse_images(bytes: &[u8]) -> Result<Vec<Vec<u8>>> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Data(format!("images: bad magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(Error::Data(format!("images: expected {IMAGE_SIDE}x{IMAGE_SIDE}, found {rows}x{cols}")));
    }
    let body = &bytes[16..];
    if body.len() < n * IMAGE_PIXELS {
        return Err(Error::Data(format!("images: truncated, {n} images need {} bytes, found {}", n * IMAGE_PIXELS, body.len())));
    }
    Ok(body[..n * IMAGE_PIXELS].chunks_exact(IMAGE_PIXELS).map(<[u8]>::to_vec).collect())
}

fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Data(format!("labels: bad magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Data(format!("labels: truncated, {n} labels but {} bytes", body.len())));
    }
    body[..n]
        .iter()
        .map(|&b| {
            let y = b as usize;
            if y < MNIST_CLASSES {
                Ok(y)
            } else {
                Err(Error::Data(format!("labels: value {y} is not a digit")))
            }
        })
        .collect()
}

/// Parses an IDX image file and its IDX label file.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    mnist_from_bytes(&images, &labels)
}

pub(crate) fn mnist_from_bytes(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let images = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if images.len() != labels.len() {
        return Err(Error::Data(format!("count mismatch: {} images, {} labels", images.len(), labels.len())));
    }
    Dataset::new(Modality::Cv, MNIST_CLASSES, images.into_iter().map(Example::Image).collect(), labels)
}

/// Loads `(train, test)` from a directory holding the four standard files.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_mnist_idx(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"))?;
    let test = load_mnist_idx(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))?;
    Ok((train, test))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn idx_images(images: &[Vec<u8>]) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [IMAGE_MAGIC, images.len() as u32, 28, 28] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        images.iter().for_each(|im| out.extend_from_slice(im));
        out
    }

    pub(crate) fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [LABEL_MAGIC, labels.len() as u32] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(labels);
        out
    }

    #[test]
    fn pixel_endpoints() {
        assert_eq!(pixel_value(0), -1.0);
        assert_eq!(pixel_value(255), 1.0);
    }

    #[test]
    fn parses_well_formed_files() {
        let ims = vec![vec![0u8; IMAGE_PIXELS], vec![255u8; IMAGE_PIXELS]];
        let d = mnist_from_bytes(&idx_images(&ims), &idx_labels(&[3, 9])).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.labels(), &[3, 9]);
        assert_eq!(d.class_count(), 10);
    }

    #[test]
    fn rejects_malformed_files() {
        let ims = vec![vec![0u8; IMAGE_PIXELS]; 2];
        let good = idx_images(&ims);
        let err = mnist_from_bytes(&good, &idx_labels(&[1])).unwrap_err();
        assert!(err.to_string().contains("count mismatch"), "{err}");

        let mut bad = good.clone();
        bad[3] = 0x01;
        assert!(mnist_from_bytes(&bad, &idx_labels(&[1, 2])).unwrap_err().to_string().contains("magic"));

        let short = &good[..good.len() - 1];
        assert!(mnist_from_bytes(short, &idx_labels(&[1, 2])).unwrap_err().to_string().contains("truncated"));
        assert!(mnist_from_bytes(&good, &idx_labels(&[1, 10])).is_err());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_mnist_idx(Path::new("/nonexistent/images"), Path::new("/nonexistent/labels")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/images"), "{err}");
    }
}

//! IDX containers (the MNIST distribution format): big-endian header, raw bytes.

use std::fs;
use std::path::Path;

use crate::entropic::DiscreteMeasure;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// `count` grayscale images of `rows × cols` bytes, stored back to back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 || !pixels.len().is_multiple_of(rows * cols) {
            return Err(Error::InvalidSpec(format!(
                "{} pixel bytes do not split into {rows}x{cols} images",
                pixels.len()
            )));
        }
        Ok(Self { rows, cols, pixels })
    }

    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols)
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for word in [IMAGE_MAGIC, self.count() as u32, self.rows as u32, self.cols as u32] {
            out.extend_from_slice(&word.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let header = read_header(bytes, IMAGE_MAGIC, 3)?;
        let (count, rows, cols) = (header[0], header[1], header[2]);
        let payload = &bytes[16..];
        check_payload(count * rows * cols, payload.len())?;
        Ok(Self {
            rows,
            cols,
            pixels: payload.to_vec(),
        })
    }
}

fn read_header(bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>> {
    let len = 4 * (dims + 1);
    if bytes.len() < 4 {
        return Err(Error::TruncatedFile {
            expected: len,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let found = word(0);
    if found != magic {
        return Err(Error::BadMagic { expected: magic, found });
    }
    if bytes.len() < len {
        return Err(Error::TruncatedFile {
            expected: len,
            found: bytes.len(),
        });
    }
    Ok((1..=dims).map(|i| word(i) as usize).collect())
}

fn check_payload(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::TruncatedFile { expected, found });
    }
    Ok(())
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let count = read_header(bytes, LABEL_MAGIC, 1)?[0];
    check_payload(count, bytes.len() - 8)?;
    Ok(bytes[8..].to_vec())
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    IdxImages::decode(&fs::read(path)?)
}

pub fn write_idx_images(path: &Path, images: &IdxImages) -> Result<()> {
    Ok(fs::write(path, images.encode())?)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    decode_labels(&fs::read(path)?)
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    Ok(fs::write(path, encode_labels(labels))?)
}

/// Images as measures (intensity / total intensity), optionally restricted to one label.
pub fn load_idx_images<T: Scalar>(
    path: &Path,
    label_path: Option<&Path>,
    label_filter: Option<u8>,
) -> Result<Vec<DiscreteMeasure<T>>> {
    let images = read_idx_images(path)?;
    let labels = match label_path {
        Some(p) => {
            let labels = read_idx_labels(p)?;
            if labels.len() != images.count() {
                return Err(Error::CountMismatch {
                    images: images.count(),
                    labels: labels.len(),
                });
            }
            Some(labels)
        }
        None => None,
    };
    if label_filter.is_some() && labels.is_none() {
        return Err(Error::InvalidConfig("a label filter needs a label file".into()));
    }
    (0..images.count())
        .filter(|&i| match (label_filter, &labels) {
            (Some(want), Some(l)) => l[i] == want,
            _ => true,
        })
        .map(|i| image_measure(&images, i))
        .collect()
}

fn image_measure<T: Scalar>(images: &IdxImages, i: usize) -> Result<DiscreteMeasure<T>> {
    let values = images.image(i).iter().map(|&p| T::lit(p as f64)).collect();
    DiscreteMeasure::from_intensities(images.rows, images.cols, values).map_err(|e| match e {
        Error::ZeroMass => Error::ZeroImage { index: i },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> IdxImages {
        IdxImages::new(2, 3, vec![0, 1, 2, 3, 4, 5, 255, 0, 0, 0, 0, 255]).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = fixture().encode();
        assert_eq!(&bytes[..16], &[0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3]);
        assert_eq!(IdxImages::decode(&bytes).unwrap(), fixture());
        assert_eq!(&encode_labels(&[7, 1])[..], &[0, 0, 8, 1, 0, 0, 0, 2, 7, 1]);
    }

    #[test]
    fn malformed_inputs() {
        let mut bytes = fixture().encode();
        assert!(matches!(
            decode_labels(&bytes),
            Err(Error::BadMagic {
                expected: LABEL_MAGIC,
                found: IMAGE_MAGIC
            })
        ));
        bytes.pop();
        assert!(matches!(
            IdxImages::decode(&bytes),
            Err(Error::TruncatedFile {
                expected: 12,
                found: 11
            })
        ));
        assert!(matches!(
            IdxImages::decode(&bytes[..10]),
            Err(Error::TruncatedFile { .. })
        ));
        assert!(matches!(IdxImages::decode(&[0, 0]), Err(Error::TruncatedFile { .. })));
    }
}

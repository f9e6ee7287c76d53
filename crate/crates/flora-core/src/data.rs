//! Dataset carrier, IDX file ingestion, and a synthetic cluster task.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gauss::{derive_seed, uniform_bits, GaussStream};
use crate::matrix::Matrix;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CLASS_COUNT: usize = 10;

/// Labeled feature vectors with a fixed dimension and class count.
#[derive(Debug, Clone)]
pub struct Dataset {
    feats: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(feats: Vec<f64>, dim: usize, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if dim == 0 || n_classes == 0 {
            return Err(Error::config(
                "dataset dim and class count must be positive".to_string(),
            ));
        }
        if feats.len() != labels.len() * dim {
            return Err(Error::shape(format!(
                "feature buffer has {} scalars for {} examples of dim {dim}",
                feats.len(),
                labels.len()
            )));
        }
        if feats.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(
                "dataset features contain non-finite values".to_string(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::data(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Dataset {
            feats,
            dim,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.feats[i * self.dim..(i + 1) * self.dim]
    }

    /// Gathers the given examples into a `len x dim` batch matrix.
    pub fn batch(&self, idxs: &[usize]) -> (Matrix, Vec<usize>) {
        let mut data = Vec::with_capacity(idxs.len() * self.dim);
        let mut labels = Vec::with_capacity(idxs.len());
        for &i in idxs {
            data.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        let m = Matrix::from_fn(idxs.len(), self.dim, |r, c| data[r * self.dim + c]);
        (m, labels)
    }

    /// Deterministic Fisher-Yates permutation of example indices.
    pub fn shuffled_indices(&self, seed: u64) -> Vec<usize> {
        let mut idxs: Vec<usize> = (0..self.len()).collect();
        for i in (1..idxs.len()).rev() {
            let j = (uniform_bits(seed, i as u64) % (i as u64 + 1)) as usize;
            idxs.swap(i, j);
        }
        idxs
    }

    /// New dataset holding only the selected examples, in order.
    pub fn subset(&self, idxs: &[usize]) -> Dataset {
        let mut feats = Vec::with_capacity(idxs.len() * self.dim);
        let mut labels = Vec::with_capacity(idxs.len());
        for &i in idxs {
            feats.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            feats,
            dim: self.dim,
            labels,
            n_classes: self.n_classes,
        }
    }
}

/// Loads an IDX image/label pair (Fashion-MNIST layout: 10 classes, pixels
/// scaled to [0, 1]). Gzip-compressed files are decompressed transparently;
/// byte offsets in errors then refer to the decompressed stream.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = read_maybe_gzip(images_path)?;
    let labels = read_maybe_gzip(labels_path)?;

    let magic = read_u32_be(&images, 0, "images magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad images magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = read_u32_be(&images, 4, "image count")? as usize;
    let rows = read_u32_be(&images, 8, "image rows")? as usize;
    let cols = read_u32_be(&images, 12, "image cols")? as usize;
    let dim = rows * cols;
    if dim == 0 {
        return Err(Error::Format {
            offset: 8,
            msg: format!("degenerate image dims {rows}x{cols}"),
        });
    }
    let want = 16 + count * dim;
    if images.len() < want {
        return Err(Error::Format {
            offset: images.len() as u64,
            msg: format!("images truncated: have {} bytes, need {want}", images.len()),
        });
    }

    let lmagic = read_u32_be(&labels, 0, "labels magic")?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad labels magic {lmagic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let lcount = read_u32_be(&labels, 4, "label count")? as usize;
    if lcount != count {
        return Err(Error::Format {
            offset: 4,
            msg: format!("label count {lcount} does not match image count {count}"),
        });
    }
    if labels.len() < 8 + count {
        return Err(Error::Format {
            offset: labels.len() as u64,
            msg: format!(
                "labels truncated: have {} bytes, need {}",
                labels.len(),
                8 + count
            ),
        });
    }

    let mut feats = Vec::with_capacity(count * dim);
    for &px in &images[16..16 + count * dim] {
        feats.push(px as f64 / 255.0);
    }
    let mut label_vals = Vec::with_capacity(count);
    for (i, &raw) in labels[8..8 + count].iter().enumerate() {
        let label = raw as usize;
        if label >= CLASS_COUNT {
            return Err(Error::Format {
                offset: (8 + i) as u64,
                msg: format!("label {label} out of range for {CLASS_COUNT} classes"),
            });
        }
        label_vals.push(label);
    }
    Dataset::new(feats, dim, label_vals, CLASS_COUNT)
}

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            msg: format!("truncated while reading {what}"),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Synthetic cluster task: one Gaussian cluster per class with unit noise,
/// centers drawn at a fixed separation. Examples are laid out class-major;
/// everything is a pure function of the seed.
pub fn synth_blobs(seed: u64, n_per_class: usize, dim: usize, classes: usize) -> Dataset {
    let separation = 12.0;
    let mut feats = Vec::with_capacity(n_per_class * classes * dim);
    let mut labels = Vec::with_capacity(n_per_class * classes);
    for c in 0..classes {
        let mut center_stream = GaussStream::new(derive_seed(seed, c as u64, 0));
        let mut center = center_stream.gauss_vec(dim);
        let norm = center.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in &mut center {
            *v *= separation / norm;
        }
        let mut noise = GaussStream::new(derive_seed(seed, c as u64, 1));
        for _ in 0..n_per_class {
            for &cv in &center {
                feats.push(cv + noise.next_gauss());
            }
            labels.push(c);
        }
    }
    Dataset {
        feats,
        dim,
        labels,
        n_classes: classes,
    }
}

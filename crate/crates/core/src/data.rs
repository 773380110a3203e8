//! Grayscale IDX datasets, deterministic batching and Gaussian corruption.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::ndgrad::{Rng, Tensor};
use crate::scalar::Scalar;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Images scaled to `[0, 1]` (`byte / 255`) with optional class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxDataset<T = f64> {
    /// `N × (rows·cols)`
    pub images: Tensor<T>,
    pub labels: Option<Vec<u8>>,
    pub rows: usize,
    pub cols: usize,
}

/// A batch of images drawn from a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch<T = f64> {
    /// `B × D`, every pixel in `[0, 1]`
    pub pixels: Tensor<T>,
    pub labels: Option<Vec<u8>>,
    /// Row of each sample in the source dataset.
    pub indices: Vec<usize>,
}

impl<T: Scalar> ImageBatch<T> {
    pub fn len(&self) -> usize {
        self.pixels.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Framing(format!("file ends inside the {what} header")))
}

fn payload<'a>(bytes: &'a [u8], header: usize, dims: &[usize]) -> Result<&'a [u8]> {
    let need = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Framing(format!("dimensions {dims:?} overflow")))?;
    let body = &bytes[header..];
    if body.len() < need {
        return Err(Error::Framing(format!(
            "expected {need} data bytes, file holds {}",
            body.len()
        )));
    }
    if body.len() > need {
        return Err(Error::Framing(format!(
            "{} trailing bytes after {need} data bytes",
            body.len() - need
        )));
    }
    Ok(body)
}

/// Parses an IDX image file (`0x00000803`, three dimensions).
pub fn parse_idx_images<T: Scalar>(bytes: &[u8]) -> Result<(Tensor<T>, usize, usize)> {
    let magic = read_u32(bytes, 0, "image")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "expected image magic 0x{IDX_IMAGES_MAGIC:08x}, found 0x{magic:08x}"
        )));
    }
    let n = read_u32(bytes, 4, "image")? as usize;
    let rows = read_u32(bytes, 8, "image")? as usize;
    let cols = read_u32(bytes, 12, "image")? as usize;
    let body = payload(bytes, 16, &[n, rows, cols])?;
    let scale = T::of(255.0);
    let data = body.iter().map(|&v| T::of(f64::from(v)) / scale).collect();
    Ok((Tensor::matrix(n, rows * cols, data)?, rows, cols))
}

/// Parses an IDX label file (`0x00000801`, one dimension).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0, "label")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "expected label magic 0x{IDX_LABELS_MAGIC:08x}, found 0x{magic:08x}"
        )));
    }
    let n = read_u32(bytes, 4, "label")? as usize;
    Ok(payload(bytes, 8, &[n])?.to_vec())
}

pub fn load_idx<T: Scalar>(images_path: &Path, labels_path: Option<&Path>) -> Result<IdxDataset<T>> {
    let (images, rows, cols) = parse_idx_images(&fs::read(images_path)?)?;
    let labels = labels_path.map(fs::read).transpose()?.map(|b| parse_idx_labels(&b)).transpose()?;
    IdxDataset::new(images, labels, rows, cols)
}

fn quantize<T: Scalar>(v: T) -> u8 {
    (v.f64() * 255.0).round().clamp(0.0, 255.0) as u8
}

/// IDX image bytes; pixels are quantized with `round(v·255)`.
pub fn encode_idx_images<T: Scalar>(images: &Tensor<T>, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if images.cols() != rows * cols {
        return Err(Error::dim(format!(
            "{} pixels per image for a {rows}x{cols} grid",
            images.cols()
        )));
    }
    let mut out = Vec::with_capacity(16 + images.len());
    for v in [IDX_IMAGES_MAGIC, images.rows() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(images.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

impl<T: Scalar> IdxDataset<T> {
    pub fn new(images: Tensor<T>, labels: Option<Vec<u8>>, rows: usize, cols: usize) -> Result<Self> {
        images.ensure_matrix("dataset images")?;
        if images.cols() != rows * cols {
            return Err(Error::Consistency(format!(
                "{} pixels per image but {rows}x{cols} geometry",
                images.cols()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != images.rows() {
                return Err(Error::Consistency(format!(
                    "{} images but {} labels",
                    images.rows(),
                    l.len()
                )));
            }
        }
        Ok(IdxDataset {
            images,
            labels,
            rows,
            cols,
        })
    }

    pub fn len(&self) -> usize {
        self.images.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Writes the images (and labels, when present and a path is given) as IDX.
    pub fn save(&self, images_path: &Path, labels_path: Option<&Path>) -> Result<()> {
        fs::write(images_path, encode_idx_images(&self.images, self.rows, self.cols)?)?;
        if let (Some(p), Some(l)) = (labels_path, &self.labels) {
            fs::write(p, encode_idx_labels(l))?;
        }
        Ok(())
    }

    /// The first `n` samples (or all of them if fewer).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        IdxDataset {
            images: self.images.select_rows(indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn batch(&self, indices: &[usize]) -> ImageBatch<T> {
        ImageBatch {
            pixels: self.images.select_rows(indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            indices: indices.to_vec(),
        }
    }

    /// Every sample, in order, as one batch.
    pub fn all(&self) -> ImageBatch<T> {
        ImageBatch {
            pixels: self.images.clone(),
            labels: self.labels.clone(),
            indices: (0..self.len()).collect(),
        }
    }
}

/// Sample order for one pass: identity, or a seeded Fisher–Yates shuffle.
pub fn epoch_order(n: usize, seed: u64, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(&mut Rng::new(seed));
    }
    order
}

/// Iterator over full batches of one pass; the final partial batch is dropped.
pub struct BatchIter<'a, T> {
    dataset: &'a IdxDataset<T>,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl<T: Scalar> Iterator for BatchIter<'_, T> {
    type Item = ImageBatch<T>;

    fn next(&mut self) -> Option<Self::Item> {
        let end = self.pos + self.batch_size;
        if end > self.order.len() {
            return None;
        }
        let batch = self.dataset.batch(&self.order[self.pos..end]);
        self.pos = end;
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.order.len() - self.pos) / self.batch_size;
        (n, Some(n))
    }
}

impl<T: Scalar> ExactSizeIterator for BatchIter<'_, T> {}

pub fn batch_iter<T: Scalar>(
    dataset: &IdxDataset<T>,
    batch_size: usize,
    seed: u64,
    shuffle: bool,
) -> Result<BatchIter<'_, T>> {
    if batch_size == 0 || batch_size > dataset.len() {
        return Err(Error::param(format!(
            "batch size {batch_size} invalid for {} samples",
            dataset.len()
        )));
    }
    Ok(BatchIter {
        dataset,
        order: epoch_order(dataset.len(), seed, shuffle),
        batch_size,
        pos: 0,
    })
}

/// Adds `N(0, sigma²)` to every pixel (one draw per pixel, row-major) and
/// clamps the result to `[0, 1]`.
pub fn corrupt_gaussian<T: Scalar>(batch: &ImageBatch<T>, sigma_noise: T, rng: &mut Rng) -> Result<ImageBatch<T>> {
    if !(sigma_noise >= T::zero()) {
        return Err(Error::param(format!("noise level must be non-negative, got {sigma_noise}")));
    }
    let mut out = batch.clone();
    if sigma_noise == T::zero() {
        return Ok(out);
    }
    let s = sigma_noise.f64();
    for v in out.pixels.data_mut() {
        *v = T::of((v.f64() + s * rng.standard_normal()).clamp(0.0, 1.0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::gaussian_draw;

    fn fixture() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2];
        b.extend_from_slice(&[0, 128, 255, 64]);
        b
    }

    #[test]
    fn parses_crafted_file() {
        let (t, r, c) = parse_idx_images::<f64>(&fixture()).unwrap();
        assert_eq!((r, c), (2, 2));
        assert_eq!(t.shape(), &[1, 4]);
        let expected = [0.0, 0.50196, 1.0, 0.25098];
        for (a, e) in t.data().iter().zip(expected) {
            assert!((a - e).abs() < 1e-5);
        }
        assert_eq!(t.data()[1], 128.0 / 255.0);
        assert_eq!(t.data()[2], 1.0);
    }

    #[test]
    fn label_magic_rejected_for_images() {
        let mut b = fixture();
        b[3] = 1;
        assert!(matches!(parse_idx_images::<f64>(&b), Err(Error::Format(_))));
        assert!(matches!(parse_idx_labels(&fixture()), Err(Error::Format(_))));
    }

    #[test]
    fn framing_errors() {
        let b = fixture();
        assert!(matches!(parse_idx_images::<f64>(&b[..b.len() - 1]), Err(Error::Framing(_))));
        assert!(matches!(parse_idx_images::<f64>(&b[..10]), Err(Error::Framing(_))));
        let mut long = b.clone();
        long.push(7);
        assert!(matches!(parse_idx_images::<f64>(&long), Err(Error::Framing(_))));
        let mut huge = vec![0, 0, 8, 3];
        for _ in 0..3 {
            huge.extend_from_slice(&u32::MAX.to_be_bytes());
        }
        assert!(matches!(parse_idx_images::<f64>(&huge), Err(Error::Framing(_))));
    }

    #[test]
    fn label_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lab");
        fs::write(&ip, fixture()).unwrap();
        fs::write(&lp, encode_idx_labels(&[1, 2])).unwrap();
        assert!(matches!(load_idx::<f64>(&ip, Some(&lp)), Err(Error::Consistency(_))));
        fs::write(&lp, encode_idx_labels(&[7])).unwrap();
        let ds = load_idx::<f64>(&ip, Some(&lp)).unwrap();
        assert_eq!(ds.labels, Some(vec![7]));
    }

    #[test]
    fn drop_last_batching() {
        let ds = IdxDataset::new(Tensor::<f64>::zeros(&[10, 4]), None, 2, 2).unwrap();
        let batches: Vec<_> = batch_iter(&ds, 3, 0, false).unwrap().collect();
        assert_eq!(batches.len(), 3);
        assert_eq!(batches[0].indices, vec![0, 1, 2]);
        assert_eq!(batches[2].indices, vec![6, 7, 8]);
        assert!(batch_iter(&ds, 11, 0, false).is_err());
        assert!(batch_iter(&ds, 0, 0, false).is_err());
    }

    #[test]
    fn shuffled_batches_are_seeded_permutations() {
        let ds = IdxDataset::new(Tensor::<f64>::zeros(&[103, 1]), None, 1, 1).unwrap();
        let a: Vec<_> = batch_iter(&ds, 10, 42, true).unwrap().flat_map(|b| b.indices).collect();
        let b: Vec<_> = batch_iter(&ds, 10, 42, true).unwrap().flat_map(|b| b.indices).collect();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 100);
        assert!(sorted.iter().all(|&i| i < 103));
        let c: Vec<_> = batch_iter(&ds, 10, 43, true).unwrap().flat_map(|b| b.indices).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn corruption() {
        let ds = IdxDataset::new(Tensor::full(&[100, 1000], 0.5f64), None, 1, 1000).unwrap();
        let batch = ds.all();
        assert_eq!(corrupt_gaussian(&batch, 0.0, &mut Rng::new(1)).unwrap(), batch);
        let noisy = corrupt_gaussian(&batch, 0.5, &mut Rng::new(1)).unwrap();
        assert!(noisy.pixels.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        // the same stream replayed gives the pre-clamp noise field
        let noise = gaussian_draw(&mut Rng::new(1), 100_000, 0.0f64, 0.5);
        let n = noise.len() as f64;
        let mean = noise.sum() / n;
        let std = (noise.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 0.5).abs() <= 0.01, "{std}");
        for (o, e) in noisy.pixels.data().iter().zip(noise.data()) {
            assert_eq!(*o, (0.5 + e).clamp(0.0, 1.0));
        }
        assert!(corrupt_gaussian(&batch, -0.1, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn split_seed_noise_is_uncorrelated() {
        let a = gaussian_draw(&mut Rng::stream(5, 1), 100_000, 0.0f64, 1.0);
        let b = gaussian_draw(&mut Rng::stream(5, 2), 100_000, 0.0f64, 1.0);
        let n = a.len() as f64;
        let (ma, mb) = (a.sum() / n, b.sum() / n);
        let cov: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va: f64 = a.data().iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
        let vb: f64 = b.data().iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
        assert!((cov / (va * vb).sqrt()).abs() < 0.01);
    }
}

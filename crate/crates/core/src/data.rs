//! Datasets: IDX image/label files, synthetic 2-D problems, batching.
//!
//! IDX is the big-endian container used by MNIST and Fashion-MNIST. Image
//! files start with magic `0x00000803` followed by `count, rows, cols`;
//! label files with `0x00000801` and `count`. Gzipped files are detected by
//! their `1f 8b` prefix and decompressed transparently.

use std::f64::consts::PI;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: expected {expected} payload bytes, found {found}")]
    Length {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{images} images but {labels} labels")]
    Consistency { images: usize, labels: usize },
    #[error("invalid input: {0}")]
    Input(String),
}

impl DataError {
    fn io(path: &Path, source: io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[N, C, H, W]`.
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let raw = fs::read(path).map_err(|e| DataError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| DataError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<usize, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
        .ok_or_else(|| DataError::Format {
            path: path.to_path_buf(),
            reason: "truncated header".into(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<(), DataError> {
    let magic = be_u32(bytes, 0, path)? as u32;
    if magic != expected {
        return Err(DataError::Format {
            path: path.to_path_buf(),
            reason: format!("magic {magic:#010x}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

fn checked_payload<'a>(
    bytes: &'a [u8],
    header: usize,
    expected: usize,
    path: &Path,
) -> Result<&'a [u8], DataError> {
    let found = bytes.len().saturating_sub(header);
    if found != expected {
        return Err(DataError::Length {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(&bytes[header..])
}

/// Reads an IDX image/label pair. Pixels are scaled by 1/255 into `[0, 1]`.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset, DataError> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let img = read_maybe_gz(ip)?;
    check_magic(&img, IDX_IMAGES_MAGIC, ip)?;
    let (count, rows, cols) = (
        be_u32(&img, 4, ip)?,
        be_u32(&img, 8, ip)?,
        be_u32(&img, 12, ip)?,
    );
    let pixels = checked_payload(&img, 16, count * rows * cols, ip)?;

    let lab = read_maybe_gz(lp)?;
    check_magic(&lab, IDX_LABELS_MAGIC, lp)?;
    let label_count = be_u32(&lab, 4, lp)?;
    let labels = checked_payload(&lab, 8, label_count, lp)?;
    if label_count != count {
        return Err(DataError::Consistency {
            images: count,
            labels: label_count,
        });
    }

    let data = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels: Vec<usize> = labels.iter().map(|&b| usize::from(b)).collect();
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    Ok(Dataset {
        images: Tensor::new(vec![count, 1, rows, cols], data).expect("payload length checked"),
        labels,
        class_count,
    })
}

/// Standard MNIST-style file names inside `dir`, plain or gzipped.
pub fn load_idx_dir(dir: impl AsRef<Path>, split: &str) -> Result<Dataset, DataError> {
    let dir = dir.as_ref();
    let pick = |stem: String| {
        let plain = dir.join(&stem);
        let gz = dir.join(format!("{stem}.gz"));
        if !plain.exists() && gz.exists() {
            gz
        } else {
            plain
        }
    };
    let prefix = match split {
        "train" => "train",
        "test" | "t10k" => "t10k",
        other => return Err(DataError::Input(format!("unknown split `{other}`"))),
    };
    load_idx(
        pick(format!("{prefix}-images-idx3-ubyte")),
        pick(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Writes a single-channel dataset as an IDX pair, quantizing each value to
/// `round(v * 255)` after clamping to `[0, 1]`.
pub fn write_idx(
    ds: &Dataset,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let shape = ds.images.shape();
    if shape.len() != 4 || shape[1] != 1 {
        return Err(DataError::Input(format!(
            "IDX images need shape [N, 1, H, W], got {shape:?}"
        )));
    }
    if let Some(&l) = ds.labels.iter().find(|&&l| l > 255) {
        return Err(DataError::Input(format!(
            "label {l} does not fit in a byte"
        )));
    }
    let mut img = Vec::with_capacity(16 + ds.images.len());
    for v in [IDX_IMAGES_MAGIC as usize, shape[0], shape[2], shape[3]] {
        img.extend_from_slice(&(v as u32).to_be_bytes());
    }
    img.extend(
        ds.images
            .data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    let mut lab = Vec::with_capacity(8 + ds.labels.len());
    for v in [IDX_LABELS_MAGIC as usize, ds.labels.len()] {
        lab.extend_from_slice(&(v as u32).to_be_bytes());
    }
    lab.extend(ds.labels.iter().map(|&l| l as u8));
    for (path, bytes) in [(images_path.as_ref(), img), (labels_path.as_ref(), lab)] {
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| DataError::io(path, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Two isotropic Gaussians centred at `(-2, 0)` and `(2, 0)`.
    TwoGaussians,
    /// Two interleaved 2-turn spirals of unit outer radius.
    Spirals,
}

/// Balanced two-class 2-D problem with features shaped `[n, 1, 1, 2]`.
/// Even indices are class 0, odd indices class 1.
pub fn synth_classification(
    kind: SynthKind,
    n: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if n < 2 {
        return Err(DataError::Input(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(DataError::Input(format!(
            "noise must be finite and >= 0, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let per_class = n.div_ceil(2) as f64;
    for i in 0..n {
        let class = i % 2;
        let (x, y) = match kind {
            SynthKind::TwoGaussians => (if class == 0 { -2.0 } else { 2.0 }, 0.0),
            SynthKind::Spirals => {
                let t = (i / 2) as f64 / per_class;
                let theta = 4.0 * PI * t + class as f64 * PI;
                (t * theta.cos(), t * theta.sin())
            }
        };
        let ex: f64 = StandardNormal.sample(&mut rng);
        let ey: f64 = StandardNormal.sample(&mut rng);
        data.push(x + noise * ex);
        data.push(y + noise * ey);
        labels.push(class);
    }
    Ok(Dataset {
        images: Tensor::new(vec![n, 1, 1, 2], data).expect("2 features per sample"),
        labels,
        class_count: 2,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample shape `[C, H, W]`.
    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    /// First `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images.slice_batch(0, n),
            labels: self.labels[..n].to_vec(),
            class_count: self.class_count,
        }
    }

    /// Per-channel mean and (population) standard deviation.
    pub fn channel_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let [c, h, w] = self.sample_shape();
        let plane = h * w;
        let count = (self.len() * plane) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for sample in self.images.data().chunks(c * plane) {
            for (ch, px) in sample.chunks(plane).enumerate() {
                mean[ch] += px.iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        for sample in self.images.data().chunks(c * plane) {
            for (ch, px) in sample.chunks(plane).enumerate() {
                var[ch] += px.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
            }
        }
        let std = var.iter().map(|v| (v / count).sqrt()).collect();
        (mean, std)
    }

    /// `(v - mean[c]) / std[c]` per channel. Zero deviations leave the
    /// channel centred but unscaled.
    pub fn standardize(&mut self, mean: &[f64], std: &[f64]) {
        let [c, h, w] = self.sample_shape();
        let plane = h * w;
        for sample in self.images.data_mut().chunks_mut(c * plane) {
            for (ch, px) in sample.chunks_mut(plane).enumerate() {
                let s = if std[ch] > 0.0 { std[ch] } else { 1.0 };
                px.iter_mut().for_each(|v| *v = (*v - mean[ch]) / s);
            }
        }
    }

    /// Mini-batches in index order, or shuffled by `shuffle_seed`. The last
    /// batch may be short.
    pub fn batches(&self, batch_size: usize, shuffle_seed: Option<u64>) -> Batches<'_> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        if let Some(seed) = shuffle_seed {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        Batches {
            ds: self,
            order,
            batch_size: batch_size.max(1),
            pos: 0,
        }
    }
}

pub struct Batches<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = (Tensor, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let rows = &self.order[self.pos..end];
        self.pos = end;
        let images = self.ds.images.gather_batch(rows);
        let labels = rows.iter().map(|&r| self.ds.labels[r]).collect();
        Some((images, labels))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for Batches<'_> {}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, bytes: &[u8]) {
        fs::write(path, bytes).unwrap();
    }

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn loads_tiny_idx_pair() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        let mut img = header(IDX_IMAGES_MAGIC, &[2, 2, 2]);
        img.extend_from_slice(&[0, 255, 51, 102, 255, 0, 0, 255]);
        write(&ip, &img);
        let mut lab = header(IDX_LABELS_MAGIC, &[2]);
        lab.extend_from_slice(&[3, 7]);
        write(&lp, &lab);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.images.shape(), &[2, 1, 2, 2]);
        assert_eq!(&ds.images.data()[..4], &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.labels, vec![3, 7]);
        assert_eq!(ds.class_count, 8);
    }

    #[test]
    fn rejects_wrong_magic_truncation_and_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        let mut lab = header(IDX_LABELS_MAGIC, &[1]);
        lab.push(0);
        write(&lp, &lab);
        // A label file passed as images.
        assert!(matches!(load_idx(&lp, &lp), Err(DataError::Format { .. })));

        let mut img = header(IDX_IMAGES_MAGIC, &[1, 2, 2]);
        img.extend_from_slice(&[1, 2, 3]);
        write(&ip, &img);
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(DataError::Length {
                expected: 4,
                found: 3,
                ..
            })
        ));

        let mut img = header(IDX_IMAGES_MAGIC, &[2, 1, 1]);
        img.extend_from_slice(&[1, 2]);
        write(&ip, &img);
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(DataError::Consistency {
                images: 2,
                labels: 1
            })
        ));
        assert!(matches!(
            load_idx(dir.path().join("missing"), &lp),
            Err(DataError::Io { .. })
        ));
    }

    #[test]
    fn gzip_is_sniffed() {
        use flate2::write::GzEncoder;
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img.gz"), dir.path().join("lab"));
        let mut img = header(IDX_IMAGES_MAGIC, &[1, 1, 3]);
        img.extend_from_slice(&[0, 128, 255]);
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&img).unwrap();
        write(&ip, &enc.finish().unwrap());
        let mut lab = header(IDX_LABELS_MAGIC, &[1]);
        lab.push(1);
        write(&lp, &lab);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.images.data(), &[0.0, 128.0 / 255.0, 1.0]);
    }

    #[test]
    fn write_then_load_round_trips_quantized_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        let ds = Dataset {
            images: Tensor::from_fn(&[3, 1, 4, 5], |i| ((i * 37) % 256) as f64 / 255.0),
            labels: vec![0, 9, 4],
            class_count: 10,
        };
        write_idx(&ds, &ip, &lp).unwrap();
        let back = load_idx(&ip, &lp).unwrap();
        assert_eq!(back.images, ds.images);
        assert_eq!(back.labels, ds.labels);
    }

    #[test]
    fn synthetic_sets_are_seeded_and_balanced() {
        let a = synth_classification(SynthKind::Spirals, 101, 0.05, 3).unwrap();
        let b = synth_classification(SynthKind::Spirals, 101, 0.05, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.images.shape(), &[101, 1, 1, 2]);
        let ones = a.labels.iter().filter(|&&l| l == 1).count();
        assert_eq!(ones, 50);
        assert!(synth_classification(SynthKind::TwoGaussians, 1, 0.0, 0).is_err());
        assert!(synth_classification(SynthKind::TwoGaussians, 4, -1.0, 0).is_err());
        let g = synth_classification(SynthKind::TwoGaussians, 4, 0.0, 0).unwrap();
        assert_eq!(g.images.data(), &[-2.0, 0.0, 2.0, 0.0, -2.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn batching_partitions_the_dataset() {
        let ds = synth_classification(SynthKind::TwoGaussians, 10, 1.0, 0).unwrap();
        let sizes: Vec<usize> = ds.batches(4, None).map(|(x, _)| x.batch()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let a: Vec<_> = ds.batches(4, Some(11)).collect();
        let b: Vec<_> = ds.batches(4, Some(11)).collect();
        assert_eq!(a, b);
        let mut seen: Vec<(u64, u64)> = a
            .iter()
            .flat_map(|(x, _)| x.data().chunks(2).map(|p| (p[0].to_bits(), p[1].to_bits())))
            .collect();
        let mut all: Vec<(u64, u64)> = ds
            .images
            .data()
            .chunks(2)
            .map(|p| (p[0].to_bits(), p[1].to_bits()))
            .collect();
        seen.sort();
        all.sort();
        assert_eq!(seen, all);
    }

    #[test]
    fn standardize_centres_channels() {
        let mut ds = synth_classification(SynthKind::TwoGaussians, 200, 0.5, 1).unwrap();
        let (m, s) = ds.channel_stats();
        ds.standardize(&m, &s);
        let (m2, s2) = ds.channel_stats();
        assert!(m2[0].abs() < 1e-12);
        assert!((s2[0] - 1.0).abs() < 1e-12);
    }
}

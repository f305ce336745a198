//! MNIST IDX ingestion and preprocessing.
//!
//! The IDX container is a big-endian `u32` magic (`0x00000803` for images,
//! `0x00000801` for labels), one big-endian `u32` per dimension, and an
//! unsigned-byte payload in row-major order. Streams may be gzipped; the
//! loader sniffs the two-byte gzip magic.

use std::borrow::Cow;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::tensor::{lit, Scalar, Shape, Tensor};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const CLASSES: usize = 10;
pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Undecoded image payload: `count` images of `rows × cols` bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl RawImages {
    /// Dimensions as an NHWC tensor shape with one channel.
    pub fn dims(&self) -> [usize; 4] {
        [self.count, self.rows, self.cols, 1]
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[i * size..(i + 1) * size]
    }

    /// Serializes back to an uncompressed IDX image stream.
    pub fn to_idx_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for word in [IMAGE_MAGIC, self.count as u32, self.rows as u32, self.cols as u32] {
            out.extend_from_slice(&word.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Serializes labels as an uncompressed IDX label stream.
pub fn labels_to_idx_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn decompress(bytes: &[u8]) -> Result<Cow<'_, [u8]>> {
    if bytes.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("corrupt gzip stream: {e}")))?;
        Ok(Cow::Owned(out))
    } else {
        Ok(Cow::Borrowed(bytes))
    }
}

fn be_u32(bytes: &[u8], word: usize) -> Result<u32> {
    let start = word * 4;
    let chunk = bytes.get(start..start + 4).ok_or(Error::Length {
        expected: start + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("four bytes")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = be_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::Format(format!(
            "bad IDX magic {magic:#010x}, expected {expected:#010x}"
        )));
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, declared: &[usize]) -> Result<Vec<u8>> {
    let len = declared
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("declared dimensions {declared:?} overflow")))?;
    let expected = header + len;
    if bytes.len() < expected {
        return Err(Error::Length {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after IDX payload",
            bytes.len() - expected
        )));
    }
    Ok(bytes[header..].to_vec())
}

/// Parses an IDX image stream (raw or gzipped).
pub fn load_idx_images(bytes: &[u8]) -> Result<RawImages> {
    let bytes = decompress(bytes)?;
    check_magic(&bytes, IMAGE_MAGIC)?;
    let count = be_u32(&bytes, 1)? as usize;
    let rows = be_u32(&bytes, 2)? as usize;
    let cols = be_u32(&bytes, 3)? as usize;
    if count == 0 || rows == 0 || cols == 0 {
        return Err(Error::Format(format!("empty image set {count}x{rows}x{cols}")));
    }
    let pixels = payload(&bytes, 16, &[count, rows, cols])?;
    Ok(RawImages {
        count,
        rows,
        cols,
        pixels,
    })
}

/// Parses an IDX label stream (raw or gzipped); every label must be 0–9.
pub fn load_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let bytes = decompress(bytes)?;
    check_magic(&bytes, LABEL_MAGIC)?;
    let count = be_u32(&bytes, 1)? as usize;
    let labels = payload(&bytes, 8, &[count])?;
    if let Some(pos) = labels.iter().position(|&l| l as usize >= CLASSES) {
        return Err(Error::Format(format!("label {} at index {pos} exceeds 9", labels[pos])));
    }
    Ok(labels)
}

/// Maps each byte `v` to `v / 255`, giving values in `[0, 1]`.
pub fn normalize<T: Scalar>(raw: &RawImages) -> Result<Tensor<T>> {
    let scale = lit::<T>(255.0);
    let data = raw.pixels.iter().map(|&p| lit::<T>(p as f64) / scale).collect();
    Ok(Tensor::from_parts(Shape::new(&raw.dims())?, data))
}

pub fn one_hot<T: Scalar>(labels: &[u8], classes: usize) -> Result<Tensor<T>> {
    if labels.is_empty() {
        return Err(Error::Domain("cannot one-hot encode an empty label list".into()));
    }
    let mut data = vec![T::zero(); labels.len() * classes];
    for (i, &label) in labels.iter().enumerate() {
        let label = label as usize;
        if label >= classes {
            return Err(Error::Domain(format!(
                "label {label} at index {i} outside 0..{classes}"
            )));
        }
        data[i * classes + label] = T::one();
    }
    Ok(Tensor::from_parts(Shape::new(&[labels.len(), classes])?, data))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Train,
    Test,
}

/// Normalized images with integer and one-hot labels.
#[derive(Clone, Debug)]
pub struct LabeledDataset<T: Scalar = f32> {
    /// `[n, rows, cols, 1]`, values in `[0, 1]`.
    pub images: Tensor<T>,
    pub labels: Vec<u8>,
    /// `[n, 10]`.
    pub one_hot: Tensor<T>,
    pub role: Role,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn from_raw(raw: &RawImages, labels: Vec<u8>, role: Role) -> Result<Self> {
        if raw.count != labels.len() {
            return Err(Error::Format(format!(
                "{} images but {} labels",
                raw.count,
                labels.len()
            )));
        }
        Ok(LabeledDataset {
            images: normalize(raw)?,
            one_hot: one_hot(&labels, CLASSES)?,
            labels,
            role,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `n` examples (all of them if `n` exceeds the size).
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        Ok(LabeledDataset {
            images: self.images.slice_outer(0, n)?,
            labels: self.labels[..n].to_vec(),
            one_hot: self.one_hot.slice_outer(0, n)?,
            role: self.role,
        })
    }
}

pub fn label_histogram<T: Scalar>(ds: &LabeledDataset<T>) -> [usize; CLASSES] {
    let mut counts = [0usize; CLASSES];
    for &label in &ds.labels {
        counts[label as usize] += 1;
    }
    counts
}

/// Row-major flatten of every image: `[n, rows, cols, 1]` → `[n, rows·cols]`.
pub fn flatten_for_mlp<T: Scalar>(ds: &LabeledDataset<T>) -> Result<Tensor<T>> {
    let n = ds.images.outer_len();
    let per_image: usize = ds.images.inner_dims().iter().product();
    ds.images.reshape(&[n, per_image])
}

/// Canonical train and test splits.
#[derive(Clone, Debug)]
pub struct Mnist<T: Scalar = f32> {
    pub train: LabeledDataset<T>,
    pub test: LabeledDataset<T>,
}

/// Resolves a standard MNIST file name, accepting an optional `.gz` suffix.
pub fn locate(dir: &Path, name: &str) -> Result<PathBuf> {
    let plain = dir.join(name);
    if plain.is_file() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.is_file() {
        return Ok(gz);
    }
    Err(Error::io(
        plain,
        std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found (also tried .gz)"),
    ))
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = locate(dir, name)?;
    fs::read(&path).map_err(|e| Error::io(path, e))
}

fn load_split<T: Scalar>(dir: &Path, images: &str, labels: &str, role: Role) -> Result<LabeledDataset<T>> {
    let raw = load_idx_images(&read(dir, images)?)?;
    let labels = load_idx_labels(&read(dir, labels)?)?;
    LabeledDataset::from_raw(&raw, labels, role)
}

impl<T: Scalar> Mnist<T> {
    /// Loads the four standard files from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Ok(Mnist {
            train: load_split(dir, TRAIN_IMAGES, TRAIN_LABELS, Role::Train)?,
            test: load_split(dir, TEST_IMAGES, TEST_LABELS, Role::Test)?,
        })
    }
}

/// Writes a small, learnable stand-in for the four MNIST files into `dir`:
/// class `k` is a bright bar at a class-specific position plus pixel noise.
/// Used by tests and examples that must not depend on the real dataset.
pub fn write_fixture(dir: &Path, train: usize, test: usize, seed: u64) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut split = |n: usize, images: &str, labels: &str| -> Result<()> {
        let labels_v: Vec<u8> = (0..n).map(|i| (i % CLASSES) as u8).collect();
        let mut pixels = Vec::with_capacity(n * PIXELS);
        for &label in &labels_v {
            let top = 3 + 2 * label as usize;
            for r in 0..SIDE {
                for _ in 0..SIDE {
                    let on = (top..top + 3).contains(&r);
                    pixels.push(if on { rng.gen_range(180..=255) } else { rng.gen_range(0..40) });
                }
            }
        }
        let raw = RawImages { count: n, rows: SIDE, cols: SIDE, pixels };
        let write = |name: &str, bytes: Vec<u8>| {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| Error::io(path, e))
        };
        write(images, raw.to_idx_bytes())?;
        write(labels, labels_to_idx_bytes(&labels_v))
    };
    split(train, TRAIN_IMAGES, TRAIN_LABELS)?;
    split(test, TEST_IMAGES, TEST_LABELS)
}

//! Binary layer-stack files.
//!
//! ```text
//! "DNET" | version u8 | layer count u16 | input rank u8 | input dims u32 × rank
//! then per layer: type tag u8 | hyperparameters (u32) | parameters (f32)
//! ```
//! Every multi-byte field is little-endian. Parameters are written in
//! declaration order (weights before bias).

use std::path::Path;

use super::{Conv2d, Dense, Dropout, Flatten, Layer, MaxPool2d, Relu, Sequential};
use crate::error::{Error, Result};
use crate::tensor::{lit, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"DNET";
pub const FORMAT_VERSION: u8 = 1;

const TAG_DENSE: u8 = 1;
const TAG_CONV2D: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_MAXPOOL2D: u8 = 4;
const TAG_DROPOUT: u8 = 5;
const TAG_FLATTEN: u8 = 6;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn tensor<T: Scalar>(&mut self, t: &Tensor<T>) {
        for v in t.data() {
            self.0.extend_from_slice(&v.to_f32().unwrap_or(0.0).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let slice = self.bytes.get(self.pos..end).ok_or(Error::Length {
            expected: end,
            found: self.bytes.len(),
        })?;
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")) as usize)
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn tensor<T: Scalar>(&mut self, dims: &[usize]) -> Result<Tensor<T>> {
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("tensor dims {dims:?} overflow")))?;
        let raw = self.take(len.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| lit::<T>(f32::from_le_bytes(c.try_into().expect("four bytes")) as f64))
            .collect();
        Tensor::from_vec(dims, data)
    }
}

impl<T: Scalar> Sequential<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.0.push(FORMAT_VERSION);
        w.0.extend_from_slice(&(self.layers().len() as u16).to_le_bytes());
        w.0.push(self.input_shape().len() as u8);
        for &d in self.input_shape() {
            w.u32(d);
        }
        for layer in self.layers() {
            match layer {
                Layer::Dense(l) => {
                    w.0.push(TAG_DENSE);
                    w.u32(l.inputs());
                    w.u32(l.outputs());
                    w.tensor(&l.weights);
                    w.tensor(&l.bias);
                }
                Layer::Conv2d(l) => {
                    w.0.push(TAG_CONV2D);
                    for &d in l.filters.dims() {
                        w.u32(d);
                    }
                    w.u32(l.stride);
                    w.u32(l.padding);
                    w.tensor(&l.filters);
                    w.tensor(&l.bias);
                }
                Layer::Relu(_) => w.0.push(TAG_RELU),
                Layer::MaxPool2d(l) => {
                    w.0.push(TAG_MAXPOOL2D);
                    w.u32(l.pool);
                    w.u32(l.stride);
                }
                Layer::Dropout(l) => {
                    w.0.push(TAG_DROPOUT);
                    w.0.extend_from_slice(&(l.rate as f32).to_le_bytes());
                }
                Layer::Flatten(_) => w.0.push(TAG_FLATTEN),
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).map_err(|_| Error::Format("missing DNET magic".into()))? != MAGIC {
            return Err(Error::Format("missing DNET magic".into()));
        }
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported DNET version {version}")));
        }
        let count = r.u16()? as usize;
        let rank = r.u8()? as usize;
        let input_shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let layer = match r.u8()? {
                TAG_DENSE => {
                    let (inputs, outputs) = (r.u32()?, r.u32()?);
                    let weights = r.tensor(&[inputs, outputs])?;
                    let bias = r.tensor(&[outputs])?;
                    Layer::Dense(Dense::new(weights, bias)?)
                }
                TAG_CONV2D => {
                    let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
                    let (stride, padding) = (r.u32()?, r.u32()?);
                    let filters = r.tensor(&dims)?;
                    let bias = r.tensor(&[dims[0]])?;
                    Layer::Conv2d(Conv2d::new(filters, bias, stride, padding)?)
                }
                TAG_RELU => Layer::Relu(Relu::new()),
                TAG_MAXPOOL2D => {
                    let (pool, stride) = (r.u32()?, r.u32()?);
                    Layer::MaxPool2d(MaxPool2d::new(pool, stride)?)
                }
                TAG_DROPOUT => Layer::Dropout(Dropout::new(r.f32()? as f64)?),
                TAG_FLATTEN => Layer::Flatten(Flatten::new()),
                tag => return Err(Error::Format(format!("unknown layer tag {tag}"))),
            };
            layers.push(layer);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Sequential::new(&input_shape, layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

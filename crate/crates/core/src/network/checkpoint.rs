//! Binary checkpoint format.
//!
//! Layout (all integers u32 little-endian):
//! `"BDSM"`, version, lowlevel channels, bottleneck channels, scale factor,
//! block count, then per block growth, kernel, layer count and dilations;
//! then the tensor count and per tensor its rank, dims and f32 LE values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

use super::config::{DenseBlockConfig, ModelConfig};
use super::model::Model;

pub const MODEL_MAGIC: &[u8; 4] = b"BDSM";
pub const MODEL_VERSION: u32 = 1;

pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    pub fn u32(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u32).to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn tensor<T: Real>(&mut self, t: &Tensor<T>) {
        self.u32(t.shape().len());
        for &d in t.shape() {
            self.u32(d);
        }
        for v in t.data() {
            let f = v.to_f32().unwrap_or(f32::NAN);
            self.buf.extend_from_slice(&f.to_le_bytes());
        }
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(self.pos, format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m = self.take(4, "magic")?;
        if m != magic {
            return Err(Error::parse(0, format!("bad magic {m:?}, expected {:?}", std::str::from_utf8(magic).unwrap())));
        }
        Ok(())
    }

    pub fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn tensor<T: Real>(&mut self) -> Result<Tensor<T>> {
        let at = self.pos;
        let rank = self.u32("tensor rank")?;
        if rank > 4 {
            return Err(Error::parse(at, format!("tensor rank {rank} exceeds 4")));
        }
        let shape = (0..rank).map(|_| self.u32("tensor dim")).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = self.take(n * 4, "tensor values")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        Tensor::new(&shape, data)
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::parse(self.pos, "trailing bytes"));
        }
        Ok(())
    }
}

pub(crate) fn write_config(w: &mut Writer, c: &ModelConfig) {
    w.u32(c.lowlevel_channels);
    w.u32(c.bottleneck_channels);
    w.u32(c.scale_factor);
    w.u32(c.blocks.len());
    for b in &c.blocks {
        w.u32(b.growth);
        w.u32(b.kernel);
        w.u32(b.layer_dilations.len());
        for &d in &b.layer_dilations {
            w.u32(d);
        }
    }
}

pub(crate) fn read_config(r: &mut Reader) -> Result<ModelConfig> {
    let lowlevel_channels = r.u32("lowlevel channels")?;
    let bottleneck_channels = r.u32("bottleneck channels")?;
    let scale_factor = r.u32("scale factor")?;
    let n = r.u32("block count")?;
    if n > 16 {
        return Err(Error::parse(r.pos - 4, format!("implausible block count {n}")));
    }
    let mut blocks = Vec::with_capacity(n);
    for _ in 0..n {
        let growth = r.u32("growth")?;
        let kernel = r.u32("kernel")?;
        let layers = r.u32("layer count")?;
        if layers > 64 {
            return Err(Error::parse(r.pos - 4, format!("implausible layer count {layers}")));
        }
        let layer_dilations = (0..layers).map(|_| r.u32("dilation")).collect::<Result<_>>()?;
        blocks.push(DenseBlockConfig {
            growth,
            layer_dilations,
            kernel,
        });
    }
    Ok(ModelConfig {
        lowlevel_channels,
        blocks,
        bottleneck_channels,
        scale_factor,
    })
}

pub(crate) fn write_model_body<T: Real>(w: &mut Writer, model: &Model<T>) {
    write_config(w, model.config());
    w.u32(model.params().len());
    for p in model.params() {
        w.tensor(p);
    }
}

pub(crate) fn read_model_body<T: Real>(r: &mut Reader) -> Result<Model<T>> {
    let config = read_config(r)?;
    let n = r.u32("tensor count")?;
    let params = (0..n).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    Model::from_params(config, params)
}

pub fn encode_model<T: Real>(model: &Model<T>) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MODEL_MAGIC);
    w.u32(MODEL_VERSION as usize);
    write_model_body(&mut w, model);
    w.buf
}

pub fn decode_model<T: Real>(bytes: &[u8]) -> Result<Model<T>> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    let version = r.u32("version")?;
    if version != MODEL_VERSION as usize {
        return Err(Error::parse(4, format!("unsupported checkpoint version {version}")));
    }
    let m = read_model_body(&mut r)?;
    r.finish()?;
    Ok(m)
}

pub fn save_model<T: Real>(path: impl AsRef<Path>, model: &Model<T>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

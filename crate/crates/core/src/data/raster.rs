//! Single-channel rasters and their on-disk formats.
//!
//! Two formats are supported:
//!
//! * 8-bit binary PGM (`P5`). Values map linearly to `[0, 1]` on read; on
//!   write they are clipped to `[0, 1]` and rounded to the nearest level.
//! * `BDSR` float rasters: the 4-byte magic `BDSR`, then little-endian
//!   `u32` version, `u32` width, `u32` height, and `width * height`
//!   little-endian IEEE-754 `f32` values in row-major order. Round-trips
//!   are bit-exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const RASTER_MAGIC: &[u8; 4] = b"BDSR";
pub const RASTER_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Provenance {
    #[default]
    Clean,
    Speckled,
    Despeckled,
}

/// Row-major single-channel intensity image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRaster {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub provenance: Provenance,
}

impl ImageRaster {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Geometry(format!("raster extent {width}x{height} is empty")));
        }
        if width * height != values.len() {
            return Err(Error::config(format!(
                "{width}x{height} raster needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(ImageRaster {
            width,
            height,
            values,
            provenance: Provenance::Clean,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("pixel {i} is {}", self.values[i])));
        }
        Ok(())
    }

    /// Copies the `width x height` window at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<ImageRaster> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Geometry(format!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{} raster",
                self.width, self.height
            )));
        }
        let mut values = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            let row = y * self.width;
            values.extend_from_slice(&self.values[row + x0..row + x0 + width]);
        }
        Ok(ImageRaster {
            width,
            height,
            values,
            provenance: self.provenance,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    Pgm,
    Float,
}

impl RasterFormat {
    /// `.pgm` selects PGM; anything else the float format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("pgm") => RasterFormat::Pgm,
            _ => RasterFormat::Float,
        }
    }
}

pub fn encode_float(raster: &ImageRaster) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * raster.len());
    out.extend_from_slice(RASTER_MAGIC);
    out.extend_from_slice(&RASTER_VERSION.to_le_bytes());
    out.extend_from_slice(&(raster.width as u32).to_le_bytes());
    out.extend_from_slice(&(raster.height as u32).to_le_bytes());
    for v in &raster.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::parse(offset, format!("truncated {what}")))
}

pub fn decode_float(bytes: &[u8]) -> Result<ImageRaster> {
    if bytes.len() < 4 || &bytes[..4] != RASTER_MAGIC {
        return Err(Error::parse(0, "bad magic, expected BDSR"));
    }
    let version = read_u32(bytes, 4, "version")?;
    if version != RASTER_VERSION {
        return Err(Error::parse(
            4,
            format!("unsupported raster version {version}, expected {RASTER_VERSION}"),
        ));
    }
    let width = read_u32(bytes, 8, "width")? as usize;
    let height = read_u32(bytes, 12, "height")? as usize;
    if width == 0 || height == 0 {
        return Err(Error::parse(8, format!("empty raster extent {width}x{height}")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse(8, "raster extent overflows"))?;
    let payload = &bytes[16..];
    if payload.len() != 4 * n {
        let at = 16 + payload.len().min(4 * n);
        return Err(Error::parse(
            at,
            format!("payload holds {} bytes, expected {}", payload.len(), 4 * n),
        ));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ImageRaster::new(width, height, values)
}

pub fn encode_pgm(raster: &ImageRaster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", raster.width, raster.height).into_bytes();
    out.extend(raster.values.iter().map(|&v| quantize(v)));
    out
}

/// Clips to `[0, 1]` and rounds to the nearest of 256 levels.
pub fn quantize(v: f32) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::parse(start, format!("{what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<ImageRaster> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::parse(0, "bad magic, expected P5"));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(maxval_at, format!("invalid maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::parse(2, format!("empty image extent {width}x{height}")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::parse(cur.pos, "missing whitespace after maxval")),
    }
    let sample = if maxval < 256 { 1 } else { 2 };
    let n = width * height;
    let payload = &bytes[cur.pos..];
    if payload.len() < n * sample {
        return Err(Error::parse(
            cur.pos + payload.len(),
            format!("truncated payload: {} of {} bytes", payload.len(), n * sample),
        ));
    }
    let scale = 1.0 / maxval as f32;
    let values = if sample == 1 {
        payload[..n].iter().map(|&b| b as f32 * scale).collect()
    } else {
        payload[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 * scale)
            .collect()
    };
    ImageRaster::new(width, height, values)
}

/// Reads a PGM or `BDSR` raster, detected by its magic bytes.
pub fn read_raster(path: impl AsRef<Path>) -> Result<ImageRaster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else {
        decode_float(&bytes)
    };
    decoded.map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Writes `raster` in the format implied by the file extension.
pub fn write_raster(raster: &ImageRaster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match RasterFormat::from_path(path) {
        RasterFormat::Pgm => encode_pgm(raster),
        RasterFormat::Float => encode_float(raster),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

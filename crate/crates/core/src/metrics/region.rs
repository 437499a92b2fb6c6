use std::path::Path;

use crate::data::ImageRaster;
use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Region { x0, y0, width, height }
    }

    pub fn whole(image: &ImageRaster) -> Self {
        Region::new(0, 0, image.width, image.height)
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn check(&self, image: &ImageRaster) -> Result<()> {
        if self.area() == 0 {
            return Err(Error::Geometry(format!("region {self} is empty")));
        }
        if self.x0 + self.width > image.width || self.y0 + self.height > image.height {
            return Err(Error::Geometry(format!(
                "region {self} exceeds {}x{} image",
                image.width, image.height
            )));
        }
        Ok(())
    }

    /// Region values in row-major order, widened to f64.
    pub fn values(&self, image: &ImageRaster) -> Result<Vec<f64>> {
        self.check(image)?;
        let mut out = Vec::with_capacity(self.area());
        for y in self.y0..self.y0 + self.height {
            let row = y * image.width;
            out.extend(image.values[row + self.x0..row + self.x0 + self.width].iter().map(|&v| v as f64));
        }
        Ok(out)
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}+{}+{}", self.width, self.height, self.x0, self.y0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    /// Homogeneous or edge area.
    Area,
    /// Patch around a point target.
    Point,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedRegion {
    pub name: String,
    pub kind: RegionKind,
    pub region: Region,
}

/// Parses a region list: `name x0 y0 w h` for areas, `name point x0 y0 w h`
/// for point targets. Blank lines and `#` comments are skipped.
pub fn parse_regions(text: &str) -> Result<Vec<NamedRegion>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let body = line.split('#').next().unwrap_or("");
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let (kind, nums) = match fields.len() {
            5 => (RegionKind::Area, &fields[1..]),
            6 if fields[1] == "point" => (RegionKind::Point, &fields[2..]),
            _ => {
                return Err(Error::parse(
                    start,
                    format!("expected `name x0 y0 w h` or `name point x0 y0 w h`, got `{}`", body.trim()),
                ))
            }
        };
        let mut n = [0usize; 4];
        for (slot, tok) in n.iter_mut().zip(nums) {
            *slot = tok
                .parse()
                .map_err(|_| Error::parse(start, format!("`{tok}` is not a pixel coordinate")))?;
        }
        if n[2] == 0 || n[3] == 0 {
            return Err(Error::parse(start, format!("region `{}` is empty", fields[0])));
        }
        out.push(NamedRegion {
            name: fields[0].to_string(),
            kind,
            region: Region::new(n[0], n[1], n[2], n[3]),
        });
    }
    Ok(out)
}

pub fn load_regions(path: impl AsRef<Path>) -> Result<Vec<NamedRegion>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_regions(&text)
}

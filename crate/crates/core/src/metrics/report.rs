use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::ImageRaster;
use crate::error::Result;

use super::indexes::{enl, epd_roa, epd_roa_directional, mor, psnr, ssim, tcr};
use super::region::{NamedRegion, RegionKind};

pub const REPORT_HEADER: &str = "image,index,region,value";

/// One evaluated index; `value` is `None` when the index could not be
/// computed (for example a degenerate region).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub image: String,
    pub index: String,
    pub region: String,
    pub value: Option<f64>,
}

/// Images evaluated together.
pub struct EvalInput<'a> {
    pub name: &'a str,
    pub despeckled: &'a ImageRaster,
    pub speckled: &'a ImageRaster,
    pub clean: Option<&'a ImageRaster>,
    pub regions: &'a [NamedRegion],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, image: &str, index: &str, region: &str, value: Result<f64>) {
        if let Err(e) = &value {
            log::warn!("{image}: {index} on `{region}` failed: {e}");
        }
        self.push_value(image, index, region, value.ok());
    }

    fn push_value(&mut self, image: &str, index: &str, region: &str, value: Option<f64>) {
        self.rows.push(MetricRow {
            image: image.to_string(),
            index: index.to_string(),
            region: region.to_string(),
            value,
        });
    }

    /// Full-reference indexes when a clean image is given; ENL, MOR and
    /// EPD-ROA on every area region; TCR on every point region.
    pub fn evaluate(&mut self, input: &EvalInput) {
        let name = input.name;
        if let Some(clean) = input.clean {
            self.push(name, "psnr", "", psnr(clean, input.despeckled, 1.0));
            self.push(name, "psnr_speckled", "", psnr(clean, input.speckled, 1.0));
            self.push(name, "ssim", "", ssim(clean, input.despeckled));
        }
        for r in input.regions {
            let reg = &r.region;
            match r.kind {
                RegionKind::Area => {
                    self.push(name, "enl", &r.name, enl(input.despeckled, reg));
                    self.push(name, "enl_speckled", &r.name, enl(input.speckled, reg));
                    self.push(name, "mor", &r.name, mor(input.speckled, input.despeckled, reg));
                    self.push(name, "epd_roa", &r.name, epd_roa(input.speckled, input.despeckled, reg));
                    let dir = epd_roa_directional(input.speckled, input.despeckled, reg);
                    let v = dir.as_ref().ok().map(|d| d.1);
                    self.push(name, "epd_roa_h", &r.name, dir.map(|d| d.0));
                    self.push_value(name, "epd_roa_v", &r.name, v);
                }
                RegionKind::Point => {
                    self.push(name, "tcr", &r.name, tcr(input.speckled, input.despeckled, reg));
                }
            }
        }
    }

    /// Mean over images of each `(index, region)` pair, skipping failures.
    pub fn means(&self) -> Vec<MetricRow> {
        let mut acc: BTreeMap<(&str, &str), (f64, usize)> = BTreeMap::new();
        let mut order = Vec::new();
        for r in &self.rows {
            let key = (r.index.as_str(), r.region.as_str());
            let e = acc.entry(key).or_insert_with(|| {
                order.push(key);
                (0.0, 0)
            });
            if let Some(v) = r.value {
                e.0 += v;
                e.1 += 1;
            }
        }
        order
            .into_iter()
            .map(|key| {
                let (sum, n) = acc[&key];
                MetricRow {
                    image: "mean".into(),
                    index: key.0.into(),
                    region: key.1.into(),
                    value: (n > 0).then(|| sum / n as f64),
                }
            })
            .collect()
    }

    /// CSV with header `image,index,region,value`, `NA` for failures, and
    /// the per-index means appended as rows whose image is `mean`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in self.rows.iter().chain(&self.means()) {
            let v = r.value.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(out, "{},{},{},{}", r.image, r.index, r.region, v);
        }
        out
    }
}

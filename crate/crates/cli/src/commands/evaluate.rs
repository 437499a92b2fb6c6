use std::path::{Path, PathBuf};

use ssdespeckle::data::{read_raster, ImageRaster};
use ssdespeckle::metrics::{load_regions, EvalInput, MetricReport, NamedRegion, RegionKind};

use super::write_text;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const METRICS_FILE: &str = "metrics.csv";

/// One line of a pairs file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPair {
    pub name: String,
    pub despeckled: PathBuf,
    pub speckled: PathBuf,
    pub clean: Option<PathBuf>,
    pub regions: Option<PathBuf>,
}

/// Parses `name despeckled speckled [clean|-] [regions|-]` lines; `#`
/// starts a comment and relative paths resolve against `base`.
pub fn parse_pairs(text: &str, base: &Path) -> CliResult<Vec<EvalPair>> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if !(3..=5).contains(&fields.len()) {
            return Err(CliError::usage(format!(
                "pairs line {}: expected `name despeckled speckled [clean|-] [regions|-]`, found {} fields",
                n + 1,
                fields.len()
            )));
        }
        let optional = |i: usize| fields.get(i).filter(|f| **f != "-").map(|f| base.join(f));
        pairs.push(EvalPair {
            name: fields[0].to_string(),
            despeckled: base.join(fields[1]),
            speckled: base.join(fields[2]),
            clean: optional(3),
            regions: optional(4),
        });
    }
    if pairs.is_empty() {
        return Err(CliError::usage("pairs file lists no images"));
    }
    Ok(pairs)
}

/// Which requested index a report row belongs to.
fn family(index: &str) -> &str {
    match index {
        "psnr_speckled" => "psnr",
        "enl_speckled" => "enl",
        "epd_roa_h" | "epd_roa_v" => "epd_roa",
        other => other,
    }
}

fn check_inputs(cfg: &RunConfig, pair: &EvalPair, regions: &[NamedRegion]) -> CliResult<()> {
    let has_area = regions.iter().any(|r| r.kind == RegionKind::Area);
    let has_point = regions.iter().any(|r| r.kind == RegionKind::Point);
    for index in &cfg.metrics.indexes {
        let missing = match index.as_str() {
            "psnr" | "ssim" if pair.clean.is_none() => Some("a clean reference"),
            "enl" | "mor" | "epd_roa" if !has_area => Some("an area region spec"),
            "tcr" if !has_point => Some("a point-target region spec"),
            _ => None,
        };
        if let Some(what) = missing {
            return Err(CliError::usage(format!(
                "index `{index}` needs {what}, but pair `{}` has none",
                pair.name
            )));
        }
    }
    Ok(())
}

fn same_size(pair: &EvalPair, what: &str, expected: &ImageRaster, found: &ImageRaster) -> CliResult<()> {
    if (expected.width, expected.height) == (found.width, found.height) {
        return Ok(());
    }
    Err(CliError::usage(format!(
        "pair `{}`: {what} is {}x{}, expected {}x{}",
        pair.name, found.width, found.height, expected.width, expected.height
    )))
}

/// Evaluates every pair and writes `metrics.csv` (per-image rows followed
/// by `mean` rows).
pub fn evaluate(cfg: &RunConfig, pairs_file: &Path) -> CliResult<MetricReport> {
    let text = std::fs::read_to_string(pairs_file)
        .map_err(|e| CliError::usage(format!("cannot read pairs file {}: {e}", pairs_file.display())))?;
    let pairs = parse_pairs(&text, pairs_file.parent().unwrap_or(Path::new(".")))?;
    let shared = cfg.metrics.regions.as_ref().map(load_regions).transpose()?;

    let mut report = MetricReport::new();
    for pair in &pairs {
        let regions = match &pair.regions {
            Some(p) => load_regions(p)?,
            None => shared.clone().unwrap_or_default(),
        };
        check_inputs(cfg, pair, &regions)?;
        let despeckled = read_raster(&pair.despeckled)?;
        let speckled = read_raster(&pair.speckled)?;
        same_size(pair, "speckled image", &despeckled, &speckled)?;
        let clean = pair.clean.as_ref().map(read_raster).transpose()?;
        if let Some(c) = &clean {
            same_size(pair, "clean image", &despeckled, c)?;
        }
        for r in &regions {
            r.region
                .check(&despeckled)
                .map_err(|e| CliError::usage(format!("pair `{}`, region `{}`: {e}", pair.name, r.name)))?;
        }
        report.evaluate(&EvalInput {
            name: &pair.name,
            despeckled: &despeckled,
            speckled: &speckled,
            clean: clean.as_ref(),
            regions: &regions,
        });
    }
    report
        .rows
        .retain(|r| cfg.metrics.indexes.iter().any(|i| i == family(&r.index)));

    cfg.echo()?;
    write_text(&cfg.out.join(METRICS_FILE), &report.to_csv())?;
    Ok(report)
}

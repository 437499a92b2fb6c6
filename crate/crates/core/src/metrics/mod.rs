//! Despeckling quality indexes and region-based reports.

mod indexes;
mod region;
mod report;

pub use indexes::{
    enl, epd_roa, epd_roa_directional, mor, psnr, ssim, ssim_with_range, tcr, EPD_EPS, PSNR_CAP_DB, SSIM_K1, SSIM_K2,
    SSIM_SIGMA, SSIM_WINDOW,
};
pub use region::{load_regions, parse_regions, NamedRegion, Region, RegionKind};
pub use report::{EvalInput, MetricReport, MetricRow, REPORT_HEADER};

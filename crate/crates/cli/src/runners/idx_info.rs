use std::path::PathBuf;

use anyhow::Result;
use serde::Serialize;

use glu_ntk_core::data::{read_idx_images, read_idx_labels};

use crate::report::RunContext;

#[derive(Debug, Clone, Serialize)]
pub struct IdxInfoOptions {
    pub images: PathBuf,
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdxInfo {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixel_mean: f64,
    pub pixel_max: u8,
    pub label_count: Option<usize>,
    /// Counts of each label value that occurs.
    pub label_histogram: Vec<(u8, usize)>,
}

pub fn run_idx_info(opts: &IdxInfoOptions, ctx: &mut RunContext) -> Result<IdxInfo> {
    ctx.set_config(opts)?;
    let images = read_idx_images(&opts.images)?;
    let (label_count, label_histogram) = match &opts.labels {
        Some(p) => {
            let labels = read_idx_labels(p)?;
            let mut counts = [0usize; 256];
            for &l in &labels {
                counts[l as usize] += 1;
            }
            let hist = (0..=255u8).zip(counts).filter(|(_, c)| *c > 0).collect();
            (Some(labels.len()), hist)
        }
        None => (None, Vec::new()),
    };
    let total: u64 = images.pixels.iter().map(|&p| u64::from(p)).sum();
    let info = IdxInfo {
        count: images.count,
        rows: images.rows,
        cols: images.cols,
        pixel_mean: if images.pixels.is_empty() {
            0.0
        } else {
            total as f64 / images.pixels.len() as f64
        },
        pixel_max: images.pixels.iter().copied().max().unwrap_or(0),
        label_count,
        label_histogram,
    };
    ctx.json("idx_info", &info)?;
    Ok(info)
}

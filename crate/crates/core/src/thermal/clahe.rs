//! Contrast Limited Adaptive Histogram Equalization on 8-bit rasters.
//!
//! Each tile builds a 256-bin histogram, clips every bin at
//! `clip_limit * (pixels / 256)` and water-fills the clipped excess evenly
//! over the bins still below the limit. Gray levels are mapped through the
//! mid-rank cumulative distribution, `255 * (cdf_below + bin / 2) / total`,
//! so a flat histogram maps every level onto itself. Pixel values are
//! bilinearly interpolated between the four nearest tile mappings.

use serde::{Deserialize, Serialize};

use super::{Luma8, Raster, RgbImage, ThermalError};

const BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaheParams {
    pub tile_rows: usize,
    pub tile_cols: usize,
    /// Multiple of the uniform bin height; `f64::INFINITY` disables clipping.
    pub clip_limit: f64,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            tile_rows: 8,
            tile_cols: 8,
            clip_limit: 3.0,
        }
    }
}

impl ClaheParams {
    fn validate(&self, width: usize, height: usize) -> Result<(), ThermalError> {
        if self.tile_rows == 0 || self.tile_cols == 0 {
            return Err(ThermalError::Config("tile grid must be at least 1x1".into()));
        }
        if self.tile_rows > height || self.tile_cols > width {
            return Err(ThermalError::Config(format!(
                "tile grid {}x{} larger than image {}x{}",
                self.tile_rows, self.tile_cols, height, width
            )));
        }
        if !(self.clip_limit >= 1.0) {
            return Err(ThermalError::Config(format!("clip limit {} below 1", self.clip_limit)));
        }
        Ok(())
    }
}

fn clip_histogram(hist: &mut [f64; BINS], limit: f64) {
    if !limit.is_finite() {
        return;
    }
    let mut excess = 0.0;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    // at most one pass per bin: each round either saturates a bin or spends all excess
    while excess > 1e-9 {
        let open = hist.iter().filter(|&&h| h < limit).count();
        if open == 0 {
            break;
        }
        let share = excess / open as f64;
        for h in hist.iter_mut() {
            if *h < limit {
                let add = share.min(limit - *h);
                *h += add;
                excess -= add;
            }
        }
    }
}

fn tile_mapping(img: &Luma8, x0: usize, x1: usize, y0: usize, y1: usize, clip_limit: f64) -> [f64; BINS] {
    let mut hist = [0.0f64; BINS];
    for y in y0..y1 {
        for &v in &img.data[y * img.width + x0..y * img.width + x1] {
            hist[v as usize] += 1.0;
        }
    }
    let total = ((x1 - x0) * (y1 - y0)) as f64;
    clip_histogram(&mut hist, clip_limit * total / BINS as f64);
    let mut map = [0.0; BINS];
    let mut below = 0.0;
    for (m, &h) in map.iter_mut().zip(hist.iter()) {
        *m = 255.0 * (below + 0.5 * h) / total;
        below += h;
    }
    map
}

// exact when both ends coincide
#[inline]
fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + w * (b - a)
}

pub fn clahe(img: &Luma8, params: &ClaheParams) -> Result<Luma8, ThermalError> {
    params.validate(img.width, img.height)?;
    let (rows, cols) = (params.tile_rows, params.tile_cols);
    let tw = img.width as f64 / cols as f64;
    let th = img.height as f64 / rows as f64;
    let bound = |i: usize, n: usize, len: usize| (i * len) / n;

    let mut maps = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            maps.push(tile_mapping(
                img,
                bound(c, cols, img.width),
                bound(c + 1, cols, img.width),
                bound(r, rows, img.height),
                bound(r + 1, rows, img.height),
                params.clip_limit,
            ));
        }
    }

    let neighbours = |pos: f64, size: f64, n: usize| {
        let f = (pos + 0.5) / size - 0.5;
        let lo = f.floor();
        let w = f - lo;
        let i0 = (lo.max(0.0) as usize).min(n - 1);
        let i1 = ((lo + 1.0).max(0.0) as usize).min(n - 1);
        (i0, i1, w)
    };

    let mut out = Vec::with_capacity(img.data.len());
    for y in 0..img.height {
        let (r0, r1, wy) = neighbours(y as f64, th, rows);
        for x in 0..img.width {
            let (c0, c1, wx) = neighbours(x as f64, tw, cols);
            let v = *img.get(x, y) as usize;
            let top = lerp(maps[r0 * cols + c0][v], maps[r0 * cols + c1][v], wx);
            let bottom = lerp(maps[r1 * cols + c0][v], maps[r1 * cols + c1][v], wx);
            let value = lerp(top, bottom, wy);
            out.push(value.round().clamp(0.0, 255.0) as u8);
        }
    }
    Raster::new(img.width, img.height, out)
}

/// CLAHE on the BT.601 luma channel; chroma is carried over unchanged.
pub fn clahe_rgb(img: &RgbImage, params: &ClaheParams) -> Result<RgbImage, ThermalError> {
    let ycc: Vec<[f64; 3]> = img
        .data
        .iter()
        .map(|&[r, g, b]| {
            let (r, g, b) = (r as f64, g as f64, b as f64);
            let y = 0.299 * r + 0.587 * g + 0.114 * b;
            [y, b - y, r - y]
        })
        .collect();
    let luma = Raster::new(
        img.width,
        img.height,
        ycc.iter().map(|p| p[0].round().clamp(0.0, 255.0) as u8).collect(),
    )?;
    let eq = clahe(&luma, params)?;
    let data = ycc
        .iter()
        .zip(eq.data.iter())
        .map(|(&[_, cb, cr], &y)| {
            let y = y as f64;
            let r = y + cr;
            let b = y + cb;
            let g = (y - 0.299 * r - 0.114 * b) / 0.587;
            [r, g, b].map(|c| c.round().clamp(0.0, 255.0) as u8)
        })
        .collect();
    Raster::new(img.width, img.height, data)
}

//! Thermal preprocessing: radiometric calibration, normalization, palette
//! rendering and CLAHE.

mod clahe;
mod palette;
pub mod pnm;

pub use clahe::{clahe, clahe_rgb, ClaheParams};
pub use palette::{apply_palette, Palette, PaletteLut, PALETTE_SIZE};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ABSOLUTE_ZERO_C: f64 = -273.15;

#[derive(Debug, Error)]
pub enum ThermalError {
    #[error("raster {width}x{height} does not match {len} samples")]
    Dimensions { width: usize, height: usize, len: usize },
    #[error("calibration yields {value:.3} degC at sample {index}, at or below absolute zero")]
    Calibration { index: usize, value: f64 },
    #[error("grayscale value {0} outside [0, 1]")]
    GrayRange(f64),
    #[error("configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major single- or multi-channel image.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self, ThermalError> {
        if width == 0 || height == 0 || width * height != data.len() {
            return Err(ThermalError::Dimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Normalized grayscale in `[0, 1]`.
pub type GrayImage = Raster<f64>;
pub type Luma8 = Raster<u8>;
pub type RgbImage = Raster<[u8; 3]>;

/// Linear sensor calibration: `celsius = raw * scale + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub scale: f64,
    pub offset: f64,
}

impl Default for Calibration {
    /// Centikelvin counts.
    fn default() -> Self {
        Self {
            scale: 0.01,
            offset: ABSOLUTE_ZERO_C,
        }
    }
}

impl Calibration {
    pub fn to_celsius(&self, raw: u16) -> f64 {
        raw as f64 * self.scale + self.offset
    }

    /// Nearest raw count for a temperature, saturating at the u16 range.
    pub fn to_raw(&self, celsius: f64) -> u16 {
        ((celsius - self.offset) / self.scale).round().clamp(0.0, u16::MAX as f64) as u16
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiometricFrame {
    pub width: usize,
    pub height: usize,
    pub raw: Vec<u16>,
    pub calibration: Calibration,
}

impl RadiometricFrame {
    pub fn new(width: usize, height: usize, raw: Vec<u16>, calibration: Calibration) -> Result<Self, ThermalError> {
        if width == 0 || height == 0 || width * height != raw.len() {
            return Err(ThermalError::Dimensions {
                width,
                height,
                len: raw.len(),
            });
        }
        Ok(Self {
            width,
            height,
            raw,
            calibration,
        })
    }

    /// Uncompressed size on the wire (16 bits per sample).
    pub fn byte_size(&self) -> u64 {
        (self.raw.len() * 2) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureMap {
    pub width: usize,
    pub height: usize,
    pub temp_c: Vec<f64>,
}

impl TemperatureMap {
    pub fn new(width: usize, height: usize, temp_c: Vec<f64>) -> Result<Self, ThermalError> {
        if width == 0 || height == 0 || width * height != temp_c.len() {
            return Err(ThermalError::Dimensions {
                width,
                height,
                len: temp_c.len(),
            });
        }
        if let Some((index, &value)) = temp_c
            .iter()
            .enumerate()
            .find(|(_, t)| !t.is_finite() || **t <= ABSOLUTE_ZERO_C)
        {
            return Err(ThermalError::Calibration { index, value });
        }
        Ok(Self { width, height, temp_c })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.temp_c[y * self.width + x]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.temp_c
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)))
    }
}

pub fn radiometric_to_celsius(frame: &RadiometricFrame) -> Result<TemperatureMap, ThermalError> {
    let temp_c = frame.raw.iter().map(|&r| frame.calibration.to_celsius(r)).collect();
    TemperatureMap::new(frame.width, frame.height, temp_c)
}

/// Per-frame min-max normalization. A constant frame maps to 0.5 everywhere.
pub fn normalize_temperature(map: &TemperatureMap) -> GrayImage {
    let (lo, hi) = map.min_max();
    let span = hi - lo;
    let data = if span > 0.0 {
        map.temp_c.iter().map(|&t| ((t - lo) / span).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.5; map.temp_c.len()]
    };
    Raster {
        width: map.width,
        height: map.height,
        data,
    }
}

/// BT.601 luma, rounded.
pub fn luminance(rgb: &RgbImage) -> Luma8 {
    let data = rgb
        .data
        .iter()
        .map(|&[r, g, b]| (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round().clamp(0.0, 255.0) as u8)
        .collect();
    Raster {
        width: rgb.width,
        height: rgb.height,
        data,
    }
}

/// Box-filter downsample of an RGB image to `side x side`, channels scaled to `[0, 1]`.
/// Output layout is channel-last, row-major.
pub fn downsample_rgb(img: &RgbImage, side: usize) -> Vec<f64> {
    let mut out = vec![0.0; side * side * 3];
    for oy in 0..side {
        let y0 = oy * img.height / side;
        let y1 = ((oy + 1) * img.height / side).max(y0 + 1).min(img.height);
        for ox in 0..side {
            let x0 = ox * img.width / side;
            let x1 = ((ox + 1) * img.width / side).max(x0 + 1).min(img.width);
            let mut acc = [0.0f64; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = img.get(x, y);
                    for c in 0..3 {
                        acc[c] += p[c] as f64;
                    }
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as f64 * 255.0;
            let base = (oy * side + ox) * 3;
            for c in 0..3 {
                out[base + c] = acc[c] / n;
            }
        }
    }
    out
}

//! Pluggable detector interface and the shipped threshold detector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::losses::{sigmoid, BoundingBox};
use crate::thermal::{RgbImage, TemperatureMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Pixel box with edges on pixel boundaries.
    pub bbox: BoundingBox,
    pub class_id: String,
    pub confidence: f64,
    pub peak_temp_c: f64,
}

/// `conf = sigmoid(bias + excess_coef * excess_c + area_coef * sqrt(area_px))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticScore {
    pub bias: f64,
    pub excess_coef: f64,
    pub area_coef: f64,
}

impl Default for LogisticScore {
    fn default() -> Self {
        Self {
            bias: -6.0,
            excess_coef: 0.3,
            area_coef: 0.45,
        }
    }
}

impl LogisticScore {
    pub fn score(&self, excess_c: f64, area_px: f64) -> f64 {
        sigmoid(self.bias + self.excess_coef * excess_c + self.area_coef * area_px.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Pixels hotter than `ambient + delta_c` are candidates.
    pub delta_c: f64,
    pub min_blob_pixels: usize,
    pub logistic: LogisticScore,
    /// Standard deviation of additive Gaussian noise on the confidence.
    pub confidence_sigma: f64,
    pub seed: u64,
    pub default_class: String,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            delta_c: 4.0,
            min_blob_pixels: 4,
            logistic: LogisticScore::default(),
            confidence_sigma: 0.0,
            seed: 0,
            default_class: "hotspot_single".into(),
        }
    }
}

/// One preprocessed frame pair.
#[derive(Debug, Clone, Copy)]
pub struct DetectorInput<'a> {
    pub thermal: &'a TemperatureMap,
    pub rgb: &'a RgbImage,
    /// Selects the noise sub-stream so results do not depend on call order.
    pub frame_index: u64,
}

pub trait Detector {
    fn detect(&self, input: &DetectorInput<'_>) -> Vec<Detection>;
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ThresholdDetector {
    pub config: DetectorConfig,
}

/// A connected hot region before scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub pixels: usize,
    pub bbox: BoundingBox,
    pub peak_temp_c: f64,
    pub peak_xy: (usize, usize),
}

impl ThresholdDetector {
    pub fn new(config: DetectorConfig) -> Self {
        Self { config }
    }

    pub fn ambient(map: &TemperatureMap) -> f64 {
        let mut v = map.temp_c.clone();
        let mid = v.len() / 2;
        let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
        *m
    }

    /// 8-connected components above threshold, in raster order of their first pixel.
    pub fn blobs(&self, map: &TemperatureMap) -> (f64, Vec<Blob>) {
        let ambient = Self::ambient(map);
        let threshold = ambient + self.config.delta_c;
        let (w, h) = (map.width, map.height);
        let mut seen = vec![false; w * h];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..w * h {
            if seen[start] || map.temp_c[start] <= threshold {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
            let mut pixels = 0;
            let mut peak = (f64::NEG_INFINITY, (0, 0));
            while let Some(i) = stack.pop() {
                let (x, y) = (i % w, i / w);
                pixels += 1;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
                if map.temp_c[i] > peak.0 || (map.temp_c[i] == peak.0 && i < peak.1 .1 * w + peak.1 .0) {
                    peak = (map.temp_c[i], (x, y));
                }
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if !seen[j] && map.temp_c[j] > threshold {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
            if pixels >= self.config.min_blob_pixels {
                out.push(Blob {
                    pixels,
                    bbox: BoundingBox {
                        x_min: x0 as f64,
                        y_min: y0 as f64,
                        x_max: (x1 + 1) as f64,
                        y_max: (y1 + 1) as f64,
                    },
                    peak_temp_c: peak.0,
                    peak_xy: peak.1,
                });
            }
        }
        (ambient, out)
    }
}

impl Detector for ThresholdDetector {
    fn detect(&self, input: &DetectorInput<'_>) -> Vec<Detection> {
        let (ambient, blobs) = self.blobs(input.thermal);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(input.frame_index);
        let noise = Normal::new(0.0, self.config.confidence_sigma.max(0.0)).expect("finite sigma");
        blobs
            .into_iter()
            .map(|b| {
                let base = self.config.logistic.score(b.peak_temp_c - ambient, b.pixels as f64);
                let jitter = if self.config.confidence_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                Detection {
                    bbox: b.bbox,
                    class_id: self.config.default_class.clone(),
                    confidence: (base + jitter).clamp(0.0, 1.0),
                    peak_temp_c: b.peak_temp_c,
                }
            })
            .collect()
    }
}

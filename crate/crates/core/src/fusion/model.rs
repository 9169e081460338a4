//! The toy fusion model: shared thermal encoder over palette renderings, RGB
//! encoder, gate, and a two-branch head (class scores and a box).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::encoder::{encode_with_cache, EncoderCache, ToyEncoderParams};
use super::losses::{
    focal_loss_logit, gated_fuse, gated_fuse_backward, giou_loss_grad, palette_invariance_loss_grad, BoundingBox,
    LossWeights, PaletteEmbeddingSet,
};
use super::{Embedding, FusionError, GateParams};
use crate::thermal::{apply_palette, downsample_rgb, normalize_temperature, PaletteLut, Raster, RgbImage, TemperatureMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    /// Inputs are downsampled to `input_side x input_side` RGB.
    pub input_side: usize,
    pub hidden: usize,
    pub dim: usize,
    pub classes: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            input_side: 16,
            hidden: 8,
            dim: 32,
            classes: 2,
        }
    }
}

impl ModelShape {
    pub fn input_len(&self) -> usize {
        self.input_side * self.input_side * 3
    }

    fn head_len(&self) -> usize {
        (self.classes + 4) * self.dim + self.classes + 4
    }
}

/// One training crop: its palette renderings, the RGB crop and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub palettes: Vec<Vec<f64>>,
    pub rgb: Vec<f64>,
    pub labels: Vec<bool>,
    /// Normalized `[0, 1]` crop coordinates; `None` for defect-free crops.
    pub target_box: Option<BoundingBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub cls: f64,
    pub boxes: f64,
    pub pal: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub shape: ModelShape,
    pub thermal: ToyEncoderParams,
    pub rgb: ToyEncoderParams,
    pub gate: GateParams,
    /// `W_cls | b_cls | W_box | b_box`.
    head: Vec<f64>,
}

/// Initial gate bias. The fused vector starts close to the RGB embedding, so
/// the thermal branch is shaped by the palette term before the detection
/// losses pull on it.
pub const GATE_BIAS_INIT: f64 = -5.0;

struct Forward {
    zs: Vec<(Embedding, EncoderCache)>,
    set: PaletteEmbeddingSet,
    r: (Embedding, EncoderCache),
    gate_out: super::GateOutput,
    logits: Vec<f64>,
    box_raw: [f64; 4],
}

impl FusionModel {
    pub fn zeros(shape: ModelShape) -> Self {
        let n = shape.input_len();
        Self {
            shape,
            thermal: ToyEncoderParams::zeros(n, shape.hidden, shape.dim),
            rgb: ToyEncoderParams::zeros(n, shape.hidden, shape.dim),
            gate: GateParams::zeros(shape.dim),
            head: vec![0.0; shape.head_len()],
        }
    }

    pub fn random(shape: ModelShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.input_len();
        let thermal = ToyEncoderParams::random(n, shape.hidden, shape.dim, &mut rng);
        let rgb = ToyEncoderParams::random(n, shape.hidden, shape.dim, &mut rng);
        let mut model = Self {
            thermal,
            rgb,
            ..Self::zeros(shape)
        };
        let gate_scale = Normal::new(0.0, (0.5 / shape.dim as f64).sqrt()).unwrap();
        model.gate.flat_iter_mut().for_each(|w| *w = gate_scale.sample(&mut rng));
        model.gate.bias_mut().iter_mut().for_each(|b| *b = GATE_BIAS_INIT);
        let head_scale = Normal::new(0.0, (1.0 / shape.dim as f64).sqrt()).unwrap();
        let weights = (shape.classes + 4) * shape.dim;
        for (i, w) in model.head.iter_mut().enumerate() {
            let in_cls_w = i < shape.classes * shape.dim;
            let in_box_w = i >= shape.classes * shape.dim + shape.classes && i < weights + shape.classes;
            if in_cls_w || in_box_w {
                *w = head_scale.sample(&mut rng);
            }
        }
        model
    }

    pub fn num_params(&self) -> usize {
        self.thermal.as_slice().len() + self.rgb.as_slice().len() + self.gate.num_params() + self.head.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(self.thermal.as_slice());
        v.extend_from_slice(self.rgb.as_slice());
        v.extend(self.gate.flat_iter());
        v.extend_from_slice(&self.head);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), FusionError> {
        if flat.len() != self.num_params() {
            return Err(FusionError::Shape(format!(
                "model has {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        self.thermal.as_mut_slice().iter_mut().for_each(|v| *v = it.next().unwrap());
        self.rgb.as_mut_slice().iter_mut().for_each(|v| *v = it.next().unwrap());
        self.gate.flat_iter_mut().for_each(|v| *v = it.next().unwrap());
        self.head.iter_mut().for_each(|v| *v = it.next().unwrap());
        Ok(())
    }

    pub fn thermal_embeddings(&self, palettes: &[Vec<f64>]) -> Result<PaletteEmbeddingSet, FusionError> {
        let zs = palettes
            .iter()
            .map(|x| super::encode(x, &self.thermal))
            .collect::<Result<Vec<_>, _>>()?;
        PaletteEmbeddingSet::new(zs)
    }

    /// Palette-averaged thermal embedding fused with the RGB embedding.
    pub fn fuse(&self, palettes: &[Vec<f64>], rgb: &[f64]) -> Result<(PaletteEmbeddingSet, super::GateOutput), FusionError> {
        let set = self.thermal_embeddings(palettes)?;
        let r = super::encode(rgb, &self.rgb)?;
        let out = gated_fuse(set.centroid(), &r, &self.gate)?;
        Ok((set, out))
    }

    fn forward(&self, s: &Sample) -> Result<Forward, FusionError> {
        let zs = s
            .palettes
            .iter()
            .map(|x| encode_with_cache(x, &self.thermal))
            .collect::<Result<Vec<_>, _>>()?;
        let set = PaletteEmbeddingSet::new(zs.iter().map(|(z, _)| z.clone()).collect())?;
        let r = encode_with_cache(&s.rgb, &self.rgb)?;
        let gate_out = gated_fuse(set.centroid(), &r.0, &self.gate)?;
        let (k, d) = (self.shape.classes, self.shape.dim);
        let u = gate_out.fused.values();
        let dot = |w: &[f64]| w.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        let logits = (0..k).map(|c| self.head[k * d + c] + dot(&self.head[c * d..(c + 1) * d])).collect();
        let box_base = k * d + k;
        let mut box_raw = [0.0; 4];
        for (j, b) in box_raw.iter_mut().enumerate() {
            let w = &self.head[box_base + j * d..box_base + (j + 1) * d];
            *b = self.head[box_base + 4 * d + j] + dot(w);
        }
        Ok(Forward {
            zs,
            set,
            r,
            gate_out,
            logits,
            box_raw,
        })
    }

    /// Predicted box from raw head outputs `(cx, cy, ln w, ln h)`.
    fn decode_box(raw: &[f64; 4]) -> BoundingBox {
        let (w, h) = (raw[2].exp(), raw[3].exp());
        BoundingBox {
            x_min: raw[0] - 0.5 * w,
            y_min: raw[1] - 0.5 * h,
            x_max: raw[0] + 0.5 * w,
            y_max: raw[1] + 0.5 * h,
        }
    }

    /// Batch-averaged composite loss.
    pub fn loss(&self, batch: &[Sample], weights: &LossWeights) -> Result<LossBreakdown, FusionError> {
        self.loss_and_grad_impl(batch, weights, false).map(|(l, _)| l)
    }

    /// Batch-averaged composite loss and its gradient in [`FusionModel::to_flat`] order.
    pub fn loss_and_grad(&self, batch: &[Sample], weights: &LossWeights) -> Result<(LossBreakdown, Vec<f64>), FusionError> {
        self.loss_and_grad_impl(batch, weights, true)
    }

    fn loss_and_grad_impl(&self, batch: &[Sample], weights: &LossWeights, want_grad: bool) -> Result<(LossBreakdown, Vec<f64>), FusionError> {
        if batch.is_empty() {
            return Err(FusionError::Invalid("empty batch".into()));
        }
        let (k, d) = (self.shape.classes, self.shape.dim);
        let n = batch.len() as f64;
        let positives = batch.iter().filter(|s| s.target_box.is_some()).count();
        let mut g_thermal = ToyEncoderParams::zeros(self.thermal.input(), self.thermal.hidden(), d);
        let mut g_rgb = ToyEncoderParams::zeros(self.rgb.input(), self.rgb.hidden(), d);
        let mut g_gate = GateParams::zeros(d);
        let mut g_head = vec![0.0; self.head.len()];
        let mut out = LossBreakdown::default();

        for s in batch {
            if s.labels.len() != k {
                return Err(FusionError::Shape(format!("{} labels for {k} classes", s.labels.len())));
            }
            let f = self.forward(s)?;
            let mut d_u = vec![0.0; d];
            let u = f.gate_out.fused.values();

            for c in 0..k {
                let (l, dl) = focal_loss_logit(f.logits[c], s.labels[c], weights.focal_alpha, weights.focal_gamma);
                out.cls += l / n;
                let dl = dl / n;
                g_head[k * d + c] += dl;
                for j in 0..d {
                    g_head[c * d + j] += dl * u[j];
                    d_u[j] += dl * self.head[c * d + j];
                }
            }

            if let Some(target) = &s.target_box {
                let pred = Self::decode_box(&f.box_raw);
                let (l, gp, _) = giou_loss_grad(&pred, target);
                let scale = weights.lambda_box / positives as f64;
                out.boxes += l / positives as f64;
                let (w, h) = (f.box_raw[2].exp(), f.box_raw[3].exp());
                let d_raw = [
                    gp[0] + gp[2],
                    gp[1] + gp[3],
                    0.5 * w * (gp[2] - gp[0]),
                    0.5 * h * (gp[3] - gp[1]),
                ];
                let box_base = k * d + k;
                for j in 0..4 {
                    let dr = scale * d_raw[j];
                    g_head[box_base + 4 * d + j] += dr;
                    for i in 0..d {
                        g_head[box_base + j * d + i] += dr * u[i];
                        d_u[i] += dr * self.head[box_base + j * d + i];
                    }
                }
            }

            let (pal, d_members) = palette_invariance_loss_grad(&f.set);
            out.pal += pal / n;

            if want_grad {
                let gg = gated_fuse_backward(f.set.centroid(), &f.r.0, &self.gate, &f.gate_out, &d_u);
                for (a, b) in g_gate.flat_iter_mut().zip(gg.d_params.flat_iter()) {
                    *a += b;
                }
                self.rgb.backward(&f.r.1, &gg.d_r, &mut g_rgb);
                let m = f.zs.len() as f64;
                for ((_, cache), d_pal) in f.zs.iter().zip(&d_members) {
                    let d_z: Vec<f64> = gg
                        .d_zbar
                        .iter()
                        .zip(d_pal)
                        .map(|(dzb, dp)| dzb / m + weights.lambda_pal * dp / n)
                        .collect();
                    self.thermal.backward(cache, &d_z, &mut g_thermal);
                }
            }
        }
        out.total = super::total_loss(out.cls, out.boxes, out.pal, weights);

        let mut grad = Vec::new();
        if want_grad {
            grad.reserve(self.num_params());
            grad.extend_from_slice(g_thermal.as_slice());
            grad.extend_from_slice(g_rgb.as_slice());
            grad.extend(g_gate.flat_iter());
            grad.extend_from_slice(&g_head);
        }
        Ok((out, grad))
    }

    /// Mean over samples of the mean pairwise distance between palette embeddings.
    pub fn mean_palette_distance(&self, samples: &[Sample]) -> Result<f64, FusionError> {
        let mut acc = 0.0;
        for s in samples {
            acc += self.thermal_embeddings(&s.palettes)?.mean_pairwise_distance();
        }
        Ok(acc / samples.len() as f64)
    }
}

/// Renders a temperature crop with each palette and flattens it for the encoder.
pub fn render_palette_inputs(map: &TemperatureMap, luts: &[PaletteLut], side: usize) -> Vec<Vec<f64>> {
    let gray = normalize_temperature(map);
    luts.iter()
        .map(|lut| {
            let rgb = apply_palette(&gray, lut).expect("normalized gray is in range");
            downsample_rgb(&rgb, side)
        })
        .collect()
}

/// Deterministic synthetic crops cycling through clutter, single-spot and
/// two-spot cases. Each crop is cut around a detection, so the first spot
/// sits near the centre and is the box target. The RGB crop shows a faint
/// discoloration over hot cells. Labels are `[single, multi]` when
/// `classes == 2`.
pub fn synthetic_crops(count: usize, seed: u64, shape: &ModelShape, luts: &[PaletteLut]) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = shape.input_side;
    let noise = Normal::new(0.0, 0.3).unwrap();
    (0..count)
        .map(|i| {
            let spots = i % 3;
            let mut temp: Vec<f64> = (0..side * side).map(|_| 30.0 + noise.sample(&mut rng)).collect();
            if spots == 0 {
                // clutter: a smooth warm gradient such as a reflection across the glass
                let amp = rng.random_range(2.0..6.0);
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let (dx, dy) = (angle.cos(), angle.sin());
                for y in 0..side {
                    for x in 0..side {
                        let t = (x as f64 * dx + y as f64 * dy) / side as f64;
                        temp[y * side + x] += amp * (0.5 + 0.5 * t);
                    }
                }
            }
            let mut mark = vec![0.0; side * side];
            let mut bounds = [0.0; 4];
            for k in 0..spots {
                let amp = rng.random_range(8.0..25.0);
                let s = side as f64;
                let sigma = rng.random_range(0.06 * s..0.16 * s);
                // crops are cut around a detection, so the first spot sits near the centre
                let spread = if k == 0 { 0.05 } else { 0.3 };
                let cx = s * (0.5 + rng.random_range(-spread..spread));
                let cy = s * (0.5 + rng.random_range(-spread..spread));
                for y in 0..side {
                    for x in 0..side {
                        let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                        let blob = (-r2 / (2.0 * sigma * sigma)).exp();
                        temp[y * side + x] += amp * blob;
                        mark[y * side + x] += blob;
                    }
                }
                if k == 0 {
                    // the box target is the detection the crop was cut around
                    bounds = [
                        ((cx - 2.0 * sigma) / s).max(0.0),
                        ((cy - 2.0 * sigma) / s).max(0.0),
                        ((cx + 2.0 * sigma) / s).min(1.0),
                        ((cy + 2.0 * sigma) / s).min(1.0),
                    ];
                }
            }
            let map = TemperatureMap::new(side, side, temp).expect("synthetic crop is valid");
            let palettes = render_palette_inputs(&map, luts, side);
            let base = [30u8, 40, 70];
            let rgb_img: RgbImage = Raster {
                width: side,
                height: side,
                data: mark
                    .iter()
                    .map(|&m| {
                        // visible discoloration over the hot cell
                        let shade = 1.0 + 2.0 * m.min(1.0);
                        base.map(|c| ((c as f64 * shade) as i32 + rng.random_range(-10..=10)).clamp(0, 255) as u8)
                    })
                    .collect(),
            };
            let rgb = downsample_rgb(&rgb_img, side);
            let mut labels = vec![false; shape.classes];
            if spots > 0 {
                labels[(spots - 1).min(shape.classes - 1)] = true;
            }
            let target_box = (spots > 0).then(|| BoundingBox::new(bounds[0], bounds[1], bounds[2], bounds[3]).unwrap());
            Sample {
                palettes,
                rgb,
                labels,
                target_box,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    pub shape: ModelShape,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1500,
            learning_rate: 0.3,
            weights: LossWeights::default(),
            shape: ModelShape::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub initial: FusionModel,
    pub model: FusionModel,
    /// `L_total` before each update, one entry per epoch.
    pub total_trace: Vec<f64>,
    pub pal_trace: Vec<f64>,
}

/// Full-batch gradient descent with a fixed step.
pub fn train_toy(samples: &[Sample], config: &TrainConfig) -> Result<TrainReport, FusionError> {
    if samples.len() < 32 {
        return Err(FusionError::Invalid(format!("need at least 32 samples, got {}", samples.len())));
    }
    config.weights.validate()?;
    let initial = FusionModel::random(config.shape, config.seed);
    let mut model = initial.clone();
    let mut params = model.to_flat();
    let mut total_trace = Vec::with_capacity(config.epochs);
    let mut pal_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, grad) = model.loss_and_grad(samples, &config.weights)?;
        if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(FusionError::Diverged { epoch });
        }
        total_trace.push(loss.total);
        pal_trace.push(loss.pal);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= config.learning_rate * g;
        }
        model.set_flat(&params)?;
    }
    Ok(TrainReport {
        initial,
        model,
        total_trace,
        pal_trace,
    })
}

//! Loss terms and gated fusion, each with an analytic gradient.

use serde::{Deserialize, Serialize};

use super::{Embedding, FusionError, GateParams};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-12;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Embeddings of the same crop rendered with different palettes.
#[derive(Debug, Clone, PartialEq)]
pub struct PaletteEmbeddingSet {
    members: Vec<Embedding>,
    centroid: Embedding,
}

impl PaletteEmbeddingSet {
    pub fn new(members: Vec<Embedding>) -> Result<Self, FusionError> {
        if members.len() < 2 {
            return Err(FusionError::TooFewMembers(members.len()));
        }
        let dim = members[0].dim();
        if let Some(bad) = members.iter().find(|m| m.dim() != dim) {
            return Err(FusionError::Shape(format!("member of dimension {} in a set of {dim}", bad.dim())));
        }
        let m = members.len() as f64;
        let mut centroid = vec![0.0; dim];
        for z in &members {
            for (c, v) in centroid.iter_mut().zip(z.values()) {
                *c += v;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= m);
        Ok(Self {
            members,
            centroid: Embedding::new(centroid),
        })
    }

    pub fn members(&self) -> &[Embedding] {
        &self.members
    }

    pub fn centroid(&self) -> &Embedding {
        &self.centroid
    }

    /// Mean pairwise Euclidean distance between members.
    pub fn mean_pairwise_distance(&self) -> f64 {
        let n = self.members.len();
        let mut acc = 0.0;
        let mut pairs = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                acc += self.members[i].distance(&self.members[j]);
                pairs += 1;
            }
        }
        acc / pairs as f64
    }
}

/// `(1/M) * sum ||z_m - z_bar||^2`.
pub fn palette_invariance_loss(set: &PaletteEmbeddingSet) -> f64 {
    palette_invariance_loss_grad(set).0
}

/// Loss together with its gradient with respect to each member.
pub fn palette_invariance_loss_grad(set: &PaletteEmbeddingSet) -> (f64, Vec<Vec<f64>>) {
    let m = set.members.len() as f64;
    let zbar = set.centroid.values();
    let mut loss = 0.0;
    let grads = set
        .members
        .iter()
        .map(|z| {
            z.values()
                .iter()
                .zip(zbar)
                .map(|(a, b)| {
                    let d = a - b;
                    loss += d * d;
                    2.0 * d / m
                })
                .collect()
        })
        .collect();
    (loss / m, grads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOutput {
    pub fused: Embedding,
    pub gate: Vec<f64>,
}

/// `g = sigmoid(W_g [z_bar || r] + b_g)`, `u = g * z_bar + (1 - g) * r`.
pub fn gated_fuse(z_bar: &Embedding, r: &Embedding, gate: &GateParams) -> Result<GateOutput, FusionError> {
    let d = gate.dim();
    if z_bar.dim() != d || r.dim() != d {
        return Err(FusionError::Shape(format!(
            "gate expects dimension {d}, got {} and {}",
            z_bar.dim(),
            r.dim()
        )));
    }
    let (zb, rv) = (z_bar.values(), r.values());
    let mut g = Vec::with_capacity(d);
    let mut u = Vec::with_capacity(d);
    for i in 0..d {
        let row = gate.weight_row(i);
        let s = gate.bias()[i]
            + row[..d].iter().zip(zb).map(|(w, x)| w * x).sum::<f64>()
            + row[d..].iter().zip(rv).map(|(w, x)| w * x).sum::<f64>();
        let gi = sigmoid(s);
        g.push(gi);
        u.push(gi * zb[i] + (1.0 - gi) * rv[i]);
    }
    Ok(GateOutput {
        fused: Embedding::new(u),
        gate: g,
    })
}

/// Gradients of a scalar downstream of [`gated_fuse`].
#[derive(Debug, Clone, PartialEq)]
pub struct GateGrad {
    pub d_zbar: Vec<f64>,
    pub d_r: Vec<f64>,
    pub d_params: GateParams,
}

/// Backpropagates `d_u` (gradient with respect to the fused vector).
pub fn gated_fuse_backward(z_bar: &Embedding, r: &Embedding, gate: &GateParams, out: &GateOutput, d_u: &[f64]) -> GateGrad {
    let d = gate.dim();
    let (zb, rv) = (z_bar.values(), r.values());
    let mut d_zbar = vec![0.0; d];
    let mut d_r = vec![0.0; d];
    let mut d_params = GateParams::zeros(d);
    for i in 0..d {
        let g = out.gate[i];
        d_zbar[i] += d_u[i] * g;
        d_r[i] += d_u[i] * (1.0 - g);
        let ds = d_u[i] * (zb[i] - rv[i]) * g * (1.0 - g);
        d_params.bias_mut()[i] = ds;
        let row = gate.weight_row(i);
        let grow = d_params.weight_row_mut(i);
        for j in 0..d {
            grow[j] = ds * zb[j];
            grow[d + j] = ds * rv[j];
            d_zbar[j] += ds * row[j];
            d_r[j] += ds * row[d + j];
        }
    }
    GateGrad { d_zbar, d_r, d_params }
}

/// Binary focal loss `-alpha * (1 - p_t)^gamma * ln(p_t)` for one class score.
pub fn focal_loss(pred_prob: f64, is_positive: bool, alpha: f64, gamma: f64) -> f64 {
    let p = pred_prob.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let pt = if is_positive { p } else { 1.0 - p };
    -alpha * (1.0 - pt).powf(gamma) * pt.ln()
}

/// Focal loss on a logit, with its derivative with respect to the logit.
pub fn focal_loss_logit(logit: f64, is_positive: bool, alpha: f64, gamma: f64) -> (f64, f64) {
    let sign = if is_positive { 1.0 } else { -1.0 };
    let pt = sigmoid(sign * logit).clamp(PROB_EPS, 1.0 - PROB_EPS);
    let q = 1.0 - pt;
    let loss = -alpha * q.powf(gamma) * pt.ln();
    let grad = sign * alpha * q.powf(gamma) * (gamma * pt * pt.ln() - q);
    (loss, grad)
}

/// Axis-aligned box with `min < max` on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, FusionError> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(FusionError::DegenerateBox([x_min, y_min, x_max, y_max]));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Corners in ring order: top-left, top-right, bottom-right, bottom-left.
    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x_min, self.y_min),
            (self.x_max, self.y_min),
            (self.x_max, self.y_max),
            (self.x_min, self.y_max),
        ]
    }
}

/// `1 - GIoU`, in `[0, 2]`.
pub fn giou_loss(a: &BoundingBox, b: &BoundingBox) -> f64 {
    giou_loss_grad(a, b).0
}

/// GIoU loss with gradients with respect to `[x_min, y_min, x_max, y_max]` of each box.
pub fn giou_loss_grad(a: &BoundingBox, b: &BoundingBox) -> (f64, [f64; 4], [f64; 4]) {
    let (a4, b4) = (a.as_array(), b.as_array());
    let mut ga = [0.0; 4];
    let mut gb = [0.0; 4];

    // intersection extents; ties resolved towards `a`
    let (ix1, ix1_a) = if a4[0] >= b4[0] { (a4[0], true) } else { (b4[0], false) };
    let (iy1, iy1_a) = if a4[1] >= b4[1] { (a4[1], true) } else { (b4[1], false) };
    let (ix2, ix2_a) = if a4[2] <= b4[2] { (a4[2], true) } else { (b4[2], false) };
    let (iy2, iy2_a) = if a4[3] <= b4[3] { (a4[3], true) } else { (b4[3], false) };
    let iw = ix2 - ix1;
    let ih = iy2 - iy1;
    let overlap = iw > 0.0 && ih > 0.0;
    let inter = if overlap { iw * ih } else { 0.0 };
    // dI/d coord, written into slots of a or b
    let mut d_inter_a = [0.0; 4];
    let mut d_inter_b = [0.0; 4];
    if overlap {
        let mut put = |from_a: bool, k: usize, v: f64| {
            if from_a {
                d_inter_a[k] += v
            } else {
                d_inter_b[k] += v
            }
        };
        put(ix1_a, 0, -ih);
        put(iy1_a, 1, -iw);
        put(ix2_a, 2, ih);
        put(iy2_a, 3, iw);
    }

    let area_a = a.area();
    let area_b = b.area();
    let union = area_a + area_b - inter;
    let d_area = |bx: &[f64; 4]| [-(bx[3] - bx[1]), -(bx[2] - bx[0]), bx[3] - bx[1], bx[2] - bx[0]];
    let d_area_a = d_area(&a4);
    let d_area_b = d_area(&b4);

    let (cx1, cx1_a) = if a4[0] <= b4[0] { (a4[0], true) } else { (b4[0], false) };
    let (cy1, cy1_a) = if a4[1] <= b4[1] { (a4[1], true) } else { (b4[1], false) };
    let (cx2, cx2_a) = if a4[2] >= b4[2] { (a4[2], true) } else { (b4[2], false) };
    let (cy2, cy2_a) = if a4[3] >= b4[3] { (a4[3], true) } else { (b4[3], false) };
    let cw = cx2 - cx1;
    let ch = cy2 - cy1;
    let hull = cw * ch;
    let mut d_hull_a = [0.0; 4];
    let mut d_hull_b = [0.0; 4];
    {
        let mut put = |from_a: bool, k: usize, v: f64| {
            if from_a {
                d_hull_a[k] += v
            } else {
                d_hull_b[k] += v
            }
        };
        put(cx1_a, 0, -ch);
        put(cy1_a, 1, -cw);
        put(cx2_a, 2, ch);
        put(cy2_a, 3, cw);
    }

    // loss = 2 - I/U - U/C
    let loss = 2.0 - inter / union - union / hull;
    let dl_di = -1.0 / union;
    let dl_du = inter / (union * union) - 1.0 / hull;
    let dl_dc = union / (hull * hull);
    for k in 0..4 {
        let du_a = d_area_a[k] - d_inter_a[k];
        let du_b = d_area_b[k] - d_inter_b[k];
        ga[k] = dl_di * d_inter_a[k] + dl_du * du_a + dl_dc * d_hull_a[k];
        gb[k] = dl_di * d_inter_b[k] + dl_du * du_b + dl_dc * d_hull_b[k];
    }
    (loss, ga, gb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_box: f64,
    pub lambda_pal: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_box: 1.0,
            lambda_pal: 0.1,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), FusionError> {
        let ok = self.lambda_box >= 0.0
            && self.lambda_pal >= 0.0
            && self.focal_alpha > 0.0
            && self.focal_alpha <= 1.0
            && self.focal_gamma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(FusionError::Weights(*self))
        }
    }
}

/// `L_cls + lambda_box * L_box + lambda_pal * L_pal`.
pub fn total_loss(cls: f64, boxes: f64, pal: f64, weights: &LossWeights) -> f64 {
    cls + weights.lambda_box * boxes + weights.lambda_pal * pal
}

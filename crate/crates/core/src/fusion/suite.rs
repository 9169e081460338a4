//! Randomized gradient verification of every loss term, plus the closed-form
//! loss identities.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::gradient_check;
use super::losses::{
    focal_loss, focal_loss_logit, gated_fuse, gated_fuse_backward, giou_loss, giou_loss_grad, palette_invariance_loss,
    palette_invariance_loss_grad, total_loss, BoundingBox, LossWeights, PaletteEmbeddingSet,
};
use super::model::{synthetic_crops, FusionModel, ModelShape};
use super::{Embedding, FusionError, GateParams};
use crate::thermal::Palette;

pub const SUITE_TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GradTerm {
    PaletteInvariance,
    GatedFusion,
    Focal,
    Giou,
    Total,
}

impl GradTerm {
    pub const ALL: [GradTerm; 5] = [
        GradTerm::PaletteInvariance,
        GradTerm::GatedFusion,
        GradTerm::Focal,
        GradTerm::Giou,
        GradTerm::Total,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradTerm::PaletteInvariance => "palette-invariance",
            GradTerm::GatedFusion => "gated-fusion",
            GradTerm::Focal => "focal",
            GradTerm::Giou => "giou",
            GradTerm::Total => "total",
        }
    }
}

impl fmt::Display for GradTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GradTerm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        GradTerm::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown term '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermReport {
    pub term: GradTerm,
    pub instances: usize,
    pub max_rel_error: f64,
}

impl TermReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < SUITE_TOLERANCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Embedding dimension used by every term.
    pub dim: usize,
    pub instances: usize,
    /// Scales one analytic gradient by 1.01 to exercise the failure path.
    pub fault: Option<GradTerm>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 8,
            instances: 100,
            fault: None,
        }
    }
}

fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_box<R: Rng>(rng: &mut R) -> BoundingBox {
    let x = rng.random_range(-2.0..2.0);
    let y = rng.random_range(-2.0..2.0);
    let w = rng.random_range(0.2..2.0);
    let h = rng.random_range(0.2..2.0);
    BoundingBox::new(x, y, x + w, y + h).unwrap()
}

fn corrupt(mut g: Vec<f64>, on: bool) -> Vec<f64> {
    if on {
        g.iter_mut().for_each(|v| *v *= 1.01);
    }
    g
}

fn check_pal<R: Rng>(rng: &mut R, dim: usize, fault: bool) -> Result<f64, FusionError> {
    let m = 4;
    let params = random_vec(rng, m * dim, 2.0);
    gradient_check(
        |p: &[f64]| {
            let set = PaletteEmbeddingSet::new(p.chunks(dim).map(|c| Embedding::new(c.to_vec())).collect()).unwrap();
            let (l, g) = palette_invariance_loss_grad(&set);
            (l, corrupt(g.concat(), fault))
        },
        &params,
        STEP,
    )
}

fn check_gate<R: Rng>(rng: &mut R, dim: usize, fault: bool) -> Result<f64, FusionError> {
    // scalar probe: c . u
    let c = random_vec(rng, dim, 1.0);
    let mut params = random_vec(rng, 2 * dim, 2.0);
    params.extend(random_vec(rng, 2 * dim * dim + dim, 0.5));
    gradient_check(
        |p: &[f64]| {
            let zb = Embedding::new(p[..dim].to_vec());
            let r = Embedding::new(p[dim..2 * dim].to_vec());
            let w = p[2 * dim..2 * dim + 2 * dim * dim].to_vec();
            let b = p[2 * dim + 2 * dim * dim..].to_vec();
            let gate = GateParams::from_parts(dim, w, b).unwrap();
            let out = gated_fuse(&zb, &r, &gate).unwrap();
            let loss = out.fused.values().iter().zip(&c).map(|(u, c)| u * c).sum();
            let gg = gated_fuse_backward(&zb, &r, &gate, &out, &c);
            let mut g = gg.d_zbar;
            g.extend(gg.d_r);
            g.extend(gg.d_params.flat_iter());
            (loss, corrupt(g, fault))
        },
        &params,
        STEP,
    )
}

fn check_focal<R: Rng>(rng: &mut R, fault: bool) -> Result<f64, FusionError> {
    let positive = rng.random_bool(0.5);
    let alpha = rng.random_range(0.05..1.0);
    let gamma = rng.random_range(0.0..4.0);
    let logit = rng.random_range(-6.0..6.0);
    gradient_check(
        |p: &[f64]| {
            let (l, g) = focal_loss_logit(p[0], positive, alpha, gamma);
            (l, corrupt(vec![g], fault))
        },
        &[logit],
        STEP,
    )
}

fn check_giou<R: Rng>(rng: &mut R, fault: bool) -> Result<f64, FusionError> {
    let (a, b) = (random_box(rng), random_box(rng));
    let mut params = a.as_array().to_vec();
    params.extend(b.as_array());
    gradient_check(
        |p: &[f64]| {
            let a = BoundingBox::new(p[0], p[1], p[2], p[3]).unwrap();
            let b = BoundingBox::new(p[4], p[5], p[6], p[7]).unwrap();
            let (l, ga, gb) = giou_loss_grad(&a, &b);
            let mut g = ga.to_vec();
            g.extend(gb);
            (l, corrupt(g, fault))
        },
        &params,
        STEP,
    )
}

fn check_total(seed: u64, dim: usize, fault: bool) -> Result<f64, FusionError> {
    let shape = ModelShape {
        input_side: 4,
        hidden: 4,
        dim,
        classes: 2,
    };
    let luts: Vec<_> = Palette::ALL.iter().map(|p| p.lut()).collect();
    // one synthetic sample with a defect so every term is active
    let sample = synthetic_crops(2, seed, &shape, &luts).swap_remove(1);
    let mut model = FusionModel::random(shape, seed);
    // open the gate so both branches carry gradient
    model.gate.bias_mut().iter_mut().for_each(|b| *b = 0.0);
    let weights = LossWeights::default();
    let batch = [sample];
    gradient_check(
        |p: &[f64]| {
            let mut m = model.clone();
            m.set_flat(p).unwrap();
            let (l, g) = m.loss_and_grad(&batch, &weights).unwrap();
            (l.total, corrupt(g, fault))
        },
        &model.to_flat(),
        STEP,
    )
}

/// Runs `instances` random gradient checks per term.
pub fn run_gradient_suite(config: &SuiteConfig) -> Result<Vec<TermReport>, FusionError> {
    if config.dim == 0 || config.instances == 0 {
        return Err(FusionError::Invalid("dim and instances must be positive".into()));
    }
    let mut out = Vec::new();
    for (k, term) in GradTerm::ALL.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(k as u64);
        let fault = config.fault == Some(term);
        let mut worst: f64 = 0.0;
        for i in 0..config.instances {
            let err = match term {
                GradTerm::PaletteInvariance => check_pal(&mut rng, config.dim, fault)?,
                GradTerm::GatedFusion => check_gate(&mut rng, config.dim, fault)?,
                GradTerm::Focal => check_focal(&mut rng, fault)?,
                GradTerm::Giou => check_giou(&mut rng, fault)?,
                GradTerm::Total => check_total(config.seed.wrapping_mul(1000).wrapping_add(i as u64), config.dim, fault)?,
            };
            worst = worst.max(err);
        }
        out.push(TermReport {
            term,
            instances: config.instances,
            max_rel_error: worst,
        });
    }
    Ok(out)
}

/// Closed-form loss values that must hold exactly (to 1e-6).
pub fn loss_identities() -> Vec<(&'static str, bool)> {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-6;
    let pair = PaletteEmbeddingSet::new(vec![Embedding::new(vec![0.0]), Embedding::new(vec![2.0])]).unwrap();
    let unit = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    let far = BoundingBox::new(2.0, 0.0, 3.0, 1.0).unwrap();
    let touch = BoundingBox::new(1.0, 0.0, 2.0, 1.0).unwrap();
    let gate = GateParams::zeros(2);
    let half = gated_fuse(&Embedding::new(vec![1.0, 3.0]), &Embedding::new(vec![3.0, -1.0]), &gate).unwrap();
    let weights = LossWeights {
        lambda_box: 2.0,
        lambda_pal: 0.1,
        ..Default::default()
    };
    vec![
        ("pal two-point", close(palette_invariance_loss(&pair), 1.0)),
        ("gate symmetric", half.fused.values() == [2.0, 1.0]),
        ("focal reference", close(focal_loss(0.5, true, 0.25, 2.0), 0.25 * 0.25 * 2f64.ln())),
        ("focal cross-entropy", close(focal_loss(0.3, true, 1.0, 0.0), -(0.3f64.ln()))),
        ("giou disjoint", close(giou_loss(&unit, &far), 4.0 / 3.0)),
        ("giou touching", close(giou_loss(&unit, &touch), 1.0)),
        ("total weighted", close(total_loss(0.5, 0.2, 1.0, &weights), 1.0)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes_and_is_deterministic() {
        let cfg = SuiteConfig {
            instances: 5,
            ..Default::default()
        };
        let a = run_gradient_suite(&cfg).unwrap();
        assert!(a.iter().all(TermReport::passed), "{a:?}");
        assert_eq!(a, run_gradient_suite(&cfg).unwrap());
        assert!(loss_identities().iter().all(|(_, ok)| *ok));
    }

    #[test]
    fn injected_fault_names_the_term() {
        for term in GradTerm::ALL {
            let cfg = SuiteConfig {
                instances: 3,
                fault: Some(term),
                ..Default::default()
            };
            let rep = run_gradient_suite(&cfg).unwrap();
            let failed: Vec<_> = rep.iter().filter(|r| !r.passed()).map(|r| r.term).collect();
            assert_eq!(failed, vec![term]);
        }
    }

    #[test]
    fn term_names_round_trip() {
        for t in GradTerm::ALL {
            assert_eq!(t.name().parse::<GradTerm>().unwrap(), t);
        }
        assert!("nope".parse::<GradTerm>().is_err());
    }
}

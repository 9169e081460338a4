use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Embedding, FusionError};

/// Two affine layers with a tanh in between: `z = W2 tanh(W1 x + b1) + b2`.
///
/// Parameters live in one flat buffer laid out as `W1 | b1 | W2 | b2`,
/// matrices row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoderParams {
    input: usize,
    hidden: usize,
    dim: usize,
    data: Vec<f64>,
}

impl ToyEncoderParams {
    pub fn zeros(input: usize, hidden: usize, dim: usize) -> Self {
        let n = hidden * input + hidden + dim * hidden + dim;
        Self {
            input,
            hidden,
            dim,
            data: vec![0.0; n],
        }
    }

    /// Gaussian weights scaled by fan-in, zero biases.
    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, hidden, dim);
        let n1 = Normal::new(0.0, (1.0 / input as f64).sqrt()).unwrap();
        let n2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).unwrap();
        let (w1, w2) = (p.w1_range(), p.w2_range());
        for v in &mut p.data[w1] {
            *v = n1.sample(rng);
        }
        for v in &mut p.data[w2] {
            *v = n2.sample(rng);
        }
        p
    }

    pub fn from_flat(input: usize, hidden: usize, dim: usize, data: Vec<f64>) -> Result<Self, FusionError> {
        let p = Self::zeros(input, hidden, dim);
        if data.len() != p.data.len() {
            return Err(FusionError::Shape(format!(
                "encoder {input}->{hidden}->{dim} needs {} parameters, got {}",
                p.data.len(),
                data.len()
            )));
        }
        Ok(Self { data, ..p })
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn w1_range(&self) -> std::ops::Range<usize> {
        0..self.hidden * self.input
    }

    fn b1_range(&self) -> std::ops::Range<usize> {
        let s = self.hidden * self.input;
        s..s + self.hidden
    }

    fn w2_range(&self) -> std::ops::Range<usize> {
        let s = self.b1_range().end;
        s..s + self.dim * self.hidden
    }

    fn b2_range(&self) -> std::ops::Range<usize> {
        let s = self.w2_range().end;
        s..s + self.dim
    }

    /// Accumulates the gradient of a downstream scalar given `d_z`.
    pub fn backward(&self, cache: &EncoderCache, d_z: &[f64], grad: &mut ToyEncoderParams) {
        let (input, hidden) = (self.input, self.hidden);
        let w2 = &self.data[self.w2_range()];
        let mut d_pre = vec![0.0; hidden];
        {
            let g = &mut grad.data;
            let w2r = self.w2_range();
            let b2r = self.b2_range();
            for (o, &dz) in d_z.iter().enumerate() {
                g[b2r.start + o] += dz;
                let row = &mut g[w2r.start + o * hidden..w2r.start + (o + 1) * hidden];
                for (gw, &h) in row.iter_mut().zip(&cache.hidden) {
                    *gw += dz * h;
                }
                for (j, dp) in d_pre.iter_mut().enumerate() {
                    *dp += dz * w2[o * hidden + j];
                }
            }
        }
        for (dp, &h) in d_pre.iter_mut().zip(&cache.hidden) {
            *dp *= 1.0 - h * h;
        }
        let w1r = self.w1_range();
        let b1r = self.b1_range();
        let g = &mut grad.data;
        for (j, &dp) in d_pre.iter().enumerate() {
            g[b1r.start + j] += dp;
            if dp != 0.0 {
                let row = &mut g[w1r.start + j * input..w1r.start + (j + 1) * input];
                for (gw, &x) in row.iter_mut().zip(&cache.input) {
                    *gw += dp * x;
                }
            }
        }
    }
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
}

pub fn encode(image: &[f64], params: &ToyEncoderParams) -> Result<Embedding, FusionError> {
    encode_with_cache(image, params).map(|(z, _)| z)
}

pub fn encode_with_cache(image: &[f64], params: &ToyEncoderParams) -> Result<(Embedding, EncoderCache), FusionError> {
    if image.len() != params.input {
        return Err(FusionError::Shape(format!(
            "encoder expects {} inputs, got {}",
            params.input,
            image.len()
        )));
    }
    let w1 = &params.data[params.w1_range()];
    let b1 = &params.data[params.b1_range()];
    let w2 = &params.data[params.w2_range()];
    let b2 = &params.data[params.b2_range()];
    let hidden: Vec<f64> = (0..params.hidden)
        .map(|j| {
            let row = &w1[j * params.input..(j + 1) * params.input];
            (b1[j] + row.iter().zip(image).map(|(w, x)| w * x).sum::<f64>()).tanh()
        })
        .collect();
    let z: Vec<f64> = (0..params.dim)
        .map(|o| {
            let row = &w2[o * params.hidden..(o + 1) * params.hidden];
            b2[o] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
        })
        .collect();
    Ok((
        Embedding::new(z),
        EncoderCache {
            input: image.to_vec(),
            hidden,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_parameters_give_zero_embedding() {
        let p = ToyEncoderParams::zeros(4, 3, 2);
        assert_eq!(encode(&[0.3, 0.1, 0.9, 0.5], &p).unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn identical_inputs_identical_embeddings() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = ToyEncoderParams::random(4, 3, 2, &mut rng);
        let x = [0.3, 0.1, 0.9, 0.5];
        assert_eq!(encode(&x, &p).unwrap(), encode(&x, &p).unwrap());
        assert!(encode(&x[..3], &p).is_err());
    }

    #[test]
    fn matches_hand_written_forward_pass() {
        // 4 inputs, 2 hidden, 2 outputs, every weight spelled out
        let w1 = [[0.5, -0.25, 0.1, 0.0], [-0.3, 0.2, 0.4, 0.7]];
        let b1 = [0.05, -0.1];
        let w2 = [[1.5, -0.5], [0.25, 2.0]];
        let b2 = [0.3, -0.2];
        let mut flat = Vec::new();
        flat.extend(w1.iter().flatten());
        flat.extend(b1);
        flat.extend(w2.iter().flatten());
        flat.extend(b2);
        let p = ToyEncoderParams::from_flat(4, 2, 2, flat).unwrap();
        let x = [0.2, 0.4, 0.6, 0.8];

        let h0 = (0.05 + 0.5 * 0.2 - 0.25 * 0.4 + 0.1 * 0.6 + 0.0 * 0.8f64).tanh();
        let h1 = (-0.1 - 0.3 * 0.2 + 0.2 * 0.4 + 0.4 * 0.6 + 0.7 * 0.8f64).tanh();
        let z0 = 0.3 + 1.5 * h0 - 0.5 * h1;
        let z1 = -0.2 + 0.25 * h0 + 2.0 * h1;
        let z = encode(&x, &p).unwrap();
        assert!((z.values()[0] - z0).abs() < 1e-15);
        assert!((z.values()[1] - z1).abs() < 1e-15);
    }
}

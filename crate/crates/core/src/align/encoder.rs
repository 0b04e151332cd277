use rand::Rng;

use super::linalg::{norm, Matrix};
use super::Embedding;
use crate::error::{Error, Result};
use crate::frame::RgbFrame;

/// `tanh(projection * x + bias)`, optionally scaled to unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoderParams {
    pub projection: Matrix,
    pub bias: Vec<f64>,
    pub normalize: bool,
}

/// Intermediate values kept for the backward pass of one input.
#[derive(Debug, Clone)]
pub(crate) struct EncodeCache {
    input: Vec<f64>,
    activation: Vec<f64>,
    norm: f64,
    output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub projection: Matrix,
    pub bias: Vec<f64>,
}

impl EncoderGrads {
    pub fn zeros_like(p: &ToyEncoderParams) -> Self {
        Self {
            projection: Matrix::zeros(p.projection.rows, p.projection.cols),
            bias: vec![0.0; p.bias.len()],
        }
    }
}

impl ToyEncoderParams {
    pub fn zeros(dim: usize, input_size: usize, normalize: bool) -> Self {
        Self {
            projection: Matrix::zeros(dim, input_size),
            bias: vec![0.0; dim],
            normalize,
        }
    }

    pub fn random<R: Rng + ?Sized>(dim: usize, input_size: usize, normalize: bool, rng: &mut R) -> Self {
        let scale = 1.0 / (input_size as f64).sqrt();
        Self {
            projection: Matrix::uniform(dim, input_size, scale, rng),
            bias: (0..dim).map(|_| rng.random_range(-0.1..=0.1)).collect(),
            normalize,
        }
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn input_size(&self) -> usize {
        self.projection.cols
    }

    pub fn param_count(&self) -> usize {
        self.projection.data.len() + self.bias.len()
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if self.projection.rows != self.bias.len() {
            return Err(Error::Dimension(format!(
                "projection has {} rows but bias has {} entries",
                self.projection.rows,
                self.bias.len()
            )));
        }
        if len != self.input_size() {
            return Err(Error::Dimension(format!(
                "encoder expects {} inputs, frame flattens to {len}",
                self.input_size()
            )));
        }
        Ok(())
    }

    pub(crate) fn forward(&self, input: &[f64]) -> Result<EncodeCache> {
        self.check_input(input.len())?;
        let mut activation = self.projection.matvec(input);
        for (a, b) in activation.iter_mut().zip(&self.bias) {
            *a = (*a + b).tanh();
        }
        let n = norm(&activation);
        let output = if self.normalize && n > 0.0 {
            activation.iter().map(|a| a / n).collect()
        } else {
            activation.clone()
        };
        Ok(EncodeCache {
            input: input.to_vec(),
            activation,
            norm: n,
            output,
        })
    }

    /// Accumulates parameter gradients given the gradient of the output.
    pub(crate) fn backward(&self, cache: &EncodeCache, grad_out: &[f64], grads: &mut EncoderGrads) {
        let grad_act: Vec<f64> = if self.normalize && cache.norm > 0.0 {
            let u = &cache.output;
            let proj: f64 = u.iter().zip(grad_out).map(|(a, b)| a * b).sum();
            grad_out
                .iter()
                .zip(u)
                .map(|(g, ui)| (g - ui * proj) / cache.norm)
                .collect()
        } else {
            grad_out.to_vec()
        };
        let grad_pre: Vec<f64> = grad_act
            .iter()
            .zip(&cache.activation)
            .map(|(g, a)| g * (1.0 - a * a))
            .collect();
        grads.projection.add_outer(1.0, &grad_pre, &cache.input);
        for (gb, g) in grads.bias.iter_mut().zip(&grad_pre) {
            *gb += g;
        }
    }
}

impl EncodeCache {
    pub(crate) fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Embeds each frame; pixels are scaled to `[0, 1]` before projection.
pub fn encode(frames: &[RgbFrame], params: &ToyEncoderParams) -> Result<Vec<Embedding>> {
    frames
        .iter()
        .map(|f| Ok(Embedding(params.forward(&f.to_unit_vec())?.output)))
        .collect()
}

use rand::Rng;

use super::linalg::{axpy, log_sum_exp, Matrix};
use crate::error::{Error, Result};

/// Token id fed at the first answer position.
pub const BEGIN_TOKEN: usize = 0;

/// Bigram-style decoder: the logits at each step are
/// `output * [conditioning; token_embed[previous token]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDecoderParams {
    /// `vocab x dim`
    pub token_embed: Matrix,
    /// `vocab x 2*dim`
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderGrads {
    pub token_embed: Matrix,
    pub output: Matrix,
}

impl DecoderGrads {
    pub fn zeros_like(p: &ToyDecoderParams) -> Self {
        Self {
            token_embed: Matrix::zeros(p.token_embed.rows, p.token_embed.cols),
            output: Matrix::zeros(p.output.rows, p.output.cols),
        }
    }

    pub fn scale_add(&mut self, scale: f64, other: &DecoderGrads) {
        axpy(scale, &other.token_embed.data, &mut self.token_embed.data);
        axpy(scale, &other.output.data, &mut self.output.data);
    }
}

/// An instruction prefix and the answer tokens to be scored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub instruction: Vec<usize>,
    pub answer: Vec<usize>,
}

impl TokenSeq {
    pub fn new(instruction: Vec<usize>, answer: Vec<usize>) -> Self {
        Self {
            instruction,
            answer,
        }
    }
}

impl ToyDecoderParams {
    pub fn zeros(vocab: usize, dim: usize) -> Self {
        Self {
            token_embed: Matrix::zeros(vocab, dim),
            output: Matrix::zeros(vocab, 2 * dim),
        }
    }

    pub fn random<R: Rng + ?Sized>(vocab: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            token_embed: Matrix::uniform(vocab, dim, 0.5, rng),
            output: Matrix::uniform(vocab, 2 * dim, 0.1, rng),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.token_embed.rows
    }

    pub fn dim(&self) -> usize {
        self.token_embed.cols
    }

    pub fn param_count(&self) -> usize {
        self.token_embed.data.len() + self.output.data.len()
    }

    fn check(&self, conditioning: &[f64], seq: &TokenSeq) -> Result<()> {
        let (v, d) = (self.vocab_size(), self.dim());
        if self.output.rows != v || self.output.cols != 2 * d {
            return Err(Error::Dimension(format!(
                "output matrix is {}x{}, expected {v}x{}",
                self.output.rows,
                self.output.cols,
                2 * d
            )));
        }
        if conditioning.len() != d {
            return Err(Error::Dimension(format!(
                "conditioning has {} entries, decoder width is {d}",
                conditioning.len()
            )));
        }
        if seq.answer.is_empty() {
            return Err(Error::Size("answer must hold at least one token".into()));
        }
        if let Some(&bad) = seq.instruction.iter().chain(&seq.answer).find(|&&t| t >= v) {
            return Err(Error::Dimension(format!("token id {bad} >= vocab size {v}")));
        }
        Ok(())
    }

    /// Conditioning with the instruction token embeddings summed in.
    fn condition(&self, conditioning: &[f64], seq: &TokenSeq) -> Vec<f64> {
        let mut c = conditioning.to_vec();
        for &t in &seq.instruction {
            axpy(1.0, self.token_embed.row(t), &mut c);
        }
        c
    }

    fn step_input(&self, cond: &[f64], prev: usize) -> Vec<f64> {
        let mut h = Vec::with_capacity(2 * cond.len());
        h.extend_from_slice(cond);
        h.extend_from_slice(self.token_embed.row(prev));
        h
    }

    fn previous(seq: &TokenSeq, l: usize) -> usize {
        if l == 0 {
            BEGIN_TOKEN
        } else {
            seq.answer[l - 1]
        }
    }

    /// Loss plus gradients w.r.t. the conditioning vector and the decoder.
    pub(crate) fn nll_with_grad(
        &self,
        conditioning: &[f64],
        seq: &TokenSeq,
        grads: &mut DecoderGrads,
        scale: f64,
    ) -> Result<(f64, Vec<f64>)> {
        self.check(conditioning, seq)?;
        let d = self.dim();
        let cond = self.condition(conditioning, seq);
        let mut loss = 0.0;
        let mut grad_cond = vec![0.0; d];
        for (l, &target) in seq.answer.iter().enumerate() {
            let prev = Self::previous(seq, l);
            let h = self.step_input(&cond, prev);
            let logits = self.output.matvec(&h);
            let lse = log_sum_exp(&logits);
            loss += lse - logits[target];

            let mut g_logits: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
            g_logits[target] -= 1.0;
            grads.output.add_outer(scale, &g_logits, &h);
            let g_h = self.output.matvec_t(&g_logits);
            axpy(1.0, &g_h[..d], &mut grad_cond);
            axpy(scale, &g_h[d..], grads.token_embed.row_mut(prev));
        }
        for &t in &seq.instruction {
            axpy(scale, &grad_cond, grads.token_embed.row_mut(t));
        }
        Ok((loss, grad_cond))
    }
}

/// `-log p(answer | conditioning, instruction)` under autoregressive
/// factorisation.
pub fn sequence_nll(decoder: &ToyDecoderParams, conditioning: &[f64], seq: &TokenSeq) -> Result<f64> {
    decoder.check(conditioning, seq)?;
    let cond = decoder.condition(conditioning, seq);
    let mut loss = 0.0;
    for (l, &target) in seq.answer.iter().enumerate() {
        let h = decoder.step_input(&cond, ToyDecoderParams::previous(seq, l));
        let logits = decoder.output.matvec(&h);
        loss += log_sum_exp(&logits) - logits[target];
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_decoder() {
        let dec = ToyDecoderParams::zeros(10, 4);
        let seq = TokenSeq::new(vec![3], vec![1, 5, 9]);
        let l = sequence_nll(&dec, &[0.3, -1.0, 2.0, 0.0], &seq).unwrap();
        assert!((l - 3.0 * 10f64.ln()).abs() < 1e-12);
        assert!((l - 6.9078).abs() < 1e-4);
    }

    #[test]
    fn near_delta_decoder() {
        // identity token embeddings; output maps previous token u to u + 1
        let v = 4;
        let mut dec = ToyDecoderParams::zeros(v, v);
        for t in 0..v {
            dec.token_embed.row_mut(t)[t] = 1.0;
        }
        for u in 0..v - 1 {
            dec.output.row_mut(u + 1)[v + u] = 50.0;
        }
        let seq = TokenSeq::new(vec![], vec![1, 2, 3]);
        let l = sequence_nll(&dec, &[0.0; 4], &seq).unwrap();
        assert!(l <= 1e-6, "{l}");
    }

    #[test]
    fn hand_set_decoder_matches_stepwise_softmax() {
        // V = 4, d = 2
        let dec = ToyDecoderParams {
            token_embed: Matrix::from_vec(4, 2, vec![0.1, -0.2, 0.4, 0.3, -0.5, 0.2, 0.0, 1.0]),
            output: Matrix::from_vec(
                4,
                4,
                vec![
                    0.2, -0.1, 0.5, 0.0, //
                    -0.3, 0.4, 0.1, 0.2, //
                    0.0, 0.6, -0.2, 0.3, //
                    0.7, 0.1, 0.0, -0.4,
                ],
            ),
        };
        let cond = [0.5, -1.0];
        let seq = TokenSeq::new(vec![2], vec![3, 1]);

        // independent oracle: explicit probabilities
        let c = [cond[0] + (-0.5), cond[1] + 0.2];
        let step = |prev: [f64; 2], target: usize| {
            let h = [c[0], c[1], prev[0], prev[1]];
            let rows = &dec.output.data;
            let z: Vec<f64> = (0..4).map(|r| (0..4).map(|k| rows[r * 4 + k] * h[k]).sum()).collect();
            let denom: f64 = z.iter().map(|v| v.exp()).sum();
            z[target].exp() / denom
        };
        let p1 = step([0.1, -0.2], 3);
        let p2 = step([0.0, 1.0], 1);
        let want = -(p1 * p2).ln();
        let got = sequence_nll(&dec, &cond, &seq).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn token_out_of_vocab() {
        let dec = ToyDecoderParams::zeros(4, 2);
        let err = sequence_nll(&dec, &[0.0, 0.0], &TokenSeq::new(vec![], vec![4]));
        assert!(matches!(err, Err(Error::Dimension(_))));
        let err = sequence_nll(&dec, &[0.0, 0.0], &TokenSeq::new(vec![9], vec![1]));
        assert!(err.is_err());
    }
}

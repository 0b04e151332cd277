use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::decoder::{DecoderGrads, ToyDecoderParams, TokenSeq};
use super::encoder::{EncodeCache, EncoderGrads, ToyEncoderParams};
use super::linalg::axpy;
use super::loss::cosine_loss_with_grad;
use super::{AlignConfig, Embedding, LossBreakdown};
use crate::error::{Error, Result};
use crate::frame::RgbFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub input_size: usize,
    pub embed_dim: usize,
    pub vocab: usize,
    pub normalize: bool,
}

/// Event encoder (trainable), image encoder (frozen during training) and
/// text decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub ev_encoder: ToyEncoderParams,
    pub im_encoder: ToyEncoderParams,
    pub decoder: ToyDecoderParams,
}

/// One training triple.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignSample {
    pub ev_frames: Vec<RgbFrame>,
    pub im_frames: Vec<RgbFrame>,
    pub tokens: TokenSeq,
}

/// A sample with frames already flattened to encoder inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub ev_inputs: Vec<Vec<f64>>,
    pub im_inputs: Vec<Vec<f64>>,
    pub tokens: TokenSeq,
}

impl AlignSample {
    pub fn prepare(&self) -> PreparedSample {
        PreparedSample {
            ev_inputs: self.ev_frames.iter().map(RgbFrame::to_unit_vec).collect(),
            im_inputs: self.im_frames.iter().map(RgbFrame::to_unit_vec).collect(),
            tokens: self.tokens.clone(),
        }
    }
}

/// Named parameter blocks in flat-vector order.
pub(crate) struct Segment {
    pub name: &'static str,
    pub shape: Vec<usize>,
}

impl ToyModel {
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            ev_encoder: ToyEncoderParams::random(dims.embed_dim, dims.input_size, dims.normalize, &mut rng),
            im_encoder: ToyEncoderParams::random(dims.embed_dim, dims.input_size, dims.normalize, &mut rng),
            decoder: ToyDecoderParams::random(dims.vocab, dims.embed_dim, &mut rng),
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input_size: self.ev_encoder.input_size(),
            embed_dim: self.ev_encoder.dim(),
            vocab: self.decoder.vocab_size(),
            normalize: self.ev_encoder.normalize,
        }
    }

    pub(crate) fn segments(&self) -> Vec<Segment> {
        let e = &self.ev_encoder.projection;
        let i = &self.im_encoder.projection;
        let (t, o) = (&self.decoder.token_embed, &self.decoder.output);
        vec![
            Segment { name: "ev_encoder.projection", shape: vec![e.rows, e.cols] },
            Segment { name: "ev_encoder.bias", shape: vec![self.ev_encoder.bias.len()] },
            Segment { name: "im_encoder.projection", shape: vec![i.rows, i.cols] },
            Segment { name: "im_encoder.bias", shape: vec![self.im_encoder.bias.len()] },
            Segment { name: "decoder.token_embed", shape: vec![t.rows, t.cols] },
            Segment { name: "decoder.output", shape: vec![o.rows, o.cols] },
        ]
    }

    fn blocks(&self) -> [&[f64]; 6] {
        [
            &self.ev_encoder.projection.data,
            &self.ev_encoder.bias,
            &self.im_encoder.projection.data,
            &self.im_encoder.bias,
            &self.decoder.token_embed.data,
            &self.decoder.output.data,
        ]
    }

    fn blocks_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.ev_encoder.projection.data,
            &mut self.ev_encoder.bias,
            &mut self.im_encoder.projection.data,
            &mut self.im_encoder.bias,
            &mut self.decoder.token_embed.data,
            &mut self.decoder.output.data,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "flat vector has {} entries, model has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut rest = flat;
        for block in self.blocks_mut() {
            let (head, tail) = rest.split_at(block.len());
            block.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// `true` for the event encoder and decoder, `false` for the image encoder.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let ev = self.ev_encoder.param_count();
        let im = self.im_encoder.param_count();
        let dec = self.decoder.param_count();
        std::iter::repeat_n(true, ev)
            .chain(std::iter::repeat_n(false, im))
            .chain(std::iter::repeat_n(true, dec))
            .collect()
    }

    pub fn embed(&self, sample: &PreparedSample) -> Result<(Vec<Embedding>, Vec<Embedding>)> {
        let run = |enc: &ToyEncoderParams, xs: &[Vec<f64>]| {
            xs.iter()
                .map(|x| Ok(Embedding(enc.forward(x)?.output().to_vec())))
                .collect::<Result<Vec<_>>>()
        };
        Ok((run(&self.ev_encoder, &sample.ev_inputs)?, run(&self.im_encoder, &sample.im_inputs)?))
    }

    /// Mean breakdown over `samples` and the gradient of the mean total with
    /// respect to every parameter, in [`ToyModel::to_flat`] order.
    pub fn loss_and_grad(
        &self,
        samples: &[PreparedSample],
        config: &AlignConfig,
    ) -> Result<(LossBreakdown, Vec<f64>)> {
        if samples.is_empty() {
            return Err(Error::Degenerate("empty dataset".into()));
        }
        let n = samples.len() as f64;
        let half = 0.5 * config.lambda1;
        let mut ev_g = EncoderGrads::zeros_like(&self.ev_encoder);
        let mut im_g = EncoderGrads::zeros_like(&self.im_encoder);
        let mut dec_g = DecoderGrads::zeros_like(&self.decoder);
        let mut mean = LossBreakdown::default();

        for s in samples {
            let ev_c = forward_all(&self.ev_encoder, &s.ev_inputs)?;
            let im_c = forward_all(&self.im_encoder, &s.im_inputs)?;
            let ev: Vec<Embedding> = ev_c.iter().map(|c| Embedding(c.output().to_vec())).collect();
            let im: Vec<Embedding> = im_c.iter().map(|c| Embedding(c.output().to_vec())).collect();
            let pe = super::loss::mean_embedding(&ev)?;
            let pi = super::loss::mean_embedding(&im)?;
            let fused: Vec<f64> = pe.0.iter().zip(&pi.0).map(|(a, b)| 0.5 * (a + b)).collect();

            let (l1, gc1) = self.decoder.nll_with_grad(&pe.0, &s.tokens, &mut dec_g, half / n)?;
            let (l2, gc2) = self.decoder.nll_with_grad(&fused, &s.tokens, &mut dec_g, half / n)?;
            let (lc, g_ev, g_im) = cosine_loss_with_grad(&ev, &im, config.cosine_mode)?;

            let b = LossBreakdown::compose(l1, l2, lc, config.lambda1, config.lambda2);
            mean.l_ev_t += b.l_ev_t / n;
            mean.l_ev_im_t += b.l_ev_im_t / n;
            mean.l_c += b.l_c / n;
            mean.total += b.total / n;

            // d total / d pooled vectors
            let g_pe: Vec<f64> = gc1.iter().zip(&gc2).map(|(a, b)| half * (a + 0.5 * b)).collect();
            let g_pi: Vec<f64> = gc2.iter().map(|b| half * 0.5 * b).collect();

            for (parts, (caches, enc, grads, g_pool)) in [
                (&g_ev, (&ev_c, &self.ev_encoder, &mut ev_g, &g_pe)),
                (&g_im, (&im_c, &self.im_encoder, &mut im_g, &g_pi)),
            ] {
                let k = caches.len() as f64;
                for (cache, g_cos) in caches.iter().zip(parts) {
                    let mut g = vec![0.0; g_pool.len()];
                    axpy(1.0 / (k * n), g_pool, &mut g);
                    axpy(config.lambda2 / n, g_cos, &mut g);
                    enc.backward(cache, &g, grads);
                }
            }
        }

        let grad = [
            ev_g.projection.data,
            ev_g.bias,
            im_g.projection.data,
            im_g.bias,
            dec_g.token_embed.data,
            dec_g.output.data,
        ]
        .concat();
        Ok((mean, grad))
    }
}

/// For each sample `i`: cosine between its flattened event and image
/// embeddings, and between its event embeddings and the image embeddings of
/// sample `(i + 1) % n`.
pub fn pair_cosines(model: &ToyModel, samples: &[PreparedSample]) -> Result<Vec<(f64, f64)>> {
    let flat = |list: Vec<Embedding>| list.into_iter().flat_map(|e| e.0).collect::<Vec<f64>>();
    let mut ev = Vec::with_capacity(samples.len());
    let mut im = Vec::with_capacity(samples.len());
    for s in samples {
        let (e, i) = model.embed(s)?;
        ev.push(flat(e));
        im.push(flat(i));
    }
    let n = samples.len();
    (0..n)
        .map(|i| {
            Ok((
                super::loss::cosine_similarity(&ev[i], &im[i])?,
                super::loss::cosine_similarity(&ev[i], &im[(i + 1) % n])?,
            ))
        })
        .collect()
}

fn forward_all(enc: &ToyEncoderParams, inputs: &[Vec<f64>]) -> Result<Vec<EncodeCache>> {
    inputs.iter().map(|x| enc.forward(x)).collect()
}

//! Multimodal alignment objectives at toy scale.
//!
//! Event and image frames are embedded by small `tanh` encoders, a bigram
//! decoder scores caption tokens, and the three objectives are combined as
//!
//! ```text
//! total = lambda1 / 2 * (nll(ev) + nll((ev + im) / 2)) + lambda2 * (1 - cos(ev, im))
//! ```
//!
//! Every gradient is derived by hand and checked against central finite
//! differences in [`grad_check`].

mod checkpoint;
mod decoder;
mod encoder;
mod gradcheck;
pub mod linalg;
mod loss;
mod model;
mod synthetic;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use decoder::{sequence_nll, DecoderGrads, ToyDecoderParams, TokenSeq, BEGIN_TOKEN};
pub use encoder::{encode, EncoderGrads, ToyEncoderParams};
pub use gradcheck::{finite_difference_gradient, grad_check, GradCheckReport};
pub use loss::{
    cosine_alignment_loss, cosine_similarity, fuse_embeddings, mean_embedding, prior_fused_nll,
    total_loss,
};
pub use model::{pair_cosines, AlignSample, ModelDims, PreparedSample, ToyModel};
pub use synthetic::{synthetic_dataset, SyntheticSpec};
pub use train::{gradient_descent, save_trajectory_csv, train_toy, write_trajectory_csv, TrainOutcome};

use std::str::FromStr;

/// Embedding vector produced by an encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Embedding {
    fn from(v: Vec<f64>) -> Self {
        Embedding(v)
    }
}

/// How event and image embedding lists are compared by the cosine loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CosineMode {
    /// One cosine between the two concatenated lists.
    #[default]
    Flatten,
    /// Mean of per-pair cosine losses.
    PerPairMean,
}

/// How event and image embeddings are combined at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FuseMode {
    #[default]
    Mean,
    Sum,
}

impl FromStr for FuseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(FuseMode::Mean),
            "sum" => Ok(FuseMode::Sum),
            _ => Err(format!("unknown fuse mode {s:?}, expected mean or sum")),
        }
    }
}

impl FromStr for CosineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flatten" => Ok(CosineMode::Flatten),
            "per-pair" | "per_pair_mean" => Ok(CosineMode::PerPairMean),
            _ => Err(format!("unknown cosine mode {s:?}, expected flatten or per-pair")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub fuse_mode: FuseMode,
    pub cosine_mode: CosineMode,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            learning_rate: 0.5,
            epochs: 200,
            fuse_mode: FuseMode::Mean,
            cosine_mode: CosineMode::Flatten,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.lambda1) || !ok(self.lambda2) || !ok(self.learning_rate) {
            return Err(crate::Error::Config(
                "loss weights and learning rate must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-term loss values and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_ev_t: f64,
    pub l_ev_im_t: f64,
    pub l_c: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(l_ev_t: f64, l_ev_im_t: f64, l_c: f64, lambda1: f64, lambda2: f64) -> Self {
        Self {
            l_ev_t,
            l_ev_im_t,
            l_c,
            total: 0.5 * lambda1 * (l_ev_t + l_ev_im_t) + lambda2 * l_c,
        }
    }
}

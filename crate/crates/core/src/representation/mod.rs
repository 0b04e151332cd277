//! Event spatiotemporal representation.
//!
//! A fixed-size event stream is rendered into red-blue frames at three
//! temporal granularities ([`hierarchical_temporal_split`]), and the
//! all-events frame is additionally tiled at high resolution along the best
//! matching aspect ratio ([`match_ratio`], [`spatial_split`]). The union of
//! both is an [`EsrBundle`].

mod bundle;
mod ratios;
mod render;
mod resize;
mod temporal;

pub use bundle::{assemble_esr, split_image, write_bundle, EsrBundle, FrameRole};
pub use ratios::{generate_adaptive_ratios, match_ratio, RatioSet, TileRatio};
pub use render::{render_frame, PolarityCounts};
pub use resize::resize_frame;
pub use temporal::{hierarchical_temporal_split, prepare_stream, MultiLevelEvents};

pub use bundle::spatial_split;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EsrConfig {
    /// Events per level-1 frame; level-2 frames hold twice as many.
    pub n_epsilon: usize,
    /// Fixed stream length. Shorter streams are padded, longer ones truncated.
    pub total_events: usize,
    pub n_min: u32,
    pub n_max: u32,
    /// Side of every output frame and tile, in pixels.
    pub tile_size: usize,
    pub tie_break_area_factor: f64,
}

impl Default for EsrConfig {
    fn default() -> Self {
        Self::with_n_epsilon(40_000)
    }
}

impl EsrConfig {
    /// Settings used for N-ImageNet sized recordings.
    pub fn n_imagenet() -> Self {
        Self::with_n_epsilon(40_000)
    }

    /// Settings used for N-Caltech101 sized recordings.
    pub fn n_caltech101() -> Self {
        Self::with_n_epsilon(20_000)
    }

    /// Defaults with the given `n_epsilon` and `total_events = 4 * n_epsilon`.
    pub fn with_n_epsilon(n_epsilon: usize) -> Self {
        Self {
            n_epsilon,
            total_events: 4 * n_epsilon,
            n_min: 1,
            n_max: 6,
            tile_size: 448,
            tie_break_area_factor: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_epsilon == 0 {
            return Err(Error::Config("n_epsilon must be positive".into()));
        }
        if self.total_events == 0 || !self.total_events.is_multiple_of(2 * self.n_epsilon) {
            return Err(Error::Config(format!(
                "total_events {} must be a positive multiple of 2 * n_epsilon = {}",
                self.total_events,
                2 * self.n_epsilon
            )));
        }
        if self.n_min < 1 || self.n_min > self.n_max {
            return Err(Error::Config(format!(
                "need 1 <= n_min <= n_max, got n_min={} n_max={}",
                self.n_min, self.n_max
            )));
        }
        if self.tile_size == 0 {
            return Err(Error::Config("tile_size must be at least 1".into()));
        }
        if !(self.tie_break_area_factor.is_finite() && self.tie_break_area_factor >= 0.0) {
            return Err(Error::Config("tie_break_area_factor must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Number of level-1 frames.
    pub fn level1_count(&self) -> usize {
        self.total_events / self.n_epsilon
    }

    /// Number of level-2 frames.
    pub fn level2_count(&self) -> usize {
        self.total_events / (2 * self.n_epsilon)
    }
}

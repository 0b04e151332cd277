//! Seeded toy dataset: small class-patterned images paired with event
//! streams generated from their luminance and short caption token sequences.
//!
//! Token ids: 0 begin, 1..=classes class names, then two attribute tokens,
//! an end token and two instruction tokens.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::decoder::TokenSeq;
use super::model::{AlignSample, ModelDims};
use crate::error::{Error, Result};
use crate::event_model::{Event, EventStream, Polarity, SensorGeometry};
use crate::frame::RgbFrame;
use crate::representation::{assemble_esr, split_image, EsrConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub classes: usize,
    pub width: u16,
    pub height: u16,
    pub tile_size: usize,
    pub embed_dim: usize,
    pub normalize: bool,
    /// Standard deviation of per-pixel noise added to class prototypes.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            samples: 32,
            classes: 4,
            width: 8,
            height: 4,
            tile_size: 4,
            embed_dim: 8,
            normalize: true,
            noise: 0.08,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn vocab(&self) -> usize {
        self.classes + 6
    }

    fn attribute_token(&self, bright: bool) -> usize {
        self.classes + 1 + usize::from(bright)
    }

    fn end_token(&self) -> usize {
        self.classes + 3
    }

    fn instruction_token(&self, k: usize) -> usize {
        self.classes + 4 + k
    }

    pub fn esr_config(&self) -> EsrConfig {
        let pixels = usize::from(self.width) * usize::from(self.height);
        EsrConfig {
            n_epsilon: pixels * 8,
            total_events: pixels * 16,
            n_min: 1,
            n_max: 2,
            tile_size: self.tile_size,
            tie_break_area_factor: 2.0,
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input_size: self.tile_size * self.tile_size * 3,
            embed_dim: self.embed_dim,
            vocab: self.vocab(),
            normalize: self.normalize,
        }
    }
}

/// Events whose polarity follows the sign of each pixel's deviation from
/// mid grey and whose count grows with its magnitude. Timestamps are a
/// random permutation.
fn events_from_luma(luma: &[f64], geometry: SensorGeometry, rng: &mut ChaCha8Rng) -> Vec<Event> {
    let w = usize::from(geometry.width);
    let mut events = Vec::new();
    for (i, l) in luma.iter().enumerate() {
        let dev = l - 0.5;
        let count = (dev.abs() * 16.0).round() as usize;
        let p = if dev > 0.0 { Polarity::Positive } else { Polarity::Negative };
        for _ in 0..count {
            events.push(((i % w) as u16, (i / w) as u16, p));
        }
    }
    events.shuffle(rng);
    events
        .into_iter()
        .enumerate()
        .map(|(t, (x, y, p))| Event::new(t as u64, x, y, p))
        .collect()
}

pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<Vec<AlignSample>> {
    if spec.samples == 0 || spec.classes == 0 {
        return Err(Error::Config("synthetic set needs at least one sample and class".into()));
    }
    let geometry = SensorGeometry::new(spec.width, spec.height)?;
    let pixels = geometry.pixel_count();
    let config = spec.esr_config();
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let prototypes: Vec<Vec<[f64; 3]>> = (0..spec.classes)
        .map(|_| {
            (0..pixels)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
                .collect()
        })
        .collect();

    let mut out = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let class = i % spec.classes;
        let mut image = RgbFrame::filled(usize::from(spec.width), usize::from(spec.height), [0; 3]);
        let mut luma = Vec::with_capacity(pixels);
        for (k, proto) in prototypes[class].iter().enumerate() {
            let mut rgb = [0u8; 3];
            let mut px = [0.0; 3];
            for c in 0..3 {
                let jitter = spec.noise * (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt();
                px[c] = (proto[c] + jitter).clamp(0.0, 1.0);
                rgb[c] = (px[c] * 255.0).round() as u8;
            }
            image.set(k % usize::from(spec.width), k / usize::from(spec.width), rgb);
            luma.push(0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]);
        }
        let bright = luma.iter().sum::<f64>() / pixels as f64 > 0.5;
        let events = events_from_luma(&luma, geometry, &mut rng);
        let stream = EventStream::new(geometry, events, format!("synthetic-{i}"));
        let bundle = assemble_esr(&stream, &config)?;
        let mut ev_frames = vec![bundle.temporal.level3];
        ev_frames.extend(bundle.patches);
        let im_frames = split_image(&image, &config)?;
        let tokens = TokenSeq::new(
            vec![spec.instruction_token(i % 2)],
            vec![1 + class, spec.attribute_token(bright), spec.end_token()],
        );
        out.push(AlignSample {
            ev_frames,
            im_frames,
            tokens,
        });
    }
    Ok(out)
}

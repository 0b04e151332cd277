use super::render::PolarityCounts;
use super::EsrConfig;
use crate::error::Result;
use crate::event_model::{pad_stream, slice_by_count, EventStream};
use crate::frame::RgbFrame;

/// Frames rendered at the three temporal granularities.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLevelEvents {
    /// One frame per `n_epsilon` events.
    pub level1: Vec<RgbFrame>,
    /// One frame per `2 * n_epsilon` events.
    pub level2: Vec<RgbFrame>,
    /// All events in one frame.
    pub level3: RgbFrame,
}

impl MultiLevelEvents {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.level1.len(), self.level2.len(), 1)
    }
}

/// Brings a stream to exactly `config.total_events` events: the earliest
/// events are kept when it is too long, pad events are appended when short.
pub fn prepare_stream(stream: &EventStream, config: &EsrConfig) -> Result<EventStream> {
    if stream.len() > config.total_events {
        let mut out = EventStream::new(
            stream.geometry,
            stream.events[..config.total_events].to_vec(),
            stream.source_id.clone(),
        );
        out.events.shrink_to_fit();
        Ok(out)
    } else {
        pad_stream(stream, config.total_events)
    }
}

pub fn hierarchical_temporal_split(
    stream: &EventStream,
    config: &EsrConfig,
) -> Result<MultiLevelEvents> {
    config.validate()?;
    let fixed = prepare_stream(stream, config)?;
    let geometry = fixed.geometry;

    // Level-2 and level-3 counts are sums of level-1 counts, so each event is
    // only visited once.
    let slice_counts = slice_by_count(&fixed, config.n_epsilon)?
        .into_iter()
        .map(|group| PolarityCounts::from_events(group, geometry))
        .collect::<Result<Vec<_>>>()?;

    let level1 = slice_counts.iter().map(PolarityCounts::to_frame).collect();
    let mut all = PolarityCounts::new(geometry);
    let level2 = slice_counts
        .chunks_exact(2)
        .map(|pair| {
            let mut c = pair[0].clone();
            c.merge(&pair[1]);
            all.merge(&c);
            c.to_frame()
        })
        .collect();

    Ok(MultiLevelEvents {
        level1,
        level2,
        level3: all.to_frame(),
    })
}

//! In-memory event data model shared by every other module.
//!
//! An [`EventStream`] is a time-ordered list of [`Event`]s attached to a
//! [`SensorGeometry`]. Streams are plain values: every operation here takes
//! its input by reference and returns a new value.

use std::fmt;

use crate::error::{Error, Result};

pub use crate::frame::RgbFrame;

/// Sign of the brightness change. `Pad` is synthetic and only ever created by
/// [`pad_stream`] (or decoded from an EVT1 file that stored one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
    Pad,
}

/// A single event: timestamp in microseconds, pixel column `x`, pixel row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub const fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Self { t, x, y, p }
    }

    pub const fn pad(t: u64) -> Self {
        Self::new(t, 0, 0, Polarity::Pad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "sensor geometry must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

impl fmt::Display for SensorGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub geometry: SensorGeometry,
    pub events: Vec<Event>,
    pub source_id: String,
}

impl EventStream {
    pub fn new(geometry: SensorGeometry, events: Vec<Event>, source_id: impl Into<String>) -> Self {
        Self {
            geometry,
            events,
            source_id: source_id.into(),
        }
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        Self::new(geometry, Vec::new(), "")
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// Coordinate outside the sensor geometry.
    Bounds,
    /// Timestamp smaller than its predecessor's.
    Ordering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rule {
            Rule::Bounds => write!(f, "event {}: coordinate out of bounds", self.index),
            Rule::Ordering => write!(f, "event {}: timestamp decreases", self.index),
        }
    }
}

/// Lists every broken stream invariant. An empty list means the stream is valid.
pub fn validate_stream(stream: &EventStream) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut prev_t = 0u64;
    for (index, ev) in stream.events.iter().enumerate() {
        if !stream.geometry.contains(ev.x, ev.y) {
            out.push(Violation {
                index,
                rule: Rule::Bounds,
            });
        }
        if index > 0 && ev.t < prev_t {
            out.push(Violation {
                index,
                rule: Rule::Ordering,
            });
        }
        prev_t = ev.t;
    }
    out
}

/// Stable sort by timestamp.
pub fn sort_events(stream: &EventStream) -> EventStream {
    let mut out = stream.clone();
    sort_in_place(&mut out.events);
    out
}

pub(crate) fn sort_in_place(events: &mut [Event]) {
    if !events.windows(2).all(|w| w[0].t <= w[1].t) {
        events.sort_by_key(|e| e.t);
    }
}

/// Appends pad events until the stream holds `target_count` events.
///
/// Pad events sit at `(0, 0)` and reuse the last real timestamp (0 for an
/// empty stream) so the result stays sorted.
pub fn pad_stream(stream: &EventStream, target_count: usize) -> Result<EventStream> {
    if target_count < stream.len() {
        return Err(Error::Size(format!(
            "cannot pad a stream of {} events down to {target_count}",
            stream.len()
        )));
    }
    let mut out = stream.clone();
    let t = stream.events.last().map_or(0, |e| e.t);
    out.events.resize(target_count, Event::pad(t));
    Ok(out)
}

/// Cuts the stream into contiguous groups of exactly `events_per_group` events.
pub fn slice_by_count(stream: &EventStream, events_per_group: usize) -> Result<Vec<&[Event]>> {
    if events_per_group == 0 {
        return Err(Error::Size("events per group must be positive".into()));
    }
    if !stream.len().is_multiple_of(events_per_group) {
        return Err(Error::Size(format!(
            "stream length {} is not divisible by group size {events_per_group}",
            stream.len()
        )));
    }
    Ok(stream.events.chunks_exact(events_per_group).collect())
}

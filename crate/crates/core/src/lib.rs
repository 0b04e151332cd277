//! Event-camera toolkit: stream ingest, spatiotemporal frame representation,
//! toy multimodal alignment objectives and a caption annotation engine.

pub mod error;
pub mod event_model;
pub mod frame;
pub mod ingest;
pub mod representation;
pub mod align;
pub mod caption;
pub mod cli;

pub use error::{Error, Result};
pub use event_model::{Event, EventStream, Polarity, SensorGeometry};
pub use frame::RgbFrame;

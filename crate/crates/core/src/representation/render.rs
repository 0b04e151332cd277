use crate::error::{Error, Result};
use crate::event_model::{Event, Polarity, SensorGeometry};
use crate::frame::{RgbFrame, BLUE, RED, WHITE};

/// Per-pixel positive and negative event counts over a sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolarityCounts {
    geometry: SensorGeometry,
    pos: Vec<u32>,
    neg: Vec<u32>,
}

impl PolarityCounts {
    pub fn new(geometry: SensorGeometry) -> Self {
        let n = geometry.pixel_count();
        Self {
            geometry,
            pos: vec![0; n],
            neg: vec![0; n],
        }
    }

    pub fn from_events(events: &[Event], geometry: SensorGeometry) -> Result<Self> {
        let mut counts = Self::new(geometry);
        counts.accumulate(events)?;
        Ok(counts)
    }

    /// Adds a group of events. Pad events are bounds-checked but not counted.
    pub fn accumulate(&mut self, events: &[Event]) -> Result<()> {
        let g = self.geometry;
        let w = g.width as usize;
        for e in events {
            if !g.contains(e.x, e.y) {
                return Err(Error::Bounds {
                    line: None,
                    x: e.x.into(),
                    y: e.y.into(),
                    width: g.width,
                    height: g.height,
                });
            }
            let i = e.y as usize * w + e.x as usize;
            match e.p {
                Polarity::Positive => self.pos[i] += 1,
                Polarity::Negative => self.neg[i] += 1,
                Polarity::Pad => {}
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &PolarityCounts) {
        assert_eq!(self.geometry, other.geometry, "merging counts of different sensors");
        for (a, b) in self.pos.iter_mut().zip(&other.pos) {
            *a += b;
        }
        for (a, b) in self.neg.iter_mut().zip(&other.neg) {
            *a += b;
        }
    }

    /// Red where positive events dominate (ties included), blue where negative
    /// events dominate, white where nothing fired.
    pub fn to_frame(&self) -> RgbFrame {
        let w = self.geometry.width as usize;
        let h = self.geometry.height as usize;
        let mut frame = RgbFrame::filled(w, h, WHITE);
        for (i, (&p, &n)) in self.pos.iter().zip(&self.neg).enumerate() {
            if p == 0 && n == 0 {
                continue;
            }
            frame.set(i % w, i / w, if n > p { BLUE } else { RED });
        }
        frame
    }
}

/// Renders one event group into a red-blue frame of the sensor's size.
pub fn render_frame(events: &[Event], geometry: SensorGeometry) -> Result<RgbFrame> {
    Ok(PolarityCounts::from_events(events, geometry)?.to_frame())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn g(w: u16, h: u16) -> SensorGeometry {
        SensorGeometry::new(w, h).unwrap()
    }

    // Independent per-pixel counting oracle.
    fn oracle(events: &[Event], geometry: SensorGeometry) -> RgbFrame {
        let mut tally: HashMap<(u16, u16), (i64, i64)> = HashMap::new();
        for e in events {
            let entry = tally.entry((e.x, e.y)).or_default();
            match e.p {
                Polarity::Positive => entry.0 += 1,
                Polarity::Negative => entry.1 += 1,
                Polarity::Pad => {}
            }
        }
        let mut f = RgbFrame::filled(geometry.width as usize, geometry.height as usize, WHITE);
        for ((x, y), (p, n)) in tally {
            let color = match (p, n) {
                (0, 0) => WHITE,
                (p, n) if p >= n => RED,
                _ => BLUE,
            };
            f.set(x as usize, y as usize, color);
        }
        f
    }

    #[test]
    fn empty_group_is_white() {
        let f = render_frame(&[], g(4, 4)).unwrap();
        assert_eq!((f.width(), f.height()), (4, 4));
        assert!(f.pixels().all(|p| p == WHITE));
    }

    #[test]
    fn single_positive_event() {
        let f = render_frame(&[Event::new(0, 1, 2, Polarity::Positive)], g(4, 4)).unwrap();
        assert_eq!(f.get(1, 2), RED);
        assert_eq!(f.pixels().filter(|&p| p == WHITE).count(), 15);
    }

    #[test]
    fn majority_and_tie_rules() {
        use Polarity::*;
        let events = [
            Event::new(0, 0, 0, Positive),
            Event::new(1, 0, 0, Positive),
            Event::new(2, 0, 0, Negative),
            Event::new(3, 1, 0, Negative),
            Event::new(4, 1, 0, Negative),
            Event::new(5, 1, 0, Positive),
            Event::new(6, 2, 0, Negative),
            Event::new(7, 2, 0, Positive),
            Event::new(8, 3, 0, Pad),
        ];
        let f = render_frame(&events, g(4, 1)).unwrap();
        assert_eq!(f, oracle(&events, g(4, 1)));
        assert_eq!(f.get(0, 0), RED);
        assert_eq!(f.get(1, 0), BLUE);
        assert_eq!(f.get(2, 0), RED);
        assert_eq!(f.get(3, 0), WHITE);
    }

    #[test]
    fn out_of_bounds_is_rejected() {
        let err = render_frame(&[Event::new(0, 4, 0, Polarity::Positive)], g(4, 4));
        assert!(matches!(err, Err(Error::Bounds { .. })));
    }

    proptest! {
        #[test]
        fn matches_oracle_and_is_order_invariant(
            raw in prop::collection::vec((0u16..5, 0u16..3, 0u8..3), 0..80),
            rot in 0usize..80,
        ) {
            let events: Vec<Event> = raw.iter().enumerate().map(|(t, &(x, y, p))| {
                Event::new(t as u64, x, y, [Polarity::Positive, Polarity::Negative, Polarity::Pad][p as usize])
            }).collect();
            let geom = g(5, 3);
            let f = render_frame(&events, geom).unwrap();
            prop_assert_eq!(&f, &oracle(&events, geom));
            let mut shuffled = events.clone();
            if !shuffled.is_empty() {
                let k = rot % shuffled.len();
                shuffled.rotate_left(k);
            }
            shuffled.reverse();
            prop_assert_eq!(render_frame(&shuffled, geom).unwrap(), f);
        }
    }
}

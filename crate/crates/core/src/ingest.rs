//! Readers and writers between on-disk event files and [`EventStream`].
//!
//! Three layouts are supported:
//!
//! * CSV: UTF-8 lines `t,x,y,p` with `p` in `{1, -1}`. Blank lines and lines
//!   starting with `#` are skipped.
//! * EVT1: the canonical interchange format. A 16-byte header (`b"EVT1"`,
//!   `u16` width, `u16` height, `u64` count) followed by `count` 13-byte
//!   records (`u64` t, `u16` x, `u16` y, `u8` polarity: 0 negative,
//!   1 positive, 2 pad). All integers little-endian.
//! * ATIS40: 5-byte records `x, y, [pol:1 | t22..16:7], t15..8, t7..0`, the
//!   layout used by N-Caltech101 style recordings.

use std::path::Path;

use crate::error::{Error, Result};
use crate::event_model::{sort_in_place, Event, EventStream, Polarity, SensorGeometry};

pub const EVT1_MAGIC: [u8; 4] = *b"EVT1";
pub const EVT1_HEADER_LEN: usize = 16;
pub const EVT1_RECORD_LEN: usize = 13;
pub const ATIS40_RECORD_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatKind {
    Csv,
    Evt1,
    Atis40,
}

pub fn detect_format(path: &Path, leading: &[u8]) -> FormatKind {
    if leading.starts_with(&EVT1_MAGIC) {
        FormatKind::Evt1
    } else if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("bin"))
    {
        FormatKind::Atis40
    } else {
        FormatKind::Csv
    }
}

fn bounds_error(line: Option<usize>, x: u64, y: u64, g: SensorGeometry) -> Error {
    Error::Bounds {
        line,
        x,
        y,
        width: g.width,
        height: g.height,
    }
}

pub fn parse_csv(bytes: &[u8], geometry: SensorGeometry) -> Result<EventStream> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        message: "invalid UTF-8".into(),
    })?;
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let row = raw.trim();
        if row.is_empty() || row.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse { line, message };
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields t,x,y,p, found {}", fields.len())));
        }
        let num = |idx: usize, name: &str| {
            fields[idx]
                .parse::<u64>()
                .map_err(|_| err(format!("invalid {name} {:?}", fields[idx])))
        };
        let (t, x, y) = (num(0, "t")?, num(1, "x")?, num(2, "y")?);
        let p = match fields[3] {
            "1" | "+1" => Polarity::Positive,
            "-1" => Polarity::Negative,
            other => return Err(err(format!("invalid polarity {other:?}, expected 1 or -1"))),
        };
        if x >= u64::from(geometry.width) || y >= u64::from(geometry.height) {
            return Err(bounds_error(Some(line), x, y, geometry));
        }
        events.push(Event::new(t, x as u16, y as u16, p));
    }
    sort_in_place(&mut events);
    Ok(EventStream::new(geometry, events, ""))
}

fn le_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn le_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b[..8].try_into().expect("8 bytes"))
}

pub fn parse_evt_bin(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < 4 || bytes[..4] != EVT1_MAGIC {
        let got = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
        return Err(Error::Format(format!("bad magic {got:?}, expected \"EVT1\"")));
    }
    if bytes.len() < EVT1_HEADER_LEN {
        return Err(Error::Format("truncated EVT1 header".into()));
    }
    let geometry = SensorGeometry::new(le_u16(&bytes[4..6]), le_u16(&bytes[6..8]))
        .map_err(|e| Error::Format(e.to_string()))?;
    let count = le_u64(&bytes[8..16]);
    let payload = &bytes[EVT1_HEADER_LEN..];
    let available = (payload.len() / EVT1_RECORD_LEN) as u64;
    if count > available {
        return Err(Error::Format(format!(
            "truncated payload: header declares {count} events, file holds {available}"
        )));
    }
    let count = count as usize;
    if payload.len() != count * EVT1_RECORD_LEN {
        return Err(Error::Format(format!(
            "{} trailing bytes after {count} records",
            payload.len() - count * EVT1_RECORD_LEN
        )));
    }
    let mut events = Vec::with_capacity(count);
    for (i, rec) in payload.chunks_exact(EVT1_RECORD_LEN).enumerate() {
        let (t, x, y) = (le_u64(&rec[0..8]), le_u16(&rec[8..10]), le_u16(&rec[10..12]));
        let p = match rec[12] {
            0 => Polarity::Negative,
            1 => Polarity::Positive,
            2 => Polarity::Pad,
            other => {
                return Err(Error::Format(format!("record {i}: polarity byte {other} > 2")));
            }
        };
        if !geometry.contains(x, y) {
            return Err(bounds_error(None, x.into(), y.into(), geometry));
        }
        events.push(Event::new(t, x, y, p));
    }
    sort_in_place(&mut events);
    Ok(EventStream::new(geometry, events, ""))
}

pub fn write_evt_bin(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(EVT1_HEADER_LEN + stream.len() * EVT1_RECORD_LEN);
    out.extend_from_slice(&EVT1_MAGIC);
    out.extend_from_slice(&stream.geometry.width.to_le_bytes());
    out.extend_from_slice(&stream.geometry.height.to_le_bytes());
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for e in &stream.events {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(match e.p {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
            Polarity::Pad => 2,
        });
    }
    out
}

pub fn parse_atis40(bytes: &[u8], geometry: SensorGeometry) -> Result<EventStream> {
    if !bytes.len().is_multiple_of(ATIS40_RECORD_LEN) {
        return Err(Error::Size(format!(
            "ATIS40 input of {} bytes is not a multiple of {ATIS40_RECORD_LEN}",
            bytes.len()
        )));
    }
    let mut events = Vec::with_capacity(bytes.len() / ATIS40_RECORD_LEN);
    for rec in bytes.chunks_exact(ATIS40_RECORD_LEN) {
        let (x, y) = (u16::from(rec[0]), u16::from(rec[1]));
        let p = if rec[2] & 0x80 != 0 {
            Polarity::Positive
        } else {
            Polarity::Negative
        };
        let t = (u64::from(rec[2] & 0x7f) << 16) | (u64::from(rec[3]) << 8) | u64::from(rec[4]);
        if !geometry.contains(x, y) {
            return Err(bounds_error(None, x.into(), y.into(), geometry));
        }
        events.push(Event::new(t, x, y, p));
    }
    sort_in_place(&mut events);
    Ok(EventStream::new(geometry, events, ""))
}

/// Encodes events as ATIS40 records. Pad events and timestamps beyond 23 bits
/// cannot be represented.
pub fn write_atis40(stream: &EventStream) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(stream.len() * ATIS40_RECORD_LEN);
    for e in &stream.events {
        if e.x > 255 || e.y > 255 || e.t >= 1 << 23 || e.p == Polarity::Pad {
            return Err(Error::Format(format!("event {e:?} is not representable in ATIS40")));
        }
        let pol = if e.p == Polarity::Positive { 0x80 } else { 0 };
        out.extend_from_slice(&[
            e.x as u8,
            e.y as u8,
            pol | ((e.t >> 16) as u8 & 0x7f),
            (e.t >> 8) as u8,
            e.t as u8,
        ]);
    }
    Ok(out)
}

/// Smallest geometry that contains every event (at least 1x1).
pub fn bounding_geometry(stream: &EventStream) -> SensorGeometry {
    let (w, h) = stream
        .events
        .iter()
        .fold((1u16, 1u16), |(w, h), e| (w.max(e.x + 1), h.max(e.y + 1)));
    SensorGeometry {
        width: w,
        height: h,
    }
}

/// Reads any supported file. CSV and ATIS40 carry no geometry of their own;
/// when `geometry` is `None` the bounding box of the events is used.
pub fn read_event_file(path: &Path, geometry: Option<SensorGeometry>) -> Result<EventStream> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let kind = detect_format(path, &bytes);
    let widest = SensorGeometry {
        width: u16::MAX,
        height: u16::MAX,
    };
    let mut stream = match kind {
        FormatKind::Evt1 => parse_evt_bin(&bytes)?,
        FormatKind::Csv => parse_csv(&bytes, geometry.unwrap_or(widest))?,
        FormatKind::Atis40 => parse_atis40(&bytes, geometry.unwrap_or(widest))?,
    };
    if kind != FormatKind::Evt1 && geometry.is_none() {
        stream.geometry = bounding_geometry(&stream);
    }
    stream.source_id = path.display().to_string();
    Ok(stream)
}

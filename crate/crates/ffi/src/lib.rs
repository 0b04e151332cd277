//! C ABI for event stream loading, frame bundle assembly and tile ratio
//! selection.
//!
//! Every fallible function returns an [`EvlmStatus`]. On failure the message
//! is kept per thread and can be read with [`evlm_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use evlm::ingest::{read_event_file, write_evt_bin};
use evlm::representation::{
    assemble_esr, generate_adaptive_ratios, match_ratio, write_bundle, EsrBundle, EsrConfig, FrameRole,
};
use evlm::{Error, Event, EventStream, Polarity, RgbFrame, SensorGeometry};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvlmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Format = 5,
    Config = 6,
    Bounds = 7,
    Size = 8,
    OutOfRange = 9,
    Internal = 99,
    Panic = 100,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvlmFrameRole {
    Level1 = 1,
    Level2 = 2,
    Level3 = 3,
    Patch = 4,
}

/// Settings for [`evlm_esr_assemble`]; fill with [`evlm_esr_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvlmEsrConfig {
    pub n_epsilon: usize,
    pub total_events: usize,
    pub n_min: u32,
    pub n_max: u32,
    pub tile_size: usize,
    pub tie_break_area_factor: f64,
}

impl From<EvlmEsrConfig> for EsrConfig {
    fn from(c: EvlmEsrConfig) -> Self {
        EsrConfig {
            n_epsilon: c.n_epsilon,
            total_events: c.total_events,
            n_min: c.n_min,
            n_max: c.n_max,
            tile_size: c.tile_size,
            tie_break_area_factor: c.tie_break_area_factor,
        }
    }
}

impl From<EsrConfig> for EvlmEsrConfig {
    fn from(c: EsrConfig) -> Self {
        EvlmEsrConfig {
            n_epsilon: c.n_epsilon,
            total_events: c.total_events,
            n_min: c.n_min,
            n_max: c.n_max,
            tile_size: c.tile_size,
            tie_break_area_factor: c.tie_break_area_factor,
        }
    }
}

/// Opaque event stream.
pub struct EvlmStream(EventStream);

/// Opaque frame bundle.
pub struct EvlmBundle {
    bundle: EsrBundle,
    frames: Vec<(FrameRole, RgbFrame)>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EvlmStatus {
    match e {
        Error::Io { .. } => EvlmStatus::Io,
        Error::Parse { .. } => EvlmStatus::Parse,
        Error::Format(_) => EvlmStatus::Format,
        Error::Config(_) => EvlmStatus::Config,
        Error::Bounds { .. } => EvlmStatus::Bounds,
        Error::Size(_) => EvlmStatus::Size,
        _ => EvlmStatus::Internal,
    }
}

struct Fail(EvlmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EvlmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EvlmStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            EvlmStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(EvlmStatus::NullArgument, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(EvlmStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn in_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`) and returns the full message length
/// including the terminator, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn evlm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn evlm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads a CSV, EVT1 or ATIS40 file. `width` and `height` give the sensor
/// size; pass 0 for both to infer it from the events.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evlm_stream_open(
    path: *const c_char,
    width: u16,
    height: u16,
    out: *mut *mut EvlmStream,
) -> EvlmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = path_arg(path, "path")?;
        let geometry = match (width, height) {
            (0, 0) => None,
            (w, h) => Some(SensorGeometry::new(w, h)?),
        };
        let stream = read_event_file(&path, geometry)?;
        *out = Box::into_raw(Box::new(EvlmStream(stream)));
        Ok(())
    })
}

/// Builds a stream from parallel arrays. Polarity is `1` positive, `-1`
/// negative. Events are sorted by time.
///
/// # Safety
/// Each array must hold `count` elements (or be null when `count` is 0).
#[no_mangle]
pub unsafe extern "C" fn evlm_stream_from_events(
    width: u16,
    height: u16,
    t: *const u64,
    x: *const u16,
    y: *const u16,
    p: *const i8,
    count: usize,
    out: *mut *mut EvlmStream,
) -> EvlmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let geometry = SensorGeometry::new(width, height)?;
        let slice = |ptr: *const u8, what: &str| -> Result<(), Fail> {
            if count > 0 && ptr.is_null() {
                Err(null(what))
            } else {
                Ok(())
            }
        };
        slice(t.cast(), "t")?;
        slice(x.cast(), "x")?;
        slice(y.cast(), "y")?;
        slice(p.cast(), "p")?;
        let mut events = Vec::with_capacity(count);
        for i in 0..count {
            let (ex, ey) = (*x.add(i), *y.add(i));
            if !geometry.contains(ex, ey) {
                return Err(Error::Bounds {
                    line: None,
                    x: ex.into(),
                    y: ey.into(),
                    width,
                    height,
                }
                .into());
            }
            let pol = match *p.add(i) {
                1 => Polarity::Positive,
                -1 => Polarity::Negative,
                v => return Err(Fail(EvlmStatus::InvalidArgument, format!("event {i}: polarity {v}"))),
            };
            events.push(Event::new(*t.add(i), ex, ey, pol));
        }
        let stream = evlm::event_model::sort_events(&EventStream::new(geometry, events, "ffi"));
        *out = Box::into_raw(Box::new(EvlmStream(stream)));
        Ok(())
    })
}

/// Number of events, or 0 for a null handle.
///
/// # Safety
/// `stream` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evlm_stream_len(stream: *const EvlmStream) -> usize {
    stream.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `stream` must be a live handle; `width` and `height` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evlm_stream_geometry(
    stream: *const EvlmStream,
    width: *mut u16,
    height: *mut u16,
) -> EvlmStatus {
    guard(|| {
        let s = in_ref(stream, "stream")?;
        *out_ptr(width, "width")? = s.0.geometry.width;
        *out_ptr(height, "height")? = s.0.geometry.height;
        Ok(())
    })
}

/// Writes the stream as an EVT1 file.
///
/// # Safety
/// `stream` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn evlm_stream_write_evt1(stream: *const EvlmStream, path: *const c_char) -> EvlmStatus {
    guard(|| {
        let s = in_ref(stream, "stream")?;
        let path = path_arg(path, "path")?;
        std::fs::write(&path, write_evt_bin(&s.0)).map_err(|e| Fail(EvlmStatus::Io, format!("{}: {e}", path.display())))
    })
}

/// # Safety
/// `stream` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn evlm_stream_free(stream: *mut EvlmStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Fills `out` with the default settings.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evlm_esr_config_default(out: *mut EvlmEsrConfig) -> EvlmStatus {
    guard(|| {
        *out_ptr(out, "out")? = EsrConfig::default().into();
        Ok(())
    })
}

/// # Safety
/// `stream` and `config` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evlm_esr_assemble(
    stream: *const EvlmStream,
    config: *const EvlmEsrConfig,
    out: *mut *mut EvlmBundle,
) -> EvlmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let s = in_ref(stream, "stream")?;
        let config: EsrConfig = (*in_ref(config, "config")?).into();
        let bundle = assemble_esr(&s.0, &config)?;
        let frames = bundle.frames().map(|(r, f)| (r, f.clone())).collect();
        *out = Box::into_raw(Box::new(EvlmBundle { bundle, frames }));
        Ok(())
    })
}

/// Writes `(N1, N2, 1, Np)` into `counts[0..4]`.
///
/// # Safety
/// `bundle` must be a live handle; `counts` must hold 4 writable elements.
#[no_mangle]
pub unsafe extern "C" fn evlm_bundle_counts(bundle: *const EvlmBundle, counts: *mut usize) -> EvlmStatus {
    guard(|| {
        let b = in_ref(bundle, "bundle")?;
        if counts.is_null() {
            return Err(null("counts"));
        }
        let (a, c, d, e) = b.bundle.counts();
        for (i, v) in [a, c, d, e].into_iter().enumerate() {
            *counts.add(i) = v;
        }
        Ok(())
    })
}

/// Total number of frames, or 0 for a null handle.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evlm_bundle_frame_count(bundle: *const EvlmBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.frames.len())
}

/// # Safety
/// `bundle` must be a live handle; `cols` and `rows` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evlm_bundle_ratio(bundle: *const EvlmBundle, cols: *mut u32, rows: *mut u32) -> EvlmStatus {
    guard(|| {
        let b = in_ref(bundle, "bundle")?;
        *out_ptr(cols, "cols")? = b.bundle.chosen_ratio.cols;
        *out_ptr(rows, "rows")? = b.bundle.chosen_ratio.rows;
        Ok(())
    })
}

/// Borrows frame `index` in bundle order. `rgb` receives a pointer to
/// `width * height * 3` bytes that stays valid until the bundle is freed.
///
/// # Safety
/// `bundle` must be a live handle; every out pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn evlm_bundle_frame(
    bundle: *const EvlmBundle,
    index: usize,
    role: *mut EvlmFrameRole,
    width: *mut usize,
    height: *mut usize,
    rgb: *mut *const u8,
) -> EvlmStatus {
    guard(|| {
        let b = in_ref(bundle, "bundle")?;
        let (r, f) = b.frames.get(index).ok_or_else(|| {
            Fail(
                EvlmStatus::OutOfRange,
                format!("frame {index} of {}", b.frames.len()),
            )
        })?;
        *out_ptr(role, "role")? = match r {
            FrameRole::Level1 => EvlmFrameRole::Level1,
            FrameRole::Level2 => EvlmFrameRole::Level2,
            FrameRole::Level3 => EvlmFrameRole::Level3,
            FrameRole::Patch => EvlmFrameRole::Patch,
        };
        *out_ptr(width, "width")? = f.width();
        *out_ptr(height, "height")? = f.height();
        *out_ptr(rgb, "rgb")? = f.as_bytes().as_ptr();
        Ok(())
    })
}

/// Writes every frame as PPM plus a `bundle.txt` index into `dir`.
///
/// # Safety
/// `bundle` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn evlm_bundle_write(bundle: *const EvlmBundle, dir: *const c_char) -> EvlmStatus {
    guard(|| {
        let b = in_ref(bundle, "bundle")?;
        write_bundle(&b.bundle, &path_arg(dir, "dir")?)?;
        Ok(())
    })
}

/// # Safety
/// `bundle` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn evlm_bundle_free(bundle: *mut EvlmBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Sorted tile ratios for the given tile-count bounds. Writes at most
/// `capacity` pairs and stores the full set size in `total`; call with
/// `capacity = 0` to size the buffers.
///
/// # Safety
/// `cols` and `rows` must hold `capacity` writable elements; `total` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn evlm_generate_ratios(
    n_min: u32,
    n_max: u32,
    cols: *mut u32,
    rows: *mut u32,
    capacity: usize,
    total: *mut usize,
) -> EvlmStatus {
    guard(|| {
        let total = out_ptr(total, "total")?;
        let set = generate_adaptive_ratios(n_min, n_max)?;
        *total = set.len();
        if capacity > 0 && (cols.is_null() || rows.is_null()) {
            return Err(null("cols/rows"));
        }
        for (i, r) in set.iter().take(capacity).enumerate() {
            *cols.add(i) = r.cols;
            *rows.add(i) = r.rows;
        }
        Ok(())
    })
}

/// Tile layout chosen for a `width x height` frame.
///
/// # Safety
/// `config` must be valid; `cols` and `rows` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evlm_match_ratio(
    width: usize,
    height: usize,
    config: *const EvlmEsrConfig,
    cols: *mut u32,
    rows: *mut u32,
) -> EvlmStatus {
    guard(|| {
        let config: EsrConfig = (*in_ref(config, "config")?).into();
        config.validate()?;
        if width == 0 || height == 0 {
            return Err(Fail(EvlmStatus::InvalidArgument, "width and height must be positive".into()));
        }
        let set = generate_adaptive_ratios(config.n_min, config.n_max)?;
        let r = match_ratio(width, height, &set, &config);
        *out_ptr(cols, "cols")? = r.cols;
        *out_ptr(rows, "rows")? = r.rows;
        Ok(())
    })
}

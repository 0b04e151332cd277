use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::client::{CaptionClient, CaptionRequest, ClientError, MediaPart};
use super::manifest::ManifestStore;
use super::problems::{ProblemList, ProblemLists};
use super::{ManifestRecord, MediaKind, RecordStatus, Verdict};
use crate::error::{Error, Result};
use crate::frame::RgbFrame;
use crate::ingest::read_event_file;
use crate::representation::render_frame;

pub const DEFAULT_FRAMES_PER_ITEM: usize = 14;
pub const DEFAULT_QA_PER_CLASS: usize = 5;

/// Source of `updated_at` timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clock {
    #[default]
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => *t,
        }
    }

    /// Fixed at `SOURCE_DATE_EPOCH` when that variable holds a Unix time,
    /// otherwise the system clock.
    pub fn from_env() -> Self {
        std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.trim().parse::<i64>().ok())
            .and_then(|s| Utc.timestamp_opt(s, 0).single())
            .map_or(Clock::System, Clock::Fixed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnnotateScope {
    /// Pending and regenerating records.
    #[default]
    All,
    RegeneratingOnly,
}

impl AnnotateScope {
    fn includes(&self, status: RecordStatus) -> bool {
        match self {
            AnnotateScope::All => matches!(status, RecordStatus::Pending | RecordStatus::Regenerating),
            AnnotateScope::RegeneratingOnly => status == RecordStatus::Regenerating,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotateOptions {
    pub max_in_flight: usize,
    pub seed: u64,
    pub frames_per_item: usize,
    pub scope: AnnotateScope,
    pub clock: Clock,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            seed: 0,
            frames_per_item: DEFAULT_FRAMES_PER_ITEM,
            scope: AnnotateScope::All,
            clock: Clock::System,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSummary {
    pub succeeded: usize,
    pub failed: usize,
    /// `(record id, message)` for each failure.
    pub errors: Vec<(String, String)>,
}

/// Uniform draw from the list, fixed by `seed`.
pub fn sample_question(list: &ProblemList, seed: u64) -> Result<String> {
    if list.questions.is_empty() {
        return Err(Error::Degenerate(format!("no questions for {}", list.domain)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(list.questions[rng.random_range(0..list.questions.len())].clone())
}

/// All indices when `frame_count <= n`, otherwise `round(k (F-1) / (n-1))`
/// for `k = 0..n`.
pub fn uniform_frame_sample(frame_count: usize, n: usize) -> Vec<usize> {
    if frame_count <= n {
        return (0..frame_count).collect();
    }
    if n < 2 {
        return vec![0];
    }
    let span = frame_count - 1;
    let steps = n - 1;
    // round half up in integers
    (0..n).map(|k| (2 * k * span + steps) / (2 * steps)).collect()
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn item_seed(seed: u64, record: &ManifestRecord) -> u64 {
    seed ^ fnv1a(&record.id) ^ u64::from(record.attempt).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn media_files(record: &ManifestRecord) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in &record.media_paths {
        if record.media_kind == MediaKind::FrameSequence && p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            out.extend(entries);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("record {:?} has no media", record.id)));
    }
    Ok(out)
}

fn media_part(kind: MediaKind, path: &Path) -> Result<MediaPart> {
    let png = |frame: RgbFrame| -> Result<MediaPart> {
        Ok(MediaPart {
            mime: "image/png".into(),
            bytes: frame.to_png()?,
        })
    };
    if kind == MediaKind::EventStream {
        let stream = read_event_file(path, None)?;
        return png(render_frame(&stream.events, stream.geometry)?);
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let raw = |mime: &str| -> Result<MediaPart> {
        Ok(MediaPart {
            mime: mime.into(),
            bytes: std::fs::read(path).map_err(|e| Error::io(path, e))?,
        })
    };
    match ext.as_str() {
        "ppm" => png(RgbFrame::read_ppm(path)?),
        "png" => raw("image/png"),
        "jpg" | "jpeg" => raw("image/jpeg"),
        _ => Err(Error::Format(format!("{}: unsupported media type", path.display()))),
    }
}

/// Media attachments for a request: every image, at most
/// `frames_per_item` uniformly spaced frames of a sequence, or a rendered
/// preview of each event file.
pub fn load_media(record: &ManifestRecord, frames_per_item: usize) -> Result<Vec<MediaPart>> {
    let files = media_files(record)?;
    let chosen: Vec<&PathBuf> = match record.media_kind {
        MediaKind::FrameSequence => uniform_frame_sample(files.len(), frames_per_item)
            .into_iter()
            .map(|i| &files[i])
            .collect(),
        _ => files.iter().collect(),
    };
    chosen.into_iter().map(|p| media_part(record.media_kind, p)).collect()
}

/// The `index`-th media file of a record as a displayable image.
pub fn preview_png(record: &ManifestRecord, index: usize) -> Result<MediaPart> {
    let files = media_files(record)?;
    let path = files
        .get(index)
        .ok_or_else(|| Error::Config(format!("record {:?} has {} media files", record.id, files.len())))?;
    media_part(record.media_kind, path)
}

/// Captions one pending or regenerating record. The input is left untouched;
/// on success the returned copy is captioned.
pub fn annotate_item(
    record: &ManifestRecord,
    client: &dyn CaptionClient,
    list: &ProblemList,
    options: &AnnotateOptions,
) -> Result<ManifestRecord> {
    if !matches!(record.status, RecordStatus::Pending | RecordStatus::Regenerating) {
        return Err(Error::Transition {
            id: record.id.clone(),
            from: record.status.to_string(),
            to: RecordStatus::Captioned.to_string(),
        });
    }
    let question = sample_question(list, item_seed(options.seed, record))?;
    let prompt = if record.attempt > 0 && !list.retry_prompt.is_empty() {
        format!("{} {}", list.retry_prompt, question)
    } else {
        question.clone()
    };
    let request = CaptionRequest {
        system_prompt: list.system_prompt.clone(),
        prompt,
        media: load_media(record, options.frames_per_item)?,
    };
    let caption = client.caption(&request)?;
    if caption.trim().is_empty() {
        return Err(ClientError::EmptyCaption.into());
    }
    let mut out = record.clone();
    out.question = question;
    out.caption = caption;
    out.status = RecordStatus::Captioned;
    out.updated_at = options.clock.now();
    Ok(out)
}

/// Applies a finished annotation to the store. The record keeps its current
/// attempt count.
fn commit(store: &mut ManifestStore, done: ManifestRecord, clock: Clock) -> Result<bool> {
    let Some(i) = store.position(&done.id) else { return Ok(false) };
    if !matches!(store.records()[i].status, RecordStatus::Pending | RecordStatus::Regenerating) {
        return Ok(false);
    }
    store.transition(i, RecordStatus::Captioned)?;
    let r = store.record_mut(i);
    r.question = done.question;
    r.caption = done.caption;
    r.updated_at = clock.now();
    store.save()?;
    Ok(true)
}

/// Annotation pass over a store shared with other readers and writers.
/// Requests run on up to `max_in_flight` worker threads; results are written
/// back one at a time by the calling thread, which persists the store after
/// each one.
pub fn run_annotation_shared(
    store: &Mutex<ManifestStore>,
    client: &dyn CaptionClient,
    lists: &ProblemLists,
    options: &AnnotateOptions,
) -> Result<AnnotationSummary> {
    if options.max_in_flight == 0 {
        return Err(Error::Config("max_in_flight must be at least 1".into()));
    }
    let work: Vec<ManifestRecord> = {
        let s = store.lock().expect("store lock");
        s.records().iter().filter(|r| options.scope.includes(r.status)).cloned().collect()
    };
    let mut summary = AnnotationSummary::default();
    if work.is_empty() {
        return Ok(summary);
    }
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(String, Result<ManifestRecord>)>();
    let mut fatal = None;
    std::thread::scope(|scope| {
        for _ in 0..options.max_in_flight.min(work.len()) {
            let tx = tx.clone();
            let (work, next, stop) = (&work, &next, &stop);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(record) = work.get(k) else { break };
                let result = annotate_item(record, client, lists.get(record.domain), options);
                if tx.send((record.id.clone(), result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (id, result) in rx {
            match result {
                Ok(done) if fatal.is_none() => {
                    let mut s = store.lock().expect("store lock");
                    match commit(&mut s, done, options.clock) {
                        Ok(true) => summary.succeeded += 1,
                        Ok(false) => {
                            summary.failed += 1;
                            summary.errors.push((id, "record changed during annotation".into()));
                        }
                        Err(e) => {
                            stop.store(true, Ordering::SeqCst);
                            fatal = Some(e);
                        }
                    }
                }
                Ok(_) => {}
                Err(e) => {
                    summary.failed += 1;
                    summary.errors.push((id, e.to_string()));
                }
            }
        }
    });
    match fatal {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

pub fn run_annotation(
    store: &mut ManifestStore,
    client: &dyn CaptionClient,
    lists: &ProblemLists,
    options: &AnnotateOptions,
) -> Result<AnnotationSummary> {
    let shared = Mutex::new(std::mem::take(store));
    let out = run_annotation_shared(&shared, client, lists, options);
    *store = shared.into_inner().expect("store lock");
    out
}

/// Draws up to `per_class` captioned records from every class without
/// replacement and marks them sampled. Classes are visited in sorted order.
pub fn qa_sample(store: &mut ManifestStore, per_class: usize, seed: u64, clock: Clock) -> Result<Vec<ManifestRecord>> {
    if per_class == 0 {
        return Err(Error::Config("per_class must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::new();
    for members in store.classes().into_values() {
        let candidates: Vec<usize> = members
            .into_iter()
            .filter(|&i| store.records()[i].status == RecordStatus::Captioned)
            .collect();
        let amount = per_class.min(candidates.len());
        let mut chosen: Vec<usize> = sample_indices(&mut rng, candidates.len(), amount)
            .into_iter()
            .map(|k| candidates[k])
            .collect();
        chosen.sort_unstable();
        picked.extend(chosen);
    }
    let now = clock.now();
    for &i in &picked {
        store.transition(i, RecordStatus::QaSampled)?;
        store.record_mut(i).updated_at = now;
    }
    store.save()?;
    Ok(picked.into_iter().map(|i| store.records()[i].clone()).collect())
}

/// Good: the class's sampled records are accepted. Bad: every record of the
/// class is sent back for regeneration with `attempt + 1`, keeping its old
/// caption. Records that were never captioned stay pending but still count
/// the attempt. Returns the number of records changed.
pub fn apply_verdict(store: &mut ManifestStore, class_id: &str, verdict: Verdict, clock: Clock) -> Result<usize> {
    let members = store
        .classes()
        .remove(class_id)
        .ok_or_else(|| Error::UnknownClass(class_id.to_string()))?;
    let now = clock.now();
    let mut affected = 0;
    for i in members {
        let status = store.records()[i].status;
        match verdict {
            Verdict::Good if status == RecordStatus::QaSampled => {
                store.transition(i, RecordStatus::Accepted)?;
            }
            Verdict::Good => continue,
            Verdict::Bad => {
                if status != RecordStatus::Pending {
                    store.transition(i, RecordStatus::Regenerating)?;
                }
                store.record_mut(i).attempt += 1;
            }
        }
        store.record_mut(i).updated_at = now;
        affected += 1;
    }
    store.save()?;
    Ok(affected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::{DomainKind, ScriptedClient, ScriptedReply};

    fn fixed() -> Clock {
        Clock::Fixed(Utc.with_ymd_and_hms(2024, 1, 2, 3, 4, 5).unwrap())
    }

    fn opts() -> AnnotateOptions {
        AnnotateOptions {
            clock: fixed(),
            ..AnnotateOptions::default()
        }
    }

    fn image_dir() -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.ppm");
        RgbFrame::filled(4, 3, [10, 20, 30]).write_ppm(&p).unwrap();
        (dir, p)
    }

    fn store_with(n: usize, classes: usize, media: &Path) -> ManifestStore {
        let records = (0..n)
            .map(|i| {
                ManifestRecord::pending(
                    format!("r{i:03}"),
                    DomainKind::StaticImages,
                    format!("class{}", i % classes),
                    MediaKind::Image,
                    vec![media.to_path_buf()],
                    fixed().now(),
                )
            })
            .collect();
        ManifestStore::new(records).unwrap()
    }

    #[test]
    fn frame_sampling() {
        assert_eq!(uniform_frame_sample(10, 14), (0..10).collect::<Vec<_>>());
        assert_eq!(uniform_frame_sample(27, 14), (0..14).map(|k| 2 * k).collect::<Vec<_>>());
        assert_eq!(uniform_frame_sample(14, 14), (0..14).collect::<Vec<_>>());
        let s = uniform_frame_sample(100, 14);
        assert_eq!((s[0], s[13], s.len()), (0, 99, 14));
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn question_sampling() {
        let mut list = ProblemLists::default().get(DomainKind::HumanMotions).clone();
        assert_eq!(sample_question(&list, 3).unwrap(), sample_question(&list, 3).unwrap());
        list.questions.truncate(1);
        assert_eq!(sample_question(&list, 99).unwrap(), list.questions[0]);
        list.questions.clear();
        assert!(sample_question(&list, 0).is_err());
    }

    #[test]
    fn annotate_single_item() {
        let (_d, img) = image_dir();
        let store = store_with(1, 1, &img);
        let lists = ProblemLists::default();
        let list = lists.get(DomainKind::StaticImages);
        let client = ScriptedClient::always("a red car");
        let out = annotate_item(&store.records()[0], &client, list, &opts()).unwrap();
        assert_eq!(out.caption, "a red car");
        assert_eq!(out.status, RecordStatus::Captioned);
        assert!(list.questions.contains(&out.question));
        let req = &client.requests()[0];
        assert_eq!(req.media.len(), 1);
        assert_eq!(req.media[0].mime, "image/png");
        assert!(!req.prompt.starts_with(&list.retry_prompt));

        let mut regen = out.clone();
        regen.status = RecordStatus::Regenerating;
        regen.attempt = 1;
        annotate_item(&regen, &client, list, &opts()).unwrap();
        assert!(client.requests()[1].prompt.starts_with(&list.retry_prompt));

        let timeout = ScriptedClient::new(vec![ScriptedReply::Timeout]);
        let r = annotate_item(&store.records()[0], &timeout, list, &opts());
        assert!(matches!(r, Err(Error::Client(ClientError::Timeout))));
        let empty = ScriptedClient::new(vec![ScriptedReply::Empty]);
        let r = annotate_item(&store.records()[0], &empty, list, &opts());
        assert!(matches!(r, Err(Error::Client(ClientError::EmptyCaption))));
    }

    #[test]
    fn annotation_pass_counts() {
        let (_d, img) = image_dir();
        let lists = ProblemLists::default();
        let mut store = store_with(10, 2, &img);
        let s = run_annotation(&mut store, &ScriptedClient::always("x"), &lists, &opts()).unwrap();
        assert_eq!((s.succeeded, s.failed), (10, 0));
        assert!(store.records().iter().all(|r| r.status == RecordStatus::Captioned));

        let mut store = store_with(10, 2, &img);
        let o = AnnotateOptions { max_in_flight: 1, ..opts() };
        let s = run_annotation(&mut store, &ScriptedClient::fail_every(3, "x"), &lists, &o).unwrap();
        assert_eq!((s.succeeded, s.failed), (6, 4));
        let pending: Vec<&str> = store
            .records()
            .iter()
            .filter(|r| r.status == RecordStatus::Pending)
            .map(|r| r.id.as_str())
            .collect();
        assert_eq!(pending, ["r000", "r003", "r006", "r009"]);

        let mut empty = ManifestStore::default();
        let s = run_annotation(&mut empty, &ScriptedClient::always("x"), &lists, &opts()).unwrap();
        assert_eq!((s.succeeded, s.failed), (0, 0));
        assert!(run_annotation(&mut store, &ScriptedClient::always("x"), &lists, &AnnotateOptions { max_in_flight: 0, ..opts() }).is_err());
    }

    #[test]
    fn in_flight_is_bounded() {
        let (_d, img) = image_dir();
        let mut store = store_with(12, 3, &img);
        let client = ScriptedClient::always("x").with_delay(std::time::Duration::from_millis(20));
        let o = AnnotateOptions { max_in_flight: 3, ..opts() };
        run_annotation(&mut store, &client, &ProblemLists::default(), &o).unwrap();
        assert!(client.peak_in_flight() <= 3);
        assert!(client.peak_in_flight() >= 2);
    }

    #[test]
    fn qa_and_verdicts() {
        let (_d, img) = image_dir();
        let lists = ProblemLists::default();
        let mut store = store_with(12, 2, &img);
        run_annotation(&mut store, &ScriptedClient::always("x"), &lists, &opts()).unwrap();
        let a = qa_sample(&mut store.clone(), 5, 7, fixed()).unwrap();
        let b = qa_sample(&mut store, 5, 7, fixed()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);

        assert_eq!(apply_verdict(&mut store, "class0", Verdict::Good, fixed()).unwrap(), 5);
        assert_eq!(apply_verdict(&mut store, "class1", Verdict::Bad, fixed()).unwrap(), 6);
        assert_eq!(apply_verdict(&mut store, "class1", Verdict::Bad, fixed()).unwrap(), 6);
        for r in store.records() {
            if r.class_id == "class1" {
                assert_eq!((r.status, r.attempt), (RecordStatus::Regenerating, 2));
                assert_eq!(r.caption, "x");
            }
        }
        assert!(matches!(
            apply_verdict(&mut store, "nope", Verdict::Bad, fixed()),
            Err(Error::UnknownClass(_))
        ));

        let o = AnnotateOptions { scope: AnnotateScope::RegeneratingOnly, ..opts() };
        let s = run_annotation(&mut store, &ScriptedClient::always("y"), &lists, &o).unwrap();
        assert_eq!(s.succeeded, 6);
    }

    #[test]
    fn undersized_class() {
        let (_d, img) = image_dir();
        let mut store = store_with(3, 1, &img);
        run_annotation(&mut store, &ScriptedClient::always("x"), &ProblemLists::default(), &opts()).unwrap();
        assert_eq!(qa_sample(&mut store, 5, 0, fixed()).unwrap().len(), 3);
        assert!(qa_sample(&mut store, 0, 0, fixed()).is_err());
    }

    #[test]
    fn media_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let frames = dir.path().join("frames");
        std::fs::create_dir(&frames).unwrap();
        for i in 0..20 {
            RgbFrame::filled(2, 2, [i, 0, 0]).write_ppm(&frames.join(format!("{i:03}.ppm"))).unwrap();
        }
        let mut r = ManifestRecord::pending("v", DomainKind::HumanMotions, "wave", MediaKind::FrameSequence, vec![frames], fixed().now());
        assert_eq!(load_media(&r, 14).unwrap().len(), 14);
        assert_eq!(load_media(&r, 30).unwrap().len(), 20);

        let ev = dir.path().join("s.csv");
        std::fs::write(&ev, "0,0,0,1\n5,1,1,-1\n").unwrap();
        r.media_kind = MediaKind::EventStream;
        r.media_paths = vec![ev];
        let parts = load_media(&r, 14).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(&parts[0].bytes[1..4], b"PNG");
        assert!(preview_png(&r, 1).is_err());

        r.media_kind = MediaKind::Image;
        r.media_paths = vec![dir.path().join("a.gif")];
        assert!(load_media(&r, 14).is_err());
    }
}

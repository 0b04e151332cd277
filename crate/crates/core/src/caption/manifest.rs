use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{DomainKind, ManifestRecord, RecordStatus};
use crate::error::{Error, Result};

/// Status changes the engine may perform.
pub fn is_legal_transition(from: RecordStatus, to: RecordStatus) -> bool {
    use RecordStatus::*;
    matches!(
        (from, to),
        (Pending, Captioned)
            | (Regenerating, Captioned)
            | (Captioned, QaSampled)
            | (QaSampled, Accepted)
            | (QaSampled, Regenerating)
            | (Captioned, Regenerating)
            | (Accepted, Regenerating)
            | (Regenerating, Regenerating)
    )
}

/// In-memory manifest, optionally backed by a JSONL file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ManifestStore {
    path: Option<PathBuf>,
    records: Vec<ManifestRecord>,
    index: HashMap<String, usize>,
}

fn check_record(r: &ManifestRecord) -> std::result::Result<(), String> {
    if r.id.is_empty() {
        return Err("empty id".into());
    }
    if r.caption.is_empty() != (r.status == RecordStatus::Pending) {
        return Err(format!(
            "record {:?}: caption must be empty exactly when status is pending (status {})",
            r.id, r.status
        ));
    }
    Ok(())
}

impl ManifestStore {
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self> {
        let mut store = Self::default();
        for r in records {
            store.insert(r)?;
        }
        Ok(store)
    }

    /// Empty store that will be written to `path` on [`ManifestStore::save`].
    pub fn create(path: impl Into<PathBuf>) -> Self {
        Self {
            path: Some(path.into()),
            ..Self::default()
        }
    }

    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut store = Self::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: n + 1, message };
            let record: ManifestRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            check_record(&record).map_err(err)?;
            if store.index.contains_key(&record.id) {
                return Err(err(format!("duplicate id {:?}", record.id)));
            }
            store.index.insert(record.id.clone(), store.records.len());
            store.records.push(record);
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut store = Self::parse_jsonl(&text)?;
        store.path = Some(path.to_path_buf());
        Ok(store)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes the manifest through a temporary file and a rename so readers
    /// never see a partial file. A store without a path is not persisted.
    pub fn save(&self) -> Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = path.clone().into_os_string();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let write = || -> std::io::Result<()> {
            std::fs::create_dir_all(dir)?;
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(self.to_jsonl().as_bytes())?;
            f.sync_all()?;
            std::fs::rename(&tmp, path)
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn set_path(&mut self, path: impl Into<PathBuf>) {
        self.path = Some(path.into());
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub(crate) fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub(crate) fn record_mut(&mut self, i: usize) -> &mut ManifestRecord {
        &mut self.records[i]
    }

    pub fn insert(&mut self, record: ManifestRecord) -> Result<()> {
        check_record(&record).map_err(Error::Config)?;
        if self.index.contains_key(&record.id) {
            return Err(Error::Config(format!("duplicate id {:?}", record.id)));
        }
        self.index.insert(record.id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    /// Changes the status of record `i`, refusing illegal transitions.
    pub(crate) fn transition(&mut self, i: usize, to: RecordStatus) -> Result<()> {
        let r = &mut self.records[i];
        if !is_legal_transition(r.status, to) {
            return Err(Error::Transition {
                id: r.id.clone(),
                from: r.status.to_string(),
                to: to.to_string(),
            });
        }
        r.status = to;
        Ok(())
    }

    /// Record indices grouped by class, classes in sorted order.
    pub fn classes(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            out.entry(r.class_id.as_str()).or_default().push(i);
        }
        out
    }

    pub fn status_counts(&self) -> BTreeMap<RecordStatus, usize> {
        let mut out: BTreeMap<RecordStatus, usize> = RecordStatus::ALL.iter().map(|s| (*s, 0)).collect();
        for r in &self.records {
            *out.entry(r.status).or_default() += 1;
        }
        out
    }

    pub fn domain_counts(&self) -> BTreeMap<DomainKind, usize> {
        let mut out: BTreeMap<DomainKind, usize> = DomainKind::ALL.iter().map(|d| (*d, 0)).collect();
        for r in &self.records {
            *out.entry(r.domain).or_default() += 1;
        }
        out
    }
}

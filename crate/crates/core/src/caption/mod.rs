//! Caption annotation engine.
//!
//! Records live in a newline-delimited JSON manifest. An annotation pass
//! sends each pending item's media and a sampled question to a caption
//! model; reviewers then inspect a few captions per class and either accept
//! the class or send all of its records back for regeneration with a
//! modified prompt.

mod client;
mod engine;
mod manifest;
mod mix;
mod problems;
mod service;

pub use client::{
    CaptionClient, CaptionRequest, ClientError, HttpCaptionClient, HttpClientConfig, MediaPart, ScriptedClient,
    ScriptedReply,
};
pub use engine::{
    annotate_item, apply_verdict, load_media, preview_png, qa_sample, run_annotation, run_annotation_shared,
    sample_question, uniform_frame_sample, AnnotateOptions, AnnotateScope, AnnotationSummary, Clock,
    DEFAULT_FRAMES_PER_ITEM, DEFAULT_QA_PER_CLASS,
};
pub use manifest::{is_legal_transition, ManifestStore};
pub use mix::{build_training_mix, MixDraw, MixWeights};
pub use problems::{ProblemList, ProblemLists, DEFAULT_PROBLEM_LISTS};
pub use service::{serve_review_api, ReviewContext, ReviewHandle, StatsReport};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    StaticImages,
    HumanMotions,
    DriveScenes,
}

impl DomainKind {
    pub const ALL: [DomainKind; 3] = [DomainKind::StaticImages, DomainKind::HumanMotions, DomainKind::DriveScenes];

    pub fn as_str(&self) -> &'static str {
        match self {
            DomainKind::StaticImages => "static_images",
            DomainKind::HumanMotions => "human_motions",
            DomainKind::DriveScenes => "drive_scenes",
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DomainKind::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown domain {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Image,
    FrameSequence,
    EventStream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Pending,
    Captioned,
    QaSampled,
    Accepted,
    Rejected,
    Regenerating,
}

impl RecordStatus {
    pub const ALL: [RecordStatus; 6] = [
        RecordStatus::Pending,
        RecordStatus::Captioned,
        RecordStatus::QaSampled,
        RecordStatus::Accepted,
        RecordStatus::Rejected,
        RecordStatus::Regenerating,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RecordStatus::Pending => "pending",
            RecordStatus::Captioned => "captioned",
            RecordStatus::QaSampled => "qa_sampled",
            RecordStatus::Accepted => "accepted",
            RecordStatus::Rejected => "rejected",
            RecordStatus::Regenerating => "regenerating",
        }
    }
}

impl fmt::Display for RecordStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One line of the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub domain: DomainKind,
    pub class_id: String,
    pub media_paths: Vec<PathBuf>,
    pub media_kind: MediaKind,
    pub question: String,
    pub caption: String,
    pub status: RecordStatus,
    pub attempt: u32,
    pub updated_at: DateTime<Utc>,
}

impl ManifestRecord {
    /// A fresh pending record with no question or caption yet.
    pub fn pending(
        id: impl Into<String>,
        domain: DomainKind,
        class_id: impl Into<String>,
        media_kind: MediaKind,
        media_paths: Vec<PathBuf>,
        now: DateTime<Utc>,
    ) -> Self {
        Self {
            id: id.into(),
            domain,
            class_id: class_id.into(),
            media_paths,
            media_kind,
            question: String::new(),
            caption: String::new(),
            status: RecordStatus::Pending,
            attempt: 0,
            updated_at: now,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Good,
    Bad,
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "good" => Ok(Verdict::Good),
            "bad" => Ok(Verdict::Bad),
            _ => Err(format!("verdict must be good or bad, got {s:?}")),
        }
    }
}

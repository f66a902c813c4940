//! Persistent data model: clip records, manifests and distribution reports.

mod manifest;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use manifest::{
    read_manifest, read_manifest_file, sort_records, write_manifest, write_stage_manifest,
    ManifestFile, MANIFEST_STAGES, SCHEMA_VERSION,
};
pub use report::{
    distribution_report, DimensionHistogram, HistogramEdges, ManifestSummary, ReportBins,
    ReportDocument, REPORT_DIMENSIONS,
};

/// The fixed category tags, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CategoryLabel {
    People,
    Animal,
    Plants,
    Architecture,
    Food,
    Vehicles,
    #[serde(rename = "Natural Scenery")]
    NaturalScenery,
    #[serde(rename = "Urban landscape")]
    UrbanLandscape,
    Ocean,
    #[serde(rename = "Outer space")]
    OuterSpace,
    #[serde(rename = "Video game")]
    VideoGame,
    #[serde(rename = "2D cartoon")]
    Cartoon2d,
    #[serde(rename = "3D cartoon")]
    Cartoon3d,
    Technology,
}

impl CategoryLabel {
    pub const COUNT: usize = 14;

    pub const ALL: [CategoryLabel; Self::COUNT] = [
        CategoryLabel::People,
        CategoryLabel::Animal,
        CategoryLabel::Plants,
        CategoryLabel::Architecture,
        CategoryLabel::Food,
        CategoryLabel::Vehicles,
        CategoryLabel::NaturalScenery,
        CategoryLabel::UrbanLandscape,
        CategoryLabel::Ocean,
        CategoryLabel::OuterSpace,
        CategoryLabel::VideoGame,
        CategoryLabel::Cartoon2d,
        CategoryLabel::Cartoon3d,
        CategoryLabel::Technology,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CategoryLabel::People => "People",
            CategoryLabel::Animal => "Animal",
            CategoryLabel::Plants => "Plants",
            CategoryLabel::Architecture => "Architecture",
            CategoryLabel::Food => "Food",
            CategoryLabel::Vehicles => "Vehicles",
            CategoryLabel::NaturalScenery => "Natural Scenery",
            CategoryLabel::UrbanLandscape => "Urban landscape",
            CategoryLabel::Ocean => "Ocean",
            CategoryLabel::OuterSpace => "Outer space",
            CategoryLabel::VideoGame => "Video game",
            CategoryLabel::Cartoon2d => "2D cartoon",
            CategoryLabel::Cartoon3d => "3D cartoon",
            CategoryLabel::Technology => "Technology",
        }
    }

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

impl fmt::Display for CategoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CategoryLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown category `{s}`")))
    }
}

/// Three-valued answer of a triage question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ternary {
    Yes,
    No,
    Undetermined,
}

impl Ternary {
    pub fn from_bool(flag: bool) -> Self {
        if flag {
            Ternary::Yes
        } else {
            Ternary::No
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    Heuristic,
    Llm,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageResult {
    pub scene_transition: Ternary,
    pub frame_level: Ternary,
    pub reduplication: Ternary,
}

impl TriageResult {
    /// Accepted only when every flag is a definite `no`.
    pub fn is_clean(&self) -> bool {
        self.flags().iter().all(|f| *f == Ternary::No)
    }

    pub fn flags(&self) -> [Ternary; 3] {
        [self.scene_transition, self.frame_level, self.reduplication]
    }

    /// Comma-joined short codes of the flags answered `yes` ("st", "flg", "redup").
    pub fn rejection_reason(&self) -> Option<String> {
        let codes: Vec<&str> = ["st", "flg", "redup"]
            .into_iter()
            .zip(self.flags())
            .filter(|(_, f)| *f == Ternary::Yes)
            .map(|(c, _)| c)
            .collect();
        (!codes.is_empty()).then(|| codes.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub text: String,
    pub word_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triage: Option<TriageResult>,
    pub decision_source: DecisionSource,
}

impl CaptionRecord {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let word_count = crate::caption_curation::word_count(&text);
        CaptionRecord {
            text,
            word_count,
            triage: None,
            decision_source: DecisionSource::Heuristic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub s_quality: f64,
    pub s_ocr: f64,
    pub s_tc: f64,
    pub s_motion: f64,
    pub category_similarity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_align: Option<f64>,
}

impl ScoreSet {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let finite = [
            self.s_quality,
            self.s_ocr,
            self.s_tc,
            self.s_motion,
            self.category_similarity,
        ]
        .iter()
        .chain(self.s_align.iter())
        .all(|v| v.is_finite());
        if !finite {
            return Err("non-finite score".into());
        }
        let unit = |v: f64| (-1.0..=1.0).contains(&v);
        if !unit(self.s_tc) || !unit(self.category_similarity) || !self.s_align.is_none_or(unit) {
            return Err("similarity score outside [-1, 1]".into());
        }
        if self.s_ocr < 0.0 || self.s_motion < 0.0 {
            return Err("negative ocr or motion score".into());
        }
        Ok(())
    }
}

/// Lifecycle status of a clip. Declared in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipStatus {
    Split,
    Scored,
    ScoringFailed,
    FilteredOut,
    Sampled,
    CaptionRejected,
    Final,
    Approved,
    Rejected,
}

impl ClipStatus {
    fn rank(self) -> u8 {
        match self {
            ClipStatus::Split => 0,
            ClipStatus::Scored | ClipStatus::ScoringFailed => 1,
            ClipStatus::FilteredOut => 2,
            ClipStatus::Sampled => 3,
            ClipStatus::CaptionRejected => 4,
            ClipStatus::Final => 5,
            ClipStatus::Approved | ClipStatus::Rejected => 6,
        }
    }

    /// Statuses that carry a mandatory `reject_reason`.
    pub fn is_rejecting(self) -> bool {
        matches!(
            self,
            ClipStatus::ScoringFailed
                | ClipStatus::FilteredOut
                | ClipStatus::CaptionRejected
                | ClipStatus::Rejected
        )
    }

    /// Forward-only transitions; rejecting statuses are terminal.
    pub fn can_advance_to(self, next: ClipStatus) -> bool {
        !self.is_rejecting() && next.rank() > self.rank()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClipStatus::Split => "split",
            ClipStatus::Scored => "scored",
            ClipStatus::ScoringFailed => "scoring_failed",
            ClipStatus::FilteredOut => "filtered_out",
            ClipStatus::Sampled => "sampled",
            ClipStatus::CaptionRejected => "caption_rejected",
            ClipStatus::Final => "final",
            ClipStatus::Approved => "approved",
            ClipStatus::Rejected => "rejected",
        }
    }
}

impl fmt::Display for ClipStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One video clip, referenced by source id and frame span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub source_video_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<CategoryLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<CaptionRecord>,
    pub status: ClipStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reject_reason: Option<String>,
    /// Fields this version does not know about, kept verbatim.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// Lowercase hex of the first 128 bits of SHA-256 over the clip identity.
pub fn clip_id(source_video_id: &str, start_frame: u64, end_frame: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update((source_video_id.len() as u64).to_le_bytes());
    hasher.update(source_video_id.as_bytes());
    hasher.update(start_frame.to_le_bytes());
    hasher.update(end_frame.to_le_bytes());
    let digest = hasher.finalize();
    hex::encode(&digest[..16])
}

impl ClipRecord {
    /// A freshly split clip.
    pub fn new(
        source_video_id: impl Into<String>,
        start_frame: u64,
        end_frame: u64,
        fps: f64,
        width: u32,
        height: u32,
    ) -> Self {
        let source_video_id = source_video_id.into();
        ClipRecord {
            clip_id: clip_id(&source_video_id, start_frame, end_frame),
            source_video_id,
            start_frame,
            end_frame,
            fps,
            width,
            height,
            scores: None,
            category: None,
            caption: None,
            status: ClipStatus::Split,
            reject_reason: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn frame_count(&self) -> u64 {
        self.end_frame.saturating_sub(self.start_frame)
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frame_count() as f64 / self.fps
    }

    /// Moves the record forward to `next`, setting or clearing the reject reason.
    pub fn advance(&mut self, next: ClipStatus, reason: Option<String>) -> Result<()> {
        if !self.status.can_advance_to(next) {
            return Err(self.invalid(format!(
                "illegal status transition {} -> {}",
                self.status, next
            )));
        }
        if next.is_rejecting() != reason.is_some() {
            return Err(self.invalid(format!("status {next} and reject_reason disagree")));
        }
        self.status = next;
        self.reject_reason = reason;
        Ok(())
    }

    /// Returns a copy advanced to `next`.
    pub fn advanced(&self, next: ClipStatus, reason: Option<String>) -> Result<Self> {
        let mut r = self.clone();
        r.advance(next, reason)?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.end_frame <= self.start_frame {
            return Err(self.invalid("end_frame must exceed start_frame"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(self.invalid("fps must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(self.invalid("width and height must be positive"));
        }
        if self.status.is_rejecting() != self.reject_reason.is_some() {
            return Err(self.invalid("reject_reason present iff status is rejecting"));
        }
        if let Some(scores) = &self.scores {
            scores.validate().map_err(|m| self.invalid(m))?;
        }
        Ok(())
    }

    fn invalid(&self, message: impl Into<String>) -> Error {
        Error::InvalidRecord {
            clip_id: self.clip_id.clone(),
            message: message.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_strings_are_exact() {
        let names: Vec<&str> = CategoryLabel::ALL.iter().map(|c| c.as_str()).collect();
        assert_eq!(
            names,
            [
                "People",
                "Animal",
                "Plants",
                "Architecture",
                "Food",
                "Vehicles",
                "Natural Scenery",
                "Urban landscape",
                "Ocean",
                "Outer space",
                "Video game",
                "2D cartoon",
                "3D cartoon",
                "Technology"
            ]
        );
        for c in CategoryLabel::ALL {
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.as_str()));
            assert_eq!(c.as_str().parse::<CategoryLabel>().unwrap(), c);
            assert_eq!(CategoryLabel::from_index(c.index()), Some(c));
        }
    }

    #[test]
    fn clip_id_is_stable_and_span_sensitive() {
        let a = clip_id("vid", 0, 100);
        assert_eq!(a.len(), 32);
        assert!(a.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
        assert_eq!(a, clip_id("vid", 0, 100));
        assert_ne!(a, clip_id("vid", 0, 101));
        assert_ne!(a, clip_id("vid", 1, 100));
        assert_ne!(clip_id("ab", 0, 1), clip_id("a", 0, 1));
    }

    #[test]
    fn status_moves_forward_only() {
        let mut r = ClipRecord::new("v", 0, 30, 30.0, 64, 64);
        r.advance(ClipStatus::Scored, None).unwrap();
        assert!(r.advance(ClipStatus::Split, None).is_err());
        r.advance(ClipStatus::Sampled, None).unwrap();
        assert!(r.advance(ClipStatus::Final, Some("x".into())).is_err());
        r.advance(ClipStatus::CaptionRejected, Some("st".into())).unwrap();
        assert!(r.advance(ClipStatus::Final, None).is_err());
        assert!(!ClipStatus::FilteredOut.can_advance_to(ClipStatus::Sampled));
        assert!(ClipStatus::Final.can_advance_to(ClipStatus::Approved));
        assert!(!ClipStatus::Approved.can_advance_to(ClipStatus::Rejected));
    }

    #[test]
    fn validate_catches_bad_spans_and_reasons() {
        let mut r = ClipRecord::new("v", 10, 10, 30.0, 64, 64);
        assert!(r.validate().is_err());
        r.end_frame = 11;
        r.validate().unwrap();
        assert!((r.duration_seconds() - 1.0 / 30.0).abs() < 1e-15);
        r.status = ClipStatus::FilteredOut;
        assert!(r.validate().is_err());
        r.reject_reason = Some("too_short".into());
        r.validate().unwrap();
    }

    #[test]
    fn triage_reason_codes() {
        let t = TriageResult {
            scene_transition: Ternary::Yes,
            frame_level: Ternary::Yes,
            reduplication: Ternary::Yes,
        };
        assert_eq!(t.rejection_reason().as_deref(), Some("st,flg,redup"));
        let u = TriageResult {
            scene_transition: Ternary::Undetermined,
            frame_level: Ternary::No,
            reduplication: Ternary::No,
        };
        assert!(!u.is_clean());
        assert_eq!(u.rejection_reason(), None);
    }
}

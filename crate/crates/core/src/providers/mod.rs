//! Model backends behind one validated interface.
//!
//! [`ModelBackend`] is what a backend implements: batch calls returning raw
//! values. [`Providers`] wraps a backend and enforces the protocol (dimension,
//! finiteness, sign, batch sizes) so the rest of the engine only sees
//! well-formed values.

mod flow;
mod frames;
mod http;
mod reference;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{ClipRecord, Ternary};
use crate::error::{Error, Result};

pub use flow::{block_matching_flow, gray_grid, FLOW_BLOCK, FLOW_GRID, FLOW_RADIUS};
pub use frames::{FrameSource, InMemoryFrames, RgbFrame};
pub use http::{HttpBackend, HttpEndpoints, InFlightGauge};
pub use reference::{
    color_histogram_embedding, reference_aesthetic, trigram_embedding, OcrSidecar, OcrSpan,
    ReferenceBackend,
};

pub const DEFAULT_DIM: usize = 512;

/// Largest batch sent to a backend in one call.
pub const MAX_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    EmbedImage,
    EmbedText,
    Aesthetic,
    OcrCount,
    Flow,
    Chat,
}

impl ProviderKind {
    pub const ALL: [ProviderKind; 6] = [
        ProviderKind::EmbedImage,
        ProviderKind::EmbedText,
        ProviderKind::Aesthetic,
        ProviderKind::OcrCount,
        ProviderKind::Flow,
        ProviderKind::Chat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::EmbedImage => "embed_image",
            ProviderKind::EmbedText => "embed_text",
            ProviderKind::Aesthetic => "aesthetic",
            ProviderKind::OcrCount => "ocr_count",
            ProviderKind::Flow => "flow",
            ProviderKind::Chat => "chat",
        }
    }

    /// Environment variable that overrides this kind's base URL.
    pub fn env_var(self) -> String {
        format!("CFC_PROVIDER_URL_{}", self.as_str().to_ascii_uppercase())
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fixed-dimension real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl EmbeddingVector {
    pub fn raw(values: Vec<f64>) -> Self {
        EmbeddingVector {
            values,
            normalized: false,
        }
    }

    /// L2-normalizes `values`.
    pub fn normalize(values: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&values);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::DegenerateEmbedding);
        }
        Ok(EmbeddingVector {
            values: values.into_iter().map(|v| v / norm).collect(),
            normalized: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A frame of a clip, addressed by the clip's source video and an absolute index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub clip_id: String,
    pub source_video_id: String,
    pub frame_index: u64,
}

impl FrameRef {
    /// `index` must lie within `[start_frame, end_frame]`.
    pub fn for_clip(clip: &ClipRecord, index: u64) -> Result<Self> {
        if index < clip.start_frame || index > clip.end_frame {
            return Err(Error::InvalidInput(format!(
                "frame {index} outside clip {} [{}, {}]",
                clip.clip_id, clip.start_frame, clip.end_frame
            )));
        }
        Ok(FrameRef {
            clip_id: clip.clip_id.clone(),
            source_video_id: clip.source_video_id.clone(),
            frame_index: index,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderEndpoint {
    pub base_url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_max_in_flight() -> usize {
    8
}
fn default_retry_budget() -> u32 {
    2
}

impl ProviderEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        ProviderEndpoint {
            base_url: base_url.into(),
            timeout_ms: default_timeout_ms(),
            max_in_flight: default_max_in_flight(),
            retry_budget: default_retry_budget(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 || self.max_in_flight == 0 {
            return Err(Error::Config(format!(
                "endpoint {}: timeout_ms and max_in_flight must be positive",
                self.base_url
            )));
        }
        Ok(())
    }
}

/// A yes/no chat request: the context (caption) and the questions about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt: String,
    pub context: String,
    pub questions: Vec<String>,
}

/// Raw batch interface a model backend serves.
pub trait ModelBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn embed_images(&self, frames: &[FrameRef]) -> Result<Vec<Vec<f64>>>;
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
    fn aesthetic_scores(&self, frames: &[FrameRef]) -> Result<Vec<f64>>;
    fn ocr_counts(&self, frames: &[FrameRef]) -> Result<Vec<i64>>;
    fn flow_magnitudes(&self, pairs: &[(FrameRef, FrameRef)]) -> Result<Vec<f64>>;
    fn chat(&self, request: &ChatRequest) -> Result<String>;
}

fn violation(kind: ProviderKind, message: impl Into<String>) -> Error {
    Error::ProtocolViolation {
        kind,
        message: message.into(),
    }
}

/// Validated access to a [`ModelBackend`].
#[derive(Clone)]
pub struct Providers {
    backend: Arc<dyn ModelBackend>,
    dim: usize,
}

impl fmt::Debug for Providers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Providers")
            .field("model_id", &self.backend.model_id())
            .field("dim", &self.dim)
            .finish()
    }
}

impl Providers {
    pub fn new(backend: Arc<dyn ModelBackend>, dim: usize) -> Self {
        Providers { backend, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn backend(&self) -> &Arc<dyn ModelBackend> {
        &self.backend
    }

    fn check_len(kind: ProviderKind, got: usize, want: usize) -> Result<()> {
        if got != want {
            return Err(violation(
                kind,
                format!("expected {want} results, backend returned {got}"),
            ));
        }
        Ok(())
    }

    fn embeddings(&self, kind: ProviderKind, raw: Vec<Vec<f64>>) -> Result<Vec<EmbeddingVector>> {
        raw.into_iter()
            .map(|values| {
                if values.len() != self.dim {
                    return Err(violation(
                        kind,
                        format!("embedding has {} values, expected {}", values.len(), self.dim),
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(violation(kind, "non-finite embedding value"));
                }
                EmbeddingVector::normalize(values)
                    .map_err(|_| violation(kind, "zero-norm embedding"))
            })
            .collect()
    }

    pub fn embed_images(&self, frames: &[FrameRef]) -> Result<Vec<EmbeddingVector>> {
        let mut out = Vec::with_capacity(frames.len());
        for batch in frames.chunks(MAX_BATCH) {
            let raw = self.backend.embed_images(batch)?;
            Self::check_len(ProviderKind::EmbedImage, raw.len(), batch.len())?;
            out.extend(self.embeddings(ProviderKind::EmbedImage, raw)?);
        }
        Ok(out)
    }

    pub fn embed_image(&self, frame: &FrameRef) -> Result<EmbeddingVector> {
        Ok(self.embed_images(std::slice::from_ref(frame))?.remove(0))
    }

    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(Error::EmptyInput);
        }
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(MAX_BATCH) {
            let raw = self.backend.embed_texts(batch)?;
            Self::check_len(ProviderKind::EmbedText, raw.len(), batch.len())?;
            out.extend(self.embeddings(ProviderKind::EmbedText, raw)?);
        }
        Ok(out)
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(self.embed_texts(&[text.to_string()])?.remove(0))
    }

    pub fn aesthetic_scores(&self, frames: &[FrameRef]) -> Result<Vec<f64>> {
        let kind = ProviderKind::Aesthetic;
        let mut out = Vec::with_capacity(frames.len());
        for batch in frames.chunks(MAX_BATCH) {
            let raw = self.backend.aesthetic_scores(batch)?;
            Self::check_len(kind, raw.len(), batch.len())?;
            if raw.iter().any(|v| !v.is_finite()) {
                return Err(violation(kind, "non-finite aesthetic score"));
            }
            out.extend(raw);
        }
        Ok(out)
    }

    pub fn aesthetic_score(&self, frame: &FrameRef) -> Result<f64> {
        Ok(self.aesthetic_scores(std::slice::from_ref(frame))?[0])
    }

    pub fn ocr_region_counts(&self, frames: &[FrameRef]) -> Result<Vec<u64>> {
        let kind = ProviderKind::OcrCount;
        let mut out = Vec::with_capacity(frames.len());
        for batch in frames.chunks(MAX_BATCH) {
            let raw = self.backend.ocr_counts(batch)?;
            Self::check_len(kind, raw.len(), batch.len())?;
            for count in raw {
                let count = u64::try_from(count)
                    .map_err(|_| violation(kind, format!("negative region count {count}")))?;
                out.push(count);
            }
        }
        Ok(out)
    }

    pub fn ocr_region_count(&self, frame: &FrameRef) -> Result<u64> {
        Ok(self.ocr_region_counts(std::slice::from_ref(frame))?[0])
    }

    /// Each pair must come from one clip, first frame strictly earlier.
    pub fn flow_magnitudes(&self, pairs: &[(FrameRef, FrameRef)]) -> Result<Vec<f64>> {
        let kind = ProviderKind::Flow;
        for (a, b) in pairs {
            if a.clip_id != b.clip_id || a.source_video_id != b.source_video_id {
                return Err(Error::InvalidInput(format!(
                    "flow pair spans clips {} and {}",
                    a.clip_id, b.clip_id
                )));
            }
            if a.frame_index > b.frame_index {
                return Err(Error::InvalidInput(format!(
                    "flow pair out of order: {} after {}",
                    a.frame_index, b.frame_index
                )));
            }
        }
        let mut out = Vec::with_capacity(pairs.len());
        for batch in pairs.chunks(MAX_BATCH) {
            let raw = self.backend.flow_magnitudes(batch)?;
            Self::check_len(kind, raw.len(), batch.len())?;
            if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(violation(kind, "flow magnitude must be finite and non-negative"));
            }
            out.extend(raw);
        }
        Ok(out)
    }

    pub fn flow_magnitude(&self, a: &FrameRef, b: &FrameRef) -> Result<f64> {
        Ok(self.flow_magnitudes(&[(a.clone(), b.clone())])?[0])
    }

    /// Asks 1 to 8 yes/no questions about `context`. Unparsable answers
    /// come back as [`Ternary::Undetermined`].
    pub fn llm_yes_no(&self, questions: &[String], context: &str) -> Result<Vec<Ternary>> {
        if questions.is_empty() || questions.len() > 8 {
            return Err(Error::InvalidInput(format!(
                "llm_yes_no takes 1 to 8 questions, got {}",
                questions.len()
            )));
        }
        let request = ChatRequest {
            prompt: yes_no_prompt(context, questions),
            context: context.to_string(),
            questions: questions.to_vec(),
        };
        let answer = self.backend.chat(&request)?;
        Ok(parse_yes_no(&answer, questions.len()))
    }
}

pub const YES_NO_INSTRUCTION: &str =
    "Please respond with 'Yes' or 'No' to the following questions:";

/// The context, a blank line, the instruction and the numbered questions.
pub fn yes_no_prompt(context: &str, questions: &[String]) -> String {
    let mut prompt = format!("{}\n\n{YES_NO_INSTRUCTION}\n", context.trim_end());
    for (i, q) in questions.iter().enumerate() {
        prompt.push_str(&format!("{}. {q}\n", i + 1));
    }
    prompt
}

/// One answer per line (or comma-separated on a single line). Enumerators
/// such as `1.` or `-` are ignored; only the first word of each answer
/// counts. A count mismatch makes every answer undetermined.
pub fn parse_yes_no(answer: &str, expected: usize) -> Vec<Ternary> {
    let lines: Vec<&str> = answer
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    let pieces: Vec<&str> = if lines.len() == 1 && expected > 1 {
        lines[0].split([',', ';']).map(str::trim).filter(|p| !p.is_empty()).collect()
    } else {
        lines
    };
    if pieces.len() != expected {
        return vec![Ternary::Undetermined; expected];
    }
    pieces.into_iter().map(parse_one).collect()
}

fn parse_one(piece: &str) -> Ternary {
    let stripped = piece.trim_start_matches(|c: char| {
        c.is_ascii_digit() || c.is_whitespace() || matches!(c, '.' | ')' | '-' | '*' | ':')
    });
    let word: String = stripped
        .chars()
        .take_while(|c| c.is_alphabetic())
        .collect::<String>()
        .to_lowercase();
    match word.as_str() {
        "yes" => Ternary::Yes,
        "no" => Ternary::No,
        _ => Ternary::Undetermined,
    }
}

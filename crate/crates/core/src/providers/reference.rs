//! Deterministic offline backend.
//!
//! * image embedding: 8x8x8 joint RGB histogram, resized to the configured
//!   dimension and L2-normalized
//! * text embedding: character-trigram FNV-1a hash histogram, L2-normalized
//! * aesthetic: a fixed blend of saturation, contrast and exposure, 0..=10
//! * OCR: region counts read from a sidecar annotation file (absent = 0)
//! * flow: [`block_matching_flow`](super::block_matching_flow)
//! * chat: answers the triage questions with the caption heuristics

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::flow::block_matching_flow;
use super::{ChatRequest, FrameRef, FrameSource, ModelBackend, ProviderKind, RgbFrame};
use crate::caption_curation::reference_chat_answer;
use crate::error::{Error, Result};

pub const REFERENCE_MODEL_ID: &str = "cfc-reference-v1";

/// Per-video text-region annotations; spans are `[start_frame, end_frame)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OcrSidecar {
    pub videos: BTreeMap<String, Vec<OcrSpan>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrSpan {
    pub start_frame: u64,
    pub end_frame: u64,
    pub count: i64,
}

impl OcrSidecar {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("ocr sidecar {}: {e}", path.display())))
    }

    pub fn count(&self, source_video_id: &str, frame_index: u64) -> i64 {
        self.videos
            .get(source_video_id)
            .and_then(|spans| {
                spans
                    .iter()
                    .find(|s| (s.start_frame..s.end_frame).contains(&frame_index))
            })
            .map_or(0, |s| s.count)
    }
}

pub struct ReferenceBackend {
    frames: Arc<dyn FrameSource>,
    ocr: OcrSidecar,
    dim: usize,
}

impl ReferenceBackend {
    pub fn new(frames: Arc<dyn FrameSource>, ocr: OcrSidecar, dim: usize) -> Self {
        ReferenceBackend { frames, ocr, dim }
    }

    fn load(&self, kind: ProviderKind, frame: &FrameRef) -> Result<RgbFrame> {
        self.frames
            .frame(&frame.source_video_id, frame.frame_index)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "{kind}: frame {} of {} is not decodable",
                    frame.frame_index, frame.source_video_id
                ))
            })
    }
}

impl ModelBackend for ReferenceBackend {
    fn model_id(&self) -> &str {
        REFERENCE_MODEL_ID
    }

    fn embed_images(&self, frames: &[FrameRef]) -> Result<Vec<Vec<f64>>> {
        frames
            .iter()
            .map(|f| {
                let frame = self.load(ProviderKind::EmbedImage, f)?;
                color_histogram_embedding(&frame, self.dim)
            })
            .collect()
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        texts.iter().map(|t| trigram_embedding(t, self.dim)).collect()
    }

    fn aesthetic_scores(&self, frames: &[FrameRef]) -> Result<Vec<f64>> {
        frames
            .iter()
            .map(|f| Ok(reference_aesthetic(&self.load(ProviderKind::Aesthetic, f)?)))
            .collect()
    }

    fn ocr_counts(&self, frames: &[FrameRef]) -> Result<Vec<i64>> {
        Ok(frames
            .iter()
            .map(|f| self.ocr.count(&f.source_video_id, f.frame_index))
            .collect())
    }

    fn flow_magnitudes(&self, pairs: &[(FrameRef, FrameRef)]) -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|(a, b)| {
                let fa = self.load(ProviderKind::Flow, a)?;
                let fb = self.load(ProviderKind::Flow, b)?;
                block_matching_flow(&fa, &fb).ok_or_else(|| {
                    Error::InvalidInput("flow frames differ in size".to_string())
                })
            })
            .collect()
    }

    fn chat(&self, request: &ChatRequest) -> Result<String> {
        Ok(reference_chat_answer(&request.context, &request.questions))
    }
}

/// Joint RGB histogram with 8 levels per channel (bin = r/32*64 + g/32*8 + b/32),
/// zero-padded or truncated to `dim`, then L2-normalized.
pub fn color_histogram_embedding(frame: &RgbFrame, dim: usize) -> Result<Vec<f64>> {
    let mut hist = vec![0.0f64; 512];
    for [r, g, b] in frame.pixels() {
        let bin = (r as usize >> 5) * 64 + (g as usize >> 5) * 8 + (b as usize >> 5);
        hist[bin] += 1.0;
    }
    hist.resize(dim, 0.0);
    normalize(hist)
}

/// Trigram histogram over the lowercased text padded with one space each side.
pub fn trigram_embedding(text: &str, dim: usize) -> Result<Vec<f64>> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(Error::EmptyInput);
    }
    let chars: Vec<char> = std::iter::once(' ')
        .chain(trimmed.to_lowercase().chars())
        .chain(std::iter::once(' '))
        .collect();
    let mut hist = vec![0.0f64; dim];
    let mut buf = [0u8; 12];
    for w in chars.windows(3) {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for c in w {
            for byte in c.encode_utf8(&mut buf).bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        hist[(h % dim as u64) as usize] += 1.0;
    }
    normalize(hist)
}

fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// `10 * (0.4 * mean saturation + 0.4 * min(luma std / 128, 1) + 0.2 * exposure)`
/// where exposure is `1 - |mean luma - 128| / 128`.
pub fn reference_aesthetic(frame: &RgbFrame) -> f64 {
    let (mut sat, mut luma, mut luma2, mut n) = (0.0, 0.0, 0.0, 0.0);
    for [r, g, b] in frame.pixels() {
        let max = r.max(g).max(b) as f64;
        let min = r.min(g).min(b) as f64;
        if max > 0.0 {
            sat += (max - min) / max;
        }
        let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
        luma += y;
        luma2 += y * y;
        n += 1.0;
    }
    if n == 0.0 {
        return 0.0;
    }
    let mean = luma / n;
    let std = (luma2 / n - mean * mean).max(0.0).sqrt();
    let contrast = (std / 128.0).min(1.0);
    let exposure = (1.0 - (mean - 128.0).abs() / 128.0).clamp(0.0, 1.0);
    (10.0 * (0.4 * sat / n + 0.4 * contrast + 0.2 * exposure)).clamp(0.0, 10.0)
}

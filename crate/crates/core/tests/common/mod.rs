#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use cfc_core::pipeline::CurationConfig;
use cfc_core::providers::{ChatRequest, FrameRef, ModelBackend, ProviderKind};
use cfc_core::synthetic::SyntheticCorpus;
use cfc_core::{Error, Executor, Result};

pub const CORPUS_SEED: u64 = 7;

/// Writes the synthetic corpus into a fresh directory.
pub fn write_corpus() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let corpus = SyntheticCorpus::generate(CORPUS_SEED);
    let config = corpus.write_to(dir.path(), &Executor::default()).unwrap();
    (dir, config)
}

/// The corpus config with its manifests redirected to `work`.
pub fn config_in(config_path: &Path, work: &Path) -> CurationConfig {
    let mut c = CurationConfig::load(config_path).unwrap();
    c.paths.work_dir = work.to_path_buf();
    c.paths.report_dir = None;
    c
}

/// Every file under `dir`, keyed by relative path.
pub fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Passes calls through until `budget` calls of `kind` have been made, then
/// reports the provider as unavailable.
pub struct FailAfter {
    pub inner: Arc<dyn ModelBackend>,
    pub kind: ProviderKind,
    pub budget: usize,
    pub calls: AtomicUsize,
}

impl FailAfter {
    pub fn new(inner: Arc<dyn ModelBackend>, kind: ProviderKind, budget: usize) -> Self {
        FailAfter {
            inner,
            kind,
            budget,
            calls: AtomicUsize::new(0),
        }
    }

    fn gate(&self, kind: ProviderKind) -> Result<()> {
        if kind == self.kind && self.calls.fetch_add(1, Ordering::SeqCst) >= self.budget {
            return Err(Error::ProviderUnavailable {
                kind,
                message: "simulated outage".into(),
            });
        }
        Ok(())
    }
}

impl ModelBackend for FailAfter {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
    fn embed_images(&self, frames: &[FrameRef]) -> Result<Vec<Vec<f64>>> {
        self.gate(ProviderKind::EmbedImage)?;
        self.inner.embed_images(frames)
    }
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        self.gate(ProviderKind::EmbedText)?;
        self.inner.embed_texts(texts)
    }
    fn aesthetic_scores(&self, frames: &[FrameRef]) -> Result<Vec<f64>> {
        self.gate(ProviderKind::Aesthetic)?;
        self.inner.aesthetic_scores(frames)
    }
    fn ocr_counts(&self, frames: &[FrameRef]) -> Result<Vec<i64>> {
        self.gate(ProviderKind::OcrCount)?;
        self.inner.ocr_counts(frames)
    }
    fn flow_magnitudes(&self, pairs: &[(FrameRef, FrameRef)]) -> Result<Vec<f64>> {
        self.gate(ProviderKind::Flow)?;
        self.inner.flow_magnitudes(pairs)
    }
    fn chat(&self, request: &ChatRequest) -> Result<String> {
        self.gate(ProviderKind::Chat)?;
        self.inner.chat(request)
    }
}

//! Coarse-to-fine curation of video clip datasets: scene splitting, quality
//! scoring, threshold filtering, category-balanced sampling, caption triage
//! and finetune selection, driven by resumable JSONL stage manifests.

pub mod caption_curation;
pub mod catalog;
pub mod error;
pub mod exec;
pub mod filter_sample;
pub mod pipeline;
pub mod providers;
pub mod scene_split;
pub mod scoring;
pub mod synthetic;

pub use error::{Error, Result};
pub use exec::Executor;

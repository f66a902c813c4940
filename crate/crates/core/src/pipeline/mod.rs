//! Stage orchestration over JSONL manifests.
//!
//! Stages run in a fixed order, each reading only its predecessor's manifest
//! and writing its own with a terminator line. A stage whose manifest already
//! has a valid terminator is skipped, so an interrupted run resumes at the
//! first incomplete stage.

mod config;
mod review;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use config::{
    parse_ppm, BackendKind, CurationConfig, FramesConfig, PathsConfig, PpmFrames, ProvidersConfig,
    ReferenceConfig, ReviewConfig,
};
pub use review::{
    load_decisions, review_router, serve_review, serve_review_on, DecisionEntry, DecisionLog, QueueItem,
    ReviewState, ReviewStats,
};

use crate::caption_curation::{alignment_score, llm_triage, tokenize, vocab_stats, LexiconTagger, VocabStats};
use crate::catalog::{
    distribution_report, read_manifest_file, sort_records, write_manifest, write_stage_manifest, CaptionRecord,
    ClipRecord, ClipStatus, ReportDocument,
};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::filter_sample::{apply_thresholds, balanced_sample, finetune_select};
use crate::providers::Providers;
use crate::scene_split::{split_videos, VideoMetrics};
use crate::scoring::{mean_video_embedding, sample_triplet, score_clips, CategoryModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Split,
    Score,
    Filter,
    Sample,
    CaptionFilter,
    Finalize,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Split,
        Stage::Score,
        Stage::Filter,
        Stage::Sample,
        Stage::CaptionFilter,
        Stage::Finalize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Split => "split",
            Stage::Score => "score",
            Stage::Filter => "filter",
            Stage::Sample => "sample",
            Stage::CaptionFilter => "caption-filter",
            Stage::Finalize => "finalize",
        }
    }

    /// Stage name written in the output manifest header.
    pub fn manifest_name(self) -> &'static str {
        match self {
            Stage::Split => "split",
            Stage::Score => "scored",
            Stage::Filter => "filtered",
            Stage::Sample => "sampled",
            Stage::CaptionFilter => "captioned",
            Stage::Finalize => "final",
        }
    }

    pub fn predecessor(self) -> Option<Stage> {
        let i = Stage::ALL.iter().position(|s| *s == self)?;
        i.checked_sub(1).map(|j| Stage::ALL[j])
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Parses a comma-separated stage list.
pub fn parse_stages(list: &str) -> Result<Vec<Stage>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Stage::from_str)
        .collect()
}

/// The requested stages in pipeline order; they must form one unbroken run.
pub fn plan_stages(requested: Option<&[Stage]>) -> Result<Vec<Stage>> {
    let Some(requested) = requested else {
        return Ok(Stage::ALL.to_vec());
    };
    let mut stages = requested.to_vec();
    stages.sort();
    stages.dedup();
    if stages.is_empty() {
        return Err(Error::Config("no stages requested".into()));
    }
    if stages.windows(2).any(|w| w[1].predecessor() != Some(w[0])) {
        let names: Vec<_> = stages.iter().map(|s| s.as_str()).collect();
        return Err(Error::Config(format!(
            "stages must be contiguous in pipeline order, got {}",
            names.join(",")
        )));
    }
    Ok(stages)
}

/// Completion state of one stage's output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageState {
    pub stage_name: String,
    pub input_manifest: Option<PathBuf>,
    pub output_manifest: PathBuf,
    pub completed: bool,
    /// Records per status, and per reject reason for rejecting statuses.
    pub record_counts: BTreeMap<String, u64>,
}

fn count_records(records: &[ClipRecord]) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for r in records {
        let key = match &r.reject_reason {
            Some(reason) => format!("{}:{reason}", r.status),
            None => r.status.to_string(),
        };
        *counts.entry(key).or_default() += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageRun {
    pub stage: Stage,
    pub skipped: bool,
    pub record_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub stages: Vec<StageRun>,
    /// Set when the run included finalize.
    pub final_manifest: Option<PathBuf>,
    pub finetune_manifest: Option<PathBuf>,
    pub report_files: Vec<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct CaptionLine {
    clip_id: String,
    text: String,
}

/// Reads the `{clip_id, text}` caption sidecar.
pub fn load_captions(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: CaptionLine = serde_json::from_str(line).map_err(|e| Error::MalformedManifest {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.insert(c.clip_id.clone(), c.text).is_some() {
            return Err(Error::InvalidInput(format!("duplicate caption for clip {}", c.clip_id)));
        }
    }
    Ok(out)
}

pub struct Pipeline {
    config: CurationConfig,
    providers: Providers,
    exec: Executor,
}

impl Pipeline {
    /// Builds providers and the worker pool from the config.
    pub fn new(config: CurationConfig) -> Result<Self> {
        config.validate()?;
        let providers = config.providers()?;
        let exec = config.executor();
        Ok(Pipeline {
            config,
            providers,
            exec,
        })
    }

    pub fn with_providers(config: CurationConfig, providers: Providers, exec: Executor) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline {
            config,
            providers,
            exec,
        })
    }

    pub fn config(&self) -> &CurationConfig {
        &self.config
    }

    pub fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.config
            .paths
            .work_dir
            .join(format!("{}.jsonl", stage.manifest_name()))
    }

    pub fn finetune_path(&self) -> PathBuf {
        self.config.paths.work_dir.join("finetune.jsonl")
    }

    pub fn stage_state(&self, stage: Stage) -> StageState {
        let output = self.manifest_path(stage);
        let (completed, record_counts) = match read_manifest_file(&output) {
            Ok(m) if m.is_complete() && m.stage == stage.manifest_name() => (true, count_records(&m.records)),
            _ => (false, BTreeMap::new()),
        };
        StageState {
            stage_name: stage.as_str().to_string(),
            input_manifest: stage.predecessor().map(|p| self.manifest_path(p)),
            output_manifest: output,
            completed,
            record_counts,
        }
    }

    /// Records of a completed stage's manifest.
    fn completed_input(&self, stage: Stage) -> Result<Vec<ClipRecord>> {
        let path = self.manifest_path(stage);
        let missing = || Error::MissingInput(stage.manifest_name().to_string());
        if !path.exists() {
            return Err(missing());
        }
        let m = read_manifest_file(&path)?;
        if !m.is_complete() || m.stage != stage.manifest_name() {
            return Err(missing());
        }
        Ok(m.records)
    }

    /// Runs the requested stages (all by default), skipping completed ones.
    /// When finalize is included, the finetune manifest and the distribution
    /// report are regenerated as well.
    pub fn run(&self, stages: Option<&[Stage]>) -> Result<RunSummary> {
        let plan = plan_stages(stages)?;
        let work = &self.config.paths.work_dir;
        std::fs::create_dir_all(work).map_err(|e| Error::io(work, e))?;
        let mut summary = RunSummary {
            stages: Vec::new(),
            final_manifest: None,
            finetune_manifest: None,
            report_files: Vec::new(),
        };
        for stage in plan.iter().copied() {
            summary.stages.push(self.run_stage(stage)?);
        }
        if plan.contains(&Stage::Finalize) {
            summary.final_manifest = Some(self.manifest_path(Stage::Finalize));
            summary.finetune_manifest = Some(self.write_finetune()?);
            summary.report_files = self.write_report()?.1;
        }
        Ok(summary)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageRun> {
        let state = self.stage_state(stage);
        if state.completed {
            tracing::info!(stage = %stage, "already complete, skipping");
            return Ok(StageRun {
                stage,
                skipped: true,
                record_counts: state.record_counts,
            });
        }
        let input = match stage.predecessor() {
            Some(p) => self.completed_input(p)?,
            None => Vec::new(),
        };
        let started = std::time::Instant::now();
        let mut records = match stage {
            Stage::Split => self.split()?,
            Stage::Score => self.score(&input)?,
            Stage::Filter => self.filter(&input)?,
            Stage::Sample => self.sample(&input)?,
            Stage::CaptionFilter => self.caption_filter(&input)?,
            Stage::Finalize => input
                .into_iter()
                .filter(|r| r.status == ClipStatus::Final)
                .collect(),
        };
        sort_records(&mut records);
        write_stage_manifest(&self.manifest_path(stage), stage.manifest_name(), &records)?;
        let record_counts = count_records(&records);
        tracing::info!(
            stage = %stage,
            records = records.len(),
            elapsed_ms = started.elapsed().as_millis() as u64,
            counts = ?record_counts,
            "stage complete"
        );
        Ok(StageRun {
            stage,
            skipped: false,
            record_counts,
        })
    }

    fn split(&self) -> Result<Vec<ClipRecord>> {
        let paths = &self.config.paths;
        let videos = VideoMetrics::load_dir(&paths.input_dir, paths.video_defaults())?;
        Ok(split_videos(&videos, &self.config.split, &self.exec))
    }

    fn score(&self, input: &[ClipRecord]) -> Result<Vec<ClipRecord>> {
        let pending: Vec<ClipRecord> = input
            .iter()
            .filter(|r| r.status == ClipStatus::Split)
            .cloned()
            .collect();
        let model = CategoryModel::build(&self.providers)?;
        let outcomes = score_clips(&pending, &self.providers, &model, &self.exec);
        let mut out = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            if let Some(e) = o.error {
                if e.is_provider_outage() {
                    return Err(e);
                }
                tracing::warn!(clip_id = %o.record.clip_id, error = %e, "scoring failed");
            }
            out.push(o.record);
        }
        Ok(out)
    }

    fn filter(&self, input: &[ClipRecord]) -> Result<Vec<ClipRecord>> {
        let scored: Vec<ClipRecord> = input
            .iter()
            .filter(|r| r.status == ClipStatus::Scored)
            .cloned()
            .collect();
        let outcome = apply_thresholds(&scored, &self.config.thresholds)?;
        let mut out = outcome.kept;
        out.extend(outcome.rejected);
        Ok(out)
    }

    fn sample(&self, input: &[ClipRecord]) -> Result<Vec<ClipRecord>> {
        let kept: Vec<ClipRecord> = input
            .iter()
            .filter(|r| r.status == ClipStatus::Scored)
            .cloned()
            .collect();
        balanced_sample(&kept, &self.config.sample)
    }

    fn caption_filter(&self, input: &[ClipRecord]) -> Result<Vec<ClipRecord>> {
        let captions = load_captions(&self.config.paths.captions)?;
        let sampled: Vec<&ClipRecord> = input.iter().filter(|r| r.status == ClipStatus::Sampled).collect();
        let results = self
            .exec
            .map(&sampled, |r| self.caption_one(r, captions.get(&r.clip_id).map(String::as_str)));
        results.into_iter().collect()
    }

    fn caption_one(&self, record: &ClipRecord, text: Option<&str>) -> Result<ClipRecord> {
        let mut r = record.clone();
        let Some(text) = text.filter(|t| !t.trim().is_empty()) else {
            r.advance(ClipStatus::CaptionRejected, Some("missing_caption".into()))?;
            return Ok(r);
        };
        let triplet = sample_triplet(&r)?;
        let frames: Vec<_> = triplet.frames().into_iter().cloned().collect();
        let e = self.providers.embed_images(&frames)?;
        let video = mean_video_embedding([&e[0], &e[1], &e[2]])?;
        let caption_vec = self.providers.embed_text(text)?;
        let align = alignment_score(&caption_vec, &video)?;

        let llm = self.config.llm_triage.then_some(&self.providers);
        let triage = llm_triage(text, llm)?;
        let mut caption = CaptionRecord::new(text);
        caption.triage = Some(triage.result);
        caption.decision_source = triage.decision_source();
        r.caption = Some(caption);
        if let Some(s) = r.scores.as_mut() {
            s.s_align = Some(align);
        }

        let mut reasons = Vec::new();
        if align < self.config.thresholds.align_min {
            reasons.push("low_alignment".to_string());
        }
        reasons.extend(triage.result.rejection_reason());
        if reasons.is_empty() {
            r.advance(ClipStatus::Final, None)?;
        } else {
            r.advance(ClipStatus::CaptionRejected, Some(reasons.join(",")))?;
        }
        Ok(r)
    }

    /// Writes `finetune.jsonl` from the final manifest and the decision log.
    pub fn write_finetune(&self) -> Result<PathBuf> {
        let records = self.completed_input(Stage::Finalize)?;
        let review = self.config.review.enabled;
        let decisions = if review {
            load_decisions(&self.config.decision_log_path())?
        } else {
            BTreeMap::new()
        };
        let mut selected = finetune_select(&records, &self.config.thresholds, &decisions, review);
        if review {
            for r in &mut selected {
                r.advance(ClipStatus::Approved, None)?;
            }
        }
        write_manifest(&self.finetune_path(), "finetune", &selected)
    }

    /// Distribution report of the scored manifest against the final one.
    pub fn write_report(&self) -> Result<(ReportDocument, Vec<PathBuf>)> {
        let scored = self.manifest_path(Stage::Score);
        let final_path = self.manifest_path(Stage::Finalize);
        for (stage, path) in [(Stage::Score, &scored), (Stage::Finalize, &final_path)] {
            if !path.exists() {
                return Err(Error::MissingInput(stage.manifest_name().to_string()));
            }
        }
        let doc = distribution_report(&scored, &final_path, &self.config.report_bins)?;
        let files = doc.write(&self.config.paths.report_dir())?;
        Ok((doc, files))
    }

    /// Noun and verb statistics over the captions in the final manifest.
    pub fn vocab_report(&self) -> Result<VocabStats> {
        let records = self.completed_input(Stage::Finalize)?;
        let corpus: Vec<_> = records
            .iter()
            .filter_map(|r| r.caption.as_ref())
            .map(|c| tokenize(&c.text))
            .collect();
        let stats = vocab_stats(&corpus, &LexiconTagger::reference(), &self.exec);
        let dir = self.config.paths.report_dir();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("vocab.json");
        let bytes = serde_json::to_vec_pretty(&stats).expect("stats serialize");
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(stats)
    }
}

/// Builds a [`Pipeline`] from `config` and runs the requested stages.
pub fn run_pipeline(config: &CurationConfig, stages: Option<&[Stage]>) -> Result<RunSummary> {
    Pipeline::new(config.clone())?.run(stages)
}

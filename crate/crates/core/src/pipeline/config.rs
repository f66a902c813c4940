//! Run configuration. Every field has a default and unknown keys are
//! rejected; relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::caption_curation::CUE_LIST_VERSION;
use crate::catalog::ReportBins;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::filter_sample::{SamplePlan, Thresholds};
use crate::providers::{
    FrameSource, HttpBackend, HttpEndpoints, ModelBackend, OcrSidecar, Providers, ReferenceBackend, RgbFrame,
    DEFAULT_DIM,
};
use crate::scene_split::{SplitParams, VideoDefaults};
use crate::synthetic::{SyntheticCorpus, SyntheticFrames};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurationConfig {
    pub split: SplitParams,
    pub thresholds: Thresholds,
    pub sample: SamplePlan,
    pub providers: ProvidersConfig,
    pub cue_list_version: u32,
    /// Ask the chat provider the triage questions; heuristics fill any gaps.
    pub llm_triage: bool,
    /// Worker pool size; unset means available parallelism.
    pub workers: Option<usize>,
    pub paths: PathsConfig,
    pub review: ReviewConfig,
    pub report_bins: ReportBins,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            split: SplitParams::default(),
            thresholds: Thresholds::default(),
            sample: SamplePlan::default(),
            providers: ProvidersConfig::default(),
            cue_list_version: CUE_LIST_VERSION,
            llm_triage: true,
            workers: None,
            paths: PathsConfig::default(),
            review: ReviewConfig::default(),
            report_bins: ReportBins::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Reference,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProvidersConfig {
    pub backend: BackendKind,
    pub dim: usize,
    pub reference: ReferenceConfig,
    pub http: HttpEndpoints,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        ProvidersConfig {
            backend: BackendKind::Reference,
            dim: DEFAULT_DIM,
            reference: ReferenceConfig::default(),
            http: HttpEndpoints::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub frames: FramesConfig,
    /// Text-region annotations; without one every OCR count is zero.
    pub ocr_sidecar: Option<PathBuf>,
}

/// Where the reference backend gets decoded frames.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FramesConfig {
    /// No frames; every frame-based provider call fails.
    #[default]
    None,
    /// `<dir>/<source_video_id>/<frame_index>.ppm`, binary PPM.
    PpmDir(PathBuf),
    /// Frames rendered by the bundled synthetic corpus.
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Directory of per-video frame metric files.
    pub input_dir: PathBuf,
    /// JSONL sidecar of `{clip_id, text}` captions.
    pub captions: PathBuf,
    /// Stage manifests live here.
    pub work_dir: PathBuf,
    /// Defaults to `<work_dir>/report`.
    pub report_dir: Option<PathBuf>,
    /// Stream properties for metric files that do not carry them.
    pub default_fps: f64,
    pub default_width: u32,
    pub default_height: u32,
}

impl Default for PathsConfig {
    fn default() -> Self {
        let d = VideoDefaults::default();
        PathsConfig {
            input_dir: PathBuf::from("metrics"),
            captions: PathBuf::from("captions.jsonl"),
            work_dir: PathBuf::from("work"),
            report_dir: None,
            default_fps: d.fps,
            default_width: d.width,
            default_height: d.height,
        }
    }
}

impl PathsConfig {
    pub fn report_dir(&self) -> PathBuf {
        self.report_dir
            .clone()
            .unwrap_or_else(|| self.work_dir.join("report"))
    }

    pub fn video_defaults(&self) -> VideoDefaults {
        VideoDefaults {
            fps: self.default_fps,
            width: self.default_width,
            height: self.default_height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReviewConfig {
    /// When set, finetune selection also requires a reviewer's approval.
    pub enabled: bool,
    /// Defaults to `<work_dir>/decisions.jsonl`.
    pub decision_log: Option<PathBuf>,
    /// Built review UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Thumbnails served at `/thumbnails/<clip_id>.<ext>`.
    pub thumbnails_dir: Option<PathBuf>,
    pub thumbnail_ext: String,
    pub bind_address: String,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        ReviewConfig {
            enabled: false,
            decision_log: None,
            static_dir: None,
            thumbnails_dir: None,
            thumbnail_ext: "jpg".into(),
            bind_address: "127.0.0.1".into(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl CurationConfig {
    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut config: CurationConfig = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    /// Makes every relative path absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        resolve(base, &mut p.input_dir);
        resolve(base, &mut p.captions);
        resolve(base, &mut p.work_dir);
        if let Some(r) = p.report_dir.as_mut() {
            resolve(base, r);
        }
        let r = &mut self.review;
        for slot in [&mut r.decision_log, &mut r.static_dir, &mut r.thumbnails_dir] {
            if let Some(path) = slot.as_mut() {
                resolve(base, path);
            }
        }
        let reference = &mut self.providers.reference;
        if let Some(path) = reference.ocr_sidecar.as_mut() {
            resolve(base, path);
        }
        if let FramesConfig::PpmDir(dir) = &mut reference.frames {
            resolve(base, dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.thresholds.validate()?;
        self.sample.validate()?;
        self.report_bins.validate()?;
        if self.cue_list_version != CUE_LIST_VERSION {
            return Err(Error::Config(format!(
                "cue_list_version {} is not supported (this build has {CUE_LIST_VERSION})",
                self.cue_list_version
            )));
        }
        if self.providers.dim == 0 {
            return Err(Error::Config("providers.dim must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        let p = &self.paths;
        if !(p.default_fps.is_finite() && p.default_fps > 0.0) || p.default_width == 0 || p.default_height == 0 {
            return Err(Error::Config("default stream properties must be positive".into()));
        }
        if self.providers.backend == BackendKind::Http {
            self.providers.http.validate()?;
        }
        Ok(())
    }

    pub fn decision_log_path(&self) -> PathBuf {
        self.review
            .decision_log
            .clone()
            .unwrap_or_else(|| self.paths.work_dir.join("decisions.jsonl"))
    }

    pub fn executor(&self) -> Executor {
        Executor::parallel(self.workers)
    }

    /// Instantiates the configured model backend.
    pub fn providers(&self) -> Result<Providers> {
        let dim = self.providers.dim;
        let backend: Arc<dyn ModelBackend> = match self.providers.backend {
            BackendKind::Reference => {
                let r = &self.providers.reference;
                let frames: Arc<dyn FrameSource> = match &r.frames {
                    FramesConfig::None => Arc::new(NoFrames),
                    FramesConfig::PpmDir(dir) => Arc::new(PpmFrames { dir: dir.clone() }),
                    FramesConfig::Synthetic { seed } => {
                        Arc::new(SyntheticFrames(Arc::new(SyntheticCorpus::generate(*seed))))
                    }
                };
                let ocr = match &r.ocr_sidecar {
                    Some(path) => OcrSidecar::load(path)?,
                    None => OcrSidecar::default(),
                };
                Arc::new(ReferenceBackend::new(frames, ocr, dim))
            }
            BackendKind::Http => Arc::new(HttpBackend::new(
                self.providers.http.clone().with_env_overrides(),
                dim,
            )?),
        };
        Ok(Providers::new(backend, dim))
    }
}

struct NoFrames;

impl FrameSource for NoFrames {
    fn frame(&self, _: &str, _: u64) -> Option<RgbFrame> {
        None
    }
}

/// Binary PPM (`P6`, maxval 255) frames on disk.
pub struct PpmFrames {
    pub dir: PathBuf,
}

impl FrameSource for PpmFrames {
    fn frame(&self, source_video_id: &str, frame_index: u64) -> Option<RgbFrame> {
        let path = self.dir.join(source_video_id).join(format!("{frame_index}.ppm"));
        let bytes = std::fs::read(path).ok()?;
        parse_ppm(&bytes)
    }
}

/// Parses a binary PPM with maxval 255.
pub fn parse_ppm(bytes: &[u8]) -> Option<RgbFrame> {
    let mut fields = Vec::with_capacity(4);
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).ok()?);
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return None;
    }
    let width: u32 = fields[1].parse().ok()?;
    let height: u32 = fields[2].parse().ok()?;
    let data = bytes.get(i + 1..)?;
    let n = width as usize * height as usize * 3;
    if width == 0 || height == 0 || data.len() < n {
        return None;
    }
    Some(RgbFrame::new(width, height, data[..n].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        CurationConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<CurationConfig>(r#"{"thresholds":{"aesthetic_minimum":3}}"#);
        assert!(err.is_err());
        let err = serde_json::from_str::<CurationConfig>(r#"{"colour":"blue"}"#);
        assert!(err.is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: CurationConfig = serde_json::from_str(r#"{"thresholds":{"aesthetic_min":3}}"#).unwrap();
        assert_eq!(c.thresholds.aesthetic_min, 3.0);
        assert_eq!(c.thresholds.finetune_video_aesthetic_min, 5.5);
        assert_eq!(c.split, SplitParams::default());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut c = CurationConfig::default();
        c.thresholds.motion_min = 20.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = CurationConfig::default();
        c.cue_list_version = 99;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = CurationConfig::default();
        c.split.threshold_fine = 50.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"paths":{"work_dir":"out"}}"#).unwrap();
        let c = CurationConfig::load(&path).unwrap();
        assert_eq!(c.paths.work_dir, dir.path().join("out"));
        assert_eq!(c.paths.report_dir(), dir.path().join("out/report"));
    }

    #[test]
    fn ppm_round_trip() {
        let mut bytes = b"P6\n# comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let f = parse_ppm(&bytes).unwrap();
        assert_eq!((f.width, f.height), (2, 1));
        assert_eq!(f.pixel(1, 0), [4, 5, 6]);
        assert!(parse_ppm(b"P3\n1 1\n255\n1 2 3").is_none());
    }
}

//! Deterministic synthetic corpus for offline end-to-end runs.
//!
//! Each video is a run of scenes. A scene is a blocky two-tone texture over a
//! dominant colour, scrolling horizontally with wrap-around so its mean HSV
//! stays constant. The dominant colour of a category sits in a histogram bin
//! that only that category's prompt hashes into under the reference text
//! embedding, so the reference classifier recovers the intended label.
//!
//! Per video: eight ordinary scenes, one long scene that the splitter chops
//! in two, and a seven-frame tail that is dropped as too short. Twenty videos
//! give 200 clips.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::catalog::{clip_id, CategoryLabel};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::providers::{trigram_embedding, FrameSource, OcrSidecar, OcrSpan, RgbFrame, DEFAULT_DIM};
use crate::scene_split::{content_delta, FrameMetric, SplitParams, VideoMetrics};
use crate::scoring::category_prompt;

pub const SYNTH_VIDEOS: usize = 20;
pub const SYNTH_FPS: f64 = 10.0;
pub const SYNTH_SIZE: u32 = 64;
/// Frames in the tail scene, below the default minimum scene length.
pub const SYNTH_TAIL_FRAMES: u64 = 7;
const ORDINARY_SCENES: usize = 8;
const CELL: u32 = 4;
const MIN_JOIN_DELTA: f64 = 40.0;

/// How a scene's pixels move and change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Static,
    Normal,
    Fast,
}

/// Caption flavour generated for a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionKind {
    Clean,
    SceneTransition,
    FrameLevel,
    Reduplication,
    Misaligned,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scene {
    pub start: u64,
    pub len: u64,
    pub category: CategoryLabel,
    pub main: [u8; 3],
    pub dark: [u8; 3],
    pub light: [u8; 3],
    /// Colour the dominant areas fade towards over the scene, if any.
    pub fade_to: Option<[u8; 3]>,
    pub motion: Motion,
    /// Scroll speed in pixels per frame.
    pub velocity: f64,
    pub texture_seed: u64,
    pub ocr_regions: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthVideo {
    pub source_video_id: String,
    pub scenes: Vec<Scene>,
}

impl SynthVideo {
    pub fn frame_count(&self) -> u64 {
        self.scenes.last().map_or(0, |s| s.start + s.len)
    }

    fn scene_at(&self, frame_index: u64) -> Option<&Scene> {
        self.scenes
            .iter()
            .find(|s| (s.start..s.start + s.len).contains(&frame_index))
    }
}

/// A clip the splitter is expected to produce, with its caption.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedClip {
    pub clip_id: String,
    pub source_video_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub category: CategoryLabel,
    pub caption_kind: CaptionKind,
    pub caption: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub seed: u64,
    pub videos: Vec<SynthVideo>,
    pub clips: Vec<ExpectedClip>,
}

fn bin_color(bin: usize) -> [u8; 3] {
    let c = |v: usize| (v as u8) * 32 + 16;
    [c(bin >> 6), c((bin >> 3) & 7), c(bin & 7)]
}

fn bin_of(rgb: [u8; 3]) -> usize {
    ((rgb[0] >> 5) as usize) * 64 + ((rgb[1] >> 5) as usize) * 8 + (rgb[2] >> 5) as usize
}

/// Histogram bins of each category prompt under the reference text embedding.
fn prompt_bins() -> Vec<Vec<f64>> {
    CategoryLabel::ALL
        .iter()
        .map(|l| trigram_embedding(&category_prompt(*l), DEFAULT_DIM).expect("prompt is non-empty"))
        .collect()
}

/// Palette derived from the prompt embeddings: for each category the bin
/// with the largest weight among its label's bins that no other prompt
/// touches, plus dark and light bins that no prompt touches at all.
#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    pub category_bins: [usize; CategoryLabel::COUNT],
    pub dark_bins: Vec<usize>,
    pub light_bins: Vec<usize>,
}

impl Palette {
    pub fn derive() -> Self {
        let bins = prompt_bins();
        let used = |b: usize| bins.iter().filter(|v| v[b] > 0.0).count();
        let mut category_bins = [0usize; CategoryLabel::COUNT];
        for (k, v) in bins.iter().enumerate() {
            // restricted to trigrams of the label itself, which captions repeat
            let label = CategoryLabel::ALL[k].as_str().to_lowercase();
            let own = trigram_embedding(&label, DEFAULT_DIM).expect("label is non-empty");
            let best = (0..DEFAULT_DIM)
                .filter(|&b| own[b] > 0.0 && v[b] > 0.0 && used(b) == 1)
                .max_by(|&a, &b| v[a].total_cmp(&v[b]).then(b.cmp(&a)))
                .expect("every prompt has a bin of its own");
            category_bins[k] = best;
        }
        let level = |b: usize| (b >> 6) + ((b >> 3) & 7) + (b & 7);
        let free: Vec<usize> = (0..DEFAULT_DIM).filter(|&b| used(b) == 0).collect();
        let dark_bins = free.iter().copied().filter(|&b| level(b) <= 2).collect();
        let light_bins = free.iter().copied().filter(|&b| level(b) >= 18).collect();
        Palette {
            category_bins,
            dark_bins,
            light_bins,
        }
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [a, b] {
        h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Renders frame `local` (frames since scene start) of a scene.
pub fn render_scene(scene: &Scene, local: u64) -> RgbFrame {
    let offset = (scene.velocity * local as f64).floor() as i64;
    let fade = match scene.fade_to {
        Some(_) => 0.9 * local as f64 / (scene.len.max(2) - 1) as f64,
        None => 0.0,
    };
    let cells = (SYNTH_SIZE / CELL) as i64;
    RgbFrame::from_fn(SYNTH_SIZE, SYNTH_SIZE, |x, y| {
        let sx = (x as i64 + offset).rem_euclid(SYNTH_SIZE as i64);
        let cx = (sx / CELL as i64).rem_euclid(cells) as u64;
        let cy = (y / CELL) as u64;
        let u = unit(mix(scene.texture_seed, cx, cy));
        if u < 0.2 {
            scene.dark
        } else if u < 0.4 {
            scene.light
        } else {
            match scene.fade_to {
                Some(to) if unit(mix(!scene.texture_seed, cx, cy)) < fade => to,
                _ => scene.main,
            }
        }
    })
}

const ADJECTIVES: [&str; 8] = [
    "bright", "calm", "vivid", "quiet", "warm", "soft", "clear", "steady",
];
const ACTIONS: [&str; 8] = [
    "moves slowly across the frame",
    "stays in the center of the view",
    "drifts gently to the left",
    "is framed against a plain background",
    "fills most of the picture",
    "appears with a smooth camera pan",
    "is lit by even daylight",
    "remains steady while the camera glides",
];

fn caption_for(kind: CaptionKind, label: CategoryLabel, rng: &mut ChaCha8Rng) -> Option<String> {
    let subject = label.as_str().to_lowercase();
    let adjective = ADJECTIVES[rng.random_range(0..ADJECTIVES.len())];
    let action = ACTIONS[rng.random_range(0..ACTIONS.len())];
    let base = format!("A {adjective} {subject} scene {action}.");
    Some(match kind {
        CaptionKind::Clean => format!("{base} The {subject} looks {adjective} throughout."),
        CaptionKind::SceneTransition => {
            format!("{base} Then the scene changes to a busy street at night.")
        }
        CaptionKind::FrameLevel => format!(
            "In the first frame a {subject} is visible. In the second frame the {subject} is closer."
        ),
        CaptionKind::Reduplication => {
            format!("{base} The {subject} is here. The {subject} is here.")
        }
        CaptionKind::Misaligned => "Rows of numbers pulse quietly.".to_string(),
        CaptionKind::Missing => return None,
    })
}

fn pick_caption_kind(rng: &mut ChaCha8Rng) -> CaptionKind {
    match rng.random_range(0..100) {
        0..5 => CaptionKind::SceneTransition,
        5..10 => CaptionKind::FrameLevel,
        10..15 => CaptionKind::Reduplication,
        15..20 => CaptionKind::Misaligned,
        20..22 => CaptionKind::Missing,
        _ => CaptionKind::Clean,
    }
}

fn scene_metric(scene: &Scene, local: u64) -> [f64; 3] {
    FrameMetric::from_rgb(0, &render_scene(scene, local)).hsv_mean
}

fn delta3(a: [f64; 3], b: [f64; 3]) -> f64 {
    content_delta(
        &FrameMetric {
            frame_index: 0,
            hsv_mean: a,
        },
        &FrameMetric {
            frame_index: 1,
            hsv_mean: b,
        },
    )
}

impl SyntheticCorpus {
    /// Builds the corpus for `seed`. Scene order within a video is chosen so
    /// every join exceeds the coarse threshold by a clear margin.
    pub fn generate(seed: u64) -> Self {
        let palette = Palette::derive();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut videos = Vec::with_capacity(SYNTH_VIDEOS);
        let mut clips = Vec::new();
        let max_frames = (SplitParams::default().max_clip_seconds * SYNTH_FPS) as u64;

        for v in 0..SYNTH_VIDEOS {
            let source_video_id = format!("synth_{v:03}");
            let mut scenes: Vec<Scene> = Vec::new();
            let mut cursor = 0u64;
            let mut next_category = rng.random_range(0..CategoryLabel::COUNT);
            for s in 0..ORDINARY_SCENES + 2 {
                let len = if s == ORDINARY_SCENES {
                    max_frames + rng.random_range(20..max_frames / 2)
                } else if s == ORDINARY_SCENES + 1 {
                    SYNTH_TAIL_FRAMES
                } else {
                    rng.random_range(40..=120)
                };
                let scene = loop {
                    let category = CategoryLabel::ALL[next_category % CategoryLabel::COUNT];
                    next_category += 1 + rng.random_range(0..3);
                    let candidate = Self::make_scene(&palette, category, cursor, len, &mut rng);
                    let fits = scenes.last().is_none_or(|prev| {
                        delta3(scene_metric(prev, prev.len - 1), scene_metric(&candidate, 0))
                            >= MIN_JOIN_DELTA
                    });
                    if fits {
                        break candidate;
                    }
                };
                cursor += len;
                scenes.push(scene);
            }

            for scene in &scenes {
                if scene.len < SplitParams::default().min_scene_frames {
                    continue;
                }
                let pieces = scene.len.div_ceil(max_frames);
                let (base, extra) = (scene.len / pieces, scene.len % pieces);
                let mut at = scene.start;
                for p in 0..pieces {
                    let n = base + u64::from(p < extra);
                    let kind = pick_caption_kind(&mut rng);
                    clips.push(ExpectedClip {
                        clip_id: clip_id(&source_video_id, at, at + n),
                        source_video_id: source_video_id.clone(),
                        start_frame: at,
                        end_frame: at + n,
                        category: scene.category,
                        caption_kind: kind,
                        caption: caption_for(kind, scene.category, &mut rng),
                    });
                    at += n;
                }
            }
            videos.push(SynthVideo {
                source_video_id,
                scenes,
            });
        }
        clips.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
        SyntheticCorpus { seed, videos, clips }
    }

    fn make_scene(palette: &Palette, category: CategoryLabel, start: u64, len: u64, rng: &mut ChaCha8Rng) -> Scene {
        let main = bin_color(palette.category_bins[category.index()]);
        let dark = bin_color(palette.dark_bins[rng.random_range(0..palette.dark_bins.len())]);
        let light = bin_color(palette.light_bins[rng.random_range(0..palette.light_bins.len())]);
        let motion = match rng.random_range(0..100) {
            0..12 => Motion::Static,
            12..20 => Motion::Fast,
            _ => Motion::Normal,
        };
        // displacement between sampled frames of roughly 2-6 px, or 8 px when fast
        let half = (len.min(200) / 2).max(1) as f64;
        let velocity = match motion {
            Motion::Static => 0.0,
            Motion::Normal => f64::from(rng.random_range(1..=3u8) * 2) / half,
            Motion::Fast => 8.0 / half,
        };
        let fade_to = rng.random_bool(0.1).then(|| {
            let free: Vec<usize> = palette
                .light_bins
                .iter()
                .copied()
                .filter(|&b| b != bin_of(light))
                .collect();
            bin_color(free[rng.random_range(0..free.len())])
        });
        let ocr_regions = if rng.random_bool(0.1) { 3 } else { 0 };
        Scene {
            start,
            len,
            category,
            main,
            dark,
            light,
            fade_to,
            motion,
            velocity,
            texture_seed: rng.random(),
            ocr_regions,
        }
    }

    pub fn video(&self, source_video_id: &str) -> Option<&SynthVideo> {
        self.videos
            .binary_search_by(|v| v.source_video_id.as_str().cmp(source_video_id))
            .ok()
            .map(|i| &self.videos[i])
    }

    pub fn frame(&self, source_video_id: &str, frame_index: u64) -> Option<RgbFrame> {
        let scene = self.video(source_video_id)?.scene_at(frame_index)?;
        Some(render_scene(scene, frame_index - scene.start))
    }

    pub fn metrics(&self, exec: &Executor) -> Vec<VideoMetrics> {
        exec.map(&self.videos, |v| {
            let frames = (0..v.frame_count())
                .map(|i| {
                    let scene = v.scene_at(i).expect("frame inside video");
                    FrameMetric::from_rgb(i, &render_scene(scene, i - scene.start))
                })
                .collect();
            VideoMetrics {
                source_video_id: v.source_video_id.clone(),
                fps: SYNTH_FPS,
                width: SYNTH_SIZE,
                height: SYNTH_SIZE,
                frames,
            }
        })
    }

    pub fn ocr_sidecar(&self) -> OcrSidecar {
        let mut videos = BTreeMap::new();
        for v in &self.videos {
            let spans: Vec<OcrSpan> = v
                .scenes
                .iter()
                .filter(|s| s.ocr_regions > 0)
                .map(|s| OcrSpan {
                    start_frame: s.start,
                    end_frame: s.start + s.len,
                    count: s.ocr_regions,
                })
                .collect();
            if !spans.is_empty() {
                videos.insert(v.source_video_id.clone(), spans);
            }
        }
        OcrSidecar { videos }
    }

    /// Writes `metrics/`, `captions.jsonl`, `ocr.json` and `config.json`
    /// under `dir`; returns the config path.
    pub fn write_to(&self, dir: &Path, exec: &Executor) -> Result<PathBuf> {
        let metrics_dir = dir.join("metrics");
        std::fs::create_dir_all(&metrics_dir).map_err(|e| Error::io(&metrics_dir, e))?;
        for m in self.metrics(exec) {
            m.save(&metrics_dir.join(format!("{}.json", m.source_video_id)))?;
        }

        let captions_path = dir.join("captions.jsonl");
        let mut captions = Vec::new();
        for c in &self.clips {
            if let Some(text) = &c.caption {
                let line = serde_json::json!({ "clip_id": c.clip_id, "text": text });
                writeln!(captions, "{line}").expect("write to vec");
            }
        }
        std::fs::write(&captions_path, captions).map_err(|e| Error::io(&captions_path, e))?;

        let ocr_path = dir.join("ocr.json");
        let ocr = serde_json::to_vec_pretty(&self.ocr_sidecar()).expect("sidecar serializes");
        std::fs::write(&ocr_path, ocr).map_err(|e| Error::io(&ocr_path, e))?;

        let config_path = dir.join("config.json");
        let config = serde_json::to_vec_pretty(&corpus_config_json(self.seed)).expect("config serializes");
        std::fs::write(&config_path, config).map_err(|e| Error::io(&config_path, e))?;
        Ok(config_path)
    }
}

/// Run configuration for a corpus written by [`SyntheticCorpus::write_to`].
/// The thresholds are scaled to what the reference backend can measure on
/// 64-pixel frames.
pub fn corpus_config_json(seed: u64) -> serde_json::Value {
    serde_json::json!({
        "thresholds": {
            "motion_max": 6.0,
            "align_min": 0.05
        },
        "sample": { "target_total": 100, "seed": seed },
        "providers": {
            "backend": "reference",
            "reference": {
                "frames": { "synthetic": { "seed": seed } },
                "ocr_sidecar": "ocr.json"
            }
        },
        "paths": {
            "input_dir": "metrics",
            "captions": "captions.jsonl",
            "work_dir": "work"
        }
    })
}

/// Frames rendered on demand from a corpus.
pub struct SyntheticFrames(pub Arc<SyntheticCorpus>);

impl FrameSource for SyntheticFrames {
    fn frame(&self, source_video_id: &str, frame_index: u64) -> Option<RgbFrame> {
        self.0.frame(source_video_id, frame_index)
    }
}

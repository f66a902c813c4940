//! Content-based shot boundary detection with a two-threshold cascade.
//!
//! Pass one cuts wherever the HSV-mean delta between consecutive frames
//! reaches `threshold_coarse`. Pass two rescans each resulting segment of at
//! least `2 * min_scene_frames` frames and adds cuts whose delta reaches
//! `threshold_fine`, provided the cut sits at least `min_scene_frames` from
//! both segment ends and its delta is the largest within
//! `min_scene_frames - 1` frames on either side (earliest wins ties). The
//! union is then thinned so no two cuts are closer than `min_scene_frames`,
//! keeping the earlier one.
//!
//! With these gates the boundary count never grows when either threshold
//! is raised.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{ClipRecord, ClipStatus};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::providers::RgbFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetric {
    pub frame_index: u64,
    /// Mean H, S, V over the frame, each scaled to `[0, 255]`.
    pub hsv_mean: [f64; 3],
}

impl FrameMetric {
    /// Mean HSV of an RGB frame; hue in degrees is rescaled by 255/360.
    pub fn from_rgb(frame_index: u64, frame: &RgbFrame) -> Self {
        let mut sum = [0.0f64; 3];
        let mut n = 0.0;
        for [r, g, b] in frame.pixels() {
            let [h, s, v] = rgb_to_hsv255(r, g, b);
            sum[0] += h;
            sum[1] += s;
            sum[2] += v;
            n += 1.0;
        }
        let n = if n == 0.0 { 1.0 } else { n };
        FrameMetric {
            frame_index,
            hsv_mean: [sum[0] / n, sum[1] / n, sum[2] / n],
        }
    }
}

fn rgb_to_hsv255(r: u8, g: u8, b: u8) -> [f64; 3] {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    [h / 360.0 * 255.0, s * 255.0, max * 255.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitParams {
    pub threshold_coarse: f64,
    pub threshold_fine: f64,
    pub min_scene_frames: u64,
    pub max_clip_seconds: f64,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            threshold_coarse: 35.0,
            threshold_fine: 27.0,
            min_scene_frames: 15,
            max_clip_seconds: 20.0,
        }
    }
}

impl SplitParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.threshold_coarse) || !positive(self.threshold_fine) {
            return Err(Error::Config("split thresholds must be positive".into()));
        }
        if self.threshold_fine > self.threshold_coarse {
            return Err(Error::Config("threshold_fine must not exceed threshold_coarse".into()));
        }
        if self.min_scene_frames == 0 {
            return Err(Error::Config("min_scene_frames must be at least 1".into()));
        }
        if !positive(self.max_clip_seconds) {
            return Err(Error::Config("max_clip_seconds must be positive".into()));
        }
        Ok(())
    }
}

/// Mean absolute difference of the three HSV components.
pub fn content_delta(a: &FrameMetric, b: &FrameMetric) -> f64 {
    a.hsv_mean
        .iter()
        .zip(&b.hsv_mean)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / 3.0
}

/// Sorted frame indices at which a new scene starts.
pub fn detect_boundaries(metrics: &[FrameMetric], params: &SplitParams) -> Vec<u64> {
    if metrics.len() < 2 {
        return Vec::new();
    }
    let m = params.min_scene_frames as usize;
    // deltas[i] is the change entering metrics[i]; deltas[0] is unused
    let mut deltas = vec![0.0; metrics.len()];
    for i in 1..metrics.len() {
        deltas[i] = content_delta(&metrics[i - 1], &metrics[i]);
    }

    let coarse: Vec<usize> = (1..metrics.len())
        .filter(|&i| deltas[i] >= params.threshold_coarse)
        .collect();

    let mut cuts = coarse.clone();
    let mut seg_start = 0usize;
    for seg_end in coarse.iter().copied().chain(std::iter::once(metrics.len())) {
        if seg_end - seg_start >= 2 * m {
            for i in seg_start + m..=seg_end - m {
                if i == 0 || deltas[i] < params.threshold_fine || deltas[i] >= params.threshold_coarse {
                    continue;
                }
                if is_local_peak(&deltas, i, m) {
                    cuts.push(i);
                }
            }
        }
        seg_start = seg_end;
    }
    cuts.sort_unstable();
    cuts.dedup();

    let mut kept: Vec<usize> = Vec::with_capacity(cuts.len());
    for c in cuts {
        if kept.last().is_none_or(|&last| c - last >= m) {
            kept.push(c);
        }
    }
    kept.into_iter().map(|i| metrics[i].frame_index).collect()
}

/// `deltas[i]` is the maximum over `(i - m, i + m)`, earlier index winning ties.
fn is_local_peak(deltas: &[f64], i: usize, m: usize) -> bool {
    let lo = (i + 1).saturating_sub(m).max(1);
    let hi = (i + m).min(deltas.len());
    (lo..hi).all(|j| {
        if j < i {
            deltas[j] < deltas[i]
        } else {
            deltas[j] <= deltas[i]
        }
    })
}

/// Source video description for splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoMetrics {
    pub source_video_id: String,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub frames: Vec<FrameMetric>,
}

/// Object form of a metrics file; a bare array of [`FrameMetric`] is also accepted.
#[derive(Debug, Deserialize, Serialize)]
struct MetricsFile {
    #[serde(default)]
    source_video_id: Option<String>,
    fps: f64,
    width: u32,
    height: u32,
    frames: Vec<FrameMetric>,
}

/// Defaults for metric files given as a bare array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VideoDefaults {
    pub fps: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for VideoDefaults {
    fn default() -> Self {
        VideoDefaults {
            fps: 30.0,
            width: 1280,
            height: 720,
        }
    }
}

impl VideoMetrics {
    pub fn load(path: &Path, defaults: VideoDefaults) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let bad = |e: serde_json::Error| Error::InvalidInput(format!("{}: {e}", path.display()));
        let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(bad)?;
        let metrics = if value.is_array() {
            VideoMetrics {
                source_video_id: stem,
                fps: defaults.fps,
                width: defaults.width,
                height: defaults.height,
                frames: serde_json::from_value(value).map_err(bad)?,
            }
        } else {
            let f: MetricsFile = serde_json::from_value(value).map_err(bad)?;
            VideoMetrics {
                source_video_id: f.source_video_id.unwrap_or(stem),
                fps: f.fps,
                width: f.width,
                height: f.height,
                frames: f.frames,
            }
        };
        metrics.validate()?;
        Ok(metrics)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = MetricsFile {
            source_video_id: Some(self.source_video_id.clone()),
            fps: self.fps,
            width: self.width,
            height: self.height,
            frames: self.frames.clone(),
        };
        let bytes = serde_json::to_vec(&file).expect("metrics serialize");
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Loads every `*.json` file in `dir`, ordered by source video id.
    pub fn load_dir(dir: &Path, defaults: VideoDefaults) -> Result<Vec<Self>> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().is_some_and(|x| x == "json") {
                paths.push(path);
            }
        }
        let mut videos = paths
            .iter()
            .map(|p| Self::load(p, defaults))
            .collect::<Result<Vec<_>>>()?;
        videos.sort_by(|a, b| a.source_video_id.cmp(&b.source_video_id));
        Ok(videos)
    }

    fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) || self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput(format!(
                "{}: fps, width and height must be positive",
                self.source_video_id
            )));
        }
        let contiguous = self
            .frames
            .windows(2)
            .all(|w| w[1].frame_index == w[0].frame_index + 1);
        let in_range = self
            .frames
            .iter()
            .flat_map(|f| f.hsv_mean)
            .all(|c| (0.0..=255.0).contains(&c));
        if !contiguous || !in_range {
            return Err(Error::InvalidInput(format!(
                "{}: frame metrics must be contiguous with components in [0, 255]",
                self.source_video_id
            )));
        }
        Ok(())
    }
}

/// Frame count of each piece when `len` frames are cut into equal pieces of
/// at most `max_frames`; earlier pieces take the remainder.
fn equal_pieces(len: u64, max_frames: u64) -> Vec<u64> {
    let max_frames = max_frames.max(1);
    let n = len.div_ceil(max_frames).max(1);
    let (base, extra) = (len / n, len % n);
    (0..n).map(|i| base + u64::from(i < extra)).collect()
}

/// Clips tiling the stream between boundaries. Segments shorter than
/// `min_scene_frames` come back as `filtered_out` with reason `too_short`.
pub fn split_to_clips(
    source_video_id: &str,
    metrics: &[FrameMetric],
    fps: f64,
    width: u32,
    height: u32,
    params: &SplitParams,
) -> Vec<ClipRecord> {
    let (Some(first), Some(last)) = (metrics.first(), metrics.last()) else {
        return Vec::new();
    };
    let end = last.frame_index + 1;
    let boundaries = detect_boundaries(metrics, params);
    let max_frames = (params.max_clip_seconds * fps).floor() as u64;

    let mut clips = Vec::new();
    let mut starts = vec![first.frame_index];
    starts.extend(boundaries);
    for (k, &seg_start) in starts.iter().enumerate() {
        let seg_end = starts.get(k + 1).copied().unwrap_or(end);
        let len = seg_end - seg_start;
        if len < params.min_scene_frames {
            let mut r = ClipRecord::new(source_video_id, seg_start, seg_end, fps, width, height);
            r.status = ClipStatus::FilteredOut;
            r.reject_reason = Some("too_short".into());
            clips.push(r);
            continue;
        }
        let mut at = seg_start;
        for piece in equal_pieces(len, max_frames) {
            let mut r = ClipRecord::new(source_video_id, at, at + piece, fps, width, height);
            if piece < params.min_scene_frames {
                r.status = ClipStatus::FilteredOut;
                r.reject_reason = Some("too_short".into());
            }
            clips.push(r);
            at += piece;
        }
    }
    clips
}

/// Splits every video; output ordered by `(source_video_id, start_frame)`.
pub fn split_videos(videos: &[VideoMetrics], params: &SplitParams, exec: &Executor) -> Vec<ClipRecord> {
    let mut clips: Vec<ClipRecord> = exec
        .map(videos, |v| split_to_clips(&v.source_video_id, &v.frames, v.fps, v.width, v.height, params))
        .into_iter()
        .flatten()
        .collect();
    clips.sort_by(|a, b| {
        (a.source_video_id.as_str(), a.start_frame).cmp(&(b.source_video_id.as_str(), b.start_frame))
    });
    clips
}

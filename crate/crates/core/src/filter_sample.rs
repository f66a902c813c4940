//! Threshold filtering, category-balanced sampling and finetune selection.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{CategoryLabel, ClipRecord, ClipStatus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub aesthetic_min: f64,
    pub ocr_max: f64,
    pub tc_min: f64,
    pub motion_min: f64,
    pub motion_max: f64,
    pub align_min: f64,
    pub finetune_video_aesthetic_min: f64,
    pub finetune_image_aesthetic_min: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            aesthetic_min: 4.0,
            ocr_max: 1.0,
            tc_min: 0.85,
            motion_min: 0.3,
            motion_max: 15.0,
            align_min: 0.2,
            finetune_video_aesthetic_min: 5.5,
            finetune_image_aesthetic_min: 7.0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.aesthetic_min,
            self.ocr_max,
            self.tc_min,
            self.motion_min,
            self.motion_max,
            self.align_min,
            self.finetune_video_aesthetic_min,
            self.finetune_image_aesthetic_min,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("thresholds must be finite".into()));
        }
        if self.motion_min >= self.motion_max {
            return Err(Error::Config("motion_min must be below motion_max".into()));
        }
        Ok(())
    }

    /// Violated rules in fixed order; empty when the scores pass.
    pub fn violations(&self, s: &crate::catalog::ScoreSet) -> Vec<&'static str> {
        let mut out = Vec::new();
        if s.s_quality < self.aesthetic_min {
            out.push("aesthetic_low");
        }
        if s.s_ocr > self.ocr_max {
            out.push("ocr_high");
        }
        if s.s_tc < self.tc_min {
            out.push("tc_low");
        }
        if s.s_motion < self.motion_min {
            out.push("motion_low");
        }
        if s.s_motion > self.motion_max {
            out.push("motion_high");
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<ClipRecord>,
    pub rejected: Vec<ClipRecord>,
}

/// Partitions scored records. Kept records are unchanged; rejected ones move
/// to `filtered_out` with the comma-joined violations as reason.
pub fn apply_thresholds(records: &[ClipRecord], t: &Thresholds) -> Result<FilterOutcome> {
    let mut out = FilterOutcome::default();
    for r in records {
        let scores = match (&r.scores, r.status) {
            (Some(s), ClipStatus::Scored) => s,
            _ => return Err(Error::Unscored(r.clip_id.clone())),
        };
        let violations = t.violations(scores);
        if violations.is_empty() {
            out.kept.push(r.clone());
        } else {
            out.rejected
                .push(r.advanced(ClipStatus::FilteredOut, Some(violations.join(",")))?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplePlan {
    pub target_total: u64,
    pub seed: u64,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan {
            target_total: 100,
            seed: 0,
        }
    }
}

impl SamplePlan {
    pub fn validate(&self) -> Result<()> {
        if self.target_total == 0 {
            return Err(Error::Config("target_total must be positive".into()));
        }
        Ok(())
    }
}

/// Per-category quotas by waterfilling over `available`, indexed like
/// [`CategoryLabel::ALL`].
///
/// Each round offers every unsaturated category an equal share of what is
/// left; categories holding less than that share give up all of their clips.
/// Once no category saturates, the share is split evenly and the indivisible
/// remainder goes one clip each in canonical label order.
pub fn waterfill_quotas(available: &[u64; CategoryLabel::COUNT], target_total: u64) -> [u64; CategoryLabel::COUNT] {
    let mut quota = [0u64; CategoryLabel::COUNT];
    let mut open: Vec<usize> = (0..CategoryLabel::COUNT).filter(|&i| available[i] > 0).collect();
    let mut remaining = target_total;
    while remaining > 0 && !open.is_empty() {
        let n = open.len() as u64;
        // available < remaining / n without leaving integers
        let (saturated, rest): (Vec<usize>, Vec<usize>) = open
            .iter()
            .partition(|&&i| (available[i] as u128) * (n as u128) < remaining as u128);
        if saturated.is_empty() {
            let (each, extra) = (remaining / n, remaining % n);
            for (k, &i) in open.iter().enumerate() {
                quota[i] = each + u64::from((k as u64) < extra);
            }
            break;
        }
        for i in saturated {
            quota[i] = available[i];
            remaining -= available[i];
        }
        open = rest;
    }
    quota
}

/// Draws each category's quota uniformly without replacement. Categories are
/// visited in canonical order from a single generator seeded with
/// `plan.seed`; within a category clips are indexed in clip_id order. The
/// selection comes back sorted by clip_id with status `sampled`.
pub fn balanced_sample(kept: &[ClipRecord], plan: &SamplePlan) -> Result<Vec<ClipRecord>> {
    plan.validate()?;
    let mut by_category: Vec<Vec<&ClipRecord>> = vec![Vec::new(); CategoryLabel::COUNT];
    for r in kept {
        let category = r
            .category
            .ok_or_else(|| Error::Unscored(r.clip_id.clone()))?;
        by_category[category.index()].push(r);
    }
    let mut available = [0u64; CategoryLabel::COUNT];
    for (i, list) in by_category.iter_mut().enumerate() {
        list.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
        available[i] = list.len() as u64;
    }
    let quotas = waterfill_quotas(&available, plan.target_total);

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut out = Vec::new();
    for (list, &quota) in by_category.iter().zip(&quotas) {
        if quota == 0 {
            continue;
        }
        let picks = rand::seq::index::sample(&mut rng, list.len(), quota as usize);
        for idx in picks.iter() {
            out.push(list[idx].advanced(ClipStatus::Sampled, None)?);
        }
    }
    out.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    Ok(out)
}

/// Human verdict for finetune selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approved,
    Rejected,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Approved => "approved",
            Decision::Rejected => "rejected",
        }
    }
}

/// A clip spanning a single frame is treated as an image.
pub fn is_image_record(r: &ClipRecord) -> bool {
    r.frame_count() == 1
}

/// Records above the finetune aesthetic bar (strict), and approved by a
/// reviewer when `review_enabled`. Input order is preserved.
pub fn finetune_select(
    records: &[ClipRecord],
    t: &Thresholds,
    decisions: &BTreeMap<String, Decision>,
    review_enabled: bool,
) -> Vec<ClipRecord> {
    records
        .iter()
        .filter(|r| matches!(r.status, ClipStatus::Final | ClipStatus::Sampled))
        .filter(|r| {
            let bar = if is_image_record(r) {
                t.finetune_image_aesthetic_min
            } else {
                t.finetune_video_aesthetic_min
            };
            r.scores.is_some_and(|s| s.s_quality > bar)
        })
        .filter(|r| !review_enabled || decisions.get(&r.clip_id) == Some(&Decision::Approved))
        .cloned()
        .collect()
}

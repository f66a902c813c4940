//! Before/after distribution reports over two manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::{atomic_write, read_manifest_file};
use super::{CategoryLabel, ClipRecord, ScoreSet};
use crate::error::{Error, Result};

/// Histogram dimensions, in report order.
pub const REPORT_DIMENSIONS: [&str; 4] = ["aesthetic", "motion", "ocr", "temporal_consistency"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HistogramEdges(pub Vec<f64>);

impl HistogramEdges {
    /// `count` equal bins between `lo` and `hi`, computed from integer steps.
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Self {
        let span = hi - lo;
        HistogramEdges(
            (0..=count)
                .map(|i| lo + span * i as f64 / count as f64)
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.0.len() >= 2
            && self.0.iter().all(|e| e.is_finite())
            && self.0.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "histogram edges must be finite, strictly increasing, at least two".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportBins {
    pub aesthetic: HistogramEdges,
    pub motion: HistogramEdges,
    pub ocr: HistogramEdges,
    pub temporal_consistency: HistogramEdges,
}

impl Default for ReportBins {
    fn default() -> Self {
        ReportBins {
            aesthetic: HistogramEdges((0..=20).map(|i| i as f64 / 2.0).collect()),
            motion: HistogramEdges((0..=20).map(f64::from).collect()),
            ocr: HistogramEdges((0..=10).map(f64::from).collect()),
            temporal_consistency: HistogramEdges((-20..=20).map(|i| i as f64 / 20.0).collect()),
        }
    }
}

impl ReportBins {
    pub fn validate(&self) -> Result<()> {
        self.aesthetic.validate()?;
        self.motion.validate()?;
        self.ocr.validate()?;
        self.temporal_consistency.validate()
    }

    fn edges(&self, dimension: &str) -> &HistogramEdges {
        match dimension {
            "aesthetic" => &self.aesthetic,
            "motion" => &self.motion,
            "ocr" => &self.ocr,
            _ => &self.temporal_consistency,
        }
    }
}

fn score_value(dimension: &str, s: &ScoreSet) -> f64 {
    match dimension {
        "aesthetic" => s.s_quality,
        "motion" => s.s_motion,
        "ocr" => s.s_ocr,
        _ => s.s_tc,
    }
}

/// Bins are half-open `[e_i, e_{i+1})` except the last, which includes its upper edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionHistogram {
    pub dimension: String,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl DimensionHistogram {
    fn build(dimension: &str, edges: &HistogramEdges, values: impl Iterator<Item = f64>) -> Self {
        let e = &edges.0;
        let mut counts = vec![0u64; e.len() - 1];
        let (mut below, mut above) = (0, 0);
        let last = e[e.len() - 1];
        for v in values {
            if v < e[0] {
                below += 1;
            } else if v > last {
                above += 1;
            } else if v == last {
                counts[e.len() - 2] += 1;
            } else {
                // first edge strictly greater than v, minus one
                let idx = e.partition_point(|edge| *edge <= v) - 1;
                counts[idx] += 1;
            }
        }
        DimensionHistogram {
            dimension: dimension.to_string(),
            edges: e.clone(),
            counts,
            below,
            above,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.below + self.above
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub category: CategoryLabel,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub stage: String,
    /// Records counted: scored and not in a rejecting status.
    pub records: u64,
    pub histograms: Vec<DimensionHistogram>,
    pub categories: Vec<CategoryCount>,
}

impl ManifestSummary {
    pub fn from_records(stage: &str, records: &[ClipRecord], bins: &ReportBins) -> Self {
        let active: Vec<&ClipRecord> = records
            .iter()
            .filter(|r| !r.status.is_rejecting() && r.scores.is_some())
            .collect();
        let histograms = REPORT_DIMENSIONS
            .iter()
            .map(|dim| {
                let values = active
                    .iter()
                    .filter_map(|r| r.scores.as_ref())
                    .map(|s| score_value(dim, s));
                DimensionHistogram::build(dim, bins.edges(dim), values)
            })
            .collect();
        let mut counts = [0u64; CategoryLabel::COUNT];
        for r in &active {
            if let Some(c) = r.category {
                counts[c.index()] += 1;
            }
        }
        let categories = CategoryLabel::ALL
            .iter()
            .map(|&category| CategoryCount {
                category,
                count: counts[category.index()],
            })
            .collect();
        ManifestSummary {
            stage: stage.to_string(),
            records: active.len() as u64,
            histograms,
            categories,
        }
    }

    pub fn histogram(&self, dimension: &str) -> Option<&DimensionHistogram> {
        self.histograms.iter().find(|h| h.dimension == dimension)
    }

    pub fn category_count(&self, category: CategoryLabel) -> u64 {
        self.categories
            .iter()
            .find(|c| c.category == category)
            .map_or(0, |c| c.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub before: ManifestSummary,
    pub after: ManifestSummary,
}

impl ReportDocument {
    pub fn build(
        before_stage: &str,
        before: &[ClipRecord],
        after_stage: &str,
        after: &[ClipRecord],
        bins: &ReportBins,
    ) -> Self {
        ReportDocument {
            before: ManifestSummary::from_records(before_stage, before, bins),
            after: ManifestSummary::from_records(after_stage, after, bins),
        }
    }

    /// Writes `report.json`, one `report_<dimension>.csv` per histogram and
    /// `report_category.csv`. Returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();

        let json_path = dir.join("report.json");
        let mut json = serde_json::to_vec_pretty(self).expect("report serializes");
        json.push(b'\n');
        atomic_write(&json_path, &json)?;
        written.push(json_path);

        for (b, a) in self.before.histograms.iter().zip(&self.after.histograms) {
            let path = dir.join(format!("report_{}.csv", b.dimension));
            atomic_write(&path, histogram_csv(b, a).as_bytes())?;
            written.push(path);
        }

        let mut csv = String::from("category,before,after\n");
        for (b, a) in self.before.categories.iter().zip(&self.after.categories) {
            let _ = writeln!(csv, "{},{},{}", b.category, b.count, a.count);
        }
        let path = dir.join("report_category.csv");
        atomic_write(&path, csv.as_bytes())?;
        written.push(path);
        Ok(written)
    }
}

fn histogram_csv(before: &DimensionHistogram, after: &DimensionHistogram) -> String {
    let mut csv = String::from("bin,bin_start,bin_end,before,after\n");
    let _ = writeln!(csv, "below,,{},{},{}", before.edges[0], before.below, after.below);
    for i in 0..before.counts.len() {
        let _ = writeln!(
            csv,
            "{i},{},{},{},{}",
            before.edges[i],
            before.edges[i + 1],
            before.counts[i],
            after.counts[i]
        );
    }
    let last = before.edges[before.edges.len() - 1];
    let _ = writeln!(csv, "above,{last},,{},{}", before.above, after.above);
    csv
}

/// Reads both manifests and summarizes them with the given bin edges.
pub fn distribution_report(before: &Path, after: &Path, bins: &ReportBins) -> Result<ReportDocument> {
    bins.validate()?;
    let b = read_manifest_file(before)?;
    let a = read_manifest_file(after)?;
    Ok(ReportDocument::build(&b.stage, &b.records, &a.stage, &a.records, bins))
}

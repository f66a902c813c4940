//! Coarse-curation scores for a clip from three sampled frames.

use crate::catalog::{CategoryLabel, ClipRecord, ClipStatus, ScoreSet};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::providers::{EmbeddingVector, FrameRef, ProviderKind, Providers};

/// Start, floor-midpoint and last frame of a clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameTriplet {
    pub start: FrameRef,
    pub mid: FrameRef,
    pub end: FrameRef,
}

impl FrameTriplet {
    pub fn frames(&self) -> [&FrameRef; 3] {
        [&self.start, &self.mid, &self.end]
    }

    pub fn indices(&self) -> (u64, u64, u64) {
        (self.start.frame_index, self.mid.frame_index, self.end.frame_index)
    }
}

pub fn sample_triplet(clip: &ClipRecord) -> Result<FrameTriplet> {
    if clip.end_frame <= clip.start_frame {
        return Err(Error::InvalidInput(format!("clip {} has no frames", clip.clip_id)));
    }
    let first = clip.start_frame;
    let last = clip.end_frame - 1;
    let mid = first + (last - first) / 2;
    Ok(FrameTriplet {
        start: FrameRef::for_clip(clip, first)?,
        mid: FrameRef::for_clip(clip, mid)?,
        end: FrameRef::for_clip(clip, last)?,
    })
}

pub fn quality_score(a_start: f64, a_mid: f64, a_end: f64) -> f64 {
    (a_start + a_mid + a_end) / 3.0
}

pub fn ocr_score(c_start: u64, c_mid: u64, c_end: u64) -> f64 {
    (c_start + c_mid + c_end) as f64 / 3.0
}

pub fn motion_score(m_start_mid: f64, m_mid_end: f64) -> f64 {
    (m_start_mid + m_mid_end) / 2.0
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(Error::DegenerateEmbedding);
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn temporal_consistency(e_start: &EmbeddingVector, e_end: &EmbeddingVector) -> Result<f64> {
    cosine_similarity(e_start, e_end)
}

/// Component-wise mean of the three frame embeddings, left unnormalized.
pub fn mean_video_embedding(e: [&EmbeddingVector; 3]) -> Result<EmbeddingVector> {
    let dim = e[0].dim();
    for v in &e[1..] {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: v.dim(),
            });
        }
    }
    let values = (0..dim)
        .map(|i| (e[0].values[i] + e[1].values[i] + e[2].values[i]) / 3.0)
        .collect();
    Ok(EmbeddingVector::raw(values))
}

/// `"a photo of a " + lowercase(label)`, article unchanged for every label.
pub fn category_prompt(label: CategoryLabel) -> String {
    format!("a photo of a {}", label.as_str().to_lowercase())
}

/// Category prompts and their text embeddings, index-aligned with
/// [`CategoryLabel::ALL`].
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryModel {
    pub labels: [CategoryLabel; CategoryLabel::COUNT],
    pub prompts: Vec<String>,
    pub prompt_embeddings: Vec<EmbeddingVector>,
}

impl CategoryModel {
    pub fn build(providers: &Providers) -> Result<Self> {
        let prompts: Vec<String> = CategoryLabel::ALL.iter().map(|c| category_prompt(*c)).collect();
        let prompt_embeddings = providers.embed_texts(&prompts)?;
        Ok(CategoryModel {
            labels: CategoryLabel::ALL,
            prompts,
            prompt_embeddings,
        })
    }

    /// A model over caller-supplied embeddings, e.g. a synthetic basis.
    pub fn from_embeddings(prompt_embeddings: Vec<EmbeddingVector>) -> Result<Self> {
        if prompt_embeddings.len() != CategoryLabel::COUNT {
            return Err(Error::InvalidInput(format!(
                "category model needs {} embeddings, got {}",
                CategoryLabel::COUNT,
                prompt_embeddings.len()
            )));
        }
        Ok(CategoryModel {
            labels: CategoryLabel::ALL,
            prompts: CategoryLabel::ALL.iter().map(|c| category_prompt(*c)).collect(),
            prompt_embeddings,
        })
    }
}

/// Label with the highest cosine similarity; ties go to the earliest label.
pub fn classify_category(
    video_embedding: &EmbeddingVector,
    model: &CategoryModel,
) -> Result<(CategoryLabel, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, e) in model.prompt_embeddings.iter().enumerate() {
        let s = cosine_similarity(video_embedding, e)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    let (k, s) = best.ok_or_else(|| Error::InvalidInput("empty category model".into()))?;
    Ok((model.labels[k], s))
}

/// Reason recorded when a provider fails during scoring.
fn failure_reason(kind: ProviderKind) -> String {
    let name = match kind {
        ProviderKind::EmbedImage | ProviderKind::EmbedText => "embed",
        ProviderKind::Aesthetic => "aesthetic",
        ProviderKind::OcrCount => "ocr",
        ProviderKind::Flow => "flow",
        ProviderKind::Chat => "chat",
    };
    format!("{name}_provider")
}

/// The record as scored, plus the error that failed it, if any.
#[derive(Debug)]
pub struct ScoreOutcome {
    pub record: ClipRecord,
    pub error: Option<Error>,
}

fn compute_scores(
    clip: &ClipRecord,
    providers: &Providers,
    model: &CategoryModel,
) -> std::result::Result<(ScoreSet, CategoryLabel), (ProviderKind, Error)> {
    let triplet = sample_triplet(clip).map_err(|e| (ProviderKind::EmbedImage, e))?;
    let frames: Vec<FrameRef> = triplet.frames().into_iter().cloned().collect();

    let a = providers
        .aesthetic_scores(&frames)
        .map_err(|e| (ProviderKind::Aesthetic, e))?;
    let c = providers
        .ocr_region_counts(&frames)
        .map_err(|e| (ProviderKind::OcrCount, e))?;
    let e = providers
        .embed_images(&frames)
        .map_err(|e| (ProviderKind::EmbedImage, e))?;
    let m = providers
        .flow_magnitudes(&[
            (triplet.start.clone(), triplet.mid.clone()),
            (triplet.mid.clone(), triplet.end.clone()),
        ])
        .map_err(|e| (ProviderKind::Flow, e))?;

    let degenerate = |e| (ProviderKind::EmbedImage, e);
    let s_tc = temporal_consistency(&e[0], &e[2]).map_err(degenerate)?;
    let video = mean_video_embedding([&e[0], &e[1], &e[2]]).map_err(degenerate)?;
    let (category, similarity) = classify_category(&video, model).map_err(degenerate)?;

    Ok((
        ScoreSet {
            s_quality: quality_score(a[0], a[1], a[2]),
            s_ocr: ocr_score(c[0], c[1], c[2]),
            s_tc,
            s_motion: motion_score(m[0], m[1]),
            category_similarity: similarity,
            s_align: None,
        },
        category,
    ))
}

/// Scores one split clip. Any failure yields `scoring_failed` with a
/// `<provider>_provider` reason; no score is ever defaulted.
pub fn score_clip_detailed(clip: &ClipRecord, providers: &Providers, model: &CategoryModel) -> ScoreOutcome {
    let mut record = clip.clone();
    match compute_scores(clip, providers, model) {
        Ok((scores, category)) => {
            record.scores = Some(scores);
            record.category = Some(category);
            match record.advance(ClipStatus::Scored, None) {
                Ok(()) => ScoreOutcome { record, error: None },
                Err(e) => ScoreOutcome {
                    record: clip.clone(),
                    error: Some(e),
                },
            }
        }
        Err((kind, error)) => {
            let reason = match error {
                Error::DegenerateEmbedding => "degenerate_embedding".to_string(),
                _ => failure_reason(kind),
            };
            if record.advance(ClipStatus::ScoringFailed, Some(reason)).is_err() {
                record = clip.clone();
            }
            ScoreOutcome {
                record,
                error: Some(error),
            }
        }
    }
}

pub fn score_clip(clip: &ClipRecord, providers: &Providers, model: &CategoryModel) -> ClipRecord {
    score_clip_detailed(clip, providers, model).record
}

/// Scores every clip, in input order.
pub fn score_clips(
    clips: &[ClipRecord],
    providers: &Providers,
    model: &CategoryModel,
    exec: &Executor,
) -> Vec<ScoreOutcome> {
    exec.map(clips, |c| score_clip_detailed(c, providers, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn clip(start: u64, end: u64) -> ClipRecord {
        ClipRecord::new("v", start, end, 30.0, 64, 64)
    }

    fn basis(dim: usize, i: usize) -> EmbeddingVector {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        EmbeddingVector::raw(v)
    }

    #[test]
    fn triplet_indices() {
        assert_eq!(sample_triplet(&clip(0, 100)).unwrap().indices(), (0, 49, 99));
        assert_eq!(sample_triplet(&clip(10, 11)).unwrap().indices(), (10, 10, 10));
        assert_eq!(sample_triplet(&clip(0, 2)).unwrap().indices(), (0, 0, 1));
    }

    #[test]
    fn formula_examples() {
        assert_eq!(quality_score(5.0, 5.0, 5.0), 5.0);
        assert_abs_diff_eq!(quality_score(4.2, 5.1, 6.0), 5.1, epsilon = 1e-12);
        assert_eq!(quality_score(0.0, 0.0, 9.0), 3.0);
        assert_eq!(ocr_score(0, 0, 0), 0.0);
        assert_eq!(ocr_score(3, 1, 2), 2.0);
        assert_eq!(ocr_score(10, 0, 0), 10.0 / 3.0);
        assert_eq!(motion_score(0.0, 0.0), 0.0);
        assert_eq!(motion_score(2.0, 4.0), 3.0);
        assert_abs_diff_eq!(motion_score(0.0, 8.4), 4.2, epsilon = 1e-12);
    }

    #[test]
    fn cosine_examples() {
        let v = EmbeddingVector::raw(vec![0.3, -0.2, 0.9]);
        assert_abs_diff_eq!(temporal_consistency(&v, &v).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(temporal_consistency(&basis(4, 0), &basis(4, 1)).unwrap(), 0.0);
        let a = EmbeddingVector::raw(vec![1.0, 1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(
            temporal_consistency(&a, &basis(4, 0)).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-12
        );
        let zero = EmbeddingVector::raw(vec![0.0; 4]);
        assert!(matches!(temporal_consistency(&zero, &a), Err(Error::DegenerateEmbedding)));
        assert!(matches!(
            temporal_consistency(&basis(3, 0), &a),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mean_embedding_examples() {
        let u = EmbeddingVector::raw(vec![0.6, 0.8, 0.0]);
        let m = mean_video_embedding([&u, &u, &u]).unwrap();
        for (x, y) in m.values.iter().zip(&u.values) {
            approx::assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
        let m = mean_video_embedding([&basis(5, 0), &basis(5, 1), &basis(5, 2)]).unwrap();
        assert_eq!(m.values, vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0]);
        assert!(!m.normalized);
        let neg = EmbeddingVector::raw(vec![-0.6, -0.8, 0.0]);
        let m = mean_video_embedding([&u, &u, &neg]).unwrap();
        for (got, want) in m.values.iter().zip([0.2, 0.8 / 3.0, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    fn orthonormal_model() -> CategoryModel {
        CategoryModel::from_embeddings((0..14).map(|i| basis(16, i)).collect()).unwrap()
    }

    #[test]
    fn classification_examples() {
        let model = orthonormal_model();
        let (label, s) = classify_category(&model.prompt_embeddings[3], &model).unwrap();
        assert_eq!(label, CategoryLabel::Architecture);
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);

        let mut v = vec![0.0; 16];
        v[5] = 0.9;
        v[7] = 0.1;
        let (label, _) = classify_category(&EmbeddingVector::raw(v), &model).unwrap();
        assert_eq!(label, CategoryLabel::ALL[5]);

        let mut tie = vec![0.0; 16];
        tie[2] = 0.5;
        tie[9] = 0.5;
        let (label, _) = classify_category(&EmbeddingVector::raw(tie), &model).unwrap();
        assert_eq!(label, CategoryLabel::ALL[2]);

        let zero = EmbeddingVector::raw(vec![0.0; 16]);
        assert!(matches!(classify_category(&zero, &model), Err(Error::DegenerateEmbedding)));
    }

    #[test]
    fn prompts_follow_template() {
        assert_eq!(category_prompt(CategoryLabel::Animal), "a photo of a animal");
        assert_eq!(category_prompt(CategoryLabel::Cartoon2d), "a photo of a 2d cartoon");
        assert_eq!(category_prompt(CategoryLabel::OuterSpace), "a photo of a outer space");
        assert_eq!(orthonormal_model().prompts[13], "a photo of a technology");
    }
}

//! Caption triage for the three caption failure modes.

use super::{detect_frame_level, detect_reduplication, detect_scene_transition, tokenize};
use crate::catalog::{DecisionSource, Ternary, TriageResult};
use crate::error::{Error, Result};
use crate::providers::{yes_no_prompt, Providers, YES_NO_INSTRUCTION};

pub const TRIAGE_INSTRUCTION: &str = YES_NO_INSTRUCTION;

/// Scene transition, frame-level description, reduplication, in that order.
pub const TRIAGE_QUESTIONS: [&str; 3] = [
    "Given the preceding video caption, is there an indication of a possible scene transition?",
    "Does the preceding video caption suggest a shift towards a series of descriptive image captions?",
    "Does the video caption conclude with repetitive phrases or sentences?",
];

pub fn triage_prompt(caption: &str) -> String {
    yes_no_prompt(caption, &questions())
}

fn questions() -> Vec<String> {
    TRIAGE_QUESTIONS.iter().map(|q| q.to_string()).collect()
}

fn heuristic_flags(caption: &str) -> [bool; 3] {
    let c = tokenize(caption);
    [
        detect_scene_transition(&c),
        detect_frame_level(&c),
        detect_reduplication(&c),
    ]
}

pub fn heuristic_triage(caption: &str) -> TriageResult {
    let [st, flg, redup] = heuristic_flags(caption);
    TriageResult {
        scene_transition: Ternary::from_bool(st),
        frame_level: Ternary::from_bool(flg),
        reduplication: Ternary::from_bool(redup),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriageOutcome {
    pub result: TriageResult,
    /// Who decided each flag, in question order.
    pub sources: [DecisionSource; 3],
}

impl TriageOutcome {
    /// `llm` only when the model settled all three flags.
    pub fn decision_source(&self) -> DecisionSource {
        if self.sources.iter().all(|s| *s == DecisionSource::Llm) {
            DecisionSource::Llm
        } else {
            DecisionSource::Heuristic
        }
    }

    fn heuristic(caption: &str) -> Self {
        TriageOutcome {
            result: heuristic_triage(caption),
            sources: [DecisionSource::Heuristic; 3],
        }
    }
}

/// Asks the model the three triage questions. Undetermined answers fall back
/// to the matching heuristic; with no model, or when the model call fails,
/// all three flags come from the heuristics.
pub fn llm_triage(caption: &str, llm: Option<&Providers>) -> Result<TriageOutcome> {
    if caption.trim().is_empty() {
        return Err(Error::EmptyInput);
    }
    let Some(llm) = llm else {
        return Ok(TriageOutcome::heuristic(caption));
    };
    let answers = match llm.llm_yes_no(&questions(), caption) {
        Ok(a) => a,
        Err(e) => {
            tracing::debug!(error = %e, "llm triage unavailable, using heuristics");
            return Ok(TriageOutcome::heuristic(caption));
        }
    };
    let fallback = heuristic_flags(caption);
    let mut flags = [Ternary::No; 3];
    let mut sources = [DecisionSource::Llm; 3];
    for i in 0..3 {
        match answers[i] {
            Ternary::Undetermined => {
                flags[i] = Ternary::from_bool(fallback[i]);
                sources[i] = DecisionSource::Heuristic;
            }
            definite => flags[i] = definite,
        }
    }
    Ok(TriageOutcome {
        result: TriageResult {
            scene_transition: flags[0],
            frame_level: flags[1],
            reduplication: flags[2],
        },
        sources,
    })
}

/// Reference chat answer: the triage questions answered by the heuristics,
/// one line each; any other question gets `Undetermined`.
pub fn reference_chat_answer(context: &str, questions: &[String]) -> String {
    let flags = heuristic_flags(context);
    questions
        .iter()
        .map(|q| {
            match TRIAGE_QUESTIONS.iter().position(|t| *t == q.trim()) {
                Some(i) if flags[i] => "Yes",
                Some(_) => "No",
                None => "Undetermined",
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Ternary::*;
    use crate::providers::{ChatRequest, FrameRef, ModelBackend};
    use std::sync::Arc;

    struct Scripted(std::result::Result<String, ()>);

    impl ModelBackend for Scripted {
        fn model_id(&self) -> &str {
            "scripted"
        }
        fn embed_images(&self, _: &[FrameRef]) -> Result<Vec<Vec<f64>>> {
            unimplemented!()
        }
        fn embed_texts(&self, _: &[String]) -> Result<Vec<Vec<f64>>> {
            unimplemented!()
        }
        fn aesthetic_scores(&self, _: &[FrameRef]) -> Result<Vec<f64>> {
            unimplemented!()
        }
        fn ocr_counts(&self, _: &[FrameRef]) -> Result<Vec<i64>> {
            unimplemented!()
        }
        fn flow_magnitudes(&self, _: &[(FrameRef, FrameRef)]) -> Result<Vec<f64>> {
            unimplemented!()
        }
        fn chat(&self, _: &ChatRequest) -> Result<String> {
            self.0.clone().map_err(|_| Error::ProviderUnavailable {
                kind: crate::providers::ProviderKind::Chat,
                message: "offline".into(),
            })
        }
    }

    fn scripted(answer: std::result::Result<&str, ()>) -> Providers {
        Providers::new(Arc::new(Scripted(answer.map(String::from))), 8)
    }

    const REDUP: &str = "a dog runs a dog runs a dog runs in the park";

    #[test]
    fn prompt_contains_questions_verbatim() {
        let p = triage_prompt("a cat sleeps");
        assert!(p.starts_with("a cat sleeps\n\n"));
        for q in TRIAGE_QUESTIONS {
            assert!(p.contains(q));
        }
    }

    #[test]
    fn all_yes_rejects_with_every_code() {
        let out = llm_triage("a cat sleeps", Some(&scripted(Ok("Yes, Yes, Yes")))).unwrap();
        assert_eq!(out.result.rejection_reason().as_deref(), Some("st,flg,redup"));
        assert_eq!(out.decision_source(), DecisionSource::Llm);
    }

    #[test]
    fn undetermined_answers_use_heuristics() {
        let out = llm_triage(REDUP, Some(&scripted(Ok("No\nNo\nmaybe")))).unwrap();
        assert_eq!(out.result.flags(), [No, No, Yes]);
        assert_eq!(
            out.sources,
            [DecisionSource::Llm, DecisionSource::Llm, DecisionSource::Heuristic]
        );
        assert_eq!(out.decision_source(), DecisionSource::Heuristic);
    }

    #[test]
    fn offline_llm_equals_heuristics() {
        let out = llm_triage(REDUP, Some(&scripted(Err(())))).unwrap();
        assert_eq!(out.result, heuristic_triage(REDUP));
        assert_eq!(out.sources, [DecisionSource::Heuristic; 3]);
        assert_eq!(llm_triage(REDUP, None).unwrap(), out);
    }

    #[test]
    fn reference_answers_follow_heuristics() {
        let qs: Vec<String> = TRIAGE_QUESTIONS.iter().map(|q| q.to_string()).collect();
        assert_eq!(reference_chat_answer(REDUP, &qs), "No\nNo\nYes");
        assert_eq!(
            reference_chat_answer(REDUP, &["Is it sunny?".to_string()]),
            "Undetermined"
        );
    }

    #[test]
    fn empty_caption_is_an_error() {
        assert!(matches!(llm_triage("  ", None), Err(Error::EmptyInput)));
    }
}

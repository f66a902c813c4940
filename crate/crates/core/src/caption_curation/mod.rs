//! Fine-grained curation over captions: alignment gating, failure-mode
//! triage and vocabulary statistics.

mod triage;
mod vocab;

use std::ops::Range;

use crate::catalog::{ClipRecord, ClipStatus};
use crate::error::Result;
use crate::providers::EmbeddingVector;
use crate::scoring::cosine_similarity;

pub use triage::{
    heuristic_triage, llm_triage, reference_chat_answer, triage_prompt, TriageOutcome,
    TRIAGE_INSTRUCTION, TRIAGE_QUESTIONS,
};
pub use vocab::{vocab_stats, LexiconTagger, PosTag, Tagger, VocabStats, VALID_OCCURRENCE_FLOOR};

/// Version of the fixed cue lists below.
pub const CUE_LIST_VERSION: u32 = 1;

/// Sentence-initial cues of a frame-by-frame description. `frame <number>`
/// is matched separately.
pub const FRAME_LEVEL_CUES: [&[&str]; 6] = [
    &["in", "the", "first", "frame"],
    &["in", "the", "second", "frame"],
    &["in", "the", "next", "frame"],
    &["the", "first", "image"],
    &["the", "second", "image"],
    &["in", "this", "frame"],
];

/// Phrases that announce a cut to another scene.
pub const SCENE_TRANSITION_CUES: [&[&str]; 6] = [
    &["the", "scene", "changes"],
    &["the", "scene", "shifts"],
    &["cuts", "to"],
    &["the", "video", "then", "shows", "a", "different"],
    &["in", "a", "different", "scene"],
    &["the", "camera", "switches", "to"],
];

/// Lowercase alphanumeric tokens and the sentence spans over them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenizedCaption {
    pub tokens: Vec<String>,
    pub sentences: Vec<Range<usize>>,
}

impl TokenizedCaption {
    pub fn sentence(&self, i: usize) -> &[String] {
        &self.tokens[self.sentences[i].clone()]
    }

    pub fn sentence_slices(&self) -> impl Iterator<Item = &[String]> {
        self.sentences.iter().map(|r| &self.tokens[r.clone()])
    }
}

/// Splits on whitespace, lowercases and keeps only letters and digits.
/// A whitespace token ending in `.`, `!` or `?` (before any closing quotes
/// or brackets) closes a sentence.
pub fn tokenize(text: &str) -> TokenizedCaption {
    let mut out = TokenizedCaption::default();
    let mut start = 0;
    for raw in text.split_whitespace() {
        let word: String = raw
            .chars()
            .flat_map(char::to_lowercase)
            .filter(|c| c.is_alphanumeric())
            .collect();
        if !word.is_empty() {
            out.tokens.push(word);
        }
        let closes = raw
            .trim_end_matches(['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}'])
            .ends_with(['.', '!', '?']);
        if closes && out.tokens.len() > start {
            out.sentences.push(start..out.tokens.len());
            start = out.tokens.len();
        }
    }
    if out.tokens.len() > start {
        out.sentences.push(start..out.tokens.len());
    }
    out
}

/// Number of tokens [`tokenize`] produces.
pub fn word_count(text: &str) -> usize {
    tokenize(text).tokens.len()
}

fn contains_phrase(haystack: &[String], phrase: &[&str]) -> bool {
    haystack.len() >= phrase.len()
        && haystack
            .windows(phrase.len())
            .any(|w| w.iter().zip(phrase).all(|(a, b)| a == b))
}

fn starts_with_phrase(tokens: &[String], phrase: &[&str]) -> bool {
    tokens.len() >= phrase.len() && tokens.iter().zip(phrase).all(|(a, b)| a == b)
}

/// True when some 3- to 8-gram repeats three times back to back, or the last
/// sentence repeats the one before it.
pub fn detect_reduplication(c: &TokenizedCaption) -> bool {
    let t = &c.tokens;
    for n in 3..=8 {
        if t.len() < 3 * n {
            break;
        }
        for i in 0..=t.len() - 3 * n {
            let a = &t[i..i + n];
            if a == &t[i + n..i + 2 * n] && a == &t[i + 2 * n..i + 3 * n] {
                return true;
            }
        }
    }
    let k = c.sentences.len();
    k >= 2 && c.sentence(k - 1) == c.sentence(k - 2)
}

fn starts_with_frame_cue(sentence: &[String]) -> bool {
    if FRAME_LEVEL_CUES.iter().any(|cue| starts_with_phrase(sentence, cue)) {
        return true;
    }
    sentence.len() >= 2
        && sentence[0] == "frame"
        && sentence[1].chars().all(|ch| ch.is_ascii_digit())
}

/// True when at least two sentences open with a frame-enumeration cue.
pub fn detect_frame_level(c: &TokenizedCaption) -> bool {
    c.sentence_slices().filter(|s| starts_with_frame_cue(s)).count() >= 2
}

/// True when any sentence contains a scene-transition cue.
pub fn detect_scene_transition(c: &TokenizedCaption) -> bool {
    c.sentence_slices().any(|s| {
        SCENE_TRANSITION_CUES
            .iter()
            .any(|cue| contains_phrase(s, cue))
    })
}

/// Cosine similarity between a caption and its clip's mean frame embedding.
pub fn alignment_score(caption: &EmbeddingVector, video: &EmbeddingVector) -> Result<f64> {
    cosine_similarity(caption, video)
}

/// Records the alignment score and rejects the clip below `align_min`.
pub fn apply_alignment(record: &mut ClipRecord, score: f64, align_min: f64) -> Result<bool> {
    if let Some(s) = record.scores.as_mut() {
        s.s_align = Some(score);
    }
    if score < align_min {
        record.advance(ClipStatus::CaptionRejected, Some("low_alignment".into()))?;
        return Ok(false);
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> TokenizedCaption {
        tokenize(s)
    }

    #[test]
    fn tokenizer_rules() {
        let c = t("The chef's knife, gleaming! Then: he (slowly) cuts.  Done");
        assert_eq!(
            c.tokens,
            ["the", "chefs", "knife", "gleaming", "then", "he", "slowly", "cuts", "done"]
        );
        assert_eq!(c.sentences, vec![0..4, 4..8, 8..9]);
        assert_eq!(word_count("a  b -- c"), 3);
        assert_eq!(t("").sentences.len(), 0);
        assert_eq!(t("\"It ends.\" Next").sentences, vec![0..2, 2..3]);
    }

    #[test]
    fn reduplication_examples() {
        assert!(detect_reduplication(&t("a dog runs a dog runs a dog runs in the park")));
        assert!(detect_reduplication(&t("the cat sleeps. the cat sleeps.")));
        assert!(!detect_reduplication(&t("a chef slices vegetables and plates the dish")));
        // only twice
        assert!(!detect_reduplication(&t("a dog runs a dog runs in the park")));
        // 8-gram looping
        let eight = "one two three four five six seven eight ";
        assert!(detect_reduplication(&t(&eight.repeat(3))));
        // a repeated sentence that is not the final one
        assert!(!detect_reduplication(&t("the cat sleeps. the cat sleeps. a dog barks.")));
    }

    #[test]
    fn frame_level_examples() {
        assert!(detect_frame_level(&t(
            "in the first frame a man stands. in the second frame he waves."
        )));
        assert!(!detect_frame_level(&t(
            "in the first frame a man stands and then walks away"
        )));
        assert!(!detect_frame_level(&t("a man waves at the camera")));
        assert!(detect_frame_level(&t("Frame 1 shows a car. Frame 2 shows a truck.")));
        assert!(!detect_frame_level(&t("frame one shows a car. frame two shows a truck.")));
    }

    #[test]
    fn scene_transition_examples() {
        assert!(detect_scene_transition(&t(
            "a beach at sunset. the scene changes to a city street."
        )));
        assert!(!detect_scene_transition(&t("the camera pans across the beach")));
        assert!(detect_scene_transition(&t("cuts to a close-up of the chef's hands")));
        // cue split across a sentence boundary does not count
        assert!(!detect_scene_transition(&t("he cuts. to the left is a tree")));
    }

    #[test]
    fn detectors_ignore_case() {
        let s = "In The First Frame a man stands. IN THE SECOND FRAME he waves. The Scene Changes.";
        assert_eq!(detect_frame_level(&t(s)), detect_frame_level(&t(&s.to_lowercase())));
        assert!(detect_scene_transition(&t(s)));
    }
}

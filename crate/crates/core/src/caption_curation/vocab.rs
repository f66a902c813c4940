//! Noun/verb vocabulary statistics over a caption corpus.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::TokenizedCaption;
use crate::exec::Executor;

/// A word is valid when it occurs strictly more often than this.
pub const VALID_OCCURRENCE_FLOOR: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PosTag {
    Noun,
    Verb,
    Other,
}

pub trait Tagger: Sync {
    fn tag(&self, token: &str) -> PosTag;
}

impl<F: Fn(&str) -> PosTag + Sync> Tagger for F {
    fn tag(&self, token: &str) -> PosTag {
        self(token)
    }
}

/// Embedded noun and verb lexicons with inflection and suffix fallbacks.
#[derive(Debug, Clone)]
pub struct LexiconTagger {
    nouns: HashSet<&'static str>,
    verbs: HashSet<&'static str>,
}

static NOUNS: &str = include_str!("../../data/lexicon/nouns.txt");
static VERBS: &str = include_str!("../../data/lexicon/verbs.txt");

impl Default for LexiconTagger {
    fn default() -> Self {
        Self::reference()
    }
}

impl LexiconTagger {
    pub fn reference() -> Self {
        let load = |s: &'static str| s.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        LexiconTagger {
            nouns: load(NOUNS),
            verbs: load(VERBS),
        }
    }

    pub fn lexicon_size(&self) -> (usize, usize) {
        (self.nouns.len(), self.verbs.len())
    }

    fn verb_stem(&self, token: &str) -> bool {
        let is_verb = |s: &str| self.verbs.contains(s);
        for suffix in ["ing", "ed"] {
            if let Some(stem) = token.strip_suffix(suffix) {
                if stem.len() < 2 {
                    continue;
                }
                let undoubled = {
                    let b = stem.as_bytes();
                    (b.len() >= 2 && b[b.len() - 1] == b[b.len() - 2]).then(|| &stem[..stem.len() - 1])
                };
                if is_verb(stem)
                    || is_verb(&format!("{stem}e"))
                    || undoubled.is_some_and(is_verb)
                    || (suffix == "ed" && stem.ends_with('i') && is_verb(&format!("{}y", &stem[..stem.len() - 1])))
                {
                    return true;
                }
            }
        }
        if let Some(stem) = token.strip_suffix("ies") {
            if is_verb(&format!("{stem}y")) {
                return true;
            }
        }
        token.strip_suffix("es").is_some_and(is_verb) || token.strip_suffix('s').is_some_and(is_verb)
    }

    fn noun_plural(&self, token: &str) -> bool {
        let is_noun = |s: &str| self.nouns.contains(s);
        if let Some(stem) = token.strip_suffix("ies") {
            if is_noun(&format!("{stem}y")) {
                return true;
            }
        }
        token.strip_suffix("es").is_some_and(is_noun) || token.strip_suffix('s').is_some_and(is_noun)
    }
}

impl Tagger for LexiconTagger {
    /// Lexicon hit, then inflected lexicon hit, then `-ing`/`-ed` → verb and
    /// `-tion`/`-ness` → noun; anything else is `Other`.
    fn tag(&self, token: &str) -> PosTag {
        if self.nouns.contains(token) {
            return PosTag::Noun;
        }
        if self.verbs.contains(token) {
            return PosTag::Verb;
        }
        if self.verb_stem(token) {
            return PosTag::Verb;
        }
        if self.noun_plural(token) {
            return PosTag::Noun;
        }
        if token.chars().any(|c| c.is_ascii_digit()) {
            return PosTag::Other;
        }
        if (token.ends_with("ing") || token.ends_with("ed")) && token.len() > 4 {
            return PosTag::Verb;
        }
        if token.ends_with("tion") || token.ends_with("ness") {
            return PosTag::Noun;
        }
        PosTag::Other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocabStats {
    pub distinct_nouns: u64,
    pub valid_nouns: u64,
    pub distinct_verbs: u64,
    pub valid_verbs: u64,
    pub avg_nouns_per_caption: f64,
    pub avg_verbs_per_caption: f64,
    pub vn_dn_ratio: f64,
    pub vv_dv_ratio: f64,
}

#[derive(Default)]
struct Partial {
    nouns: HashMap<String, u64>,
    verbs: HashMap<String, u64>,
    noun_tokens: u64,
    verb_tokens: u64,
}

impl Partial {
    fn merge(mut self, other: Partial) -> Partial {
        for (k, v) in other.nouns {
            *self.nouns.entry(k).or_default() += v;
        }
        for (k, v) in other.verbs {
            *self.verbs.entry(k).or_default() += v;
        }
        self.noun_tokens += other.noun_tokens;
        self.verb_tokens += other.verb_tokens;
        self
    }
}

fn ratio(valid: u64, distinct: u64) -> f64 {
    if distinct == 0 {
        0.0
    } else {
        valid as f64 / distinct as f64
    }
}

/// Counts per chunk, then merges; counts are exact integers so the merge
/// order does not affect the result.
pub fn vocab_stats(corpus: &[TokenizedCaption], tagger: &dyn Tagger, exec: &Executor) -> VocabStats {
    let partials = exec.map_chunks(corpus, 256, |chunk| {
        let mut p = Partial::default();
        for caption in chunk {
            for token in &caption.tokens {
                match tagger.tag(token) {
                    PosTag::Noun => {
                        *p.nouns.entry(token.clone()).or_default() += 1;
                        p.noun_tokens += 1;
                    }
                    PosTag::Verb => {
                        *p.verbs.entry(token.clone()).or_default() += 1;
                        p.verb_tokens += 1;
                    }
                    PosTag::Other => {}
                }
            }
        }
        p
    });
    let total = partials.into_iter().fold(Partial::default(), Partial::merge);

    let valid = |m: &HashMap<String, u64>| m.values().filter(|c| **c > VALID_OCCURRENCE_FLOOR).count() as u64;
    let distinct_nouns = total.nouns.len() as u64;
    let distinct_verbs = total.verbs.len() as u64;
    let valid_nouns = valid(&total.nouns);
    let valid_verbs = valid(&total.verbs);
    let n = corpus.len() as f64;
    let avg = |t: u64| if corpus.is_empty() { 0.0 } else { t as f64 / n };
    VocabStats {
        distinct_nouns,
        valid_nouns,
        distinct_verbs,
        valid_verbs,
        avg_nouns_per_caption: avg(total.noun_tokens),
        avg_verbs_per_caption: avg(total.verb_tokens),
        vn_dn_ratio: ratio(valid_nouns, distinct_nouns),
        vv_dv_ratio: ratio(valid_verbs, distinct_verbs),
    }
}

//! Independent oracles and seeded synthetic corpora for checking `werange`.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use werange::corpus::{CorpusEntry, ReferenceSet, Utterance};
use werange::metrics::UtteranceScore;
use werange::textnorm::derive_convention;
use werange::{ConventionRuleSet, GroupLabel, PolicyId, Token, Transcript};

pub const GROUPS: [&str; 3] = ["control", "fluent_aphasia", "nonfluent_aphasia"];

const VOCAB: [&str; 10] = [
    "the", "boy", "kicked", "ball", "dog", "going", "home", "i", "think", "was",
];

/// Minimum edits turning `h` into `r`, by exhaustive recursion over edit
/// scripts. Exponential; keep inputs short.
pub fn edit_distance_oracle<T: PartialEq>(h: &[T], r: &[T]) -> usize {
    match (h.split_first(), r.split_first()) {
        (None, _) => r.len(),
        (_, None) => h.len(),
        (Some((a, ht)), Some((b, rt))) if a == b => edit_distance_oracle(ht, rt),
        (Some((_, ht)), Some((_, rt))) => {
            1 + edit_distance_oracle(ht, rt)
                .min(edit_distance_oracle(ht, r))
                .min(edit_distance_oracle(h, rt))
        }
    }
}

/// A verbatim-style transcript with fillers, fragments, immediate repeats
/// and the hedge "i think".
pub fn random_verbatim(rng: &mut ChaCha8Rng) -> Vec<Token> {
    let len = rng.gen_range(1..=12);
    let mut out: Vec<Token> = Vec::new();
    while out.len() < len {
        match rng.gen_range(0..10) {
            0 => out.push(Token::filler(*["um", "uh"].choose(rng).unwrap())),
            1 => out.push(Token::fragment(*["g", "ki", "bo"].choose(rng).unwrap())),
            2 if !out.is_empty() => out.push(out[out.len() - 1].clone()),
            3 => {
                out.push(Token::word("i"));
                out.push(Token::word("think"));
            }
            _ => out.push(Token::word(*VOCAB.choose(rng).unwrap())),
        }
    }
    out
}

// perturbs one of the references so hypotheses sit near all of them
fn random_hypothesis(rng: &mut ChaCha8Rng, refs: &[Vec<Token>]) -> Vec<Token> {
    let base = refs.choose(rng).unwrap();
    let mut out = Vec::new();
    for t in base {
        match rng.gen_range(0..8) {
            0 => {}
            1 => out.push(Token::word(*VOCAB.choose(rng).unwrap())),
            2 => {
                out.push(Token::word(t.surface.clone()));
                out.push(Token::word(*VOCAB.choose(rng).unwrap()));
            }
            _ => out.push(Token::word(t.surface.clone())),
        }
    }
    out
}

pub struct Synthetic {
    pub entries: Vec<CorpusEntry>,
    pub hypotheses: Vec<Transcript>,
}

/// 3 to 50 utterances over the three groups, each group non-empty. The
/// non-verbatim and legal references are derived from a random verbatim one
/// with the stock rules.
pub fn synthetic_corpus(rng: &mut ChaCha8Rng) -> Synthetic {
    let n = rng.gen_range(3..=50);
    let rules = [
        ConventionRuleSet::verbatim(),
        ConventionRuleSet::nonverbatim(),
        ConventionRuleSet::legal(),
    ];
    let mut entries = Vec::new();
    let mut hypotheses = Vec::new();
    for i in 0..n {
        let id = format!("u{i:03}");
        let group = GroupLabel::new(GROUPS[if i < 3 { i } else { rng.gen_range(0..3) }]);
        let verbatim = Transcript::reference(&id, PolicyId::verbatim(), random_verbatim(rng));
        let mut references = ReferenceSet::new(&id);
        let mut token_lists = Vec::new();
        for r in &rules {
            let mut t = derive_convention(&verbatim, r).unwrap();
            // a reference made only of fillers derives to nothing
            if t.tokens.is_empty() {
                t = Transcript::reference(&id, r.policy.clone(), vec![Token::word("mm-hm")]);
            }
            token_lists.push(t.tokens.clone());
            references.insert(t);
        }
        hypotheses.push(Transcript::hypothesis(
            &id,
            "synthetic",
            random_hypothesis(rng, &token_lists),
        ));
        entries.push(CorpusEntry {
            utterance: Utterance {
                utterance_id: id,
                speaker_id: format!("s{i}"),
                group,
                audio_duration_s: None,
            },
            references,
        });
    }
    Synthetic {
        entries,
        hypotheses,
    }
}

pub fn group_scores<'a>(scores: &'a [UtteranceScore], group: &str) -> Vec<&'a UtteranceScore> {
    scores
        .iter()
        .filter(|s| s.group.as_str() == group)
        .collect()
}

/// The bundled three-utterance corpus, shared with the CLI tests.
pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../cli/tests/fixtures")
        .join(name)
}

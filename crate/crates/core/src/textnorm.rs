//! Tokenization, normalization and rule-based convention derivation.
//!
//! Derivation is deletion-only: a non-verbatim or legal variant is always a
//! subsequence of the verbatim transcript it came from. Rewriting that needs
//! intent (grammar repair, paraphrase) is outside what these rules attempt.
//!
//! Inline markers recognized by the tokenizer, checked before punctuation is
//! stripped:
//!
//! | written      | token class |
//! |--------------|-------------|
//! | `&-um`       | filler      |
//! | `&+go`       | fragment    |
//! | `go--`       | fragment    |
//!
//! Any other token whose normalized surface is in the filler lexicon is a
//! filler; everything else is a word.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{PolicyId, PolicyKind, Token, TokenClass, Transcript};

pub const DEFAULT_FILLERS: [&str; 7] = ["um", "uh", "er", "ah", "mm", "hm", "mhm"];
pub const DEFAULT_HEDGES: [&str; 6] = [
    "i think",
    "i believe",
    "i guess",
    "maybe",
    "sort of",
    "kind of",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConventionError {
    #[error("rule set for policy \"{policy}\" is inconsistent with its kind: {reason}")]
    InvalidRules { policy: String, reason: String },
    #[error(
        "derivation source for utterance \"{utterance_id}\" must be a verbatim-kind reference"
    )]
    NotVerbatimSource { utterance_id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumberStyle {
    /// Numerals such as `3.5` or `10:30` survive punctuation stripping intact.
    #[default]
    AsWritten,
    /// No special handling; numerals lose their punctuation like any word.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalizationScheme {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub collapse_whitespace: bool,
    pub number_style: NumberStyle,
}

impl Default for NormalizationScheme {
    fn default() -> Self {
        NormalizationScheme {
            lowercase: true,
            strip_punctuation: true,
            collapse_whitespace: true,
            number_style: NumberStyle::AsWritten,
        }
    }
}

impl NormalizationScheme {
    /// Only whitespace splitting; surfaces are kept as written.
    pub fn raw() -> Self {
        NormalizationScheme {
            lowercase: false,
            strip_punctuation: false,
            collapse_whitespace: false,
            number_style: NumberStyle::AsWritten,
        }
    }

    /// String-level normalization. Markers are removed along with their
    /// class information; use [`tokenize`] to keep it.
    pub fn normalize(&self, text: &str) -> String {
        if self.collapse_whitespace {
            return chunks(text)
                .filter_map(|(_, chunk)| self.normalize_chunk(chunk).map(|(s, _)| s))
                .collect::<Vec<_>>()
                .join(" ");
        }
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for (span, chunk) in chunks(text) {
            out.push_str(&text[last..span.start]);
            if let Some((surface, _)) = self.normalize_chunk(chunk) {
                out.push_str(&surface);
            }
            last = span.end;
        }
        out.push_str(&text[last..]);
        out
    }

    fn normalize_chunk(&self, chunk: &str) -> Option<(String, Option<TokenClass>)> {
        let (body, marked) = strip_markers(chunk);
        let mut surface = if self.lowercase {
            body.to_lowercase()
        } else {
            body.to_string()
        };
        if self.strip_punctuation {
            surface = match self.number_style {
                NumberStyle::AsWritten => numeral_core(&surface)
                    .map(str::to_string)
                    .unwrap_or_else(|| strip_punct(&surface)),
                NumberStyle::None => strip_punct(&surface),
            };
        }
        if surface.is_empty() {
            None
        } else {
            Some((surface, marked))
        }
    }
}

fn chunks(text: &str) -> impl Iterator<Item = (Range<usize>, &str)> {
    let mut pos = 0;
    std::iter::from_fn(move || {
        let rest = &text[pos..];
        let start = pos + (rest.len() - rest.trim_start().len());
        if start >= text.len() {
            pos = text.len();
            return None;
        }
        let len = text[start..]
            .find(char::is_whitespace)
            .unwrap_or(text.len() - start);
        pos = start + len;
        Some((start..pos, &text[start..pos]))
    })
}

fn strip_markers(chunk: &str) -> (&str, Option<TokenClass>) {
    let mut body = chunk;
    let mut class = None;
    loop {
        if let Some(rest) = body.strip_prefix("&-") {
            body = rest;
            class = Some(TokenClass::Filler);
        } else if let Some(rest) = body.strip_prefix("&+") {
            body = rest;
            class = Some(TokenClass::Fragment);
        } else {
            break;
        }
    }
    if body.len() > 2 && body.ends_with("--") {
        body = body.trim_end_matches('-');
        class = Some(TokenClass::Fragment);
    }
    (body, class)
}

fn strip_punct(s: &str) -> String {
    let kept: String = s
        .chars()
        .filter(|c| c.is_alphanumeric() || *c == '\'' || *c == '-')
        .collect();
    kept.trim_matches(|c| c == '\'' || c == '-').to_string()
}

/// `3.5`, `1,000`, `10:30` (with surrounding punctuation trimmed), if the
/// chunk is a numeral.
fn numeral_core(s: &str) -> Option<&str> {
    let core = s.trim_matches(|c: char| !c.is_alphanumeric());
    let starts = core.chars().next().is_some_and(|c| c.is_ascii_digit());
    let ends = core.chars().last().is_some_and(|c| c.is_ascii_digit());
    let body_ok = core
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | ',' | ':' | '/'));
    (starts && ends && body_ok).then_some(core)
}

fn default_fillers() -> BTreeSet<String> {
    DEFAULT_FILLERS.iter().map(|s| s.to_string()).collect()
}

/// Splits `raw` into normalized tokens using the default filler lexicon.
pub fn tokenize(raw: &str, scheme: &NormalizationScheme) -> Vec<Token> {
    tokenize_with_lexicon(raw, scheme, &default_fillers())
}

pub fn tokenize_with_lexicon(
    raw: &str,
    scheme: &NormalizationScheme,
    fillers: &BTreeSet<String>,
) -> Vec<Token> {
    chunks(raw)
        .filter_map(|(span, chunk)| {
            let (surface, marked) = scheme.normalize_chunk(chunk)?;
            let class = marked.unwrap_or_else(|| {
                if fillers.contains(&surface) {
                    TokenClass::Filler
                } else {
                    TokenClass::Word
                }
            });
            Some(Token::new(surface, class).with_span(span))
        })
        .collect()
}

/// Writes tokens back as text, marking fillers and fragments with `&-` and
/// `&+` so that re-tokenizing restores the classes.
pub fn render_tokens(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| match t.class {
            TokenClass::Filler => format!("&-{}", t.surface),
            TokenClass::Fragment => format!("&+{}", t.surface),
            TokenClass::Word | TokenClass::HedgeMarker => t.surface.clone(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deletion rules that turn a verbatim transcript into another convention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConventionRuleSet {
    pub policy: PolicyId,
    pub filler_lexicon: BTreeSet<String>,
    pub remove_fillers: bool,
    pub collapse_immediate_repetitions: bool,
    pub remove_fragments: bool,
    pub hedge_lexicon: BTreeSet<String>,
    pub preserve_hedges: bool,
}

impl ConventionRuleSet {
    /// Stock rules for a policy, chosen by its kind. Custom policies default
    /// to the identity.
    pub fn default_for(policy: PolicyId) -> Self {
        let (remove_fillers, collapse, remove_fragments, preserve_hedges) = match policy.kind() {
            PolicyKind::Verbatim | PolicyKind::Custom => (false, false, false, false),
            PolicyKind::Nonverbatim => (true, true, true, false),
            PolicyKind::Legal => (true, false, true, true),
        };
        ConventionRuleSet {
            policy,
            filler_lexicon: default_fillers(),
            remove_fillers,
            collapse_immediate_repetitions: collapse,
            remove_fragments,
            hedge_lexicon: DEFAULT_HEDGES.iter().map(|s| s.to_string()).collect(),
            preserve_hedges,
        }
    }

    pub fn verbatim() -> Self {
        Self::default_for(PolicyId::verbatim())
    }

    pub fn nonverbatim() -> Self {
        Self::default_for(PolicyId::nonverbatim())
    }

    pub fn legal() -> Self {
        Self::default_for(PolicyId::legal())
    }

    pub fn validate(&self) -> Result<(), ConventionError> {
        let invalid = |reason: &str| {
            Err(ConventionError::InvalidRules {
                policy: self.policy.name().to_string(),
                reason: reason.to_string(),
            })
        };
        match self.policy.kind() {
            PolicyKind::Verbatim
                if self.remove_fillers
                    || self.remove_fragments
                    || self.collapse_immediate_repetitions =>
            {
                invalid("verbatim rules must not remove anything")
            }
            PolicyKind::Legal if !self.preserve_hedges => {
                invalid("legal rules must preserve hedges")
            }
            PolicyKind::Legal if !self.remove_fragments => {
                invalid("legal rules must remove fragments")
            }
            _ => Ok(()),
        }
    }

    fn hedge_phrases(&self) -> Vec<Vec<&str>> {
        let mut phrases: Vec<Vec<&str>> = self
            .hedge_lexicon
            .iter()
            .map(|p| p.split_whitespace().collect::<Vec<_>>())
            .filter(|p| !p.is_empty())
            .collect();
        // longest first; ties keep lexicon (sorted) order
        phrases.sort_by_key(|p| std::cmp::Reverse(p.len()));
        phrases
    }

    fn is_filler(&self, token: &Token) -> bool {
        token.class == TokenClass::Filler || self.filler_lexicon.contains(&token.surface)
    }
}

/// Token ranges covered by hedge phrases, matched on surfaces, longest
/// phrase first, scanning left to right without overlap.
pub fn find_hedges(tokens: &[Token], rules: &ConventionRuleSet) -> Vec<Range<usize>> {
    let phrases = rules.hedge_phrases();
    let mut found = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let hit = phrases.iter().find(|p| {
            i + p.len() <= tokens.len()
                && p.iter()
                    .zip(&tokens[i..i + p.len()])
                    .all(|(w, t)| *w == t.surface)
        });
        match hit {
            Some(p) => {
                found.push(i..i + p.len());
                i += p.len();
            }
            None => i += 1,
        }
    }
    found
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Filler,
    Fragment,
    Repetition,
}

/// A token the rule set would delete.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub surface: String,
    pub kind: ViolationKind,
}

fn removal_plan(tokens: &[Token], rules: &ConventionRuleSet) -> Vec<Violation> {
    let mut protected = vec![false; tokens.len()];
    if rules.preserve_hedges {
        for r in find_hedges(tokens, rules) {
            protected[r].iter_mut().for_each(|p| *p = true);
        }
        for (p, t) in protected.iter_mut().zip(tokens) {
            *p |= t.class == TokenClass::HedgeMarker;
        }
    }
    let mut plan = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if protected[i] {
            continue;
        }
        let kind = if rules.remove_fillers && rules.is_filler(t) {
            Some(ViolationKind::Filler)
        } else if rules.remove_fragments && t.class == TokenClass::Fragment {
            Some(ViolationKind::Fragment)
        } else if rules.collapse_immediate_repetitions
            && tokens
                .get(i + 1)
                .is_some_and(|next| next.surface == t.surface)
        {
            Some(ViolationKind::Repetition)
        } else {
            None
        };
        if let Some(kind) = kind {
            plan.push(Violation {
                index: i,
                surface: t.surface.clone(),
                kind,
            });
        }
    }
    plan
}

/// Lints a transcript against a convention: every returned token is one the
/// rules would remove.
pub fn validate_convention(transcript: &Transcript, rules: &ConventionRuleSet) -> Vec<Violation> {
    removal_plan(&transcript.tokens, rules)
}

/// Applies the rule set to a verbatim transcript.
///
/// Deletions are repeated until nothing more is removable, since removing a
/// filler can bring two identical words together.
pub fn derive_convention(
    verbatim: &Transcript,
    rules: &ConventionRuleSet,
) -> Result<Transcript, ConventionError> {
    rules.validate()?;
    if verbatim.policy().map(PolicyId::kind) != Some(PolicyKind::Verbatim) {
        return Err(ConventionError::NotVerbatimSource {
            utterance_id: verbatim.utterance_id.clone(),
        });
    }
    let mut tokens = verbatim.tokens.clone();
    loop {
        let plan = removal_plan(&tokens, rules);
        if plan.is_empty() {
            break;
        }
        let mut drop = plan.iter().map(|v| v.index).peekable();
        let mut idx = 0;
        tokens.retain(|_| {
            let remove = drop.peek() == Some(&idx);
            if remove {
                drop.next();
            }
            idx += 1;
            !remove
        });
    }
    Ok(Transcript::reference(
        verbatim.utterance_id.clone(),
        rules.policy.clone(),
        tokens,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn surfaces(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    fn verbatim(tokens: Vec<Token>) -> Transcript {
        Transcript::reference("u", PolicyId::verbatim(), tokens)
    }

    #[test]
    fn tokenize_marks_fillers() {
        let toks = tokenize("I was, um, going.", &NormalizationScheme::default());
        assert_eq!(surfaces(&toks), ["i", "was", "um", "going"]);
        let classes: Vec<_> = toks.iter().map(|t| t.class).collect();
        assert_eq!(
            classes,
            [
                TokenClass::Word,
                TokenClass::Word,
                TokenClass::Filler,
                TokenClass::Word
            ]
        );
        assert_eq!(toks[1].source_span, Some(2..6));
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("", &NormalizationScheme::default()).is_empty());
        assert!(tokenize("  \t\n ", &NormalizationScheme::default()).is_empty());
        assert!(tokenize(" , . ", &NormalizationScheme::default()).is_empty());
    }

    #[test]
    fn tokenize_markers() {
        let toks = tokenize(
            "I was go-- going &-uhm &+b- banana",
            &NormalizationScheme::default(),
        );
        assert_eq!(
            surfaces(&toks),
            ["i", "was", "go", "going", "uhm", "b", "banana"]
        );
        assert_eq!(toks[2].class, TokenClass::Fragment);
        assert_eq!(toks[4].class, TokenClass::Filler);
        assert_eq!(toks[5].class, TokenClass::Fragment);
    }

    #[test]
    fn numerals_as_written() {
        let s = NormalizationScheme::default();
        assert_eq!(
            surfaces(&tokenize("It cost 3.50, at 10:30.", &s)),
            ["it", "cost", "3.50", "at", "10:30"]
        );
        let none = NormalizationScheme {
            number_style: NumberStyle::None,
            ..s
        };
        assert_eq!(
            surfaces(&tokenize("It cost 3.50.", &none)),
            ["it", "cost", "350"]
        );
    }

    #[test]
    fn keeps_internal_apostrophes_and_hyphens() {
        let toks = tokenize(
            "'It's' a well-known -thing-",
            &NormalizationScheme::default(),
        );
        assert_eq!(surfaces(&toks), ["it's", "a", "well-known", "thing"]);
    }

    #[test]
    fn normalize_without_collapse_keeps_layout() {
        let s = NormalizationScheme {
            collapse_whitespace: false,
            ..NormalizationScheme::default()
        };
        assert_eq!(s.normalize("A,  b\tC."), "a  b\tc");
        assert_eq!(
            NormalizationScheme::default().normalize("A,  b\tC."),
            "a b c"
        );
    }

    #[test]
    fn nonverbatim_removes_fillers() {
        let t = verbatim(tokenize("i was um going", &NormalizationScheme::default()));
        let out = derive_convention(&t, &ConventionRuleSet::nonverbatim()).unwrap();
        assert_eq!(surfaces(&out.tokens), ["i", "was", "going"]);
        assert_eq!(out.policy(), Some(&PolicyId::nonverbatim()));
    }

    #[test]
    fn nonverbatim_collapses_repetitions_exposed_by_filler_removal() {
        let t = verbatim(tokenize(
            "i um i i went &+g- go home",
            &NormalizationScheme::default(),
        ));
        let out = derive_convention(&t, &ConventionRuleSet::nonverbatim()).unwrap();
        assert_eq!(surfaces(&out.tokens), ["i", "went", "go", "home"]);
    }

    #[test]
    fn verbatim_rules_are_identity() {
        let t = verbatim(tokenize(
            "i um i go-- went",
            &NormalizationScheme::default(),
        ));
        let out = derive_convention(&t, &ConventionRuleSet::verbatim()).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn legal_keeps_hedges_drops_fragments() {
        // "I think it was go-- going" → "I think it was going"
        let toks = vec![
            Token::word("i"),
            Token::word("think"),
            Token::word("it"),
            Token::word("was"),
            Token::fragment("go"),
            Token::word("going"),
        ];
        let out = derive_convention(&verbatim(toks), &ConventionRuleSet::legal()).unwrap();
        assert_eq!(surfaces(&out.tokens), ["i", "think", "it", "was", "going"]);
    }

    #[test]
    fn legal_protects_fillers_inside_custom_hedge() {
        let mut rules = ConventionRuleSet::legal();
        rules.hedge_lexicon.insert("um maybe".into());
        let t = verbatim(tokenize("um maybe so uh", &NormalizationScheme::default()));
        let out = derive_convention(&t, &rules).unwrap();
        assert_eq!(surfaces(&out.tokens), ["um", "maybe", "so"]);
    }

    #[test]
    fn hedges_longest_match_first() {
        let mut rules = ConventionRuleSet::legal();
        rules.hedge_lexicon.insert("i think so".into());
        let toks = tokenize("well i think so i think", &NormalizationScheme::default());
        assert_eq!(find_hedges(&toks, &rules), vec![1..4, 4..6]);
    }

    #[test]
    fn rules_violating_kind_rejected() {
        let mut r = ConventionRuleSet::verbatim();
        r.remove_fillers = true;
        assert!(r.validate().is_err());
        let mut r = ConventionRuleSet::legal();
        r.preserve_hedges = false;
        assert!(r.validate().is_err());
        let mut r = ConventionRuleSet::legal();
        r.remove_fragments = false;
        let t = verbatim(vec![Token::word("a")]);
        assert!(matches!(
            derive_convention(&t, &r),
            Err(ConventionError::InvalidRules { .. })
        ));
    }

    #[test]
    fn derive_requires_verbatim_source() {
        let t = Transcript::reference("u", PolicyId::legal(), vec![Token::word("a")]);
        assert!(matches!(
            derive_convention(&t, &ConventionRuleSet::nonverbatim()),
            Err(ConventionError::NotVerbatimSource { .. })
        ));
    }

    #[test]
    fn validate_flags_filler_in_nonverbatim() {
        let t = Transcript::reference(
            "u",
            PolicyId::nonverbatim(),
            tokenize("i was um going", &NormalizationScheme::default()),
        );
        let v = validate_convention(&t, &ConventionRuleSet::nonverbatim());
        assert_eq!(
            v,
            vec![Violation {
                index: 2,
                surface: "um".into(),
                kind: ViolationKind::Filler
            }]
        );
        let vt = verbatim(t.tokens.clone());
        assert!(validate_convention(&vt, &ConventionRuleSet::verbatim()).is_empty());
    }

    fn scheme_strategy() -> impl Strategy<Value = NormalizationScheme> {
        (any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(l, p, c, n)| {
            NormalizationScheme {
                lowercase: l,
                strip_punctuation: p,
                collapse_whitespace: c,
                number_style: if n {
                    NumberStyle::AsWritten
                } else {
                    NumberStyle::None
                },
            }
        })
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(text in "[ a-zA-Z0-9.,:'&+\\-!?]{0,40}", scheme in scheme_strategy()) {
            let once = scheme.normalize(&text);
            prop_assert_eq!(scheme.normalize(&once), once);
        }

        #[test]
        fn tokenize_is_idempotent(text in "[ a-zA-Z0-9.,:'&+\\-]{0,40}", scheme in scheme_strategy()) {
            let toks = tokenize(&text, &scheme);
            for t in &toks {
                prop_assert!(!t.surface.is_empty());
                prop_assert_eq!(t.surface.trim(), t.surface.as_str());
            }
            let plain: Vec<String> = toks.iter().map(|t| t.surface.clone()).collect();
            let again = tokenize(&plain.join(" "), &scheme);
            let again_plain: Vec<String> = again.iter().map(|t| t.surface.clone()).collect();
            prop_assert_eq!(&again_plain, &plain);

            let rendered = tokenize(&render_tokens(&toks), &scheme);
            let strip = |v: &[Token]| v.iter().map(|t| (t.surface.clone(), t.class)).collect::<Vec<_>>();
            prop_assert_eq!(strip(&rendered), strip(&toks));
        }
    }
}

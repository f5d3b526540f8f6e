//! Corpus data model and loaders.
//!
//! A corpus is a set of utterances, each carrying a complete
//! [`ReferenceSet`]: one reference transcript per configured policy. The
//! loaders refuse partial reference sets, duplicate ids, unknown groups and
//! empty references, so everything downstream can assume those hold.

mod chat;
mod loader;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chat::{parse_chat, parse_chat_with, ChatHeader, ParsedChat, DEFAULT_TIER_FILTER};
pub use loader::{load_hypotheses, load_manifest, parse_hypotheses, parse_manifest, HypothesisMap};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}: malformed record: {message}")]
    Record {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("{origin}:{line}: utterance \"{utterance_id}\" has no reference for policy \"{policy}\" (field references.{policy})")]
    MissingPolicy {
        origin: String,
        line: usize,
        utterance_id: String,
        policy: String,
    },
    #[error("{origin}:{line}: utterance \"{utterance_id}\" has an empty reference for policy \"{policy}\" (field references.{policy})")]
    EmptyReference {
        origin: String,
        line: usize,
        utterance_id: String,
        policy: String,
    },
    #[error("{origin}:{line}: duplicate utterance_id \"{utterance_id}\" (first seen on line {first_line})")]
    DuplicateUtterance {
        origin: String,
        line: usize,
        first_line: usize,
        utterance_id: String,
    },
    #[error(
        "{origin}:{line}: unknown group \"{group}\" (field group); configured groups: {known}"
    )]
    UnknownGroup {
        origin: String,
        line: usize,
        group: String,
        known: String,
    },
    #[error("{origin}:{line}: audio_duration_s must be non-negative, got {value}")]
    NegativeDuration {
        origin: String,
        line: usize,
        value: f64,
    },
    #[error("{origin}:{line}: duplicate hypothesis for system \"{system_id}\", utterance \"{utterance_id}\"")]
    DuplicateHypothesis {
        origin: String,
        line: usize,
        system_id: String,
        utterance_id: String,
    },
    #[error("invalid policy set: {0}")]
    InvalidPolicySet(String),
    #[error("group \"{0}\" is not in the configured vocabulary")]
    UnknownPartitionGroup(String),
    #[error("CHAT line {line}: {message}")]
    ChatParse { line: usize, message: String },
}

impl CorpusError {
    pub fn is_io(&self) -> bool {
        matches!(self, CorpusError::Io { .. })
    }
}

/// Speaker group name such as `control` or `nonfluent_aphasia`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupLabel(String);

impl GroupLabel {
    pub fn new(name: impl Into<String>) -> Self {
        GroupLabel(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub const DEFAULT_GROUPS: [&str; 3] = ["control", "fluent_aphasia", "nonfluent_aphasia"];

/// Ordered set of admissible group labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupVocabulary {
    labels: Vec<GroupLabel>,
}

impl GroupVocabulary {
    pub fn new<I, S>(labels: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<GroupLabel> = labels.into_iter().map(|s| GroupLabel::new(s)).collect();
        if labels.is_empty() {
            return Err(CorpusError::InvalidPolicySet(
                "group vocabulary must not be empty".into(),
            ));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.as_str().is_empty() {
                return Err(CorpusError::InvalidPolicySet("empty group label".into()));
            }
            if labels[..i].contains(l) {
                return Err(CorpusError::InvalidPolicySet(format!(
                    "group \"{l}\" listed twice in vocabulary"
                )));
            }
        }
        Ok(GroupVocabulary { labels })
    }

    pub fn labels(&self) -> &[GroupLabel] {
        &self.labels
    }

    pub fn contains(&self, group: &GroupLabel) -> bool {
        self.labels.contains(group)
    }

    pub fn get(&self, name: &str) -> Option<&GroupLabel> {
        self.labels.iter().find(|l| l.as_str() == name)
    }

    fn describe(&self) -> String {
        self.labels
            .iter()
            .map(GroupLabel::as_str)
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl Default for GroupVocabulary {
    fn default() -> Self {
        GroupVocabulary {
            labels: DEFAULT_GROUPS.iter().map(|s| GroupLabel::new(*s)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Verbatim,
    Nonverbatim,
    Legal,
    Custom,
}

impl PolicyKind {
    pub fn canonical_name(self) -> &'static str {
        match self {
            PolicyKind::Verbatim => "verbatim",
            PolicyKind::Nonverbatim => "nonverbatim",
            PolicyKind::Legal => "legal",
            PolicyKind::Custom => "custom",
        }
    }

    fn display_label(self) -> &'static str {
        match self {
            PolicyKind::Verbatim => "verbatim",
            PolicyKind::Nonverbatim => "non-verbatim",
            PolicyKind::Legal => "legal",
            PolicyKind::Custom => "custom",
        }
    }
}

/// A transcription convention.
///
/// `name` is the key used in manifests and configuration; [`PolicyId::label`]
/// is the human-facing form used when a WER value is printed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PolicyId {
    name: String,
    kind: PolicyKind,
}

impl PolicyId {
    pub fn new(name: impl Into<String>, kind: PolicyKind) -> Self {
        PolicyId {
            name: name.into(),
            kind,
        }
    }

    pub fn verbatim() -> Self {
        Self::new("verbatim", PolicyKind::Verbatim)
    }

    pub fn nonverbatim() -> Self {
        Self::new("nonverbatim", PolicyKind::Nonverbatim)
    }

    pub fn legal() -> Self {
        Self::new("legal", PolicyKind::Legal)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    /// `non-verbatim` for the stock non-verbatim policy, otherwise the name.
    pub fn label(&self) -> &str {
        if self.name == self.kind.canonical_name() {
            self.kind.display_label()
        } else {
            &self.name
        }
    }

    /// The three stock conventions in their usual order.
    pub fn standard_set() -> Vec<PolicyId> {
        vec![Self::verbatim(), Self::nonverbatim(), Self::legal()]
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Checks the policy-set invariants: non-empty, names non-empty and unique.
pub fn validate_policy_set(policies: &[PolicyId]) -> Result<(), CorpusError> {
    if policies.is_empty() {
        return Err(CorpusError::InvalidPolicySet(
            "at least one policy is required".into(),
        ));
    }
    for (i, p) in policies.iter().enumerate() {
        if p.name().is_empty() {
            return Err(CorpusError::InvalidPolicySet("empty policy name".into()));
        }
        if policies[..i].iter().any(|q| q.name() == p.name()) {
            return Err(CorpusError::InvalidPolicySet(format!(
                "policy \"{}\" listed twice",
                p.name()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenClass {
    Word,
    Filler,
    Fragment,
    HedgeMarker,
}

/// One normalized word. `source_span` is a byte range into the raw text the
/// token was cut from, when known.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub surface: String,
    pub class: TokenClass,
    pub source_span: Option<Range<usize>>,
}

impl Token {
    pub fn new(surface: impl Into<String>, class: TokenClass) -> Self {
        let surface = surface.into();
        debug_assert!(!surface.is_empty(), "token surface must be non-empty");
        Token {
            surface,
            class,
            source_span: None,
        }
    }

    pub fn word(surface: impl Into<String>) -> Self {
        Self::new(surface, TokenClass::Word)
    }

    pub fn filler(surface: impl Into<String>) -> Self {
        Self::new(surface, TokenClass::Filler)
    }

    pub fn fragment(surface: impl Into<String>) -> Self {
        Self::new(surface, TokenClass::Fragment)
    }

    pub fn with_span(mut self, span: Range<usize>) -> Self {
        self.source_span = Some(span);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TranscriptSource {
    Reference(PolicyId),
    Hypothesis { system_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub utterance_id: String,
    pub source: TranscriptSource,
    pub tokens: Vec<Token>,
}

impl Transcript {
    pub fn reference(
        utterance_id: impl Into<String>,
        policy: PolicyId,
        tokens: Vec<Token>,
    ) -> Self {
        Transcript {
            utterance_id: utterance_id.into(),
            source: TranscriptSource::Reference(policy),
            tokens,
        }
    }

    pub fn hypothesis(
        utterance_id: impl Into<String>,
        system_id: impl Into<String>,
        tokens: Vec<Token>,
    ) -> Self {
        Transcript {
            utterance_id: utterance_id.into(),
            source: TranscriptSource::Hypothesis {
                system_id: system_id.into(),
            },
            tokens,
        }
    }

    pub fn policy(&self) -> Option<&PolicyId> {
        match &self.source {
            TranscriptSource::Reference(p) => Some(p),
            TranscriptSource::Hypothesis { .. } => None,
        }
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// R(x; P): the reference transcript of one utterance under every policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSet {
    utterance_id: String,
    refs: BTreeMap<String, Transcript>,
}

impl ReferenceSet {
    pub fn new(utterance_id: impl Into<String>) -> Self {
        ReferenceSet {
            utterance_id: utterance_id.into(),
            refs: BTreeMap::new(),
        }
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    /// Adds or replaces a reference. Panics if the transcript belongs to
    /// another utterance or is not a reference transcript.
    pub fn insert(&mut self, transcript: Transcript) {
        assert_eq!(
            transcript.utterance_id, self.utterance_id,
            "reference transcript for a different utterance"
        );
        let name = transcript
            .policy()
            .expect("hypothesis transcript inserted into a reference set")
            .name()
            .to_string();
        self.refs.insert(name, transcript);
    }

    pub fn get(&self, policy: &PolicyId) -> Option<&Transcript> {
        self.refs.get(policy.name())
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transcript> {
        self.refs.values()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub utterance_id: String,
    pub speaker_id: String,
    pub group: GroupLabel,
    pub audio_duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub system_id: String,
    pub utterance_id: String,
    pub transcript: Transcript,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub utterance: Utterance,
    pub references: ReferenceSet,
}

/// Utterances with complete reference sets, ordered by utterance id.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    policies: Vec<PolicyId>,
    vocabulary: GroupVocabulary,
    entries: Vec<CorpusEntry>,
}

impl Corpus {
    /// Builds a corpus from already-constructed entries, enforcing the same
    /// invariants as the manifest loader.
    pub fn from_entries(
        policies: Vec<PolicyId>,
        vocabulary: GroupVocabulary,
        mut entries: Vec<CorpusEntry>,
    ) -> Result<Self, CorpusError> {
        validate_policy_set(&policies)?;
        entries.sort_by(|a, b| a.utterance.utterance_id.cmp(&b.utterance.utterance_id));
        for (i, e) in entries.iter().enumerate() {
            let origin = "<memory>".to_string();
            let id = &e.utterance.utterance_id;
            if i > 0 && entries[i - 1].utterance.utterance_id == *id {
                return Err(CorpusError::DuplicateUtterance {
                    origin,
                    line: i + 1,
                    first_line: i,
                    utterance_id: id.clone(),
                });
            }
            if !vocabulary.contains(&e.utterance.group) {
                return Err(CorpusError::UnknownGroup {
                    origin,
                    line: i + 1,
                    group: e.utterance.group.to_string(),
                    known: vocabulary.describe(),
                });
            }
            for p in &policies {
                match e.references.get(p) {
                    None => {
                        return Err(CorpusError::MissingPolicy {
                            origin,
                            line: i + 1,
                            utterance_id: id.clone(),
                            policy: p.name().to_string(),
                        })
                    }
                    Some(t) if t.is_empty() => {
                        return Err(CorpusError::EmptyReference {
                            origin,
                            line: i + 1,
                            utterance_id: id.clone(),
                            policy: p.name().to_string(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(Corpus {
            policies,
            vocabulary,
            entries,
        })
    }

    pub fn policies(&self) -> &[PolicyId] {
        &self.policies
    }

    pub fn vocabulary(&self) -> &GroupVocabulary {
        &self.vocabulary
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, utterance_id: &str) -> Option<&CorpusEntry> {
        self.entries
            .binary_search_by(|e| e.utterance.utterance_id.as_str().cmp(utterance_id))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// D_g: the utterances of one group, in corpus order.
    pub fn partition_by_group(&self, group: &GroupLabel) -> Result<Vec<&CorpusEntry>, CorpusError> {
        if !self.vocabulary.contains(group) {
            return Err(CorpusError::UnknownPartitionGroup(group.to_string()));
        }
        Ok(self
            .entries
            .iter()
            .filter(|e| &e.utterance.group == group)
            .collect())
    }
}

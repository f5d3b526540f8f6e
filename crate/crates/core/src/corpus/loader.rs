//! `manifest.jsonl` and `hypotheses.jsonl` readers.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::Deserialize;

use super::{
    validate_policy_set, Corpus, CorpusEntry, CorpusError, GroupLabel, GroupVocabulary, Hypothesis,
    PolicyId, ReferenceSet, Transcript, Utterance,
};
use crate::textnorm::{tokenize, NormalizationScheme};

/// system_id → utterance_id → hypothesis, both levels sorted.
pub type HypothesisMap = BTreeMap<String, BTreeMap<String, Hypothesis>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRecord {
    utterance_id: String,
    #[serde(default)]
    speaker_id: String,
    group: String,
    #[serde(default)]
    audio_duration_s: Option<f64>,
    references: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HypothesisRecord {
    system_id: String,
    utterance_id: String,
    text: String,
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank lines with 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_record<'de, T: Deserialize<'de>>(
    origin: &str,
    line: usize,
    raw: &'de str,
) -> Result<T, CorpusError> {
    serde_json::from_str(raw).map_err(|e| CorpusError::Record {
        origin: origin.to_string(),
        line,
        message: e.to_string(),
    })
}

pub fn load_manifest(
    path: &Path,
    policies: &[PolicyId],
    scheme: &NormalizationScheme,
    vocabulary: &GroupVocabulary,
) -> Result<Corpus, CorpusError> {
    let text = read(path)?;
    parse_manifest(
        &text,
        &path.display().to_string(),
        policies,
        scheme,
        vocabulary,
    )
}

/// Parses manifest text. `origin` names the source in error messages.
///
/// References for policies outside `policies` are ignored; a record lacking
/// any configured policy is an error.
pub fn parse_manifest(
    text: &str,
    origin: &str,
    policies: &[PolicyId],
    scheme: &NormalizationScheme,
    vocabulary: &GroupVocabulary,
) -> Result<Corpus, CorpusError> {
    validate_policy_set(policies)?;
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut entries = Vec::new();
    for (line, raw) in records(text) {
        let rec: ManifestRecord = parse_record(origin, line, raw)?;
        if let Some(&first_line) = seen.get(&rec.utterance_id) {
            return Err(CorpusError::DuplicateUtterance {
                origin: origin.to_string(),
                line,
                first_line,
                utterance_id: rec.utterance_id,
            });
        }
        seen.insert(rec.utterance_id.clone(), line);
        let group = GroupLabel::new(rec.group);
        if !vocabulary.contains(&group) {
            return Err(CorpusError::UnknownGroup {
                origin: origin.to_string(),
                line,
                group: group.to_string(),
                known: vocabulary.describe(),
            });
        }
        if let Some(d) = rec.audio_duration_s {
            if d.is_nan() || d < 0.0 {
                return Err(CorpusError::NegativeDuration {
                    origin: origin.to_string(),
                    line,
                    value: d,
                });
            }
        }
        let mut refs = ReferenceSet::new(rec.utterance_id.clone());
        for policy in policies {
            let raw_ref =
                rec.references
                    .get(policy.name())
                    .ok_or_else(|| CorpusError::MissingPolicy {
                        origin: origin.to_string(),
                        line,
                        utterance_id: rec.utterance_id.clone(),
                        policy: policy.name().to_string(),
                    })?;
            let tokens = tokenize(raw_ref, scheme);
            if tokens.is_empty() {
                return Err(CorpusError::EmptyReference {
                    origin: origin.to_string(),
                    line,
                    utterance_id: rec.utterance_id.clone(),
                    policy: policy.name().to_string(),
                });
            }
            refs.insert(Transcript::reference(
                rec.utterance_id.clone(),
                policy.clone(),
                tokens,
            ));
        }
        entries.push(CorpusEntry {
            utterance: Utterance {
                utterance_id: rec.utterance_id,
                speaker_id: rec.speaker_id,
                group,
                audio_duration_s: rec.audio_duration_s,
            },
            references: refs,
        });
    }
    entries.sort_by(|a, b| a.utterance.utterance_id.cmp(&b.utterance.utterance_id));
    Ok(Corpus {
        policies: policies.to_vec(),
        vocabulary: vocabulary.clone(),
        entries,
    })
}

pub fn load_hypotheses(
    path: &Path,
    scheme: &NormalizationScheme,
) -> Result<HypothesisMap, CorpusError> {
    let text = read(path)?;
    parse_hypotheses(&text, &path.display().to_string(), scheme)
}

/// Parses hypothesis text. Empty `text` gives a zero-token transcript.
pub fn parse_hypotheses(
    text: &str,
    origin: &str,
    scheme: &NormalizationScheme,
) -> Result<HypothesisMap, CorpusError> {
    let mut out: HypothesisMap = BTreeMap::new();
    for (line, raw) in records(text) {
        let rec: HypothesisRecord = parse_record(origin, line, raw)?;
        let by_utt = out.entry(rec.system_id.clone()).or_default();
        match by_utt.entry(rec.utterance_id.clone()) {
            Entry::Occupied(_) => {
                return Err(CorpusError::DuplicateHypothesis {
                    origin: origin.to_string(),
                    line,
                    system_id: rec.system_id,
                    utterance_id: rec.utterance_id,
                })
            }
            Entry::Vacant(slot) => {
                let tokens = tokenize(&rec.text, scheme);
                slot.insert(Hypothesis {
                    transcript: Transcript::hypothesis(&rec.utterance_id, &rec.system_id, tokens),
                    system_id: rec.system_id,
                    utterance_id: rec.utterance_id,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Corpus, CorpusError> {
        parse_manifest(
            text,
            "manifest.jsonl",
            &PolicyId::standard_set(),
            &NormalizationScheme::default(),
            &GroupVocabulary::default(),
        )
    }

    const ONE: &str = r#"{"utterance_id":"utt-1","speaker_id":"s1","group":"control","references":{"verbatim":"I was um going","nonverbatim":"I was going","legal":"I was going"}}"#;

    #[test]
    fn empty_manifest() {
        assert_eq!(load("").unwrap().len(), 0);
        assert_eq!(load("\n\n").unwrap().len(), 0);
    }

    #[test]
    fn one_complete_record() {
        let c = load(ONE).unwrap();
        assert_eq!(c.len(), 1);
        let refs = &c.entries()[0].references;
        assert_eq!(refs.len(), 3);
        assert_eq!(
            refs.get(&PolicyId::verbatim()).unwrap().surfaces(),
            ["i", "was", "um", "going"]
        );
    }

    #[test]
    fn missing_policy_names_utterance_and_policy() {
        let rec = r#"{"utterance_id":"utt-1","group":"control","references":{"verbatim":"a","nonverbatim":"a"}}"#;
        match load(rec).unwrap_err() {
            CorpusError::MissingPolicy {
                utterance_id,
                policy,
                line,
                ..
            } => {
                assert_eq!(utterance_id, "utt-1");
                assert_eq!(policy, "legal");
                assert_eq!(line, 1);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn duplicate_utterance_rejected() {
        let text = format!("{ONE}\n{ONE}\n");
        assert!(matches!(
            load(&text).unwrap_err(),
            CorpusError::DuplicateUtterance {
                line: 2,
                first_line: 1,
                ..
            }
        ));
    }

    #[test]
    fn unknown_group_rejected() {
        let rec = ONE.replace("\"control\"", "\"toddler\"");
        assert!(matches!(
            load(&rec).unwrap_err(),
            CorpusError::UnknownGroup { .. }
        ));
    }

    #[test]
    fn empty_reference_rejected() {
        let rec = ONE.replace("\"I was going\",\"legal\"", "\" ,. \",\"legal\"");
        assert!(matches!(
            load(&rec).unwrap_err(),
            CorpusError::EmptyReference { ref policy, .. } if policy == "nonverbatim"
        ));
    }

    #[test]
    fn negative_duration_rejected() {
        let rec = ONE.replace("\"group\"", "\"audio_duration_s\":-1.0,\"group\"");
        assert!(matches!(
            load(&rec).unwrap_err(),
            CorpusError::NegativeDuration { .. }
        ));
    }

    #[test]
    fn unknown_field_rejected() {
        let rec = ONE.replace("\"group\"", "\"grup\":\"x\",\"group\"");
        assert!(matches!(
            load(&rec).unwrap_err(),
            CorpusError::Record { .. }
        ));
    }

    #[test]
    fn iteration_sorted_and_deterministic() {
        let b = ONE.replace("utt-1", "utt-0");
        let text = format!("{ONE}\n{b}\n");
        let c1 = load(&text).unwrap();
        let c2 = load(&text).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(c1.entries()[0].utterance.utterance_id, "utt-0");
    }

    #[test]
    fn hypotheses_grouped_by_system() {
        let text = r#"
{"system_id":"revv2","utterance_id":"utt-1","text":"i was going"}
{"system_id":"revv2","utterance_id":"utt-2","text":""}
{"system_id":"whisper","utterance_id":"utt-1","text":"I was going."}
{"system_id":"whisper","utterance_id":"utt-2","text":"hello"}
"#;
        let h = parse_hypotheses(text, "h", &NormalizationScheme::default()).unwrap();
        assert_eq!(h.len(), 2);
        assert!(h.values().all(|m| m.len() == 2));
        assert_eq!(h["revv2"]["utt-2"].transcript.len(), 0);
    }

    #[test]
    fn duplicate_hypothesis_rejected() {
        let text = r#"{"system_id":"revv2","utterance_id":"utt-1","text":"a"}
{"system_id":"revv2","utterance_id":"utt-1","text":"b"}"#;
        assert!(matches!(
            parse_hypotheses(text, "h", &NormalizationScheme::default()).unwrap_err(),
            CorpusError::DuplicateHypothesis { line: 2, .. }
        ));
    }
}

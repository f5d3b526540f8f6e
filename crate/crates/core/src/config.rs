//! Run configuration, read from a TOML file.
//!
//! Unknown keys anywhere in the file are errors. The shipped default lives
//! in `config/default.toml` and documents every key.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    validate_policy_set, GroupLabel, GroupVocabulary, PolicyId, PolicyKind, DEFAULT_GROUPS,
    DEFAULT_TIER_FILTER,
};
use crate::metrics::EidMode;
use crate::report::OutputFormat;
use crate::textnorm::{ConventionRuleSet, NormalizationScheme};

/// Text of the shipped default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}: {message}")]
    Invalid { origin: String, message: String },
}

impl ConfigError {
    pub fn is_io(&self) -> bool {
        matches!(self, ConfigError::Io { .. })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    policy: Vec<RawPolicy>,
    enforced_policy: Option<String>,
    eid_mode: Option<EidMode>,
    baseline_group: Option<String>,
    group_vocabulary: Option<Vec<String>>,
    community_policy: Option<BTreeMap<String, String>>,
    formats: Option<Vec<OutputFormat>>,
    #[serde(default)]
    normalization: NormalizationScheme,
    #[serde(default)]
    chat: RawChat,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    name: String,
    kind: PolicyKind,
    #[serde(default)]
    rules: RawRules,
}

/// Overrides on top of the stock rules for the policy's kind.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRules {
    filler_lexicon: Option<Vec<String>>,
    remove_fillers: Option<bool>,
    collapse_immediate_repetitions: Option<bool>,
    remove_fragments: Option<bool>,
    hedge_lexicon: Option<Vec<String>>,
    preserve_hedges: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChat {
    tier_filter: Option<Vec<String>>,
    #[serde(default)]
    group_codes: BTreeMap<String, String>,
    #[serde(default)]
    files: BTreeMap<String, String>,
}

/// Settings for `chat-import`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatSettings {
    pub tier_filter: BTreeSet<String>,
    /// `@ID` group field → group label.
    pub group_codes: BTreeMap<String, GroupLabel>,
    /// File stem → group label; wins over `group_codes`.
    pub files: BTreeMap<String, GroupLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    /// Ordered; the order breaks best-policy ties.
    pub policies: Vec<PolicyId>,
    pub enforced_policy: PolicyId,
    pub eid_mode: EidMode,
    /// Group every other group is contrasted with in ΔEID and fairness gaps.
    pub baseline_group: GroupLabel,
    pub vocabulary: GroupVocabulary,
    pub community_policy: BTreeMap<GroupLabel, PolicyId>,
    pub normalization: NormalizationScheme,
    /// One per policy, same order as `policies`.
    pub rules: Vec<ConventionRuleSet>,
    pub formats: Vec<OutputFormat>,
    pub chat: ChatSettings,
    /// SHA-256 of the configuration bytes, hex encoded.
    pub digest: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::parse(DEFAULT_CONFIG, "default config").expect("shipped default config is valid")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })?;
        let invalid = |message: String| ConfigError::Invalid {
            origin: origin.to_string(),
            message,
        };

        let policies: Vec<PolicyId> = if raw.policy.is_empty() {
            PolicyId::standard_set()
        } else {
            raw.policy
                .iter()
                .map(|p| PolicyId::new(&p.name, p.kind))
                .collect()
        };
        validate_policy_set(&policies).map_err(|e| invalid(e.to_string()))?;
        let lookup = |name: &str, what: &str| {
            policies
                .iter()
                .find(|p| p.name() == name)
                .cloned()
                .ok_or_else(|| invalid(format!("{what} \"{name}\" is not a configured policy")))
        };

        let rules = if raw.policy.is_empty() {
            policies
                .iter()
                .cloned()
                .map(ConventionRuleSet::default_for)
                .collect()
        } else {
            raw.policy
                .iter()
                .zip(&policies)
                .map(|(rp, id)| {
                    build_rules(id.clone(), &rp.rules).map_err(|e| invalid(e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?
        };

        let enforced_policy = lookup(
            raw.enforced_policy.as_deref().unwrap_or("nonverbatim"),
            "enforced_policy",
        )?;

        let vocabulary = match &raw.group_vocabulary {
            Some(labels) => GroupVocabulary::new(labels).map_err(|e| invalid(e.to_string()))?,
            None => GroupVocabulary::new(DEFAULT_GROUPS).expect("default groups"),
        };
        let group = |name: &str, what: &str| {
            vocabulary
                .get(name)
                .cloned()
                .ok_or_else(|| invalid(format!("{what} \"{name}\" is not in group_vocabulary")))
        };

        let baseline_group = match &raw.baseline_group {
            Some(g) => group(g, "baseline_group")?,
            None => vocabulary
                .get("control")
                .or_else(|| vocabulary.labels().first())
                .cloned()
                .ok_or_else(|| invalid("group_vocabulary is empty".into()))?,
        };

        let community_policy = match &raw.community_policy {
            Some(map) => {
                let mut out = BTreeMap::new();
                for (g, p) in map {
                    out.insert(
                        group(g, "community_policy group")?,
                        lookup(p, "community policy")?,
                    );
                }
                for g in vocabulary.labels() {
                    out.entry(g.clone())
                        .or_insert_with(|| enforced_policy.clone());
                }
                out
            }
            None => {
                let verbatim = policies.iter().find(|p| p.kind() == PolicyKind::Verbatim);
                vocabulary
                    .labels()
                    .iter()
                    .map(|g| {
                        let p = match verbatim {
                            Some(v) if g.as_str().contains("aphasia") => v.clone(),
                            _ => enforced_policy.clone(),
                        };
                        (g.clone(), p)
                    })
                    .collect()
            }
        };

        let chat = ChatSettings {
            tier_filter: raw
                .chat
                .tier_filter
                .map(|v| v.into_iter().collect())
                .unwrap_or_else(|| DEFAULT_TIER_FILTER.iter().map(|s| s.to_string()).collect()),
            group_codes: raw
                .chat
                .group_codes
                .iter()
                .map(|(code, g)| Ok((code.clone(), group(g, "chat.group_codes value")?)))
                .collect::<Result<_, ConfigError>>()?,
            files: raw
                .chat
                .files
                .iter()
                .map(|(stem, g)| Ok((stem.clone(), group(g, "chat.files value")?)))
                .collect::<Result<_, ConfigError>>()?,
        };

        let mut formats = raw.formats.unwrap_or_else(|| vec![OutputFormat::Csv]);
        formats.dedup();

        Ok(RunConfig {
            policies,
            enforced_policy,
            eid_mode: raw.eid_mode.unwrap_or_default(),
            baseline_group,
            vocabulary,
            community_policy,
            normalization: raw.normalization,
            rules,
            formats,
            chat,
            digest: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn policy(&self, name: &str) -> Option<&PolicyId> {
        self.policies.iter().find(|p| p.name() == name)
    }

    pub fn rules_for(&self, policy: &PolicyId) -> Option<&ConventionRuleSet> {
        self.policies
            .iter()
            .position(|p| p == policy)
            .map(|i| &self.rules[i])
    }

    pub fn community_for(&self, group: &GroupLabel) -> &PolicyId {
        self.community_policy
            .get(group)
            .unwrap_or(&self.enforced_policy)
    }
}

fn build_rules(
    policy: PolicyId,
    raw: &RawRules,
) -> Result<ConventionRuleSet, crate::textnorm::ConventionError> {
    let mut r = ConventionRuleSet::default_for(policy);
    if let Some(v) = &raw.filler_lexicon {
        r.filler_lexicon = v.iter().map(|s| s.to_lowercase()).collect();
    }
    if let Some(v) = &raw.hedge_lexicon {
        r.hedge_lexicon = v.iter().map(|s| s.to_lowercase()).collect();
    }
    r.remove_fillers = raw.remove_fillers.unwrap_or(r.remove_fillers);
    r.collapse_immediate_repetitions = raw
        .collapse_immediate_repetitions
        .unwrap_or(r.collapse_immediate_repetitions);
    r.remove_fragments = raw.remove_fragments.unwrap_or(r.remove_fragments);
    r.preserve_hedges = raw.preserve_hedges.unwrap_or(r.preserve_hedges);
    r.validate()?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_parses() {
        let c = RunConfig::default();
        assert_eq!(c.policies, PolicyId::standard_set());
        assert_eq!(c.enforced_policy, PolicyId::nonverbatim());
        assert_eq!(c.eid_mode, EidMode::Aggregate);
        assert_eq!(c.baseline_group.as_str(), "control");
        assert_eq!(
            c.community_for(&GroupLabel::new("fluent_aphasia")),
            &PolicyId::verbatim()
        );
        assert_eq!(
            c.community_for(&GroupLabel::new("control")),
            &PolicyId::nonverbatim()
        );
        assert!(c.chat.tier_filter.contains("PAR"));
        assert_eq!(c.digest.len(), 64);
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("", "empty").unwrap();
        assert_eq!(c.policies.len(), 3);
        assert_eq!(
            c.community_for(&GroupLabel::new("nonfluent_aphasia")),
            &PolicyId::verbatim()
        );
        assert_eq!(c.formats, vec![OutputFormat::Csv]);
    }

    #[test]
    fn unknown_key_is_error() {
        let e = RunConfig::parse("enforced_polcy = \"verbatim\"", "c.toml").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { .. }));
        let e = RunConfig::parse("[normalization]\nlowercase = true\nstem = true\n", "c.toml")
            .unwrap_err();
        assert!(matches!(e, ConfigError::Parse { .. }));
    }

    #[test]
    fn enforced_must_be_in_set() {
        let text = "enforced_policy = \"medical\"\n";
        assert!(matches!(
            RunConfig::parse(text, "c").unwrap_err(),
            ConfigError::Invalid { .. }
        ));
    }

    #[test]
    fn community_policy_must_be_in_set() {
        let text = "[community_policy]\ncontrol = \"medical\"\n";
        assert!(RunConfig::parse(text, "c").is_err());
    }

    #[test]
    fn rules_violating_kind_rejected() {
        let text = r#"
[[policy]]
name = "verbatim"
kind = "verbatim"
[policy.rules]
remove_fillers = true
"#;
        assert!(RunConfig::parse(text, "c").is_err());
        let text = r#"
enforced_policy = "court"
[[policy]]
name = "court"
kind = "legal"
[policy.rules]
preserve_hedges = false
"#;
        assert!(RunConfig::parse(text, "c").is_err());
    }

    #[test]
    fn custom_policies_and_overrides() {
        let text = r#"
enforced_policy = "clean"
eid_mode = "per_utterance"
[[policy]]
name = "verbatim"
kind = "verbatim"
[[policy]]
name = "clean"
kind = "nonverbatim"
[policy.rules]
filler_lexicon = ["UM", "like"]
collapse_immediate_repetitions = false
"#;
        let c = RunConfig::parse(text, "c").unwrap();
        let clean = c.policy("clean").unwrap().clone();
        let r = c.rules_for(&clean).unwrap();
        assert!(r.filler_lexicon.contains("um") && r.filler_lexicon.contains("like"));
        assert!(!r.collapse_immediate_repetitions);
        assert_eq!(c.eid_mode, EidMode::PerUtterance);
    }

    #[test]
    fn digest_tracks_bytes() {
        let a = RunConfig::parse("", "a").unwrap();
        let b = RunConfig::parse("\n", "b").unwrap();
        assert_ne!(a.digest, b.digest);
    }
}

//! Group-level aggregates and the EID family of metrics.
//!
//! Every expectation over a group is an utterance average: each utterance
//! contributes its own WER with equal weight, whatever its length.
//!
//! EID comes in two modes that differ in general:
//!
//! * [`EidMode::PerUtterance`]: mean over utterances of
//!   `WER(enforced) - min_p WER(p)`, the minimum taken per utterance;
//! * [`EidMode::Aggregate`]: `mean WER(enforced) - min_p mean WER(p)`, the
//!   minimum taken over group means.
//!
//! The per-utterance value is never smaller. Published group tables can only
//! be reproduced in aggregate mode, which is why it is the default.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{
    align, align_unchecked, operation_rates, wer, AlignError, Alignment, EditKind, EditOp,
};
use crate::corpus::{CorpusEntry, GroupLabel, Hypothesis, PolicyId, ReferenceSet, Transcript};
use crate::rational::{mean, Rate};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("group \"{group}\" has no utterances; its expectation is undefined")]
    EmptyGroup { group: String },
    #[error("enforced policy \"{0}\" is not in the policy set")]
    UnknownEnforcedPolicy(String),
    #[error("policy \"{0}\" is not in the policy set")]
    UnknownPolicy(String),
    #[error("per-policy score columns cover different utterance counts")]
    RaggedScores,
    #[error("cannot compare {what}: {left} vs {right}")]
    Mismatch {
        what: &'static str,
        left: String,
        right: String,
    },
    #[error("utterance \"{utterance_id}\" lacks a reference for policy \"{policy}\"")]
    MissingReference {
        utterance_id: String,
        policy: String,
    },
    #[error("WER-Set is empty")]
    EmptyWerSet,
    #[error("{0}")]
    Align(#[from] AlignError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EidMode {
    PerUtterance,
    #[default]
    Aggregate,
}

impl EidMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EidMode::PerUtterance => "per_utterance",
            EidMode::Aggregate => "aggregate",
        }
    }
}

impl fmt::Display for EidMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Utterance-averaged WER and operation rates of one system on one group
/// under one policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPolicyWer {
    pub system_id: String,
    pub group: GroupLabel,
    pub policy: PolicyId,
    pub n_utterances: usize,
    pub mean_wer: Rate,
    pub mean_ins: Rate,
    pub mean_del: Rate,
    pub mean_sub: Rate,
}

pub fn group_wer(
    system_id: &str,
    group: &GroupLabel,
    policy: &PolicyId,
    alignments: &[&Alignment],
) -> Result<GroupPolicyWer, MetricsError> {
    let empty = || MetricsError::EmptyGroup {
        group: group.to_string(),
    };
    let wers: Vec<Rate> = alignments.iter().map(|a| wer(a)).collect();
    let rates: Vec<_> = alignments.iter().map(|a| operation_rates(a)).collect();
    let ins: Vec<Rate> = rates.iter().map(|r| r.insertion.clone()).collect();
    let del: Vec<Rate> = rates.iter().map(|r| r.deletion.clone()).collect();
    let sub: Vec<Rate> = rates.iter().map(|r| r.substitution.clone()).collect();
    Ok(GroupPolicyWer {
        system_id: system_id.to_string(),
        group: group.clone(),
        policy: policy.clone(),
        n_utterances: alignments.len(),
        mean_wer: mean(&wers).ok_or_else(empty)?,
        mean_ins: mean(&ins).ok_or_else(empty)?,
        mean_del: mean(&del).ok_or_else(empty)?,
        mean_sub: mean(&sub).ok_or_else(empty)?,
    })
}

/// Token-weighted WER over concatenated utterances, Σ errors / Σ N. Kept
/// for comparison with the utterance average; the metric suite never uses
/// it.
pub fn pooled_wer(alignments: &[&Alignment]) -> Option<Rate> {
    let errors: usize = alignments.iter().map(|a| a.errors()).sum();
    let n: usize = alignments.iter().map(|a| a.ref_len).sum();
    (n > 0).then(|| crate::rational::ratio(errors, n))
}

/// Per-utterance WER columns, one per policy, over a shared utterance list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyScores {
    policies: Vec<PolicyId>,
    columns: Vec<Vec<Rate>>,
}

impl PolicyScores {
    pub fn new(columns: Vec<(PolicyId, Vec<Rate>)>) -> Result<Self, MetricsError> {
        let n = columns.first().map(|(_, c)| c.len()).unwrap_or(0);
        if columns.iter().any(|(_, c)| c.len() != n) {
            return Err(MetricsError::RaggedScores);
        }
        let (policies, columns) = columns.into_iter().unzip();
        Ok(PolicyScores { policies, columns })
    }

    pub fn policies(&self) -> &[PolicyId] {
        &self.policies
    }

    pub fn n_utterances(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, policy: &PolicyId) -> Option<&[Rate]> {
        self.position(policy).map(|i| self.columns[i].as_slice())
    }

    fn position(&self, policy: &PolicyId) -> Option<usize> {
        self.policies.iter().position(|p| p == policy)
    }

    /// Utterance-averaged WER per policy, in policy order.
    pub fn means(&self) -> Option<Vec<(PolicyId, Rate)>> {
        self.policies
            .iter()
            .zip(&self.columns)
            .map(|(p, c)| mean(c).map(|m| (p.clone(), m)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EidResult {
    pub system_id: String,
    pub group: GroupLabel,
    pub enforced_policy: PolicyId,
    pub eid: Rate,
    pub best_policy: PolicyId,
    pub mode: EidMode,
    /// Aggregate mode only: best-case and enforced group means.
    pub best_case_wer: Option<Rate>,
    pub enforced_wer: Option<Rate>,
}

/// First index holding the minimum value.
fn argmin<'a>(values: impl IntoIterator<Item = &'a Rate>) -> Option<(usize, &'a Rate)> {
    let mut best: Option<(usize, &Rate)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best
}

pub fn eid(
    system_id: &str,
    group: &GroupLabel,
    scores: &PolicyScores,
    enforced: &PolicyId,
    mode: EidMode,
) -> Result<EidResult, MetricsError> {
    let enforced_idx = scores
        .position(enforced)
        .ok_or_else(|| MetricsError::UnknownEnforcedPolicy(enforced.name().to_string()))?;
    let n = scores.n_utterances();
    if n == 0 || scores.policies.is_empty() {
        return Err(MetricsError::EmptyGroup {
            group: group.to_string(),
        });
    }
    match mode {
        EidMode::Aggregate => {
            let means = scores.means().expect("non-empty columns");
            eid_from_means(system_id, group, &means, enforced)
        }
        EidMode::PerUtterance => {
            let mut wins = vec![0usize; scores.policies.len()];
            let mut diffs = Vec::with_capacity(n);
            for u in 0..n {
                let (best, min) = argmin(scores.columns.iter().map(|c| &c[u])).expect("policies");
                wins[best] += 1;
                diffs.push(&scores.columns[enforced_idx][u] - min);
            }
            // most frequent per-utterance winner; ties go to policy order
            let best = (0..wins.len())
                .max_by(|&a, &b| wins[a].cmp(&wins[b]).then(b.cmp(&a)))
                .expect("policies");
            Ok(EidResult {
                system_id: system_id.to_string(),
                group: group.clone(),
                enforced_policy: enforced.clone(),
                eid: mean(&diffs).expect("n > 0"),
                best_policy: scores.policies[best].clone(),
                mode,
                best_case_wer: None,
                enforced_wer: None,
            })
        }
    }
}

/// Aggregate-mode EID from group means, e.g. values read off a results
/// table.
pub fn eid_from_means(
    system_id: &str,
    group: &GroupLabel,
    means: &[(PolicyId, Rate)],
    enforced: &PolicyId,
) -> Result<EidResult, MetricsError> {
    let enforced_wer = means
        .iter()
        .find(|(p, _)| p == enforced)
        .map(|(_, v)| v.clone())
        .ok_or_else(|| MetricsError::UnknownEnforcedPolicy(enforced.name().to_string()))?;
    let (best, min) = argmin(means.iter().map(|(_, v)| v)).expect("enforced present");
    Ok(EidResult {
        system_id: system_id.to_string(),
        group: group.clone(),
        enforced_policy: enforced.clone(),
        eid: &enforced_wer - min,
        best_policy: means[best].0.clone(),
        mode: EidMode::Aggregate,
        best_case_wer: Some(min.clone()),
        enforced_wer: Some(enforced_wer),
    })
}

/// ΔEID(g, g′) = EID_g − EID_g′, for the same system, enforced policy and
/// mode.
pub fn delta_eid(g: &EidResult, g_prime: &EidResult) -> Result<Rate, MetricsError> {
    let mismatch = |what, l: &dyn fmt::Display, r: &dyn fmt::Display| MetricsError::Mismatch {
        what,
        left: l.to_string(),
        right: r.to_string(),
    };
    if g.system_id != g_prime.system_id {
        return Err(mismatch("systems", &g.system_id, &g_prime.system_id));
    }
    if g.enforced_policy != g_prime.enforced_policy {
        return Err(mismatch(
            "enforced policies",
            &g.enforced_policy,
            &g_prime.enforced_policy,
        ));
    }
    if g.mode != g_prime.mode {
        return Err(mismatch("EID modes", &g.mode, &g_prime.mode));
    }
    Ok(&g.eid - &g_prime.eid)
}

/// Difference of group mean WER under one system and policy.
pub fn fairness_gap(a: &GroupPolicyWer, b: &GroupPolicyWer) -> Result<Rate, MetricsError> {
    if a.system_id != b.system_id {
        return Err(MetricsError::Mismatch {
            what: "systems",
            left: a.system_id.clone(),
            right: b.system_id.clone(),
        });
    }
    if a.policy != b.policy {
        return Err(MetricsError::Mismatch {
            what: "policies",
            left: a.policy.to_string(),
            right: b.policy.to_string(),
        });
    }
    Ok(&a.mean_wer - &b.mean_wer)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapResult {
    pub group: GroupLabel,
    pub dominant_policy: PolicyId,
    pub community_policy: PolicyId,
    pub n_utterances: usize,
    pub gap: Rate,
}

/// Utterance-averaged WER of the community reference scored against the
/// dominant reference (the dominant transcript supplies N).
pub fn hermeneutical_gap(
    group: &GroupLabel,
    refs: &[&ReferenceSet],
    dominant: &PolicyId,
    community: &PolicyId,
) -> Result<GapResult, MetricsError> {
    fn fetch<'a>(r: &'a ReferenceSet, p: &PolicyId) -> Result<&'a Transcript, MetricsError> {
        r.get(p).ok_or_else(|| MetricsError::MissingReference {
            utterance_id: r.utterance_id().to_string(),
            policy: p.name().to_string(),
        })
    }
    let mut values = Vec::with_capacity(refs.len());
    for r in refs {
        let dom = fetch(r, dominant)?;
        let com = fetch(r, community)?;
        values.push(wer(&align(&com.tokens, &dom.tokens)?));
    }
    Ok(GapResult {
        group: group.clone(),
        dominant_policy: dominant.clone(),
        community_policy: community.clone(),
        n_utterances: refs.len(),
        gap: mean(&values).ok_or_else(|| MetricsError::EmptyGroup {
            group: group.to_string(),
        })?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum RangeScope {
    System(String),
    SystemGroup(String, GroupLabel),
}

impl RangeScope {
    pub fn system_id(&self) -> &str {
        match self {
            RangeScope::System(s) | RangeScope::SystemGroup(s, _) => s,
        }
    }

    pub fn group(&self) -> Option<&GroupLabel> {
        match self {
            RangeScope::System(_) => None,
            RangeScope::SystemGroup(_, g) => Some(g),
        }
    }
}

/// WER-Set with its range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeResult {
    pub scope: RangeScope,
    pub wer_set: Vec<(PolicyId, Rate)>,
    pub range_min: Rate,
    pub range_max: Rate,
    pub min_policy: PolicyId,
    pub max_policy: PolicyId,
    pub width: Rate,
}

pub fn wer_range(
    scope: RangeScope,
    wer_set: Vec<(PolicyId, Rate)>,
) -> Result<RangeResult, MetricsError> {
    let (lo, _) = argmin(wer_set.iter().map(|(_, v)| v)).ok_or(MetricsError::EmptyWerSet)?;
    let mut hi = 0;
    for (i, (_, v)) in wer_set.iter().enumerate() {
        if *v > wer_set[hi].1 {
            hi = i;
        }
    }
    let range_min = wer_set[lo].1.clone();
    let range_max = wer_set[hi].1.clone();
    Ok(RangeResult {
        scope,
        min_policy: wer_set[lo].0.clone(),
        max_policy: wer_set[hi].0.clone(),
        width: &range_max - &range_min,
        range_min,
        range_max,
        wer_set,
    })
}

/// Distances between two references of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterReferenceDistance {
    /// `ref_a` scored as a hypothesis against `ref_b`.
    pub direct: Alignment,
    /// The same pair with the correspondence routed through an anchor.
    pub anchored: Option<Alignment>,
}

impl InterReferenceDistance {
    pub fn direct_wer(&self) -> Rate {
        wer(&self.direct)
    }

    pub fn anchored_wer(&self) -> Option<Rate> {
        self.anchored.as_ref().map(wer)
    }
}

/// Direct and (optionally) anchor-mediated distance from `ref_a` to `ref_b`,
/// with `ref_b` supplying the denominator.
///
/// Anchored composition: the anchor is aligned to each reference; every
/// anchor token paired (matched or substituted) in both alignments pairs one
/// token of `ref_a` with one of `ref_b`, counted as a match when the two
/// surfaces agree and as a substitution otherwise. Stretches between
/// consecutive pairings are aligned directly. With no usable pairings this
/// reduces to the direct alignment.
pub fn inter_reference_distance(
    ref_a: &Transcript,
    ref_b: &Transcript,
    anchor: Option<&Hypothesis>,
) -> Result<InterReferenceDistance, MetricsError> {
    if ref_a.utterance_id != ref_b.utterance_id {
        return Err(MetricsError::Mismatch {
            what: "utterances",
            left: ref_a.utterance_id.clone(),
            right: ref_b.utterance_id.clone(),
        });
    }
    if let Some(h) = anchor {
        if h.utterance_id != ref_b.utterance_id {
            return Err(MetricsError::Mismatch {
                what: "anchor utterance",
                left: h.utterance_id.clone(),
                right: ref_b.utterance_id.clone(),
            });
        }
    }
    let direct = align(&ref_a.tokens, &ref_b.tokens)?;
    let anchored = anchor.map(|h| anchored_alignment(&h.transcript, ref_a, ref_b));
    Ok(InterReferenceDistance { direct, anchored })
}

fn anchored_alignment(anchor: &Transcript, ref_a: &Transcript, ref_b: &Transcript) -> Alignment {
    fn surf(t: &Transcript) -> Vec<&str> {
        t.tokens.iter().map(|x| x.surface.as_str()).collect()
    }
    let (h, a, b) = (surf(anchor), surf(ref_a), surf(ref_b));
    let paired = |target: &[&str]| {
        let mut to = vec![None; h.len()];
        for op in align_unchecked(&h, target).ops {
            if let (Some(hi), Some(ri)) = (op.hyp_index, op.ref_index) {
                to[hi] = Some(ri);
            }
        }
        to
    };
    let via_a = paired(&a);
    let via_b = paired(&b);
    let pairs: Vec<(usize, usize)> = via_a
        .iter()
        .zip(&via_b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();

    let mut ops: Vec<EditOp> = Vec::with_capacity(a.len().max(b.len()));
    let fill_gap =
        |ops: &mut Vec<EditOp>, a_from: usize, a_to: usize, b_from: usize, b_to: usize| {
            for op in align_unchecked(&a[a_from..a_to], &b[b_from..b_to]).ops {
                ops.push(EditOp {
                    kind: op.kind,
                    hyp_index: op.hyp_index.map(|i| i + a_from),
                    ref_index: op.ref_index.map(|i| i + b_from),
                });
            }
        };
    let (mut next_a, mut next_b) = (0, 0);
    for (ai, bi) in pairs {
        fill_gap(&mut ops, next_a, ai, next_b, bi);
        ops.push(EditOp {
            kind: if a[ai] == b[bi] {
                EditKind::Match
            } else {
                EditKind::Substitute
            },
            hyp_index: Some(ai),
            ref_index: Some(bi),
        });
        next_a = ai + 1;
        next_b = bi + 1;
    }
    fill_gap(&mut ops, next_a, a.len(), next_b, b.len());
    Alignment::from_ops(ops, a.len(), b.len())
}

/// Per-utterance alignments of one hypothesis against every policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceScore {
    pub utterance_id: String,
    pub group: GroupLabel,
    /// In the order of the `policies` argument to [`score_utterance`].
    pub alignments: Vec<Alignment>,
}

pub fn score_utterance(
    entry: &CorpusEntry,
    hypothesis: &Transcript,
    policies: &[PolicyId],
) -> Result<UtteranceScore, MetricsError> {
    let alignments = policies
        .iter()
        .map(|p| {
            let r = entry
                .references
                .get(p)
                .ok_or_else(|| MetricsError::MissingReference {
                    utterance_id: entry.utterance.utterance_id.clone(),
                    policy: p.name().to_string(),
                })?;
            Ok(align(&hypothesis.tokens, &r.tokens)?)
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    Ok(UtteranceScore {
        utterance_id: entry.utterance.utterance_id.clone(),
        group: entry.utterance.group.clone(),
        alignments,
    })
}

/// Per-utterance WER columns for a set of scored utterances.
pub fn policy_scores(scores: &[&UtteranceScore], policies: &[PolicyId]) -> PolicyScores {
    let columns = policies
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (
                p.clone(),
                scores.iter().map(|s| wer(&s.alignments[i])).collect(),
            )
        })
        .collect();
    PolicyScores::new(columns).expect("equal-length columns")
}

/// An identity that failed to hold exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityViolation {
    pub identity: &'static str,
    pub expected: Rate,
    pub actual: Rate,
}

impl fmt::Display for IdentityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: expected {} but got {}",
            self.identity,
            crate::rational::format_fixed(&self.expected, 6),
            crate::rational::format_fixed(&self.actual, 6)
        )
    }
}

/// Checks `ins + del + sub == wer` exactly, e.g. for a published breakdown.
#[allow(clippy::result_large_err)]
pub fn validate_decomposition(
    wer: &Rate,
    ins: &Rate,
    del: &Rate,
    sub: &Rate,
) -> Result<(), IdentityViolation> {
    let total = ins + del + sub;
    if &total == wer {
        Ok(())
    } else {
        Err(IdentityViolation {
            identity: "ins + del + sub = wer",
            expected: wer.clone(),
            actual: total,
        })
    }
}

/// Checks a published range row against the WER-Set it summarizes.
#[allow(clippy::result_large_err)]
pub fn validate_range(
    wer_set: Vec<(PolicyId, Rate)>,
    published_min: &Rate,
    published_max: &Rate,
    published_width: &Rate,
) -> Result<(), IdentityViolation> {
    let r =
        wer_range(RangeScope::System(String::new()), wer_set).map_err(|_| IdentityViolation {
            identity: "non-empty WER-Set",
            expected: Rate::from_integer(1.into()),
            actual: Rate::from_integer(0.into()),
        })?;
    let check = |identity, expected: &Rate, actual: &Rate| {
        if expected == actual {
            Ok(())
        } else {
            Err(IdentityViolation {
                identity,
                expected: expected.clone(),
                actual: actual.clone(),
            })
        }
    };
    check("range_min = min(WER-Set)", published_min, &r.range_min)?;
    check("range_max = max(WER-Set)", published_max, &r.range_max)?;
    check(
        "width = max - min",
        published_width,
        &(published_max - published_min),
    )
}

//! Convention-labeled reports.
//!
//! Every WER-type number leaves this module next to the policy it was
//! measured under, e.g. `9.81 (verbatim)`. Differences in percentage points
//! (EID, ΔEID, range width, fairness gaps) are printed bare. The rule is
//! visible in the CSV schemas: `_pct` columns are labeled WER values and
//! `_pp` columns are differences.
//!
//! Each CSV file ends with one `#` comment line carrying the run metadata,
//! so the header stays the first line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::config::RunConfig;
use crate::corpus::{Corpus, GroupLabel, PolicyId};
use crate::metrics::{
    delta_eid, eid, fairness_gap, group_wer, hermeneutical_gap, policy_scores, wer_range, EidMode,
    EidResult, GapResult, GroupPolicyWer, MetricsError, RangeResult, RangeScope, UtteranceScore,
};
use crate::rational::{format_pct, parse_decimal, Rate};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot build a report from an empty corpus")]
    EmptyCorpus,
    #[error("system \"{system_id}\" has {got} scored utterances, corpus has {expected}")]
    IncompleteScores {
        system_id: String,
        got: usize,
        expected: usize,
    },
    #[error("EID decomposition needs aggregate-mode EID; this report uses {0}")]
    NotAggregate(EidMode),
    #[error("unknown output format \"{0}\" (expected csv, json or md)")]
    UnknownFormat(String),
    #[error("cannot write {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    #[serde(alias = "markdown")]
    Md,
}

impl FromStr for OutputFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "md" | "markdown" => Ok(OutputFormat::Md),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunMetadata {
    pub toolkit_version: String,
    pub config_digest: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaEidRow {
    pub system_id: String,
    pub group_a: GroupLabel,
    pub group_b: GroupLabel,
    pub enforced_policy: PolicyId,
    pub mode: EidMode,
    pub value: Rate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FairnessGapRow {
    pub system_id: String,
    pub policy: PolicyId,
    pub group_a: GroupLabel,
    pub group_b: GroupLabel,
    pub gap: Rate,
}

/// All tables of one evaluation run, in a fixed order: systems sorted by id,
/// groups and policies in configuration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluationReport {
    pub metadata: RunMetadata,
    pub policies: Vec<PolicyId>,
    pub enforced_policy: PolicyId,
    pub eid_mode: EidMode,
    pub baseline_group: GroupLabel,
    /// Corpus-wide rows per system and policy.
    pub system_wer: Vec<GroupPolicyWer>,
    pub wer_matrix: Vec<GroupPolicyWer>,
    pub eid_table: Vec<EidResult>,
    pub delta_eid_table: Vec<DeltaEidRow>,
    pub range_table: Vec<RangeResult>,
    pub gap_table: Vec<GapResult>,
    pub fairness_gaps: Vec<FairnessGapRow>,
}

/// One emitted file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub name: String,
    pub contents: String,
}

impl EvaluationReport {
    /// `systems` pairs each system with its utterance scores, in corpus
    /// entry order and with alignments in corpus policy order.
    pub fn build(
        corpus: &Corpus,
        config: &RunConfig,
        systems: &[(String, Vec<UtteranceScore>)],
        metadata: RunMetadata,
    ) -> Result<Self, ReportError> {
        if corpus.is_empty() {
            return Err(ReportError::EmptyCorpus);
        }
        let policies = corpus.policies().to_vec();
        let enforced = &config.enforced_policy;
        let groups: Vec<(GroupLabel, Vec<usize>)> = corpus
            .vocabulary()
            .labels()
            .iter()
            .map(|g| {
                let idx: Vec<usize> = corpus
                    .entries()
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| &e.utterance.group == g)
                    .map(|(i, _)| i)
                    .collect();
                (g.clone(), idx)
            })
            .filter(|(_, idx)| !idx.is_empty())
            .collect();
        let overall = GroupLabel::new("");

        let mut systems: Vec<&(String, Vec<UtteranceScore>)> = systems.iter().collect();
        systems.sort_by(|a, b| a.0.cmp(&b.0));

        let mut report = EvaluationReport {
            metadata,
            policies: policies.clone(),
            enforced_policy: enforced.clone(),
            eid_mode: config.eid_mode,
            baseline_group: config.baseline_group.clone(),
            system_wer: Vec::new(),
            wer_matrix: Vec::new(),
            eid_table: Vec::new(),
            delta_eid_table: Vec::new(),
            range_table: Vec::new(),
            gap_table: Vec::new(),
            fairness_gaps: Vec::new(),
        };

        for (system_id, scores) in systems {
            if scores.len() != corpus.len() {
                return Err(ReportError::IncompleteScores {
                    system_id: system_id.clone(),
                    got: scores.len(),
                    expected: corpus.len(),
                });
            }
            let all: Vec<&UtteranceScore> = scores.iter().collect();
            let rows = policy_rows(system_id, &overall, &policies, &all)?;
            report
                .range_table
                .push(range_of(RangeScope::System(system_id.clone()), &rows)?);
            report.system_wer.extend(rows);

            let mut eids: Vec<EidResult> = Vec::new();
            let mut by_group: Vec<Vec<GroupPolicyWer>> = Vec::new();
            for (group, idx) in &groups {
                let subset: Vec<&UtteranceScore> = idx.iter().map(|&i| &scores[i]).collect();
                let rows = policy_rows(system_id, group, &policies, &subset)?;
                report.range_table.push(range_of(
                    RangeScope::SystemGroup(system_id.clone(), group.clone()),
                    &rows,
                )?);
                let table = policy_scores(&subset, &policies);
                eids.push(eid(system_id, group, &table, enforced, config.eid_mode)?);
                report.wer_matrix.extend(rows.iter().cloned());
                by_group.push(rows);
            }

            let baseline = groups.iter().position(|(g, _)| g == &config.baseline_group);
            if let Some(b) = baseline {
                for (i, e) in eids.iter().enumerate().filter(|&(i, _)| i != b) {
                    report.delta_eid_table.push(DeltaEidRow {
                        system_id: system_id.clone(),
                        group_a: e.group.clone(),
                        group_b: eids[b].group.clone(),
                        enforced_policy: enforced.clone(),
                        mode: config.eid_mode,
                        value: delta_eid(e, &eids[b])?,
                    });
                    for (p, row) in by_group[i].iter().enumerate() {
                        report.fairness_gaps.push(FairnessGapRow {
                            system_id: system_id.clone(),
                            policy: row.policy.clone(),
                            group_a: row.group.clone(),
                            group_b: by_group[b][p].group.clone(),
                            gap: fairness_gap(row, &by_group[b][p])?,
                        });
                    }
                }
            }
            report.eid_table.extend(eids);
        }

        for (group, idx) in &groups {
            let refs: Vec<_> = idx
                .iter()
                .map(|&i| &corpus.entries()[i].references)
                .collect();
            report.gap_table.push(hermeneutical_gap(
                group,
                &refs,
                enforced,
                config.community_for(group),
            )?);
        }
        Ok(report)
    }

    pub fn systems(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .system_wer
            .iter()
            .map(|r| r.system_id.as_str())
            .collect();
        out.dedup();
        out
    }

    fn groups(&self) -> Vec<&GroupLabel> {
        let mut out: Vec<&GroupLabel> = Vec::new();
        for r in &self.eid_table {
            if !out.contains(&&r.group) {
                out.push(&r.group);
            }
        }
        out
    }
}

fn policy_rows(
    system_id: &str,
    group: &GroupLabel,
    policies: &[PolicyId],
    scores: &[&UtteranceScore],
) -> Result<Vec<GroupPolicyWer>, MetricsError> {
    policies
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let alignments: Vec<_> = scores.iter().map(|s| &s.alignments[i]).collect();
            group_wer(system_id, group, p, &alignments)
        })
        .collect()
}

fn range_of(scope: RangeScope, rows: &[GroupPolicyWer]) -> Result<RangeResult, MetricsError> {
    wer_range(
        scope,
        rows.iter()
            .map(|r| (r.policy.clone(), r.mean_wer.clone()))
            .collect(),
    )
}

/// `9.81 (verbatim)`.
pub fn labeled(value: &Rate, policy: &PolicyId) -> String {
    format!("{} ({})", format_pct(value), policy.label())
}

/// True for cells of the form `<number with 2 decimals> (<label>)`.
pub fn is_labeled(cell: &str) -> bool {
    let Some((number, rest)) = cell.split_once(" (") else {
        return false;
    };
    let digits = number.strip_prefix('-').unwrap_or(number);
    let well_formed = match digits.split_once('.') {
        Some((int, frac)) => {
            !int.is_empty()
                && int.bytes().all(|b| b.is_ascii_digit())
                && frac.len() == 2
                && frac.bytes().all(|b| b.is_ascii_digit())
        }
        None => false,
    };
    well_formed && rest.len() > 1 && rest.ends_with(')')
}

pub const WER_MATRIX_HEADER: &str =
    "system_id,group,policy,n_utterances,wer_pct,ins_pct,del_pct,sub_pct";
pub const EID_HEADER: &str = "system_id,group,enforced_policy,best_policy,mode,eid_pp";
pub const DELTA_EID_HEADER: &str = "system_id,group_a,group_b,enforced_policy,mode,delta_eid_pp";
pub const RANGE_HEADER: &str =
    "system_id,group,policy,wer_pct,range_min_pct,range_max_pct,width_pp";
pub const GAP_HEADER: &str = "group,dominant_policy,community_policy,gap_pct";
pub const EID_DECOMPOSITION_HEADER: &str =
    "system_id,group,best_case_wer_pct,eid_pp,enforced_wer_pct";

fn csv_document(
    name: &str,
    header: &str,
    rows: Vec<Vec<String>>,
    meta: &str,
) -> Result<Document, ReportError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header.split(',')).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    let mut contents =
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields");
    contents.push_str(meta);
    contents.push('\n');
    Ok(Document {
        name: name.to_string(),
        contents,
    })
}

fn metadata_comment(r: &EvaluationReport) -> String {
    let policies: Vec<&str> = r.policies.iter().map(PolicyId::name).collect();
    format!(
        "# werange {} config_sha256={} timestamp={} policy_set={} enforced_policy={}",
        r.metadata.toolkit_version,
        r.metadata.config_digest,
        r.metadata.timestamp,
        policies.join(";"),
        r.enforced_policy.name()
    )
}

/// (system, group, best case, penalty, enforced)
pub type DecompositionRow = (String, GroupLabel, Rate, Rate, Rate);

/// EID decomposition rows, with best case + penalty = enforced exactly.
pub fn emit_eid_decomposition(r: &EvaluationReport) -> Result<Vec<DecompositionRow>, ReportError> {
    if r.eid_mode != EidMode::Aggregate {
        return Err(ReportError::NotAggregate(r.eid_mode));
    }
    Ok(r.eid_table
        .iter()
        .map(|e| {
            let best = e.best_case_wer.clone().expect("aggregate mode");
            let enforced = e.enforced_wer.clone().expect("aggregate mode");
            (
                e.system_id.clone(),
                e.group.clone(),
                best,
                e.eid.clone(),
                enforced,
            )
        })
        .collect())
}

/// The CSV tables. The decomposition table is left out in per-utterance
/// mode, where its identity does not hold.
pub fn csv_tables(r: &EvaluationReport) -> Result<Vec<Document>, ReportError> {
    let meta = metadata_comment(r);
    let wer_row = |w: &GroupPolicyWer| {
        vec![
            w.system_id.clone(),
            w.group.to_string(),
            w.policy.name().to_string(),
            w.n_utterances.to_string(),
            labeled(&w.mean_wer, &w.policy),
            labeled(&w.mean_ins, &w.policy),
            labeled(&w.mean_del, &w.policy),
            labeled(&w.mean_sub, &w.policy),
        ]
    };
    let mut wer_rows = Vec::new();
    for system in r.systems() {
        wer_rows.extend(
            r.system_wer
                .iter()
                .filter(|w| w.system_id == system)
                .map(wer_row),
        );
        wer_rows.extend(
            r.wer_matrix
                .iter()
                .filter(|w| w.system_id == system)
                .map(wer_row),
        );
    }

    let eid_rows = r
        .eid_table
        .iter()
        .map(|e| {
            vec![
                e.system_id.clone(),
                e.group.to_string(),
                e.enforced_policy.name().to_string(),
                e.best_policy.name().to_string(),
                e.mode.to_string(),
                format_pct(&e.eid),
            ]
        })
        .collect();
    let delta_rows = r
        .delta_eid_table
        .iter()
        .map(|d| {
            vec![
                d.system_id.clone(),
                d.group_a.to_string(),
                d.group_b.to_string(),
                d.enforced_policy.name().to_string(),
                d.mode.to_string(),
                format_pct(&d.value),
            ]
        })
        .collect();
    let mut range_rows = Vec::new();
    for rr in &r.range_table {
        for (p, v) in &rr.wer_set {
            range_rows.push(vec![
                rr.scope.system_id().to_string(),
                rr.scope
                    .group()
                    .map(ToString::to_string)
                    .unwrap_or_default(),
                p.name().to_string(),
                labeled(v, p),
                labeled(&rr.range_min, &rr.min_policy),
                labeled(&rr.range_max, &rr.max_policy),
                format_pct(&rr.width),
            ]);
        }
    }
    let gap_rows = r
        .gap_table
        .iter()
        .map(|g| {
            vec![
                g.group.to_string(),
                g.dominant_policy.name().to_string(),
                g.community_policy.name().to_string(),
                labeled(&g.gap, &g.dominant_policy),
            ]
        })
        .collect();

    let mut docs = vec![
        csv_document("wer_matrix.csv", WER_MATRIX_HEADER, wer_rows, &meta)?,
        csv_document("eid.csv", EID_HEADER, eid_rows, &meta)?,
        csv_document("delta_eid.csv", DELTA_EID_HEADER, delta_rows, &meta)?,
        csv_document("range.csv", RANGE_HEADER, range_rows, &meta)?,
        csv_document("gap.csv", GAP_HEADER, gap_rows, &meta)?,
    ];
    if r.eid_mode == EidMode::Aggregate {
        let best_of = |system: &str, group: &GroupLabel| {
            r.eid_table
                .iter()
                .find(|e| e.system_id == system && &e.group == group)
                .map(|e| e.best_policy.clone())
                .expect("row from eid table")
        };
        let rows = emit_eid_decomposition(r)?
            .into_iter()
            .map(|(s, g, best, eid, enforced)| {
                vec![
                    s.clone(),
                    g.to_string(),
                    labeled(&best, &best_of(&s, &g)),
                    format_pct(&eid),
                    labeled(&enforced, &r.enforced_policy),
                ]
            })
            .collect();
        docs.push(csv_document(
            "eid_decomposition.csv",
            EID_DECOMPOSITION_HEADER,
            rows,
            &meta,
        )?);
    }
    Ok(docs)
}

fn wer_value(v: &Rate, p: &PolicyId) -> Value {
    json!({ "pct": format_pct(v), "policy": p.name(), "label": labeled(v, p) })
}

fn group_json(g: &GroupLabel) -> Value {
    if g.as_str().is_empty() {
        Value::Null
    } else {
        Value::String(g.to_string())
    }
}

fn wer_row_json(w: &GroupPolicyWer) -> Value {
    json!({
        "system_id": w.system_id,
        "group": group_json(&w.group),
        "policy": w.policy.name(),
        "n_utterances": w.n_utterances,
        "wer": wer_value(&w.mean_wer, &w.policy),
        "ins": wer_value(&w.mean_ins, &w.policy),
        "del": wer_value(&w.mean_del, &w.policy),
        "sub": wer_value(&w.mean_sub, &w.policy),
    })
}

pub fn json_document(r: &EvaluationReport) -> Value {
    let mut doc = Map::new();
    doc.insert(
        "run_metadata".into(),
        json!({
            "toolkit_version": r.metadata.toolkit_version,
            "config_sha256": r.metadata.config_digest,
            "timestamp": r.metadata.timestamp,
        }),
    );
    doc.insert(
        "policy_set".into(),
        r.policies
            .iter()
            .map(|p| json!({ "name": p.name(), "kind": p.kind(), "label": p.label() }))
            .collect(),
    );
    doc.insert("enforced_policy".into(), r.enforced_policy.name().into());
    doc.insert("eid_mode".into(), r.eid_mode.as_str().into());
    doc.insert("baseline_group".into(), r.baseline_group.as_str().into());
    doc.insert(
        "wer_matrix".into(),
        r.system_wer
            .iter()
            .chain(&r.wer_matrix)
            .map(wer_row_json)
            .collect(),
    );
    doc.insert(
        "eid".into(),
        r.eid_table
            .iter()
            .map(|e| {
                json!({
                    "system_id": e.system_id,
                    "group": e.group.as_str(),
                    "enforced_policy": e.enforced_policy.name(),
                    "best_policy": e.best_policy.name(),
                    "mode": e.mode.as_str(),
                    "eid_pp": format_pct(&e.eid),
                })
            })
            .collect(),
    );
    doc.insert(
        "delta_eid".into(),
        r.delta_eid_table
            .iter()
            .map(|d| {
                json!({
                    "system_id": d.system_id,
                    "group_a": d.group_a.as_str(),
                    "group_b": d.group_b.as_str(),
                    "enforced_policy": d.enforced_policy.name(),
                    "mode": d.mode.as_str(),
                    "delta_eid_pp": format_pct(&d.value),
                })
            })
            .collect(),
    );
    doc.insert(
        "range".into(),
        r.range_table
            .iter()
            .map(|rr| {
                json!({
                    "system_id": rr.scope.system_id(),
                    "group": rr.scope.group().map(|g| g.as_str()),
                    "wer_set": rr.wer_set.iter().map(|(p, v)| wer_value(v, p)).collect::<Vec<_>>(),
                    "range_min": wer_value(&rr.range_min, &rr.min_policy),
                    "range_max": wer_value(&rr.range_max, &rr.max_policy),
                    "width_pp": format_pct(&rr.width),
                })
            })
            .collect(),
    );
    doc.insert(
        "hermeneutical_gap".into(),
        r.gap_table
            .iter()
            .map(|g| {
                json!({
                    "group": g.group.as_str(),
                    "dominant_policy": g.dominant_policy.name(),
                    "community_policy": g.community_policy.name(),
                    "n_utterances": g.n_utterances,
                    "gap": wer_value(&g.gap, &g.dominant_policy),
                })
            })
            .collect(),
    );
    doc.insert(
        "fairness_gaps".into(),
        r.fairness_gaps
            .iter()
            .map(|f| {
                json!({
                    "system_id": f.system_id,
                    "policy": f.policy.name(),
                    "group_a": f.group_a.as_str(),
                    "group_b": f.group_b.as_str(),
                    "gap_pp": format_pct(&f.gap),
                })
            })
            .collect(),
    );
    let decomposition = match emit_eid_decomposition(r) {
        Ok(rows) => rows
            .iter()
            .zip(&r.eid_table)
            .map(|((s, g, best, eid, enforced), e)| {
                json!({
                    "system_id": s,
                    "group": g.as_str(),
                    "best_case_wer": wer_value(best, &e.best_policy),
                    "eid_pp": format_pct(eid),
                    "enforced_wer": wer_value(enforced, &r.enforced_policy),
                })
            })
            .collect(),
        Err(_) => Value::Null,
    };
    doc.insert("eid_decomposition".into(), decomposition);
    Value::Object(doc)
}

fn md_table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
    out.push_str(&line(header));
    out.push_str(&line(&vec!["---".to_string(); header.len()]));
    for row in rows {
        out.push_str(&line(row));
    }
    out.push('\n');
}

pub fn markdown_document(r: &EvaluationReport) -> String {
    let mut out = String::from("# Evaluation report\n\n");
    let policies: Vec<&str> = r.policies.iter().map(PolicyId::label).collect();
    let _ = writeln!(out, "- toolkit version: {}", r.metadata.toolkit_version);
    let _ = writeln!(out, "- config sha256: {}", r.metadata.config_digest);
    let _ = writeln!(out, "- timestamp: {}", r.metadata.timestamp);
    let _ = writeln!(out, "- policy set: {}", policies.join(", "));
    let _ = writeln!(out, "- enforced policy: {}", r.enforced_policy.label());
    let _ = writeln!(out, "- EID mode: {}\n", r.eid_mode);

    let wer_header = |first: &str| {
        let mut h = vec![first.to_string()];
        h.extend(
            r.policies
                .iter()
                .map(|p| format!("WER (under convention {}) (%)", p.label())),
        );
        h
    };
    let cells = |rows: &[&GroupPolicyWer]| {
        rows.iter()
            .map(|w| labeled(&w.mean_wer, &w.policy))
            .collect::<Vec<_>>()
    };

    out.push_str("## WER (under convention p) by system\n\n");
    let mut header = wer_header("System");
    header.extend(["WER-Range (%)".to_string(), "Width (pp)".to_string()]);
    let rows: Vec<Vec<String>> = r
        .systems()
        .into_iter()
        .map(|s| {
            let ws: Vec<&GroupPolicyWer> =
                r.system_wer.iter().filter(|w| w.system_id == s).collect();
            let rr = r
                .range_table
                .iter()
                .find(|rr| rr.scope == RangeScope::System(s.to_string()))
                .expect("system range row");
            let mut row = vec![s.to_string()];
            row.extend(cells(&ws));
            row.push(format!(
                "{} to {}",
                labeled(&rr.range_min, &rr.min_policy),
                labeled(&rr.range_max, &rr.max_policy)
            ));
            row.push(format_pct(&rr.width));
            row
        })
        .collect();
    md_table(&mut out, &header, &rows);

    out.push_str("## Edit operations by system\n\n");
    let header: Vec<String> = [
        "System",
        "Policy",
        "Ins (%)",
        "Del (%)",
        "Sub (%)",
        "WER (under convention p) (%)",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = r
        .system_wer
        .iter()
        .map(|w| {
            vec![
                w.system_id.clone(),
                w.policy.label().to_string(),
                labeled(&w.mean_ins, &w.policy),
                labeled(&w.mean_del, &w.policy),
                labeled(&w.mean_sub, &w.policy),
                labeled(&w.mean_wer, &w.policy),
            ]
        })
        .collect();
    md_table(&mut out, &header, &rows);

    let groups = r.groups();
    out.push_str("## WER (under convention p) by speaker group\n\n");
    let mut header = vec!["System".to_string()];
    header.extend(wer_header("Group"));
    let mut rows = Vec::new();
    for s in r.systems() {
        for g in &groups {
            let ws: Vec<&GroupPolicyWer> = r
                .wer_matrix
                .iter()
                .filter(|w| w.system_id == s && &&w.group == g)
                .collect();
            let mut row = vec![s.to_string(), g.to_string()];
            row.extend(cells(&ws));
            rows.push(row);
        }
    }
    md_table(&mut out, &header, &rows);

    let _ = writeln!(
        out,
        "## EID by speaker group (enforced {}, {} mode)\n",
        r.enforced_policy.label(),
        r.eid_mode
    );
    let mut header = vec!["System".to_string()];
    header.extend(groups.iter().map(|g| format!("EID {g} (pp)")));
    header.extend(
        groups
            .iter()
            .filter(|g| ***g != r.baseline_group)
            .map(|g| format!("ΔEID {g} vs {} (pp)", r.baseline_group)),
    );
    let rows: Vec<Vec<String>> =
        r.systems()
            .into_iter()
            .map(|s| {
                let mut row = vec![s.to_string()];
                row.extend(
                    r.eid_table.iter().filter(|e| e.system_id == s).map(|e| {
                        format!("{} (best {})", format_pct(&e.eid), e.best_policy.label())
                    }),
                );
                row.extend(groups.iter().filter(|g| ***g != r.baseline_group).map(|g| {
                    r.delta_eid_table
                        .iter()
                        .find(|d| d.system_id == s && &&d.group_a == g)
                        .map(|d| format_pct(&d.value))
                        .unwrap_or_else(|| "n/a".into())
                }));
                row
            })
            .collect();
    md_table(&mut out, &header, &rows);

    if let Ok(decomposition) = emit_eid_decomposition(r) {
        out.push_str("## EID decomposition\n\n");
        let header: Vec<String> = [
            "System",
            "Group",
            "Best-case WER (under convention p) (%)",
            "EID (pp)",
            "Enforced WER (under convention p) (%)",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let rows: Vec<Vec<String>> = decomposition
            .iter()
            .zip(&r.eid_table)
            .map(|((s, g, best, eid, enforced), e)| {
                vec![
                    s.clone(),
                    g.to_string(),
                    labeled(best, &e.best_policy),
                    format_pct(eid),
                    labeled(enforced, &r.enforced_policy),
                ]
            })
            .collect();
        md_table(&mut out, &header, &rows);
    }

    out.push_str("## WER-Range by speaker group\n\n");
    let header: Vec<String> = ["System", "Group", "WER-Range (%)", "Width (pp)"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = r
        .range_table
        .iter()
        .filter_map(|rr| {
            let g = rr.scope.group()?;
            Some(vec![
                rr.scope.system_id().to_string(),
                g.to_string(),
                format!(
                    "{} to {}",
                    labeled(&rr.range_min, &rr.min_policy),
                    labeled(&rr.range_max, &rr.max_policy)
                ),
                format_pct(&rr.width),
            ])
        })
        .collect();
    md_table(&mut out, &header, &rows);

    out.push_str("## Hermeneutical gap\n\n");
    let header: Vec<String> = ["Group", "Dominant", "Community", "Gap (%)"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = r
        .gap_table
        .iter()
        .map(|g| {
            vec![
                g.group.to_string(),
                g.dominant_policy.label().to_string(),
                g.community_policy.label().to_string(),
                labeled(&g.gap, &g.dominant_policy),
            ]
        })
        .collect();
    md_table(&mut out, &header, &rows);

    if !r.fairness_gaps.is_empty() {
        out.push_str("## Fairness gaps\n\n");
        let header: Vec<String> = ["System", "Policy", "Groups", "Gap (pp)"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let rows: Vec<Vec<String>> = r
            .fairness_gaps
            .iter()
            .map(|f| {
                vec![
                    f.system_id.clone(),
                    f.policy.label().to_string(),
                    format!("{} minus {}", f.group_a, f.group_b),
                    format_pct(&f.gap),
                ]
            })
            .collect();
        md_table(&mut out, &header, &rows);
    }
    out
}

pub fn emit(r: &EvaluationReport, format: OutputFormat) -> Result<Vec<Document>, ReportError> {
    match format {
        OutputFormat::Csv => csv_tables(r),
        OutputFormat::Json => {
            let mut contents = serde_json::to_string_pretty(&json_document(r)).expect("json value");
            contents.push('\n');
            Ok(vec![Document {
                name: "report.json".into(),
                contents,
            }])
        }
        OutputFormat::Md => Ok(vec![Document {
            name: "report.md".into(),
            contents: markdown_document(r),
        }]),
    }
}

/// Writes the documents of every format into `dir`, returning the paths.
pub fn write_reports(
    r: &EvaluationReport,
    formats: &[OutputFormat],
    dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    for &f in formats {
        for doc in emit(r, f)? {
            let path = dir.join(&doc.name);
            std::fs::write(&path, doc.contents.as_bytes()).map_err(io(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Places where a WER value or the bare word "WER" appears without its
/// convention. `name` selects the rules by extension.
pub fn scan_labels(name: &str, contents: &str) -> Vec<String> {
    let mut problems = scan_word(contents);
    if name.ends_with(".csv") {
        problems.extend(scan_csv(contents));
    } else if name.ends_with(".json") {
        match serde_json::from_str::<Value>(contents) {
            Ok(v) => scan_json("$", &v, false, &mut problems),
            Err(e) => problems.push(format!("unparseable json: {e}")),
        }
    } else if name.ends_with(".md") {
        problems.extend(scan_markdown(contents));
    }
    problems
}

fn scan_word(contents: &str) -> Vec<String> {
    const QUALIFIERS: [&str; 3] = [" (under convention", "-Range", "-Set"];
    let mut problems = Vec::new();
    for (line_no, line) in contents.lines().enumerate() {
        for (at, _) in line.match_indices("WER") {
            let before = line[..at].chars().next_back();
            if before.is_some_and(|c| c.is_alphanumeric()) {
                continue;
            }
            let rest = &line[at + 3..];
            if !QUALIFIERS.iter().any(|q| rest.starts_with(q)) {
                problems.push(format!("line {}: unqualified \"WER\"", line_no + 1));
            }
        }
    }
    problems
}

fn scan_csv(contents: &str) -> Vec<String> {
    let mut problems = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(contents.as_bytes());
    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return vec![format!("unparseable csv: {e}")],
    };
    for (row_no, row) in reader.records().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("row {}: {e}", row_no + 1));
                continue;
            }
        };
        for (col, cell) in header.iter().zip(row.iter()) {
            if col.ends_with("_pct") && !is_labeled(cell) {
                problems.push(format!(
                    "row {} column {col}: unlabeled value {cell:?}",
                    row_no + 1
                ));
            }
        }
    }
    problems
}

fn scan_json(path: &str, v: &Value, wer_context: bool, problems: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            if map.contains_key("pct") {
                let ok = map
                    .get("label")
                    .and_then(Value::as_str)
                    .is_some_and(is_labeled)
                    && map
                        .get("policy")
                        .and_then(Value::as_str)
                        .is_some_and(|p| !p.is_empty());
                if !ok {
                    problems.push(format!("{path}: WER value without a policy label"));
                }
                return;
            }
            if wer_context {
                problems.push(format!("{path}: WER field is not a labeled value"));
            }
            for (k, child) in map {
                let is_wer = matches!(
                    k.as_str(),
                    "wer" | "ins" | "del" | "sub" | "gap" | "wer_set" | "range_min" | "range_max"
                ) || k.ends_with("_wer");
                scan_json(&format!("{path}.{k}"), child, is_wer, problems);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                scan_json(&format!("{path}[{i}]"), child, wer_context, problems);
            }
        }
        Value::Null => {}
        other if wer_context => problems.push(format!("{path}: bare WER value {other}")),
        _ => {}
    }
}

fn scan_markdown(contents: &str) -> Vec<String> {
    let mut problems = Vec::new();
    let mut header: Option<Vec<String>> = None;
    for (line_no, line) in contents.lines().enumerate() {
        let Some(inner) = line.strip_prefix("| ").and_then(|l| l.strip_suffix(" |")) else {
            header = None;
            continue;
        };
        let cells: Vec<String> = inner.split(" | ").map(str::to_string).collect();
        match &header {
            None => header = Some(cells),
            Some(_) if cells.iter().all(|c| c == "---") => {}
            Some(h) => {
                for (col, cell) in h.iter().zip(&cells) {
                    let wer_column = col.contains("WER") || col.ends_with("(%)");
                    let labeled_cell = cell.split(" to ").all(is_labeled);
                    if wer_column && !labeled_cell {
                        problems.push(format!(
                            "line {}: unlabeled cell {cell:?} under {col:?}",
                            line_no + 1
                        ));
                    }
                    if !wer_column && parse_decimal(cell).is_some() && col.contains('%') {
                        problems.push(format!("line {}: bare percentage {cell:?}", line_no + 1));
                    }
                }
            }
        }
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::align_words;
    use crate::corpus::{CorpusEntry, GroupVocabulary, ReferenceSet, Token, Transcript, Utterance};
    use crate::metrics::score_utterance;
    use crate::rational::ratio;

    fn words(s: &str) -> Vec<Token> {
        s.split_whitespace().map(Token::word).collect()
    }

    fn corpus(rows: &[(&str, &str, &str, &str)], policies: &[PolicyId]) -> Corpus {
        let entries = rows
            .iter()
            .map(|(id, group, v, n)| {
                let mut refs = ReferenceSet::new(*id);
                for p in policies {
                    let text = if p.kind() == crate::corpus::PolicyKind::Verbatim {
                        v
                    } else {
                        n
                    };
                    refs.insert(Transcript::reference(*id, p.clone(), words(text)));
                }
                CorpusEntry {
                    utterance: Utterance {
                        utterance_id: id.to_string(),
                        speaker_id: String::new(),
                        group: GroupLabel::new(*group),
                        audio_duration_s: None,
                    },
                    references: refs,
                }
            })
            .collect();
        Corpus::from_entries(policies.to_vec(), GroupVocabulary::default(), entries).unwrap()
    }

    fn meta() -> RunMetadata {
        RunMetadata {
            toolkit_version: "0.1.0".into(),
            config_digest: "abc".into(),
            timestamp: "1970-01-01T00:00:00Z".into(),
        }
    }

    fn scores(c: &Corpus, hyps: &[&str]) -> Vec<UtteranceScore> {
        c.entries()
            .iter()
            .zip(hyps)
            .map(|(e, h)| {
                let t = Transcript::hypothesis(&e.utterance.utterance_id, "s", words(h));
                score_utterance(e, &t, c.policies()).unwrap()
            })
            .collect()
    }

    fn cfg(policies: Vec<PolicyId>, enforced: PolicyId) -> RunConfig {
        RunConfig {
            rules: policies
                .iter()
                .cloned()
                .map(crate::textnorm::ConventionRuleSet::default_for)
                .collect(),
            policies,
            enforced_policy: enforced,
            ..RunConfig::default()
        }
    }

    #[test]
    fn single_cell_markdown_label() {
        // 3 errors in 20 words: 0.15
        let r20 = "a b c d e f g h i j k l m n o p q r s t";
        let h20 = "x y z d e f g h i j k l m n o p q r s t";
        assert_eq!(
            crate::align::wer(
                &align_words(
                    &h20.split(' ').collect::<Vec<_>>(),
                    &r20.split(' ').collect::<Vec<_>>()
                )
                .unwrap()
            ),
            ratio(3, 20)
        );
        let policies = vec![PolicyId::nonverbatim()];
        let c = corpus(&[("u1", "control", r20, r20)], &policies);
        let report = EvaluationReport::build(
            &c,
            &cfg(policies, PolicyId::nonverbatim()),
            &[("s".into(), scores(&c, &[h20]))],
            meta(),
        )
        .unwrap();
        let md = markdown_document(&report);
        assert!(md.contains("| 15.00 (non-verbatim) |"), "{md}");
        for f in [OutputFormat::Csv, OutputFormat::Json, OutputFormat::Md] {
            for d in emit(&report, f).unwrap() {
                assert_eq!(
                    scan_labels(&d.name, &d.contents),
                    Vec::<String>::new(),
                    "{}",
                    d.name
                );
            }
        }
    }

    #[test]
    fn empty_corpus_is_error() {
        let policies = PolicyId::standard_set();
        let c = corpus(&[], &policies);
        assert!(matches!(
            EvaluationReport::build(&c, &cfg(policies, PolicyId::nonverbatim()), &[], meta()),
            Err(ReportError::EmptyCorpus)
        ));
    }

    fn sample() -> EvaluationReport {
        let policies = PolicyId::standard_set();
        let c = corpus(
            &[
                ("u1", "control", "i was um going home", "i was going home"),
                (
                    "u2",
                    "nonfluent_aphasia",
                    "the the boy uh ran",
                    "the boy ran",
                ),
                (
                    "u3",
                    "fluent_aphasia",
                    "she went to the store",
                    "she went to the store",
                ),
            ],
            &policies,
        );
        let sys = vec![
            (
                "b".to_string(),
                scores(
                    &c,
                    &["i was going home", "the boy ran", "she went to store"],
                ),
            ),
            (
                "a".to_string(),
                scores(&c, &["i um going", "", "she went to the store"]),
            ),
        ];
        EvaluationReport::build(&c, &cfg(policies, PolicyId::nonverbatim()), &sys, meta()).unwrap()
    }

    #[test]
    fn csv_headers_and_schema() {
        let docs = csv_tables(&sample()).unwrap();
        let names: Vec<_> = docs.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "wer_matrix.csv",
                "eid.csv",
                "delta_eid.csv",
                "range.csv",
                "gap.csv",
                "eid_decomposition.csv"
            ]
        );
        let headers = [
            WER_MATRIX_HEADER,
            EID_HEADER,
            DELTA_EID_HEADER,
            RANGE_HEADER,
            GAP_HEADER,
            EID_DECOMPOSITION_HEADER,
        ];
        for (d, h) in docs.iter().zip(headers) {
            assert_eq!(d.contents.lines().next().unwrap(), h);
            assert!(d
                .contents
                .lines()
                .last()
                .unwrap()
                .starts_with("# werange 0.1.0 config_sha256=abc"));
            assert!(
                scan_labels(&d.name, &d.contents).is_empty(),
                "{}",
                d.contents
            );
        }
        // systems sorted
        assert!(docs[0]
            .contents
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("a,,verbatim,3,"));
    }

    #[test]
    fn emission_is_deterministic_and_labeled() {
        let r = sample();
        for f in [OutputFormat::Csv, OutputFormat::Json, OutputFormat::Md] {
            let a = emit(&r, f).unwrap();
            assert_eq!(a, emit(&r, f).unwrap());
            for d in &a {
                assert!(
                    scan_labels(&d.name, &d.contents).is_empty(),
                    "{}\n{}",
                    d.name,
                    d.contents
                );
            }
        }
    }

    #[test]
    fn decomposition_identity_and_mode_guard() {
        let mut r = sample();
        for (_, _, best, eid, enforced) in emit_eid_decomposition(&r).unwrap() {
            assert_eq!(best + eid, enforced);
        }
        r.eid_mode = EidMode::PerUtterance;
        assert!(matches!(
            emit_eid_decomposition(&r),
            Err(ReportError::NotAggregate(_))
        ));
        assert_eq!(csv_tables(&r).unwrap().len(), 5);
    }

    #[test]
    fn scanner_catches_unlabeled_values() {
        assert!(!scan_labels("x.md", "overall WER is 9.81").is_empty());
        assert!(scan_labels("x.md", "WER (under convention verbatim)").is_empty());
        assert!(scan_labels("x.md", "the WER-Range").is_empty());
        let csv = format!("{WER_MATRIX_HEADER}\ns,,verbatim,1,9.81,0.00 (verbatim),0.00 (verbatim),9.81 (verbatim)\n");
        assert_eq!(scan_labels("wer_matrix.csv", &csv).len(), 1);
        assert!(!scan_labels("r.json", r#"{"wer": 0.1}"#).is_empty());
        assert!(!scan_labels("r.json", r#"{"x": {"pct": "9.81"}}"#).is_empty());
        assert!(scan_labels(
            "r.json",
            r#"{"wer": {"pct": "9.81", "policy": "verbatim", "label": "9.81 (verbatim)"}}"#
        )
        .is_empty());
        let md = "| System | WER (under convention verbatim) (%) |\n| --- | --- |\n| s | 9.81 |\n";
        assert_eq!(scan_labels("r.md", md).len(), 1);
    }

    #[test]
    fn labeled_cell_shape() {
        assert!(is_labeled("9.81 (verbatim)"));
        assert!(is_labeled("-1.37 (legal)"));
        assert!(!is_labeled("9.8 (verbatim)"));
        assert!(!is_labeled("9.81"));
        assert!(!is_labeled("9.81 ()"));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("md".parse::<OutputFormat>().unwrap(), OutputFormat::Md);
        assert!(matches!(
            "pdf".parse::<OutputFormat>(),
            Err(ReportError::UnknownFormat(_))
        ));
    }
}

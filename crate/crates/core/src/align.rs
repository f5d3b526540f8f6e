//! Word-level minimum edit alignment.
//!
//! Orientation follows WER: the hypothesis is edited into the reference, so
//! a *deletion* is a reference word the hypothesis lacks and an *insertion*
//! is a hypothesis word the reference lacks. Costs are 1 for substitution,
//! deletion and insertion, 0 for a match.
//!
//! The minimum cost is unique but the edit script is not. The backtrace
//! walks from the end of both sequences and at every cell takes the first
//! optimal move in the order match, substitute, delete, insert. Two
//! different tools can therefore report different S/D/I splits for the
//! same total; this one always reports the same split for the same input.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::Token;
use crate::rational::{ratio, Rate};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("cannot score against an empty reference (WER denominator would be zero)")]
    EmptyReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Match,
    Substitute,
    Delete,
    Insert,
}

impl EditKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EditKind::Match => "match",
            EditKind::Substitute => "substitute",
            EditKind::Delete => "delete",
            EditKind::Insert => "insert",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EditOp {
    pub kind: EditKind,
    pub hyp_index: Option<usize>,
    pub ref_index: Option<usize>,
}

/// Edit script plus its counts. `ops` is in sequence order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub ops: Vec<EditOp>,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub matches: usize,
    pub ref_len: usize,
    pub hyp_len: usize,
}

impl Alignment {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// Builds an alignment from an op list, recomputing the counts.
    pub fn from_ops(ops: Vec<EditOp>, hyp_len: usize, ref_len: usize) -> Self {
        let count = |k| ops.iter().filter(|o| o.kind == k).count();
        Alignment {
            substitutions: count(EditKind::Substitute),
            deletions: count(EditKind::Delete),
            insertions: count(EditKind::Insert),
            matches: count(EditKind::Match),
            ops,
            ref_len,
            hyp_len,
        }
    }
}

/// Aligns surfaces. Token class is ignored.
pub fn align(hyp: &[Token], reference: &[Token]) -> Result<Alignment, AlignError> {
    let h: Vec<&str> = hyp.iter().map(|t| t.surface.as_str()).collect();
    let r: Vec<&str> = reference.iter().map(|t| t.surface.as_str()).collect();
    align_words(&h, &r)
}

pub fn align_words<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Result<Alignment, AlignError> {
    if reference.is_empty() {
        return Err(AlignError::EmptyReference);
    }
    Ok(align_unchecked(hyp, reference))
}

/// Alignment without the non-empty reference check; used for gap filling
/// where an empty segment is legitimate.
pub(crate) fn align_unchecked<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Alignment {
    let n = hyp.len();
    let m = reference.len();
    let width = m + 1;
    // cost[i * width + j]: distance between hyp[..i] and reference[..j]
    let mut cost = vec![0u32; (n + 1) * width];
    for (j, c) in cost.iter_mut().take(width).enumerate() {
        *c = j as u32;
    }
    for i in 1..=n {
        cost[i * width] = i as u32;
        let hi = hyp[i - 1].as_ref();
        for j in 1..=m {
            let diag = cost[(i - 1) * width + j - 1] + u32::from(hi != reference[j - 1].as_ref());
            let up = cost[(i - 1) * width + j] + 1;
            let left = cost[i * width + j - 1] + 1;
            cost[i * width + j] = diag.min(up).min(left);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * width + j];
        if i > 0 && j > 0 {
            let same = hyp[i - 1].as_ref() == reference[j - 1].as_ref();
            let diag = cost[(i - 1) * width + j - 1];
            if same && diag == here {
                ops.push(EditOp {
                    kind: EditKind::Match,
                    hyp_index: Some(i - 1),
                    ref_index: Some(j - 1),
                });
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && diag + 1 == here {
                ops.push(EditOp {
                    kind: EditKind::Substitute,
                    hyp_index: Some(i - 1),
                    ref_index: Some(j - 1),
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && cost[i * width + j - 1] + 1 == here {
            ops.push(EditOp {
                kind: EditKind::Delete,
                hyp_index: None,
                ref_index: Some(j - 1),
            });
            j -= 1;
            continue;
        }
        debug_assert!(i > 0 && cost[(i - 1) * width + j] + 1 == here);
        ops.push(EditOp {
            kind: EditKind::Insert,
            hyp_index: Some(i - 1),
            ref_index: None,
        });
        i -= 1;
    }
    ops.reverse();
    Alignment::from_ops(ops, n, m)
}

/// (S + D + I) / N, exact. May exceed 1.
pub fn wer(a: &Alignment) -> Rate {
    ratio(a.errors(), a.ref_len)
}

/// Per-operation rates over N.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperationRates {
    pub insertion: Rate,
    pub deletion: Rate,
    pub substitution: Rate,
}

impl OperationRates {
    pub fn total(&self) -> Rate {
        &self.insertion + &self.deletion + &self.substitution
    }
}

pub fn operation_rates(a: &Alignment) -> OperationRates {
    OperationRates {
        insertion: ratio(a.insertions, a.ref_len),
        deletion: ratio(a.deletions, a.ref_len),
        substitution: ratio(a.substitutions, a.ref_len),
    }
}

/// Debug dump, one tab-separated line per op:
/// `kind  hyp_index  ref_index  hyp_token  ref_token`, with `-` for absent
/// fields.
pub fn dump_alignment(a: &Alignment, hyp: &[Token], reference: &[Token]) -> String {
    let mut out = String::from("kind\thyp_index\tref_index\thyp_token\tref_token\n");
    for op in &a.ops {
        let idx = |i: Option<usize>| i.map_or_else(|| "-".to_string(), |i| i.to_string());
        let tok =
            |i: Option<usize>, ts: &[Token]| i.map_or("-", |i| ts[i].surface.as_str()).to_string();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            op.kind.as_str(),
            idx(op.hyp_index),
            idx(op.ref_index),
            tok(op.hyp_index, hyp),
            tok(op.ref_index, reference)
        );
    }
    out
}

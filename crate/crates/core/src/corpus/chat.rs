//! A bounded subset of the CHAT transcription format.
//!
//! Handled: `@` headers, `*CODE:` main tiers (with tab continuation lines),
//! `%` dependent tiers (skipped). Within a kept main tier:
//!
//! * `&-X` becomes a filler token `X`; `&+X` and `&~X` become fragments
//! * retracing `[/]`, `[//]`, `[///]` and every other `[...]` code is
//!   dropped, while the retraced words themselves are kept
//! * pauses `(.)`, `(..)`, `(...)` and timed pauses like `(1.5)` are dropped
//! * strip-list: `<` `>` scope brackets, media bullets, events `&=X`,
//!   terminators and linkers starting with `+`, `.` `?` `!`, the
//!   unintelligible-speech codes `xxx` `yyy` `www`, omitted words `0X`,
//!   `@` form suffixes (`dog@n`), lengthening `:` and pause `^` inside words,
//!   and unspoken parts in parentheses (`(be)cause` reads `cause`)
//! * `_` and `+` compounds split into separate words
//!
//! Not handled: morphology tiers, overlap alignment, and the long tail of
//! CHAT codes outside the list above.

use std::collections::BTreeSet;

use super::{CorpusError, PolicyId, Token, Transcript};
use crate::textnorm::{tokenize, NormalizationScheme};

/// Participant tier only.
pub const DEFAULT_TIER_FILTER: [&str; 1] = ["PAR"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatHeader {
    pub name: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedChat {
    /// Verbatim tokens from all kept tiers, in file order.
    pub tokens: Vec<Token>,
    /// Set when no main tier matched the filter.
    pub no_matching_tier: bool,
    pub headers: Vec<ChatHeader>,
    /// Speaker codes of every main tier seen, in first-seen order.
    pub speakers: Vec<String>,
}

impl ParsedChat {
    pub fn into_transcript(self, utterance_id: impl Into<String>) -> Transcript {
        Transcript::reference(utterance_id, PolicyId::verbatim(), self.tokens)
    }

    /// Fields of the `@ID` header for a speaker code, split on `|`.
    pub fn id_fields(&self, code: &str) -> Option<Vec<&str>> {
        self.headers
            .iter()
            .filter(|h| h.name == "@ID")
            .map(|h| h.value.split('|').map(str::trim).collect::<Vec<_>>())
            .find(|f| f.get(2) == Some(&code))
    }

    /// The group field (6th) of the speaker's `@ID` header, if non-empty.
    pub fn group_code(&self, code: &str) -> Option<&str> {
        self.id_fields(code)
            .and_then(|f| f.get(5).copied())
            .filter(|g| !g.is_empty())
    }

    /// Group field of the first kept speaker that has one.
    pub fn group_code_for(&self, tier_filter: &BTreeSet<String>) -> Option<&str> {
        tier_filter.iter().find_map(|code| self.group_code(code))
    }
}

struct MainTier {
    code: String,
    content: String,
    line: usize,
}

pub fn parse_chat(raw: &str, tier_filter: &BTreeSet<String>) -> Result<ParsedChat, CorpusError> {
    parse_chat_with(raw, tier_filter, &NormalizationScheme::default())
}

pub fn parse_chat_with(
    raw: &str,
    tier_filter: &BTreeSet<String>,
    scheme: &NormalizationScheme,
) -> Result<ParsedChat, CorpusError> {
    let raw = raw.strip_prefix('\u{feff}').unwrap_or(raw);
    let mut headers: Vec<ChatHeader> = Vec::new();
    let mut tiers: Vec<MainTier> = Vec::new();
    // which kind of line a continuation belongs to
    enum Last {
        None,
        Header,
        Main,
        Dependent,
    }
    let mut last = Last::None;

    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: &str| CorpusError::ChatParse {
            line: lineno,
            message: message.to_string(),
        };
        match line.chars().next() {
            Some('@') => {
                let (name, value) = match line.split_once(':') {
                    Some((n, v)) => (n.trim(), v.trim()),
                    None => (line.trim(), ""),
                };
                if name.len() < 2 || name.chars().any(char::is_whitespace) {
                    return Err(err("malformed header"));
                }
                headers.push(ChatHeader {
                    name: name.to_string(),
                    value: value.to_string(),
                    line: lineno,
                });
                last = Last::Header;
            }
            Some('*') => {
                let (code, content) = line[1..]
                    .split_once(':')
                    .ok_or_else(|| err("main tier without ':'"))?;
                if code.is_empty() || !code.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(err("malformed speaker code on main tier"));
                }
                tiers.push(MainTier {
                    code: code.to_string(),
                    content: content.to_string(),
                    line: lineno,
                });
                last = Last::Main;
            }
            Some('%') => {
                if !line.contains(':') {
                    return Err(err("dependent tier without ':'"));
                }
                last = Last::Dependent;
            }
            Some(c) if c == '\t' || c == ' ' => match last {
                Last::None => return Err(err("continuation line before any tier")),
                Last::Header => {
                    let h = headers.last_mut().expect("header present");
                    h.value.push(' ');
                    h.value.push_str(line.trim());
                }
                Last::Main => {
                    let t = tiers.last_mut().expect("tier present");
                    t.content.push(' ');
                    t.content.push_str(line.trim());
                }
                Last::Dependent => {}
            },
            _ => {
                return Err(err(
                    "unrecognized line; expected '@', '*', '%' or a continuation",
                ))
            }
        }
    }

    let mut speakers: Vec<String> = Vec::new();
    for t in &tiers {
        if !speakers.contains(&t.code) {
            speakers.push(t.code.clone());
        }
    }
    let mut tokens = Vec::new();
    let mut matched = false;
    for t in tiers.iter().filter(|t| tier_filter.contains(&t.code)) {
        matched = true;
        let marked = mark_tier(&t.content).map_err(|message| CorpusError::ChatParse {
            line: t.line,
            message,
        })?;
        tokens.extend(tokenize(&marked, scheme).into_iter().map(|mut tok| {
            tok.source_span = None;
            tok
        }));
    }
    Ok(ParsedChat {
        tokens,
        no_matching_tier: !matched,
        headers,
        speakers,
    })
}

/// Rewrites a main-tier body into plain text with `&-`/`&+` markers.
fn mark_tier(content: &str) -> Result<String, String> {
    let mut stripped = String::with_capacity(content.len());
    let mut depth = 0usize;
    let mut in_bullet = false;
    for c in content.chars() {
        match c {
            '\u{15}' => in_bullet = !in_bullet,
            _ if in_bullet => {}
            '[' => depth += 1,
            ']' => {
                if depth == 0 {
                    return Err("unbalanced ']'".into());
                }
                depth -= 1;
            }
            _ if depth > 0 => {}
            '<' | '>' => stripped.push(' '),
            _ => stripped.push(c),
        }
    }
    if depth > 0 {
        return Err("unclosed '['".into());
    }

    let mut words: Vec<String> = Vec::new();
    for w in stripped.split_whitespace() {
        if let Some(rest) = w.strip_prefix("&-") {
            if let Some(s) = clean_word(rest, "-") {
                words.push(format!("&-{s}"));
            }
        } else if let Some(rest) = w.strip_prefix("&+").or_else(|| w.strip_prefix("&~")) {
            if let Some(s) = clean_word(rest, "-") {
                words.push(format!("&+{s}"));
            }
        } else if w.starts_with('&') || w.starts_with('+') || w.starts_with('0') || is_pause(w) {
            continue;
        } else if let Some(s) = clean_word(w, " ") {
            let lower = s.to_lowercase();
            if matches!(lower.as_str(), "xxx" | "yyy" | "www") {
                continue;
            }
            words.push(s);
        }
    }
    Ok(words.join(" "))
}

fn is_pause(w: &str) -> bool {
    w.len() >= 3
        && w.starts_with('(')
        && w.ends_with(')')
        && w[1..w.len() - 1]
            .chars()
            .all(|c| c == '.' || c == ':' || c.is_ascii_digit())
}

/// Drops form suffixes, unspoken parenthesized parts and prosodic marks;
/// compound joiners become `joiner`.
fn clean_word(w: &str, joiner: &str) -> Option<String> {
    let w = w.split('@').next().unwrap_or("");
    let mut out = String::with_capacity(w.len());
    let mut paren = 0usize;
    for c in w.chars() {
        match c {
            '(' => paren += 1,
            ')' => paren = paren.saturating_sub(1),
            _ if paren > 0 => {}
            ':' | '^' | '\u{2191}' | '\u{2193}' => {}
            '_' | '+' => out.push_str(joiner),
            _ => out.push(c),
        }
    }
    let out = out
        .trim_matches(|c: char| c == '-' || c.is_whitespace())
        .to_string();
    if out.chars().any(char::is_alphanumeric) {
        Some(out)
    } else {
        None
    }
}

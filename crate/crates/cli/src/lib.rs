//! The `werange` command line: `evaluate`, `derive` and `chat-import`.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::UNIX_EPOCH;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{Map, Value};

use werange::config::{ConfigError, RunConfig};
use werange::corpus::{
    load_hypotheses, load_manifest, parse_chat_with, CorpusError, GroupLabel, PolicyKind,
};
use werange::metrics::{score_utterance, EidMode, UtteranceScore};
use werange::report::{write_reports, EvaluationReport, OutputFormat, ReportError, RunMetadata};
use werange::textnorm::{derive_convention, render_tokens, tokenize, validate_convention};
use werange::{PolicyId, Transcript};

#[derive(Debug, Parser)]
#[command(
    name = "werange",
    version,
    about = "Multi-reference ASR scoring with convention-labeled reports"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score hypotheses against every reference convention and write reports.
    Evaluate(EvaluateArgs),
    /// Add a rule-derived reference for one policy to every manifest record.
    Derive(DeriveArgs),
    /// Build a verbatim manifest from a directory of CHAT files.
    ChatImport(ChatImportArgs),
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub manifest: PathBuf,
    pub hypotheses: PathBuf,
    /// Run configuration (TOML). Defaults to the shipped configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output format, repeatable. Overrides the configuration.
    #[arg(long = "format", value_parser = parse_format)]
    pub formats: Vec<OutputFormat>,
}

#[derive(Debug, Args)]
pub struct DeriveArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Name of the policy to derive.
    #[arg(long)]
    pub policy: String,
    /// Output manifest path.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace references the manifest already has for the policy.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct ChatImportArgs {
    pub chat_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output manifest path.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    s.parse().map_err(|e: ReportError| e.to_string())
}

/// Exit status for a failed run: 2 when the filesystem failed, 1 for
/// anything wrong with the inputs themselves.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|cause| {
        cause.is::<std::io::Error>()
            || cause
                .downcast_ref::<CorpusError>()
                .is_some_and(CorpusError::is_io)
            || cause
                .downcast_ref::<ConfigError>()
                .is_some_and(ConfigError::is_io)
            || matches!(
                cause.downcast_ref::<ReportError>(),
                Some(ReportError::Io { .. })
            )
            || cause
                .downcast_ref::<werange::Error>()
                .is_some_and(werange::Error::is_io)
    });
    if io {
        2
    } else {
        1
    }
}

/// Parses arguments and runs the command, reporting errors on stderr.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Evaluate(a) => cmd_evaluate(&a).map(|_| ()),
        Command::Derive(a) => cmd_derive(&a),
        Command::ChatImport(a) => cmd_chat_import(&a),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

/// `SOURCE_DATE_EPOCH` when set, else the newest modification time among
/// the inputs, so reruns on unchanged inputs stamp the same time.
fn run_timestamp(inputs: &[&Path]) -> Result<String> {
    let secs = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v
            .trim()
            .parse::<i64>()
            .map_err(|_| anyhow!("SOURCE_DATE_EPOCH is not an integer: {v:?}"))?,
        Err(_) => {
            let mut newest = 0i64;
            for p in inputs {
                let modified = std::fs::metadata(p)
                    .and_then(|m| m.modified())
                    .with_context(|| format!("cannot stat {}", p.display()))?;
                let s = modified
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs() as i64)
                    .unwrap_or(0);
                newest = newest.max(s);
            }
            newest
        }
    };
    let t = DateTime::<Utc>::from_timestamp(secs, 0)
        .ok_or_else(|| anyhow!("timestamp {secs} out of range"))?;
    Ok(t.to_rfc3339_opts(SecondsFormat::Secs, true))
}

/// Runs an evaluation and returns the files written.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<Vec<PathBuf>> {
    let config = load_config(args.config.as_deref())?;
    let corpus = load_manifest(
        &args.manifest,
        &config.policies,
        &config.normalization,
        &config.vocabulary,
    )?;
    let hypotheses = load_hypotheses(&args.hypotheses, &config.normalization)?;

    let hyp_origin = args.hypotheses.display();
    for (system, by_utt) in &hypotheses {
        if let Some(u) = by_utt.keys().find(|u| corpus.get(u).is_none()) {
            bail!("{hyp_origin}: system \"{system}\" has a hypothesis for \"{u}\", which is not in the manifest");
        }
        if let Some(e) = corpus
            .entries()
            .iter()
            .find(|e| !by_utt.contains_key(&e.utterance.utterance_id))
        {
            bail!(
                "{hyp_origin}: system \"{system}\" has no hypothesis for utterance \"{}\"",
                e.utterance.utterance_id
            );
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers.unwrap_or(0))
        .build()
        .context("cannot start worker pool")?;
    let policies = corpus.policies();
    let systems: Vec<(String, Vec<UtteranceScore>)> = pool.install(|| {
        hypotheses
            .iter()
            .map(|(system, by_utt)| {
                let scores = corpus
                    .entries()
                    .par_iter()
                    .map(|e| {
                        score_utterance(e, &by_utt[&e.utterance.utterance_id].transcript, policies)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((system.clone(), scores))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut inputs = vec![args.manifest.as_path(), args.hypotheses.as_path()];
    if let Some(c) = &args.config {
        inputs.push(c);
    }
    let metadata = RunMetadata {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: config.digest.clone(),
        timestamp: run_timestamp(&inputs)?,
    };
    let report = EvaluationReport::build(&corpus, &config, &systems, metadata)?;
    let formats = if args.formats.is_empty() {
        config.formats.clone()
    } else {
        args.formats.clone()
    };
    if config.eid_mode == EidMode::PerUtterance && formats.contains(&OutputFormat::Csv) {
        eprintln!(
            "note: eid_decomposition.csv skipped; the decomposition needs aggregate-mode EID"
        );
    }
    let written = write_reports(&report, &formats, &args.out)?;
    eprintln!(
        "scored {} system(s) on {} utterance(s); wrote {} file(s) to {}",
        systems.len(),
        corpus.len(),
        written.len(),
        args.out.display()
    );
    Ok(written)
}

fn source_policy(config: &RunConfig) -> Result<&PolicyId> {
    config
        .policies
        .iter()
        .find(|p| p.kind() == PolicyKind::Verbatim)
        .ok_or_else(|| anyhow!("the configuration has no verbatim-kind policy to derive from"))
}

pub fn cmd_derive(args: &DeriveArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let target = config
        .policy(&args.policy)
        .ok_or_else(|| anyhow!("policy \"{}\" is not in the configuration", args.policy))?
        .clone();
    let rules = config.rules_for(&target).expect("every policy has rules");
    let source = source_policy(&config)?;
    let origin = args.manifest.display().to_string();
    let text =
        std::fs::read_to_string(&args.manifest).with_context(|| format!("cannot read {origin}"))?;

    let mut out = String::new();
    let mut derived_count = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: Map<String, Value> = serde_json::from_str(line)
            .with_context(|| format!("{origin}:{lineno}: malformed record"))?;
        let utterance_id = record
            .get("utterance_id")
            .and_then(Value::as_str)
            .ok_or_else(|| anyhow!("{origin}:{lineno}: record has no string \"utterance_id\""))?
            .to_string();
        let refs = record
            .get_mut("references")
            .and_then(Value::as_object_mut)
            .ok_or_else(|| {
                anyhow!("{origin}:{lineno}: record \"{utterance_id}\" has no \"references\" object")
            })?;
        if refs.contains_key(target.name()) && !args.overwrite {
            bail!(
                "{origin}:{lineno}: utterance \"{utterance_id}\" already has a \"{}\" reference (pass --overwrite to replace it)",
                target.name()
            );
        }
        let raw = refs
            .get(source.name())
            .and_then(Value::as_str)
            .ok_or_else(|| {
                anyhow!(
                    "{origin}:{lineno}: utterance \"{utterance_id}\" has no \"{}\" reference to derive from",
                    source.name()
                )
            })?
            .to_string();
        let verbatim = Transcript::reference(
            &utterance_id,
            source.clone(),
            tokenize(&raw, &config.normalization),
        );
        let derived = derive_convention(&verbatim, rules)?;
        debug_assert!(validate_convention(&derived, rules).is_empty());
        let rendered = if derived.tokens == verbatim.tokens {
            raw
        } else {
            render_tokens(&derived.tokens)
        };
        refs.insert(target.name().to_string(), Value::String(rendered));
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
        derived_count += 1;
    }
    std::fs::write(&args.out, out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    eprintln!(
        "derived \"{}\" for {derived_count} record(s)",
        target.name()
    );
    Ok(())
}

pub fn cmd_chat_import(args: &ChatImportArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let verbatim = source_policy(&config)?.clone();
    let dir = &args.chat_dir;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read directory {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .with_context(|| format!("cannot read directory {}", dir.display()))?;
    files.retain(|p| p.extension().is_some_and(|x| x == "cha"));
    files.sort();

    let mut records = Vec::new();
    let mut unmapped = Vec::new();
    let mut seen = BTreeSet::new();
    for path in &files {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let parsed = parse_chat_with(&raw, &config.chat.tier_filter, &config.normalization)
            .with_context(|| format!("{}", path.display()))?;
        if !seen.insert(stem.clone()) {
            bail!(
                "{}: utterance id \"{stem}\" is used by another file",
                path.display()
            );
        }
        let code = parsed.group_code_for(&config.chat.tier_filter);
        let group: Option<GroupLabel> = config.chat.files.get(&stem).cloned().or_else(|| {
            let code = code?;
            config
                .chat
                .group_codes
                .get(code)
                .cloned()
                .or_else(|| config.vocabulary.get(code).cloned())
        });
        let Some(group) = group else {
            unmapped.push(format!(
                "{} (group code {})",
                path.display(),
                code.map_or("missing".to_string(), |c| format!("\"{c}\""))
            ));
            continue;
        };
        if parsed.no_matching_tier {
            eprintln!(
                "warning: {}: no main tier matches the tier filter; reference is empty",
                path.display()
            );
        }
        let mut refs = Map::new();
        refs.insert(
            verbatim.name().to_string(),
            Value::String(render_tokens(&parsed.tokens)),
        );
        let mut record = Map::new();
        record.insert("utterance_id".into(), Value::String(stem.clone()));
        record.insert("speaker_id".into(), Value::String(stem));
        record.insert("group".into(), Value::String(group.to_string()));
        record.insert("references".into(), Value::Object(refs));
        records.push(Value::Object(record));
    }
    if !unmapped.is_empty() {
        bail!(
            "cannot map a speaker group for {} file(s); add [chat.group_codes] or [chat.files] entries:\n  {}",
            unmapped.len(),
            unmapped.join("\n  ")
        );
    }
    let mut out = String::new();
    for r in &records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(&args.out, out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    eprintln!(
        "imported {} CHAT file(s) from {}",
        records.len(),
        dir.display()
    );
    Ok(())
}

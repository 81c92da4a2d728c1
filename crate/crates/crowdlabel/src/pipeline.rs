//! Pipeline stages over files. Each stage reads JSONL produced by the one
//! before it and writes its own output atomically.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use crowdlabel_core::consensus::failed_review_item;
use crowdlabel_core::evaluation::{score_against_gold, EvalReport, EvalUnit};
use crowdlabel_core::review::{ReviewContext, ReviewEvent};
use crowdlabel_core::rules::apply_comment_rules;
use crowdlabel_core::{
    decide, flag_for_review, merge_final_dataset, normalize_pairs, preprocess, record_seed, tally, Channel,
    CleanComment, Codebook, CommentRecord, ConsensusError, ConsensusRecord, ConsensusResult, EquivalencePolicy,
    ExtractionResult, PairRecord, PostRecord, PreprocessConfig, Resolution, ReviewItem, RuleOutcome, Task, VoteSet,
    VoteValue,
};
use serde::{Deserialize, Serialize};

use crate::config::{BackendKind, Config};
use crate::ensemble::{
    run_ensemble, AnnotatorHandle, Backend, HttpBackend, PromptContext, ResponseCache, RunStats, ScriptedBackend,
    TaskSpec,
};
use crate::io::{
    gold_by_comment, ingest_comments, ingest_gold, ingest_posts, read_jsonl, write_jsonl, Kind,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub records: usize,
    pub duplicates: usize,
}

/// Validates and normalizes one raw file. For comments, `posts` is a
/// normalized posts file to check references against and `clean_out`
/// receives the preprocessed text.
pub fn ingest(
    kind: Kind,
    input: &Path,
    out: &Path,
    posts: Option<&Path>,
    clean_out: Option<&Path>,
    pre: &PreprocessConfig,
) -> Result<IngestSummary> {
    match kind {
        Kind::Posts => {
            let r = ingest_posts(input)?;
            write_jsonl(out, &r.records)?;
            Ok(IngestSummary { records: r.records.len(), duplicates: r.duplicates })
        }
        Kind::Comments => {
            let post_ids = match posts {
                Some(p) => Some(read_jsonl::<PostRecord>(p)?.into_iter().map(|p| p.post_id).collect::<BTreeSet<_>>()),
                None => None,
            };
            let r = ingest_comments(input, post_ids.as_ref())?;
            write_jsonl(out, &r.records)?;
            if let Some(clean) = clean_out {
                write_jsonl(clean, r.records.iter().map(|c| preprocess(c, pre)))?;
            }
            Ok(IngestSummary { records: r.records.len(), duplicates: r.duplicates })
        }
        Kind::Gold => {
            let r = ingest_gold(input)?;
            write_jsonl(out, &r.records)?;
            Ok(IngestSummary { records: r.records.len(), duplicates: r.duplicates })
        }
    }
}

/// Builds the first `n` annotators of the configuration.
pub fn build_annotators(config: &Config, n: usize) -> Result<Vec<AnnotatorHandle>> {
    if config.annotators.len() < n {
        return Err(Error::Config(format!(
            "ensemble size {n} requested but {} annotators are configured",
            config.annotators.len()
        )));
    }
    config.annotators[..n]
        .iter()
        .map(|a| {
            let backend: Arc<dyn Backend> = match a.backend {
                BackendKind::RemoteHttp => {
                    let api_key = match &a.api_key_env {
                        Some(var) => Some(std::env::var(var).map_err(|_| {
                            Error::Config(format!("annotator {}: environment variable {var} is not set", a.id))
                        })?),
                        None => None,
                    };
                    let settings = serde_json::to_value(&a.settings).expect("settings are JSON");
                    Arc::new(HttpBackend::new(
                        a.endpoint.clone().unwrap_or_default(),
                        api_key,
                        settings,
                        Duration::from_secs(a.timeout_secs),
                    ))
                }
                BackendKind::Scripted => {
                    Arc::new(ScriptedBackend::load(a.fixture.as_deref().expect("validated config"))?)
                }
            };
            Ok(AnnotatorHandle { id: a.id.clone(), backend, max_retries: a.max_retries })
        })
        .collect()
}

/// Lookup tables for filling prompt and review context.
#[derive(Debug, Default)]
pub struct ContextSources {
    clean: BTreeMap<String, CleanComment>,
    comments: BTreeMap<String, CommentRecord>,
    posts: BTreeMap<String, PostRecord>,
}

impl ContextSources {
    pub fn load(clean: Option<&Path>, comments: Option<&Path>, posts: Option<&Path>) -> Result<Self> {
        let mut s = Self::default();
        if let Some(p) = clean {
            s.clean = read_jsonl::<CleanComment>(p)?.into_iter().map(|c| (c.comment_id.clone(), c)).collect();
        }
        if let Some(p) = comments {
            s.comments = read_jsonl::<CommentRecord>(p)?.into_iter().map(|c| (c.comment_id.clone(), c)).collect();
        }
        if let Some(p) = posts {
            s.posts = read_jsonl::<PostRecord>(p)?.into_iter().map(|p| (p.post_id.clone(), p)).collect();
        }
        Ok(s)
    }

    fn post_of(&self, comment_id: &str) -> Option<&PostRecord> {
        self.comments.get(comment_id).and_then(|c| self.posts.get(&c.post_id))
    }

    /// Reviewer context for a comment: the original text when available.
    pub fn review_context(&self, comment_id: &str) -> ReviewContext {
        let post = self.post_of(comment_id);
        ReviewContext {
            comment_text: self
                .comments
                .get(comment_id)
                .map(|c| c.text.clone())
                .or_else(|| self.clean.get(comment_id).map(|c| c.text_clean.clone())),
            post_url: post.map(|p| p.url.clone()),
            foreign_name: post.and_then(|p| p.foreign_name.clone()),
            image_description: post.and_then(|p| p.image_description.clone()),
        }
    }

    fn extract_context(&self, c: &CleanComment) -> PromptContext {
        let post = self.post_of(&c.comment_id);
        PromptContext {
            record_id: c.comment_id.clone(),
            comment_text: Some(c.text_clean.clone()),
            foreign_name: post.and_then(|p| p.foreign_name.clone()),
            post_url: post.map(|p| p.url.clone()),
            ..Default::default()
        }
    }

    fn pair_context(&self, p: &PairRecord) -> PromptContext {
        let post = self.post_of(&p.comment_id);
        PromptContext {
            record_id: p.pair_id.clone(),
            comment_text: self
                .clean
                .get(&p.comment_id)
                .map(|c| c.text_clean.clone())
                .or_else(|| self.comments.get(&p.comment_id).map(|c| c.text.clone())),
            name: p.name.clone(),
            explanation: p.explanation.clone(),
            foreign_name: post.and_then(|p| p.foreign_name.clone()),
            image_description: post.and_then(|p| p.image_description.clone()),
            post_url: post.map(|p| p.url.clone()),
        }
    }
}

/// Comment id a record id belongs to: pair ids are `comment#position`.
pub fn comment_of(record_id: &str) -> &str {
    record_id.rsplit_once('#').map_or(record_id, |(c, _)| c)
}

pub struct AnnotateArgs<'a> {
    pub task: Task,
    /// Clean comments for extraction, pair records for the other tasks.
    pub input: &'a Path,
    pub sources: &'a ContextSources,
    pub out: &'a Path,
    pub skipped_out: Option<&'a Path>,
    pub cache: Option<&'a Path>,
    pub ensemble_size: usize,
}

pub fn annotate(config: &Config, codebook: &Codebook, args: &AnnotateArgs<'_>) -> Result<RunStats> {
    let contexts: Vec<PromptContext> = match args.task {
        Task::ExtractPair => read_jsonl::<CleanComment>(args.input)?
            .iter()
            .map(|c| args.sources.extract_context(c))
            .collect(),
        _ => read_jsonl::<PairRecord>(args.input)?
            .iter()
            .filter(|p| !p.is_void())
            .map(|p| args.sources.pair_context(p))
            .collect(),
    };
    let annotators = build_annotators(config, args.ensemble_size)?;
    let cache = match args.cache {
        Some(p) => Some(ResponseCache::load(p)?),
        None => None,
    };
    let spec = TaskSpec::for_task(args.task);
    let out = run_ensemble(&annotators, &spec, &contexts, codebook, cache.as_ref(), config.max_in_flight)?;
    write_jsonl(args.out, &out.vote_sets)?;
    if let Some(p) = args.skipped_out {
        write_jsonl(p, &out.skipped)?;
    }
    if let (Some(c), Some(p)) = (cache, args.cache) {
        c.save(p)?;
    }
    Ok(out.stats)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConsenseSummary {
    pub records: usize,
    pub accepted: usize,
    pub flagged: usize,
    pub failed: usize,
}

/// Pure consensus over vote sets: results for records with usable votes,
/// and review items for flagged or failed records.
pub fn consense_votes(
    vote_sets: &[VoteSet],
    policy: &EquivalencePolicy,
    threshold: u8,
    seed: u64,
) -> Result<(Vec<ConsensusResult>, Vec<ReviewItem>, ConsenseSummary)> {
    let mut results = Vec::new();
    let mut items = Vec::new();
    let mut summary = ConsenseSummary { records: vote_sets.len(), ..Default::default() };
    for vs in vote_sets {
        if vs.ensemble_failed() {
            summary.failed += 1;
            items.push(failed_review_item(vs));
            continue;
        }
        match tally(vs, policy) {
            Ok(t) => {
                let r = decide(&t, record_seed(seed, &vs.record_id));
                match flag_for_review(&r, vs, threshold) {
                    Some(item) => {
                        summary.flagged += 1;
                        items.push(item);
                    }
                    None => summary.accepted += 1,
                }
                results.push(r);
            }
            Err(ConsensusError::NoUsableVotes(_)) => {
                summary.failed += 1;
                items.push(failed_review_item(vs));
            }
        }
    }
    Ok((results, items, summary))
}

pub fn consense(
    votes: &Path,
    out: &Path,
    review_out: &Path,
    policy: &EquivalencePolicy,
    threshold: u8,
    seed: u64,
) -> Result<ConsenseSummary> {
    let vote_sets: Vec<VoteSet> = read_jsonl(votes)?;
    let (results, items, summary) = consense_votes(&vote_sets, policy, threshold, seed)?;
    write_jsonl(out, &results)?;
    write_jsonl(review_out, &items)?;
    Ok(summary)
}

/// Turns extraction consensus into pair records and applies the
/// deterministic correction rules. Records that only exist as failed review
/// items get an empty record so a later resolution has somewhere to land.
pub fn apply_rules(
    results: &[ConsensusResult],
    failed: &[ReviewItem],
) -> Result<(Vec<ConsensusRecord>, Vec<RuleOutcome>)> {
    let mut records = BTreeMap::new();
    let mut audit = Vec::new();
    for r in results {
        let VoteValue::Pairs { pairs } = &r.label else {
            return Err(Error::Invalid(format!("record {}: rules apply to extract_pair consensus only", r.record_id)));
        };
        let extraction = ExtractionResult { comment_id: r.record_id.clone(), candidates: pairs.clone() };
        let (kept, log) = apply_comment_rules(&normalize_pairs(&extraction));
        audit.extend(log);
        records.insert(
            r.record_id.clone(),
            ConsensusRecord { record_id: r.record_id.clone(), consistency: r.consistency, pairs: kept },
        );
    }
    for item in failed.iter().filter(|i| i.task == Task::ExtractPair) {
        records.entry(item.record_id.clone()).or_insert_with(|| ConsensusRecord {
            record_id: item.record_id.clone(),
            consistency: 0,
            pairs: Vec::new(),
        });
    }
    Ok((records.into_values().collect(), audit))
}

pub fn rules(consensus: &Path, review_items: Option<&Path>, out: &Path, audit_out: Option<&Path>) -> Result<usize> {
    let results: Vec<ConsensusResult> = read_jsonl(consensus)?;
    let items: Vec<ReviewItem> = match review_items {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let (records, audit) = apply_rules(&results, &items)?;
    write_jsonl(out, &records)?;
    if let Some(p) = audit_out {
        write_jsonl(p, &audit)?;
    }
    Ok(records.len())
}

/// Attaches reviewer context to review items.
pub fn review_export(items: &Path, out: &Path, sources: &ContextSources) -> Result<usize> {
    let items: Vec<ReviewItem> = read_jsonl(items)?;
    let n = items.len();
    write_jsonl(
        out,
        items.into_iter().map(|i| {
            let ctx = sources.review_context(comment_of(&i.record_id));
            i.with_context(ctx)
        }),
    )?;
    Ok(n)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ResolutionLine {
    Event(ReviewEvent),
    Plain(Resolution),
}

/// Reads resolutions from a review event log or a plain resolutions file.
pub fn read_resolutions(path: &Path) -> Result<Vec<Resolution>> {
    let lines: Vec<ResolutionLine> = read_jsonl(path)?;
    Ok(lines
        .into_iter()
        .filter_map(|l| match l {
            ResolutionLine::Event(ReviewEvent::Resolved { resolution }) | ResolutionLine::Plain(resolution) => {
                Some(resolution)
            }
            ResolutionLine::Event(ReviewEvent::Skipped { .. }) => None,
        })
        .collect())
}

/// Labels from classification consensus and label-task resolutions, applied
/// to finished pairs keyed by pair id. Gold pairs keep their own labels.
pub fn apply_labels(
    pairs: &mut [PairRecord],
    label_results: &[ConsensusResult],
    items: &[ReviewItem],
    resolutions: &[Resolution],
    codebook: &Codebook,
) -> Result<()> {
    let mut by_pair: BTreeMap<&str, Vec<&ConsensusResult>> = BTreeMap::new();
    for r in label_results {
        by_pair.entry(r.record_id.as_str()).or_default().push(r);
    }
    let item_task: BTreeMap<&str, (Task, &str)> =
        items.iter().map(|i| (i.item_id.as_str(), (i.task, i.record_id.as_str()))).collect();
    let mut ordered: Vec<&Resolution> = resolutions.iter().collect();
    ordered.sort_by(|a, b| a.decided_at.cmp(&b.decided_at).then_with(|| a.reviewer_id.cmp(&b.reviewer_id)));
    let mut overrides: BTreeMap<(String, Task), &Resolution> = BTreeMap::new();
    for res in ordered {
        if let Some((task, record)) = item_task.get(res.item_id.as_str()) {
            if *task != Task::ExtractPair {
                overrides.insert((record.to_string(), *task), res);
            }
        }
    }
    for p in pairs.iter_mut() {
        if p.provenance == Some(crowdlabel_core::Provenance::Gold) {
            continue;
        }
        for r in by_pair.get(p.pair_id.as_str()).into_iter().flatten() {
            let Some(channel) = r.task.channel() else { continue };
            if let VoteValue::Label { label, explanation } = &r.label {
                set_label(p, channel, label.as_deref(), codebook)?;
                if channel == Channel::Semantic {
                    if let Some(e) = explanation {
                        p.generated_explanations.insert(channel, e.clone());
                    }
                }
            }
        }
        for task in [Task::SemanticExplain, Task::PhoneticClassify, Task::VisualClassify] {
            let Some(res) = overrides.get(&(p.pair_id.clone(), task)) else { continue };
            let channel = task.channel().expect("labelling task");
            set_label(p, channel, res.final_labels.get(&channel).map(String::as_str), codebook)?;
            if channel == Channel::Semantic {
                if let Some(e) = &res.final_explanation {
                    p.generated_explanations.insert(channel, e.clone());
                }
            }
        }
    }
    Ok(())
}

fn set_label(p: &mut PairRecord, channel: Channel, label: Option<&str>, codebook: &Codebook) -> Result<()> {
    codebook
        .validate_label(channel, label)
        .map_err(|e| Error::Invalid(format!("pair {}: {e}", p.pair_id)))?;
    match label {
        Some(id) => {
            p.channel_labels.insert(channel, id.to_string());
        }
        None => {
            p.channel_labels.remove(&channel);
        }
    }
    Ok(())
}

pub struct MergeArgs<'a> {
    pub consensus: &'a Path,
    pub review_items: Option<&'a Path>,
    pub resolutions: Option<&'a Path>,
    pub gold: Option<&'a Path>,
    /// Consensus files of labelling tasks.
    pub labels: &'a [PathBuf],
    pub out: &'a Path,
}

fn read_opt<T: serde::de::DeserializeOwned>(p: Option<&Path>) -> Result<Vec<T>> {
    match p {
        Some(p) => read_jsonl(p),
        None => Ok(Vec::new()),
    }
}

pub fn merge(args: &MergeArgs<'_>, codebook: &Codebook) -> Result<usize> {
    let consensus: Vec<ConsensusRecord> = read_jsonl(args.consensus)?;
    let items: Vec<ReviewItem> = read_opt(args.review_items)?;
    let resolutions = match args.resolutions {
        Some(p) => read_resolutions(p)?,
        None => Vec::new(),
    };
    let gold: Vec<PairRecord> = read_opt(args.gold)?;
    let mut out = merge_final_dataset(&consensus, &items, &resolutions, &gold)?;
    let mut label_results = Vec::new();
    for p in args.labels {
        label_results.extend(read_jsonl::<ConsensusResult>(p)?);
    }
    apply_labels(&mut out, &label_results, &items, &resolutions, codebook)?;
    for p in &out {
        codebook.validate_labels(&p.channel_labels).map_err(|e| Error::Invalid(format!("pair {}: {e}", p.pair_id)))?;
    }
    write_jsonl(args.out, &out)?;
    Ok(out.len())
}

/// Scores pipeline output against gold. Output is rebuilt from consensus
/// and resolutions without gold substitution, restricted to gold comments.
pub fn evaluate_records(
    consensus: &[ConsensusRecord],
    items: &[ReviewItem],
    resolutions: &[Resolution],
    gold: &[PairRecord],
    policy: &EquivalencePolicy,
) -> Result<EvalReport> {
    let gold_map = gold_by_comment(gold);
    let merged = merge_final_dataset(consensus, items, resolutions, &[])?;
    let mut pred: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for p in &merged {
        pred.entry(p.comment_id.as_str()).or_default().push(p.candidate());
    }
    let reviewed: BTreeSet<&str> = resolutions
        .iter()
        .filter_map(|r| items.iter().find(|i| i.item_id == r.item_id))
        .filter(|i| i.task == Task::ExtractPair)
        .map(|i| i.record_id.as_str())
        .collect();
    let units: Vec<EvalUnit> = consensus
        .iter()
        .filter(|r| gold_map.contains_key(&r.record_id))
        .map(|r| EvalUnit {
            record_id: r.record_id.clone(),
            consistency: r.consistency,
            pairs: pred.get(r.record_id.as_str()).cloned().unwrap_or_default(),
            provisional: reviewed
                .contains(r.record_id.as_str())
                .then(|| r.pairs.iter().filter(|p| !p.is_void()).map(PairRecord::candidate).collect()),
        })
        .collect();
    Ok(score_against_gold(&units, &gold_map, policy)?)
}

pub struct EvaluateArgs<'a> {
    pub consensus: &'a Path,
    pub review_items: Option<&'a Path>,
    pub resolutions: Option<&'a Path>,
    pub gold: &'a Path,
}

pub fn evaluate(args: &EvaluateArgs<'_>, policy: &EquivalencePolicy) -> Result<EvalReport> {
    let consensus: Vec<ConsensusRecord> = read_jsonl(args.consensus)?;
    let items: Vec<ReviewItem> = read_opt(args.review_items)?;
    let resolutions = match args.resolutions {
        Some(p) => read_resolutions(p)?,
        None => Vec::new(),
    };
    let gold: Vec<PairRecord> = read_jsonl(args.gold)?;
    evaluate_records(&consensus, &items, &resolutions, &gold, policy)
}

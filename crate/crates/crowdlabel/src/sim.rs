//! Synthetic end-to-end run: a generated corpus with known gold, scripted
//! annotators with independent errors, an oracle reviewer, and evaluation
//! before and after review.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crowdlabel_core::evaluation::{EvalReport, Outcome};
use crowdlabel_core::{Candidate, ConsensusRecord, EquivalencePolicy, PairRecord, Resolution, ReviewItem, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::codebook::shipped_codebook;
use crate::config::{AnnotatorConfig, BackendKind, Config};
use crate::ensemble::{ScriptedFixture, ScriptedReply};
use crate::io::{read_jsonl, write_atomic, write_json, write_jsonl, Kind};
use crate::pipeline::{self, AnnotateArgs, ContextSources, MergeArgs};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub records: usize,
    pub annotators: usize,
    /// Probability that one annotator gets one record wrong.
    pub error_rate: f64,
    /// Share of errors that pick the decoy name mentioned in the comment.
    pub decoy_share: f64,
    pub seed: u64,
    pub review_threshold: u8,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { records: 500, annotators: 5, error_rate: 0.10, decoy_share: 0.7, seed: 20240601, review_threshold: 100 }
    }
}

// no 是 or 的: they are fillers under the equivalence policy
const HAN: &str = "李王张刘陈杨赵黄周吴徐孙胡朱高林何郭马罗梁宋郑谢韩唐冯于董萧程曹袁邓许傅沈曾彭吕苏卢蒋蔡贾丁魏薛叶阎余潘杜戴夏钟汪田任姜范方石姚谭廖邹熊金陆郝孔白崔康毛邱秦江史顾侯邵孟龙万段雷钱汤尹黎易常武乔贺赖龚文华明国建伟芳娜秀英敏静丽强磊军洋勇艳杰娟涛超霞平刚桂";

const REASONS: &[&str] = &["长得很像", "名字好听", "发音接近", "气质很配", "笑起来很温柔", "看着很聪明", "很有书卷气", "像邻家大哥"];

struct Record {
    comment_id: String,
    name: String,
    explanation: String,
    decoy: String,
}

fn han_name(rng: &mut ChaCha8Rng, pool: &[char]) -> String {
    let len = if rng.random_bool(0.7) { 2 } else { 3 };
    (0..len).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

fn reply(name: &str, explanation: &str) -> String {
    json!({ "pairs": [{ "name": name, "explanation": explanation }] }).to_string()
}

/// Generated inputs: raw files plus one fixture per annotator.
pub struct SimCorpus {
    pub posts: Vec<serde_json::Value>,
    pub comments: Vec<serde_json::Value>,
    pub gold: Vec<serde_json::Value>,
    pub fixtures: Vec<(String, ScriptedFixture)>,
}

pub fn generate(cfg: &SimConfig) -> SimCorpus {
    let pool: Vec<char> = HAN.chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.records);
    for i in 0..cfg.records {
        let name = han_name(&mut rng, &pool);
        let mut decoy = han_name(&mut rng, &pool);
        while decoy == name || decoy.contains(&name) || name.contains(&decoy) {
            decoy = han_name(&mut rng, &pool);
        }
        let explanation = REASONS[rng.random_range(0..REASONS.len())].to_string();
        records.push(Record { comment_id: format!("c{i:04}"), name, explanation, decoy });
    }
    let posts = vec![json!({
        "post_id": "p0",
        "url": "https://example.invalid/p0",
        "foreign_name": "Adam",
        "like_count": 12000,
        "comment_count": cfg.records,
        "posted_at": 1_700_000_000,
    })];
    let comments = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "comment_id": r.comment_id,
                "post_id": "p0",
                "text": format!("就叫{}吧，{}。{}也行但不如这个", r.name, r.explanation, r.decoy),
                "like_count": (i * 37) % 2000,
                "posted_at": 1_700_000_000 + i as i64 * 60,
            })
        })
        .collect();
    let gold = records
        .iter()
        .map(|r| json!({ "comment_id": r.comment_id, "name": r.name, "explanation": r.explanation }))
        .collect();
    let mut fixtures = Vec::with_capacity(cfg.annotators);
    for a in 0..cfg.annotators {
        let mut arng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x5eed_0000 + a as u64));
        let mut responses = BTreeMap::new();
        for r in &records {
            let text = if arng.random_bool(cfg.error_rate) {
                if arng.random_bool(cfg.decoy_share) {
                    reply(&r.decoy, &r.explanation)
                } else {
                    // a private misreading: one character swapped
                    let mut chars: Vec<char> = r.name.chars().collect();
                    let k = arng.random_range(0..chars.len());
                    let mut c = pool[arng.random_range(0..pool.len())];
                    while c == chars[k] {
                        c = pool[arng.random_range(0..pool.len())];
                    }
                    chars[k] = c;
                    reply(&chars.into_iter().collect::<String>(), &r.explanation)
                }
            } else {
                match arng.random_range(0..3) {
                    0 => reply(&r.name, &r.explanation),
                    1 => reply(&format!("「{}」", r.name), &format!("{}。", r.explanation)),
                    _ => reply(&format!("是{}", r.name), &r.explanation),
                }
            };
            responses.insert(format!("extract_pair:{}", r.comment_id), ScriptedReply::One(text));
        }
        fixtures.push((format!("sim-{a}"), ScriptedFixture { responses, default: None }));
    }
    SimCorpus { posts, comments, gold, fixtures }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimOutcome {
    pub n: usize,
    pub flagged: usize,
    /// Flagged records whose provisional output was incorrect.
    pub flagged_wrong: usize,
    pub correct_before: usize,
    pub correct_after: usize,
    pub before: EvalReport,
    pub after: EvalReport,
    /// Every file the run wrote, in write order.
    pub files: Vec<PathBuf>,
}

fn correct(r: &EvalReport) -> usize {
    r.outcomes.values().filter(|o| **o != Outcome::Incorrect).count()
}

/// Incorrect rate at consistency 100 and below 100.
pub fn incorrect_rates(r: &EvalReport) -> (f64, f64) {
    let mut at = (0usize, 0usize);
    let mut below = (0usize, 0usize);
    for (score, c) in &r.contingency {
        let slot = if *score == 100 { &mut at } else { &mut below };
        slot.0 += c.incorrect;
        slot.1 += c.total();
    }
    let rate = |(w, n): (usize, usize)| if n == 0 { 0.0 } else { w as f64 / n as f64 };
    (rate(at), rate(below))
}

/// Runs every stage inside `dir` through the same functions the command
/// line uses.
pub fn run(cfg: &SimConfig, dir: &Path) -> Result<SimOutcome> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    let f = |name: &str| dir.join(name);
    let mut files = Vec::new();
    let corpus = generate(cfg);

    write_jsonl(&f("raw_posts.jsonl"), &corpus.posts)?;
    write_jsonl(&f("raw_comments.jsonl"), &corpus.comments)?;
    write_jsonl(&f("raw_gold.jsonl"), &corpus.gold)?;
    let mut annotators = Vec::new();
    for (id, fx) in &corpus.fixtures {
        let file = format!("fixture-{id}.json");
        write_json(&f(&file), fx)?;
        files.push(f(&file));
        annotators.push(AnnotatorConfig {
            id: id.clone(),
            backend: BackendKind::Scripted,
            endpoint: None,
            fixture: Some(PathBuf::from(file)),
            api_key_env: None,
            max_retries: 2,
            timeout_secs: 60,
            settings: BTreeMap::new(),
        });
    }
    let config = Config { annotators, ..Config::default() };
    let config_text = toml::to_string(&config).map_err(|e| crate::Error::Invalid(e.to_string()))?;
    write_atomic(&f("config.toml"), config_text.as_bytes())?;
    let config = Config::load(&f("config.toml"))?;
    let codebook = shipped_codebook();
    let policy: EquivalencePolicy = config.policy();

    pipeline::ingest(Kind::Posts, &f("raw_posts.jsonl"), &f("posts.jsonl"), None, None, &config.preprocess())?;
    pipeline::ingest(
        Kind::Comments,
        &f("raw_comments.jsonl"),
        &f("comments.jsonl"),
        Some(&f("posts.jsonl")),
        Some(&f("clean.jsonl")),
        &config.preprocess(),
    )?;
    pipeline::ingest(Kind::Gold, &f("raw_gold.jsonl"), &f("gold.jsonl"), None, None, &config.preprocess())?;
    let sources = ContextSources::load(Some(&f("clean.jsonl")), Some(&f("comments.jsonl")), Some(&f("posts.jsonl")))?;
    pipeline::annotate(
        &config,
        &codebook,
        &AnnotateArgs {
            task: Task::ExtractPair,
            input: &f("clean.jsonl"),
            sources: &sources,
            out: &f("votes.jsonl"),
            skipped_out: Some(&f("skipped.jsonl")),
            cache: None,
            ensemble_size: cfg.annotators,
        },
    )?;
    pipeline::consense(&f("votes.jsonl"), &f("consensus.jsonl"), &f("review.jsonl"), &policy, cfg.review_threshold, cfg.seed)?;
    pipeline::rules(&f("consensus.jsonl"), Some(&f("review.jsonl")), &f("records.jsonl"), Some(&f("audit.jsonl")))?;
    pipeline::review_export(&f("review.jsonl"), &f("review_export.jsonl"), &sources)?;

    // oracle reviewer: every flagged item is resolved to gold
    let items: Vec<ReviewItem> = read_jsonl(&f("review_export.jsonl"))?;
    let gold: Vec<PairRecord> = read_jsonl(&f("gold.jsonl"))?;
    let gold_by_id: BTreeMap<&str, &PairRecord> = gold.iter().map(|g| (g.comment_id.as_str(), g)).collect();
    let resolutions: Vec<Resolution> = items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let g = gold_by_id[item.record_id.as_str()];
            Resolution {
                item_id: item.item_id.clone(),
                reviewer_id: "oracle".into(),
                final_name: g.name.clone(),
                final_explanation: g.explanation.clone(),
                final_labels: BTreeMap::new(),
                rule_tag: None,
                decided_at: 1_700_000_000 + i as i64,
                additional_pairs: Vec::<Candidate>::new(),
            }
        })
        .collect();
    write_jsonl(&f("resolutions.jsonl"), &resolutions)?;
    pipeline::merge(
        &MergeArgs {
            consensus: &f("records.jsonl"),
            review_items: Some(&f("review_export.jsonl")),
            resolutions: Some(&f("resolutions.jsonl")),
            gold: None,
            labels: &[],
            out: &f("final.jsonl"),
        },
        &codebook,
    )?;

    let records: Vec<ConsensusRecord> = read_jsonl(&f("records.jsonl"))?;
    let before = pipeline::evaluate_records(&records, &[], &[], &gold, &policy)?;
    let after = pipeline::evaluate_records(&records, &items, &resolutions, &gold, &policy)?;
    write_json(&f("eval_before.json"), &before)?;
    write_json(&f("eval_after.json"), &after)?;

    let flagged_wrong =
        items.iter().filter(|i| before.outcomes.get(&i.record_id) == Some(&Outcome::Incorrect)).count();
    for name in [
        "raw_posts.jsonl",
        "raw_comments.jsonl",
        "raw_gold.jsonl",
        "config.toml",
        "posts.jsonl",
        "comments.jsonl",
        "clean.jsonl",
        "gold.jsonl",
        "votes.jsonl",
        "skipped.jsonl",
        "consensus.jsonl",
        "review.jsonl",
        "records.jsonl",
        "audit.jsonl",
        "review_export.jsonl",
        "resolutions.jsonl",
        "final.jsonl",
        "eval_before.json",
        "eval_after.json",
    ] {
        files.push(f(name));
    }
    Ok(SimOutcome {
        n: before.n,
        flagged: items.len(),
        flagged_wrong,
        correct_before: correct(&before),
        correct_after: correct(&after),
        before,
        after,
        files,
    })
}

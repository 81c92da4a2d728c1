use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crowdlabel::codebook::resolve_codebook;
use crowdlabel::config::Config;
use crowdlabel::io::{write_atomic, write_json, Kind};
use crowdlabel::manifest::{Stage, StageStatus};
use crowdlabel::pipeline::{self, AnnotateArgs, ContextSources, EvaluateArgs, MergeArgs};
use crowdlabel::report::{self, KsField};
use crowdlabel::service::{self, AppState, ServiceConfig, TOKEN_ENV};
use crowdlabel::{sim, Error, Result};
use crowdlabel_core::Task;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "crowdlabel", version, about = "Ensemble annotation pipeline with human review")]
struct Cli {
    /// Run configuration (TOML). Defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for consensus tie-breaking and simulation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory holding the run manifest and lock.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Rerun a stage even if the manifest says it is up to date.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and normalize raw posts, comments or gold pairs.
    Ingest(IngestArgs),
    /// Run the annotator ensemble over records.
    Annotate(AnnotateCmd),
    /// Majority vote with consistency scores; emits review items.
    Consense(ConsenseArgs),
    /// Turn extraction consensus into pair records and apply correction rules.
    Rules(RulesArgs),
    /// Attach reviewer context to review items.
    ReviewExport(ReviewExportArgs),
    /// Serve the review API.
    Serve(ServeArgs),
    /// Build the final dataset from consensus, resolutions and gold.
    Merge(MergeCmd),
    /// Score pipeline output against gold.
    Evaluate(EvaluateCmd),
    /// Statistical profiles of a finished dataset.
    Stats(StatsArgs),
    /// Cost/accuracy trade-off table.
    Report(ReportArgs),
    /// End-to-end run on a synthetic corpus with scripted annotators.
    Simulate(SimulateArgs),
}

#[derive(Args, Serialize)]
struct IngestArgs {
    #[arg(long)]
    kind: Kind,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Normalized posts file; comments must reference its posts.
    #[arg(long)]
    posts: Option<PathBuf>,
    /// Where to write preprocessed comment text.
    #[arg(long)]
    clean_out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct Sources {
    /// Preprocessed comments.
    #[arg(long)]
    clean: Option<PathBuf>,
    /// Normalized comments.
    #[arg(long)]
    comments: Option<PathBuf>,
    /// Normalized posts.
    #[arg(long)]
    posts: Option<PathBuf>,
}

impl Sources {
    fn paths(&self) -> Vec<PathBuf> {
        [&self.clean, &self.comments, &self.posts].into_iter().flatten().cloned().collect()
    }

    fn load(&self) -> Result<ContextSources> {
        ContextSources::load(self.clean.as_deref(), self.comments.as_deref(), self.posts.as_deref())
    }
}

#[derive(Args, Serialize)]
struct AnnotateCmd {
    #[arg(long, value_parser = parse_task)]
    task: Task,
    /// Preprocessed comments for extract_pair, pair records otherwise.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    skipped_out: Option<PathBuf>,
    /// Response cache; reruns with unchanged prompts make no backend calls.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    ensemble_size: usize,
    #[command(flatten)]
    sources: Sources,
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    Task::parse(s).ok_or_else(|| {
        format!("unknown task {s:?}; expected extract_pair, semantic_explain, visual_classify or phonetic_classify")
    })
}

#[derive(Args, Serialize)]
struct ConsenseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    review_out: PathBuf,
    /// Records strictly below this consistency go to review.
    #[arg(long, default_value_t = 100)]
    review_threshold: u8,
}

#[derive(Args, Serialize)]
struct RulesArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    review_items: Option<PathBuf>,
    #[arg(long)]
    audit_out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ReviewExportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sources: Sources,
}

#[derive(Args)]
struct ServeArgs {
    /// Review items from review-export.
    #[arg(long)]
    items: PathBuf,
    /// Append-only review event log.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    snapshot_every: u64,
    /// Rule-applied consensus records, enabling /export/final.
    #[arg(long)]
    consensus: Option<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    labels: Vec<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

#[derive(Args, Serialize)]
struct MergeCmd {
    /// Rule-applied consensus records.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    review_items: Option<PathBuf>,
    /// Review event log or resolutions file.
    #[arg(long)]
    resolutions: Option<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Consensus files of labelling tasks.
    #[arg(long)]
    labels: Vec<PathBuf>,
}

#[derive(Args, Serialize)]
struct EvaluateCmd {
    /// Rule-applied consensus records.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    review_items: Option<PathBuf>,
    #[arg(long)]
    resolutions: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(subcommand)]
    profile: StatsProfile,
}

#[derive(Subcommand)]
enum StatsProfile {
    /// Channel-combination distribution, frequency model and VIF.
    Combinations {
        /// Labelled pair records.
        #[arg(long = "in", required_unless_present = "pattern_counts")]
        input: Option<PathBuf>,
        /// Four counts: semantic-only, +phonetic, +visual, all three.
        #[arg(long, conflicts_with = "input")]
        pattern_counts: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Likes per category among viral comments.
    Engagement {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        comments: PathBuf,
        #[arg(long, default_value_t = 1000)]
        viral_threshold: u64,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-sample KS tests of a sample against its population.
    Representativeness {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        population: PathBuf,
        #[arg(long = "field", default_values = ["like_count", "posted_at"])]
        fields: Vec<KsField>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ReportArgs {
    /// JSON array of rounds: label, accuracy_pct, hours, human_effort.
    #[arg(long)]
    rounds: PathBuf,
    /// Corpus size for the manual baseline row.
    #[arg(long)]
    records: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 500)]
    records: usize,
    #[arg(long, default_value_t = 5)]
    ensemble_size: usize,
    #[arg(long, default_value_t = 0.10)]
    error_rate: f64,
    #[arg(long, default_value_t = 100)]
    review_threshold: u8,
}

fn stage<A: Serialize>(
    cli: &Cli,
    name: &str,
    args: &A,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    body: impl FnOnce() -> Result<()>,
) -> Result<()> {
    let keyed = (cli.seed, &cli.config, args);
    let status = Stage { name, args: &keyed, inputs, outputs }.run(cli.run_dir.as_deref(), cli.force, body)?;
    if status == StageStatus::UpToDate {
        eprintln!("{name}: up to date");
    }
    Ok(())
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string(v).expect("summaries serialize"));
}

fn write_optional<T: Serialize>(out: Option<&Path>, v: &T) -> Result<()> {
    match out {
        Some(p) => write_json(p, v),
        None => Ok(()),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let config = Config::load_or_default(cli.config.as_deref())?;
    let mut inputs_of_config: Vec<PathBuf> = cli.config.iter().cloned().collect();
    inputs_of_config.extend(config.codebook.iter().cloned());
    match &cli.command {
        Command::Ingest(a) => {
            let mut inputs = vec![a.input.clone()];
            inputs.extend(a.posts.iter().cloned());
            let mut outputs = vec![a.out.clone()];
            outputs.extend(a.clean_out.iter().cloned());
            stage(cli, &format!("ingest-{}", a.kind), a, inputs, outputs, || {
                let s = pipeline::ingest(
                    a.kind,
                    &a.input,
                    &a.out,
                    a.posts.as_deref(),
                    a.clean_out.as_deref(),
                    &config.preprocess(),
                )?;
                print_json(&s);
                Ok(())
            })
        }
        Command::Annotate(a) => {
            let mut inputs = vec![a.input.clone()];
            inputs.extend(a.sources.paths());
            inputs.extend(inputs_of_config.iter().cloned());
            inputs.extend(config.annotators.iter().filter_map(|x| x.fixture.clone()));
            let mut outputs = vec![a.out.clone()];
            outputs.extend(a.skipped_out.iter().cloned());
            stage(cli, &format!("annotate-{}", a.task), a, inputs, outputs, || {
                let codebook = resolve_codebook(config.codebook.as_deref())?;
                let sources = a.sources.load()?;
                let stats = pipeline::annotate(
                    &config,
                    &codebook,
                    &AnnotateArgs {
                        task: a.task,
                        input: &a.input,
                        sources: &sources,
                        out: &a.out,
                        skipped_out: a.skipped_out.as_deref(),
                        cache: a.cache.as_deref(),
                        ensemble_size: a.ensemble_size,
                    },
                )?;
                print_json(&stats);
                Ok(())
            })
        }
        Command::Consense(a) => {
            let mut inputs = vec![a.input.clone()];
            inputs.extend(cli.config.iter().cloned());
            stage(cli, "consense", a, inputs, vec![a.out.clone(), a.review_out.clone()], || {
                let s = pipeline::consense(&a.input, &a.out, &a.review_out, &config.policy(), a.review_threshold, cli.seed)?;
                print_json(&s);
                Ok(())
            })
        }
        Command::Rules(a) => {
            let mut inputs = vec![a.input.clone()];
            inputs.extend(a.review_items.iter().cloned());
            let mut outputs = vec![a.out.clone()];
            outputs.extend(a.audit_out.iter().cloned());
            stage(cli, "rules", a, inputs, outputs, || {
                let n = pipeline::rules(&a.input, a.review_items.as_deref(), &a.out, a.audit_out.as_deref())?;
                print_json(&serde_json::json!({ "records": n }));
                Ok(())
            })
        }
        Command::ReviewExport(a) => {
            let mut inputs = vec![a.input.clone()];
            inputs.extend(a.sources.paths());
            stage(cli, "review-export", a, inputs, vec![a.out.clone()], || {
                let n = pipeline::review_export(&a.input, &a.out, &a.sources.load()?)?;
                print_json(&serde_json::json!({ "items": n }));
                Ok(())
            })
        }
        Command::Serve(a) => {
            let token = std::env::var(TOKEN_ENV).unwrap_or_default();
            let codebook = resolve_codebook(config.codebook.as_deref())?;
            let svc = ServiceConfig {
                items: a.items.clone(),
                log: a.log.clone(),
                snapshot: a.snapshot.clone(),
                snapshot_every: a.snapshot_every,
                consensus: a.consensus.clone(),
                gold: a.gold.clone(),
                labels: a.labels.clone(),
                token,
            };
            let state = AppState::open(&svc, codebook)?;
            eprintln!("review service listening on http://{}", a.addr);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Invalid(format!("runtime: {e}")))?;
            rt.block_on(service::serve(a.addr, state))
        }
        Command::Merge(a) => {
            let mut inputs = vec![a.input.clone()];
            inputs.extend([&a.review_items, &a.resolutions, &a.gold].into_iter().flatten().cloned());
            inputs.extend(a.labels.iter().cloned());
            inputs.extend(inputs_of_config.iter().cloned());
            stage(cli, "merge", a, inputs, vec![a.out.clone()], || {
                let codebook = resolve_codebook(config.codebook.as_deref())?;
                let n = pipeline::merge(
                    &MergeArgs {
                        consensus: &a.input,
                        review_items: a.review_items.as_deref(),
                        resolutions: a.resolutions.as_deref(),
                        gold: a.gold.as_deref(),
                        labels: &a.labels,
                        out: &a.out,
                    },
                    &codebook,
                )?;
                print_json(&serde_json::json!({ "pairs": n }));
                Ok(())
            })
        }
        Command::Evaluate(a) => {
            let r = pipeline::evaluate(
                &EvaluateArgs {
                    consensus: &a.input,
                    review_items: a.review_items.as_deref(),
                    resolutions: a.resolutions.as_deref(),
                    gold: &a.gold,
                },
                &config.policy(),
            )?;
            write_optional(a.out.as_deref(), &r)?;
            println!(
                "n = {}  exact = {:.2}%  minor = {:.2}%  overall = {:.2}%  corrected by review = {:.2}%",
                r.n,
                100.0 * r.exact_match_rate,
                100.0 * r.minor_accept_rate,
                100.0 * r.overall_accuracy,
                100.0 * r.corrected_by_review
            );
            for (score, c) in &r.contingency {
                println!(
                    "consistency {score:>3}: exact {:>6} minor {:>6} incorrect {:>6}",
                    c.correct_exact, c.correct_minor, c.incorrect
                );
            }
            Ok(())
        }
        Command::Stats(s) => match &s.profile {
            StatsProfile::Combinations { input, pattern_counts, out } => {
                if let Some(counts) = pattern_counts {
                    let t = report::combinations_from_counts(report::parse_counts(counts)?)?;
                    write_optional(out.as_deref(), &t)?;
                    print!("{}", report::render_count_tests(&t));
                } else {
                    let path = input.as_deref().expect("clap requires --in or --pattern-counts");
                    let c = report::combinations_from_pairs(path, &config.policy())?;
                    write_optional(out.as_deref(), &c)?;
                    print!("{}", report::render_combinations(&c));
                }
                Ok(())
            }
            StatsProfile::Engagement { input, comments, viral_threshold, top, out } => {
                let r = report::engagement(input, comments, *viral_threshold, *top)?;
                write_optional(out.as_deref(), &r)?;
                print!("{}", report::render_engagement(&r));
                Ok(())
            }
            StatsProfile::Representativeness { sample, population, fields, out } => {
                let r = report::representativeness(sample, population, fields)?;
                write_optional(out.as_deref(), &r)?;
                print!("{}", report::render_representativeness(&r));
                Ok(())
            }
        },
        Command::Report(a) => {
            let t = report::tradeoff(&a.rounds, a.records, config.manual_seconds_per_record)?;
            if let Some(out) = &a.out {
                write_atomic(out, t.machine_lines().as_bytes())?;
            }
            print!("{}", t.render());
            Ok(())
        }
        Command::Simulate(a) => {
            let cfg = sim::SimConfig {
                records: a.records,
                annotators: a.ensemble_size,
                error_rate: a.error_rate,
                seed: cli.seed,
                review_threshold: a.review_threshold,
                ..Default::default()
            };
            let o = sim::run(&cfg, &a.out_dir)?;
            let (at, below) = sim::incorrect_rates(&o.before);
            println!(
                "records {}  flagged {}  flagged and wrong {}  accuracy {:.2}% -> {:.2}%  incorrect rate at 100: {:.2}%, below 100: {:.2}%",
                o.n,
                o.flagged,
                o.flagged_wrong,
                100.0 * o.before.overall_accuracy,
                100.0 * o.after.overall_accuracy,
                100.0 * at,
                100.0 * below
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Locked(_) => ExitCode::from(3),
                Error::MissingInput(_) => ExitCode::from(4),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

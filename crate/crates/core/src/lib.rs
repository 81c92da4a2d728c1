//! Allocation-only core of the crowdlabel annotation pipeline.
//!
//! Everything here is a pure transform over in-memory records: text
//! preprocessing, ensemble vote aggregation, deterministic correction rules,
//! gold-standard scoring, agreement statistics and the statistical battery
//! used to profile the finished dataset. IO, model backends, the review
//! service and the command line live in the `crowdlabel` crate.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod codebook;
pub mod consensus;
pub mod corpus;
pub mod evaluation;
pub mod review;
pub mod rules;
pub mod stats;
pub mod text;
pub mod vote;

pub use codebook::{Category, Channel, Codebook, CodebookError, LabelRejection, ValidatedLabel};
pub use consensus::{decide, flag_for_review, record_seed, tally, ConsensusError, ConsensusResult, TallyResult};
pub use corpus::{
    normalize_pairs, parse_like_count, preprocess, Candidate, CleanComment, CommentRecord, ExtractionResult,
    PairRecord, PostRecord, PreprocessConfig, Provenance,
};
pub use evaluation::{cohens_kappa, score_against_gold, tradeoff_report, EvalReport, EvalUnit, KappaResult};
pub use review::{merge_final_dataset, ConsensusRecord, QueueSnapshot, Resolution, ReviewEvent, ReviewItem, ReviewQueue, ReviewStatus};
pub use rules::{apply_post_rules, canonical_equivalence, EquivalencePolicy, MatchClass, RuleOutcome};
pub use vote::{AnnotationFailure, RawAnnotation, Task, VoteSet, VoteValue};

//! Ensemble annotation: prompt templates, backends and fan-out.

mod annotate;
mod backend;
mod run;
mod templates;

pub use annotate::{annotate, parse_response, AnnotateOutcome, AnnotatorHandle, ParseError, REPAIR_SUFFIX};
pub use backend::{Backend, BackendError, BackendRequest, HttpBackend, ScriptedBackend, ScriptedFixture, ScriptedReply};
pub use run::{run_ensemble, EnsembleError, EnsembleOutput, ResponseCache, RunStats, Skipped};
pub use templates::{prompt_hash, render_prompt, ContextField, Prompt, PromptContext, SkipReason, TaskSpec};

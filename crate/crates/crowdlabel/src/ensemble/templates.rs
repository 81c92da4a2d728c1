//! Deterministic prompt templates, one per task.
//!
//! Each prompt has the same anatomy: a role preamble, the task rules with
//! positive and negative examples, the record's fields, and the required
//! output format. Wording is a reconstruction, versioned by `template_id`.

use std::fmt::Write as _;

use crowdlabel_core::{Channel, Codebook, Task};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextField {
    CommentText,
    Name,
    Explanation,
    ForeignName,
    ImageDescription,
    PostUrl,
}

impl ContextField {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextField::CommentText => "comment_text",
            ContextField::Name => "name",
            ContextField::Explanation => "explanation",
            ContextField::ForeignName => "foreign_name",
            ContextField::ImageDescription => "image_description",
            ContextField::PostUrl => "post_url",
        }
    }
}

/// Which template a task uses and which record fields it reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: Task,
    pub template_id: String,
    /// Fields that must be present for the prompt to render.
    pub context_fields: Vec<ContextField>,
    /// Fields included when present.
    #[serde(default)]
    pub optional_fields: Vec<ContextField>,
}

impl TaskSpec {
    pub fn for_task(task: Task) -> Self {
        use ContextField::*;
        let (required, optional) = match task {
            Task::ExtractPair => (vec![CommentText], vec![ForeignName]),
            Task::SemanticExplain => (vec![Name], vec![Explanation, CommentText]),
            Task::VisualClassify => (vec![Name, ImageDescription], vec![Explanation]),
            Task::PhoneticClassify => (vec![Name, ForeignName], vec![Explanation]),
        };
        Self {
            task,
            template_id: format!("{}.v1", task.as_str()),
            context_fields: required,
            optional_fields: optional,
        }
    }
}

/// Record fields available to a template.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptContext {
    pub record_id: String,
    pub comment_text: Option<String>,
    pub name: Option<String>,
    pub explanation: Option<String>,
    pub foreign_name: Option<String>,
    pub image_description: Option<String>,
    pub post_url: Option<String>,
}

impl PromptContext {
    pub fn field(&self, f: ContextField) -> Option<&str> {
        let v = match f {
            ContextField::CommentText => &self.comment_text,
            ContextField::Name => &self.name,
            ContextField::Explanation => &self.explanation,
            ContextField::ForeignName => &self.foreign_name,
            ContextField::ImageDescription => &self.image_description,
            ContextField::PostUrl => &self.post_url,
        };
        v.as_deref().filter(|s| !s.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    /// Hex SHA-256 of `text`.
    pub hash: String,
}

impl Prompt {
    pub fn new(text: String) -> Self {
        let hash = prompt_hash(&text);
        Self { text, hash }
    }
}

pub fn prompt_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Why a record was not sent to the ensemble.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{record_id}: {reason}")]
pub struct SkipReason {
    pub record_id: String,
    pub reason: String,
}

const ROLE_EXTRACT: &str = "You annotate comments written by Chinese social-media users who are proposing \
Chinese names for a foreign newcomer. The names must be Chinese names.";
const ROLE_EXPLAIN: &str = "You are a name interpreter with expertise in Chinese internet culture. \
You explain why a Chinese name was given to a foreign newcomer.";
const ROLE_CLASSIFY: &str = "You are a name interpreter with expertise in Chinese internet culture. \
You classify how a Chinese name given to a foreign newcomer relates to them.";

const EXTRACT_RULES: &[(&str, &str)] = &[
    ("Ignore emojis and emoticons; they are never part of an explanation.", "\"好厉害 [emoji]\" has no name."),
    ("A user @-mention is not a proposed name.", "\"@张三 你真棒\": 张三 is not a name."),
    ("A single character is not a full Chinese name.", "\"晴\" alone is not a name."),
    ("Names written only in foreign script are out of scope.", "\"John\" is not a Chinese name."),
    (
        "Extract only the name being proposed, not other names mentioned in the reasoning.",
        "\"张华，把李华位置抢了\": the name is 张华; 李华 is not proposed.",
    ),
    ("Do not extract a fragment of a longer proposed name separately.", "\"张谙艺\" and \"谙艺\": keep only 张谙艺."),
    ("Leave the explanation empty when the text gives no reason.", "\"马赫 比较好一些\": name 马赫, no explanation."),
    ("Playful or unusual names still count as names.", "\"萝卜土豆切吧切吧\" may be a name."),
];

/// Renders the prompt for one record. Identical inputs give identical text.
pub fn render_prompt(spec: &TaskSpec, ctx: &PromptContext, codebook: &Codebook) -> Result<Prompt, SkipReason> {
    for f in &spec.context_fields {
        if ctx.field(*f).is_none() {
            return Err(SkipReason { record_id: ctx.record_id.clone(), reason: format!("missing {}", f.as_str()) });
        }
    }
    let mut s = String::new();
    let role = match spec.task {
        Task::ExtractPair => ROLE_EXTRACT,
        Task::SemanticExplain => ROLE_EXPLAIN,
        Task::VisualClassify | Task::PhoneticClassify => ROLE_CLASSIFY,
    };
    let _ = writeln!(s, "[template {}]", spec.template_id);
    let _ = writeln!(s, "{role}\n");
    match spec.task {
        Task::ExtractPair => {
            s.push_str("Task: list every proposed name and the explanation given for it.\nRules:\n");
            for (i, (rule, example)) in EXTRACT_RULES.iter().enumerate() {
                let _ = writeln!(s, "{}. {rule} Example: {example}", i + 1);
            }
        }
        Task::SemanticExplain => {
            s.push_str(
                "Task: explain the meaning of the name and the cultural reference it draws on, \
then choose the one semantic category that fits best.\nRules:\n\
1. Stay neutral; acknowledge vulgar or satirical meanings when present.\n\
2. Use the original explanation when one is given; do not contradict it.\n\
3. Write one or two sentences in Chinese.\n\
Example: 李华 → the stock name used in Chinese English-exam essays.\n\
Negative example: do not explain 李华 as a famous historical figure.\n",
            );
            s.push_str("Categories:\n");
            for c in codebook.channel(Channel::Semantic) {
                let _ = writeln!(s, "- {}: {}", c.id, c.name);
            }
        }
        Task::VisualClassify | Task::PhoneticClassify => {
            let channel = spec.task.channel().unwrap_or(Channel::Visual);
            let (what, none) = match channel {
                Channel::Visual => ("the person's photo", "no visual association"),
                _ => ("the foreign name's sound or meaning", "no relation"),
            };
            let _ = writeln!(s, "Task: decide how the Chinese name relates to {what}.");
            s.push_str("Categories:\n");
            for c in codebook.channel(channel) {
                let _ = write!(s, "- {}: {}. {}", c.id, c.name, c.definition);
                if let Some(ex) = c.examples.first() {
                    let _ = write!(s, " Example: {ex}.");
                }
                s.push('\n');
            }
            let _ = writeln!(s, "- null: {none}.");
            s.push_str("Choose exactly one category, or null.\n");
        }
    }
    s.push_str("\nRecord:\n");
    let mut fields: Vec<ContextField> = spec.context_fields.clone();
    fields.extend(spec.optional_fields.iter().copied().filter(|f| ctx.field(*f).is_some()));
    for f in fields {
        let _ = writeln!(s, "{}: {}", f.as_str(), ctx.field(f).unwrap_or(""));
    }
    s.push_str("\nReply with one JSON object and nothing else:\n");
    s.push_str(match spec.task {
        Task::ExtractPair => "{\"pairs\": [{\"name\": string|null, \"explanation\": string|null}]}\n",
        Task::SemanticExplain => "{\"label\": string, \"explanation\": string}\n",
        Task::VisualClassify | Task::PhoneticClassify => "{\"label\": string|null, \"explanation\": string|null}\n",
    });
    Ok(Prompt::new(s))
}

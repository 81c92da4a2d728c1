//! Line-delimited record files and corpus ingest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::DateTime;
use crowdlabel_core::corpus::pair_id;
use crowdlabel_core::{parse_like_count, Candidate, Channel, CommentRecord, PairRecord, PostRecord, Provenance};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.into())
        } else {
            Error::io(path, e)
        }
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| record_error(path, i + 1, e))?;
        out.push(v);
    }
    Ok(out)
}

fn record_error(path: &Path, line: usize, e: serde_json::Error) -> Error {
    // serde_json reports positions within the line; the line number is ours
    let msg = e.to_string();
    let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
    Error::Record { path: path.into(), line, message: msg }
}

/// Writes records atomically, one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, &r).map_err(|e| Error::Invalid(e.to_string()))?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(value).map_err(|e| Error::Invalid(e.to_string()))?;
    buf.push(b'\n');
    write_atomic(path, &buf)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.into())
        } else {
            Error::io(path, e)
        }
    })?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = tmp_path(path);
    {
        let mut f = BufWriter::new(File::create(&tmp).map_err(|e| Error::io(&tmp, e))?);
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Posts,
    Comments,
    Gold,
}

impl FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "posts" => Ok(Kind::Posts),
            "comments" => Ok(Kind::Comments),
            "gold" => Ok(Kind::Gold),
            other => Err(format!("unknown kind {other:?}; expected posts, comments or gold")),
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Posts => "posts",
            Kind::Comments => "comments",
            Kind::Gold => "gold",
        })
    }
}

/// Like counts arrive as integers or display strings such as "1.2万".
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum LikeField {
    Int(u64),
    Text(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum TimeField {
    Epoch(i64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PostRow {
    post_id: String,
    url: String,
    #[serde(default)]
    foreign_name: Option<String>,
    #[serde(default)]
    image_description: Option<String>,
    like_count: LikeField,
    #[serde(default)]
    comment_count: Option<LikeField>,
    posted_at: TimeField,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommentRow {
    comment_id: String,
    post_id: String,
    text: String,
    like_count: LikeField,
    posted_at: TimeField,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoldRow {
    #[serde(default)]
    pair_id: Option<String>,
    comment_id: String,
    name: Option<String>,
    #[serde(default)]
    explanation: Option<String>,
    #[serde(default)]
    channel_labels: BTreeMap<Channel, String>,
    #[serde(default)]
    generated_explanations: BTreeMap<Channel, String>,
    #[serde(default)]
    provenance: Option<Provenance>,
}

fn like(v: &LikeField, field: &str) -> std::result::Result<u64, String> {
    match v {
        LikeField::Int(n) => Ok(*n),
        LikeField::Text(s) => parse_like_count(s).map_err(|e| format!("field {field}: {e}")),
    }
}

fn time(v: &TimeField) -> std::result::Result<i64, String> {
    match v {
        TimeField::Epoch(t) => Ok(*t),
        TimeField::Text(s) => DateTime::parse_from_rfc3339(s)
            .map(|d| d.timestamp())
            .map_err(|e| format!("field posted_at: {s:?} is not an RFC 3339 timestamp ({e})")),
    }
}

fn non_blank(s: Option<String>) -> Option<String> {
    s.map(|s| s.trim().to_string()).filter(|s| !s.is_empty())
}

/// Records of one kind plus ingest diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    /// Lines dropped because an earlier line had the same id.
    pub duplicates: usize,
}

fn ingest_rows<R, T>(
    path: &Path,
    convert: impl Fn(R) -> std::result::Result<T, String>,
    id: impl Fn(&T) -> String,
) -> Result<Ingested<T>>
where
    R: DeserializeOwned,
{
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.into())
        } else {
            Error::io(path, e)
        }
    })?;
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    let mut duplicates = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: R = serde_json::from_str(&line).map_err(|e| record_error(path, i + 1, e))?;
        let rec = convert(row).map_err(|message| Error::Record { path: path.into(), line: i + 1, message })?;
        if seen.insert(id(&rec)) {
            records.push(rec);
        } else {
            duplicates += 1;
        }
    }
    Ok(Ingested { records, duplicates })
}

pub fn ingest_posts(path: &Path) -> Result<Ingested<PostRecord>> {
    let mut out = ingest_rows(
        path,
        |r: PostRow| {
            Ok(PostRecord {
                post_id: r.post_id,
                url: r.url,
                foreign_name: non_blank(r.foreign_name),
                image_description: non_blank(r.image_description),
                like_count: like(&r.like_count, "like_count")?,
                comment_count: r.comment_count.as_ref().map(|c| like(c, "comment_count")).transpose()?.unwrap_or(0),
                posted_at: time(&r.posted_at)?,
            })
        },
        |p| p.post_id.clone(),
    )?;
    out.records.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    Ok(out)
}

/// Comments; when `posts` is given every comment must reference one.
pub fn ingest_comments(path: &Path, posts: Option<&BTreeSet<String>>) -> Result<Ingested<CommentRecord>> {
    let mut out = ingest_rows(
        path,
        |r: CommentRow| {
            if r.text.trim().is_empty() {
                return Err(String::from("field text: empty"));
            }
            if let Some(posts) = posts {
                if !posts.contains(&r.post_id) {
                    return Err(format!("field post_id: unknown post {:?}", r.post_id));
                }
            }
            Ok(CommentRecord {
                comment_id: r.comment_id,
                post_id: r.post_id,
                text: r.text,
                like_count: like(&r.like_count, "like_count")?,
                posted_at: time(&r.posted_at)?,
            })
        },
        |c| c.comment_id.clone(),
    )?;
    out.records.sort_by(|a, b| a.comment_id.cmp(&b.comment_id));
    Ok(out)
}

/// Gold pairs. Missing pair ids are numbered per comment in file order.
pub fn ingest_gold(path: &Path) -> Result<Ingested<PairRecord>> {
    let counter = std::cell::RefCell::new(BTreeMap::<String, usize>::new());
    let mut out = ingest_rows(
        path,
        |r: GoldRow| {
            if let Some(p) = r.provenance {
                if p != Provenance::Gold {
                    return Err(String::from("field provenance: gold files must carry provenance gold"));
                }
            }
            let cand = Candidate::new(r.name.as_deref(), r.explanation.as_deref());
            if cand.is_empty() {
                return Err(String::from("fields name and explanation: both empty"));
            }
            let mut c = counter.borrow_mut();
            let pos = c.entry(r.comment_id.clone()).or_insert(0);
            let id = r.pair_id.unwrap_or_else(|| pair_id(&r.comment_id, *pos));
            *pos += 1;
            let mut p = PairRecord::new(id, r.comment_id, cand);
            p.channel_labels = r.channel_labels;
            p.generated_explanations = r.generated_explanations;
            p.provenance = Some(Provenance::Gold);
            Ok(p)
        },
        |p| p.pair_id.clone(),
    )?;
    out.records.sort_by(|a, b| a.comment_id.cmp(&b.comment_id).then_with(|| a.pair_id.cmp(&b.pair_id)));
    Ok(out)
}

/// Gold pairs grouped by comment, in the shape evaluation expects.
pub fn gold_by_comment(gold: &[PairRecord]) -> BTreeMap<String, Vec<Candidate>> {
    let mut out: BTreeMap<String, Vec<Candidate>> = BTreeMap::new();
    for g in gold {
        out.entry(g.comment_id.clone()).or_default().push(g.candidate());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn three_comments() {
        let f = file(&[
            r#"{"comment_id":"c1","post_id":"p1","text":"叫他李华","like_count":3,"posted_at":0}"#,
            r#"{"comment_id":"c2","post_id":"p1","text":"狗蛋","like_count":"1.2万","posted_at":"2025-01-02T03:04:05Z"}"#,
            r#"{"comment_id":"c3","post_id":"p1","text":"翠花","like_count":0,"posted_at":1}"#,
        ]);
        let got = ingest_comments(f.path(), None).unwrap();
        assert_eq!(got.records.len(), 3);
        assert_eq!(got.records[1].like_count, 12_000);
        assert_eq!(got.records[1].posted_at, 1_735_787_045);
    }

    #[test]
    fn duplicates_keep_first() {
        let f = file(&[
            r#"{"comment_id":"c1","post_id":"p1","text":"first","like_count":1,"posted_at":0}"#,
            r#"{"comment_id":"c1","post_id":"p1","text":"second","like_count":2,"posted_at":0}"#,
        ]);
        let got = ingest_comments(f.path(), None).unwrap();
        assert_eq!((got.records.len(), got.duplicates), (1, 1));
        assert_eq!(got.records[0].text, "first");
    }

    #[test]
    fn missing_field_names_line_and_field() {
        let f = file(&[
            r#"{"comment_id":"c1","post_id":"p1","text":"ok","like_count":1,"posted_at":0}"#,
            r#"{"comment_id":"c2","post_id":"p1","like_count":1,"posted_at":0}"#,
        ]);
        let err = ingest_comments(f.path(), None).unwrap_err().to_string();
        assert!(err.contains(":2:") && err.contains("text"), "{err}");
    }

    #[test]
    fn unknown_post_is_rejected() {
        let f = file(&[r#"{"comment_id":"c1","post_id":"p9","text":"ok","like_count":1,"posted_at":0}"#]);
        let posts: BTreeSet<String> = ["p1".to_string()].into();
        let err = ingest_comments(f.path(), Some(&posts)).unwrap_err().to_string();
        assert!(err.contains("post_id"), "{err}");
    }

    #[test]
    fn gold_ids_are_numbered() {
        let f = file(&[
            r#"{"comment_id":"c1","name":"李华","explanation":null,"provenance":"gold"}"#,
            r#"{"comment_id":"c1","name":"张伟"}"#,
        ]);
        let got = ingest_gold(f.path()).unwrap();
        let ids: Vec<_> = got.records.iter().map(|p| p.pair_id.as_str()).collect();
        assert_eq!(ids, ["c1#0", "c1#1"]);
    }

    #[test]
    fn posts_parse_display_counts() {
        let f = file(&[
            r#"{"post_id":"p1","url":"u","foreign_name":"  ","like_count":"3.5w","comment_count":"60","posted_at":5}"#,
        ]);
        let got = ingest_posts(f.path()).unwrap();
        assert_eq!(got.records[0].like_count, 35_000);
        assert_eq!(got.records[0].comment_count, 60);
        assert_eq!(got.records[0].foreign_name, None);
    }
}

//! Corpus records, comment preprocessing and pair-level normalization.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::codebook::Channel;
use crate::text;

/// A post that asked for a name. Timestamps are UTC seconds since the epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: String,
    pub url: String,
    pub foreign_name: Option<String>,
    /// Caption of the poster photo, produced upstream.
    pub image_description: Option<String>,
    pub like_count: u64,
    pub comment_count: u64,
    pub posted_at: i64,
}

impl PostRecord {
    /// Activity criterion for inclusion: more than 200 likes or more than
    /// 50 comments.
    pub fn meets_activity_threshold(&self) -> bool {
        self.like_count > 200 || self.comment_count > 50
    }
}

/// A first-level comment under a post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub comment_id: String,
    pub post_id: String,
    pub text: String,
    pub like_count: u64,
    pub posted_at: i64,
}

/// A comment after emoji, emoticon and @-mention stripping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanComment {
    pub comment_id: String,
    pub text_clean: String,
    pub removed_mentions: Vec<String>,
    /// Emoji sequences, emoticons and bracketed stickers removed.
    pub removed_emoji_count: usize,
}

impl CleanComment {
    /// Nothing left to annotate; downstream stages drop the record.
    pub fn is_empty_after_clean(&self) -> bool {
        self.text_clean.is_empty()
    }
}

/// Emoticon and sticker vocabulary for [`preprocess`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Literal emoticon tokens. Tokens containing letters or digits are only
    /// removed at ASCII word boundaries.
    pub emoticons: Vec<String>,
    /// Names of bracketed stickers such as `[doge]`. Any bracketed token
    /// whose body ends in `R` (the platform's sticker convention) is removed
    /// as well.
    pub stickers: Vec<String>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        let emoticons = [
            "o(╥﹏╥)o", "(╯°□°)╯", "(*^▽^*)", "(￣▽￣)", "^_^", "^o^", "^^", "T_T", "T.T", "QAQ", "QwQ", "OvO",
            ">_<", "-_-", "=_=", "orz", ":-)", ":)", ":-(", ":(", ":-D", ":D", ";-)", ";)", ":-P", ":P", "XD", "<3",
        ];
        let stickers = ["emoji", "doge", "微笑", "笑哭", "哭惹", "捂脸", "赞", "666", "偷笑", "害羞", "哈哈"];
        Self {
            emoticons: emoticons.iter().map(|s| s.to_string()).collect(),
            stickers: stickers.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Strips emoji, emoticons, stickers and @-mentions from a comment.
pub fn preprocess(comment: &CommentRecord, config: &PreprocessConfig) -> CleanComment {
    let cleaned = clean_text(&comment.text, config);
    CleanComment {
        comment_id: comment.comment_id.clone(),
        text_clean: cleaned.text,
        removed_mentions: cleaned.mentions,
        removed_emoji_count: cleaned.emoji_count,
    }
}

/// Result of [`clean_text`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanedText {
    pub text: String,
    pub mentions: Vec<String>,
    pub emoji_count: usize,
}

/// The text-level transform behind [`preprocess`]. Passes repeat until the
/// text stops changing, since a removal can join two fragments into a new
/// strippable token.
pub fn clean_text(input: &str, config: &PreprocessConfig) -> CleanedText {
    let mut acc = clean_pass(input, config);
    loop {
        let next = clean_pass(&acc.text, config);
        if next.text == acc.text {
            return acc;
        }
        acc.text = next.text;
        acc.mentions.extend(next.mentions);
        acc.emoji_count += next.emoji_count;
    }
}

fn clean_pass(input: &str, config: &PreprocessConfig) -> CleanedText {
    let mut emoticons: Vec<&str> = config.emoticons.iter().map(String::as_str).filter(|s| !s.is_empty()).collect();
    emoticons.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));

    let chars: Vec<char> = input.chars().collect();
    let mut out = String::with_capacity(input.len());
    let mut mentions = Vec::new();
    let mut emoji_count = 0usize;
    let mut i = 0usize;

    while i < chars.len() {
        let c = chars[i];

        if let Some(len) = emoji_sequence_len(&chars[i..]) {
            if !text::is_emoji_modifier(c) {
                emoji_count += 1;
            }
            i += len;
            continue;
        }
        if c == '[' {
            if let Some(len) = sticker_len(&chars[i..], &config.stickers) {
                emoji_count += 1;
                i += len;
                continue;
            }
        }
        if let Some(len) = emoticon_len(&chars, i, &emoticons) {
            emoji_count += 1;
            i += len;
            continue;
        }
        if (c == '@' || c == '＠') && mention_boundary(&out) {
            let mut j = i + 1;
            while j < chars.len() && text::is_handle_char(chars[j]) {
                j += 1;
            }
            while j > i + 1 && matches!(chars[j - 1], '.' | '-' | '·') {
                j -= 1;
            }
            if j > i + 1 {
                mentions.push(chars[i + 1..j].iter().collect());
                // swallow one separating space so "@a b" becomes "b"
                if j < chars.len() && chars[j].is_whitespace() {
                    j += 1;
                }
                i = j;
                continue;
            }
        }
        out.push(c);
        i += 1;
    }

    CleanedText { text: out.trim().to_string(), mentions, emoji_count }
}

fn emoji_sequence_len(chars: &[char]) -> Option<usize> {
    let first = *chars.first()?;
    let mut len = if text::is_emoji_base(first) {
        1
    } else if matches!(first, '0'..='9' | '#' | '*') {
        // keycap: base, optional VS16, U+20E3
        let mut j = 1;
        if chars.get(j) == Some(&'\u{FE0F}') {
            j += 1;
        }
        if chars.get(j) == Some(&'\u{20E3}') {
            j + 1
        } else {
            return None;
        }
    } else if text::is_emoji_modifier(first) {
        // stray modifier left over from a broken sequence; removed, not counted
        1
    } else {
        return None;
    };
    while len < chars.len() {
        let c = chars[len];
        if c == '\u{200D}' {
            if chars.get(len + 1).is_some_and(|n| text::is_emoji_base(*n)) {
                len += 2;
            } else {
                len += 1;
            }
        } else if text::is_emoji_modifier(c) {
            len += 1;
        } else if (0x1F1E6..=0x1F1FF).contains(&(first as u32))
            && len == 1
            && (0x1F1E6..=0x1F1FF).contains(&(c as u32))
        {
            // flag: pair of regional indicators
            len += 1;
        } else {
            break;
        }
    }
    Some(len)
}

fn sticker_len(chars: &[char], stickers: &[String]) -> Option<usize> {
    let close = chars.iter().take(12).position(|&c| c == ']')?;
    if close < 2 {
        return None;
    }
    let body: String = chars[1..close].iter().collect();
    if body.chars().any(|c| c.is_whitespace() || c == '[') {
        return None;
    }
    let styled = body.chars().count() >= 2 && body.ends_with('R');
    if styled || stickers.contains(&body) {
        Some(close + 1)
    } else {
        None
    }
}

fn emoticon_len(chars: &[char], at: usize, emoticons: &[&str]) -> Option<usize> {
    for token in emoticons {
        let tok: Vec<char> = token.chars().collect();
        if chars.len() - at < tok.len() || chars[at..at + tok.len()] != tok[..] {
            continue;
        }
        if tok.iter().any(|c| c.is_ascii_alphanumeric()) {
            let before = at.checked_sub(1).map(|p| chars[p]);
            let after = chars.get(at + tok.len()).copied();
            if before.is_some_and(|c| c.is_ascii_alphanumeric()) || after.is_some_and(|c| c.is_ascii_alphanumeric()) {
                continue;
            }
        }
        return Some(tok.len());
    }
    None
}

fn mention_boundary(emitted: &str) -> bool {
    match emitted.chars().next_back() {
        None => true,
        Some(c) => c.is_whitespace() || text::is_punctuation(c) || text::is_han(c),
    }
}

/// Why a like-count string could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LikeCountError(pub String);

impl fmt::Display for LikeCountError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid like count {:?}", self.0)
    }
}

/// Parses like counts as shown by the platform: plain integers, `1.2万`
/// (×10⁴) or `3w`. Fractional values round half-up.
pub fn parse_like_count(raw: &str) -> Result<u64, LikeCountError> {
    let s = raw.trim().trim_end_matches('+');
    let err = || LikeCountError(raw.to_string());
    let (number, scale_digits) = match s.strip_suffix('万').or_else(|| s.strip_suffix(['w', 'W'])) {
        Some(n) => (n.trim(), 4u32),
        None => (s, 0u32),
    };
    let number = number.replace(',', "");
    if number.is_empty() {
        return Err(err());
    }
    let (int_part, frac_part) = match number.split_once('.') {
        Some((i, f)) => (i, f),
        None => (number.as_str(), ""),
    };
    let digits_ok = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    if !digits_ok(int_part) || !digits_ok(frac_part) || (int_part.is_empty() && frac_part.is_empty()) {
        return Err(err());
    }
    let scale = 10u64.pow(scale_digits);
    let int_val: u64 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| err())? };
    let mut value = int_val.checked_mul(scale).ok_or_else(err)?;

    let frac: Vec<u8> = frac_part.bytes().map(|b| b - b'0').collect();
    let mut place = scale;
    for &d in frac.iter().take(scale_digits as usize) {
        place /= 10;
        value += d as u64 * place;
    }
    if let Some(&next) = frac.get(scale_digits as usize) {
        if next >= 5 {
            value += 1;
        }
    }
    Ok(value)
}

/// One (name, explanation) candidate as produced by extraction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub struct Candidate {
    pub name: Option<String>,
    pub explanation: Option<String>,
}

impl Candidate {
    pub fn new(name: Option<&str>, explanation: Option<&str>) -> Self {
        let tidy = |s: Option<&str>| s.map(str::trim).filter(|s| !s.is_empty()).map(String::from);
        Self { name: tidy(name), explanation: tidy(explanation) }
    }

    pub fn is_empty(&self) -> bool {
        self.name.is_none() && self.explanation.is_none()
    }
}

/// Extraction output for one comment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub comment_id: String,
    pub candidates: Vec<Candidate>,
}

/// Where the final version of a pair came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    AutoConsensus,
    HumanResolved,
    Gold,
}

/// One name-explanation pair with its channel annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub comment_id: String,
    pub name: Option<String>,
    pub explanation: Option<String>,
    #[serde(default)]
    pub channel_labels: BTreeMap<Channel, String>,
    #[serde(default)]
    pub generated_explanations: BTreeMap<Channel, String>,
    #[serde(default)]
    pub provenance: Option<Provenance>,
}

/// Provenance can only be assigned once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlreadyFinalized {
    pub pair_id: String,
    pub existing: Provenance,
}

impl fmt::Display for AlreadyFinalized {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pair {} already finalized as {:?}", self.pair_id, self.existing)
    }
}

impl PairRecord {
    pub fn new(pair_id: impl Into<String>, comment_id: impl Into<String>, candidate: Candidate) -> Self {
        Self {
            pair_id: pair_id.into(),
            comment_id: comment_id.into(),
            name: candidate.name,
            explanation: candidate.explanation,
            channel_labels: BTreeMap::new(),
            generated_explanations: BTreeMap::new(),
            provenance: None,
        }
    }

    /// Both fields null: the record carries nothing and is dropped.
    pub fn is_void(&self) -> bool {
        self.name.is_none() && self.explanation.is_none()
    }

    pub fn candidate(&self) -> Candidate {
        Candidate { name: self.name.clone(), explanation: self.explanation.clone() }
    }

    pub fn finalize(mut self, provenance: Provenance) -> Result<Self, AlreadyFinalized> {
        if let Some(existing) = self.provenance {
            return Err(AlreadyFinalized { pair_id: self.pair_id, existing });
        }
        self.provenance = Some(provenance);
        Ok(self)
    }
}

/// Pair id convention: `<comment_id>#<position>`.
pub fn pair_id(comment_id: &str, position: usize) -> String {
    format!("{comment_id}#{position}")
}

/// Splits a comment's extraction into pair records, dropping candidates whose
/// name and explanation are both empty. Order is preserved.
pub fn normalize_pairs(extraction: &ExtractionResult) -> Vec<PairRecord> {
    extraction
        .candidates
        .iter()
        .map(|c| Candidate::new(c.name.as_deref(), c.explanation.as_deref()))
        .filter(|c| !c.is_empty())
        .enumerate()
        .map(|(i, c)| PairRecord::new(pair_id(&extraction.comment_id, i), extraction.comment_id.clone(), c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn comment(text: &str) -> CommentRecord {
        CommentRecord { comment_id: "c1".into(), post_id: "p1".into(), text: text.into(), like_count: 0, posted_at: 0 }
    }

    fn clean(text: &str) -> CleanComment {
        preprocess(&comment(text), &PreprocessConfig::default())
    }

    #[test]
    fn strips_emoji_pair() {
        let c = clean("好厉害 😀😀");
        assert_eq!(c.text_clean, "好厉害");
        assert_eq!(c.removed_emoji_count, 2);
    }

    #[test]
    fn strips_bracketed_emoji_placeholders() {
        let c = clean("好厉害 [emoji][emoji]");
        assert_eq!(c.text_clean, "好厉害");
        assert_eq!(c.removed_emoji_count, 2);
        let c = clean("李华[笑哭R]");
        assert_eq!(c.text_clean, "李华");
        assert_eq!(c.removed_emoji_count, 1);
    }

    #[test]
    fn zwj_and_skin_tone_sequences_count_once() {
        let c = clean("家👨\u{200D}👩\u{200D}👧 好👍🏽");
        assert_eq!(c.text_clean, "家 好");
        assert_eq!(c.removed_emoji_count, 2);
    }

    #[test]
    fn strips_mentions() {
        let c = clean("@张三 你真棒");
        assert_eq!(c.text_clean, "你真棒");
        assert_eq!(c.removed_mentions, vec![String::from("张三")]);
    }

    #[test]
    fn mention_inside_email_is_kept() {
        let c = clean("联系 me@example.com");
        assert_eq!(c.text_clean, "联系 me@example.com");
        assert!(c.removed_mentions.is_empty());
    }

    #[test]
    fn plain_name_unchanged() {
        let c = clean("林乐乐");
        assert_eq!(c.text_clean, "林乐乐");
        assert_eq!(c.removed_emoji_count, 0);
        assert!(c.removed_mentions.is_empty());
    }

    #[test]
    fn emoticons_respect_word_boundaries() {
        assert_eq!(clean("叫你小明 ^_^").text_clean, "叫你小明");
        assert_eq!(clean("Orzo 面").text_clean, "Orzo 面");
        assert_eq!(clean("跪了 orz").text_clean, "跪了");
    }

    #[test]
    fn empty_after_clean_is_flagged() {
        let c = clean("😀 @someone");
        assert!(c.is_empty_after_clean());
    }

    #[test]
    fn like_counts() {
        assert_eq!(parse_like_count("1.2万"), Ok(12_000));
        assert_eq!(parse_like_count("3w"), Ok(30_000));
        assert_eq!(parse_like_count("1.23456万"), Ok(12_346));
        assert_eq!(parse_like_count("1.23454万"), Ok(12_345));
        assert_eq!(parse_like_count("987"), Ok(987));
        assert_eq!(parse_like_count("10万+"), Ok(100_000));
        assert!(parse_like_count("abc").is_err());
        assert!(parse_like_count("万").is_err());
    }

    #[test]
    fn normalize_splits_and_drops_empty() {
        let ex = ExtractionResult {
            comment_id: "c9".into(),
            candidates: vec![
                Candidate::new(Some("甄漂亮"), Some("像Jenny")),
                Candidate::new(None, None),
                Candidate::new(Some("李华"), None),
            ],
        };
        let pairs = normalize_pairs(&ex);
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].name.as_deref(), Some("甄漂亮"));
        assert_eq!(pairs[1].name.as_deref(), Some("李华"));
        assert_eq!(pairs[1].pair_id, "c9#1");

        let only_null = ExtractionResult { comment_id: "c".into(), candidates: vec![Candidate::default()] };
        assert!(normalize_pairs(&only_null).is_empty());

        let single = ExtractionResult {
            comment_id: "c".into(),
            candidates: vec![Candidate::new(Some("狗蛋"), Some("贱名好养活"))],
        };
        let out = normalize_pairs(&single);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].candidate(), single.candidates[0]);
    }

    #[test]
    fn provenance_set_once() {
        let p = PairRecord::new("a#0", "a", Candidate::new(Some("李华"), None));
        let p = p.finalize(Provenance::AutoConsensus).unwrap();
        assert!(p.finalize(Provenance::Gold).is_err());
    }

    #[test]
    fn activity_threshold_is_strict() {
        let mut post = PostRecord {
            post_id: "p".into(),
            url: String::new(),
            foreign_name: None,
            image_description: None,
            like_count: 200,
            comment_count: 50,
            posted_at: 0,
        };
        assert!(!post.meets_activity_threshold());
        post.comment_count = 51;
        assert!(post.meets_activity_threshold());
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(s in "[a-z@ 张三李华^_():\\[\\]R😀👍🏽\u{200D}]{0,24}") {
            let cfg = PreprocessConfig::default();
            let once = clean_text(&s, &cfg);
            let twice = clean_text(&once.text, &cfg);
            prop_assert_eq!(&twice.text, &once.text);
        }

        #[test]
        fn clean_text_has_no_emoji(s in "\\PC{0,24}") {
            let out = clean_text(&s, &PreprocessConfig::default());
            prop_assert!(!out.text.chars().any(text::is_emoji_codepoint));
        }

        #[test]
        fn normalize_drops_exactly_null_candidates(
            raw in proptest::collection::vec((proptest::option::of("[李华 ]{0,3}"), proptest::option::of("[解释 ]{0,3}")), 0..8)
        ) {
            let candidates: Vec<Candidate> = raw.iter().map(|(n, e)| Candidate { name: n.clone(), explanation: e.clone() }).collect();
            let nulls = candidates.iter().filter(|c| Candidate::new(c.name.as_deref(), c.explanation.as_deref()).is_empty()).count();
            let out = normalize_pairs(&ExtractionResult { comment_id: "x".into(), candidates });
            prop_assert_eq!(out.len(), raw.len() - nulls);
            prop_assert!(out.iter().all(|p| !p.is_void()));
        }
    }
}

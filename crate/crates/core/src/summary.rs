//! Five-dimension summaries of a user's post history.
//!
//! A summary assigns 1–3 labels from a closed vocabulary to each of content
//! theme, sentiment polarity, emotional tone, linguistic style and
//! communicative function, and is carried downstream as one fixed-format
//! sentence. Summaries come either from a chat-completion endpoint
//! ([`LlmSummarizer`]) or from the deterministic lexicon scorer
//! ([`fallback_summarize`]).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::text::{contains_phrase, normalize_words, URL_RE};

/// Environment variable holding the chat endpoint credential.
pub const API_KEY_ENV: &str = "MGDIL_LLM_API_KEY";

/// Character budget for the posts block of the prompt.
pub const DEFAULT_POST_BUDGET: usize = 8_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Theme,
    Sent,
    Emo,
    Style,
    Func,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::Theme,
        Dimension::Sent,
        Dimension::Emo,
        Dimension::Style,
        Dimension::Func,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Theme => "theme",
            Dimension::Sent => "sent",
            Dimension::Emo => "emo",
            Dimension::Style => "style",
            Dimension::Func => "func",
        }
    }

    /// Every label of this dimension, in vocabulary order.
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Dimension::Theme => Theme::NAMES,
            Dimension::Sent => Sentiment::NAMES,
            Dimension::Emo => Emotion::NAMES,
            Dimension::Style => Style::NAMES,
            Dimension::Func => Function::NAMES,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A closed label vocabulary for one summary dimension.
pub trait Category: Copy + Eq + Ord + fmt::Debug + 'static {
    const DIMENSION: Dimension;
    const ALL: &'static [Self];
    const NAMES: &'static [&'static str];

    fn as_str(self) -> &'static str;

    /// Exact, case-sensitive lookup.
    fn parse(s: &str) -> Option<Self> {
        Self::NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| Self::ALL[i])
    }
}

macro_rules! vocabulary {
    ($(#[$doc:meta])* $name:ident, $dim:ident, [$($label:ident),+ $(,)?]) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name { $($label),+ }

        impl Category for $name {
            const DIMENSION: Dimension = Dimension::$dim;
            const ALL: &'static [Self] = &[$($name::$label),+];
            const NAMES: &'static [&'static str] = &[$(stringify!($label)),+];

            fn as_str(self) -> &'static str {
                match self { $($name::$label => stringify!($label)),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

vocabulary!(Theme, Theme, [
    Politics, Business, Entertainment, Lifestyle, Technology, Cryptocurrency, Sports, Culture,
]);
vocabulary!(Sentiment, Sent, [Positive, Neutral, Negative, Mixed]);
vocabulary!(Emotion, Emo, [CalmOrObjective, EmotionalNonHostile, HostileOrAggressive, MixedOrUnclear]);
vocabulary!(Style, Style, [Casual, Formal, MechanicalOrTemplateLike, Aggressive]);
vocabulary!(Function, Func, [
    InformationSharing,
    SelfPromotion,
    OpinionsOrComplaints,
    RandomStatementsOrThoughts,
    MeNow,
    QuestionsToFollowers,
    PresenceMaintenance,
    Anecdote,
]);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SummaryParseError {
    #[error("{bracket} bracket: sentence does not follow the summary template ({detail})")]
    Structure { bracket: Dimension, detail: String },
    #[error("{bracket} bracket: unknown label '{label}'")]
    UnknownLabel { bracket: Dimension, label: String },
    #[error("{bracket} bracket: {count} labels given, at most 3 allowed")]
    TooManyLabels { bracket: Dimension, count: usize },
    #[error("{bracket} bracket: label '{label}' repeated")]
    DuplicateLabel { bracket: Dimension, label: String },
    #[error("{bracket} bracket: no labels")]
    Empty { bracket: Dimension },
}

impl SummaryParseError {
    pub fn bracket(&self) -> Dimension {
        match self {
            SummaryParseError::Structure { bracket, .. }
            | SummaryParseError::UnknownLabel { bracket, .. }
            | SummaryParseError::TooManyLabels { bracket, .. }
            | SummaryParseError::DuplicateLabel { bracket, .. }
            | SummaryParseError::Empty { bracket } => *bracket,
        }
    }
}

/// 1–3 distinct labels of one dimension, in the order given.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(serialize = "T: Serialize + Clone", deserialize = "T: Deserialize<'de> + Category"))]
pub struct LabelSet<T>(Vec<T>);

impl<T: Category> LabelSet<T> {
    pub fn new(labels: Vec<T>) -> Result<Self, SummaryParseError> {
        let bracket = T::DIMENSION;
        if labels.is_empty() {
            return Err(SummaryParseError::Empty { bracket });
        }
        if labels.len() > 3 {
            return Err(SummaryParseError::TooManyLabels {
                bracket,
                count: labels.len(),
            });
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(SummaryParseError::DuplicateLabel {
                    bracket,
                    label: l.as_str().to_string(),
                });
            }
        }
        Ok(LabelSet(labels))
    }

    pub fn single(label: T) -> Self {
        LabelSet(vec![label])
    }

    pub fn labels(&self) -> &[T] {
        &self.0
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.0.iter().map(|l| l.as_str()).collect()
    }

    /// Prose join: `A`, `A and B`, `A, B, and C`.
    pub fn render(&self) -> String {
        let n = self.names();
        match n.len() {
            1 => n[0].to_string(),
            2 => format!("{} and {}", n[0], n[1]),
            _ => format!("{}, and {}", n[..n.len() - 1].join(", "), n[n.len() - 1]),
        }
    }

    fn parse_list(raw: &str) -> Result<Self, SummaryParseError> {
        let bracket = T::DIMENSION;
        let mut body = raw.trim();
        if let Some(inner) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            body = inner.trim();
        }
        let unified = body.replace(", and ", ",").replace(" and ", ",");
        let mut labels = Vec::new();
        for item in unified.split(',') {
            let item = item.trim();
            if item.is_empty() {
                return Err(SummaryParseError::Structure {
                    bracket,
                    detail: format!("empty label in '{raw}'"),
                });
            }
            let label = T::parse(item).ok_or_else(|| SummaryParseError::UnknownLabel {
                bracket,
                label: item.to_string(),
            })?;
            labels.push(label);
        }
        Self::new(labels)
    }
}

impl<T: Category> TryFrom<Vec<T>> for LabelSet<T> {
    type Error = SummaryParseError;

    fn try_from(v: Vec<T>) -> Result<Self, Self::Error> {
        LabelSet::new(v)
    }
}

impl<T> From<LabelSet<T>> for Vec<T> {
    fn from(s: LabelSet<T>) -> Self {
        s.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostSummary {
    pub theme: LabelSet<Theme>,
    pub sent: LabelSet<Sentiment>,
    pub emo: LabelSet<Emotion>,
    pub style: LabelSet<Style>,
    pub func: LabelSet<Function>,
}

const THEME_PREFIX: &str = "Regarding content themes, the user's posts mainly revolve around ";
const SENT_LEAD: &str = ". The overall sentiment ";
const EMO_LEAD: &str = ", with a dominant emotional tone of ";
const STYLE_LEAD: &str = ". The text style is ";
const FUNC_LEAD: &str = ". Functionally, the user appears to be engaged in ";

impl PostSummary {
    /// Labels of one dimension as strings.
    pub fn labels(&self, dim: Dimension) -> Vec<&'static str> {
        match dim {
            Dimension::Theme => self.theme.names(),
            Dimension::Sent => self.sent.names(),
            Dimension::Emo => self.emo.names(),
            Dimension::Style => self.style.names(),
            Dimension::Func => self.func.names(),
        }
    }

    /// The canonical summary sentence.
    pub fn render(&self) -> String {
        format!(
            "{THEME_PREFIX}{}{SENT_LEAD}polarity is {}{EMO_LEAD}{}{STYLE_LEAD}{}{FUNC_LEAD}{}.",
            self.theme.render(),
            self.sent.render(),
            self.emo.render(),
            self.style.render(),
            self.func.render()
        )
    }

    /// Parses a summary sentence. Accepts surrounding whitespace or quotes,
    /// "sentiment tendency" for "sentiment polarity", comma-only or prose
    /// joiners, and optional square brackets around each label list.
    pub fn parse(text: &str) -> Result<Self, SummaryParseError> {
        let structure = |bracket, detail: &str| SummaryParseError::Structure {
            bracket,
            detail: detail.to_string(),
        };
        let mut s = text.trim();
        for (open, close) in [('"', '"'), ('\u{201c}', '\u{201d}')] {
            if let Some(inner) = s.strip_prefix(open).and_then(|x| x.strip_suffix(close)) {
                s = inner.trim();
            }
        }
        let rest = s
            .strip_prefix(THEME_PREFIX)
            .ok_or_else(|| structure(Dimension::Theme, "missing content-theme opening"))?;
        let (theme, rest) = rest
            .split_once(SENT_LEAD)
            .ok_or_else(|| structure(Dimension::Theme, "missing sentiment clause after themes"))?;
        let rest = rest
            .strip_prefix("polarity is ")
            .or_else(|| rest.strip_prefix("tendency is "))
            .ok_or_else(|| structure(Dimension::Sent, "expected 'polarity is' or 'tendency is'"))?;
        let (sent, rest) = rest
            .split_once(EMO_LEAD)
            .ok_or_else(|| structure(Dimension::Sent, "missing emotional-tone clause"))?;
        let (emo, rest) = rest
            .split_once(STYLE_LEAD)
            .ok_or_else(|| structure(Dimension::Emo, "missing text-style sentence"))?;
        let (style, rest) = rest
            .split_once(FUNC_LEAD)
            .ok_or_else(|| structure(Dimension::Style, "missing function sentence"))?;
        let func = rest
            .strip_suffix('.')
            .ok_or_else(|| structure(Dimension::Func, "sentence must end with a period"))?;
        Ok(PostSummary {
            theme: LabelSet::parse_list(theme)?,
            sent: LabelSet::parse_list(sent)?,
            emo: LabelSet::parse_list(emo)?,
            style: LabelSet::parse_list(style)?,
            func: LabelSet::parse_list(func)?,
        })
    }
}

pub fn parse_summary_sentence(text: &str) -> Result<PostSummary, SummaryParseError> {
    PostSummary::parse(text)
}

pub fn render_summary(summary: &PostSummary) -> String {
    summary.render()
}

#[derive(Debug, Error)]
pub enum SummaryError {
    #[error("no history to summarize")]
    NoHistory,
    #[error("prompt template has no {{posts_content}} placeholder")]
    BadTemplate,
    #[error("summarization failed after {attempts} attempts: {last_error}")]
    Exhausted {
        attempts: usize,
        last_error: String,
        last_response: Option<String>,
    },
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(&'static str),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Sidecar {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

const PROMPT_TEMPLATE: &str = include_str!("../data/summary_prompt.txt");

/// The summarization prompt with a `{posts_content}` placeholder.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn builtin() -> Self {
        PromptTemplate {
            text: PROMPT_TEMPLATE.to_string(),
        }
    }

    pub fn new(text: String) -> Result<Self, SummaryError> {
        if !text.contains("{posts_content}") {
            return Err(SummaryError::BadTemplate);
        }
        Ok(PromptTemplate { text })
    }

    pub fn load(path: &Path) -> Result<Self, SummaryError> {
        let text = std::fs::read_to_string(path).map_err(|source| SummaryError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::new(text)
    }

    /// Fills the template with posts joined by newlines. When the posts
    /// exceed `budget` characters the oldest are dropped first.
    pub fn instantiate(&self, posts: &[String], budget: usize) -> Result<String, SummaryError> {
        if posts.is_empty() {
            return Err(SummaryError::NoHistory);
        }
        let content = truncate_oldest_first(posts, budget);
        Ok(self.text.replace("{posts_content}", &content))
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::builtin()
    }
}

fn truncate_oldest_first(posts: &[String], budget: usize) -> String {
    let mut kept: Vec<&str> = Vec::new();
    let mut used = 0usize;
    for post in posts.iter().rev() {
        let len = post.chars().count() + usize::from(!kept.is_empty());
        if used + len > budget {
            if kept.is_empty() {
                kept.push(match post.char_indices().nth(budget) {
                    Some((i, _)) => &post[..i],
                    None => post,
                });
            }
            break;
        }
        used += len;
        kept.push(post);
    }
    kept.reverse();
    kept.join("\n")
}

pub fn build_prompt(posts: &[String]) -> Result<String, SummaryError> {
    PromptTemplate::builtin().instantiate(posts, DEFAULT_POST_BUDGET)
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Anything that can answer a single-turn prompt with text.
pub trait SummaryClient: Sync {
    fn complete(&self, prompt: &str) -> Result<String, TransportError>;
}

/// Chat-completion client over HTTP (JSON `messages` format).
#[derive(Debug, Clone)]
pub struct HttpChatClient {
    pub endpoint: String,
    pub model: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(endpoint: &str, model: &str, api_key: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpChatClient {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key: api_key.to_string(),
            agent,
        }
    }

    /// Reads the credential from [`API_KEY_ENV`].
    pub fn from_env(endpoint: &str, model: &str) -> Result<Self, SummaryError> {
        let key = std::env::var(API_KEY_ENV).map_err(|_| SummaryError::MissingCredential(API_KEY_ENV))?;
        Ok(Self::new(endpoint, model, &key, Duration::from_secs(120)))
    }
}

impl SummaryClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| TransportError(e.to_string()))?;
        let value: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| TransportError(format!("unreadable response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError(format!("response without choices[0].message.content: {value}")))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: usize,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

/// Append-only JSON-lines log of every raw endpoint response.
#[derive(Debug)]
pub struct AuditLog {
    out: Mutex<BufWriter<File>>,
}

impl AuditLog {
    pub fn create(path: &Path) -> Result<Self, SummaryError> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| SummaryError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(AuditLog {
            out: Mutex::new(BufWriter::new(f)),
        })
    }

    fn record(&self, entry: serde_json::Value) {
        let mut out = self.out.lock().expect("audit log poisoned");
        // The audit trail is best effort; a failed write must not fail the summary.
        let _ = serde_json::to_writer(&mut *out, &entry);
        let _ = out.write_all(b"\n");
        let _ = out.flush();
    }
}

/// Summarizes post histories through a [`SummaryClient`], retrying on
/// transport errors and unparseable answers.
pub struct LlmSummarizer<C> {
    pub client: C,
    pub template: PromptTemplate,
    pub policy: RetryPolicy,
    pub budget: usize,
    pub audit: Option<AuditLog>,
}

impl<C: SummaryClient> LlmSummarizer<C> {
    pub fn new(client: C) -> Self {
        LlmSummarizer {
            client,
            template: PromptTemplate::builtin(),
            policy: RetryPolicy::default(),
            budget: DEFAULT_POST_BUDGET,
            audit: None,
        }
    }

    pub fn summarize(&self, user_id: &str, posts: &[String]) -> Result<PostSummary, SummaryError> {
        let prompt = self.template.instantiate(posts, self.budget)?;
        let attempts = self.policy.max_retries + 1;
        let mut last_error = String::new();
        let mut last_response = None;
        let mut backoff = self.policy.initial_backoff;
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
            match self.client.complete(&prompt) {
                Ok(raw) => {
                    let parsed = PostSummary::parse(&raw);
                    if let Some(audit) = &self.audit {
                        audit.record(json!({
                            "user_id": user_id,
                            "attempt": attempt,
                            "response": raw,
                            "parse_error": parsed.as_ref().err().map(|e| e.to_string()),
                        }));
                    }
                    match parsed {
                        Ok(summary) => return Ok(summary),
                        Err(e) => {
                            log::warn!("user {user_id}: attempt {attempt}: {e}");
                            last_error = e.to_string();
                            last_response = Some(raw);
                        }
                    }
                }
                Err(e) => {
                    if let Some(audit) = &self.audit {
                        audit.record(json!({
                            "user_id": user_id,
                            "attempt": attempt,
                            "transport_error": e.0,
                        }));
                    }
                    log::warn!("user {user_id}: attempt {attempt}: transport error: {e}");
                    last_error = e.0;
                }
            }
        }
        Err(SummaryError::Exhausted {
            attempts,
            last_error,
            last_response,
        })
    }

    /// Summarizes many users with at most `in_flight` concurrent requests.
    /// Results come back in input order.
    pub fn summarize_many(
        &self,
        users: &[(String, Vec<String>)],
        in_flight: usize,
    ) -> Vec<Result<PostSummary, SummaryError>>
    where
        C: Sync,
    {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<PostSummary, SummaryError>>>> =
            users.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..in_flight.max(1).min(users.len().max(1)) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= users.len() {
                        break;
                    }
                    let (id, posts) = &users[i];
                    *slots[i].lock().unwrap() = Some(self.summarize(id, posts));
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().unwrap().expect("every slot filled"))
            .collect()
    }
}

/// Convenience wrapper with the default template and retry policy.
pub fn llm_summarize<C: SummaryClient>(posts: &[String], client: C) -> Result<PostSummary, SummaryError> {
    LlmSummarizer::new(client).summarize("", posts)
}

const FALLBACK_LEXICON: &str = include_str!("../data/fallback_lexicon.tsv");

/// Keyword lists for the offline summarizer, keyed like `theme.Politics`.
#[derive(Debug, Clone)]
pub struct FallbackLexicon {
    entries: HashMap<String, Vec<String>>,
}

impl FallbackLexicon {
    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .filter_map(|l| l.split_once('\t'))
            .map(|(k, v)| {
                (
                    k.trim().to_string(),
                    v.split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect(),
                )
            })
            .collect();
        FallbackLexicon { entries }
    }

    pub fn builtin() -> Self {
        Self::parse(FALLBACK_LEXICON)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    fn words(&self, key: &str) -> &[String] {
        self.entries.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of distinct phrases of `key` present in the normalized post.
    fn hits(&self, key: &str, normalized: &str) -> usize {
        self.words(key)
            .iter()
            .filter(|w| contains_phrase(normalized, w))
            .count()
    }
}

impl Default for FallbackLexicon {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Top labels by score (at most 3, score > 0), ties in vocabulary order.
fn top_labels<T: Category>(scores: &[(T, usize)], default: T) -> LabelSet<T> {
    let mut ranked: Vec<(T, usize)> = scores.iter().copied().filter(|(_, s)| *s > 0).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let labels: Vec<T> = ranked.into_iter().take(3).map(|(l, _)| l).collect();
    if labels.is_empty() {
        LabelSet::single(default)
    } else {
        LabelSet::new(labels).expect("ranked labels are distinct and at most 3")
    }
}

const TEMPLATE_PREFIX_CHARS: usize = 20;

/// Deterministic lexicon-and-rule summary of a post history.
///
/// Each label is scored by the number of posts that trigger it; the top (up
/// to three) labels with a positive score are kept per dimension. Themes and
/// affect come from keyword lists; repeated post openings mark template-like
/// style; URLs, question marks and first-person-present phrases drive the
/// communicative functions.
pub fn fallback_summarize(posts: &[String], lex: &FallbackLexicon) -> Result<PostSummary, SummaryError> {
    if posts.is_empty() {
        return Err(SummaryError::NoHistory);
    }
    let stripped: Vec<String> = posts
        .iter()
        .map(|p| normalize_words(&URL_RE.replace_all(p, " ")))
        .collect();
    let count = |key: &str| stripped.iter().filter(|p| lex.hits(key, p) > 0).count();

    let theme_scores: Vec<(Theme, usize)> = Theme::ALL
        .iter()
        .map(|t| {
            let key = format!("theme.{}", t.as_str());
            (*t, stripped.iter().map(|p| lex.hits(&key, p)).sum())
        })
        .collect();
    let theme = top_labels(&theme_scores, Theme::Lifestyle);

    let pos: usize = stripped.iter().map(|p| lex.hits("sentiment.positive", p)).sum();
    let neg: usize = stripped.iter().map(|p| lex.hits("sentiment.negative", p)).sum();
    let sent = LabelSet::single(match (pos, neg) {
        (0, 0) => Sentiment::Neutral,
        (p, n) if p > 0 && n > 0 && 2 * p.min(n) >= p.max(n) => Sentiment::Mixed,
        (p, n) if p > n => Sentiment::Positive,
        _ => Sentiment::Negative,
    });

    let hostile = count("emotion.hostile");
    let emotive = posts
        .iter()
        .zip(&stripped)
        .filter(|(raw, norm)| {
            raw.contains('!')
                || raw.chars().any(crate::profile::is_emoji)
                || lex.hits("emotion.emotive", norm) > 0
        })
        .count();
    let calm = count("emotion.calm");
    let emo = top_labels(
        &[
            (Emotion::CalmOrObjective, calm),
            (Emotion::EmotionalNonHostile, emotive),
            (Emotion::HostileOrAggressive, hostile),
        ],
        Emotion::MixedOrUnclear,
    );

    let mut prefixes: BTreeMap<String, usize> = BTreeMap::new();
    for p in &stripped {
        let prefix: String = p.trim().chars().take(TEMPLATE_PREFIX_CHARS).collect();
        if !prefix.is_empty() {
            *prefixes.entry(prefix).or_default() += 1;
        }
    }
    let templated: usize = prefixes.values().filter(|c| **c >= 2).sum();
    let style = top_labels(
        &[
            (Style::Casual, count("style.casual")),
            (Style::Formal, count("style.formal")),
            (Style::MechanicalOrTemplateLike, templated),
            (Style::Aggressive, hostile),
        ],
        Style::Casual,
    );

    let url_posts = posts.iter().filter(|p| URL_RE.is_match(p)).count();
    let questions = posts.iter().filter(|p| p.contains('?')).count();
    let func = top_labels(
        &[
            (Function::InformationSharing, url_posts),
            (Function::SelfPromotion, count("function.promo")),
            (Function::OpinionsOrComplaints, count("function.opinion")),
            (Function::MeNow, count("function.menow")),
            (Function::QuestionsToFollowers, questions),
            (Function::PresenceMaintenance, count("function.presence")),
            (Function::Anecdote, count("function.anecdote")),
        ],
        Function::RandomStatementsOrThoughts,
    );

    Ok(PostSummary {
        theme,
        sent,
        emo,
        style,
        func,
    })
}

/// One line of a summary sidecar file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub user_id: String,
    #[serde(flatten)]
    pub summary: PostSummary,
    pub sentence: String,
}

impl SummaryEntry {
    pub fn new(user_id: &str, summary: PostSummary) -> Self {
        let sentence = summary.render();
        SummaryEntry {
            user_id: user_id.to_string(),
            summary,
            sentence,
        }
    }
}

pub fn save_sidecar(path: &Path, entries: &[SummaryEntry]) -> Result<(), SummaryError> {
    let io = |source| SummaryError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for e in entries {
        serde_json::to_writer(&mut w, e).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_sidecar(path: &Path) -> Result<Vec<SummaryEntry>, SummaryError> {
    let io = |source| SummaryError::Io {
        path: path.to_path_buf(),
        source,
    };
    let r = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: SummaryEntry = serde_json::from_str(&line).map_err(|e| SummaryError::Sidecar {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if entry.sentence != entry.summary.render() {
            return Err(SummaryError::Sidecar {
                path: path.to_path_buf(),
                line: i + 1,
                message: "sentence does not match its labels".into(),
            });
        }
        out.push(entry);
    }
    Ok(out)
}

//! Instruction documents: the fixed assistant instruction plus the structured
//! account block (user id, profile sections, post summary).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Label, UserRecord};
use crate::profile::{ProfileRendering, PLACEHOLDER};
use crate::summary::PostSummary;

pub const INSTRUCTION: &str = "You are a social media account classification assistant. Please determine whether the given account is a human or a bot based on the provided account features.";

pub const INPUT_PREAMBLE: &str = "Below is structured information about a social media account. Please determine whether this account is a human or a bot based on this information.";

pub const POSTS_HEADER: &str = "Posts Events";
pub const SUMMARY_TAG: &str = "[Multi-Dimensional Summary]:";

/// 2048 tokens at roughly four characters per token.
pub const MAX_DOC_CHARS: usize = 8_192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Profile metadata only.
    MetaData,
    /// Profile metadata plus the post summary.
    MetaSummary,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::MetaData => "MetaData",
            Variant::MetaSummary => "MetaSummary",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "metadata" => Ok(Variant::MetaData),
            "metasummary" => Ok(Variant::MetaSummary),
            _ => Err(format!("unknown variant '{s}' (expected metadata or meta-summary)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionDoc {
    pub user_id: String,
    pub dataset_id: String,
    pub variant: Variant,
    pub instruction: String,
    pub input: String,
    pub label: Label,
    pub domain_id: Option<u8>,
    /// Set when the document was cut to [`MAX_DOC_CHARS`].
    #[serde(default)]
    pub truncated: bool,
}

impl InstructionDoc {
    /// Instruction and input joined, as fed to the encoder.
    pub fn full_text(&self) -> String {
        format!("{}\n\n{}", self.instruction, self.input)
    }
}

/// Builds the document for one user. The variant follows from whether a
/// summary is supplied; a record without posts gets the placeholder either way.
pub fn build_instruction(
    record: &UserRecord,
    rendering: &ProfileRendering,
    summary: Option<&PostSummary>,
) -> InstructionDoc {
    let variant = if summary.is_some() {
        Variant::MetaSummary
    } else {
        Variant::MetaData
    };
    let posts = match summary {
        Some(s) if !record.posts.is_empty() => format!("{POSTS_HEADER}: {SUMMARY_TAG} {}", s.render()),
        _ => format!("{POSTS_HEADER}: {PLACEHOLDER}"),
    };
    let input = format!(
        "{INPUT_PREAMBLE}\n\nUser ID: {}\n\n{}\n\n{posts}",
        record.user_id, rendering.text
    );
    let mut doc = InstructionDoc {
        user_id: record.user_id.clone(),
        dataset_id: record.dataset_id.clone(),
        variant,
        instruction: INSTRUCTION.to_string(),
        input,
        label: record.label,
        domain_id: record.domain_id,
        truncated: false,
    };
    truncate_doc(&mut doc, MAX_DOC_CHARS);
    doc
}

/// Tail-truncates the input so instruction plus input fit in `max_chars`.
pub fn truncate_doc(doc: &mut InstructionDoc, max_chars: usize) {
    let budget = max_chars.saturating_sub(doc.instruction.chars().count() + 2);
    if let Some((cut, _)) = doc.input.char_indices().nth(budget) {
        log::warn!(
            "user {}: instruction document exceeds {max_chars} characters, truncating",
            doc.user_id
        );
        doc.input.truncate(cut);
        doc.truncated = true;
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed document: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub fn write_corpus_to<W: Write>(mut w: W, docs: &[InstructionDoc]) -> std::io::Result<()> {
    for d in docs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_corpus(path: &Path, docs: &[InstructionDoc]) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let f = File::create(path).map_err(io)?;
    write_corpus_to(BufWriter::new(f), docs).map_err(io)
}

pub fn read_corpus(path: &Path) -> Result<Vec<InstructionDoc>, CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let r = BufReader::new(File::open(path).map_err(io)?);
    let mut docs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub variant: Option<Variant>,
    pub total: usize,
    pub truncated: usize,
    /// dataset id -> [human, bot]
    pub per_dataset: BTreeMap<String, [usize; 2]>,
    /// domain id (or "target") -> [human, bot]
    pub per_domain: BTreeMap<String, [usize; 2]>,
}

impl CorpusManifest {
    pub fn from_docs(docs: &[InstructionDoc]) -> Self {
        let mut m = CorpusManifest {
            variant: docs.first().map(|d| d.variant),
            total: docs.len(),
            ..Default::default()
        };
        for d in docs {
            if Some(d.variant) != m.variant {
                log::warn!("corpus mixes variants; manifest records the first");
            }
            m.truncated += usize::from(d.truncated);
            m.per_dataset.entry(d.dataset_id.clone()).or_default()[d.label.index()] += 1;
            let domain = d.domain_id.map_or_else(|| "target".to_string(), |k| k.to_string());
            m.per_domain.entry(domain).or_default()[d.label.index()] += 1;
        }
        m
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{render_profile, Lexicons};
    use crate::summary::{Category, Dimension, LabelSet, Sentiment, Theme};

    fn record(posts: Vec<String>) -> UserRecord {
        UserRecord {
            user_id: "u1".into(),
            dataset_id: "d".into(),
            release_year: 2018,
            label: Label::Bot,
            domain_id: Some(1),
            profile: Default::default(),
            posts,
            relations: vec![],
        }
    }

    fn summary() -> PostSummary {
        let one = |d: Dimension| d.labels()[0];
        let _ = one;
        PostSummary {
            theme: LabelSet::single(Theme::Sports),
            sent: LabelSet::single(Sentiment::Neutral),
            emo: LabelSet::single(crate::summary::Emotion::ALL[0]),
            style: LabelSet::single(crate::summary::Style::ALL[0]),
            func: LabelSet::single(crate::summary::Function::ALL[0]),
        }
    }

    #[test]
    fn headers_appear_once_in_order() {
        let r = record(vec!["hi".into()]);
        let rendering = render_profile(&r, &Lexicons::builtin());
        let doc = build_instruction(&r, &rendering, Some(&summary()));
        assert_eq!(doc.variant, Variant::MetaSummary);
        let headers = [
            "User ID:",
            "Account Basic Information:",
            "Profile Completeness Features:",
            "Profile Text Statistics Features:",
            "Name Features:",
            "Language and Geographic Features:",
            "Description Text:",
            "Posts Events:",
        ];
        let mut last = 0;
        for h in headers {
            assert_eq!(doc.input.matches(h).count(), 1, "{h}");
            let at = doc.input.find(h).unwrap();
            assert!(at >= last);
            last = at;
        }
        assert!(doc.input.contains("Posts Events: [Multi-Dimensional Summary]: Regarding"));
    }

    #[test]
    fn metadata_variant_uses_placeholder() {
        let r = record(vec!["hi".into()]);
        let rendering = render_profile(&r, &Lexicons::builtin());
        let doc = build_instruction(&r, &rendering, None);
        assert_eq!(doc.variant, Variant::MetaData);
        assert!(doc.input.ends_with("Posts Events: unavailable"));
        let empty = record(vec![]);
        let doc = build_instruction(&empty, &rendering, Some(&summary()));
        assert!(doc.input.ends_with("Posts Events: unavailable"));
    }

    #[test]
    fn long_documents_are_tail_truncated() {
        let mut r = record(vec![]);
        r.user_id = "x".repeat(20_000);
        let rendering = render_profile(&r, &Lexicons::builtin());
        let doc = build_instruction(&r, &rendering, None);
        assert!(doc.truncated);
        assert_eq!(doc.full_text().chars().count(), MAX_DOC_CHARS);
        assert!(doc.input.starts_with(INPUT_PREAMBLE));
    }

    #[test]
    fn manifest_counts() {
        let r = record(vec![]);
        let rendering = render_profile(&r, &Lexicons::builtin());
        let docs = vec![build_instruction(&r, &rendering, None); 3];
        let m = CorpusManifest::from_docs(&docs);
        assert_eq!(m.per_dataset["d"], [0, 3]);
        assert_eq!(m.per_domain["1"], [0, 3]);
        assert_eq!(m.variant, Some(Variant::MetaData));
    }
}

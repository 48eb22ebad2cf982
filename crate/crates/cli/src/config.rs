//! Pipeline configuration: one TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use mgdil_core::Variant;
use mgdil_learn::graph::GraphTrainConfig;
use mgdil_learn::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    Metadata,
    MetaSummary,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Metadata => Variant::MetaData,
            VariantArg::MetaSummary => Variant::MetaSummary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SummarizerArg {
    Llm,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderArg {
    Hashing,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    /// Concurrent requests.
    pub in_flight: usize,
    pub max_retries: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            in_flight: 4,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Output dimension of the hashing encoder, or the expected embedding size.
    pub dim: usize,
    pub endpoint: String,
    pub model: String,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: mgdil_learn::encode::DEFAULT_DIM,
            endpoint: "https://api.openai.com/v1/embeddings".into(),
            model: "text-embedding-3-small".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Source registry for `ingest`; relative paths resolve against the config file.
    pub registry: Option<PathBuf>,
    pub variant: VariantArg,
    pub summarizer: SummarizerArg,
    pub encoder: EncoderArg,
    pub out: PathBuf,
    /// Bot/human slack allowed by class balancing.
    pub balance_slack: usize,
    /// When absent, the synthetic benchmark's own settings (or the defaults) apply.
    pub train: Option<TrainConfig>,
    pub graph: GraphTrainConfig,
    pub llm: LlmConfig,
    pub encoder_options: EncoderConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            registry: None,
            variant: VariantArg::MetaSummary,
            summarizer: SummarizerArg::Fallback,
            encoder: EncoderArg::Hashing,
            out: PathBuf::from("out"),
            balance_slack: mgdil_core::ingest::DEFAULT_SLACK,
            train: None,
            graph: GraphTrainConfig::default(),
            llm: LlmConfig::default(),
            encoder_options: EncoderConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(r) = &cfg.registry {
            if r.is_relative() {
                cfg.registry = Some(base.join(r));
            }
        }
        if let Some(t) = &cfg.train {
            t.validate()?;
        }
        Ok(cfg)
    }
}

//! Turning `--docs` / `--synthetic` into labeled vectors plus the training
//! settings that go with them.

use std::path::Path;

use anyhow::{Context, Result};

use mgdil_core::instruction::read_corpus;
use mgdil_core::summary::API_KEY_ENV;
use mgdil_learn::bench::manifest::{digest_file, sha256_hex, InputDigest};
use mgdil_learn::bench::synthetic::{generate_synthetic, SyntheticSpec, BUILTIN};
use mgdil_learn::encode::{encode_docs, ExternalEncoder, HashingEncoder, TextEncoder};
use mgdil_learn::{Dataset, TrainConfig};

use crate::config::{EncoderArg, PipelineConfig};
use crate::{usage, DataArgs, Split};

pub struct Loaded {
    /// Domain-labeled rows.
    pub source: Dataset,
    /// Rows without a domain, if any.
    pub target: Option<Dataset>,
    /// Recorded in checkpoints so evaluation can rebuild the same encoder.
    pub encoder_tag: String,
    pub train: TrainConfig,
    pub inputs: Vec<InputDigest>,
}

impl Loaded {
    pub fn split(&self, which: Split) -> Result<Dataset> {
        Ok(match (which, &self.target) {
            (Split::Source, _) => self.source.clone(),
            (Split::Target, Some(t)) => t.clone(),
            (Split::Target, None) => return Err(usage("the data has no target rows (every row has a domain)")),
            (Split::All, Some(t)) => Dataset::concat(&[&self.source, t])?,
            (Split::All, None) => self.source.clone(),
        })
    }
}

pub fn make_encoder(kind: EncoderArg, cfg: &PipelineConfig) -> Box<dyn TextEncoder> {
    match kind {
        EncoderArg::Hashing => Box::new(HashingEncoder::new(cfg.encoder_options.dim)),
        EncoderArg::External => Box::new(ExternalEncoder::new(
            &cfg.encoder_options.endpoint,
            &cfg.encoder_options.model,
            cfg.encoder_options.dim,
            std::env::var(API_KEY_ENV).ok(),
        )),
    }
}

pub fn encoder_tag(kind: EncoderArg, cfg: &PipelineConfig) -> String {
    match kind {
        EncoderArg::Hashing => format!("hashing:{}", cfg.encoder_options.dim),
        EncoderArg::External => format!("external:{}:{}", cfg.encoder_options.model, cfg.encoder_options.dim),
    }
}

/// Inverse of [`encoder_tag`] for the parts that matter to `cfg`.
pub fn encoder_from_tag(tag: &str, cfg: &PipelineConfig) -> Result<Option<(EncoderArg, PipelineConfig)>> {
    let mut cfg = cfg.clone();
    let parts: Vec<&str> = tag.split(':').collect();
    match parts.as_slice() {
        ["hashing", dim] => {
            cfg.encoder_options.dim = dim.parse().with_context(|| format!("bad encoder tag {tag}"))?;
            Ok(Some((EncoderArg::Hashing, cfg)))
        }
        ["external", model, dim] => {
            cfg.encoder_options.model = model.to_string();
            cfg.encoder_options.dim = dim.parse().with_context(|| format!("bad encoder tag {tag}"))?;
            Ok(Some((EncoderArg::External, cfg)))
        }
        ["synthetic", ..] => Ok(None),
        _ => Err(anyhow::anyhow!("unrecognized encoder tag '{tag}'")),
    }
}

fn split_by_domain(all: Dataset) -> (Dataset, Option<Dataset>) {
    let (src, tgt): (Vec<usize>, Vec<usize>) = (0..all.len()).partition(|i| all.domains[*i].is_some());
    let target = (!tgt.is_empty()).then(|| all.select(&tgt));
    (all.select(&src), target)
}

pub fn encode_doc_file(path: &Path, kind: EncoderArg, cfg: &PipelineConfig) -> Result<Dataset> {
    if !path.exists() {
        return Err(usage(format!("instruction corpus {} does not exist", path.display())));
    }
    let docs = read_corpus(path)?;
    if docs.is_empty() {
        return Err(usage(format!("instruction corpus {} is empty", path.display())));
    }
    let encoder = make_encoder(kind, cfg);
    log::info!("encoding {} documents with {}", docs.len(), encoder_tag(kind, cfg));
    Ok(encode_docs(&docs, encoder.as_ref())?)
}

/// Loads the data named by `args`. `encoder` overrides the configured one
/// (evaluation passes the checkpoint's).
pub fn load(args: &DataArgs, cfg: &PipelineConfig, encoder: Option<(EncoderArg, &PipelineConfig)>) -> Result<Loaded> {
    if let Some(spec_arg) = &args.synthetic {
        let (spec, text, inputs) = if spec_arg == "builtin" {
            (SyntheticSpec::builtin(), BUILTIN.to_string(), Vec::new())
        } else {
            let p = Path::new(spec_arg);
            if !p.exists() {
                return Err(usage(format!("synthetic spec {} does not exist", p.display())));
            }
            let text = std::fs::read_to_string(p)?;
            (SyntheticSpec::from_toml(&text)?, text, vec![digest_file(p)?])
        };
        let corpus = generate_synthetic(&spec)?;
        let train = cfg.train.clone().or(spec.train.clone()).unwrap_or_default();
        return Ok(Loaded {
            source: corpus.source,
            target: Some(corpus.target),
            encoder_tag: format!("synthetic:{}", &sha256_hex(text.as_bytes())[..16]),
            train,
            inputs,
        });
    }
    let path = args.docs.as_ref().expect("clap enforces one data source");
    let (kind, enc_cfg) = encoder.unwrap_or((cfg.encoder, cfg));
    let all = encode_doc_file(path, kind, enc_cfg)?;
    let (source, target) = split_by_domain(all);
    if source.is_empty() {
        log::warn!("no document carries a domain label");
    }
    Ok(Loaded {
        source,
        target,
        encoder_tag: encoder_tag(kind, enc_cfg),
        train: cfg.train.clone().unwrap_or_default(),
        inputs: vec![digest_file(path)?],
    })
}

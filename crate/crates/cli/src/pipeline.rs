//! Data-side subcommands: ingest, featurize, summarize, build, report.

use std::collections::HashMap;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use mgdil_core::ingest::{balance, dataset_counts, dedupe, load_records, save_records, SourceRegistry, UserRecord};
use mgdil_core::instruction::{write_corpus, CorpusManifest};
use mgdil_core::profile::write_feature_csv;
use mgdil_core::summary::{
    fallback_summarize, load_sidecar, save_sidecar, AuditLog, FallbackLexicon, HttpChatClient, LlmSummarizer,
    PromptTemplate, SummaryEntry,
};
use mgdil_core::{build_instruction, render_profile, Lexicons, PostSummary, Variant};
use mgdil_learn::bench::distribution::{distribution_report, write_distribution_csv};

use crate::config::SummarizerArg;
use crate::{usage, Ctx};

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

fn read_corpus_records(path: &Path) -> Result<Vec<UserRecord>> {
    require(path, "corpus")?;
    Ok(load_records(path)?)
}

fn lexicons(dir: Option<&Path>) -> Result<Lexicons> {
    match dir {
        Some(d) => {
            require(d, "lexicon directory")?;
            Lexicons::load_dir(d).with_context(|| format!("loading lexicons from {}", d.display()))
        }
        None => Ok(Lexicons::builtin()),
    }
}

pub fn ingest(ctx: &Ctx, registry: Option<PathBuf>, no_balance: bool) -> Result<()> {
    let path = registry
        .or_else(|| ctx.cfg.registry.clone())
        .ok_or_else(|| usage("ingest needs --registry or `registry` in the config file"))?;
    require(&path, "source registry")?;
    let reg = SourceRegistry::load(&path)?;
    let parsed = reg.parse_all()?;
    let diag_path = ctx.out_path("ingest_diagnostics.csv")?;
    let mut w = csv::Writer::from_path(&diag_path)?;
    for d in &parsed.diagnostics {
        w.serialize(d)?;
    }
    w.flush()?;
    if parsed.skipped() > 0 {
        log::warn!("skipped {} malformed rows; see {}", parsed.skipped(), diag_path.display());
    }
    let parsed_count = parsed.records.len();
    let mut records = dedupe(parsed.records)?;
    log::info!("parsed {parsed_count} records, {} after dedupe", records.len());
    if !no_balance {
        let seed = ctx.seed.unwrap_or(42);
        records = balance(records, seed, ctx.cfg.balance_slack)?;
        log::info!("{} records after balancing (seed {seed})", records.len());
    }
    save_records(&ctx.out_path("corpus.jsonl")?, &records)?;
    let mut w = csv::Writer::from_path(ctx.out_path("dataset_counts.csv")?)?;
    w.write_record(["dataset_id", "human", "bot"])?;
    for (ds, c) in dataset_counts(&records) {
        w.write_record([ds, c.human.to_string(), c.bot.to_string()])?;
    }
    w.flush()?;
    println!("{} records written to {}", records.len(), ctx.cfg.out.join("corpus.jsonl").display());
    Ok(())
}

pub fn featurize(ctx: &Ctx, corpus: &Path, lex_dir: Option<&Path>) -> Result<()> {
    let records = read_corpus_records(corpus)?;
    let lex = lexicons(lex_dir)?;
    let renderings: Vec<_> = records.iter().map(|r| render_profile(r, &lex)).collect();
    let rows: Vec<(&str, _)> = records.iter().map(|r| r.user_id.as_str()).zip(&renderings).collect();
    write_feature_csv(std::fs::File::create(ctx.out_path("features.csv")?)?, &rows)?;
    let mut w = BufWriter::new(std::fs::File::create(ctx.out_path("profiles.jsonl")?)?);
    for (r, p) in records.iter().zip(&renderings) {
        let line = json!({
            "user_id": r.user_id,
            "placeholders": p.placeholder_count(),
            "text": p.text,
        });
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    println!("{} profiles rendered", records.len());
    Ok(())
}

pub fn summarize(ctx: &Ctx, corpus: &Path, lexicon: Option<&Path>, prompt: Option<&Path>) -> Result<()> {
    let records = read_corpus_records(corpus)?;
    let with_posts: Vec<&UserRecord> = records.iter().filter(|r| !r.posts.is_empty()).collect();
    if with_posts.len() < records.len() {
        log::info!("{} users have no posts and get no summary", records.len() - with_posts.len());
    }
    let entries: Vec<SummaryEntry> = match ctx.cfg.summarizer {
        SummarizerArg::Fallback => {
            let lex = match lexicon {
                Some(p) => {
                    require(p, "summary lexicon")?;
                    FallbackLexicon::load(p)?
                }
                None => FallbackLexicon::builtin(),
            };
            with_posts
                .iter()
                .map(|r| Ok(SummaryEntry::new(&r.user_id, fallback_summarize(&r.posts, &lex)?)))
                .collect::<Result<_>>()?
        }
        SummarizerArg::Llm => {
            let llm = &ctx.cfg.llm;
            let mut s = LlmSummarizer::new(HttpChatClient::from_env(&llm.endpoint, &llm.model)?);
            s.policy.max_retries = llm.max_retries;
            if let Some(p) = prompt {
                require(p, "prompt template")?;
                s.template = PromptTemplate::load(p)?;
            }
            s.audit = Some(AuditLog::create(&ctx.out_path("llm_audit.jsonl")?)?);
            let users: Vec<(String, Vec<String>)> =
                with_posts.iter().map(|r| (r.user_id.clone(), r.posts.clone())).collect();
            let results = s.summarize_many(&users, llm.in_flight);
            let mut out = Vec::new();
            let mut failed = 0;
            for ((id, _), r) in users.iter().zip(results) {
                match r {
                    Ok(summary) => out.push(SummaryEntry::new(id, summary)),
                    Err(e) => {
                        failed += 1;
                        log::error!("user {id}: {e}");
                    }
                }
            }
            if failed > 0 {
                anyhow::bail!("{failed} users could not be summarized; see llm_audit.jsonl");
            }
            out
        }
    };
    save_sidecar(&ctx.out_path("summaries.jsonl")?, &entries)?;
    println!("{} summaries written", entries.len());
    Ok(())
}

pub fn build(ctx: &Ctx, corpus: &Path, summaries: Option<&Path>, lex_dir: Option<&Path>) -> Result<()> {
    let variant: Variant = ctx.cfg.variant.into();
    let records = read_corpus_records(corpus)?;
    let lex = lexicons(lex_dir)?;
    let sidecar: Option<HashMap<String, PostSummary>> = match (variant, summaries) {
        (Variant::MetaSummary, None) => {
            return Err(usage("variant meta-summary requires --summaries (run `mgdil summarize` first)"));
        }
        (Variant::MetaData, Some(_)) => {
            return Err(usage("variant metadata takes no --summaries; use --variant meta-summary"));
        }
        (Variant::MetaData, None) => None,
        (Variant::MetaSummary, Some(p)) => {
            require(p, "summary sidecar")?;
            Some(load_sidecar(p)?.into_iter().map(|e| (e.user_id, e.summary)).collect())
        }
    };
    let mut docs = Vec::with_capacity(records.len());
    for r in &records {
        let rendering = render_profile(r, &lex);
        let summary = match &sidecar {
            None => None,
            Some(map) => match map.get(&r.user_id) {
                Some(s) => Some(s),
                None if r.posts.is_empty() => None,
                None => anyhow::bail!("user {} has posts but no entry in the summary sidecar", r.user_id),
            },
        };
        let mut doc = build_instruction(r, &rendering, summary);
        // Users without posts still belong to the requested variant.
        doc.variant = variant;
        docs.push(doc);
    }
    write_corpus(&ctx.out_path("instructions.jsonl")?, &docs)?;
    let manifest = CorpusManifest::from_docs(&docs);
    manifest.save(&ctx.out_path("instructions.manifest.json")?)?;
    println!("{} {} documents ({} truncated)", docs.len(), variant.as_str(), manifest.truncated);
    Ok(())
}

pub fn report(ctx: &Ctx, corpus: &Path, summaries: &Path) -> Result<()> {
    let records = read_corpus_records(corpus)?;
    require(summaries, "summary sidecar")?;
    let by_user: HashMap<String, &UserRecord> = records.iter().map(|r| (r.user_id.clone(), r)).collect();
    let mut items = Vec::new();
    for e in load_sidecar(summaries)? {
        match by_user.get(&e.user_id) {
            Some(r) => items.push((e.summary, r.label, r.dataset_id.clone())),
            None => log::warn!("summary for unknown user {}", e.user_id),
        }
    }
    let rows = distribution_report(&items);
    write_distribution_csv(std::fs::File::create(ctx.out_path("distribution.csv")?)?, &rows)?;
    println!("{} distribution rows over {} users", rows.len(), items.len());
    Ok(())
}

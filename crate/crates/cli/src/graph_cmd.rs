//! `graph-train` / `graph-eval`: the relational stage on frozen latents.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};

use mgdil_core::ingest::load_records;
use mgdil_learn::checkpoint::Checkpoint;
use mgdil_learn::graph::{evaluate_graph, load_edge_csv, train_graph, EdgeRow, GraphCheckpoint, RelationGraph};
use mgdil_learn::Dataset;

use crate::data::{encode_doc_file, encoder_from_tag};
use crate::experiment::write_eval_csv;
use crate::{usage, Ctx};

pub enum EdgeSource {
    Csv(PathBuf),
    Corpus(PathBuf),
}

impl EdgeSource {
    pub fn new(edges: Option<PathBuf>, corpus: Option<PathBuf>) -> Result<Self> {
        match (edges, corpus) {
            (Some(e), None) => Ok(EdgeSource::Csv(e)),
            (None, Some(c)) => Ok(EdgeSource::Corpus(c)),
            _ => Err(usage("give exactly one of --edges or --corpus")),
        }
    }

    fn rows(&self) -> Result<Vec<EdgeRow>> {
        let path = match self {
            EdgeSource::Csv(p) | EdgeSource::Corpus(p) => p,
        };
        if !path.exists() {
            return Err(usage(format!("{} does not exist", path.display())));
        }
        Ok(match self {
            EdgeSource::Csv(p) => load_edge_csv(p)?,
            EdgeSource::Corpus(p) => load_records(p)?
                .iter()
                .flat_map(|r| {
                    r.relations.iter().map(|rel| EdgeRow {
                        src: r.user_id.clone(),
                        relation: rel.relation.clone(),
                        dst: rel.neighbor.clone(),
                    })
                })
                .collect(),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitRow {
    user_id: String,
    split: String,
}

/// Encodes `docs` with the checkpoint's encoder and returns the documents and
/// their latents.
fn node_features(ctx: &Ctx, checkpoint: &Path, docs: &Path) -> Result<(Dataset, ndarray::Array2<f64>, u64)> {
    if !checkpoint.exists() {
        return Err(usage(format!("checkpoint {} does not exist", checkpoint.display())));
    }
    let ck = Checkpoint::load(checkpoint)?;
    let state = ck.state()?;
    let (kind, cfg) = encoder_from_tag(&ck.encoder, &ctx.cfg)?
        .ok_or_else(|| usage("the relational stage needs a checkpoint trained on an instruction corpus"))?;
    let ds = encode_doc_file(docs, kind, &cfg)?;
    state.check_input(ds.x.view())?;
    let h = state.latents(ds.x.view());
    Ok((ds, h, ck.seed))
}

pub fn train(ctx: &Ctx, checkpoint: &Path, docs: &Path, edges: EdgeSource, held_out: f64) -> Result<()> {
    if !(0.0..1.0).contains(&held_out) {
        return Err(usage("--held-out must be in [0, 1)"));
    }
    let (ds, h, ck_seed) = node_features(ctx, checkpoint, docs)?;
    let seed = ctx.seed.unwrap_or(ck_seed);
    let gcfg = &ctx.cfg.graph;
    let g = RelationGraph::new(ds.ids.clone(), h, &edges.rows()?, gcfg.add_reverse)?;
    log::info!(
        "graph: {} nodes, {} edges, relations {:?}, {} dropped",
        g.node_count(),
        g.edges.len(),
        g.relations,
        g.dropped
    );
    let test: HashSet<String> = if held_out > 0.0 {
        ds.split(held_out, seed)?.1.ids.into_iter().collect()
    } else {
        HashSet::new()
    };
    let train_labels: Vec<Option<usize>> =
        ds.ids.iter().zip(&ds.y).map(|(id, y)| (!test.contains(id)).then_some(*y)).collect();
    let test_labels: Vec<Option<usize>> =
        ds.ids.iter().zip(&ds.y).map(|(id, y)| test.contains(id).then_some(*y)).collect();
    let out = train_graph(&g, &train_labels, gcfg, seed)?;
    GraphCheckpoint::new(&out.params, &g.relations, gcfg.add_reverse).save(&ctx.out_path("graph_checkpoint.json")?)?;
    let mut w = csv::Writer::from_path(ctx.out_path("graph_losses.csv")?)?;
    w.write_record(["epoch", "loss"])?;
    for (i, l) in out.losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(ctx.out_path("graph_split.csv")?)?;
    for id in &ds.ids {
        let split = if test.contains(id) { "test" } else { "train" };
        w.serialize(SplitRow { user_id: id.clone(), split: split.into() })?;
    }
    w.flush()?;
    println!(
        "graph stage: {} epochs, final loss {:.5}",
        out.losses.len(),
        out.losses.last().copied().unwrap_or(f64::NAN)
    );
    if !test.is_empty() {
        let r = evaluate_graph(&g, &test_labels, &out.params)?;
        write_eval_csv(&ctx.out_path("graph_eval.csv")?, "test", test.len(), &r)?;
        println!("held-out nodes ({}): accuracy {:.4} macro_f1 {:.4}", test.len(), r.accuracy, r.macro_f1);
    }
    Ok(())
}

pub fn eval(
    ctx: &Ctx,
    graph_checkpoint: &Path,
    checkpoint: &Path,
    docs: &Path,
    edges: EdgeSource,
    split_file: Option<&Path>,
) -> Result<()> {
    if !graph_checkpoint.exists() {
        return Err(usage(format!("graph checkpoint {} does not exist", graph_checkpoint.display())));
    }
    let gck = GraphCheckpoint::load(graph_checkpoint)?;
    let params = gck.params()?;
    let (ds, h, _) = node_features(ctx, checkpoint, docs)?;
    if h.ncols() != params.dim() {
        anyhow::bail!("latents have {} dimensions but the graph model expects {}", h.ncols(), params.dim());
    }
    let g = RelationGraph::new(ds.ids.clone(), h, &edges.rows()?, gck.add_reverse)?.with_relations(&gck.relations)?;
    let keep: Option<HashSet<String>> = match split_file {
        None => None,
        Some(p) => {
            if !p.exists() {
                return Err(usage(format!("split file {} does not exist", p.display())));
            }
            let mut r = csv::Reader::from_path(p)?;
            let rows: Vec<SplitRow> = r.deserialize().collect::<Result<_, _>>()?;
            Some(rows.into_iter().filter(|r| r.split == "test").map(|r| r.user_id).collect())
        }
    };
    let labels: Vec<Option<usize>> = ds
        .ids
        .iter()
        .zip(&ds.y)
        .map(|(id, y)| keep.as_ref().is_none_or(|k| k.contains(id)).then_some(*y))
        .collect();
    let n = labels.iter().flatten().count();
    if n == 0 {
        return Err(usage("no labeled nodes to evaluate"));
    }
    let r = evaluate_graph(&g, &labels, &params)?;
    let name = if keep.is_some() { "test" } else { "all" };
    write_eval_csv(&ctx.out_path("graph_eval.csv")?, name, n, &r)?;
    println!("{name} nodes ({n}): accuracy {:.4} macro_f1 {:.4}", r.accuracy, r.macro_f1);
    Ok(())
}

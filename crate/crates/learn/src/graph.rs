//! Relation-aware message passing over a user graph whose node features are
//! latents from a trained encoder, and a node classifier on top.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mgdil_core::ingest::UserRecord;

use crate::bench::metrics::{metrics, EvalReport};
use crate::checkpoint::NamedTensor;
use crate::model::{log_softmax, softmax_rows, Linear};
use crate::optim::{self, AdamWConfig};
use crate::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub rel: usize,
    pub dst: usize,
}

/// Directed multi-relational graph. Messages flow from `src` to `dst`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationGraph {
    pub nodes: Vec<String>,
    pub relations: Vec<String>,
    pub edges: Vec<Edge>,
    /// Initial node states, one row per node.
    pub features: Array2<f64>,
    /// Edges dropped because an endpoint is not a node.
    pub dropped: usize,
}

/// One row of an edge-list file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub src: String,
    pub relation: String,
    pub dst: String,
}

pub const REVERSE_SUFFIX: &str = "_rev";

impl RelationGraph {
    /// Nodes are `ids` in order with `features` as their states. Duplicate
    /// edges collapse; edges touching unknown ids are dropped and counted.
    /// The relation set is whatever occurs in `edges`, sorted by name.
    pub fn new(ids: Vec<String>, features: Array2<f64>, edges: &[EdgeRow], add_reverse: bool) -> Result<Self, LearnError> {
        if ids.len() != features.nrows() {
            return Err(LearnError::Shape(format!(
                "{} node ids but {} feature rows",
                ids.len(),
                features.nrows()
            )));
        }
        let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        if index.len() != ids.len() {
            return Err(LearnError::Shape("duplicate node ids".into()));
        }
        let mut named = Vec::new();
        let mut dropped = 0;
        for e in edges {
            match (index.get(e.src.as_str()), index.get(e.dst.as_str())) {
                (Some(&s), Some(&d)) => {
                    named.push((s, e.relation.clone(), d));
                    if add_reverse {
                        named.push((d, format!("{}{REVERSE_SUFFIX}", e.relation), s));
                    }
                }
                _ => dropped += 1,
            }
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} edges with an unknown endpoint");
        }
        let relations: Vec<String> = named.iter().map(|(_, r, _)| r.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let rel_index: HashMap<&str, usize> = relations.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (s, r, d) in &named {
            let e = Edge { src: *s, rel: rel_index[r.as_str()], dst: *d };
            if seen.insert(e) {
                out.push(e);
            }
        }
        Ok(RelationGraph {
            nodes: ids,
            relations,
            edges: out,
            features,
            dropped,
        })
    }

    /// Edges from each record's relation lists: `user --relation--> neighbor`.
    pub fn from_records(
        records: &[UserRecord],
        ids: Vec<String>,
        features: Array2<f64>,
        add_reverse: bool,
    ) -> Result<Self, LearnError> {
        let rows: Vec<EdgeRow> = records
            .iter()
            .flat_map(|r| {
                r.relations.iter().map(move |rel| EdgeRow {
                    src: r.user_id.clone(),
                    relation: rel.relation.clone(),
                    dst: rel.neighbor.clone(),
                })
            })
            .collect();
        Self::new(ids, features, &rows, add_reverse)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// The same graph with node `i` of the result being node `perm[i]` here.
    pub fn permuted(&self, perm: &[usize]) -> RelationGraph {
        let mut inverse = vec![0; perm.len()];
        for (new, old) in perm.iter().enumerate() {
            inverse[*old] = new;
        }
        RelationGraph {
            nodes: perm.iter().map(|i| self.nodes[*i].clone()).collect(),
            relations: self.relations.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| Edge { src: inverse[e.src], rel: e.rel, dst: inverse[e.dst] })
                .collect(),
            features: self.features.select(Axis(0), perm),
            dropped: self.dropped,
        }
    }

    /// Re-indexes the edges against a fixed relation list, e.g. the one a
    /// trained model was built for. Relations absent from the graph are fine;
    /// relations the list does not know are an error.
    pub fn with_relations(mut self, relations: &[String]) -> Result<Self, LearnError> {
        let index: HashMap<&str, usize> = relations.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let remap: Vec<usize> = self
            .relations
            .iter()
            .map(|r| {
                index
                    .get(r.as_str())
                    .copied()
                    .ok_or_else(|| LearnError::Config(format!("relation '{r}' is unknown to the model")))
            })
            .collect::<Result<_, _>>()?;
        for e in &mut self.edges {
            e.rel = remap[e.rel];
        }
        self.relations = relations.to_vec();
        Ok(self)
    }
}

/// Reads `src,relation,dst` rows (with that header).
pub fn read_edge_csv<R: Read>(r: R) -> Result<Vec<EdgeRow>, LearnError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    rd.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| LearnError::Io(format!("edge list row {}: {e}", i + 2))))
        .collect()
}

pub fn load_edge_csv(path: &Path) -> Result<Vec<EdgeRow>, LearnError> {
    let f = std::fs::File::open(path).map_err(|e| LearnError::Io(format!("{}: {e}", path.display())))?;
    read_edge_csv(f)
}

/// Per relation, per destination node: (source, weight) pairs.
#[derive(Debug, Clone)]
struct Adjacency {
    rows: Vec<Vec<Vec<(usize, f64)>>>,
}

impl Adjacency {
    fn new(g: &RelationGraph, agg: Aggregation) -> Self {
        let n = g.node_count();
        let mut rows = vec![vec![Vec::new(); n]; g.relations.len()];
        for e in &g.edges {
            rows[e.rel][e.dst].push((e.src, 1.0));
        }
        if agg == Aggregation::Mean {
            for per_rel in rows.iter_mut() {
                for nbrs in per_rel.iter_mut() {
                    let w = 1.0 / nbrs.len().max(1) as f64;
                    nbrs.iter_mut().for_each(|p| p.1 = w);
                }
            }
        }
        Adjacency { rows }
    }

    /// `A_r h`.
    fn apply(&self, rel: usize, h: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(h.raw_dim());
        for (v, nbrs) in self.rows[rel].iter().enumerate() {
            let mut row = out.row_mut(v);
            for (u, w) in nbrs {
                row.scaled_add(*w, &h.row(*u));
            }
        }
        out
    }

    /// `A_rᵀ g`.
    fn apply_t(&self, rel: usize, g: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(g.raw_dim());
        for (v, nbrs) in self.rows[rel].iter().enumerate() {
            for (u, w) in nbrs {
                out.row_mut(*u).scaled_add(*w, &g.row(v));
            }
        }
        out
    }
}

/// Weights of one propagation layer, stored `in × out` (row-vector convention).
#[derive(Debug, Clone, PartialEq)]
pub struct GnnLayer {
    pub w_self: Array2<f64>,
    pub w_rel: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    pub layers: Vec<GnnLayer>,
    pub cls: Linear,
    pub aggregation: Aggregation,
}

impl GnnParams {
    pub fn init(dim: usize, relations: usize, layers: usize, aggregation: Aggregation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1.0 / (dim as f64).sqrt();
        let mat = |rng: &mut ChaCha8Rng| Array2::from_shape_simple_fn((dim, dim), || rng.random_range(-k..k));
        let layers = (0..layers)
            .map(|_| GnnLayer {
                w_self: mat(&mut rng),
                w_rel: (0..relations).map(|_| mat(&mut rng)).collect(),
            })
            .collect();
        GnnParams {
            layers,
            cls: Linear::init(dim, 2, &mut rng),
            aggregation,
        }
    }

    pub fn zeros_like(&self) -> Self {
        GnnParams {
            layers: self
                .layers
                .iter()
                .map(|l| GnnLayer {
                    w_self: Array2::zeros(l.w_self.raw_dim()),
                    w_rel: l.w_rel.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
                })
                .collect(),
            cls: Linear::zeros(self.cls.inputs(), self.cls.outputs()),
            aggregation: self.aggregation,
        }
    }

    pub fn dim(&self) -> usize {
        self.cls.inputs()
    }

    pub fn relation_count(&self) -> usize {
        self.layers.first().map_or(0, |l| l.w_rel.len())
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            names.push(format!("layer.{i}.self"));
            for r in 0..l.w_rel.len() {
                names.push(format!("layer.{i}.rel.{r}"));
            }
        }
        names.push("classifier.weight".into());
        names.push("classifier.bias".into());
        names
    }

    pub fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.w_self.shape().to_vec());
            out.extend(l.w_rel.iter().map(|w| w.shape().to_vec()));
        }
        out.push(self.cls.w.shape().to_vec());
        out.push(self.cls.b.shape().to_vec());
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(l.w_self.as_slice().expect("standard layout"));
            out.extend(l.w_rel.iter().map(|w| w.as_slice().expect("standard layout")));
        }
        out.push(self.cls.w.as_slice().expect("standard layout"));
        out.push(self.cls.b.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self.layers.iter_mut() {
            out.push(l.w_self.as_slice_mut().expect("standard layout"));
            out.extend(l.w_rel.iter_mut().map(|w| w.as_slice_mut().expect("standard layout")));
        }
        out.push(self.cls.w.as_slice_mut().expect("standard layout"));
        out.push(self.cls.b.as_slice_mut().expect("standard layout"));
        out
    }

    fn check(&self, g: &RelationGraph) -> Result<(), LearnError> {
        if g.dim() != self.dim() {
            return Err(LearnError::Shape(format!(
                "node features have {} dimensions, parameters expect {}",
                g.dim(),
                self.dim()
            )));
        }
        if !self.layers.is_empty() && g.relations.len() != self.relation_count() {
            return Err(LearnError::Shape(format!(
                "graph has {} relation types, parameters have {}",
                g.relations.len(),
                self.relation_count()
            )));
        }
        Ok(())
    }
}

struct Forward {
    adj: Adjacency,
    /// Layer inputs ĥ⁰..ĥᴸ.
    hs: Vec<Array2<f64>>,
    /// Pre-activations per layer.
    zs: Vec<Array2<f64>>,
    /// `A_r ĥˡ` per layer and relation.
    msgs: Vec<Vec<Array2<f64>>>,
}

fn forward(g: &RelationGraph, p: &GnnParams) -> Result<Forward, LearnError> {
    p.check(g)?;
    let adj = Adjacency::new(g, p.aggregation);
    let mut hs = vec![g.features.clone()];
    let mut zs = Vec::new();
    let mut msgs = Vec::new();
    for layer in &p.layers {
        let h = hs.last().expect("nonempty").view();
        let mut z = h.dot(&layer.w_self);
        let mut per_rel = Vec::with_capacity(layer.w_rel.len());
        for (r, w) in layer.w_rel.iter().enumerate() {
            let m = adj.apply(r, h);
            z += &m.dot(w);
            per_rel.push(m);
        }
        hs.push(z.mapv(|v| v.max(0.0)));
        zs.push(z);
        msgs.push(per_rel);
    }
    Ok(Forward { adj, hs, zs, msgs })
}

/// Node states after all layers. With no layers this is the input features.
pub fn message_pass(g: &RelationGraph, p: &GnnParams) -> Result<Array2<f64>, LearnError> {
    Ok(forward(g, p)?.hs.pop().expect("nonempty"))
}

pub fn graph_classify(z: ArrayView2<f64>, p: &GnnParams) -> Array2<f64> {
    softmax_rows(p.cls.forward(z).view())
}

#[derive(Debug, Clone)]
pub struct GraphLoss {
    pub value: f64,
    pub grad: GnnParams,
    pub labeled: usize,
}

/// Mean cross-entropy over nodes with a label, and its gradient. Zero (with
/// zero gradient) when no node is labeled.
pub fn graph_loss(g: &RelationGraph, labels: &[Option<usize>], p: &GnnParams) -> Result<GraphLoss, LearnError> {
    if labels.len() != g.node_count() {
        return Err(LearnError::Shape(format!(
            "{} labels for {} nodes",
            labels.len(),
            g.node_count()
        )));
    }
    let f = forward(g, p)?;
    let z = f.hs.last().expect("nonempty");
    let logits = p.cls.forward(z.view());
    let mut grad = p.zeros_like();
    let labeled = labels.iter().filter(|l| l.is_some()).count();
    if labeled == 0 {
        return Ok(GraphLoss { value: 0.0, grad, labeled });
    }
    let inv = 1.0 / labeled as f64;
    let mut value = 0.0;
    let mut dlogits = Array2::zeros(logits.raw_dim());
    for (v, label) in labels.iter().enumerate() {
        let Some(c) = *label else { continue };
        if c > 1 {
            return Err(LearnError::Shape(format!("node label {c} is not 0 or 1")));
        }
        let row = logits.row(v).to_vec();
        let ls = log_softmax(&row);
        value -= ls[c] * inv;
        for k in 0..row.len() {
            dlogits[[v, k]] = (ls[k].exp() - if k == c { 1.0 } else { 0.0 }) * inv;
        }
    }
    let mut dh = p.cls.backward(z.view(), dlogits.view(), &mut grad.cls);
    for (l, layer) in p.layers.iter().enumerate().rev() {
        let mut dz = dh;
        dz.zip_mut_with(&f.zs[l], |d, z| {
            if *z <= 0.0 {
                *d = 0.0;
            }
        });
        let h = &f.hs[l];
        let gl = &mut grad.layers[l];
        gl.w_self += &h.t().dot(&dz);
        let mut dprev = dz.dot(&layer.w_self.t());
        for (r, w) in layer.w_rel.iter().enumerate() {
            gl.w_rel[r] += &f.msgs[l][r].t().dot(&dz);
            dprev += &f.adj.apply_t(r, dz.dot(&w.t()).view());
        }
        dh = dprev;
    }
    Ok(GraphLoss { value, grad, labeled })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphTrainConfig {
    pub layers: usize,
    pub aggregation: Aggregation,
    pub add_reverse: bool,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for GraphTrainConfig {
    fn default() -> Self {
        GraphTrainConfig {
            layers: 2,
            aggregation: Aggregation::Mean,
            add_reverse: false,
            epochs: 200,
            learning_rate: 1e-2,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GraphOutcome {
    pub params: GnnParams,
    /// Training loss per epoch.
    pub losses: Vec<f64>,
}

/// Full-graph training on fixed node features; only the GNN weights move.
pub fn train_graph(
    g: &RelationGraph,
    labels: &[Option<usize>],
    cfg: &GraphTrainConfig,
    seed: u64,
) -> Result<GraphOutcome, LearnError> {
    if cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(LearnError::Config("graph training needs positive epochs and learning_rate".into()));
    }
    let mut params = GnnParams::init(g.dim(), g.relations.len(), cfg.layers, cfg.aggregation, seed);
    let opt = AdamWConfig {
        lr: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        ..Default::default()
    };
    let mut m = params.zeros_like();
    let mut v = params.zeros_like();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let loss = graph_loss(g, labels, &params)?;
        if !loss.value.is_finite() {
            return Err(LearnError::Config(format!("non-finite graph loss at epoch {epoch}")));
        }
        losses.push(loss.value);
        for (((p, gr), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(loss.grad.tensors())
            .zip(m.tensors_mut())
            .zip(v.tensors_mut())
        {
            optim::update(&opt, epoch as u64, p, gr, m, v);
        }
    }
    Ok(GraphOutcome { params, losses })
}

/// Metrics over the nodes that carry a label.
pub fn evaluate_graph(g: &RelationGraph, labels: &[Option<usize>], p: &GnnParams) -> Result<EvalReport, LearnError> {
    let z = message_pass(g, p)?;
    let probs = graph_classify(z.view(), p);
    let (mut t, mut pr) = (Vec::new(), Vec::new());
    for (v, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            t.push(*c);
            pr.push(usize::from(probs[[v, 1]] > probs[[v, 0]]));
        }
    }
    metrics(&t, &pr)
}

pub const GRAPH_FORMAT: &str = "mgdil-graph-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphCheckpoint {
    pub format: String,
    pub relations: Vec<String>,
    pub aggregation: Aggregation,
    pub add_reverse: bool,
    pub dim: usize,
    pub layers: usize,
    pub tensors: Vec<NamedTensor>,
}

impl GraphCheckpoint {
    pub fn new(p: &GnnParams, relations: &[String], add_reverse: bool) -> Self {
        GraphCheckpoint {
            format: GRAPH_FORMAT.into(),
            relations: relations.to_vec(),
            aggregation: p.aggregation,
            add_reverse,
            dim: p.dim(),
            layers: p.layers.len(),
            tensors: p
                .tensor_names()
                .into_iter()
                .zip(p.tensors())
                .zip(p.tensor_shapes())
                .map(|((name, t), shape)| NamedTensor { name, shape, data: t.to_vec() })
                .collect(),
        }
    }

    pub fn params(&self) -> Result<GnnParams, LearnError> {
        if self.format != GRAPH_FORMAT {
            return Err(LearnError::Checkpoint(format!("unsupported graph checkpoint {}", self.format)));
        }
        let mut p = GnnParams::init(self.dim, self.relations.len(), self.layers, self.aggregation, 0);
        let names = p.tensor_names();
        if names.len() != self.tensors.len() {
            return Err(LearnError::Checkpoint(format!(
                "{} tensors, expected {}",
                self.tensors.len(),
                names.len()
            )));
        }
        for ((slot, name), t) in p.tensors_mut().into_iter().zip(&names).zip(&self.tensors) {
            if &t.name != name || t.data.len() != slot.len() || t.shape.iter().product::<usize>() != slot.len() {
                return Err(LearnError::Checkpoint(format!("tensor {} does not match {name}", t.name)));
            }
            slot.copy_from_slice(&t.data);
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        let text = serde_json::to_string(self).expect("graph checkpoint serializes") + "\n";
        std::fs::write(path, text).map_err(|e| LearnError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        let text = std::fs::read_to_string(path).map_err(|e| LearnError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LearnError::Checkpoint(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn row(s: &str, r: &str, d: &str) -> EdgeRow {
        EdgeRow { src: s.into(), relation: r.into(), dst: d.into() }
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    #[test]
    fn edges_are_deduplicated_and_unknown_endpoints_dropped() {
        let g = RelationGraph::new(
            ids(2),
            Array2::zeros((2, 3)),
            &[row("n0", "friend", "n1"), row("n1", "friend", "n0"), row("n0", "friend", "n1"), row("n0", "friend", "x")],
            false,
        )
        .unwrap();
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.dropped, 1);
        assert_eq!(g.relations, vec!["friend"]);
        let g = RelationGraph::new(ids(2), Array2::zeros((2, 3)), &[], false).unwrap();
        assert!(g.edges.is_empty() && g.relations.is_empty());
    }

    #[test]
    fn reverse_relations_double_the_types() {
        let g = RelationGraph::new(ids(3), Array2::zeros((3, 2)), &[row("n0", "follower", "n1"), row("n2", "friend", "n1")], true)
            .unwrap();
        assert_eq!(g.relations, vec!["follower", "follower_rev", "friend", "friend_rev"]);
        assert_eq!(g.edges.len(), 4);
    }

    #[test]
    fn zero_layers_is_identity_and_isolated_node_uses_self_transform() {
        let feats = array![[1.0, -2.0], [0.5, 3.0]];
        let g = RelationGraph::new(ids(2), feats.clone(), &[row("n0", "friend", "n1")], false).unwrap();
        let p0 = GnnParams::init(2, 1, 0, Aggregation::Mean, 1);
        assert_eq!(message_pass(&g, &p0).unwrap(), feats);
        let p = GnnParams::init(2, 1, 2, Aggregation::Mean, 1);
        let z = message_pass(&g, &p).unwrap();
        // node 0 receives nothing
        let mut h = feats.row(0).to_owned();
        for l in &p.layers {
            h = h.dot(&l.w_self).mapv(|v| v.max(0.0));
        }
        assert_eq!(z.row(0), h);
    }

    #[test]
    fn path_graph_matches_hand_computation() {
        // 0 -> 1 -> 2, identity transforms, one layer, mean
        let feats = array![[1.0, 0.0], [0.0, 2.0], [3.0, 1.0]];
        let g = RelationGraph::new(ids(3), feats, &[row("n0", "r", "n1"), row("n1", "r", "n2")], false).unwrap();
        let mut p = GnnParams::init(2, 1, 1, Aggregation::Mean, 0);
        p.layers[0].w_self = Array2::eye(2);
        p.layers[0].w_rel[0] = Array2::eye(2);
        let z = message_pass(&g, &p).unwrap();
        assert_eq!(z, array![[1.0, 0.0], [1.0, 2.0], [3.0, 3.0]]);
    }

    #[test]
    fn uniform_predictions_give_ln2() {
        let g = RelationGraph::new(ids(3), Array2::ones((3, 2)), &[], false).unwrap();
        let mut p = GnnParams::init(2, 0, 1, Aggregation::Mean, 0);
        p.cls = Linear::zeros(2, 2);
        let l = graph_loss(&g, &[Some(0), Some(1), None], &p).unwrap();
        assert!((l.value - 2f64.ln()).abs() < 1e-12);
        assert_eq!(l.labeled, 2);
    }

    fn random_graph(seed: u64, agg: Aggregation) -> (RelationGraph, GnnParams, Vec<Option<usize>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 6;
        let d = 4;
        let feats = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
        let mut rows = Vec::new();
        for _ in 0..12 {
            let r = ["a", "b"][rng.random_range(0..2)];
            rows.push(row(&format!("n{}", rng.random_range(0..n)), r, &format!("n{}", rng.random_range(0..n))));
        }
        rows.push(row("n0", "a", "n1"));
        rows.push(row("n0", "b", "n1"));
        let g = RelationGraph::new(ids(n), feats, &rows, false).unwrap();
        let p = GnnParams::init(d, 2, 2, agg, seed + 1);
        let labels = (0..n).map(|i| if i % 3 == 2 { None } else { Some(i % 2) }).collect();
        (g, p, labels)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, agg) in [(1, Aggregation::Mean), (2, Aggregation::Sum), (3, Aggregation::Mean)] {
            let (g, p, labels) = random_graph(seed, agg);
            let analytic = graph_loss(&g, &labels, &p).unwrap().grad;
            let eps = 1e-5;
            let mut probe = p.clone();
            for (t, a) in analytic.tensors().iter().enumerate() {
                let mut num = vec![0.0; a.len()];
                for (i, slot) in num.iter_mut().enumerate() {
                    let orig = probe.tensors()[t][i];
                    probe.tensors_mut()[t][i] = orig + eps;
                    let up = graph_loss(&g, &labels, &probe).unwrap().value;
                    probe.tensors_mut()[t][i] = orig - eps;
                    let down = graph_loss(&g, &labels, &probe).unwrap().value;
                    probe.tensors_mut()[t][i] = orig;
                    *slot = (up - down) / (2.0 * eps);
                }
                let err = crate::gradcheck::relative_error(a, &num);
                assert!(err < 1e-4, "seed {seed} tensor {t}: rel err {err}");
            }
        }
    }

    #[test]
    fn training_reduces_loss_and_checkpoint_round_trips() {
        let (g, _, labels) = random_graph(5, Aggregation::Mean);
        let cfg = GraphTrainConfig { epochs: 60, ..Default::default() };
        let out = train_graph(&g, &labels, &cfg, 3).unwrap();
        assert!(out.losses.last().unwrap() < &out.losses[0]);
        let again = train_graph(&g, &labels, &cfg, 3).unwrap();
        assert_eq!(out.params, again.params);
        let ck = GraphCheckpoint::new(&out.params, &g.relations, false);
        let back: GraphCheckpoint = serde_json::from_str(&serde_json::to_string(&ck).unwrap()).unwrap();
        assert_eq!(back.params().unwrap(), out.params);
    }

    #[test]
    fn edge_csv_reads_rows() {
        let rows = read_edge_csv("src,relation,dst\na, friend ,b\n".as_bytes()).unwrap();
        assert_eq!(rows, vec![row("a", "friend", "b")]);
        assert!(read_edge_csv("src,relation,dst\na,b\n".as_bytes()).is_err());
    }

    #[test]
    fn relations_remap_to_a_model_list() {
        let g = RelationGraph::new(ids(3), Array2::zeros((3, 2)), &[row("n0", "follower", "n1")], false).unwrap();
        let model = vec!["friend".to_string(), "follower".to_string()];
        let g = g.with_relations(&model).unwrap();
        assert_eq!(g.relations, model);
        assert_eq!(g.edges, vec![Edge { src: 0, rel: 1, dst: 1 }]);
        let g = RelationGraph::new(ids(2), Array2::zeros((2, 2)), &[row("n0", "likes", "n1")], false).unwrap();
        assert!(g.with_relations(&model).is_err());
    }
}

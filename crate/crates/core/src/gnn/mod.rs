//! Graph neural classifier over annotated ASTs.
//!
//! Node features concatenate a kind embedding, a hashed-label embedding and
//! an annotation embedding. Message passing is relational: a message along
//! an edge is transformed by the weight matrix of that edge's annotation.
//! AST edges carry messages in both directions.

pub mod checkpoint;
mod tape;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alpha::AlphaAst;
use crate::ast::NodeKind;

pub use tape::{sigmoid, Mat};
use tape::{Tape, Var};

const RELATIONS: usize = 3;
const RELATION_NAMES: [&str; RELATIONS] = ["unchanged", "added", "deleted"];

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch { name: String, expected: (usize, usize), found: (usize, usize) },
    #[error("tensor `{0}` is missing")]
    MissingTensor(String),
    #[error("unexpected tensor `{0}`")]
    UnexpectedTensor(String),
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Gat,
    Gcn,
    Gin,
    Sage,
}

impl Flavor {
    pub const ALL: [Flavor; 4] = [Flavor::Gat, Flavor::Gcn, Flavor::Gin, Flavor::Sage];

    pub fn name(self) -> &'static str {
        match self {
            Flavor::Gat => "gat",
            Flavor::Gcn => "gcn",
            Flavor::Gin => "gin",
            Flavor::Sage => "sage",
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Flavor {
    type Err = GnnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Flavor::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| GnnError::InvalidConfig(format!("unknown flavor `{s}` (expected gat, gcn, gin or sage)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub flavor: Flavor,
    pub layers: usize,
    pub hidden: usize,
    pub kind_dim: usize,
    pub label_dim: usize,
    pub annotation_dim: usize,
    /// Number of hash buckets for node labels.
    pub buckets: usize,
    pub readout: Readout,
    /// Negative slope of the attention leaky-relu.
    pub slope: f64,
    pub seed: u64,
    /// How input graphs were built; kept so a saved model scores new
    /// commits the way it was trained.
    pub graph: GraphSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSettings {
    pub slice_depth: usize,
    pub use_unchanged: bool,
}

impl Default for GraphSettings {
    fn default() -> Self {
        Self { slice_depth: 1, use_unchanged: true }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            flavor: Flavor::Gat,
            layers: 2,
            hidden: 64,
            kind_dim: 16,
            label_dim: 32,
            annotation_dim: 8,
            buckets: 4096,
            readout: Readout::Mean,
            slope: 0.2,
            seed: 0,
            graph: GraphSettings::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        let widths = [
            ("hidden", self.hidden),
            ("kind_dim", self.kind_dim),
            ("label_dim", self.label_dim),
            ("annotation_dim", self.annotation_dim),
            ("buckets", self.buckets),
        ];
        if self.layers == 0 {
            return Err(GnnError::InvalidConfig("layers must be at least 1".into()));
        }
        if let Some((name, _)) = widths.iter().find(|(_, w)| *w == 0) {
            return Err(GnnError::InvalidConfig(format!("{name} must be positive")));
        }
        if !self.slope.is_finite() {
            return Err(GnnError::InvalidConfig("slope must be finite".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.kind_dim + self.label_dim + self.annotation_dim
    }

    fn width(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim()
        } else {
            self.hidden
        }
    }
}

#[derive(Clone, Copy)]
enum Init {
    Embedding,
    Glorot,
    Zero,
}

/// Names, shapes and initializers of every tensor, in storage order.
fn layout(cfg: &ModelConfig) -> Vec<(String, (usize, usize), Init)> {
    let mut out = vec![
        ("embed.kind".to_string(), (NodeKind::ALL.len(), cfg.kind_dim), Init::Embedding),
        ("embed.label".to_string(), (cfg.buckets, cfg.label_dim), Init::Embedding),
        ("embed.annotation".to_string(), (RELATIONS, cfg.annotation_dim), Init::Embedding),
    ];
    let h = cfg.hidden;
    for l in 0..cfg.layers {
        let d_in = cfg.width(l);
        for r in RELATION_NAMES {
            out.push((format!("layer{l}.w.{r}"), (d_in, h), Init::Glorot));
        }
        match cfg.flavor {
            Flavor::Gat => {
                out.push((format!("layer{l}.att_dst"), (h, 1), Init::Glorot));
                out.push((format!("layer{l}.att_src"), (h, 1), Init::Glorot));
                out.push((format!("layer{l}.bias"), (1, h), Init::Zero));
            }
            Flavor::Gcn => out.push((format!("layer{l}.bias"), (1, h), Init::Zero)),
            Flavor::Gin => {
                out.push((format!("layer{l}.eps"), (1, 1), Init::Zero));
                out.push((format!("layer{l}.mlp1.w"), (h, h), Init::Glorot));
                out.push((format!("layer{l}.mlp1.b"), (1, h), Init::Zero));
                out.push((format!("layer{l}.mlp2.w"), (h, h), Init::Glorot));
                out.push((format!("layer{l}.mlp2.b"), (1, h), Init::Zero));
            }
            Flavor::Sage => {
                out.push((format!("layer{l}.proj"), (d_in + h, h), Init::Glorot));
                out.push((format!("layer{l}.bias"), (1, h), Init::Zero));
            }
        }
    }
    out.push(("classifier.w".to_string(), (h, 1), Init::Glorot));
    out.push(("classifier.b".to_string(), (1, 1), Init::Zero));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    tensors: Vec<Mat>,
}

impl Model {
    /// Fresh model initialized deterministically from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Model, GnnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let named = layout(&config)
            .into_iter()
            .map(|(name, (r, c), init)| {
                let t = match init {
                    Init::Zero => Mat::zeros((r, c)),
                    Init::Embedding => Array2::from_shape_simple_fn((r, c), || rng.gen_range(-0.5..0.5)),
                    Init::Glorot => {
                        let a = (6.0 / (r + c) as f64).sqrt();
                        Array2::from_shape_simple_fn((r, c), || rng.gen_range(-a..a))
                    }
                };
                (name, t)
            })
            .collect();
        Model::from_tensors(config, named)
    }

    /// Assembles a model from named tensors, which must match the layout
    /// implied by `config` exactly.
    pub fn from_tensors(config: ModelConfig, named: Vec<(String, Mat)>) -> Result<Model, GnnError> {
        config.validate()?;
        let expected = layout(&config);
        let mut given: BTreeMap<String, Mat> = BTreeMap::new();
        for (name, t) in named {
            if !expected.iter().any(|(n, _, _)| *n == name) {
                return Err(GnnError::UnexpectedTensor(name));
            }
            given.insert(name, t);
        }
        let mut names = Vec::with_capacity(expected.len());
        let mut tensors = Vec::with_capacity(expected.len());
        for (name, shape, _) in expected {
            let t = given.remove(&name).ok_or_else(|| GnnError::MissingTensor(name.clone()))?;
            if t.dim() != shape {
                return Err(GnnError::ShapeMismatch { name, expected: shape, found: t.dim() });
            }
            names.push(name);
            tensors.push(t);
        }
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(Model { config, names, index, tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Mat] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Mat] {
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Mat> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Mat> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    fn slot(&self, name: &str) -> usize {
        self.index[name]
    }
}

/// Gradients laid out like the model's tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    names: Vec<String>,
    tensors: Vec<Mat>,
}

impl Gradients {
    pub fn tensors(&self) -> &[Mat] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchEdge {
    pub from: usize,
    pub to: usize,
    pub relation: usize,
}

/// Several graphs packed into one disjoint union.
///
/// Nodes are stored as categorical indices; [`featurize`] turns them into
/// dense rows using a model's embedding tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphBatch {
    pub kinds: Vec<usize>,
    pub label_hashes: Vec<u64>,
    pub annotations: Vec<usize>,
    /// Directed message edges; every AST edge appears once per direction.
    pub edges: Vec<BatchEdge>,
    pub graph_of: Vec<usize>,
    pub graphs: usize,
    pub labels: Option<Vec<f64>>,
}

impl GraphBatch {
    pub fn from_graphs(graphs: &[&AlphaAst], labels: Option<&[f64]>) -> GraphBatch {
        let mut b = GraphBatch { graphs: graphs.len(), labels: labels.map(|l| l.to_vec()), ..Default::default() };
        for (gi, g) in graphs.iter().enumerate() {
            let offset = b.kinds.len();
            for n in g.nodes() {
                b.kinds.push(n.kind.index());
                b.label_hashes.push(label_hash(&n.label));
                b.annotations.push(n.annotation.index());
                b.graph_of.push(gi);
            }
            for e in g.edges() {
                let (p, c) = (offset + e.parent.index(), offset + e.child.index());
                let relation = e.annotation.index();
                b.edges.push(BatchEdge { from: p, to: c, relation });
                b.edges.push(BatchEdge { from: c, to: p, relation });
            }
        }
        b
    }

    pub fn single(g: &AlphaAst, label: Option<f64>) -> GraphBatch {
        let labels = label.map(|l| [l]);
        GraphBatch::from_graphs(&[g], labels.as_ref().map(|l| &l[..]))
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn validate(&self) -> Result<(), GnnError> {
        let n = self.kinds.len();
        let bad = |m: String| Err(GnnError::InvalidBatch(m));
        if self.label_hashes.len() != n || self.annotations.len() != n || self.graph_of.len() != n {
            return bad("per-node columns differ in length".into());
        }
        if let Some(k) = self.kinds.iter().find(|&&k| k >= NodeKind::ALL.len()) {
            return bad(format!("node kind index {k} out of range"));
        }
        if self.annotations.iter().any(|&a| a >= RELATIONS) {
            return bad("annotation index out of range".into());
        }
        if self.graph_of.iter().any(|&g| g >= self.graphs) {
            return bad("node assigned to a nonexistent graph".into());
        }
        let mut sizes = vec![0usize; self.graphs];
        self.graph_of.iter().for_each(|&g| sizes[g] += 1);
        if let Some(g) = sizes.iter().position(|&s| s == 0) {
            return bad(format!("graph {g} has no nodes"));
        }
        for e in &self.edges {
            if e.from >= n || e.to >= n || e.relation >= RELATIONS {
                return bad(format!("edge {e:?} out of range"));
            }
            if self.graph_of[e.from] != self.graph_of[e.to] {
                return bad(format!("edge {e:?} crosses graphs"));
            }
        }
        if let Some(l) = &self.labels {
            if l.len() != self.graphs {
                return bad("label count differs from graph count".into());
            }
        }
        Ok(())
    }
}

/// 64-bit FNV-1a hash of a node label.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Dense input feature rows of `g`, one per node in node order.
pub fn featurize(g: &AlphaAst, model: &Model) -> Mat {
    let batch = GraphBatch::single(g, None);
    let mut tape = Tape::new();
    let x = input_features(&mut tape, model, &batch);
    tape.value(x).clone()
}

/// Probability of the fixing class for every graph in the batch.
pub fn forward(batch: &GraphBatch, model: &Model) -> Result<Vec<f64>, GnnError> {
    batch.validate()?;
    let mut tape = Tape::new();
    let z = logits(&mut tape, model, batch);
    Ok(tape.value(z).column(0).iter().map(|&v| sigmoid(v)).collect())
}

/// Mean binary cross-entropy over the batch and its gradient.
pub fn loss_and_gradients(batch: &GraphBatch, model: &Model) -> Result<(f64, Gradients), GnnError> {
    batch.validate()?;
    let labels = batch.labels.clone().ok_or_else(|| GnnError::InvalidBatch("batch has no labels".into()))?;
    let mut tape = Tape::new();
    let z = logits(&mut tape, model, batch);
    let loss = tape.bce_with_logits(z, labels);
    let tensors = tape.backward(loss, &model.tensors);
    Ok((tape.value(loss)[[0, 0]], Gradients { names: model.names.clone(), tensors }))
}

fn input_features(tape: &mut Tape, model: &Model, batch: &GraphBatch) -> Var {
    let p = &model.tensors;
    let buckets = model.config.buckets as u64;
    let kind = tape.embed(p, model.slot("embed.kind"), batch.kinds.clone());
    let label =
        tape.embed(p, model.slot("embed.label"), batch.label_hashes.iter().map(|h| (h % buckets) as usize).collect());
    let ann = tape.embed(p, model.slot("embed.annotation"), batch.annotations.clone());
    tape.concat_cols(vec![kind, label, ann])
}

/// Edge lists of a batch grouped by relation.
struct Topology {
    n: usize,
    /// Neighbor edges per relation as (sources, targets).
    neighbors: [(Vec<usize>, Vec<usize>); RELATIONS],
    /// Nodes per relation of their own annotation, used for self terms.
    selves: [Vec<usize>; RELATIONS],
    in_degree: Vec<usize>,
}

impl Topology {
    fn new(batch: &GraphBatch) -> Topology {
        let n = batch.node_count();
        let mut neighbors: [(Vec<usize>, Vec<usize>); RELATIONS] = Default::default();
        let mut selves: [Vec<usize>; RELATIONS] = Default::default();
        let mut in_degree = vec![0; n];
        for e in &batch.edges {
            neighbors[e.relation].0.push(e.from);
            neighbors[e.relation].1.push(e.to);
            in_degree[e.to] += 1;
        }
        for (i, &a) in batch.annotations.iter().enumerate() {
            selves[a].push(i);
        }
        Topology { n, neighbors, selves, in_degree }
    }

    /// Neighbor edges plus one self-loop per node, per relation.
    fn with_self_loops(&self, r: usize) -> (Vec<usize>, Vec<usize>) {
        let (mut from, mut to) = self.neighbors[r].clone();
        from.extend(&self.selves[r]);
        to.extend(&self.selves[r]);
        (from, to)
    }
}

fn logits(tape: &mut Tape, model: &Model, batch: &GraphBatch) -> Var {
    let topo = Topology::new(batch);
    let mut h = input_features(tape, model, batch);
    for l in 0..model.config.layers {
        h = match model.config.flavor {
            Flavor::Gat => gat_layer(tape, model, &topo, h, l),
            Flavor::Gcn => gcn_layer(tape, model, &topo, h, l),
            Flavor::Gin => gin_layer(tape, model, &topo, h, l),
            Flavor::Sage => sage_layer(tape, model, &topo, h, l),
        };
    }
    let pooled = match model.config.readout {
        Readout::Mean => {
            let mut count = vec![0.0f64; batch.graphs];
            batch.graph_of.iter().for_each(|&g| count[g] += 1.0);
            let sum = tape.scatter_sum(h, batch.graph_of.clone(), batch.graphs);
            let inv = tape.constant(Mat::from_shape_fn((batch.graphs, 1), |(g, _)| 1.0 / count[g].max(1.0)));
            tape.row_scale(sum, inv)
        }
        Readout::Max => tape.segment_max(h, &batch.graph_of, batch.graphs),
    };
    let w = tape.param(&model.tensors, model.slot("classifier.w"));
    let b = tape.param(&model.tensors, model.slot("classifier.b"));
    let z = tape.matmul(pooled, w);
    tape.add_row(z, b)
}

fn param(tape: &mut Tape, model: &Model, name: String) -> Var {
    tape.param(&model.tensors, model.slot(&name))
}

/// `h W_r` for every relation.
fn transformed(tape: &mut Tape, model: &Model, h: Var, l: usize) -> Vec<Var> {
    RELATION_NAMES
        .iter()
        .map(|r| {
            let w = param(tape, model, format!("layer{l}.w.{r}"));
            tape.matmul(h, w)
        })
        .collect()
}

fn gat_layer(tape: &mut Tape, model: &Model, topo: &Topology, h: Var, l: usize) -> Var {
    let m = transformed(tape, model, h, l);
    let a_dst = param(tape, model, format!("layer{l}.att_dst"));
    let a_src = param(tape, model, format!("layer{l}.att_src"));
    let (mut scores, mut messages, mut targets) = (Vec::new(), Vec::new(), Vec::new());
    for (r, &m_r) in m.iter().enumerate() {
        let (from, to) = topo.with_self_loops(r);
        if from.is_empty() {
            continue;
        }
        let s_dst = tape.matmul(m_r, a_dst);
        let s_src = tape.matmul(m_r, a_src);
        let at_dst = tape.gather(s_dst, to.clone());
        let at_src = tape.gather(s_src, from.clone());
        scores.push(tape.add(at_dst, at_src));
        messages.push(tape.gather(m_r, from));
        targets.extend(to);
    }
    let scores = tape.concat_rows(scores);
    let scores = tape.leaky_relu(scores, model.config.slope);
    let alpha = tape.segment_softmax(scores, targets.clone());
    let messages = tape.concat_rows(messages);
    let weighted = tape.row_scale(messages, alpha);
    let agg = tape.scatter_sum(weighted, targets, topo.n);
    let bias = param(tape, model, format!("layer{l}.bias"));
    let out = tape.add_row(agg, bias);
    tape.elu(out)
}

fn gcn_layer(tape: &mut Tape, model: &Model, topo: &Topology, h: Var, l: usize) -> Var {
    let m = transformed(tape, model, h, l);
    let deg: Vec<f64> = topo.in_degree.iter().map(|&d| (d + 1) as f64).collect();
    let (mut messages, mut targets) = (Vec::new(), Vec::new());
    for (r, &m_r) in m.iter().enumerate() {
        let (from, to) = topo.with_self_loops(r);
        if from.is_empty() {
            continue;
        }
        let coef = Mat::from_shape_fn((from.len(), 1), |(e, _)| 1.0 / (deg[from[e]] * deg[to[e]]).sqrt());
        let coef = tape.constant(coef);
        let msg = tape.gather(m_r, from);
        messages.push(tape.row_scale(msg, coef));
        targets.extend(to);
    }
    let messages = tape.concat_rows(messages);
    let agg = tape.scatter_sum(messages, targets, topo.n);
    let bias = param(tape, model, format!("layer{l}.bias"));
    let out = tape.add_row(agg, bias);
    tape.elu(out)
}

/// Sum of `m_r[from]` into `to` over all relations, or `None` without edges.
fn neighbor_sum(tape: &mut Tape, topo: &Topology, m: &[Var], scale: Option<&[f64]>) -> Option<Var> {
    let (mut messages, mut targets) = (Vec::new(), Vec::new());
    for (r, &m_r) in m.iter().enumerate() {
        let (from, to) = &topo.neighbors[r];
        if from.is_empty() {
            continue;
        }
        let mut msg = tape.gather(m_r, from.clone());
        if let Some(s) = scale {
            let coef = tape.constant(Mat::from_shape_fn((to.len(), 1), |(e, _)| s[to[e]]));
            msg = tape.row_scale(msg, coef);
        }
        messages.push(msg);
        targets.extend(to);
    }
    if messages.is_empty() {
        return None;
    }
    let messages = tape.concat_rows(messages);
    Some(tape.scatter_sum(messages, targets, topo.n))
}

fn gin_layer(tape: &mut Tape, model: &Model, topo: &Topology, h: Var, l: usize) -> Var {
    let m = transformed(tape, model, h, l);
    let (mut own, mut order) = (Vec::new(), Vec::new());
    for (r, &m_r) in m.iter().enumerate() {
        if !topo.selves[r].is_empty() {
            own.push(tape.gather(m_r, topo.selves[r].clone()));
            order.extend(&topo.selves[r]);
        }
    }
    let own = tape.concat_rows(own);
    let own = tape.scatter_sum(own, order, topo.n);
    let eps = param(tape, model, format!("layer{l}.eps"));
    let mut agg = tape.one_plus_scale(own, eps);
    if let Some(nb) = neighbor_sum(tape, topo, &m, None) {
        agg = tape.add(agg, nb);
    }
    let w1 = param(tape, model, format!("layer{l}.mlp1.w"));
    let b1 = param(tape, model, format!("layer{l}.mlp1.b"));
    let w2 = param(tape, model, format!("layer{l}.mlp2.w"));
    let b2 = param(tape, model, format!("layer{l}.mlp2.b"));
    let hidden = tape.matmul(agg, w1);
    let hidden = tape.add_row(hidden, b1);
    let hidden = tape.elu(hidden);
    let out = tape.matmul(hidden, w2);
    let out = tape.add_row(out, b2);
    tape.elu(out)
}

fn sage_layer(tape: &mut Tape, model: &Model, topo: &Topology, h: Var, l: usize) -> Var {
    let m = transformed(tape, model, h, l);
    let inv: Vec<f64> = topo.in_degree.iter().map(|&d| if d == 0 { 0.0 } else { 1.0 / d as f64 }).collect();
    let mean = match neighbor_sum(tape, topo, &m, Some(&inv)) {
        Some(v) => v,
        None => tape.constant(Mat::zeros((topo.n, model.config.hidden))),
    };
    let cat = tape.concat_cols(vec![h, mean]);
    let proj = param(tape, model, format!("layer{l}.proj"));
    let bias = param(tape, model, format!("layer{l}.bias"));
    let out = tape.matmul(cat, proj);
    let out = tape.add_row(out, bias);
    tape.elu(out)
}

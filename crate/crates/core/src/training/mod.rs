//! End-to-end training: commit graphs, mini-batch optimization, prediction.

mod optim;

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alpha::{build_alpha_ast, match_asts, AlphaAst, AlphaError};
use crate::ast::{parse_source, Ast, ParseError, Version};
use crate::dataset::{undersample, CommitRecord, DatasetError};
use crate::gnn::{forward, loss_and_gradients, GnnError, GraphBatch, GraphSettings, Model, ModelConfig};
use crate::slice::{diff_lines, slice, statements_touching, LineDiff, SliceResult};

pub use optim::{Optimizer, OptimizerKind};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("commit {commit}, file {path}: {source}")]
    Parse { commit: String, path: String, source: ParseError },
    #[error("commit {commit}: {source}")]
    Alpha { commit: String, source: AlphaError },
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training data needs both fixing and non-fixing commits")]
    SingleClass,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Seeds model initialization, under-sampling and shuffling.
    pub seed: u64,
    pub model: ModelConfig,
    /// Dependency hops of unchanged context around changed statements.
    pub slice_depth: usize,
    /// When false, graphs hold only the changed statements.
    pub use_unchanged: bool,
    /// Fraction of the corpus, by time, used for training.
    pub train_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            model: ModelConfig::default(),
            slice_depth: 1,
            use_unchanged: true,
            train_ratio: 0.8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning_rate must be finite and non-negative".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(TrainError::InvalidConfig("train_ratio must lie strictly between 0 and 1".into()));
        }
        self.model.validate()?;
        Ok(())
    }

    pub fn graph_settings(&self) -> GraphSettings {
        GraphSettings { slice_depth: self.slice_depth, use_unchanged: self.use_unchanged }
    }

    /// Model configuration with the graph settings and seed of this run.
    pub fn resolved_model(&self) -> ModelConfig {
        ModelConfig { graph: self.graph_settings(), seed: self.seed, ..self.model.clone() }
    }
}

/// One file's contribution to a commit graph, before joining.
pub fn file_graph(
    before_src: &str,
    after_src: &str,
    settings: &GraphSettings,
) -> Result<Option<AlphaAst>, FileGraphError> {
    let before = parse_source(before_src, Version::Before).map_err(FileGraphError::Parse)?;
    let after = parse_source(after_src, Version::After).map_err(FileGraphError::Parse)?;
    let diff = diff_lines(before_src, after_src);
    if diff.is_identity() {
        return Ok(None);
    }
    let depth = if settings.use_unchanged { settings.slice_depth } else { 0 };
    let (sb, sa) = aligned_slices(&before, &after, &diff, depth);
    if sb.is_empty() && sa.is_empty() {
        return Ok(None);
    }
    let (pb, pa) = (sb.project(&before), sa.project(&after));
    let matching = match_asts(&pb, &pa, &diff);
    build_alpha_ast(&pb, &pa, &matching).map(Some).map_err(FileGraphError::Alpha)
}

#[derive(Debug, Error)]
pub enum FileGraphError {
    #[error(transparent)]
    Parse(ParseError),
    #[error(transparent)]
    Alpha(AlphaError),
}

/// Slices both versions and mirrors unchanged context across them, so a
/// context statement kept on one side is kept on the other as well.
pub fn aligned_slices(before: &Ast, after: &Ast, diff: &LineDiff, depth: usize) -> (SliceResult, SliceResult) {
    let mut sb = slice(before, &diff.deleted, depth);
    let mut sa = slice(after, &diff.added, depth);
    let inverse = diff.inverted();
    let mirror = |from: &Ast, sel: &SliceResult, to: &Ast, d: &LineDiff| {
        let mut extra = Vec::new();
        for (&stmt, &reason) in &sel.reasons {
            let lines: BTreeSet<u32> = from.own_lines(stmt).into_iter().filter_map(|l| d.map_before(l)).collect();
            extra.extend(statements_touching(to, &lines).into_iter().map(|s| (s, reason)));
        }
        extra
    };
    let to_after = mirror(before, &sb, after, diff);
    let to_before = mirror(after, &sa, before, &inverse);
    sa.extend_context(to_after);
    sb.extend_context(to_before);
    (sb, sa)
}

/// Annotated graph of a whole commit: one component per changed file,
/// joined under a commit root.
pub fn commit_to_graph(c: &CommitRecord, cfg: &TrainConfig) -> Result<AlphaAst, TrainError> {
    commit_graph(c, &cfg.graph_settings())
}

pub fn commit_graph(c: &CommitRecord, settings: &GraphSettings) -> Result<AlphaAst, TrainError> {
    let mut parts = Vec::new();
    for (i, f) in c.files.iter().enumerate() {
        match file_graph(&f.before, &f.after, settings) {
            Ok(Some(g)) => parts.push(g.with_file(i as u32)),
            Ok(None) => {}
            Err(FileGraphError::Parse(source)) => {
                return Err(TrainError::Parse { commit: c.commit_id.clone(), path: f.path.clone(), source })
            }
            Err(FileGraphError::Alpha(source)) => {
                return Err(TrainError::Alpha { commit: c.commit_id.clone(), source })
            }
        }
    }
    Ok(AlphaAst::join(parts))
}

/// Graphs for every commit, built in parallel, in corpus order.
pub fn build_graphs(corpus: &[CommitRecord], settings: &GraphSettings) -> Vec<Result<AlphaAst, TrainError>> {
    corpus.par_iter().map(|c| commit_graph(c, settings)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-commit loss over the epoch.
    pub loss: f64,
    pub batches: usize,
    pub examples: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochRecord>,
    /// Seconds spent in each epoch.
    pub wall_times: Vec<f64>,
    /// Commits dropped because a file failed to parse.
    pub skipped: usize,
}

pub fn train(corpus: &[CommitRecord], cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with(corpus, cfg, |_, _| Ok(()))
}

/// Trains a fresh model, calling `on_epoch` after every epoch with the
/// epoch's record and the current parameters.
pub fn train_with(
    corpus: &[CommitRecord],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &Model) -> Result<(), TrainError>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let balanced = undersample(corpus, cfg.seed)?.records;
    let settings = cfg.graph_settings();
    let mut graphs = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = 0;
    for (c, g) in balanced.iter().zip(build_graphs(&balanced, &settings)) {
        match g {
            Ok(g) => {
                graphs.push(g);
                labels.push(c.label.as_f64());
            }
            Err(e @ TrainError::Parse { .. }) => {
                log::warn!("skipping {e}");
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if !(labels.contains(&1.0) && labels.contains(&0.0)) {
        return Err(TrainError::SingleClass);
    }

    let mut model = Model::new(cfg.resolved_model())?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, model.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut log = Vec::new();
    let mut wall_times = Vec::new();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&AlphaAst> = chunk.iter().map(|&i| &graphs[i]).collect();
            let y: Vec<f64> = chunk.iter().map(|&i| labels[i]).collect();
            let batch = GraphBatch::from_graphs(&refs, Some(&y));
            let (loss, grads) = loss_and_gradients(&batch, &model)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b });
            }
            total += loss * chunk.len() as f64;
            batches += 1;
            opt.step(model.tensors_mut(), grads.tensors());
        }
        let record = EpochRecord { epoch, loss: total / graphs.len() as f64, batches, examples: graphs.len() };
        log::info!("epoch {epoch}: loss {:.6}", record.loss);
        on_epoch(&record, &model)?;
        log.push(record);
        wall_times.push(started.elapsed().as_secs_f64());
    }
    Ok(TrainOutcome { model, log, wall_times, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub commit_id: String,
    pub probability: f64,
    /// Set when the commit could not be turned into a graph; the
    /// probability is then 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Scores every commit. Commits that fail to parse are scored 0 and flagged.
pub fn predict(model: &Model, corpus: &[CommitRecord]) -> Result<Vec<Prediction>, TrainError> {
    let graphs = build_graphs(corpus, &model.config().graph);
    let mut out: Vec<Prediction> = corpus
        .iter()
        .zip(&graphs)
        .map(|(c, g)| Prediction {
            commit_id: c.commit_id.clone(),
            probability: 0.0,
            error: g.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    let ok: Vec<usize> = (0..corpus.len()).filter(|&i| graphs[i].is_ok()).collect();
    for chunk in ok.chunks(64) {
        let refs: Vec<&AlphaAst> = chunk.iter().map(|&i| graphs[i].as_ref().unwrap()).collect();
        let probs = forward(&GraphBatch::from_graphs(&refs, None), model)?;
        for (&i, p) in chunk.iter().zip(probs) {
            out[i].probability = p;
        }
    }
    Ok(out)
}

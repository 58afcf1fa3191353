use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fixgraph::dataset::{
    gen_synthetic, load_corpus, sample_ratio, time_split, write_corpus, CommitRecord, FileChange, Label, SplitSpec,
};
use fixgraph::gnn::{checkpoint, Flavor, GraphSettings, Model};
use fixgraph::metrics::{evaluate, stratified_report, LocBins, Scored};
use fixgraph::training::{build_graphs, commit_graph, predict, train_with, TrainConfig, TrainError};

#[derive(Parser)]
#[command(name = "fixgraph", version, about = "Classify commits as vulnerability fixes from annotated ASTs")]
struct Cli {
    /// Worker threads for graph construction (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    GenCorpus {
        #[arg(long = "fix")]
        n_fix: usize,
        #[arg(long = "nonfix")]
        n_nonfix: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output JSONL file; gzip-compressed when it ends in `.gz`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the annotated AST of one file change.
    BuildGraph {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        #[command(flatten)]
        graph: GraphArgs,
        /// Write Graphviz output here.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Write JSON output here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Summarize a corpus, or show the graph of one commit.
    Inspect {
        #[arg(long)]
        corpus: PathBuf,
        /// Print the annotated AST of this commit as JSON.
        #[arg(long)]
        commit: Option<String>,
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Train a model on the training side of the time split.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON training configuration; omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint path, rewritten after every epoch.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch JSONL log (default: <out>.log.jsonl).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        flavor: Option<Flavor>,
        /// Train on graphs of the changed statements only.
        #[arg(long)]
        changed_only: bool,
    },
    /// Score the test side of the time split and report metrics.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Changed-line budget for cost-effort.
        #[arg(long = "ce-l", default_value_t = 50_000)]
        ce_l: usize,
        /// Resample the test set to this many non-fixes per fix.
        #[arg(long)]
        neg_ratio: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Changed-line bin edges, e.g. 1,10,100,500.
        #[arg(long)]
        strata: Option<LocBins>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 0.8)]
        train_ratio: f64,
        /// Evaluate every commit instead of the test side of the split.
        #[arg(long)]
        all: bool,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write a fix probability for every commit.
    Predict {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Copy)]
struct GraphArgs {
    /// Dependency hops of unchanged context.
    #[arg(long, default_value_t = 1)]
    depth: usize,
    /// Keep only the changed statements.
    #[arg(long)]
    changed_only: bool,
}

impl GraphArgs {
    fn settings(self) -> GraphSettings {
        GraphSettings { slice_depth: self.depth, use_unchanged: !self.changed_only }
    }
}

/// Marks failures caused by bad input rather than by this program.
#[derive(Debug)]
struct UserError(anyhow::Error);

impl std::fmt::Display for UserError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UserError {}

fn user(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(UserError(e.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UserError>()) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn echo(config: serde_json::Value) {
    eprintln!("config: {config}");
}

fn read_corpus(path: &Path) -> Result<Vec<CommitRecord>> {
    load_corpus(path).with_context(|| format!("reading corpus {}", path.display())).map_err(user)
}

fn read_model(path: &Path) -> Result<Model> {
    checkpoint::load(path).with_context(|| format!("reading model {}", path.display())).map_err(user)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus { n_fix, n_nonfix, seed, out } => {
            echo(json!({ "command": "gen-corpus", "fix": n_fix, "nonfix": n_nonfix, "seed": seed, "out": out }));
            let corpus = gen_synthetic(n_fix, n_nonfix, seed);
            write_corpus(&out, &corpus).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} commits to {}", corpus.len(), out.display());
        }
        Command::BuildGraph { before, after, graph, dot, json: json_out } => {
            echo(
                json!({ "command": "build-graph", "before": before, "after": after, "depth": graph.depth, "changed_only": graph.changed_only }),
            );
            let read =
                |p: &Path| fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(user);
            let change =
                FileChange { path: before.display().to_string(), before: read(&before)?, after: read(&after)? };
            let record = CommitRecord::new("build-graph", 0, Label::NonFix, vec![change]);
            let g = commit_graph(&record, &graph.settings()).map_err(user)?;
            let (n, e) = (g.node_counts(), g.edge_counts());
            let summary = format!(
                "nodes: {} unchanged, {} added, {} deleted\nedges: {} unchanged, {} added, {} deleted",
                n.unchanged, n.added, n.deleted, e.unchanged, e.added, e.deleted
            );
            // Keep stdout pure DOT when the graph is printed there.
            if dot.is_none() && json_out.is_none() {
                eprintln!("{summary}");
            } else {
                println!("{summary}");
            }
            if let Some(p) = &dot {
                fs::write(p, g.to_dot()).with_context(|| format!("writing {}", p.display()))?;
            }
            if let Some(p) = &json_out {
                fs::write(p, serde_json::to_string_pretty(&g.to_json())?)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            if dot.is_none() && json_out.is_none() {
                print!("{}", g.to_dot());
            }
        }
        Command::Inspect { corpus, commit, graph } => {
            echo(
                json!({ "command": "inspect", "corpus": corpus, "commit": commit, "depth": graph.depth, "changed_only": graph.changed_only }),
            );
            let records = read_corpus(&corpus)?;
            match commit {
                Some(id) => {
                    let Some(c) = records.iter().find(|c| c.commit_id == id) else {
                        return Err(user(anyhow::anyhow!("no commit `{id}` in {}", corpus.display())));
                    };
                    let g = commit_graph(c, &graph.settings()).map_err(user)?;
                    println!("{}", serde_json::to_string_pretty(&g.to_json())?);
                }
                None => println!("{}", serde_json::to_string_pretty(&corpus_summary(&records, &graph.settings()))?),
            }
        }
        Command::Train { corpus, config, out, log, epochs, seed, flavor, changed_only } => {
            let mut cfg: TrainConfig = match &config {
                Some(p) => {
                    let text =
                        fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(user)?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display())).map_err(user)?
                }
                None => TrainConfig::default(),
            };
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.model.flavor = flavor.unwrap_or(cfg.model.flavor);
            cfg.use_unchanged &= !changed_only;
            cfg.model = cfg.resolved_model();
            cfg.validate().map_err(user)?;
            let log_path = log.unwrap_or_else(|| sidecar(&out, "log.jsonl"));
            echo(json!({ "command": "train", "corpus": corpus, "out": out, "log": log_path, "train": cfg }));

            let records = read_corpus(&corpus)?;
            let split = time_split(&records, SplitSpec { train_ratio: cfg.train_ratio }).map_err(user)?;
            eprintln!("time split at {}: {} train, {} held out", split.cut, split.train.len(), split.test.len());
            let mut log_file = BufWriter::new(
                fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
            );
            let outcome = train_with(&split.train, &cfg, |rec, model| {
                eprintln!("epoch {:>3}  loss {:.6}", rec.epoch, rec.loss);
                write_checkpoint(model, &out)?;
                writeln!(log_file, "{}", serde_json::to_string(rec).expect("record serializes"))?;
                log_file.flush()?;
                Ok(())
            })
            .map_err(|e| match e {
                TrainError::Dataset(_) | TrainError::SingleClass => user(e),
                e => e.into(),
            })?;
            let timing: String = outcome
                .wall_times
                .iter()
                .enumerate()
                .map(|(i, t)| format!("{}\n", json!({ "epoch": i + 1, "wall_time": t })))
                .collect();
            fs::write(sidecar(&out, "timing.jsonl"), timing)?;
            if outcome.skipped > 0 {
                eprintln!("skipped {} commits that failed to parse", outcome.skipped);
            }
            println!("wrote model to {}", out.display());
        }
        Command::Evaluate {
            corpus,
            model,
            ce_l,
            neg_ratio,
            seed,
            strata,
            threshold,
            train_ratio,
            all,
            json: json_out,
        } => {
            if ce_l == 0 {
                return Err(user(anyhow::anyhow!("--ce-l must be positive")));
            }
            if neg_ratio.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
                return Err(user(anyhow::anyhow!("--neg-ratio must be a positive number")));
            }
            let m = read_model(&model)?;
            echo(json!({
                "command": "evaluate", "corpus": corpus, "model": model, "ce_l": ce_l, "neg_ratio": neg_ratio,
                "seed": seed, "strata": strata.as_ref().map(|b| b.edges()), "threshold": threshold,
                "train_ratio": train_ratio, "all": all, "model_config": m.config(),
            }));
            let records = read_corpus(&corpus)?;
            let mut test = if all {
                records
            } else {
                let split = time_split(&records, SplitSpec { train_ratio }).map_err(user)?;
                eprintln!("time split at {}: evaluating {} held-out commits", split.cut, split.test.len());
                split.test
            };
            if let Some(r) = neg_ratio {
                test = sample_ratio(&test, r, seed);
            }
            let fixes = test.iter().filter(|c| c.label.is_fix()).count();
            eprintln!("scoring {} commits ({} fixes, {} non-fixes)", test.len(), fixes, test.len() - fixes);
            let preds = predict(&m, &test)?;
            let failed = preds.iter().filter(|p| p.error.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} commits failed to parse and were scored 0");
            }
            let scored: Vec<Scored> = test
                .iter()
                .zip(&preds)
                .map(|(c, p)| Scored { label: c.label, probability: p.probability, changed_loc: c.changed_loc })
                .collect();
            let report = match &strata {
                Some(bins) => stratified_report(&scored, bins, threshold, Some(ce_l)),
                None => evaluate(&scored, threshold, Some(ce_l)),
            };
            print!("{}", report.to_table());
            if let Some(p) = json_out {
                fs::write(&p, serde_json::to_string_pretty(&report)?)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Predict { corpus, model, out } => {
            let m = read_model(&model)?;
            echo(
                json!({ "command": "predict", "corpus": corpus, "model": model, "out": out, "model_config": m.config() }),
            );
            let records = read_corpus(&corpus)?;
            let preds = predict(&m, &records)?;
            let mut w = BufWriter::new(fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            for p in &preds {
                writeln!(w, "{}", serde_json::to_string(p)?)?;
            }
            w.flush()?;
            let failed = preds.iter().filter(|p| p.error.is_some()).count();
            println!("scored {} commits ({failed} failed to parse) into {}", preds.len(), out.display());
        }
    }
    Ok(())
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes beside the target and renames, so an interrupted run never
/// leaves a truncated checkpoint.
fn write_checkpoint(model: &Model, out: &Path) -> Result<(), TrainError> {
    let tmp = sidecar(out, "tmp");
    checkpoint::save(model, &tmp)?;
    fs::rename(&tmp, out)?;
    Ok(())
}

fn corpus_summary(records: &[CommitRecord], settings: &GraphSettings) -> serde_json::Value {
    let fixes = records.iter().filter(|c| c.label.is_fix()).count();
    let mut locs: Vec<usize> = records.iter().map(|c| c.changed_loc).collect();
    locs.sort_unstable();
    let median = |v: &[usize]| if v.is_empty() { 0 } else { v[v.len() / 2] };
    let graphs = build_graphs(records, settings);
    let mut sizes: Vec<usize> = graphs.iter().filter_map(|g| g.as_ref().ok().map(|g| g.len())).collect();
    sizes.sort_unstable();
    let failed = graphs.iter().filter(|g| g.is_err()).count();
    let split = time_split(records, SplitSpec::default()).ok();
    json!({
        "commits": records.len(),
        "fixes": fixes,
        "non_fixes": records.len() - fixes,
        "files": records.iter().map(|c| c.files.len()).sum::<usize>(),
        "first_timestamp": records.iter().map(|c| c.timestamp).min(),
        "last_timestamp": records.iter().map(|c| c.timestamp).max(),
        "changed_loc": { "total": locs.iter().sum::<usize>(), "median": median(&locs), "max": locs.last().copied().unwrap_or(0) },
        "graph_nodes": { "median": median(&sizes), "max": sizes.last().copied().unwrap_or(0) },
        "parse_failures": failed,
        "split": split.map(|s| json!({ "cut": s.cut, "train": s.train.len(), "test": s.test.len() })),
    })
}

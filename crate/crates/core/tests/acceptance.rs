//! Acceptance checks. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits nonzero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use fixgraph::alpha::{build_alpha_ast, match_asts, AlphaAst, Annotation, NodeMatching};
use fixgraph::ast::{parse_source, NodeId, NodeKind, Version};
use fixgraph::dataset::{
    gen_synthetic, gen_synthetic_detailed, sample_ratio, time_split, undersample, CommitRecord, FileChange, Label,
    SplitSpec,
};
use fixgraph::gnn::{checkpoint, forward, Flavor, GraphBatch, GraphSettings, Model, ModelConfig};
use fixgraph::metrics::{confusion, cost_effort, prf1, ConfusionCounts, Scored};
use fixgraph::slice::diff_lines;
use fixgraph::training::{aligned_slices, commit_graph, file_graph, predict, train, TrainConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{extract, fixture, permuted, random_batch, worst_gradient_error};

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("bound-check example", bound_check_example),
        ("annotation invariants", annotation_invariants),
        ("gradient correctness", gradient_correctness),
        ("permutation and batching", permutation_and_batching),
        ("learnability", learnability),
        ("unchanged-context ablation", ablation_direction),
        ("imbalance degradation", imbalance_degradation),
        ("metrics oracle", metrics_oracle),
        ("reproducibility", reproducibility),
        ("split hygiene", split_hygiene),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == n.to_string()) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {status} {name}: {detail} ({secs:.2}s)");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bound_check_example() -> Result<String, String> {
    let started = Instant::now();
    let commit = CommitRecord::new(
        "bound-check",
        0,
        Label::Fix,
        vec![FileChange {
            path: "copy.c".into(),
            before: fixture("bound_check_before.c"),
            after: fixture("bound_check_after.c"),
        }],
    );
    let g = commit_graph(&commit, &GraphSettings::default()).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let counts = g.node_counts();
    ensure(counts.added == 1 && counts.deleted == 3, || format!("node counts {counts:?}"))?;

    let children = g.children();
    let less: Vec<_> = g.nodes().iter().filter(|n| n.kind == NodeKind::BinaryExpr && n.label == "<").collect();
    let cond = less
        .iter()
        .find(|n| children[n.id.index()].iter().any(|c| g.node(*c).annotation != Annotation::Unchanged))
        .ok_or("no comparison with changed operands")?;
    ensure(cond.annotation == Annotation::Unchanged, || "comparison is not unchanged".into())?;

    let ops = &children[cond.id.index()];
    let mul =
        ops.iter().map(|c| g.node(*c)).find(|n| n.label == "*").ok_or("no multiplication under the comparison")?;
    ensure(mul.annotation == Annotation::Deleted, || "multiplication is not deleted".into())?;
    let mul_kids: Vec<_> = children[mul.id.index()].iter().map(|c| g.node(*c)).collect();
    ensure(mul_kids.len() == 2 && mul_kids.iter().all(|k| k.annotation == Annotation::Deleted), || {
        "multiplication operands are not both deleted".into()
    })?;
    let labels: BTreeSet<&str> = mul_kids.iter().map(|k| k.label.as_str()).collect();
    ensure(labels == BTreeSet::from(["2", "BUF_SIZE"]), || format!("operands {labels:?}"))?;

    let added = ops.iter().map(|c| g.node(*c)).find(|n| n.annotation == Annotation::Added).ok_or("no added operand")?;
    ensure(added.kind == NodeKind::Identifier && added.label == "BUF_SIZE", || format!("added {added:?}"))?;
    let after = parse_source(&commit.files[0].after, Version::After).unwrap();
    let right = after.node(cond.after.unwrap()).children.last().copied();
    ensure(right == added.after, || "added identifier is not the right operand".into())?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("{} unchanged, 1 added, 3 deleted in {:.1} ms", counts.unchanged, elapsed.as_secs_f64() * 1e3))
}

/// Graph of one file built the way training builds it, plus the projected
/// trees so the checks can see which ids ought to appear.
fn per_file(before_src: &str, after_src: &str, depth: usize) -> Option<(AlphaAst, BTreeSet<NodeId>, BTreeSet<NodeId>)> {
    let before = parse_source(before_src, Version::Before).unwrap();
    let after = parse_source(after_src, Version::After).unwrap();
    let diff = diff_lines(before_src, after_src);
    if diff.is_identity() {
        return None;
    }
    let (sb, sa) = aligned_slices(&before, &after, &diff, depth);
    let (pb, pa) = (sb.project(&before), sa.project(&after));
    let m = match_asts(&pb, &pa, &diff);
    let g = build_alpha_ast(&pb, &pa, &m).unwrap();
    let g2 = file_graph(before_src, after_src, &GraphSettings { slice_depth: depth, use_unchanged: true }).unwrap();
    assert_eq!(g2.as_ref(), if sb.is_empty() && sa.is_empty() { None } else { Some(&g) });
    let ids_b = pb.nodes().map(|n| n.id).collect();
    let ids_a = pa.nodes().map(|n| n.id).collect();
    Some((g, ids_b, ids_a))
}

fn check_invariants(g: &AlphaAst, ids_b: &BTreeSet<NodeId>, ids_a: &BTreeSet<NodeId>, ctx: &str) -> Result<(), String> {
    // Partition: every projected node appears exactly once and its
    // annotation says which versions it belongs to.
    let mut seen_b = BTreeSet::new();
    let mut seen_a = BTreeSet::new();
    for n in g.nodes() {
        let ok = match n.annotation {
            Annotation::Unchanged => n.before.is_some() && n.after.is_some(),
            Annotation::Deleted => n.before.is_some() && n.after.is_none(),
            Annotation::Added => n.before.is_none() && n.after.is_some(),
        };
        ensure(ok, || format!("{ctx}: node {:?} has versions inconsistent with its annotation", n.id))?;
        if let Some(b) = n.before {
            ensure(seen_b.insert(b), || format!("{ctx}: before node {b} appears twice"))?;
        }
        if let Some(a) = n.after {
            ensure(seen_a.insert(a), || format!("{ctx}: after node {a} appears twice"))?;
        }
    }
    ensure(&seen_b == ids_b && &seen_a == ids_a, || format!("{ctx}: node sets differ from the projected trees"))?;

    // Edges: unchanged edges join unchanged nodes; a deleted edge never
    // touches an added node and vice versa.
    for e in g.edges() {
        let (p, c) = (g.node(e.parent).annotation, g.node(e.child).annotation);
        let ok = match e.annotation {
            Annotation::Unchanged => p == Annotation::Unchanged && c == Annotation::Unchanged,
            Annotation::Deleted => p != Annotation::Added && c != Annotation::Added,
            Annotation::Added => p != Annotation::Deleted && c != Annotation::Deleted,
        };
        ensure(ok, || format!("{ctx}: edge {e:?} joins {p:?} and {c:?}"))?;
        if c == Annotation::Unchanged && p == Annotation::Unchanged {
            ensure(e.annotation == Annotation::Unchanged, || format!("{ctx}: matched edge {e:?} not unchanged"))?;
        }
    }

    // Ancestry: the before-parent and after-parent of an unchanged node are
    // the same merged node.
    let mut parents: BTreeMap<(usize, Annotation), Vec<usize>> = BTreeMap::new();
    for e in g.edges() {
        parents.entry((e.child.index(), e.annotation)).or_default().push(e.parent.index());
    }
    for n in g.nodes().iter().filter(|n| n.annotation == Annotation::Unchanged) {
        let via = |a: Annotation| parents.get(&(n.id.index(), a)).cloned().unwrap_or_default();
        let (kept, del, add) = (via(Annotation::Unchanged), via(Annotation::Deleted), via(Annotation::Added));
        ensure(kept.len() + del.len() <= 1 && kept.len() + add.len() <= 1, || {
            format!("{ctx}: node {:?} has several parents in one version", n.id)
        })?;
        ensure(del.is_empty() && add.is_empty(), || format!("{ctx}: unchanged node {:?} changed parent", n.id))?;
    }
    Ok(())
}

type Side = Option<NodeId>;
type Keyed = (BTreeSet<(Side, Side, Annotation)>, BTreeSet<(Side, Side, Side, Side, Annotation)>);

fn keyed(g: &AlphaAst, swap: bool) -> Keyed {
    let key = |b: Option<NodeId>, a: Option<NodeId>| if swap { (a, b) } else { (b, a) };
    let flip = |x: Annotation| if swap { x.flip() } else { x };
    let nodes = g
        .nodes()
        .iter()
        .map(|n| {
            let (b, a) = key(n.before, n.after);
            (b, a, flip(n.annotation))
        })
        .collect();
    let edges = g
        .edges()
        .iter()
        .map(|e| {
            let (p, c) = (g.node(e.parent), g.node(e.child));
            let (pb, pa) = key(p.before, p.after);
            let (cb, ca) = key(c.before, c.after);
            (pb, pa, cb, ca, flip(e.annotation))
        })
        .collect();
    (nodes, edges)
}

fn annotation_invariants() -> Result<String, String> {
    let commits = gen_synthetic_detailed(500, 500, 11);
    ensure(commits.len() == 1000, || "corpus size".into())?;
    let mut files = 0;
    let mut identity = 0;
    let mut nodes = 0;
    for (i, sc) in commits.iter().enumerate() {
        let depth = i % 3;
        for f in &sc.record.files {
            let ctx = format!("{} {} depth {depth}", sc.record.commit_id, f.path);
            let Some((g, ids_b, ids_a)) = per_file(&f.before, &f.after, depth) else { continue };
            files += 1;
            nodes += g.len();
            check_invariants(&g, &ids_b, &ids_a, &ctx)?;
            let (sg, sb, sa) =
                per_file(&f.after, &f.before, depth).ok_or_else(|| format!("{ctx}: swap is identity"))?;
            check_invariants(&sg, &sb, &sa, &format!("{ctx} swapped"))?;
            ensure(keyed(&g, false) == keyed(&sg, true), || format!("{ctx}: swapped graph is not the mirror image"))?;
            let (c, s) = (g.node_counts(), sg.node_counts());
            ensure(c.added == s.deleted && c.deleted == s.added && c.unchanged == s.unchanged, || {
                format!("{ctx}: counts {c:?} vs swapped {s:?}")
            })?;
        }

        // Identity commit from the same source.
        let src = &sc.record.files[0].before;
        let same = CommitRecord::new(
            "id",
            0,
            Label::NonFix,
            vec![FileChange { path: "a.c".into(), before: src.clone(), after: src.clone() }],
        );
        let g = commit_graph(&same, &GraphSettings::default()).map_err(|e| e.to_string())?;
        ensure(g.len() == 1 && g.node_counts().unchanged == 1, || "identity commit graph is not a bare root".into())?;
        let ast = parse_source(src, Version::Before).unwrap();
        let m = match_asts(&ast, &ast, &diff_lines(src, src));
        ensure(m == NodeMatching::identity(&ast), || "identity matching is not the identity".into())?;
        let full = build_alpha_ast(&ast, &ast, &m).unwrap();
        ensure(full.node_counts().unchanged == ast.len() && full.edge_counts().unchanged == ast.edge_count(), || {
            "identity graph has changed parts".into()
        })?;
        identity += 1;
    }
    Ok(format!("{} commits, {files} changed files, {nodes} nodes, {identity} identity commits", commits.len()))
}

fn tiny(flavor: Flavor, seed: u64) -> ModelConfig {
    ModelConfig {
        flavor,
        layers: 2,
        hidden: 3,
        kind_dim: 2,
        label_dim: 2,
        annotation_dim: 2,
        buckets: 5,
        seed,
        ..Default::default()
    }
}

fn gradient_correctness() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut graphs = 0;
    for flavor in Flavor::ALL {
        for trial in 0..5 {
            let model = Model::new(tiny(flavor, 40 + trial)).unwrap();
            let batch = random_batch(&mut rng, 1, 10);
            graphs += 1;
            let (err, at) = worst_gradient_error(&batch, &model, 1e-10);
            ensure(err < 1e-4, || format!("{flavor}: relative error {err:e} at {at}"))?;
            worst = worst.max(err);
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{graphs} graphs over 4 flavors, worst relative error {worst:.2e}"))
}

fn permutation_and_batching() -> Result<String, String> {
    let corpus = gen_synthetic(6, 6, 21);
    let graphs: Vec<AlphaAst> = corpus.iter().map(|c| commit_graph(c, &GraphSettings::default()).unwrap()).collect();
    let refs: Vec<&AlphaAst> = graphs.iter().collect();
    let batch = GraphBatch::from_graphs(&refs, None);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for flavor in Flavor::ALL {
        for readout in [fixgraph::gnn::Readout::Mean, fixgraph::gnn::Readout::Max] {
            let model = Model::new(ModelConfig { flavor, readout, seed: 8, ..Default::default() }).unwrap();
            let joint = forward(&batch, &model).unwrap();
            for (g, &p) in joint.iter().enumerate() {
                let alone = forward(&GraphBatch::single(&graphs[g], None), &model).unwrap()[0];
                ensure((alone - p).abs() <= 1e-12, || {
                    format!("{flavor}/{readout:?} graph {g}: batched {p} alone {alone}")
                })?;
                worst = worst.max((alone - p).abs());
                let split = forward(&extract(&batch, g), &model).unwrap()[0];
                ensure((split - p).abs() <= 1e-12, || format!("{flavor}/{readout:?} graph {g}: extracted {split}"))?;
            }
            let mut perm: Vec<usize> = (0..batch.node_count()).collect();
            perm.shuffle(&mut rng);
            let shuffled = forward(&permuted(&batch, &perm), &model).unwrap();
            for (a, b) in joint.iter().zip(&shuffled) {
                ensure((a - b).abs() <= 1e-12, || format!("{flavor}/{readout:?}: permuted {b} vs {a}"))?;
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(format!("{} commit graphs, {} nodes, worst deviation {worst:.1e}", graphs.len(), batch.node_count()))
}

struct Trained {
    full: Model,
    changed_only: Model,
    test: Vec<CommitRecord>,
    full_secs: f64,
}

fn base_config() -> TrainConfig {
    TrainConfig {
        epochs: 20,
        seed: 1,
        model: ModelConfig { flavor: Flavor::Gat, layers: 2, ..Default::default() },
        ..Default::default()
    }
}

fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let corpus = gen_synthetic(500, 500, 1);
        let split = time_split(&corpus, SplitSpec { train_ratio: 0.8 }).unwrap();
        let started = Instant::now();
        let full = train(&split.train, &base_config()).unwrap().model;
        let full_secs = started.elapsed().as_secs_f64();
        let changed_only = train(&split.train, &TrainConfig { use_unchanged: false, ..base_config() }).unwrap().model;
        Trained { full, changed_only, test: sample_ratio(&split.test, 1.0, 0), full_secs }
    })
}

fn scored(model: &Model, corpus: &[CommitRecord]) -> Vec<Scored> {
    let preds = predict(model, corpus).unwrap();
    assert!(preds.iter().all(|p| p.error.is_none()));
    corpus
        .iter()
        .zip(preds)
        .map(|(c, p)| Scored { label: c.label, probability: p.probability, changed_loc: c.changed_loc })
        .collect()
}

fn learnability() -> Result<String, String> {
    let t = trained();
    let r = prf1(&confusion(&scored(&t.full, &t.test), 0.5));
    ensure(r.f1 >= 0.90, || format!("F1 {:.3} (P {:.3}, R {:.3})", r.f1, r.precision, r.recall))?;
    ensure(t.full_secs <= 600.0, || format!("training took {:.0}s", t.full_secs))?;
    Ok(format!(
        "{} test commits, P {:.3} R {:.3} F1 {:.3}, trained in {:.1}s",
        t.test.len(),
        r.precision,
        r.recall,
        r.f1,
        t.full_secs
    ))
}

fn ablation_direction() -> Result<String, String> {
    let t = trained();
    let full = prf1(&confusion(&scored(&t.full, &t.test), 0.5)).precision;
    let changed = prf1(&confusion(&scored(&t.changed_only, &t.test), 0.5)).precision;
    ensure(full >= changed, || format!("precision with context {full:.3} < changed-only {changed:.3}"))?;
    Ok(format!("precision {full:.3} with context, {changed:.3} changed-only"))
}

fn imbalance_degradation() -> Result<String, String> {
    let t = trained();
    let pool = gen_synthetic(100, 3000, 2);
    let probs: HashMap<String, Scored> =
        pool.iter().zip(scored(&t.full, &pool)).map(|(c, s)| (c.commit_id.clone(), s)).collect();
    let f1_at = |ratio: f64| {
        let set = sample_ratio(&pool, ratio, 0);
        let s: Vec<Scored> = set.iter().map(|c| probs[&c.commit_id]).collect();
        (prf1(&confusion(&s, 0.5)).f1, set.len())
    };
    let ((balanced, n1), (skewed, n30)) = (f1_at(1.0), f1_at(30.0));
    ensure(skewed < balanced, || format!("F1 at 30:1 {skewed:.3} is not below 1:1 {balanced:.3}"))?;
    Ok(format!("F1 {balanced:.3} at 1:1 ({n1} commits), {skewed:.3} at 30:1 ({n30} commits)"))
}

fn brute_confusion(s: &[Scored], threshold: f64) -> [usize; 4] {
    let mut c = [0; 4];
    for x in s {
        let fix = x.label == Label::Fix;
        let pred = x.probability >= threshold;
        c[(!fix as usize) * 2 + (!pred as usize)] += 1;
    }
    c // tp, fn, fp, tn
}

/// Repeatedly takes the best remaining commit by a linear scan.
fn brute_cost_effort(s: &[Scored], budget: usize) -> f64 {
    let total = s.iter().filter(|x| x.label == Label::Fix).count();
    let mut left: Vec<usize> = (0..s.len()).collect();
    let (mut spent, mut found) = (0, 0);
    while !left.is_empty() {
        let mut best = 0;
        for k in 1..left.len() {
            let (a, b) = (&s[left[k]], &s[left[best]]);
            if a.probability > b.probability || (a.probability == b.probability && a.changed_loc < b.changed_loc) {
                best = k;
            }
        }
        let i = left.remove(best);
        if spent + s[i].changed_loc > budget {
            break;
        }
        spent += s[i].changed_loc;
        found += (s[i].label == Label::Fix) as usize;
    }
    if total == 0 {
        0.0
    } else {
        found as f64 / total as f64
    }
}

fn metrics_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let levels = [0.0, 0.1, 0.25, 0.5, 0.5, 0.75, 0.9, 1.0];
    let mut compared = 0;
    for fixture in 0..1000 {
        let n = rng.gen_range(0..25);
        let s: Vec<Scored> = (0..n)
            .map(|_| Scored {
                label: if rng.gen_bool(0.4) { Label::Fix } else { Label::NonFix },
                probability: if rng.gen_bool(0.5) { levels[rng.gen_range(0..levels.len())] } else { rng.gen() },
                changed_loc: rng.gen_range(0..60),
            })
            .collect();
        let threshold = [0.5, rng.gen()][rng.gen_range(0..2)];
        let [tp, fn_, fp, tn] = brute_confusion(&s, threshold);
        let c = confusion(&s, threshold);
        ensure(c == ConfusionCounts { tp, fp, fn_, tn }, || format!("fixture {fixture}: confusion {c:?}"))?;
        let r = prf1(&c);
        let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let expect = [div(tp, tp + fp), div(tp, tp + fn_), div(2 * tp, 2 * tp + fp + fn_), div(tp + tn, n)];
        let got = [r.precision, r.recall, r.f1, r.accuracy];
        for (e, g) in expect.iter().zip(&got) {
            ensure((e - g).abs() < 1e-12, || format!("fixture {fixture}: rates {got:?} vs {expect:?}"))?;
        }

        let total: usize = s.iter().map(|x| x.changed_loc).sum();
        let mut prev = 0.0;
        for budget in (0..=total + 5).step_by(3) {
            let ce = cost_effort(&s, budget);
            let bf = brute_cost_effort(&s, budget);
            ensure(ce == bf, || format!("fixture {fixture}: CE@{budget} {ce} vs {bf}"))?;
            ensure(ce >= prev, || format!("fixture {fixture}: CE not monotone at {budget}"))?;
            prev = ce;
            compared += 1;
        }
        let fixes = s.iter().filter(|x| x.label == Label::Fix).count();
        ensure(cost_effort(&s, total) == if fixes > 0 { 1.0 } else { 0.0 }, || {
            format!("fixture {fixture}: full budget")
        })?;

        let mut last_recall = f64::INFINITY;
        for t in [0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0, 1.1] {
            let rec = prf1(&confusion(&s, t)).recall;
            ensure(rec <= last_recall, || format!("fixture {fixture}: recall rises with the threshold"))?;
            last_recall = rec;
        }
    }
    let worked = [
        Scored { label: Label::Fix, probability: 0.9, changed_loc: 30_000 },
        Scored { label: Label::NonFix, probability: 0.8, changed_loc: 15_000 },
        Scored { label: Label::Fix, probability: 0.7, changed_loc: 20_000 },
    ];
    let ce = cost_effort(&worked, 50_000);
    ensure(ce == 0.5, || format!("worked example gives {ce}"))?;
    Ok(format!("1000 fixtures, {compared} cost-effort budgets, worked example CE@50K = {ce}"))
}

fn small_run() -> (Vec<u8>, String) {
    let corpus = gen_synthetic(30, 40, 5);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 8,
        seed: 17,
        model: ModelConfig { hidden: 16, buckets: 256, ..Default::default() },
        ..Default::default()
    };
    let out = train(&corpus, &cfg).unwrap();
    let log: String = out.log.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    (checkpoint::to_bytes(&out.model), log)
}

fn reproducibility() -> Result<String, String> {
    let (ckpt_a, log_a) = small_run();
    let (ckpt_b, log_b) = small_run();
    ensure(ckpt_a == ckpt_b, || "checkpoints differ".into())?;
    ensure(log_a == log_b, || "logs differ".into())?;
    Ok(format!("{} checkpoint bytes and {} log bytes identical", ckpt_a.len(), log_a.len()))
}

fn bare(i: usize, ts: i64, label: Label) -> CommitRecord {
    CommitRecord { commit_id: format!("c{i}"), timestamp: ts, label, files: vec![], changed_loc: 0 }
}

fn split_hygiene() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for k in 0..100 {
        let n = rng.gen_range(2..300);
        let span = rng.gen_range(2..1000);
        let mut corpus: Vec<CommitRecord> = (0..n)
            .map(|i| bare(i, rng.gen_range(0..span), if rng.gen_bool(0.3) { Label::Fix } else { Label::NonFix }))
            .collect();
        corpus[0].timestamp = 0;
        corpus[1].timestamp = span;
        let ratio = rng.gen_range(0.05..0.95);
        let s = time_split(&corpus, SplitSpec { train_ratio: ratio }).map_err(|e| format!("corpus {k}: {e}"))?;
        ensure(!s.train.is_empty() && !s.test.is_empty(), || format!("corpus {k}: empty side"))?;
        ensure(s.train.len() + s.test.len() == n, || format!("corpus {k}: commits lost"))?;
        let max_train = s.train.iter().map(|c| c.timestamp).max().unwrap();
        let min_test = s.test.iter().map(|c| c.timestamp).min().unwrap();
        ensure(max_train < min_test, || format!("corpus {k}: train {max_train} not before test {min_test}"))?;
    }

    let (fixes, negatives) = (8471, 30_000);
    let corpus: Vec<CommitRecord> = (0..fixes + negatives)
        .map(|i| bare(i, i as i64, if i % 4 == 0 && i / 4 < fixes { Label::Fix } else { Label::NonFix }))
        .collect();
    let u = undersample(&corpus, 3).map_err(|e| e.to_string())?;
    let kept_fix = u.records.iter().filter(|c| c.label.is_fix()).count();
    let kept_neg = u.records.len() - kept_fix;
    ensure(kept_fix == fixes && kept_neg == fixes && u.shortfall.is_none(), || format!("{kept_fix}/{kept_neg}"))?;
    let ids: BTreeSet<&str> = u.records.iter().map(|c| c.commit_id.as_str()).collect();
    ensure(ids.len() == u.records.len(), || "duplicate commits after undersampling".into())?;
    Ok(format!("100 corpora split cleanly, undersampled to {kept_fix}/{kept_neg}"))
}

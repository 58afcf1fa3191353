#![allow(dead_code)]

use fixgraph::gnn::{label_hash, loss_and_gradients, BatchEdge, GraphBatch, Model};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> String {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

/// Random forest of `graphs` trees with at most `max_nodes` nodes each.
pub fn random_batch(rng: &mut ChaCha8Rng, graphs: usize, max_nodes: usize) -> GraphBatch {
    let mut b = GraphBatch { graphs, labels: Some(vec![]), ..Default::default() };
    for g in 0..graphs {
        let offset = b.kinds.len();
        let n = rng.gen_range(1..=max_nodes);
        for i in 0..n {
            b.kinds.push(rng.gen_range(0..31));
            b.label_hashes.push(label_hash(&format!("t{}", rng.gen_range(0..7))));
            b.annotations.push(rng.gen_range(0..3));
            b.graph_of.push(g);
            if i > 0 {
                let parent = offset + rng.gen_range(0..i);
                let relation = rng.gen_range(0..3);
                b.edges.push(BatchEdge { from: parent, to: offset + i, relation });
                b.edges.push(BatchEdge { from: offset + i, to: parent, relation });
            }
        }
        b.labels.as_mut().unwrap().push(rng.gen_range(0..2) as f64);
    }
    b
}

/// Largest relative disagreement between stored gradients and central
/// differences with step 1e-4. `floor` bounds the denominator away from zero
/// for entries whose gradient vanishes on both sides.
pub fn worst_gradient_error(batch: &GraphBatch, model: &Model, floor: f64) -> (f64, String) {
    let (_, grads) = loss_and_gradients(batch, model).unwrap();
    let h = 1e-4;
    let mut worst = (0.0, String::new());
    let mut probe = model.clone();
    for (ti, name) in model.names().iter().enumerate() {
        let shape = model.tensors()[ti].dim();
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let orig = model.tensors()[ti][[r, c]];
                probe.tensors_mut()[ti][[r, c]] = orig + h;
                let up = loss_and_gradients(batch, &probe).unwrap().0;
                probe.tensors_mut()[ti][[r, c]] = orig - h;
                let down = loss_and_gradients(batch, &probe).unwrap().0;
                probe.tensors_mut()[ti][[r, c]] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.tensors()[ti][[r, c]];
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
                assert!(err.is_finite(), "{name}[{r},{c}]");
                if err > worst.0 {
                    worst = (err, format!("{name}[{r},{c}] analytic {analytic:e} numeric {numeric:e}"));
                }
            }
        }
    }
    worst
}

/// Relabels nodes by `perm[old] = new` and reverses the edge order.
pub fn permuted(b: &GraphBatch, perm: &[usize]) -> GraphBatch {
    let mut out = b.clone();
    for (old, &new) in perm.iter().enumerate() {
        out.kinds[new] = b.kinds[old];
        out.label_hashes[new] = b.label_hashes[old];
        out.annotations[new] = b.annotations[old];
        out.graph_of[new] = b.graph_of[old];
    }
    out.edges =
        b.edges.iter().map(|e| BatchEdge { from: perm[e.from], to: perm[e.to], relation: e.relation }).rev().collect();
    out
}

/// Graph `g` of a batch as a batch of its own.
pub fn extract(batch: &GraphBatch, g: usize) -> GraphBatch {
    let keep: Vec<usize> = (0..batch.node_count()).filter(|&i| batch.graph_of[i] == g).collect();
    let remap = |i: usize| keep.binary_search(&i).unwrap();
    GraphBatch {
        kinds: keep.iter().map(|&i| batch.kinds[i]).collect(),
        label_hashes: keep.iter().map(|&i| batch.label_hashes[i]).collect(),
        annotations: keep.iter().map(|&i| batch.annotations[i]).collect(),
        edges: batch
            .edges
            .iter()
            .filter(|e| batch.graph_of[e.from] == g)
            .map(|e| BatchEdge { from: remap(e.from), to: remap(e.to), relation: e.relation })
            .collect(),
        graph_of: vec![0; keep.len()],
        graphs: 1,
        labels: batch.labels.as_ref().map(|l| vec![l[g]]),
    }
}

//! Selecting the code a commit touches, plus the unchanged statements that
//! depend on it or that it depends on.

mod deps;
mod diff;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::ast::{statements_of, Ast, NodeId, NodeKind};

pub use deps::{build_dependency_graph, def_use, DefUse, DepEdge, DepKind, DependencyGraph};
pub use diff::{diff_lines, LineDiff};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SliceReason {
    Changed,
    ControlRelated,
    DataRelated,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SliceResult {
    pub reasons: BTreeMap<NodeId, SliceReason>,
}

impl SliceResult {
    pub fn selected(&self) -> BTreeSet<NodeId> {
        self.reasons.keys().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.reasons.is_empty()
    }

    pub fn len(&self) -> usize {
        self.reasons.len()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.reasons.contains_key(&id)
    }

    /// Adds statements as context without overriding existing reasons.
    pub fn extend_context(&mut self, extra: impl IntoIterator<Item = (NodeId, SliceReason)>) {
        for (id, reason) in extra {
            self.reasons.entry(id).or_insert(reason);
        }
    }

    /// The sub-tree needed to show the selected statements: their own nodes,
    /// every ancestor, and the headers of enclosing functions. An empty
    /// selection projects to the bare root.
    pub fn project(&self, ast: &Ast) -> Ast {
        let mut keep = BTreeSet::from([ast.root()]);
        for &stmt in self.reasons.keys() {
            keep.extend(ast.owned_nodes(stmt));
            for anc in ast.ancestors(stmt) {
                if keep.insert(anc) && ast.node(anc).kind == NodeKind::FunctionDef {
                    keep.extend(ast.owned_nodes(anc));
                }
            }
        }
        ast.project(&keep)
    }

    pub fn to_json(&self, ast: &Ast) -> serde_json::Value {
        let items: Vec<_> = self
            .reasons
            .iter()
            .map(|(&id, reason)| {
                let n = ast.node(id);
                serde_json::json!({
                    "id": id,
                    "kind": n.kind,
                    "span": [n.span.start, n.span.end],
                    "reason": reason,
                })
            })
            .collect();
        serde_json::json!({ "selected": items })
    }
}

/// Statements whose own lines intersect `lines`.
pub fn statements_touching(ast: &Ast, lines: &BTreeSet<u32>) -> Vec<NodeId> {
    if lines.is_empty() {
        return Vec::new();
    }
    statements_of(ast).into_iter().filter(|&s| ast.own_lines(s).iter().any(|l| lines.contains(l))).collect()
}

/// Changed statements plus everything within `depth` dependency hops of
/// them, following edges in both directions.
pub fn slice(ast: &Ast, changed_lines: &BTreeSet<u32>, depth: usize) -> SliceResult {
    slice_with(ast, &build_dependency_graph(ast), changed_lines, depth)
}

pub fn slice_with(ast: &Ast, deps: &DependencyGraph, changed_lines: &BTreeSet<u32>, depth: usize) -> SliceResult {
    let mut reasons = BTreeMap::new();
    let mut frontier = VecDeque::new();
    for s in statements_touching(ast, changed_lines) {
        reasons.insert(s, SliceReason::Changed);
        frontier.push_back((s, 0usize));
    }
    if depth == 0 || frontier.is_empty() {
        return SliceResult { reasons };
    }
    let adj = deps.undirected_adjacency();
    while let Some((s, d)) = frontier.pop_front() {
        if d == depth {
            continue;
        }
        for &(n, kind) in adj.get(&s).into_iter().flatten() {
            if reasons.contains_key(&n) {
                continue;
            }
            let reason = match kind {
                DepKind::ControlDep => SliceReason::ControlRelated,
                DepKind::DataDep => SliceReason::DataRelated,
            };
            reasons.insert(n, reason);
            frontier.push_back((n, d + 1));
        }
    }
    SliceResult { reasons }
}

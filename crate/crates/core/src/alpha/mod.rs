//! Annotated ASTs: the before and after trees of a change merged into one
//! graph whose nodes and edges are each marked unchanged, added or deleted.

mod matching;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ast::{Ast, NodeId, NodeKind};

pub use matching::{match_asts, NodeMatching};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Annotation {
    Unchanged,
    Added,
    Deleted,
}

impl Annotation {
    pub const ALL: [Annotation; 3] = [Annotation::Unchanged, Annotation::Added, Annotation::Deleted];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn flip(self) -> Self {
        match self {
            Annotation::Unchanged => Annotation::Unchanged,
            Annotation::Added => Annotation::Deleted,
            Annotation::Deleted => Annotation::Added,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MergedId(pub u32);

impl MergedId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlphaNode {
    pub id: MergedId,
    pub kind: NodeKind,
    pub label: String,
    pub annotation: Annotation,
    pub before: Option<NodeId>,
    pub after: Option<NodeId>,
    /// Index of the source file within the commit.
    pub file: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct AlphaEdge {
    pub parent: MergedId,
    pub child: MergedId,
    pub annotation: Annotation,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AlphaAst {
    nodes: Vec<AlphaNode>,
    edges: Vec<AlphaEdge>,
    roots: Vec<MergedId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlphaError {
    #[error("invalid matching: {0}")]
    InvalidMatching(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AnnotationCounts {
    pub unchanged: usize,
    pub added: usize,
    pub deleted: usize,
}

impl AnnotationCounts {
    fn bump(&mut self, a: Annotation) {
        match a {
            Annotation::Unchanged => self.unchanged += 1,
            Annotation::Added => self.added += 1,
            Annotation::Deleted => self.deleted += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.unchanged + self.added + self.deleted
    }
}

impl AlphaAst {
    pub fn nodes(&self) -> &[AlphaNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[AlphaEdge] {
        &self.edges
    }

    pub fn roots(&self) -> &[MergedId] {
        &self.roots
    }

    pub fn node(&self, id: MergedId) -> &AlphaNode {
        &self.nodes[id.index()]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_counts(&self) -> AnnotationCounts {
        let mut c = AnnotationCounts::default();
        self.nodes.iter().for_each(|n| c.bump(n.annotation));
        c
    }

    pub fn edge_counts(&self) -> AnnotationCounts {
        let mut c = AnnotationCounts::default();
        self.edges.iter().for_each(|e| c.bump(e.annotation));
        c
    }

    /// Children of each node in edge order.
    pub fn children(&self) -> Vec<Vec<MergedId>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            out[e.parent.index()].push(e.child);
        }
        out
    }

    /// Number of weakly connected components.
    pub fn component_count(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.parent.index()), find(&mut parent, e.child.index()));
            parent[a] = b;
        }
        (0..self.nodes.len()).filter(|&i| find(&mut parent, i) == i).count()
    }

    /// Joins per-file graphs under one unchanged commit root. The root's edge
    /// to each component carries the annotation of the component root.
    pub fn join(parts: Vec<AlphaAst>) -> AlphaAst {
        let mut out = AlphaAst::default();
        let root = MergedId(0);
        out.nodes.push(AlphaNode {
            id: root,
            kind: NodeKind::CommitRoot,
            label: String::new(),
            annotation: Annotation::Unchanged,
            before: None,
            after: None,
            file: 0,
        });
        out.roots.push(root);
        for part in parts {
            let offset = out.nodes.len() as u32;
            let shift = |id: MergedId| MergedId(id.0 + offset);
            for n in part.nodes {
                out.nodes.push(AlphaNode { id: shift(n.id), ..n });
            }
            for r in &part.roots {
                let annotation = out.nodes[shift(*r).index()].annotation;
                out.edges.push(AlphaEdge { parent: root, child: shift(*r), annotation });
            }
            for e in part.edges {
                out.edges.push(AlphaEdge { parent: shift(e.parent), child: shift(e.child), ..e });
            }
        }
        out
    }

    pub fn with_file(mut self, file: u32) -> AlphaAst {
        self.nodes.iter_mut().for_each(|n| n.file = file);
        self
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("alpha ast serializes")
    }

    /// Graphviz rendering with one style per annotation.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph alpha_ast {\n  node [shape=box, fontname=\"monospace\"];\n");
        for n in &self.nodes {
            let label = if n.label.is_empty() {
                n.kind.name().to_string()
            } else {
                format!("{}\\n{}", n.kind.name(), escape(&n.label))
            };
            let style = match n.annotation {
                Annotation::Unchanged => "style=solid, color=black",
                Annotation::Added => "style=filled, fillcolor=\"#d9ead3\", color=darkgreen",
                Annotation::Deleted => "style=filled, fillcolor=\"#f4cccc\", color=red",
            };
            let _ = writeln!(
                out,
                "  n{} [label=\"{}\", annotation={}, {}];",
                n.id.0,
                label,
                annotation_name(n.annotation),
                style
            );
        }
        for e in &self.edges {
            let style = match e.annotation {
                Annotation::Unchanged => "color=black",
                Annotation::Added => "color=darkgreen, style=bold",
                Annotation::Deleted => "color=red, style=dashed",
            };
            let _ = writeln!(
                out,
                "  n{} -> n{} [annotation={}, {}];",
                e.parent.0,
                e.child.0,
                annotation_name(e.annotation),
                style
            );
        }
        out.push_str("}\n");
        out
    }
}

fn annotation_name(a: Annotation) -> &'static str {
    match a {
        Annotation::Unchanged => "unchanged",
        Annotation::Added => "added",
        Annotation::Deleted => "deleted",
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn export_dot(g: &AlphaAst) -> String {
    g.to_dot()
}

fn validate(before: &Ast, after: &Ast, matching: &NodeMatching) -> Result<(), AlphaError> {
    for (b, a) in matching.pairs() {
        let (Some(nb), Some(na)) = (before.get(b), after.get(a)) else {
            return Err(AlphaError::InvalidMatching(format!("pair ({b}, {a}) names a missing node")));
        };
        if nb.kind != na.kind {
            return Err(AlphaError::InvalidMatching(format!("pair ({b}, {a}) joins {} with {}", nb.kind, na.kind)));
        }
        match (before.parent(b), after.parent(a)) {
            (None, None) => {}
            (Some(pb), Some(pa)) if matching.after_of(pb) == Some(pa) => {}
            _ => return Err(AlphaError::InvalidMatching(format!("pair ({b}, {a}) does not respect ancestry"))),
        }
    }
    Ok(())
}

/// Merges two trees under `matching`. Matched pairs become unchanged nodes,
/// unmatched before-nodes deleted ones and unmatched after-nodes added ones.
/// An edge is unchanged when it exists in both versions, otherwise it takes
/// the side it comes from.
pub fn build_alpha_ast(before: &Ast, after: &Ast, matching: &NodeMatching) -> Result<AlphaAst, AlphaError> {
    validate(before, after, matching)?;
    let mut g = AlphaAst::default();
    let mut from_before: BTreeMap<NodeId, MergedId> = BTreeMap::new();
    let mut from_after: BTreeMap<NodeId, MergedId> = BTreeMap::new();

    for n in before.nodes() {
        let id = MergedId(g.nodes.len() as u32);
        let partner = matching.after_of(n.id);
        g.nodes.push(AlphaNode {
            id,
            kind: n.kind,
            label: n.label.clone(),
            annotation: if partner.is_some() { Annotation::Unchanged } else { Annotation::Deleted },
            before: Some(n.id),
            after: partner,
            file: 0,
        });
        from_before.insert(n.id, id);
        if let Some(a) = partner {
            from_after.insert(a, id);
        }
    }
    for n in after.nodes() {
        if from_after.contains_key(&n.id) {
            continue;
        }
        let id = MergedId(g.nodes.len() as u32);
        g.nodes.push(AlphaNode {
            id,
            kind: n.kind,
            label: n.label.clone(),
            annotation: Annotation::Added,
            before: None,
            after: Some(n.id),
            file: 0,
        });
        from_after.insert(n.id, id);
    }

    let before_edges: BTreeSet<(MergedId, MergedId)> =
        before.edges().map(|(p, c)| (from_before[&p], from_before[&c])).collect();
    let after_edges: BTreeSet<(MergedId, MergedId)> =
        after.edges().map(|(p, c)| (from_after[&p], from_after[&c])).collect();
    for &(p, c) in &before_edges {
        let annotation = if after_edges.contains(&(p, c)) { Annotation::Unchanged } else { Annotation::Deleted };
        g.edges.push(AlphaEdge { parent: p, child: c, annotation });
    }
    for &(p, c) in after_edges.difference(&before_edges) {
        g.edges.push(AlphaEdge { parent: p, child: c, annotation: Annotation::Added });
    }

    if !before.is_empty() {
        g.roots.push(from_before[&before.root()]);
    }
    if !after.is_empty() {
        let r = from_after[&after.root()];
        if !g.roots.contains(&r) {
            g.roots.push(r);
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{parse_source, Version};
    use crate::slice::diff_lines;

    fn build(b: &str, a: &str) -> AlphaAst {
        let before = parse_source(b, Version::Before).unwrap();
        let after = parse_source(a, Version::After).unwrap();
        let m = match_asts(&before, &after, &diff_lines(b, a));
        build_alpha_ast(&before, &after, &m).unwrap()
    }

    #[test]
    fn identity_commit_is_all_unchanged() {
        let src = "int f(){\n  int x = 1;\n  return x;\n}";
        let g = build(src, src);
        let ast = parse_source(src, Version::Before).unwrap();
        assert_eq!(g.len(), ast.len());
        assert_eq!(g.node_counts().unchanged, g.len());
        assert_eq!(g.edge_counts().unchanged, g.edges().len());
        assert_eq!(g.roots().len(), 1);
    }

    #[test]
    fn pure_addition_is_all_added() {
        let before = crate::ast::Ast::from_nodes(Version::Before, NodeId(0), BTreeMap::new());
        let after = parse_source("void f(){ g(); }", Version::After).unwrap();
        let g = build_alpha_ast(&before, &after, &NodeMatching::new()).unwrap();
        assert_eq!(g.node_counts().added, after.len());
        assert_eq!(g.edge_counts().added, after.edge_count());
        assert_eq!(g.node_counts().total(), g.len());
    }

    #[test]
    fn empty_matching_is_delete_plus_add() {
        let before = parse_source("void f(){ x = 1; }", Version::Before).unwrap();
        let after = parse_source("void f(){ x = 2; }", Version::After).unwrap();
        let g = build_alpha_ast(&before, &after, &NodeMatching::new()).unwrap();
        let c = g.node_counts();
        assert_eq!((c.deleted, c.added, c.unchanged), (before.len(), after.len(), 0));
        assert_eq!(g.roots().len(), 2);
    }

    #[test]
    fn rejects_kind_mismatch_and_broken_ancestry() {
        let before = parse_source("void f(){ x = 1; }", Version::Before).unwrap();
        let after = parse_source("void f(){ x = 1; }", Version::After).unwrap();
        let mut bad = NodeMatching::new();
        bad.insert(NodeId(0), NodeId(1));
        assert!(build_alpha_ast(&before, &after, &bad).is_err());

        let lit = before.nodes().find(|n| n.kind == NodeKind::Literal).unwrap().id;
        let mut orphan = NodeMatching::new();
        orphan.insert(lit, lit);
        assert!(matches!(build_alpha_ast(&before, &after, &orphan), Err(AlphaError::InvalidMatching(_))));
    }

    #[test]
    fn dot_output() {
        let empty = AlphaAst::default();
        assert_eq!(empty.to_dot(), "digraph alpha_ast {\n  node [shape=box, fontname=\"monospace\"];\n}\n");

        let after = parse_source("x;", Version::After);
        assert!(after.is_err());
        let before = crate::ast::Ast::from_nodes(Version::Before, NodeId(0), BTreeMap::new());
        let after = parse_source("int x;", Version::After).unwrap();
        let small = build_alpha_ast(&before, &after, &NodeMatching::new()).unwrap();
        let dot = small.to_dot();
        let node_lines = dot.lines().filter(|l| l.contains("[label=")).count();
        let edge_lines = dot.lines().filter(|l| l.contains("->")).count();
        assert_eq!(node_lines, small.len());
        assert_eq!(edge_lines, small.edges().len());
        assert!(dot.lines().filter(|l| l.contains("->")).all(|l| l.contains("annotation=added")));
    }

    #[test]
    fn join_adds_one_root_per_commit() {
        let a = build("void f(){\n x=1;\n}", "void f(){\n x=2;\n}");
        let b = build("int g;", "int g;");
        let joined = AlphaAst::join(vec![a.clone().with_file(0), b.clone().with_file(1)]);
        assert_eq!(joined.len(), 1 + a.len() + b.len());
        assert_eq!(joined.roots().len(), 1);
        assert_eq!(joined.component_count(), 1);
        assert_eq!(joined.node(MergedId(0)).kind, NodeKind::CommitRoot);
        let empty = AlphaAst::join(Vec::new());
        assert_eq!(empty.len(), 1);
    }
}

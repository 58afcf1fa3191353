use std::collections::{BTreeMap, VecDeque};

use crate::ast::{Ast, NodeId, Span};
use crate::slice::LineDiff;

/// Partial bijection between before-version and after-version nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeMatching {
    forward: BTreeMap<NodeId, NodeId>,
    backward: BTreeMap<NodeId, NodeId>,
}

impl NodeMatching {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a pair. Returns `false` if either side is already matched.
    pub fn insert(&mut self, before: NodeId, after: NodeId) -> bool {
        if self.forward.contains_key(&before) || self.backward.contains_key(&after) {
            return false;
        }
        self.forward.insert(before, after);
        self.backward.insert(after, before);
        true
    }

    pub fn after_of(&self, before: NodeId) -> Option<NodeId> {
        self.forward.get(&before).copied()
    }

    pub fn before_of(&self, after: NodeId) -> Option<NodeId> {
        self.backward.get(&after).copied()
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.forward.iter().map(|(&b, &a)| (b, a))
    }

    pub fn inverted(&self) -> NodeMatching {
        NodeMatching { forward: self.backward.clone(), backward: self.forward.clone() }
    }

    /// Identity matching over every node of `ast`.
    pub fn identity(ast: &Ast) -> NodeMatching {
        let mut m = NodeMatching::new();
        for n in ast.nodes() {
            m.insert(n.id, n.id);
        }
        m
    }
}

/// Whether two spans occupy corresponding places in the two versions.
///
/// Unchanged lines inside either span must map into the other span. Spans
/// made only of changed lines correspond when they sit in the same hunk.
pub(crate) struct SpanOracle<'a> {
    diff: &'a LineDiff,
    inverse: BTreeMap<u32, u32>,
}

impl<'a> SpanOracle<'a> {
    pub fn new(diff: &'a LineDiff) -> Self {
        Self { diff, inverse: diff.line_map.iter().map(|(&b, &a)| (a, b)).collect() }
    }

    pub fn compatible(&self, before: Span, after: Span) -> bool {
        let mut any = false;
        for (_, a) in self.diff.line_map.range(before.start..=before.end) {
            any = true;
            if !after.contains_line(*a) {
                return false;
            }
        }
        for (_, b) in self.inverse.range(after.start..=after.end) {
            any = true;
            if !before.contains_line(*b) {
                return false;
            }
        }
        any || self.diff.gap_before(before.start) == self.diff.gap_after(after.start)
    }
}

/// Top-down greedy matching anchored on the line diff.
///
/// Two nodes match when they have the same kind and label, their parents are
/// matched (or both are roots) and their spans correspond under the line
/// diff. Children are paired left to right, each after-child taking the first
/// compatible before-child to the right of the previous match.
pub fn match_asts(before: &Ast, after: &Ast, diff: &LineDiff) -> NodeMatching {
    let oracle = SpanOracle::new(diff);
    let mut matching = NodeMatching::new();
    let compatible = |b: NodeId, a: NodeId| {
        let (nb, na) = (before.node(b), after.node(a));
        nb.kind == na.kind && nb.label == na.label && oracle.compatible(nb.span, na.span)
    };

    if before.is_empty() || after.is_empty() || !compatible(before.root(), after.root()) {
        return matching;
    }
    matching.insert(before.root(), after.root());
    let mut queue = VecDeque::from([(before.root(), after.root())]);
    while let Some((b, a)) = queue.pop_front() {
        let bc = &before.node(b).children;
        let mut next = 0;
        for &ac in &after.node(a).children {
            if let Some(k) = (next..bc.len()).find(|&k| compatible(bc[k], ac)) {
                matching.insert(bc[k], ac);
                queue.push_back((bc[k], ac));
                next = k + 1;
            }
        }
    }
    matching
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{parse_source, NodeKind, Version};
    use crate::slice::diff_lines;

    fn run(b: &str, a: &str) -> (Ast, Ast, NodeMatching) {
        let before = parse_source(b, Version::Before).unwrap();
        let after = parse_source(a, Version::After).unwrap();
        let m = match_asts(&before, &after, &diff_lines(b, a));
        (before, after, m)
    }

    #[test]
    fn identical_versions_match_everything() {
        let src = "int f(int a) {\n  if (a > 1)\n    return a;\n  return 0;\n}\n";
        let (before, after, m) = run(src, src);
        assert_eq!(m.len(), before.len());
        for (b, a) in m.pairs() {
            assert_eq!(b, a);
        }
        assert_eq!(m, NodeMatching::identity(&after));
    }

    #[test]
    fn changed_literal_is_not_matched() {
        let (before, after, m) = run("void f(){\n  x=1;\n}", "void f(){\n  x=2;\n}");
        let find = |ast: &Ast, kind: NodeKind| ast.nodes().find(|n| n.kind == kind).unwrap().id;
        let (ab, aa) = (find(&before, NodeKind::Assign), find(&after, NodeKind::Assign));
        assert_eq!(m.after_of(ab), Some(aa));
        let (ib, ia) = (find(&before, NodeKind::Identifier), find(&after, NodeKind::Identifier));
        assert_eq!(m.after_of(ib), Some(ia));
        let (lb, la) = (find(&before, NodeKind::Literal), find(&after, NodeKind::Literal));
        assert_eq!(m.after_of(lb), None);
        assert_eq!(m.before_of(la), None);
    }

    #[test]
    fn matching_respects_kind_and_ancestry() {
        let (before, after, m) = run(
            "int f(int n){\n  int s = 0;\n  s = n * 2;\n  return s;\n}",
            "int f(int n){\n  int s = 1;\n  if (n)\n    s = n * 2;\n  return s;\n}",
        );
        for (b, a) in m.pairs() {
            assert_eq!(before.node(b).kind, after.node(a).kind);
            match (before.parent(b), after.parent(a)) {
                (Some(pb), Some(pa)) => assert_eq!(m.after_of(pb), Some(pa)),
                (None, None) => {}
                _ => panic!("root matched to non-root"),
            }
        }
        // The moved assignment changes parent, so it is not matched.
        let moved = before.nodes().find(|n| n.kind == NodeKind::Assign).unwrap().id;
        assert_eq!(m.after_of(moved), None);
    }

    #[test]
    fn pure_insertion_keeps_context_matched() {
        let (before, _after, m) =
            run("void f(){\n  a = 1;\n  b = 2;\n}", "void f(){\n  a = 1;\n  log_it();\n  b = 2;\n}");
        assert_eq!(m.len(), before.len());
    }
}

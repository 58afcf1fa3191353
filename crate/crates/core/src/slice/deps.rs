//! Statement-level control and data dependencies.
//!
//! Control dependence is syntactic: a control statement governs the
//! statements directly in its body or else branch. Data dependence comes from
//! reaching definitions over a simplified control-flow graph in which blocks
//! run sequentially, both arms of an `if` are possible, and loop bodies may
//! repeat. `goto`, `break`/`continue` targets and short-circuit evaluation are
//! not modelled.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::ast::{Ast, NodeId, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepKind {
    ControlDep,
    DataDep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DepEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: DepKind,
}

#[derive(Debug, Clone, Default)]
pub struct DependencyGraph {
    statements: Vec<NodeId>,
    edges: BTreeSet<DepEdge>,
}

impl DependencyGraph {
    pub fn statements(&self) -> &[NodeId] {
        &self.statements
    }

    pub fn edges(&self) -> impl Iterator<Item = &DepEdge> {
        self.edges.iter()
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId, kind: DepKind) -> bool {
        self.edges.contains(&DepEdge { from, to, kind })
    }

    pub fn edges_of_kind(&self, kind: DepKind) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().filter(move |e| e.kind == kind).map(|e| (e.from, e.to))
    }

    /// Neighbours in either direction, with the kind of the connecting edge.
    pub fn undirected_adjacency(&self) -> BTreeMap<NodeId, Vec<(NodeId, DepKind)>> {
        let mut adj: BTreeMap<NodeId, Vec<(NodeId, DepKind)>> = BTreeMap::new();
        for e in &self.edges {
            adj.entry(e.from).or_default().push((e.to, e.kind));
            adj.entry(e.to).or_default().push((e.from, e.kind));
        }
        for list in adj.values_mut() {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }
}

/// Variables a statement writes and reads through its own tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefUse {
    /// Written variables; `true` marks a whole-variable (killing) write.
    pub defs: BTreeMap<String, bool>,
    pub uses: BTreeSet<String>,
}

impl DefUse {
    fn def(&mut self, name: &str, strong: bool) {
        let entry = self.defs.entry(name.to_string()).or_insert(strong);
        *entry |= strong;
    }
}

pub fn def_use(ast: &Ast, stmt: NodeId) -> DefUse {
    let mut du = DefUse::default();
    let node = ast.node(stmt);
    if matches!(node.kind, NodeKind::Decl) {
        for &d in &node.children {
            walk(ast, d, &mut du);
        }
        return du;
    }
    // Control statements contribute only their header expressions.
    let header: Vec<NodeId> = match node.kind {
        NodeKind::IfStmt | NodeKind::WhileStmt => node.children.first().copied().into_iter().collect(),
        NodeKind::DoWhileStmt => node.children.last().copied().into_iter().collect(),
        NodeKind::ForStmt => node.children.iter().take(3).copied().collect(),
        _ => vec![stmt],
    };
    for h in header {
        if ast.contains(h) && !ast.is_statement(h) || h == stmt {
            walk(ast, h, &mut du);
        }
    }
    du
}

fn walk(ast: &Ast, id: NodeId, du: &mut DefUse) {
    let node = ast.node(id);
    match node.kind {
        NodeKind::Identifier => {
            du.uses.insert(node.label.clone());
        }
        NodeKind::Decl => node.children.iter().for_each(|&c| walk(ast, c, du)),
        NodeKind::Declarator => {
            let mut named = false;
            for &c in &node.children {
                let child = ast.node(c);
                match child.kind {
                    NodeKind::Identifier if !named => {
                        named = true;
                        du.def(&child.label, true);
                    }
                    NodeKind::Pointer | NodeKind::ParamList => {}
                    _ => walk(ast, c, du),
                }
            }
        }
        NodeKind::Assign => {
            let (lhs, rhs) = (node.children[0], node.children[1]);
            if node.label != "=" {
                walk(ast, lhs, du);
            }
            write_target(ast, lhs, du);
            walk(ast, rhs, du);
        }
        NodeKind::PostfixExpr => {
            walk(ast, node.children[0], du);
            write_target(ast, node.children[0], du);
        }
        NodeKind::UnaryExpr if node.label == "++" || node.label == "--" => {
            walk(ast, node.children[0], du);
            write_target(ast, node.children[0], du);
        }
        NodeKind::CallExpr => {
            for (i, &c) in node.children.iter().enumerate() {
                if i == 0 && ast.node(c).kind == NodeKind::Identifier {
                    continue;
                }
                walk(ast, c, du);
            }
        }
        NodeKind::MemberExpr => walk(ast, node.children[0], du),
        NodeKind::TypeName | NodeKind::Pointer | NodeKind::Literal | NodeKind::Empty => {}
        _ => {
            for &c in &node.children {
                if !ast.is_statement(c) && ast.node(c).kind != NodeKind::Block {
                    walk(ast, c, du);
                }
            }
        }
    }
}

/// Records the write performed through an assignment target. Subscripts,
/// field accesses and dereferences define their base variable weakly and
/// read any index expressions.
fn write_target(ast: &Ast, lhs: NodeId, du: &mut DefUse) {
    let node = ast.node(lhs);
    match node.kind {
        NodeKind::Identifier => du.def(&node.label, true),
        NodeKind::SubscriptExpr => {
            walk(ast, node.children[1], du);
            if let Some(base) = base_var(ast, node.children[0], du) {
                du.def(&base, false);
            }
        }
        NodeKind::MemberExpr => {
            if let Some(base) = base_var(ast, node.children[0], du) {
                du.def(&base, false);
            }
        }
        NodeKind::UnaryExpr if node.label == "*" => {
            if let Some(base) = base_var(ast, node.children[0], du) {
                du.def(&base, false);
            }
        }
        _ => walk(ast, lhs, du),
    }
}

fn base_var(ast: &Ast, id: NodeId, du: &mut DefUse) -> Option<String> {
    let node = ast.node(id);
    match node.kind {
        NodeKind::Identifier => Some(node.label.clone()),
        NodeKind::SubscriptExpr => {
            walk(ast, node.children[1], du);
            base_var(ast, node.children[0], du)
        }
        NodeKind::MemberExpr => base_var(ast, node.children[0], du),
        NodeKind::UnaryExpr if node.label == "*" => base_var(ast, node.children[0], du),
        _ => {
            walk(ast, id, du);
            None
        }
    }
}

/// Statements nested in a body slot, looking through plain blocks.
fn body_statements(ast: &Ast, slot: NodeId, out: &mut Vec<NodeId>) {
    let node = ast.node(slot);
    match node.kind {
        NodeKind::Block => node.children.iter().for_each(|&c| body_statements(ast, c, out)),
        NodeKind::Empty => {}
        _ if ast.is_statement(slot) => out.push(slot),
        _ => {}
    }
}

#[derive(Default)]
struct Cfg {
    preds: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Cfg {
    fn link(&mut self, from: &[NodeId], to: NodeId) {
        self.preds.entry(to).or_default().extend(from.iter().copied());
    }

    /// Threads `stmts` after `preds`; returns the exits of the sequence.
    fn sequence(&mut self, ast: &Ast, stmts: &[NodeId], preds: Vec<NodeId>) -> Vec<NodeId> {
        let mut current = preds;
        for &s in stmts {
            self.link(&current, s);
            self.preds.entry(s).or_default();
            current = self.statement(ast, s);
        }
        current
    }

    fn statement(&mut self, ast: &Ast, s: NodeId) -> Vec<NodeId> {
        let node = ast.node(s);
        let slots = |range: std::ops::RangeFrom<usize>| -> Vec<NodeId> {
            let mut out = Vec::new();
            for &c in node.children.get(range).unwrap_or(&[]) {
                body_statements(ast, c, &mut out);
            }
            out
        };
        match node.kind {
            NodeKind::IfStmt => {
                let then: Vec<NodeId> = node.children.get(1).map_or_else(Vec::new, |&c| {
                    let mut v = Vec::new();
                    body_statements(ast, c, &mut v);
                    v
                });
                let mut exits = self.sequence(ast, &then, vec![s]);
                match node.children.get(2) {
                    Some(&e) => {
                        let mut other = Vec::new();
                        body_statements(ast, e, &mut other);
                        exits.extend(self.sequence(ast, &other, vec![s]));
                    }
                    None => exits.push(s),
                }
                exits.sort_unstable();
                exits.dedup();
                exits
            }
            NodeKind::WhileStmt | NodeKind::ForStmt | NodeKind::DoWhileStmt => {
                let body = match node.kind {
                    NodeKind::WhileStmt => slots(1..),
                    NodeKind::ForStmt => slots(3..),
                    _ => {
                        let mut v = Vec::new();
                        if let Some(&b) = node.children.first() {
                            body_statements(ast, b, &mut v);
                        }
                        v
                    }
                };
                let exits = self.sequence(ast, &body, vec![s]);
                self.link(&exits, s);
                vec![s]
            }
            NodeKind::Return => Vec::new(),
            _ => vec![s],
        }
    }
}

type Definition = (NodeId, String);

fn reaching_definitions(
    cfg: &Cfg,
    order: &[NodeId],
    du: &BTreeMap<NodeId, DefUse>,
) -> BTreeMap<NodeId, BTreeSet<Definition>> {
    let mut succs: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (&s, preds) in &cfg.preds {
        for &p in preds {
            succs.entry(p).or_default().push(s);
        }
    }
    let mut out: BTreeMap<NodeId, BTreeSet<Definition>> = order.iter().map(|&s| (s, BTreeSet::new())).collect();
    let mut inn = out.clone();
    let mut work: VecDeque<NodeId> = order.iter().copied().collect();
    let mut queued: BTreeSet<NodeId> = order.iter().copied().collect();
    while let Some(s) = work.pop_front() {
        queued.remove(&s);
        let mut in_set = BTreeSet::new();
        for p in cfg.preds.get(&s).into_iter().flatten() {
            in_set.extend(out[p].iter().cloned());
        }
        let defs = &du[&s].defs;
        let mut out_set: BTreeSet<Definition> =
            in_set.iter().filter(|(_, v)| defs.get(v) != Some(&true)).cloned().collect();
        out_set.extend(defs.keys().map(|v| (s, v.clone())));
        inn.insert(s, in_set);
        if out_set != out[&s] {
            out.insert(s, out_set);
            for &n in succs.get(&s).into_iter().flatten() {
                if queued.insert(n) {
                    work.push_back(n);
                }
            }
        }
    }
    inn
}

pub fn build_dependency_graph(ast: &Ast) -> DependencyGraph {
    let statements = crate::ast::statements_of(ast);
    let mut edges = BTreeSet::new();

    for &s in &statements {
        if let Some(ctrl) = ast.ancestors(s).find(|&a| ast.is_statement(a)) {
            if ast.node(ctrl).kind.is_control() {
                edges.insert(DepEdge { from: ctrl, to: s, kind: DepKind::ControlDep });
            }
        }
    }

    let du: BTreeMap<NodeId, DefUse> = statements.iter().map(|&s| (s, def_use(ast, s))).collect();

    // One flow region per function body, plus one for file-scope declarations.
    let mut regions: Vec<Vec<NodeId>> = Vec::new();
    if ast.contains(ast.root()) {
        let root = ast.node(ast.root());
        let globals: Vec<NodeId> = root.children.iter().copied().filter(|&c| ast.is_statement(c)).collect();
        regions.push(globals);
        for &f in &root.children {
            let func = ast.node(f);
            if func.kind != NodeKind::FunctionDef {
                continue;
            }
            let mut body = Vec::new();
            if let Some(&b) = func.children.iter().find(|&&c| ast.node(c).kind == NodeKind::Block) {
                body_statements(ast, b, &mut body);
            }
            regions.push(body);
        }
    }

    for region in regions {
        let mut cfg = Cfg::default();
        cfg.sequence(ast, &region, Vec::new());
        let order: Vec<NodeId> = cfg.preds.keys().copied().collect();
        let reaching = reaching_definitions(&cfg, &order, &du);
        for (&s, defs) in &reaching {
            for (d, v) in defs {
                if *d != s && du[&s].uses.contains(v) {
                    edges.insert(DepEdge { from: *d, to: s, kind: DepKind::DataDep });
                }
            }
        }
    }

    DependencyGraph { statements, edges }
}

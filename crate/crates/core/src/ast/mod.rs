//! Typed syntax trees for a C subset.
//!
//! Node ids are assigned in preorder, so a parent's id is always smaller than
//! the ids of its descendants. Sliced trees (see [`Ast::project`]) keep the
//! ids of the full tree they were cut from, which lets later stages relate
//! nodes across different slices of the same file.

mod lexer;
mod parser;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use parser::parse_source;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at {line}:{column}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: u32, column: u32, message: impl Into<String>) -> Self {
        Self { line, column, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Version {
    Before,
    After,
}

impl Version {
    pub fn flip(self) -> Self {
        match self {
            Version::Before => Version::After,
            Version::After => Version::Before,
        }
    }
}

/// Syntactic category of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    TranslationUnit,
    FunctionDef,
    ParamList,
    Param,
    TypeName,
    Pointer,
    Block,
    Decl,
    Declarator,
    InitList,
    IfStmt,
    WhileStmt,
    DoWhileStmt,
    ForStmt,
    Return,
    Break,
    Continue,
    Empty,
    Assign,
    BinaryExpr,
    UnaryExpr,
    PostfixExpr,
    CallExpr,
    SubscriptExpr,
    MemberExpr,
    CondExpr,
    CastExpr,
    SizeofExpr,
    Identifier,
    Literal,
    /// Synthetic root joining the per-file graphs of one commit.
    CommitRoot,
}

impl NodeKind {
    pub const ALL: [NodeKind; 31] = [
        NodeKind::TranslationUnit,
        NodeKind::FunctionDef,
        NodeKind::ParamList,
        NodeKind::Param,
        NodeKind::TypeName,
        NodeKind::Pointer,
        NodeKind::Block,
        NodeKind::Decl,
        NodeKind::Declarator,
        NodeKind::InitList,
        NodeKind::IfStmt,
        NodeKind::WhileStmt,
        NodeKind::DoWhileStmt,
        NodeKind::ForStmt,
        NodeKind::Return,
        NodeKind::Break,
        NodeKind::Continue,
        NodeKind::Empty,
        NodeKind::Assign,
        NodeKind::BinaryExpr,
        NodeKind::UnaryExpr,
        NodeKind::PostfixExpr,
        NodeKind::CallExpr,
        NodeKind::SubscriptExpr,
        NodeKind::MemberExpr,
        NodeKind::CondExpr,
        NodeKind::CastExpr,
        NodeKind::SizeofExpr,
        NodeKind::Identifier,
        NodeKind::Literal,
        NodeKind::CommitRoot,
    ];

    /// Dense index used by embedding tables.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::TranslationUnit => "translation-unit",
            NodeKind::FunctionDef => "function-def",
            NodeKind::ParamList => "param-list",
            NodeKind::Param => "param",
            NodeKind::TypeName => "type-name",
            NodeKind::Pointer => "pointer",
            NodeKind::Block => "block",
            NodeKind::Decl => "decl",
            NodeKind::Declarator => "declarator",
            NodeKind::InitList => "init-list",
            NodeKind::IfStmt => "if-stmt",
            NodeKind::WhileStmt => "while-stmt",
            NodeKind::DoWhileStmt => "do-while-stmt",
            NodeKind::ForStmt => "for-stmt",
            NodeKind::Return => "return",
            NodeKind::Break => "break",
            NodeKind::Continue => "continue",
            NodeKind::Empty => "empty",
            NodeKind::Assign => "assign",
            NodeKind::BinaryExpr => "binary-expr",
            NodeKind::UnaryExpr => "unary-expr",
            NodeKind::PostfixExpr => "postfix-expr",
            NodeKind::CallExpr => "call-expr",
            NodeKind::SubscriptExpr => "subscript-expr",
            NodeKind::MemberExpr => "member-expr",
            NodeKind::CondExpr => "cond-expr",
            NodeKind::CastExpr => "cast-expr",
            NodeKind::SizeofExpr => "sizeof-expr",
            NodeKind::Identifier => "identifier",
            NodeKind::Literal => "literal",
            NodeKind::CommitRoot => "commit-root",
        }
    }

    pub fn is_control(self) -> bool {
        matches!(self, NodeKind::IfStmt | NodeKind::WhileStmt | NodeKind::DoWhileStmt | NodeKind::ForStmt)
    }

    pub fn is_loop(self) -> bool {
        matches!(self, NodeKind::WhileStmt | NodeKind::DoWhileStmt | NodeKind::ForStmt)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inclusive, 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: u32,
    pub end: u32,
}

impl Span {
    pub fn new(start: u32, end: u32) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn line(line: u32) -> Self {
        Self { start: line, end: line }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn contains_line(&self, line: u32) -> bool {
        self.start <= line && line <= self.end
    }

    pub fn lines(&self) -> impl Iterator<Item = u32> {
        self.start..=self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: String,
    pub span: Span,
    pub children: Vec<NodeId>,
    /// Set by the parser from the node's syntactic position.
    pub statement: bool,
}

impl AstNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    version: Version,
    root: NodeId,
    nodes: BTreeMap<NodeId, AstNode>,
    parents: BTreeMap<NodeId, NodeId>,
}

impl Ast {
    pub(crate) fn from_nodes(version: Version, root: NodeId, nodes: BTreeMap<NodeId, AstNode>) -> Self {
        let mut parents = BTreeMap::new();
        for node in nodes.values() {
            for &c in &node.children {
                parents.insert(c, node.id);
            }
        }
        Self { version, root, nodes, parents }
    }

    pub fn version(&self) -> Version {
        self.version
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &AstNode {
        &self.nodes[&id]
    }

    pub fn get(&self, id: NodeId) -> Option<&AstNode> {
        self.nodes.get(&id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    /// Nodes in id (preorder) order.
    pub fn nodes(&self) -> impl Iterator<Item = &AstNode> {
        self.nodes.values()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parents.get(&id).copied()
    }

    /// Parent→child pairs in preorder.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes.values().flat_map(|n| n.children.iter().map(move |&c| (n.id, c)))
    }

    pub fn edge_count(&self) -> usize {
        self.parents.len()
    }

    /// Preorder walk starting at `from`.
    pub fn preorder(&self, from: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![from];
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.node(id).children.iter().rev());
        }
        out
    }

    pub fn ancestors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::successors(self.parent(id), move |&p| self.parent(p))
    }

    /// Whether `id` sits in statement position in the full tree it was parsed from.
    pub fn is_statement(&self, id: NodeId) -> bool {
        self.node(id).statement
    }

    /// Positional statement rule, evaluated once on a complete tree.
    pub(crate) fn mark_statements(&mut self) {
        let flags: Vec<(NodeId, bool)> = self
            .nodes
            .values()
            .map(|node| {
                let excluded = matches!(
                    node.kind,
                    NodeKind::Block | NodeKind::Empty | NodeKind::FunctionDef | NodeKind::TranslationUnit
                );
                let positional = self.parent(node.id).is_some_and(|parent| {
                    let p = self.node(parent);
                    let slot = p.children.iter().position(|&c| c == node.id);
                    match p.kind {
                        NodeKind::Block => true,
                        NodeKind::TranslationUnit => node.kind == NodeKind::Decl,
                        NodeKind::IfStmt => slot.is_some_and(|s| s >= 1),
                        NodeKind::WhileStmt => slot == Some(1),
                        NodeKind::DoWhileStmt => slot == Some(0),
                        NodeKind::ForStmt => slot == Some(3),
                        _ => false,
                    }
                });
                (node.id, !excluded && positional)
            })
            .collect();
        for (id, flag) in flags {
            self.nodes.get_mut(&id).expect("node exists").statement = flag;
        }
    }

    /// The nearest statement or function definition at or above `id`.
    pub fn owner(&self, id: NodeId) -> Option<NodeId> {
        std::iter::once(id)
            .chain(self.ancestors(id))
            .find(|&a| self.is_statement(a) || self.node(a).kind == NodeKind::FunctionDef)
    }

    /// Lines occupied by a statement's own tokens, excluding nested statements
    /// and block braces. For simple statements this is the whole span.
    pub fn own_lines(&self, stmt: NodeId) -> BTreeSet<u32> {
        let mut lines = BTreeSet::from([self.node(stmt).span.start]);
        for id in self.owned_nodes(stmt) {
            let node = self.node(id);
            if node.is_leaf() {
                lines.extend(node.span.lines());
            }
        }
        lines
    }

    /// Nodes belonging to `stmt` itself: its subtree without nested
    /// statements and blocks. For a function definition this is its header.
    pub fn owned_nodes(&self, stmt: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![stmt];
        while let Some(id) = stack.pop() {
            let node = self.node(id);
            if id != stmt && (self.is_statement(id) || node.kind == NodeKind::Block) {
                continue;
            }
            out.push(id);
            stack.extend(node.children.iter().rev());
        }
        out
    }

    /// Projects the tree onto the nodes in `keep`. `keep` must be closed
    /// under ancestors; the result keeps the original ids.
    pub fn project(&self, keep: &BTreeSet<NodeId>) -> Ast {
        let nodes = keep
            .iter()
            .map(|&id| {
                let mut node = self.node(id).clone();
                node.children.retain(|c| keep.contains(c));
                (id, node)
            })
            .collect();
        Ast::from_nodes(self.version, self.root, nodes)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<_> = self
            .nodes
            .values()
            .map(|n| {
                serde_json::json!({
                    "id": n.id,
                    "kind": n.kind,
                    "label": n.label,
                    "span": [n.span.start, n.span.end],
                    "children": n.children,
                })
            })
            .collect();
        serde_json::json!({ "root": self.root, "nodes": nodes })
    }
}

/// Statement nodes in source order.
pub fn statements_of(ast: &Ast) -> Vec<NodeId> {
    if !ast.contains(ast.root()) {
        return Vec::new();
    }
    ast.preorder(ast.root()).into_iter().filter(|&id| ast.is_statement(id)).collect()
}

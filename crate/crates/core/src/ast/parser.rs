use std::collections::BTreeMap;

use super::lexer::{tokenize, TokKind, Token};
use super::{Ast, AstNode, NodeId, NodeKind, ParseError, Span, Version};

/// Parses a C-subset translation unit. Ids are assigned in preorder.
pub fn parse_source(source: &str, version: Version) -> Result<Ast, ParseError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser { tokens, pos: 0, last_line: 1 };
    let tree = parser.translation_unit(source)?;

    let mut nodes = BTreeMap::new();
    flatten(tree, &mut nodes);
    let mut ast = Ast::from_nodes(version, NodeId(0), nodes);
    ast.mark_statements();
    Ok(ast)
}

struct Tree {
    kind: NodeKind,
    label: String,
    span: Span,
    children: Vec<Tree>,
}

impl Tree {
    fn leaf(kind: NodeKind, tok: &Token) -> Tree {
        Tree { kind, label: tok.text.clone(), span: Span::line(tok.line), children: Vec::new() }
    }
}

fn flatten(tree: Tree, nodes: &mut BTreeMap<NodeId, AstNode>) -> NodeId {
    let id = NodeId(nodes.len() as u32);
    nodes.insert(
        id,
        AstNode { id, kind: tree.kind, label: tree.label, span: tree.span, children: Vec::new(), statement: false },
    );
    let children: Vec<NodeId> = tree.children.into_iter().map(|c| flatten(c, nodes)).collect();
    nodes.get_mut(&id).expect("just inserted").children = children;
    id
}

const TYPE_WORDS: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "const", "static", "extern",
    "volatile", "register",
];

// Common typedef names accepted as types without typedef resolution.
const TYPEDEF_NAMES: &[&str] = &[
    "size_t", "ssize_t", "int8_t", "int16_t", "int32_t", "int64_t", "uint8_t", "uint16_t", "uint32_t", "uint64_t",
    "bool", "FILE",
];

const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "<<=", ">>=", "&=", "|=", "^="];

// Binary operators by precedence level, loosest first.
const BINARY_LEVELS: &[&[&str]] = &[
    &["||"],
    &["&&"],
    &["|"],
    &["^"],
    &["&"],
    &["==", "!="],
    &["<", ">", "<=", ">="],
    &["<<", ">>"],
    &["+", "-"],
    &["*", "/", "%"],
];

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    last_line: u32,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, k: usize) -> &Token {
        let i = (self.pos + k).min(self.tokens.len() - 1);
        &self.tokens[i]
    }

    fn at(&self, text: &str) -> bool {
        self.peek().is(text)
    }

    fn next(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if tok.kind != TokKind::Eof {
            self.pos += 1;
            self.last_line = tok.line;
        }
        tok
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.at(text) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, text: &str) -> PResult<Token> {
        if self.at(text) {
            Ok(self.next())
        } else {
            Err(self.error(format!("expected `{text}`")))
        }
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        let tok = self.peek();
        let found = if tok.kind == TokKind::Eof { "end of input".to_string() } else { format!("`{}`", tok.text) };
        ParseError::new(tok.line, tok.col, format!("{}, found {found}", msg.into()))
    }

    fn unsupported(&self, what: &str) -> ParseError {
        let tok = self.peek();
        ParseError::new(tok.line, tok.col, format!("unsupported syntax: {what}"))
    }

    fn node(&self, kind: NodeKind, label: impl Into<String>, start: u32, children: Vec<Tree>) -> Tree {
        Tree { kind, label: label.into(), span: Span::new(start, self.last_line.max(start)), children }
    }

    fn starts_type(&self) -> bool {
        let tok = self.peek();
        match tok.kind {
            TokKind::Keyword => TYPE_WORDS.contains(&tok.text.as_str()) || tok.text == "struct",
            TokKind::Ident => {
                TYPEDEF_NAMES.contains(&tok.text.as_str()) && matches!(self.peek_at(1).kind, TokKind::Ident)
                    || TYPEDEF_NAMES.contains(&tok.text.as_str()) && self.peek_at(1).is("*")
            }
            _ => false,
        }
    }

    fn translation_unit(&mut self, source: &str) -> PResult<Tree> {
        let mut items = Vec::new();
        while self.peek().kind != TokKind::Eof {
            items.push(self.external_decl()?);
        }
        let last = source.lines().count().max(1) as u32;
        Ok(Tree { kind: NodeKind::TranslationUnit, label: String::new(), span: Span::new(1, last), children: items })
    }

    fn type_name(&mut self) -> PResult<Tree> {
        let start = self.peek().line;
        let mut words = Vec::new();
        loop {
            let tok = self.peek();
            let accept = match tok.kind {
                TokKind::Keyword if TYPE_WORDS.contains(&tok.text.as_str()) => true,
                TokKind::Keyword if tok.text == "struct" => {
                    let s = self.next();
                    let name = self.peek().clone();
                    if name.kind != TokKind::Ident {
                        return Err(self.error("expected struct name"));
                    }
                    if self.peek_at(1).is("{") {
                        return Err(self.unsupported("struct definitions"));
                    }
                    self.next();
                    words.push(format!("{} {}", s.text, name.text));
                    continue;
                }
                TokKind::Ident if words.is_empty() && TYPEDEF_NAMES.contains(&tok.text.as_str()) => true,
                _ => false,
            };
            if !accept {
                break;
            }
            words.push(self.next().text);
        }
        if words.is_empty() {
            return Err(self.error("expected a type"));
        }
        Ok(self.node(NodeKind::TypeName, words.join(" "), start, Vec::new()))
    }

    fn pointers(&mut self) -> Vec<Tree> {
        let mut out = Vec::new();
        while self.at("*") {
            let tok = self.next();
            out.push(Tree::leaf(NodeKind::Pointer, &tok));
            while self.eat("const") {}
        }
        out
    }

    fn identifier(&mut self) -> PResult<Tree> {
        if self.peek().kind != TokKind::Ident {
            return Err(self.error("expected identifier"));
        }
        let tok = self.next();
        Ok(Tree::leaf(NodeKind::Identifier, &tok))
    }

    fn external_decl(&mut self) -> PResult<Tree> {
        if self.peek().is("typedef") {
            return Err(self.unsupported("typedef"));
        }
        let start = self.peek().line;
        let ty = self.type_name()?;
        let save = self.pos;
        let stars = self.pointers();
        if self.peek().kind == TokKind::Ident && self.peek_at(1).is("(") {
            let name = self.identifier()?;
            let params = self.param_list()?;
            if self.at("{") {
                let body = self.block()?;
                let mut children = vec![ty];
                children.extend(stars);
                children.extend([name, params, body]);
                return Ok(self.node(NodeKind::FunctionDef, "", start, children));
            }
            // Prototype: a declaration whose declarator carries a parameter list.
            self.expect(";")?;
            let mut dchildren = stars;
            dchildren.extend([name, params]);
            let decl_start = dchildren[0].span.start;
            let declarator = self.node(NodeKind::Declarator, "", decl_start, dchildren);
            return Ok(self.node(NodeKind::Decl, "", start, vec![ty, declarator]));
        }
        self.pos = save;
        self.decl_rest(start, ty)
    }

    fn param_list(&mut self) -> PResult<Tree> {
        let start = self.expect("(")?.line;
        let mut params = Vec::new();
        if self.at("void") && self.peek_at(1).is(")") {
            self.next();
        } else if !self.at(")") {
            loop {
                if self.at("...") {
                    return Err(self.unsupported("variadic parameters"));
                }
                let pstart = self.peek().line;
                let ty = self.type_name()?;
                let mut children = vec![ty];
                children.extend(self.pointers());
                if self.peek().kind == TokKind::Ident {
                    children.push(self.identifier()?);
                }
                while self.eat("[") {
                    if !self.at("]") {
                        children.push(self.expr()?);
                    }
                    self.expect("]")?;
                }
                params.push(self.node(NodeKind::Param, "", pstart, children));
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(self.node(NodeKind::ParamList, "", start, params))
    }

    /// Remainder of a declaration after its type.
    fn decl_rest(&mut self, start: u32, ty: Tree) -> PResult<Tree> {
        let mut children = vec![ty];
        loop {
            let dstart = self.peek().line;
            let mut dchildren = self.pointers();
            dchildren.push(self.identifier()?);
            while self.eat("[") {
                if !self.at("]") {
                    dchildren.push(self.expr()?);
                }
                self.expect("]")?;
            }
            if self.eat("=") {
                dchildren.push(self.initializer()?);
            }
            children.push(self.node(NodeKind::Declarator, "", dstart, dchildren));
            if !self.eat(",") {
                break;
            }
        }
        self.expect(";")?;
        Ok(self.node(NodeKind::Decl, "", start, children))
    }

    fn initializer(&mut self) -> PResult<Tree> {
        if !self.at("{") {
            return self.assignment();
        }
        let start = self.next().line;
        let mut items = Vec::new();
        while !self.at("}") {
            items.push(self.initializer()?);
            if !self.eat(",") {
                break;
            }
        }
        self.expect("}")?;
        Ok(self.node(NodeKind::InitList, "", start, items))
    }

    fn block(&mut self) -> PResult<Tree> {
        let start = self.expect("{")?.line;
        let mut stmts = Vec::new();
        while !self.at("}") {
            if self.peek().kind == TokKind::Eof {
                return Err(self.error("expected `}`"));
            }
            stmts.push(self.statement()?);
        }
        self.expect("}")?;
        Ok(self.node(NodeKind::Block, "", start, stmts))
    }

    fn paren_expr(&mut self) -> PResult<Tree> {
        self.expect("(")?;
        let e = self.expr()?;
        self.expect(")")?;
        Ok(e)
    }

    fn statement(&mut self) -> PResult<Tree> {
        let tok = self.peek().clone();
        let start = tok.line;
        if tok.kind == TokKind::Keyword {
            match tok.text.as_str() {
                "if" => {
                    self.next();
                    let cond = self.paren_expr()?;
                    let then = self.statement()?;
                    let mut children = vec![cond, then];
                    if self.eat("else") {
                        children.push(self.statement()?);
                    }
                    return Ok(self.node(NodeKind::IfStmt, "", start, children));
                }
                "while" => {
                    self.next();
                    let cond = self.paren_expr()?;
                    let body = self.statement()?;
                    return Ok(self.node(NodeKind::WhileStmt, "", start, vec![cond, body]));
                }
                "do" => {
                    self.next();
                    let body = self.statement()?;
                    self.expect("while")?;
                    let cond = self.paren_expr()?;
                    self.expect(";")?;
                    return Ok(self.node(NodeKind::DoWhileStmt, "", start, vec![body, cond]));
                }
                "for" => {
                    self.next();
                    self.expect("(")?;
                    let init = if self.at(";") {
                        let t = self.next();
                        Tree::leaf(NodeKind::Empty, &Token { text: String::new(), ..t })
                    } else if self.starts_type() {
                        let dstart = self.peek().line;
                        let ty = self.type_name()?;
                        self.decl_rest(dstart, ty)?
                    } else {
                        let e = self.expr()?;
                        self.expect(";")?;
                        e
                    };
                    let cond = if self.at(";") { empty_at(self.peek()) } else { self.expr()? };
                    self.expect(";")?;
                    let step = if self.at(")") { empty_at(self.peek()) } else { self.expr()? };
                    self.expect(")")?;
                    let body = self.statement()?;
                    return Ok(self.node(NodeKind::ForStmt, "", start, vec![init, cond, step, body]));
                }
                "return" => {
                    self.next();
                    let mut children = Vec::new();
                    if !self.at(";") {
                        children.push(self.expr()?);
                    }
                    self.expect(";")?;
                    return Ok(self.node(NodeKind::Return, "", start, children));
                }
                "break" | "continue" => {
                    self.next();
                    self.expect(";")?;
                    let kind = if tok.text == "break" { NodeKind::Break } else { NodeKind::Continue };
                    return Ok(self.node(kind, "", start, Vec::new()));
                }
                "goto" | "switch" | "case" | "default" | "typedef" | "union" | "enum" => {
                    return Err(self.unsupported(&tok.text));
                }
                _ => {}
            }
        }
        if self.at("{") {
            return self.block();
        }
        if self.at(";") {
            let t = self.next();
            return Ok(empty_at(&t));
        }
        if self.starts_type() {
            let ty = self.type_name()?;
            return self.decl_rest(start, ty);
        }
        let e = self.expr()?;
        self.expect(";")?;
        // Extend the span to the terminating semicolon.
        Ok(Tree { span: Span::new(e.span.start, self.last_line.max(e.span.start)), ..e })
    }

    fn expr(&mut self) -> PResult<Tree> {
        let first = self.assignment()?;
        if !self.at(",") {
            return Ok(first);
        }
        let start = first.span.start;
        let mut children = vec![first];
        while self.eat(",") {
            children.push(self.assignment()?);
        }
        Ok(self.node(NodeKind::BinaryExpr, ",", start, children))
    }

    fn assignment(&mut self) -> PResult<Tree> {
        let lhs = self.conditional()?;
        let tok = self.peek();
        if tok.kind == TokKind::Punct && ASSIGN_OPS.contains(&tok.text.as_str()) {
            let op = self.next().text;
            let rhs = self.assignment()?;
            let start = lhs.span.start;
            return Ok(self.node(NodeKind::Assign, op, start, vec![lhs, rhs]));
        }
        Ok(lhs)
    }

    fn conditional(&mut self) -> PResult<Tree> {
        let cond = self.binary(0)?;
        if !self.eat("?") {
            return Ok(cond);
        }
        let then = self.expr()?;
        self.expect(":")?;
        let other = self.conditional()?;
        let start = cond.span.start;
        Ok(self.node(NodeKind::CondExpr, "?:", start, vec![cond, then, other]))
    }

    fn binary(&mut self, level: usize) -> PResult<Tree> {
        if level == BINARY_LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let tok = self.peek();
            if tok.kind != TokKind::Punct || !BINARY_LEVELS[level].contains(&tok.text.as_str()) {
                return Ok(lhs);
            }
            let op = self.next().text;
            let rhs = self.binary(level + 1)?;
            let start = lhs.span.start;
            lhs = self.node(NodeKind::BinaryExpr, op, start, vec![lhs, rhs]);
        }
    }

    fn unary(&mut self) -> PResult<Tree> {
        let tok = self.peek().clone();
        let start = tok.line;
        if tok.kind == TokKind::Punct && ["-", "+", "!", "~", "*", "&", "++", "--"].contains(&tok.text.as_str()) {
            self.next();
            let operand = self.unary()?;
            return Ok(self.node(NodeKind::UnaryExpr, tok.text, start, vec![operand]));
        }
        if tok.is("sizeof") {
            self.next();
            if self.at("(") && self.is_type_at(1) {
                self.next();
                let mut children = vec![self.type_name()?];
                children.extend(self.pointers());
                self.expect(")")?;
                return Ok(self.node(NodeKind::SizeofExpr, "sizeof", start, children));
            }
            let operand = self.unary()?;
            return Ok(self.node(NodeKind::SizeofExpr, "sizeof", start, vec![operand]));
        }
        if tok.is("(") && self.is_type_at(1) {
            self.next();
            let mut children = vec![self.type_name()?];
            children.extend(self.pointers());
            self.expect(")")?;
            children.push(self.unary()?);
            return Ok(self.node(NodeKind::CastExpr, "", start, children));
        }
        self.postfix()
    }

    fn is_type_at(&self, k: usize) -> bool {
        let tok = self.peek_at(k);
        match tok.kind {
            TokKind::Keyword => TYPE_WORDS.contains(&tok.text.as_str()) || tok.text == "struct",
            TokKind::Ident => TYPEDEF_NAMES.contains(&tok.text.as_str()),
            _ => false,
        }
    }

    fn postfix(&mut self) -> PResult<Tree> {
        let mut e = self.primary()?;
        loop {
            let start = e.span.start;
            if self.eat("[") {
                let index = self.expr()?;
                self.expect("]")?;
                e = self.node(NodeKind::SubscriptExpr, "", start, vec![e, index]);
            } else if self.eat("(") {
                let mut children = vec![e];
                if !self.at(")") {
                    loop {
                        children.push(self.assignment()?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
                self.expect(")")?;
                e = self.node(NodeKind::CallExpr, "", start, children);
            } else if self.at(".") || self.at("->") {
                let op = self.next().text;
                let field = self.identifier()?;
                e = self.node(NodeKind::MemberExpr, op, start, vec![e, field]);
            } else if self.at("++") || self.at("--") {
                let op = self.next().text;
                e = self.node(NodeKind::PostfixExpr, op, start, vec![e]);
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> PResult<Tree> {
        let tok = self.peek().clone();
        match tok.kind {
            TokKind::Ident => {
                self.next();
                Ok(Tree::leaf(NodeKind::Identifier, &tok))
            }
            TokKind::Int | TokKind::Float | TokKind::Char | TokKind::Str => {
                self.next();
                Ok(Tree::leaf(NodeKind::Literal, &tok))
            }
            TokKind::Punct if tok.text == "(" => {
                self.next();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => Err(self.error("expected expression")),
        }
    }
}

fn empty_at(tok: &Token) -> Tree {
    Tree { kind: NodeKind::Empty, label: String::new(), span: Span::line(tok.line), children: Vec::new() }
}

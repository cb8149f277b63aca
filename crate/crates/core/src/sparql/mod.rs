//! Parser and printer for the supported SPARQL subset:
//!
//! ```text
//! Query                    => Prologue 'SELECT' 'DISTINCT'? (Var+ | '*') 'WHERE'
//!                             '{' 'GRAPH' Var '{' GroupGraphPattern '}' '}' ResultModifiers
//! GroupGraphPattern        => BGP? ( GraphPatternNotTriples '.'? BGP? )*
//! GraphPatternNotTriples   => GroupOrUnionGraphPattern | OptionalGraphPattern | Filter
//! GroupOrUnionGraphPattern => '{' GroupGraphPattern '}' ( 'UNION' '{' GroupGraphPattern '}' )*
//! OptionalGraphPattern     => 'OPTIONAL' '{' GroupGraphPattern '}'
//! Filter                   => 'FILTER' Constraint
//! Constraint               => '(' Expr ')' | BuiltInCall | 'EXISTS' '{' BGP '}' | 'NOT' 'EXISTS' '{' BGP '}'
//! ResultModifiers          => ( 'LIMIT' INTEGER | 'OFFSET' INTEGER )*
//! ```
//!
//! The parse result is a BGP tree: a tree of [`Node`]s whose leaves are
//! basic graph patterns and filter predicates. The tree drives both group
//! filtering and per-group query rewriting.

mod lexer;
mod parser;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::pattern::{PatternTerm, TriplePattern};
use crate::rdf::Term;

pub use parser::{parse_query, parse_query_with_stats};

pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("syntax error at line {line}, column {col}: expected {expected}, found {found}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub expected: String,
    pub found: String,
}

impl SyntaxError {
    /// Multi-line diagnostic: the message, the offending source line, and a
    /// caret under the column.
    pub fn render(&self, source: &str) -> String {
        let mut out = format!("{self}\n");
        if let Some(line) = source.lines().nth(self.line.saturating_sub(1)) {
            let _ = writeln!(out, "  {line}");
            let pad: String = line
                .chars()
                .take(self.col.saturating_sub(1))
                .map(|c| if c == '\t' { '\t' } else { ' ' })
                .collect();
            let _ = writeln!(out, "  {pad}^");
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }
}

/// Filter predicate expressions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(String),
    Const(Term),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Compare(CompareOp, Box<Expr>, Box<Expr>),
    /// `regex(text, pattern)` or `regex(text, pattern, flags)`.
    Regex(Vec<Expr>),
    Bound(String),
    /// Any other function call; parsed so the query round-trips, rejected
    /// at execution time.
    Call { name: String, args: Vec<Expr> },
}

impl Expr {
    pub fn variables<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Var(v) | Expr::Bound(v) => out.push(v),
            Expr::Const(_) => {}
            Expr::Not(e) => e.variables(out),
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Compare(_, a, b) => {
                a.variables(out);
                b.variables(out);
            }
            Expr::Regex(args) | Expr::Call { args, .. } => args.iter().for_each(|a| a.variables(out)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// `GroupGraphPattern`: an ordered sequence of BGPs and non-triple patterns.
    Group,
    /// `GroupOrUnionGraphPattern`: one or more alternative groups. A single
    /// child is a nested `{ ... }` group.
    Union,
    /// `OptionalGraphPattern`: exactly one `Group` child.
    Optional,
    /// `Filter`: exactly one `Predicate`, `Exists` or `NotExists` child.
    Filter,
    Predicate(Expr),
    /// Exactly one `Bgp` child.
    Exists,
    /// Exactly one `Bgp` child.
    NotExists,
    /// Triple patterns, duplicates removed, source order kept.
    Bgp(Vec<TriplePattern>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Node {
    pub kind: NodeKind,
    pub children: Vec<Node>,
}

impl Node {
    pub fn leaf(kind: NodeKind) -> Self {
        Node {
            kind,
            children: Vec::new(),
        }
    }

    pub fn with_children(kind: NodeKind, children: Vec<Node>) -> Self {
        Node { kind, children }
    }

    pub fn bgp(patterns: Vec<TriplePattern>) -> Self {
        Node::leaf(NodeKind::Bgp(patterns))
    }

    pub fn as_bgp(&self) -> Option<&[TriplePattern]> {
        match &self.kind {
            NodeKind::Bgp(b) => Some(b),
            _ => None,
        }
    }

    /// Number of BGP nodes in this subtree.
    pub fn bgp_count(&self) -> usize {
        self.as_bgp().is_some() as usize + self.children.iter().map(Node::bgp_count).sum::<usize>()
    }

    /// All BGPs of the subtree in pre-order.
    pub fn bgps(&self) -> Vec<&[TriplePattern]> {
        let mut out = Vec::new();
        self.walk(&mut |n| {
            if let Some(b) = n.as_bgp() {
                out.push(b);
            }
        });
        out
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    /// Variables a solution can bind, in order of first appearance: those
    /// of triple patterns outside FILTER constraints.
    pub fn bindable_variables(&self) -> Vec<String> {
        fn visit(n: &Node, seen: &mut indexmap::IndexSet<String>) {
            match &n.kind {
                NodeKind::Filter => {}
                NodeKind::Bgp(b) => {
                    for v in b.iter().flat_map(|tp| tp.variables()) {
                        seen.insert(v.to_string());
                    }
                }
                _ => n.children.iter().for_each(|c| visit(c, seen)),
            }
        }
        let mut seen = indexmap::IndexSet::new();
        visit(self, &mut seen);
        seen.into_iter().collect()
    }

    /// Variables in order of first appearance.
    pub fn variables(&self) -> Vec<String> {
        let mut seen = indexmap::IndexSet::new();
        self.walk(&mut |n| match &n.kind {
            NodeKind::Bgp(b) => {
                for tp in b {
                    for v in tp.variables() {
                        seen.insert(v.to_string());
                    }
                }
            }
            NodeKind::Predicate(e) => {
                let mut vs = Vec::new();
                e.variables(&mut vs);
                for v in vs {
                    seen.insert(v.to_string());
                }
            }
            _ => {}
        });
        seen.into_iter().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Selection {
    All,
    Vars(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Query {
    /// Declared prefixes in source order; terms in the tree are already expanded.
    pub prefixes: Vec<(String, String)>,
    pub selection: Selection,
    pub distinct: bool,
    pub graph_var: String,
    /// A `Group` node: the body of the GRAPH block.
    pub root: Node,
    pub limit: Option<u64>,
    pub offset: Option<u64>,
}

impl Query {
    /// Result columns: the selected variables, or for `*` every variable in
    /// order of first appearance with the graph variable first.
    pub fn columns(&self) -> Vec<String> {
        match &self.selection {
            Selection::Vars(v) => v.clone(),
            Selection::All => {
                let mut cols = vec![self.graph_var.clone()];
                for v in self.root.bindable_variables() {
                    if v != self.graph_var {
                        cols.push(v);
                    }
                }
                cols
            }
        }
    }
}

/// Grammar productions tracked while parsing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Production {
    Query,
    PrefixDecl,
    SelectAll,
    SelectVars,
    Distinct,
    GroupGraphPattern,
    Bgp,
    TriplePattern,
    GraphPatternNotTriples,
    GroupOrUnionGraphPattern,
    UnionAlternative,
    OptionalGraphPattern,
    Filter,
    ConstraintPredicate,
    ConstraintExists,
    ConstraintNotExists,
    /// The optional `.` after a non-triple pattern.
    TrailingDot,
    Limit,
    Offset,
}

impl Production {
    /// The productions of the core grammar (every alternative of every rule).
    pub const GRAMMAR: [Production; 11] = [
        Production::Query,
        Production::GroupGraphPattern,
        Production::Bgp,
        Production::GraphPatternNotTriples,
        Production::GroupOrUnionGraphPattern,
        Production::UnionAlternative,
        Production::OptionalGraphPattern,
        Production::Filter,
        Production::ConstraintPredicate,
        Production::ConstraintExists,
        Production::ConstraintNotExists,
    ];
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ProductionCounts(pub BTreeMap<Production, usize>);

impl ProductionCounts {
    pub fn hit(&mut self, p: Production) {
        *self.0.entry(p).or_default() += 1;
    }

    pub fn get(&self, p: Production) -> usize {
        self.0.get(&p).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &ProductionCounts) {
        for (p, n) in &other.0 {
            *self.0.entry(*p).or_default() += n;
        }
    }
}

fn write_string_literal(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_iri(out: &mut String, iri: &str) {
    out.push('<');
    for c in iri.chars() {
        if c <= ' ' || "<>\"{}|^`\\".contains(c) {
            let _ = write!(out, "\\u{:04X}", c as u32);
        } else {
            out.push(c);
        }
    }
    out.push('>');
}

/// Writes a term in query syntax. Blank nodes cannot occur in parsed
/// queries; they are printed as IRIs-free labels for diagnostics only.
pub fn write_term(out: &mut String, t: &Term) {
    match t {
        Term::Iri(i) => write_iri(out, i),
        Term::Literal {
            lexical,
            datatype,
            language,
        } => {
            write_string_literal(out, lexical);
            if let Some(lang) = language {
                let _ = write!(out, "@{lang}");
            } else if let Some(dt) = datatype {
                out.push_str("^^");
                write_iri(out, dt);
            }
        }
        Term::BlankNode(b) => {
            let _ = write!(out, "_:{b}");
        }
    }
}

fn write_pattern_term(out: &mut String, t: &PatternTerm) {
    match t {
        PatternTerm::Var(v) => {
            let _ = write!(out, "?{v}");
        }
        PatternTerm::Term(t) => write_term(out, t),
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Var(v) => {
            let _ = write!(out, "?{v}");
        }
        Expr::Const(t) => write_term(out, t),
        Expr::Not(inner) => {
            out.push('!');
            write_expr(out, inner);
        }
        Expr::And(a, b) | Expr::Or(a, b) | Expr::Compare(_, a, b) => {
            let op = match e {
                Expr::And(..) => "&&",
                Expr::Or(..) => "||",
                Expr::Compare(op, ..) => op.symbol(),
                _ => unreachable!(),
            };
            out.push('(');
            write_expr(out, a);
            let _ = write!(out, " {op} ");
            write_expr(out, b);
            out.push(')');
        }
        Expr::Regex(args) => write_call(out, "regex", args),
        Expr::Bound(v) => {
            let _ = write!(out, "bound(?{v})");
        }
        Expr::Call { name, args } => {
            if name.contains(':') {
                let mut iri = String::new();
                write_iri(&mut iri, name);
                write_call(out, &iri, args)
            } else {
                write_call(out, name, args)
            }
        }
    }
}

fn write_call(out: &mut String, name: &str, args: &[Expr]) {
    out.push_str(name);
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, a);
    }
    out.push(')');
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn write_bgp(out: &mut String, bgp: &[TriplePattern], depth: usize) {
    for tp in bgp {
        indent(out, depth);
        write_pattern_term(out, &tp.subject);
        out.push(' ');
        write_pattern_term(out, &tp.predicate);
        out.push(' ');
        write_pattern_term(out, &tp.object);
        out.push_str(" .\n");
    }
}

fn write_group_body(out: &mut String, group: &Node, depth: usize) {
    for child in &group.children {
        write_node(out, child, depth);
    }
}

fn write_braced_group(out: &mut String, group: &Node, depth: usize) {
    out.push_str("{\n");
    write_group_body(out, group, depth + 1);
    indent(out, depth);
    out.push('}');
}

fn write_node(out: &mut String, node: &Node, depth: usize) {
    match &node.kind {
        NodeKind::Bgp(b) => write_bgp(out, b, depth),
        NodeKind::Union => {
            indent(out, depth);
            for (i, branch) in node.children.iter().enumerate() {
                if i > 0 {
                    out.push_str(" UNION ");
                }
                write_braced_group(out, branch, depth);
            }
            out.push_str(" .\n");
        }
        NodeKind::Optional => {
            indent(out, depth);
            out.push_str("OPTIONAL ");
            write_braced_group(out, &node.children[0], depth);
            out.push_str(" .\n");
        }
        NodeKind::Filter => {
            indent(out, depth);
            out.push_str("FILTER ");
            let c = &node.children[0];
            match &c.kind {
                NodeKind::Predicate(e) => {
                    out.push('(');
                    write_expr(out, e);
                    out.push(')');
                }
                NodeKind::Exists | NodeKind::NotExists => {
                    out.push_str(if c.kind == NodeKind::Exists {
                        "EXISTS {\n"
                    } else {
                        "NOT EXISTS {\n"
                    });
                    if let Some(b) = c.children.first().and_then(Node::as_bgp) {
                        write_bgp(out, b, depth + 1);
                    }
                    indent(out, depth);
                    out.push('}');
                }
                other => unreachable!("filter child {other:?}"),
            }
            out.push_str(" .\n");
        }
        NodeKind::Group => {
            // a bare group only occurs as a union branch or optional body
            indent(out, depth);
            write_braced_group(out, node, depth);
            out.push_str(" .\n");
        }
        NodeKind::Predicate(_) | NodeKind::Exists | NodeKind::NotExists => {
            unreachable!("constraint outside a filter")
        }
    }
}

/// Prints a query in the supported subset. Prefix declarations are
/// re-emitted, but every IRI in the body is written in full.
pub fn format_query(q: &Query) -> String {
    let mut out = String::new();
    for (p, iri) in &q.prefixes {
        let _ = write!(out, "PREFIX {p}: ");
        write_iri(&mut out, iri);
        out.push('\n');
    }
    out.push_str("SELECT ");
    if q.distinct {
        out.push_str("DISTINCT ");
    }
    match &q.selection {
        Selection::All => out.push('*'),
        Selection::Vars(vs) => {
            let vs: Vec<String> = vs.iter().map(|v| format!("?{v}")).collect();
            out.push_str(&vs.join(" "));
        }
    }
    let _ = writeln!(out, " WHERE {{\n  GRAPH ?{} {{", q.graph_var);
    write_group_body(&mut out, &q.root, 2);
    out.push_str("  }\n}");
    if let Some(l) = q.limit {
        let _ = write!(out, "\nLIMIT {l}");
    }
    if let Some(o) = q.offset {
        let _ = write!(out, "\nOFFSET {o}");
    }
    out.push('\n');
    out
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_query(self))
    }
}

use indexmap::IndexSet;

use super::lexer::{tokenize, Tok, Token};
use super::{
    CompareOp, Expr, Node, NodeKind, Production, ProductionCounts, Query, Selection, SyntaxError, RDF_TYPE, XSD,
};
use crate::pattern::{PatternTerm, TriplePattern};
use crate::rdf::Term;

pub fn parse_query(text: &str) -> Result<Query, SyntaxError> {
    parse_query_with_stats(text).map(|(q, _)| q)
}

/// Parses and also reports how often each grammar production was used.
pub fn parse_query_with_stats(text: &str) -> Result<(Query, ProductionCounts), SyntaxError> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        prefixes: Vec::new(),
        counts: ProductionCounts::default(),
    };
    let q = p.query()?;
    Ok((q, p.counts))
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    prefixes: Vec<(String, String)>,
    counts: ProductionCounts,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, off: usize) -> &Tok {
        let i = (self.pos + off).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn next(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> SyntaxError {
        let t = &self.tokens[self.pos];
        SyntaxError {
            line: t.line,
            col: t.col,
            expected: expected.into(),
            found: t.tok.describe(),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), SyntaxError> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            Err(self.error(&tok.describe()))
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if self.peek().is_keyword(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.keyword(kw) {
            Ok(())
        } else {
            Err(self.error(kw))
        }
    }

    fn var(&mut self) -> Result<String, SyntaxError> {
        match self.peek() {
            Tok::Var(v) => {
                let v = v.clone();
                self.next();
                Ok(v)
            }
            _ => Err(self.error("variable")),
        }
    }

    fn count(&mut self, p: Production) {
        self.counts.hit(p);
    }

    fn query(&mut self) -> Result<Query, SyntaxError> {
        self.count(Production::Query);
        while self.keyword("PREFIX") {
            self.count(Production::PrefixDecl);
            let Tok::PName(prefix, local) = self.peek().clone() else {
                return Err(self.error("prefix name ending in ':'"));
            };
            if !local.is_empty() {
                return Err(self.error("prefix name ending in ':'"));
            }
            self.next();
            let Tok::Iri(iri) = self.next() else {
                self.pos -= 1;
                return Err(self.error("IRI"));
            };
            self.prefixes.retain(|(p, _)| *p != prefix);
            self.prefixes.push((prefix, iri));
        }
        self.expect_keyword("SELECT")?;
        let distinct = self.keyword("DISTINCT");
        if distinct {
            self.count(Production::Distinct);
        }
        let selection = if *self.peek() == Tok::Star {
            self.next();
            self.count(Production::SelectAll);
            Selection::All
        } else {
            let mut vars = Vec::new();
            while let Tok::Var(v) = self.peek() {
                if !vars.contains(v) {
                    vars.push(v.clone());
                }
                self.next();
            }
            if vars.is_empty() {
                return Err(self.error("variable or '*'"));
            }
            self.count(Production::SelectVars);
            Selection::Vars(vars)
        };
        self.expect_keyword("WHERE")?;
        self.expect(Tok::LBrace)?;
        self.expect_keyword("GRAPH")?;
        let graph_var = self.var()?;
        if let Tok::Var(_) = self.peek() {
            return Err(self.error("'{' (a single graph variable is supported)"));
        }
        self.expect(Tok::LBrace)?;
        let root = self.group_graph_pattern()?;
        self.expect(Tok::RBrace)?;
        self.expect(Tok::RBrace)?;

        let (mut limit, mut offset) = (None, None);
        loop {
            if self.peek().is_keyword("LIMIT") && limit.is_none() {
                self.next();
                self.count(Production::Limit);
                limit = Some(self.integer()?);
            } else if self.peek().is_keyword("OFFSET") && offset.is_none() {
                self.next();
                self.count(Production::Offset);
                offset = Some(self.integer()?);
            } else {
                break;
            }
        }
        if *self.peek() != Tok::Eof {
            return Err(self.error("end of query"));
        }
        Ok(Query {
            prefixes: std::mem::take(&mut self.prefixes),
            selection,
            distinct,
            graph_var,
            root,
            limit,
            offset,
        })
    }

    fn integer(&mut self) -> Result<u64, SyntaxError> {
        match self.peek() {
            Tok::Number(n, "integer") if !n.starts_with(['+', '-']) => match n.parse() {
                Ok(v) => {
                    self.next();
                    Ok(v)
                }
                Err(_) => Err(self.error("non-negative integer")),
            },
            _ => Err(self.error("non-negative integer")),
        }
    }

    /// Body of a `{ ... }` block, up to (not including) the closing brace.
    fn group_graph_pattern(&mut self) -> Result<Node, SyntaxError> {
        self.count(Production::GroupGraphPattern);
        let mut children = Vec::new();
        if let Some(bgp) = self.bgp()? {
            children.push(bgp);
        }
        while self.starts_not_triples() {
            self.count(Production::GraphPatternNotTriples);
            children.push(self.not_triples()?);
            if *self.peek() == Tok::Dot {
                self.next();
                self.count(Production::TrailingDot);
            }
            if let Some(bgp) = self.bgp()? {
                children.push(bgp);
            }
        }
        if *self.peek() != Tok::RBrace {
            return Err(self.error("triple pattern, '{', OPTIONAL, FILTER or '}'"));
        }
        Ok(Node::with_children(NodeKind::Group, children))
    }

    fn starts_not_triples(&self) -> bool {
        let t = self.peek();
        *t == Tok::LBrace || t.is_keyword("OPTIONAL") || t.is_keyword("FILTER")
    }

    fn not_triples(&mut self) -> Result<Node, SyntaxError> {
        if self.keyword("OPTIONAL") {
            self.count(Production::OptionalGraphPattern);
            let g = self.braced_group()?;
            return Ok(Node::with_children(NodeKind::Optional, vec![g]));
        }
        if self.keyword("FILTER") {
            self.count(Production::Filter);
            let c = self.constraint()?;
            return Ok(Node::with_children(NodeKind::Filter, vec![c]));
        }
        self.count(Production::GroupOrUnionGraphPattern);
        let mut branches = vec![self.braced_group()?];
        while self.keyword("UNION") {
            self.count(Production::UnionAlternative);
            branches.push(self.braced_group()?);
        }
        Ok(Node::with_children(NodeKind::Union, branches))
    }

    fn braced_group(&mut self) -> Result<Node, SyntaxError> {
        self.expect(Tok::LBrace)?;
        let g = self.group_graph_pattern()?;
        self.expect(Tok::RBrace)?;
        Ok(g)
    }

    fn constraint(&mut self) -> Result<Node, SyntaxError> {
        let negated = if self.peek().is_keyword("NOT") && self.peek_at(1).is_keyword("EXISTS") {
            self.next();
            true
        } else {
            false
        };
        if self.keyword("EXISTS") {
            self.count(if negated {
                Production::ConstraintNotExists
            } else {
                Production::ConstraintExists
            });
            self.expect(Tok::LBrace)?;
            let bgp = self.bgp()?.unwrap_or_else(|| Node::bgp(Vec::new()));
            self.expect(Tok::RBrace)?;
            let kind = if negated { NodeKind::NotExists } else { NodeKind::Exists };
            return Ok(Node::with_children(kind, vec![bgp]));
        }
        self.count(Production::ConstraintPredicate);
        let expr = match self.peek() {
            Tok::LParen => {
                self.next();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                e
            }
            Tok::Ident(_) | Tok::Iri(_) | Tok::PName(..) if *self.peek_at(1) == Tok::LParen => self.primary()?,
            _ => return Err(self.error("'(', function call, EXISTS or NOT EXISTS")),
        };
        Ok(Node::leaf(NodeKind::Predicate(expr)))
    }

    /// Triples block: patterns separated by '.', with ';' and ',' shorthand.
    fn bgp(&mut self) -> Result<Option<Node>, SyntaxError> {
        let mut patterns: IndexSet<TriplePattern> = IndexSet::new();
        while self.starts_term() {
            let subject = self.subject()?;
            loop {
                let predicate = self.predicate()?;
                loop {
                    let object = self.object()?;
                    self.count(Production::TriplePattern);
                    patterns.insert(TriplePattern::new(subject.clone(), predicate.clone(), object));
                    if *self.peek() != Tok::Comma {
                        break;
                    }
                    self.next();
                }
                if *self.peek() != Tok::Semicolon {
                    break;
                }
                while *self.peek() == Tok::Semicolon {
                    self.next();
                }
                if !self.starts_term() {
                    break;
                }
            }
            if *self.peek() == Tok::Dot {
                self.next();
            } else {
                break;
            }
        }
        if patterns.is_empty() {
            return Ok(None);
        }
        self.count(Production::Bgp);
        Ok(Some(Node::bgp(patterns.into_iter().collect())))
    }

    fn starts_term(&self) -> bool {
        match self.peek() {
            Tok::Var(_) | Tok::Iri(_) | Tok::PName(..) | Tok::BlankNode(_) | Tok::Str(_) | Tok::Number(..) => true,
            Tok::Ident(i) => i == "a" || i.eq_ignore_ascii_case("true") || i.eq_ignore_ascii_case("false"),
            _ => false,
        }
    }

    fn blank_node_error(&self) -> SyntaxError {
        self.error("variable or IRI (blank nodes are not supported in queries)")
    }

    fn iri_like(&mut self) -> Result<Option<String>, SyntaxError> {
        match self.peek().clone() {
            Tok::Iri(i) => {
                self.next();
                Ok(Some(i))
            }
            Tok::PName(p, l) => {
                let Some((_, base)) = self.prefixes.iter().find(|(q, _)| *q == p) else {
                    return Err(self.error(&format!("declared prefix (no PREFIX for '{p}:')")));
                };
                let iri = format!("{base}{l}");
                self.next();
                Ok(Some(iri))
            }
            _ => Ok(None),
        }
    }

    fn subject(&mut self) -> Result<PatternTerm, SyntaxError> {
        if let Tok::Var(v) = self.peek().clone() {
            self.next();
            return Ok(PatternTerm::Var(v));
        }
        if let Tok::BlankNode(_) = self.peek() {
            return Err(self.blank_node_error());
        }
        match self.iri_like()? {
            Some(i) => Ok(PatternTerm::Term(Term::iri(i))),
            None => Err(self.error("subject (variable or IRI)")),
        }
    }

    fn predicate(&mut self) -> Result<PatternTerm, SyntaxError> {
        if let Tok::Var(v) = self.peek().clone() {
            self.next();
            return Ok(PatternTerm::Var(v));
        }
        if matches!(self.peek(), Tok::Ident(i) if i == "a") {
            self.next();
            return Ok(PatternTerm::Term(Term::iri(RDF_TYPE)));
        }
        match self.iri_like()? {
            Some(i) => Ok(PatternTerm::Term(Term::iri(i))),
            None => Err(self.error("predicate (variable, IRI or 'a')")),
        }
    }

    fn object(&mut self) -> Result<PatternTerm, SyntaxError> {
        if let Tok::Var(v) = self.peek().clone() {
            self.next();
            return Ok(PatternTerm::Var(v));
        }
        if let Tok::BlankNode(_) = self.peek() {
            return Err(self.blank_node_error());
        }
        if let Some(i) = self.iri_like()? {
            return Ok(PatternTerm::Term(Term::iri(i)));
        }
        match self.literal()? {
            Some(t) => Ok(PatternTerm::Term(t)),
            None => Err(self.error("object (variable, IRI or literal)")),
        }
    }

    fn literal(&mut self) -> Result<Option<Term>, SyntaxError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.next();
                match self.peek().clone() {
                    Tok::LangTag(l) => {
                        self.next();
                        Ok(Some(Term::lang_literal(s, l)))
                    }
                    Tok::DoubleCaret => {
                        self.next();
                        match self.iri_like()? {
                            Some(dt) => Ok(Some(Term::typed_literal(s, dt))),
                            None => Err(self.error("datatype IRI")),
                        }
                    }
                    _ => Ok(Some(Term::literal(s))),
                }
            }
            Tok::Number(n, kind) => {
                self.next();
                Ok(Some(Term::typed_literal(n, format!("{XSD}{kind}"))))
            }
            Tok::Ident(i) if i.eq_ignore_ascii_case("true") || i.eq_ignore_ascii_case("false") => {
                self.next();
                Ok(Some(Term::typed_literal(i.to_ascii_lowercase(), format!("{XSD}boolean"))))
            }
            _ => Ok(None),
        }
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::OrOr {
            self.next();
            let rhs = self.and_expr()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.relational()?;
        while *self.peek() == Tok::AndAnd {
            self.next();
            let rhs = self.relational()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn relational(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.unary()?;
        let op = match self.peek() {
            Tok::Eq => CompareOp::Eq,
            Tok::Ne => CompareOp::Ne,
            Tok::Lt => CompareOp::Lt,
            Tok::Le => CompareOp::Le,
            Tok::Gt => CompareOp::Gt,
            Tok::Ge => CompareOp::Ge,
            _ => return Ok(lhs),
        };
        self.next();
        let rhs = self.unary()?;
        Ok(Expr::Compare(op, Box::new(lhs), Box::new(rhs)))
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if *self.peek() == Tok::Bang {
            self.next();
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().clone() {
            Tok::LParen => {
                self.next();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Var(v) => {
                self.next();
                Ok(Expr::Var(v))
            }
            Tok::Ident(name) if *self.peek_at(1) == Tok::LParen => {
                self.next();
                self.call(name)
            }
            Tok::Iri(_) | Tok::PName(..) if *self.peek_at(1) == Tok::LParen => {
                let name = self.iri_like()?.unwrap();
                self.call(name)
            }
            Tok::BlankNode(_) => Err(self.blank_node_error()),
            _ => {
                if let Some(i) = self.iri_like()? {
                    return Ok(Expr::Const(Term::iri(i)));
                }
                match self.literal()? {
                    Some(t) => Ok(Expr::Const(t)),
                    None => Err(self.error("expression")),
                }
            }
        }
    }

    fn call(&mut self, name: String) -> Result<Expr, SyntaxError> {
        self.expect(Tok::LParen)?;
        if name.eq_ignore_ascii_case("bound") {
            let v = self.var()?;
            self.expect(Tok::RParen)?;
            return Ok(Expr::Bound(v));
        }
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            args.push(self.expr()?);
            while *self.peek() == Tok::Comma {
                self.next();
                args.push(self.expr()?);
            }
        }
        self.expect(Tok::RParen)?;
        if name.eq_ignore_ascii_case("regex") {
            if !(2..=3).contains(&args.len()) {
                return Err(self.error("regex with 2 or 3 arguments"));
            }
            return Ok(Expr::Regex(args));
        }
        Ok(Expr::Call { name, args })
    }
}

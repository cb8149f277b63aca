//! RDF terms, quads and the N-Quads line format.
//!
//! Escapes are resolved at parse time, so two terms compare equal exactly when
//! their unescaped fields are equal. The serializer emits a canonical form that
//! the parser inverts exactly.

use std::fmt::{self, Write as _};
use std::io::{self, BufRead, Write};

use indexmap::{IndexMap, IndexSet};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermKind {
    Iri,
    Literal,
    BlankNode,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(String),
    Literal {
        lexical: String,
        datatype: Option<String>,
        language: Option<String>,
    },
    BlankNode(String),
}

impl Term {
    pub fn iri(iri: impl Into<String>) -> Self {
        Term::Iri(iri.into())
    }

    pub fn blank(label: impl Into<String>) -> Self {
        Term::BlankNode(label.into())
    }

    pub fn literal(lexical: impl Into<String>) -> Self {
        Term::Literal {
            lexical: lexical.into(),
            datatype: None,
            language: None,
        }
    }

    pub fn typed_literal(lexical: impl Into<String>, datatype: impl Into<String>) -> Self {
        Term::Literal {
            lexical: lexical.into(),
            datatype: Some(datatype.into()),
            language: None,
        }
    }

    pub fn lang_literal(lexical: impl Into<String>, language: impl Into<String>) -> Self {
        Term::Literal {
            lexical: lexical.into(),
            datatype: None,
            language: Some(language.into()),
        }
    }

    pub fn kind(&self) -> TermKind {
        match self {
            Term::Iri(_) => TermKind::Iri,
            Term::Literal { .. } => TermKind::Literal,
            Term::BlankNode(_) => TermKind::BlankNode,
        }
    }

    /// IRI text, literal lexical form, or blank node label.
    pub fn lexical(&self) -> &str {
        match self {
            Term::Iri(s) | Term::BlankNode(s) => s,
            Term::Literal { lexical, .. } => lexical,
        }
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri(_))
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal { .. })
    }

    /// Writes the canonical N-Quads form of the term.
    pub fn write_nquads(&self, out: &mut String) {
        match self {
            Term::Iri(iri) => write_iri(out, iri),
            Term::BlankNode(label) => {
                out.push_str("_:");
                out.push_str(label);
            }
            Term::Literal {
                lexical,
                datatype,
                language,
            } => {
                out.push('"');
                for c in lexical.chars() {
                    match c {
                        '"' => out.push_str("\\\""),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        '\r' => out.push_str("\\r"),
                        c => out.push(c),
                    }
                }
                out.push('"');
                if let Some(lang) = language {
                    out.push('@');
                    out.push_str(lang);
                } else if let Some(dt) = datatype {
                    out.push_str("^^");
                    write_iri(out, dt);
                }
            }
        }
    }
}

fn write_iri(out: &mut String, iri: &str) {
    out.push('<');
    for c in iri.chars() {
        if iri_char_needs_escape(c) {
            let _ = write!(out, "\\u{:04X}", c as u32);
        } else {
            out.push(c);
        }
    }
    out.push('>');
}

fn iri_char_needs_escape(c: char) -> bool {
    c <= ' ' || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\')
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_nquads(&mut s);
        f.write_str(&s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Self {
        Triple {
            subject,
            predicate,
            object,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quad {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
    pub context: Term,
}

impl Quad {
    /// Builds a quad, checking the position constraints on each term.
    pub fn new(
        subject: Term,
        predicate: Term,
        object: Term,
        context: Term,
    ) -> Result<Self, String> {
        if subject.is_literal() {
            return Err("subject must be an IRI or blank node".into());
        }
        if !predicate.is_iri() {
            return Err("predicate must be an IRI".into());
        }
        if context.is_literal() {
            return Err("graph label must be an IRI or blank node".into());
        }
        Ok(Quad {
            subject,
            predicate,
            object,
            context,
        })
    }

    pub fn triple(&self) -> Triple {
        Triple::new(
            self.subject.clone(),
            self.predicate.clone(),
            self.object.clone(),
        )
    }

    pub fn to_nquads_line(&self) -> String {
        let mut s = String::new();
        self.subject.write_nquads(&mut s);
        s.push(' ');
        self.predicate.write_nquads(&mut s);
        s.push(' ');
        self.object.write_nquads(&mut s);
        s.push(' ');
        self.context.write_nquads(&mut s);
        s.push_str(" .\n");
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line_no}: {reason}")]
pub struct MalformedLine {
    pub line_no: usize,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum RdfError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed N-Quads: {0}")]
    Malformed(#[from] MalformedLine),
}

#[derive(Clone, Debug, Default)]
pub struct ParseOptions {
    /// Abort on the first malformed line instead of skipping it.
    pub strict: bool,
    /// Graph label given to lines that carry only three terms.
    pub default_graph: Option<Term>,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub quads: Vec<Quad>,
    pub errors: Vec<MalformedLine>,
}

/// Streaming N-Quads reader yielding one item per non-blank, non-comment line.
pub struct QuadReader<R> {
    input: R,
    default_graph: Option<Term>,
    line_no: usize,
    buf: Vec<u8>,
}

impl<R: BufRead> QuadReader<R> {
    pub fn new(input: R, default_graph: Option<Term>) -> Self {
        QuadReader {
            input,
            default_graph,
            line_no: 0,
            buf: Vec::new(),
        }
    }
}

impl<R: BufRead> Iterator for QuadReader<R> {
    type Item = Result<Result<Quad, MalformedLine>, io::Error>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.input.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e)),
            }
            self.line_no += 1;
            let line_no = self.line_no;
            let line = match std::str::from_utf8(&self.buf) {
                Ok(l) => l,
                Err(_) => {
                    return Some(Ok(Err(MalformedLine {
                        line_no,
                        reason: "invalid UTF-8".into(),
                    })))
                }
            };
            match parse_line(line, self.default_graph.as_ref()) {
                Ok(None) => continue,
                Ok(Some(q)) => return Some(Ok(Ok(q))),
                Err(reason) => return Some(Ok(Err(MalformedLine { line_no, reason }))),
            }
        }
    }
}

/// Parses a whole N-Quads document. In lenient mode malformed lines are
/// collected in [`ParseOutcome::errors`] and skipped.
pub fn parse_nquads<R: BufRead>(input: R, opts: &ParseOptions) -> Result<ParseOutcome, RdfError> {
    let mut outcome = ParseOutcome::default();
    for item in QuadReader::new(input, opts.default_graph.clone()) {
        match item? {
            Ok(q) => outcome.quads.push(q),
            Err(bad) if opts.strict => return Err(RdfError::Malformed(bad)),
            Err(bad) => outcome.errors.push(bad),
        }
    }
    Ok(outcome)
}

pub fn parse_nquads_str(input: &str, opts: &ParseOptions) -> Result<ParseOutcome, RdfError> {
    parse_nquads(input.as_bytes(), opts)
}

pub fn serialize_nquads<'a, W: Write>(
    quads: impl IntoIterator<Item = &'a Quad>,
    mut out: W,
) -> io::Result<()> {
    for q in quads {
        out.write_all(q.to_nquads_line().as_bytes())?;
    }
    Ok(())
}

pub fn serialize_nquads_string<'a>(quads: impl IntoIterator<Item = &'a Quad>) -> String {
    quads.into_iter().map(Quad::to_nquads_line).collect()
}

struct LineCursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> LineCursor<'a> {
    fn peek(&self) -> Option<char> {
        self.s[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t' | '\r' | '\n')) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn describe(&self) -> String {
        match self.peek() {
            Some(c) => format!("'{c}' at column {}", self.pos + 1),
            None => "end of line".into(),
        }
    }

    fn hex_escape(&mut self, digits: usize) -> Result<char, String> {
        let start = self.pos;
        for _ in 0..digits {
            match self.bump() {
                Some(c) if c.is_ascii_hexdigit() => {}
                _ => return Err(format!("bad \\u escape at column {}", start + 1)),
            }
        }
        let code = u32::from_str_radix(&self.s[start..self.pos], 16).unwrap();
        char::from_u32(code).ok_or_else(|| format!("invalid code point U+{code:X}"))
    }

    fn iri(&mut self) -> Result<String, String> {
        if !self.eat('<') {
            return Err(format!("expected IRI, found {}", self.describe()));
        }
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err("unterminated IRI".into()),
                Some('>') => break,
                Some('\\') => match self.bump() {
                    Some('u') => out.push(self.hex_escape(4)?),
                    Some('U') => out.push(self.hex_escape(8)?),
                    _ => return Err("invalid escape in IRI".into()),
                },
                Some(c) if iri_char_needs_escape(c) => {
                    return Err(format!("character {c:?} not allowed in IRI"))
                }
                Some(c) => out.push(c),
            }
        }
        if out.is_empty() {
            return Err("empty IRI".into());
        }
        Ok(out)
    }

    fn blank(&mut self) -> Result<String, String> {
        if !(self.eat('_') && self.eat(':')) {
            return Err(format!("expected blank node, found {}", self.describe()));
        }
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':') {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        // a trailing '.' terminates the statement, it is not part of the label
        while self.pos > start && self.s[start..self.pos].ends_with('.') {
            self.pos -= 1;
        }
        if self.pos == start {
            return Err("empty blank node label".into());
        }
        Ok(self.s[start..self.pos].to_string())
    }

    fn literal(&mut self) -> Result<Term, String> {
        self.eat('"');
        let mut lexical = String::new();
        loop {
            match self.bump() {
                None => return Err("unterminated string literal".into()),
                Some('"') => break,
                Some('\\') => {
                    let c = match self.bump() {
                        Some('t') => '\t',
                        Some('b') => '\u{8}',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('u') => self.hex_escape(4)?,
                        Some('U') => self.hex_escape(8)?,
                        _ => return Err("invalid escape in string literal".into()),
                    };
                    lexical.push(c);
                }
                Some(c) => lexical.push(c),
            }
        }
        if self.eat('@') {
            let start = self.pos;
            while let Some(c) = self.peek() {
                if c.is_ascii_alphanumeric() || c == '-' {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            let lang = &self.s[start..self.pos];
            if lang.is_empty() || !lang.starts_with(|c: char| c.is_ascii_alphabetic()) {
                return Err("invalid language tag".into());
            }
            return Ok(Term::lang_literal(lexical, lang));
        }
        if self.eat('^') {
            if !self.eat('^') {
                return Err("expected '^^' before datatype".into());
            }
            let dt = self.iri()?;
            return Ok(Term::typed_literal(lexical, dt));
        }
        Ok(Term::literal(lexical))
    }

    fn term(&mut self) -> Result<Term, String> {
        match self.peek() {
            Some('<') => self.iri().map(Term::Iri),
            Some('_') => self.blank().map(Term::BlankNode),
            Some('"') => self.literal(),
            _ => Err(format!("expected term, found {}", self.describe())),
        }
    }
}

fn parse_line(line: &str, default_graph: Option<&Term>) -> Result<Option<Quad>, String> {
    let mut cur = LineCursor { s: line, pos: 0 };
    cur.skip_ws();
    if cur.at_end() || cur.peek() == Some('#') {
        return Ok(None);
    }
    let subject = match cur.peek() {
        Some('<') | Some('_') => cur.term()?,
        _ => return Err(format!("expected subject, found {}", cur.describe())),
    };
    cur.skip_ws();
    let predicate = Term::Iri(cur.iri()?);
    cur.skip_ws();
    let object = cur.term()?;
    cur.skip_ws();
    let context = if cur.peek() == Some('.') {
        match default_graph {
            Some(g) => g.clone(),
            None => return Err("triple without graph label and no default graph".into()),
        }
    } else {
        let c = match cur.peek() {
            Some('<') | Some('_') => cur.term()?,
            _ => return Err(format!("expected graph label, found {}", cur.describe())),
        };
        cur.skip_ws();
        c
    };
    if !cur.eat('.') {
        return Err(format!("expected '.', found {}", cur.describe()));
    }
    cur.skip_ws();
    if !cur.at_end() && cur.peek() != Some('#') {
        return Err(format!("trailing content: {}", cur.describe()));
    }
    Quad::new(subject, predicate, object, context).map(Some)
}

/// Dataset partitioned by graph label. Graph ids are dense and follow the
/// order in which each label was first seen.
#[derive(Clone, Debug, Default)]
pub struct GraphStore {
    graphs: IndexMap<Term, IndexSet<Triple>>,
}

#[derive(Clone, Copy, Debug)]
pub struct GraphRef<'a> {
    pub id: usize,
    pub context: &'a Term,
    pub triples: &'a IndexSet<Triple>,
}

impl GraphStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when the quad was already present.
    pub fn insert(&mut self, quad: Quad) -> bool {
        let triple = Triple::new(quad.subject, quad.predicate, quad.object);
        self.graphs.entry(quad.context).or_default().insert(triple)
    }

    pub fn graph_count(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn quad_count(&self) -> usize {
        self.graphs.values().map(IndexSet::len).sum()
    }

    pub fn graph(&self, id: usize) -> Option<GraphRef<'_>> {
        self.graphs
            .get_index(id)
            .map(|(context, triples)| GraphRef {
                id,
                context,
                triples,
            })
    }

    pub fn graph_id(&self, context: &Term) -> Option<usize> {
        self.graphs.get_index_of(context)
    }

    pub fn graphs(&self) -> impl Iterator<Item = GraphRef<'_>> + '_ {
        self.graphs
            .iter()
            .enumerate()
            .map(|(id, (context, triples))| GraphRef {
                id,
                context,
                triples,
            })
    }

    /// Quads of the given graph, in insertion order.
    pub fn quads_of(&self, id: usize) -> impl Iterator<Item = Quad> + '_ {
        self.graph(id).into_iter().flat_map(|g| {
            g.triples.iter().map(move |t| Quad {
                subject: t.subject.clone(),
                predicate: t.predicate.clone(),
                object: t.object.clone(),
                context: g.context.clone(),
            })
        })
    }

    pub fn quads(&self) -> impl Iterator<Item = Quad> + '_ {
        (0..self.graph_count()).flat_map(move |id| self.quads_of(id))
    }
}

/// Partitions quads by graph label, dropping duplicates.
pub fn group_by_context(quads: impl IntoIterator<Item = Quad>) -> GraphStore {
    let mut store = GraphStore::new();
    for q in quads {
        store.insert(q);
    }
    store
}

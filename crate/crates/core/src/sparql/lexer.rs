//! Tokenizer for the query subset. Tracks 1-based line and column (in
//! characters) for every token so parse errors can point at the source.

use super::SyntaxError;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Iri(String),
    /// `prefix:local`; either side may be empty.
    PName(String, String),
    Var(String),
    /// String literal body with escapes decoded.
    Str(String),
    LangTag(String),
    /// Numeric literal text and its XSD datatype local name.
    Number(String, &'static str),
    /// Bare identifier: keywords, `a`, `true`/`false`, function names.
    Ident(String),
    BlankNode(String),
    DoubleCaret,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Dot,
    Comma,
    Semicolon,
    Star,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Bang,
    Eof,
}

impl Tok {
    /// Human-readable rendering for "found ..." messages.
    pub fn describe(&self) -> String {
        match self {
            Tok::Iri(i) => format!("<{i}>"),
            Tok::PName(p, l) => format!("{p}:{l}"),
            Tok::Var(v) => format!("?{v}"),
            Tok::Str(s) => format!("{s:?}"),
            Tok::LangTag(t) => format!("@{t}"),
            Tok::Number(n, _) => n.clone(),
            Tok::Ident(i) => i.clone(),
            Tok::BlankNode(b) => b.clone(),
            Tok::DoubleCaret => "'^^'".into(),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Dot => "'.'".into(),
            Tok::Comma => "','".into(),
            Tok::Semicolon => "';'".into(),
            Tok::Star => "'*'".into(),
            Tok::Eq => "'='".into(),
            Tok::Ne => "'!='".into(),
            Tok::Lt => "'<'".into(),
            Tok::Le => "'<='".into(),
            Tok::Gt => "'>'".into(),
            Tok::Ge => "'>='".into(),
            Tok::AndAnd => "'&&'".into(),
            Tok::OrOr => "'||'".into(),
            Tok::Bang => "'!'".into(),
            Tok::Eof => "end of input".into(),
        }
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(self, Tok::Ident(i) if i.eq_ignore_ascii_case(kw))
    }

    fn ends_value(&self) -> bool {
        matches!(
            self,
            Tok::Iri(_) | Tok::PName(..) | Tok::Var(_) | Tok::Str(_) | Tok::Number(..) | Tok::RParen | Tok::LangTag(_)
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut lx = Lexer {
        chars: src.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out: Vec<Token> = Vec::new();
    loop {
        lx.skip_trivia();
        let (line, col) = (lx.line, lx.col);
        let prev_value = out.last().is_some_and(|t| t.tok.ends_value());
        let tok = lx.next_tok(prev_value)?;
        let eof = tok == Tok::Eof;
        out.push(Token { tok, line, col });
        if eof {
            return Ok(out);
        }
    }
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || (!c.is_ascii() && c.is_alphabetic())
}

fn is_name_char(c: char) -> bool {
    is_name_start(c) || c.is_ascii_digit() || c == '-'
}

impl Lexer {
    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn peek(&self) -> Option<char> {
        self.peek_at(0)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, expected: &str, found: impl Into<String>) -> SyntaxError {
        SyntaxError {
            line: self.line,
            col: self.col,
            expected: expected.into(),
            found: found.into(),
        }
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('#') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn next_tok(&mut self, prev_value: bool) -> Result<Tok, SyntaxError> {
        let Some(c) = self.peek() else {
            return Ok(Tok::Eof);
        };
        let simple = |lx: &mut Self, n: usize, t: Tok| {
            for _ in 0..n {
                lx.bump();
            }
            Ok(t)
        };
        match c {
            '{' => simple(self, 1, Tok::LBrace),
            '}' => simple(self, 1, Tok::RBrace),
            '(' => simple(self, 1, Tok::LParen),
            ')' => simple(self, 1, Tok::RParen),
            ',' => simple(self, 1, Tok::Comma),
            ';' => simple(self, 1, Tok::Semicolon),
            '*' => simple(self, 1, Tok::Star),
            '=' => simple(self, 1, Tok::Eq),
            '!' if self.peek_at(1) == Some('=') => simple(self, 2, Tok::Ne),
            '!' => simple(self, 1, Tok::Bang),
            '&' if self.peek_at(1) == Some('&') => simple(self, 2, Tok::AndAnd),
            '|' if self.peek_at(1) == Some('|') => simple(self, 2, Tok::OrOr),
            '^' if self.peek_at(1) == Some('^') => simple(self, 2, Tok::DoubleCaret),
            '>' if self.peek_at(1) == Some('=') => simple(self, 2, Tok::Ge),
            '>' => simple(self, 1, Tok::Gt),
            '<' => {
                if let Some(iri) = self.try_iri()? {
                    return Ok(Tok::Iri(iri));
                }
                if self.peek_at(1) == Some('=') {
                    simple(self, 2, Tok::Le)
                } else {
                    simple(self, 1, Tok::Lt)
                }
            }
            '?' | '$' => {
                self.bump();
                let name = self.name_chars(|c| is_name_start(c) || c.is_ascii_digit(), |c| {
                    is_name_start(c) || c.is_ascii_digit()
                });
                if name.is_empty() {
                    return Err(self.err("variable name", self.peek().map_or("end of input".into(), |c| c.to_string())));
                }
                Ok(Tok::Var(name))
            }
            '"' | '\'' => self.string(c),
            '@' if !prev_value => Err(self.err("term", "'@'")),
            '@' => {
                self.bump();
                let tag = self.name_chars(|c| c.is_ascii_alphabetic(), |c| c.is_ascii_alphanumeric() || c == '-');
                if tag.is_empty() {
                    return Err(self.err("language tag", "'@'"));
                }
                Ok(Tok::LangTag(tag))
            }
            '_' if self.peek_at(1) == Some(':') => {
                self.bump();
                self.bump();
                let label = self.name_chars(is_name_char, is_name_char);
                Ok(Tok::BlankNode(format!("_:{label}")))
            }
            '[' => {
                self.bump();
                Ok(Tok::BlankNode("[".into()))
            }
            '.' if self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) && !prev_value => self.number(),
            '.' => simple(self, 1, Tok::Dot),
            // the subset has no arithmetic, so a sign before a digit always belongs to the number
            '+' | '-' if self.peek_at(1).is_some_and(|d| d.is_ascii_digit() || d == '.') => {
                self.number()
            }
            d if d.is_ascii_digit() => self.number(),
            ':' => self.pname(String::new()),
            s if is_name_start(s) => {
                let word = self.name_chars(is_name_start, |c| is_name_char(c) || c == '.');
                // a trailing '.' ends the statement, it is not part of the name
                let word = self.give_back_dots(word);
                if self.peek() == Some(':') {
                    self.pname(word)
                } else {
                    Ok(Tok::Ident(word))
                }
            }
            other => Err(self.err("token", format!("'{other}'"))),
        }
    }

    fn give_back_dots(&mut self, mut word: String) -> String {
        while word.ends_with('.') {
            word.pop();
            self.pos -= 1;
            self.col -= 1;
        }
        word
    }

    fn name_chars(&mut self, first: impl Fn(char) -> bool, rest: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        if let Some(c) = self.peek().filter(|&c| first(c)) {
            s.push(c);
            self.bump();
            while let Some(c) = self.peek().filter(|&c| rest(c)) {
                s.push(c);
                self.bump();
            }
        }
        s
    }

    fn pname(&mut self, prefix: String) -> Result<Tok, SyntaxError> {
        self.bump(); // ':'
        let local = self.name_chars(
            |c| is_name_char(c) || c.is_ascii_digit() || c == ':',
            |c| is_name_char(c) || c == ':' || c == '.',
        );
        let local = self.give_back_dots(local);
        Ok(Tok::PName(prefix, local))
    }

    /// Scans `<...>` as an IRI if it is one; leaves the cursor alone otherwise
    /// so `<` can be read as a comparison.
    fn try_iri(&mut self) -> Result<Option<String>, SyntaxError> {
        let mut i = self.pos + 1;
        loop {
            match self.chars.get(i) {
                Some('>') => break,
                Some(&c) if c <= ' ' || "<\"{}|^`".contains(c) => return Ok(None),
                Some(_) => i += 1,
                None => return Ok(None),
            }
        }
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                Some('>') => break,
                Some('\\') => match self.bump() {
                    Some('u') => out.push(self.hex(4)?),
                    Some('U') => out.push(self.hex(8)?),
                    _ => return Err(self.err("\\u or \\U escape", "'\\'")),
                },
                Some(c) => out.push(c),
                None => unreachable!("scanned ahead"),
            }
        }
        Ok(Some(out))
    }

    fn hex(&mut self, n: usize) -> Result<char, SyntaxError> {
        let mut v = 0u32;
        for _ in 0..n {
            let c = self.peek();
            match c.and_then(|c| c.to_digit(16)) {
                Some(d) => {
                    v = v * 16 + d;
                    self.bump();
                }
                None => return Err(self.err("hex digit", c.map_or("end of input".into(), |c| format!("'{c}'")))),
            }
        }
        char::from_u32(v).ok_or_else(|| self.err("valid code point", format!("U+{v:X}")))
    }

    fn string(&mut self, quote: char) -> Result<Tok, SyntaxError> {
        let (line, col) = (self.line, self.col);
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => {
                    return Err(SyntaxError {
                        line,
                        col,
                        expected: "closing quote".into(),
                        found: "unterminated string".into(),
                    })
                }
                Some(c) if c == quote => return Ok(Tok::Str(out)),
                Some('\\') => {
                    let esc = match self.bump() {
                        Some('t') => '\t',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('b') => '\u{8}',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('u') => self.hex(4)?,
                        Some('U') => self.hex(8)?,
                        other => {
                            return Err(self.err(
                                "string escape",
                                other.map_or("end of input".into(), |c| format!("'\\{c}'")),
                            ))
                        }
                    };
                    out.push(esc);
                }
                Some(c) => out.push(c),
            }
        }
    }

    fn number(&mut self) -> Result<Tok, SyntaxError> {
        let mut s = String::new();
        if let Some(c @ ('+' | '-')) = self.peek() {
            s.push(c);
            self.bump();
        }
        let digits = |lx: &mut Self, s: &mut String| {
            while let Some(d) = lx.peek().filter(char::is_ascii_digit) {
                s.push(d);
                lx.bump();
            }
        };
        digits(self, &mut s);
        let mut kind = "integer";
        if self.peek() == Some('.') && self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) {
            s.push('.');
            self.bump();
            digits(self, &mut s);
            kind = "decimal";
        }
        if let Some(e @ ('e' | 'E')) = self.peek() {
            let sign = matches!(self.peek_at(1), Some('+' | '-'));
            let digit_at = if sign { 2 } else { 1 };
            if self.peek_at(digit_at).is_some_and(|d| d.is_ascii_digit()) {
                s.push(e);
                self.bump();
                if sign {
                    s.push(self.bump().unwrap());
                }
                digits(self, &mut s);
                kind = "double";
            }
        }
        Ok(Tok::Number(s, kind))
    }
}

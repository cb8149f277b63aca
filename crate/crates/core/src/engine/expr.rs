//! Filter expression evaluation.
//!
//! Errors follow SPARQL's convention: a type error (unbound variable,
//! incomparable operands, bad regex) makes the filter reject the row, and
//! `&&` / `||` absorb an error when the other side decides the result.
//! Function calls outside the supported set are a hard error.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::HashMap;

use regex::Regex;

use crate::rdf::Term;
use crate::sparql::{CompareOp, Expr, XSD};

#[derive(Clone, Debug, PartialEq)]
pub enum ExprError {
    /// Evaluation error: the row is filtered out.
    Type,
    Unsupported(String),
}

#[derive(Clone, Copy, Debug)]
enum Value<'t> {
    Term(&'t Term),
    Bool(bool),
}

const NUMERIC_TYPES: [&str; 16] = [
    "integer",
    "decimal",
    "double",
    "float",
    "int",
    "long",
    "short",
    "byte",
    "nonNegativeInteger",
    "positiveInteger",
    "negativeInteger",
    "nonPositiveInteger",
    "unsignedInt",
    "unsignedLong",
    "unsignedShort",
    "unsignedByte",
];

fn xsd_local(datatype: &str) -> Option<&str> {
    datatype.strip_prefix(XSD)
}

fn numeric(t: &Term) -> Option<f64> {
    match t {
        Term::Literal {
            lexical,
            datatype: Some(dt),
            ..
        } if xsd_local(dt).is_some_and(|l| NUMERIC_TYPES.contains(&l)) => lexical.trim().parse().ok(),
        _ => None,
    }
}

fn is_string_like(t: &Term) -> bool {
    match t {
        Term::Literal {
            datatype, language, ..
        } => language.is_none() && datatype.as_deref().is_none_or(|d| d == format!("{XSD}string")),
        _ => false,
    }
}

fn boolean(t: &Term) -> Option<bool> {
    match t {
        Term::Literal {
            lexical,
            datatype: Some(dt),
            ..
        } if *dt == format!("{XSD}boolean") => match lexical.as_str() {
            "true" | "1" => Some(true),
            "false" | "0" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

fn ordered_datatype(t: &Term) -> Option<&str> {
    match t {
        Term::Literal {
            datatype: Some(dt), ..
        } if matches!(xsd_local(dt), Some("dateTime" | "date" | "time")) => Some(dt),
        _ => None,
    }
}

/// Effective boolean value.
fn ebv(v: Value<'_>) -> Result<bool, ExprError> {
    match v {
        Value::Bool(b) => Ok(b),
        Value::Term(t) => {
            if let Some(b) = boolean(t) {
                return Ok(b);
            }
            if let Some(n) = numeric(t) {
                return Ok(n != 0.0 && !n.is_nan());
            }
            if is_string_like(t) || matches!(t, Term::Literal { language: Some(_), .. }) {
                return Ok(!t.lexical().is_empty());
            }
            Err(ExprError::Type)
        }
    }
}

fn apply(op: CompareOp, ord: Option<Ordering>) -> bool {
    match (op, ord) {
        (CompareOp::Ne, None) => true,
        (_, None) => false,
        (CompareOp::Eq, Some(o)) => o == Ordering::Equal,
        (CompareOp::Ne, Some(o)) => o != Ordering::Equal,
        (CompareOp::Lt, Some(o)) => o == Ordering::Less,
        (CompareOp::Le, Some(o)) => o != Ordering::Greater,
        (CompareOp::Gt, Some(o)) => o == Ordering::Greater,
        (CompareOp::Ge, Some(o)) => o != Ordering::Less,
    }
}

fn compare(op: CompareOp, a: Value<'_>, b: Value<'_>) -> Result<bool, ExprError> {
    let equality = matches!(op, CompareOp::Eq | CompareOp::Ne);
    let as_bool = |v: Value<'_>| match v {
        Value::Bool(b) => Some(b),
        Value::Term(t) => boolean(t),
    };
    if let (Some(x), Some(y)) = (as_bool(a), as_bool(b)) {
        return Ok(apply(op, Some(x.cmp(&y))));
    }
    let (Value::Term(x), Value::Term(y)) = (a, b) else {
        return Err(ExprError::Type);
    };
    if let (Some(p), Some(q)) = (numeric(x), numeric(y)) {
        return Ok(apply(op, p.partial_cmp(&q)));
    }
    if is_string_like(x) && is_string_like(y) {
        return Ok(apply(op, Some(x.lexical().cmp(y.lexical()))));
    }
    if let (Some(dx), Some(dy)) = (ordered_datatype(x), ordered_datatype(y)) {
        if dx == dy {
            return Ok(apply(op, Some(x.lexical().cmp(y.lexical()))));
        }
    }
    if equality {
        let same = x == y;
        return Ok(if op == CompareOp::Eq { same } else { !same });
    }
    Err(ExprError::Type)
}

/// Evaluates filter expressions against rows; caches compiled regexes.
#[derive(Default)]
pub struct ExprEvaluator {
    regexes: RefCell<HashMap<(String, String), Option<Regex>>>,
}

impl ExprEvaluator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Whether the row passes the filter. `lookup` resolves variables.
    pub fn test<'t>(&self, e: &'t Expr, lookup: &dyn Fn(&str) -> Option<&'t Term>) -> Result<bool, ExprError> {
        match self.eval(e, lookup).and_then(ebv) {
            Ok(b) => Ok(b),
            Err(ExprError::Type) => Ok(false),
            Err(u) => Err(u),
        }
    }

    fn eval<'t>(&self, e: &'t Expr, lookup: &dyn Fn(&str) -> Option<&'t Term>) -> Result<Value<'t>, ExprError> {
        match e {
            Expr::Var(v) => lookup(v).map(Value::Term).ok_or(ExprError::Type),
            Expr::Const(t) => Ok(Value::Term(t)),
            Expr::Bound(v) => Ok(Value::Bool(lookup(v).is_some())),
            Expr::Not(inner) => Ok(Value::Bool(!ebv(self.eval(inner, lookup)?)?)),
            Expr::And(a, b) | Expr::Or(a, b) => {
                let is_and = matches!(e, Expr::And(..));
                let x = self.eval(a, lookup).and_then(ebv);
                let y = self.eval(b, lookup).and_then(ebv);
                for r in [&x, &y] {
                    if let Err(ExprError::Unsupported(u)) = r {
                        return Err(ExprError::Unsupported(u.clone()));
                    }
                }
                // the deciding value wins over an error on the other side
                let decider = !is_and;
                match (x, y) {
                    (Ok(p), _) if p == decider => Ok(Value::Bool(decider)),
                    (_, Ok(q)) if q == decider => Ok(Value::Bool(decider)),
                    (Ok(_), Ok(_)) => Ok(Value::Bool(!decider)),
                    _ => Err(ExprError::Type),
                }
            }
            Expr::Compare(op, a, b) => {
                let x = self.eval(a, lookup);
                let y = self.eval(b, lookup);
                Ok(Value::Bool(compare(*op, x?, y?)?))
            }
            Expr::Regex(args) => {
                let vals = args
                    .iter()
                    .map(|a| self.eval(a, lookup))
                    .collect::<Result<Vec<_>, _>>()?;
                let text = match vals[0] {
                    Value::Term(t @ Term::Literal { .. }) => t.lexical(),
                    _ => return Err(ExprError::Type),
                };
                let string_arg = |v: &Value<'_>| match v {
                    Value::Term(t) if is_string_like(t) => Ok(t.lexical().to_string()),
                    _ => Err(ExprError::Type),
                };
                let pattern = string_arg(&vals[1])?;
                let flags = match vals.get(2) {
                    Some(v) => string_arg(v)?,
                    None => String::new(),
                };
                let mut cache = self.regexes.borrow_mut();
                let re = cache
                    .entry((pattern.clone(), flags.clone()))
                    .or_insert_with(|| compile_regex(&pattern, &flags));
                match re {
                    Some(re) => Ok(Value::Bool(re.is_match(text))),
                    None => Err(ExprError::Type),
                }
            }
            Expr::Call { name, .. } => Err(ExprError::Unsupported(name.clone())),
        }
    }
}

fn compile_regex(pattern: &str, flags: &str) -> Option<Regex> {
    if !flags.chars().all(|c| "imsx".contains(c)) {
        return None;
    }
    let full = if flags.is_empty() {
        pattern.to_string()
    } else {
        format!("(?{flags}){pattern}")
    };
    Regex::new(&full).ok()
}

/// Name of the first unsupported function call in `e`, if any.
pub fn first_unsupported(e: &Expr) -> Option<&str> {
    match e {
        Expr::Call { name, .. } => Some(name),
        Expr::Var(_) | Expr::Const(_) | Expr::Bound(_) => None,
        Expr::Not(x) => first_unsupported(x),
        Expr::And(a, b) | Expr::Or(a, b) | Expr::Compare(_, a, b) => first_unsupported(a).or_else(|| first_unsupported(b)),
        Expr::Regex(args) => args.iter().find_map(first_unsupported),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparql::{parse_query, NodeKind};

    fn filter_expr(text: &str) -> Expr {
        let q = parse_query(&format!("SELECT * WHERE {{ GRAPH ?g {{ FILTER ({text}) }} }}")).unwrap();
        match &q.root.children[0].children[0].kind {
            NodeKind::Predicate(e) => e.clone(),
            other => panic!("{other:?}"),
        }
    }

    fn check(text: &str, bindings: &[(&str, Term)]) -> Result<bool, ExprError> {
        let e = filter_expr(text);
        let ev = ExprEvaluator::new();
        let lookup = |v: &str| bindings.iter().find(|(n, _)| *n == v).map(|(_, t)| t);
        ev.test(&e, &lookup)
    }

    fn int(n: i64) -> Term {
        Term::typed_literal(n.to_string(), format!("{XSD}integer"))
    }

    #[test]
    fn numeric_comparisons_coerce() {
        let x = [("x", int(5))];
        assert_eq!(check("?x > 3", &x), Ok(true));
        assert_eq!(check("?x < 3", &x), Ok(false));
        assert_eq!(check("?x = 5.0", &x), Ok(true));
        assert_eq!(check("?x >= \"5\"^^<http://www.w3.org/2001/XMLSchema#double>", &x), Ok(true));
        assert_eq!(check("?x != 5", &x), Ok(false));
    }

    #[test]
    fn strings_and_terms() {
        let b = [("s", Term::literal("abc")), ("i", Term::iri("http://x"))];
        assert_eq!(check("?s < \"abd\"", &b), Ok(true));
        assert_eq!(check("?s = \"abc\"", &b), Ok(true));
        assert_eq!(check("?i = <http://x>", &b), Ok(true));
        assert_eq!(check("?i != <http://y>", &b), Ok(true));
        // ordering IRIs is a type error, which rejects the row
        assert_eq!(check("?i < <http://y>", &b), Ok(false));
        assert_eq!(check("!(?i < <http://y>)", &b), Ok(false));
        assert_eq!(check("?s = \"abc\"@en", &b), Ok(false));
    }

    #[test]
    fn unbound_and_logic() {
        let b = [("x", int(1))];
        assert_eq!(check("bound(?x)", &b), Ok(true));
        assert_eq!(check("!bound(?y)", &b), Ok(true));
        assert_eq!(check("?y = 1", &b), Ok(false));
        assert_eq!(check("?y = 1 || ?x = 1", &b), Ok(true));
        assert_eq!(check("?x = 1 || ?y = 1", &b), Ok(true));
        assert_eq!(check("?y = 1 && ?x = 2", &b), Ok(false));
        assert_eq!(check("!(?y = 1 && ?x = 1)", &b), Ok(false));
    }

    #[test]
    fn regex_matching() {
        let b = [("n", Term::lang_literal("Mani Ratnam", "en")), ("i", Term::iri("http://m"))];
        assert_eq!(check("regex(?n, \"^mani\", \"i\")", &b), Ok(true));
        assert_eq!(check("regex(?n, \"^mani\")", &b), Ok(false));
        assert_eq!(check("regex(?i, \"m\")", &b), Ok(false));
        assert_eq!(check("regex(?n, \"(\")", &b), Ok(false));
        assert_eq!(check("regex(?n, \"a\", \"q\")", &b), Ok(false));
    }

    #[test]
    fn effective_boolean_values() {
        let b = [("t", Term::typed_literal("true", format!("{XSD}boolean"))), ("z", int(0)), ("e", Term::literal(""))];
        assert_eq!(check("?t", &b), Ok(true));
        assert_eq!(check("?z", &b), Ok(false));
        assert_eq!(check("?e", &b), Ok(false));
        assert_eq!(check("?t = true", &b), Ok(true));
        assert_eq!(check("<http://x>", &b), Ok(false));
    }

    #[test]
    fn unsupported_calls_are_hard_errors() {
        let b = [("x", int(1))];
        assert_eq!(check("str(?x) = \"1\"", &b), Err(ExprError::Unsupported("str".into())));
        assert_eq!(check("true || str(?x)", &b), Err(ExprError::Unsupported("str".into())));
        assert_eq!(first_unsupported(&filter_expr("?x = 1 && lang(?x)")), Some("lang"));
        assert_eq!(first_unsupported(&filter_expr("regex(?x, \"a\")")), None);
    }
}

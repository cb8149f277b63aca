//! Reference evaluators that ignore the index and the engine's executor.
//!
//! They favour obviousness over speed: BGPs are matched by trying every
//! triple for every pattern in a fixed order, solutions are maps, and
//! joins compare every pair of rows.
#![allow(dead_code)]

use std::collections::BTreeMap;

use riq::engine::expr::ExprEvaluator;
use riq::pattern::{PatternTerm, TriplePattern};
use riq::rdf::{GraphStore, Term, Triple};
use riq::sparql::{Node, NodeKind, Query};

pub type Solution = BTreeMap<String, Term>;
pub type Row = Vec<Option<Term>>;

fn unify(tp: &TriplePattern, t: &Triple, sol: &Solution) -> Option<Solution> {
    let mut out = sol.clone();
    for (p, term) in [(&tp.subject, &t.subject), (&tp.predicate, &t.predicate), (&tp.object, &t.object)] {
        match p {
            PatternTerm::Term(c) => {
                if c != term {
                    return None;
                }
            }
            PatternTerm::Var(v) => match out.get(v) {
                Some(bound) if bound != term => return None,
                Some(_) => {}
                None => {
                    out.insert(v.clone(), term.clone());
                }
            },
        }
    }
    Some(out)
}

/// Patterns reordered so that each one shares a variable with an earlier
/// one whenever possible; only affects speed.
fn connected_order(bgp: &[TriplePattern]) -> Vec<&TriplePattern> {
    let mut rest: Vec<&TriplePattern> = bgp.iter().collect();
    let mut order = Vec::new();
    let mut vars: Vec<&str> = Vec::new();
    while !rest.is_empty() {
        let i = rest
            .iter()
            .position(|tp| tp.variables().any(|v| vars.contains(&v)) || tp.variables().next().is_none())
            .unwrap_or(0);
        let tp = rest.remove(i);
        vars.extend(tp.variables());
        order.push(tp);
    }
    order
}

fn extend(order: &[&TriplePattern], triples: &[&Triple], sol: &Solution, out: &mut Vec<Solution>, limit: usize) {
    if out.len() >= limit {
        return;
    }
    let Some((tp, rest)) = order.split_first() else {
        out.push(sol.clone());
        return;
    };
    for t in triples {
        if let Some(next) = unify(tp, t, sol) {
            extend(rest, triples, &next, out, limit);
        }
    }
}

/// All solutions of `bgp` over `triples` compatible with `seed`.
pub fn bgp_solutions(bgp: &[TriplePattern], triples: &[&Triple], seed: &Solution, limit: usize) -> Vec<Solution> {
    let order = connected_order(bgp);
    let mut out = Vec::new();
    extend(&order, triples, seed, &mut out, limit);
    out
}

pub fn has_match(bgp: &[TriplePattern], triples: &[&Triple]) -> bool {
    !bgp_solutions(bgp, triples, &Solution::new(), 1).is_empty()
}

/// Graph ids whose triples contain a match of `bgp`.
pub fn matching_graphs(bgp: &[TriplePattern], store: &GraphStore) -> Vec<usize> {
    store
        .graphs()
        .filter(|g| has_match(bgp, &g.triples.iter().collect::<Vec<_>>()))
        .map(|g| g.id)
        .collect()
}

fn compatible(a: &Solution, b: &Solution) -> bool {
    a.iter().all(|(k, v)| b.get(k).is_none_or(|w| w == v))
}

fn join(left: Vec<Solution>, right: &[Solution], keep_unmatched: bool) -> Vec<Solution> {
    let mut out = Vec::new();
    for l in left {
        let mut matched = false;
        for r in right {
            if compatible(&l, r) {
                let mut m = l.clone();
                m.extend(r.iter().map(|(k, v)| (k.clone(), v.clone())));
                out.push(m);
                matched = true;
            }
        }
        if keep_unmatched && !matched {
            out.push(l);
        }
    }
    out
}

struct Oracle<'a> {
    triples: Vec<&'a Triple>,
    exprs: ExprEvaluator,
}

impl Oracle<'_> {
    fn group(&self, node: &Node) -> Vec<Solution> {
        let mut rows = vec![Solution::new()];
        let mut filters = Vec::new();
        for child in &node.children {
            rows = match &child.kind {
                NodeKind::Bgp(b) => join(rows, &bgp_solutions(b, &self.triples, &Solution::new(), usize::MAX), false),
                NodeKind::Union => {
                    let alternatives: Vec<Solution> = child.children.iter().flat_map(|c| self.group(c)).collect();
                    join(rows, &alternatives, false)
                }
                NodeKind::Optional => join(rows, &self.group(&child.children[0]), true),
                NodeKind::Filter => {
                    filters.push(&child.children[0]);
                    rows
                }
                other => panic!("unexpected {other:?} in a group"),
            };
        }
        rows.retain(|row| filters.iter().all(|f| self.holds(f, row)));
        rows
    }

    fn holds(&self, c: &Node, row: &Solution) -> bool {
        match &c.kind {
            NodeKind::Predicate(e) => self
                .exprs
                .test(e, &|v| row.get(v))
                .expect("oracle queries use supported functions only"),
            NodeKind::Exists | NodeKind::NotExists => {
                let bgp = c.children[0].as_bgp().unwrap_or(&[]);
                let found = !bgp_solutions(bgp, &self.triples, row, 1).is_empty();
                found == (c.kind == NodeKind::Exists)
            }
            other => panic!("unexpected constraint {other:?}"),
        }
    }
}

/// Rows of `q` over the whole store, projected onto `q.columns()`, before
/// DISTINCT, OFFSET and LIMIT.
pub fn evaluate(q: &Query, store: &GraphStore) -> Vec<Row> {
    let columns = q.columns();
    let mut rows = Vec::new();
    for g in store.graphs() {
        let oracle = Oracle {
            triples: g.triples.iter().collect(),
            exprs: ExprEvaluator::new(),
        };
        for mut sol in oracle.group(&q.root) {
            match sol.get(&q.graph_var) {
                Some(t) if t != g.context => continue,
                _ => {
                    sol.insert(q.graph_var.clone(), g.context.clone());
                }
            }
            rows.push(columns.iter().map(|c| sol.get(c).cloned()).collect());
        }
    }
    rows
}

/// `evaluate` followed by DISTINCT when the query asks for it.
pub fn evaluate_distinct(q: &Query, store: &GraphStore) -> Vec<Row> {
    let mut rows = evaluate(q, store);
    if q.distinct {
        let mut seen = std::collections::HashSet::new();
        rows.retain(|r| seen.insert(r.clone()));
    }
    rows
}

pub fn sorted(mut rows: Vec<Row>) -> Vec<Row> {
    rows.sort();
    rows
}

/// True when `sub` is a sub-multiset of `rows`.
pub fn is_sub_bag(sub: &[Row], rows: &[Row]) -> bool {
    let mut counts: BTreeMap<&Row, i64> = BTreeMap::new();
    for r in rows {
        *counts.entry(r).or_default() += 1;
    }
    sub.iter().all(|r| {
        let c = counts.entry(r).or_default();
        *c -= 1;
        *c >= 0
    })
}

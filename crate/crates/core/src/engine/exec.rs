//! In-process query execution over the graphs of one group.
//!
//! Every graph is evaluated on its own: a GRAPH block never joins triples
//! from different graphs. Inside a graph the algebra is the usual one with
//! bag semantics:
//!
//! * a BGP extends each incoming row by backtracking search, always
//!   expanding the pattern with the fewest candidate triples under the
//!   current bindings (exact counts from subject/predicate/object indexes);
//! * nested groups and UNION branches are evaluated independently and joined
//!   on compatible bindings;
//! * OPTIONAL is a left join against its group, whose filters see only the
//!   optional group's own rows;
//! * filters of a group apply to all of the group's rows at the end;
//!   EXISTS / NOT EXISTS substitute the row's bindings into the pattern and
//!   search the same graph.

use std::collections::HashMap;

use indexmap::IndexMap;

use super::expr::{ExprError, ExprEvaluator};
use super::{BindingTable, EngineError};
use crate::pattern::{PatternTerm, TriplePattern};
use crate::rdf::{GraphRef, Term, Triple};
use crate::sparql::{Node, NodeKind, Query};

type Row<'a> = Vec<Option<&'a Term>>;

/// Subject/predicate/object postings for one graph.
struct GraphIndex<'a> {
    triples: Vec<&'a Triple>,
    by_pos: [HashMap<&'a Term, Vec<u32>>; 3],
}

impl<'a> GraphIndex<'a> {
    fn new(graph: &GraphRef<'a>) -> Self {
        let triples: Vec<&'a Triple> = graph.triples.iter().collect();
        let mut by_pos: [HashMap<&'a Term, Vec<u32>>; 3] = Default::default();
        for (i, t) in triples.iter().enumerate() {
            for (pos, term) in [&t.subject, &t.predicate, &t.object].into_iter().enumerate() {
                by_pos[pos].entry(term).or_default().push(i as u32);
            }
        }
        GraphIndex { triples, by_pos }
    }
}

enum Candidates<'i> {
    All(usize),
    Some(&'i [u32]),
}

impl Candidates<'_> {
    fn len(&self) -> usize {
        match self {
            Candidates::All(n) => *n,
            Candidates::Some(s) => s.len(),
        }
    }
}

/// A query compiled against a variable numbering.
pub(crate) struct Executor<'q> {
    query: &'q Query,
    slots: IndexMap<&'q str, usize>,
    exprs: ExprEvaluator,
}

fn fields(tp: &TriplePattern) -> [&PatternTerm; 3] {
    [&tp.subject, &tp.predicate, &tp.object]
}

impl<'q> Executor<'q> {
    pub(crate) fn new(query: &'q Query) -> Self {
        let mut slots: IndexMap<&'q str, usize> = IndexMap::new();
        let mut add = |v: &'q str| {
            let n = slots.len();
            slots.entry(v).or_insert(n);
        };
        add(&query.graph_var);
        if let crate::sparql::Selection::Vars(vs) = &query.selection {
            vs.iter().for_each(|v| add(v));
        }
        query.root.walk(&mut |n| match &n.kind {
            NodeKind::Bgp(b) => b.iter().flat_map(|tp| tp.variables()).for_each(&mut add),
            NodeKind::Predicate(e) => {
                let mut vs = Vec::new();
                e.variables(&mut vs);
                vs.into_iter().for_each(&mut add);
            }
            _ => {}
        });
        Executor {
            query,
            slots,
            exprs: ExprEvaluator::new(),
        }
    }

    fn slot(&self, v: &str) -> usize {
        self.slots[v]
    }

    /// Rows of the query body over `graphs`, projected onto the query's
    /// columns. Result modifiers are not applied.
    pub(crate) fn run<'a>(&self, graphs: &[GraphRef<'a>]) -> Result<BindingTable, EngineError>
    where
        'q: 'a,
    {
        let columns = self.query.columns();
        let proj: Vec<usize> = columns.iter().map(|c| self.slot(c)).collect();
        let mut rows = Vec::new();
        let g = self.slot(&self.query.graph_var);
        for graph in graphs {
            let index = GraphIndex::new(graph);
            for mut row in self.group(&self.query.root, &index)? {
                // join with the single binding {graph var -> context}
                match row[g] {
                    Some(t) if t != graph.context => continue,
                    _ => row[g] = Some(graph.context),
                }
                rows.push(proj.iter().map(|&s| row[s].cloned()).collect());
            }
        }
        Ok(BindingTable { columns, rows })
    }

    fn empty_row<'a>(&self) -> Row<'a> {
        vec![None; self.slots.len()]
    }

    fn group<'a>(&self, node: &'q Node, g: &GraphIndex<'a>) -> Result<Vec<Row<'a>>, EngineError>
    where
        'q: 'a,
    {
        let mut rows = vec![self.empty_row()];
        let mut filters = Vec::new();
        for child in &node.children {
            match &child.kind {
                NodeKind::Bgp(b) => {
                    let mut out = Vec::new();
                    for mut row in rows {
                        self.extend(b, &mut row, g, &mut out, usize::MAX);
                    }
                    rows = out;
                }
                NodeKind::Union => {
                    let mut alt = Vec::new();
                    for branch in &child.children {
                        alt.extend(self.group(branch, g)?);
                    }
                    rows = join(&rows, &alt, false);
                }
                NodeKind::Optional => {
                    let opt = self.group(&child.children[0], g)?;
                    rows = join(&rows, &opt, true);
                }
                NodeKind::Filter => filters.push(&child.children[0]),
                other => unreachable!("{other:?} inside a group"),
            }
            if rows.is_empty() {
                break;
            }
        }
        if filters.is_empty() {
            return Ok(rows);
        }
        let mut kept = Vec::with_capacity(rows.len());
        'rows: for row in rows {
            for f in &filters {
                if !self.constraint(f, &row, g)? {
                    continue 'rows;
                }
            }
            kept.push(row);
        }
        Ok(kept)
    }

    fn constraint<'a>(&self, c: &'q Node, row: &Row<'a>, g: &GraphIndex<'a>) -> Result<bool, EngineError>
    where
        'q: 'a,
    {
        match &c.kind {
            NodeKind::Predicate(e) => {
                let lookup = |v: &str| self.slots.get(v).and_then(|&s| row[s]);
                self.exprs.test(e, &lookup).map_err(|err| match err {
                    ExprError::Unsupported(name) => EngineError::UnsupportedExpression(name),
                    ExprError::Type => unreachable!("type errors are absorbed"),
                })
            }
            NodeKind::Exists | NodeKind::NotExists => {
                let bgp = c.children[0].as_bgp().unwrap_or(&[]);
                let mut probe = row.clone();
                let mut out = Vec::new();
                self.extend(bgp, &mut probe, g, &mut out, 1);
                Ok(out.is_empty() == (c.kind == NodeKind::NotExists))
            }
            other => unreachable!("{other:?} as a constraint"),
        }
    }

    /// Appends to `out` every extension of `row` matching all of `bgp`,
    /// stopping after `limit` results.
    fn extend<'a>(&self, bgp: &'q [TriplePattern], row: &mut Row<'a>, g: &GraphIndex<'a>, out: &mut Vec<Row<'a>>, limit: usize)
    where
        'q: 'a,
    {
        let mut pending: Vec<&'q TriplePattern> = bgp.iter().collect();
        self.search(&mut pending, row, g, out, limit);
    }

    fn resolve<'a>(&self, t: &'q PatternTerm, row: &Row<'a>) -> Option<&'a Term>
    where
        'q: 'a,
    {
        match t {
            PatternTerm::Term(c) => Some(c),
            PatternTerm::Var(v) => row[self.slot(v)],
        }
    }

    fn candidates<'a, 'i>(&self, tp: &'q TriplePattern, row: &Row<'a>, g: &'i GraphIndex<'a>) -> Candidates<'i>
    where
        'q: 'a,
    {
        let mut best = Candidates::All(g.triples.len());
        for (pos, f) in fields(tp).into_iter().enumerate() {
            if let Some(term) = self.resolve(f, row) {
                let list = g.by_pos[pos].get(term).map_or(&[][..], |v| v.as_slice());
                if list.len() < best.len() {
                    best = Candidates::Some(list);
                }
                if list.is_empty() {
                    break;
                }
            }
        }
        best
    }

    fn search<'a>(
        &self,
        pending: &mut Vec<&'q TriplePattern>,
        row: &mut Row<'a>,
        g: &GraphIndex<'a>,
        out: &mut Vec<Row<'a>>,
        limit: usize,
    ) where
        'q: 'a,
    {
        if out.len() >= limit {
            return;
        }
        if pending.is_empty() {
            out.push(row.clone());
            return;
        }
        let (pick, cands) = pending
            .iter()
            .enumerate()
            .map(|(i, tp)| (i, self.candidates(tp, row, g)))
            .min_by_key(|(_, c)| c.len())
            .unwrap();
        if cands.len() == 0 {
            return;
        }
        let tp = pending.swap_remove(pick);
        let visit = |idx: usize, row: &mut Row<'a>, pending: &mut Vec<&'q TriplePattern>, out: &mut Vec<Row<'a>>| {
            let triple = g.triples[idx];
            let mut bound: [Option<usize>; 3] = [None; 3];
            let mut ok = true;
            for (k, (f, term)) in fields(tp)
                .into_iter()
                .zip([&triple.subject, &triple.predicate, &triple.object])
                .enumerate()
            {
                match f {
                    PatternTerm::Term(c) => ok = c == term,
                    PatternTerm::Var(v) => {
                        let s = self.slot(v);
                        match row[s] {
                            Some(t) => ok = t == term,
                            None => {
                                row[s] = Some(term);
                                bound[k] = Some(s);
                            }
                        }
                    }
                }
                if !ok {
                    break;
                }
            }
            if ok {
                self.search(pending, row, g, out, limit);
            }
            for s in bound.into_iter().flatten() {
                row[s] = None;
            }
        };
        match cands {
            Candidates::All(n) => {
                for idx in 0..n {
                    visit(idx, row, pending, out);
                    if out.len() >= limit {
                        break;
                    }
                }
            }
            Candidates::Some(list) => {
                for &idx in list {
                    visit(idx as usize, row, pending, out);
                    if out.len() >= limit {
                        break;
                    }
                }
            }
        }
        // restore the original order for the caller's next iteration
        pending.push(tp);
        let last = pending.len() - 1;
        pending.swap(pick, last);
    }
}

fn compatible(a: &Row<'_>, b: &Row<'_>) -> bool {
    a.iter().zip(b).all(|(x, y)| match (x, y) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    })
}

fn merge<'a>(a: &Row<'a>, b: &Row<'a>) -> Row<'a> {
    a.iter().zip(b).map(|(x, y)| x.or(*y)).collect()
}

/// Join (or left join) of two bags on compatible bindings.
fn join<'a>(left: &[Row<'a>], right: &[Row<'a>], keep_unmatched: bool) -> Vec<Row<'a>> {
    let mut out = Vec::new();
    for l in left {
        let before = out.len();
        for r in right {
            if compatible(l, r) {
                out.push(merge(l, r));
            }
        }
        if keep_unmatched && out.len() == before {
            out.push(l.clone());
        }
    }
    out
}

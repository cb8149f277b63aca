//! Query answering: filter groups with the index, rewrite the query per
//! candidate group, execute it on the group's graphs, and merge the results.

mod exec;
pub mod expr;

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::index::{GroupRecord, IndexError, PvIndex};
use crate::pattern::{CanonicalPattern, PatternVector, TriplePattern};
use crate::rdf::{GraphRef, Term};
use crate::sparql::{format_query, Node, NodeKind, Query, Selection};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unsupported function in filter: {0}")]
    UnsupportedExpression(String),
    #[error("rewriting pruned every mandatory part of the query")]
    DegenerateQuery,
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Counters gathered while filtering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FilterStats {
    pub groups_tested: u64,
    /// Number of BGP-versus-group filter tests.
    pub bgp_tests: u64,
    /// Filter cells (bits or counters) read.
    pub cells_checked: u64,
}

impl FilterStats {
    fn add(&mut self, o: &FilterStats) {
        self.groups_tested += o.groups_tested;
        self.bgp_tests += o.bgp_tests;
        self.cells_checked += o.cells_checked;
    }
}

/// Whether a BGP, summarised by its Pattern Vector, may match in the group:
/// every SPO fingerprint must hit the group's Bloom filter and every other
/// pattern's counts must be covered by the matching counting filter.
pub fn is_match_vector(pv: &PatternVector, group: &GroupRecord, stats: &mut FilterStats) -> bool {
    stats.bgp_tests += 1;
    let f = &group.filters;
    if !f.spo.contains_items(pv.get(CanonicalPattern::Spo).support(), &mut stats.cells_checked) {
        return false;
    }
    CanonicalPattern::ALL[1..].iter().all(|&p| {
        f.counting(p)
            .expect("non-SPO pattern")
            .contains_multiset(pv.get(p).entries(), &mut stats.cells_checked)
    })
}

pub fn is_match(bgp: &[TriplePattern], group: &GroupRecord) -> bool {
    is_match_vector(&PatternVector::of_bgp(bgp), group, &mut FilterStats::default())
}

/// Filtering outcome for one tree node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EvalNode {
    /// The node's own flag; `None` if skipped by short-circuiting.
    pub flag: Option<bool>,
    /// What the node reported to its parent (OPTIONAL always reports TRUE).
    pub returned: Option<bool>,
    pub children: Vec<EvalNode>,
}

impl EvalNode {
    fn skipped(node: &Node) -> Self {
        EvalNode {
            flag: None,
            returned: None,
            children: node.children.iter().map(EvalNode::skipped).collect(),
        }
    }
}

/// Evaluates the BGP tree with an arbitrary BGP test. `test` receives each
/// BGP's pre-order ordinal among all BGPs of the tree rooted at `node`.
pub fn eval_bgp_tree_with(node: &Node, test: &mut dyn FnMut(usize, &[TriplePattern]) -> bool) -> EvalNode {
    let mut ordinal = 0;
    eval_node(node, &mut ordinal, test)
}

fn eval_node(node: &Node, ordinal: &mut usize, test: &mut dyn FnMut(usize, &[TriplePattern]) -> bool) -> EvalNode {
    let mut children = Vec::with_capacity(node.children.len());
    let mut iter = node.children.iter();
    for child in iter.by_ref() {
        let ev = eval_node(child, ordinal, test);
        let value = ev.returned == Some(true);
        children.push(ev);
        if node.kind == NodeKind::Group && !value {
            for rest in iter.by_ref() {
                *ordinal += rest.bgp_count();
                children.push(EvalNode::skipped(rest));
            }
            return EvalNode {
                flag: Some(false),
                returned: Some(false),
                children,
            };
        }
    }
    let child_value = |i: usize| children.get(i).and_then(|c: &EvalNode| c.returned).unwrap_or(true);
    let flag = match &node.kind {
        NodeKind::Union => children.iter().any(|c| c.returned == Some(true)),
        NodeKind::Exists => child_value(0),
        NodeKind::NotExists | NodeKind::Predicate(_) => true,
        NodeKind::Bgp(b) => {
            let i = *ordinal;
            *ordinal += 1;
            test(i, b)
        }
        // an empty group has no last child and imposes nothing
        NodeKind::Group | NodeKind::Optional | NodeKind::Filter => {
            children.last().map_or(true, |c| c.returned == Some(true))
        }
    };
    let returned = if node.kind == NodeKind::Optional { true } else { flag };
    EvalNode {
        flag: Some(flag),
        returned: Some(returned),
        children,
    }
}

/// Evaluates the tree against one group's filters.
pub fn eval_bgp_tree(node: &Node, group: &GroupRecord) -> EvalNode {
    let pvs: Vec<PatternVector> = node.bgps().into_iter().map(PatternVector::of_bgp).collect();
    let mut stats = FilterStats::default();
    eval_bgp_tree_with(node, &mut |i, _| is_match_vector(&pvs[i], group, &mut stats))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub group_id: usize,
    #[serde(skip)]
    pub evaluation: EvalNode,
    #[serde(skip)]
    pub query: Query,
    /// The rewritten query text for this group.
    pub pruned_query: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateReport {
    pub candidate_group_ids: Vec<usize>,
    pub filter_stats: FilterStats,
    pub candidates: Vec<Candidate>,
}

/// Runs the tree evaluation on every group; groups whose root evaluates to
/// TRUE are candidates, each with its own rewritten query.
pub fn find_candidates(q: &Query, index: &PvIndex) -> Result<CandidateReport, EngineError> {
    let pvs: Vec<PatternVector> = q.root.bgps().into_iter().map(PatternVector::of_bgp).collect();
    let per_group: Vec<(FilterStats, Option<Result<Candidate, EngineError>>)> = index
        .groups
        .par_iter()
        .map(|group| {
            let mut stats = FilterStats {
                groups_tested: 1,
                ..FilterStats::default()
            };
            let ev = eval_bgp_tree_with(&q.root, &mut |i, _| is_match_vector(&pvs[i], group, &mut stats));
            let cand = (ev.returned == Some(true)).then(|| {
                let query = rewrite_query(q, &ev)?;
                Ok(Candidate {
                    group_id: group.group_id,
                    pruned_query: format_query(&query),
                    evaluation: ev,
                    query,
                })
            });
            (stats, cand)
        })
        .collect();
    let mut stats = FilterStats::default();
    let mut candidates = Vec::new();
    for (s, c) in per_group {
        stats.add(&s);
        if let Some(c) = c {
            candidates.push(c?);
        }
    }
    Ok(CandidateReport {
        candidate_group_ids: candidates.iter().map(|c| c.group_id).collect(),
        filter_stats: stats,
        candidates,
    })
}

/// Drops the OPTIONAL blocks and UNION branches that the evaluation marked
/// FALSE. Filters and result modifiers are kept; a UNION left with one
/// branch stays as a nested group. A `SELECT *` that would lose variables
/// with the pruned parts lists the original columns explicitly, so every
/// candidate produces rows of the same shape.
pub fn rewrite_query(q: &Query, eval: &EvalNode) -> Result<Query, EngineError> {
    if eval.flag != Some(true) {
        return Err(EngineError::DegenerateQuery);
    }
    let mut out = Query {
        root: rewrite_group(&q.root, eval)?,
        ..q.clone()
    };
    if out.columns() != q.columns() {
        out.selection = Selection::Vars(q.columns());
    }
    Ok(out)
}

fn rewrite_group(node: &Node, eval: &EvalNode) -> Result<Node, EngineError> {
    let mut children: Vec<Node> = Vec::with_capacity(node.children.len());
    for (child, ev) in node.children.iter().zip(&eval.children) {
        let kept = match &child.kind {
            NodeKind::Optional if ev.flag == Some(true) => Some(Node::with_children(
                NodeKind::Optional,
                vec![rewrite_group(&child.children[0], &ev.children[0])?],
            )),
            NodeKind::Optional => None,
            NodeKind::Union => {
                let branches = child
                    .children
                    .iter()
                    .zip(&ev.children)
                    .filter(|(_, e)| e.returned == Some(true))
                    .map(|(b, e)| rewrite_group(b, e))
                    .collect::<Result<Vec<_>, _>>()?;
                if branches.is_empty() {
                    return Err(EngineError::DegenerateQuery);
                }
                Some(Node::with_children(NodeKind::Union, branches))
            }
            _ => Some(child.clone()),
        };
        let Some(kept) = kept else { continue };
        // removing an OPTIONAL can leave two BGPs side by side; merge them
        if let (Some(NodeKind::Bgp(prev)), NodeKind::Bgp(next)) = (children.last_mut().map(|c| &mut c.kind), &kept.kind) {
            for tp in next {
                if !prev.contains(tp) {
                    prev.push(tp.clone());
                }
            }
            continue;
        }
        children.push(kept);
    }
    Ok(Node::with_children(NodeKind::Group, children))
}

/// Ordered bag of solutions. Unbound cells are `None`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BindingTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<Term>>>,
}

impl BindingTable {
    pub fn new(columns: Vec<String>) -> Self {
        BindingTable {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows in a canonical order, for comparing tables as bags.
    pub fn sorted_rows(&self) -> Vec<Vec<Option<Term>>> {
        let mut rows = self.rows.clone();
        rows.sort();
        rows
    }

    /// DISTINCT (first occurrence kept), then OFFSET, then LIMIT.
    pub fn apply_modifiers(&mut self, distinct: bool, offset: Option<u64>, limit: Option<u64>) {
        if distinct {
            let mut seen = HashSet::new();
            self.rows.retain(|r| seen.insert(r.clone()));
        }
        let skip = offset.map_or(0, |o| o.min(self.rows.len() as u64) as usize);
        self.rows.drain(..skip);
        if let Some(l) = limit {
            self.rows.truncate(l.min(self.rows.len() as u64) as usize);
        }
    }

    /// Tab-separated values: a header of `?var` names, then one line per row
    /// with terms in N-Triples syntax and `NULL` for unbound cells.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.columns.iter().map(|c| format!("?{c}")).collect();
        out.push_str(&header.join("\t"));
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push('\t');
                }
                match cell {
                    Some(t) => t.write_nquads(&mut out),
                    None => out.push_str("NULL"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// `{"columns": [...], "rows": [[term-or-null, ...], ...]}` with terms in
    /// N-Triples syntax.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|c| match c {
                        Some(t) => {
                            let mut s = String::new();
                            t.write_nquads(&mut s);
                            serde_json::Value::String(s)
                        }
                        None => serde_json::Value::Null,
                    })
                    .collect()
            })
            .collect();
        serde_json::json!({ "columns": self.columns, "rows": rows })
    }
}

/// Rejects queries using functions outside the supported expression set.
pub fn validate_query(q: &Query) -> Result<(), EngineError> {
    let mut bad = None;
    q.root.walk(&mut |n| {
        if let NodeKind::Predicate(e) = &n.kind {
            if bad.is_none() {
                bad = expr::first_unsupported(e).map(str::to_string);
            }
        }
    });
    match bad {
        Some(name) => Err(EngineError::UnsupportedExpression(name)),
        None => Ok(()),
    }
}

/// Executes the query body on the given graphs, without result modifiers.
pub fn execute_on_group(q: &Query, graphs: &[GraphRef<'_>]) -> Result<BindingTable, EngineError> {
    validate_query(q)?;
    exec::Executor::new(q).run(graphs)
}

/// The full pipeline: candidates, per-group rewrite and execution in
/// parallel, concatenation in group order, then result modifiers.
pub fn answer_query(q: &Query, index: &PvIndex) -> Result<BindingTable, EngineError> {
    let report = find_candidates(q, index)?;
    answer_with_candidates(q, index, &report)
}

pub fn answer_with_candidates(q: &Query, index: &PvIndex, report: &CandidateReport) -> Result<BindingTable, EngineError> {
    validate_query(q)?;
    let parts = report
        .candidates
        .par_iter()
        .map(|c| {
            let graphs = index.group_graphs(c.group_id)?;
            execute_on_group(&c.query, &graphs.graphs())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = BindingTable::new(q.columns());
    for p in parts {
        debug_assert_eq!(p.columns, table.columns);
        table.rows.extend(p.rows);
    }
    table.apply_modifiers(q.distinct, q.offset, q.limit);
    Ok(table)
}

/// Human-readable one-line summary of a candidate report.
pub fn describe_report(report: &CandidateReport, total_groups: usize) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{} of {} groups are candidates ({} BGP tests, {} cells read)",
        report.candidate_group_ids.len(),
        total_groups,
        report.filter_stats.bgp_tests,
        report.filter_stats.cells_checked
    );
    s
}

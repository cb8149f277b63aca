//! Deterministic synthetic datasets and query workloads.
//!
//! A dataset is a set of named graphs, each drawn from one of several
//! vocabularies. A vocabulary owns a namespace of entities and predicates
//! and a base of "well-known" facts that its graphs tend to repeat, the way
//! documents published by one source restate the same descriptions. The
//! ground truth records which graphs use which vocabulary.
//!
//! Queries are sampled from the data: a connected set of a graph's triples
//! is chosen (path, star, cycle or free shape) and some of its terms are
//! replaced by variables, so the source graph is guaranteed to contain a
//! match.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use indexmap::IndexSet;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pattern::{PatternTerm, TriplePattern};
use crate::rdf::{GraphStore, Quad, Term, Triple};
use crate::sparql::{write_term, XSD};

pub const BASE_IRI: &str = "http://example.org/";

/// Entities per vocabulary.
const ENTITIES: usize = 40;
/// Predicates per vocabulary.
const PREDICATES: usize = 8;
/// Distinct words used in string literals.
const WORDS: usize = 12;
/// Distinct integer literals per vocabulary.
const INTEGERS: i64 = 40;
/// Share of a graph's triples restated from the vocabulary's fact base.
const BASE_SHARE: f64 = 0.7;

#[derive(Debug, Error, PartialEq)]
pub enum DatagenError {
    #[error("invalid generator parameter: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub vocabularies: usize,
    /// Total number of graphs; graph `i` uses vocabulary `i mod vocabularies`.
    pub graphs: usize,
    /// Triples per graph (the maximum when `min_triples` is set).
    pub triples: usize,
    /// When set, each graph's size is drawn uniformly from `min_triples..=triples`.
    pub min_triples: Option<usize>,
    /// Fraction of each vocabulary's predicates taken from a pool shared by
    /// all vocabularies; 0 gives disjoint predicate sets.
    pub overlap: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            vocabularies: 5,
            graphs: 200,
            triples: 50,
            min_triples: None,
            overlap: 0.0,
            seed: 1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let err = |m: &str| Err(DatagenError::Config(m.into()));
        if self.vocabularies == 0 {
            return err("vocabularies must be at least 1");
        }
        if self.triples == 0 {
            return err("triples per graph must be at least 1");
        }
        if let Some(min) = self.min_triples {
            if min == 0 || min > self.triples {
                return err("min triples must lie in 1..=triples");
            }
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return err("overlap must lie in [0, 1]");
        }
        // keep the triple space of a graph far larger than its size
        if self.triples > 2_000 {
            return err("at most 2000 triples per graph");
        }
        Ok(())
    }
}

/// Which graphs use which vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: GenConfig,
    pub vocabularies: Vec<VocabularyTruth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabularyTruth {
    pub name: String,
    pub namespace: String,
    pub predicates: Vec<String>,
    /// Graph ids (order of first appearance in the output), ascending.
    pub graph_ids: Vec<usize>,
}

impl GroundTruth {
    /// Vocabulary index of every graph id.
    pub fn vocabulary_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.config.graphs];
        for (v, voc) in self.vocabularies.iter().enumerate() {
            for &g in &voc.graph_ids {
                out[g] = v;
            }
        }
        out
    }
}

pub struct Dataset {
    /// Quads grouped by graph, graphs in id order.
    pub quads: Vec<Quad>,
    pub truth: GroundTruth,
}

impl Dataset {
    pub fn store(&self) -> GraphStore {
        let mut store = GraphStore::new();
        for q in &self.quads {
            store.insert(q.clone());
        }
        store
    }

    pub fn to_nquads(&self) -> String {
        self.quads.iter().map(Quad::to_nquads_line).collect()
    }
}

pub fn graph_context(id: usize) -> Term {
    Term::iri(format!("{BASE_IRI}graph/{id}"))
}

pub fn vocabulary_namespace(v: usize) -> String {
    format!("{BASE_IRI}v{v}/")
}

#[derive(Clone, Copy, PartialEq)]
enum Range {
    Entity,
    Integer,
    Text,
}

fn range_of(j: usize) -> Range {
    match j % 4 {
        0 => Range::Integer,
        1 => Range::Text,
        _ => Range::Entity,
    }
}

struct Vocabulary {
    entities: Vec<Term>,
    predicates: Vec<(Term, Range)>,
    words: Vec<String>,
    /// Integer literals are drawn from `integers..integers + INTEGERS`.
    integers: i64,
    base: Vec<Triple>,
}

impl Vocabulary {
    fn new(v: usize, cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Self {
        let ns = vocabulary_namespace(v);
        let shared = (cfg.overlap * PREDICATES as f64).round() as usize;
        let predicates = (0..PREDICATES)
            .map(|j| {
                let iri = if j < shared {
                    format!("{BASE_IRI}shared/p{j}")
                } else {
                    format!("{ns}p{j}")
                };
                (Term::iri(iri), range_of(j))
            })
            .collect();
        let mut voc = Vocabulary {
            entities: (0..ENTITIES).map(|j| Term::iri(format!("{ns}r{j}"))).collect(),
            predicates,
            words: (0..WORDS).map(|j| format!("v{v} word{j}")).collect(),
            integers: 1000 * v as i64,
            base: Vec::new(),
        };
        let mut base = IndexSet::new();
        let want = 4 * cfg.triples;
        while base.len() < want {
            let s = voc.entities.choose(rng).unwrap().clone();
            base.insert(voc.fact(s, rng));
        }
        voc.base = base.into_iter().collect();
        voc
    }

    fn fact(&self, subject: Term, rng: &mut ChaCha8Rng) -> Triple {
        let (p, range) = self.predicates.choose(rng).unwrap().clone();
        let object = match range {
            Range::Entity => self.entities.choose(rng).unwrap().clone(),
            Range::Integer => Term::typed_literal((self.integers + rng.random_range(0..INTEGERS)).to_string(), format!("{XSD}integer")),
            Range::Text => {
                let w = self.words.choose(rng).unwrap().clone();
                if rng.random_bool(0.3) {
                    Term::lang_literal(w, "en")
                } else {
                    Term::literal(w)
                }
            }
        };
        Triple::new(subject, p, object)
    }
}

/// Generates a dataset. Identical configurations give identical output.
pub fn generate(cfg: &GenConfig) -> Result<Dataset, DatagenError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocabularies: Vec<Vocabulary> = (0..cfg.vocabularies).map(|v| Vocabulary::new(v, cfg, &mut rng)).collect();
    let mut quads = Vec::new();
    let mut graph_ids = vec![Vec::new(); cfg.vocabularies];
    for g in 0..cfg.graphs {
        let v = g % cfg.vocabularies;
        graph_ids[v].push(g);
        let voc = &vocabularies[v];
        let n = match cfg.min_triples {
            Some(min) => rng.random_range(min..=cfg.triples),
            None => cfg.triples,
        };
        let subjects: Vec<Term> = voc
            .entities
            .choose_multiple(&mut rng, n.div_ceil(6).clamp(2, ENTITIES))
            .cloned()
            .collect();
        let mut triples = IndexSet::new();
        while triples.len() < n {
            let t = if rng.random_bool(BASE_SHARE) {
                voc.base.choose(&mut rng).unwrap().clone()
            } else {
                voc.fact(subjects.choose(&mut rng).unwrap().clone(), &mut rng)
            };
            triples.insert(t);
        }
        let context = graph_context(g);
        quads.extend(triples.into_iter().map(|t| Quad {
            subject: t.subject,
            predicate: t.predicate,
            object: t.object,
            context: context.clone(),
        }));
    }
    let truth = GroundTruth {
        config: cfg.clone(),
        vocabularies: vocabularies
            .iter()
            .enumerate()
            .map(|(v, voc)| VocabularyTruth {
                name: format!("v{v}"),
                namespace: vocabulary_namespace(v),
                predicates: voc.predicates.iter().map(|(p, _)| p.lexical().to_string()).collect(),
                graph_ids: std::mem::take(&mut graph_ids[v]),
            })
            .collect(),
    };
    Ok(Dataset { quads, truth })
}

/// Shape of a sampled set of triples, viewing subjects and objects as
/// nodes of an undirected graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BgpShape {
    /// A walk: each new triple extends one end of the current path.
    Path,
    /// Triples sharing one subject or object.
    Star,
    /// Starts from an undirected cycle when the graph has one.
    Cycle,
    /// Any connected set.
    Free,
}

impl BgpShape {
    pub const ALL: [BgpShape; 4] = [BgpShape::Path, BgpShape::Star, BgpShape::Cycle, BgpShape::Free];
}

struct Adjacency<'a> {
    triples: &'a [Triple],
    by_node: HashMap<&'a Term, Vec<usize>>,
}

impl<'a> Adjacency<'a> {
    fn new(triples: &'a [Triple]) -> Self {
        let mut by_node: HashMap<&Term, Vec<usize>> = HashMap::new();
        for (i, t) in triples.iter().enumerate() {
            by_node.entry(&t.subject).or_default().push(i);
            if t.object != t.subject {
                by_node.entry(&t.object).or_default().push(i);
            }
        }
        Adjacency { triples, by_node }
    }

    fn ends(&self, i: usize) -> [&'a Term; 2] {
        [&self.triples[i].subject, &self.triples[i].object]
    }

    fn other_end(&self, i: usize, from: &Term) -> &'a Term {
        let [s, o] = self.ends(i);
        if s == from {
            o
        } else {
            s
        }
    }

    /// Triple indices of a cycle through triple `start`, if any.
    fn cycle_through(&self, start: usize) -> Option<Vec<usize>> {
        let [u, v] = self.ends(start);
        if u == v {
            return Some(vec![start]);
        }
        // BFS from v to u avoiding `start`
        let mut prev: HashMap<&Term, (usize, &Term)> = HashMap::new();
        let mut queue = VecDeque::from([v]);
        let mut seen = HashSet::from([v]);
        while let Some(n) = queue.pop_front() {
            if n == u {
                let mut path = vec![start];
                let mut cur = u;
                while cur != v {
                    let (edge, from) = prev[cur];
                    path.push(edge);
                    cur = from;
                }
                return Some(path);
            }
            for &e in &self.by_node[n] {
                if e == start {
                    continue;
                }
                let m = self.other_end(e, n);
                if seen.insert(m) {
                    prev.insert(m, (e, n));
                    queue.push_back(m);
                }
            }
        }
        None
    }
}

/// Picks a connected set of up to `size` triples of `triples` with the
/// requested shape. Returns fewer triples when the graph's component is
/// smaller; empty only for an empty graph.
pub fn sample_triples<R: Rng>(triples: &[Triple], size: usize, shape: BgpShape, rng: &mut R) -> Vec<Triple> {
    if triples.is_empty() || size == 0 {
        return Vec::new();
    }
    let adj = Adjacency::new(triples);
    let mut chosen: IndexSet<usize> = IndexSet::new();
    let mut nodes: IndexSet<&Term> = IndexSet::new();
    let start = rng.random_range(0..triples.len());
    match shape {
        BgpShape::Star => {
            let [s, o] = adj.ends(start);
            let centre = if rng.random_bool(0.7) { s } else { o };
            let mut around = adj.by_node[centre].clone();
            around.shuffle(rng);
            chosen.extend(around.into_iter().take(size));
            return chosen.into_iter().map(|i| triples[i].clone()).collect();
        }
        BgpShape::Path => {
            chosen.insert(start);
            let [mut a, mut b] = adj.ends(start);
            while chosen.len() < size {
                let mut moves: Vec<(bool, usize)> = Vec::new();
                for (at_a, end) in [(true, a), (false, b)] {
                    moves.extend(adj.by_node[end].iter().filter(|e| !chosen.contains(*e)).map(|&e| (at_a, e)));
                }
                let Some(&(at_a, e)) = moves.choose(rng) else {
                    break;
                };
                chosen.insert(e);
                if at_a {
                    a = adj.other_end(e, a);
                } else {
                    b = adj.other_end(e, b);
                }
            }
            return chosen.into_iter().map(|i| triples[i].clone()).collect();
        }
        BgpShape::Cycle => {
            let mut order: Vec<usize> = (0..triples.len()).collect();
            order.shuffle(rng);
            let cycle = order.iter().take(32).find_map(|&s| adj.cycle_through(s).filter(|c| c.len() <= size));
            chosen.extend(cycle.unwrap_or_else(|| vec![start]));
        }
        BgpShape::Free => {
            chosen.insert(start);
        }
    }
    for &i in &chosen {
        nodes.extend(adj.ends(i));
    }
    while chosen.len() < size {
        let frontier: Vec<usize> = nodes
            .iter()
            .flat_map(|n| adj.by_node[*n].iter().copied())
            .filter(|e| !chosen.contains(e))
            .collect::<IndexSet<_>>()
            .into_iter()
            .collect();
        if frontier.is_empty() {
            break;
        }
        // favour triples closing a cycle among already chosen nodes
        let closing: Vec<usize> = frontier
            .iter()
            .copied()
            .filter(|&e| adj.ends(e).iter().all(|n| nodes.contains(n)))
            .collect();
        let e = match closing.choose(rng) {
            Some(&e) if rng.random_bool(0.5) => e,
            _ => *frontier.choose(rng).unwrap(),
        };
        chosen.insert(e);
        nodes.extend(adj.ends(e));
    }
    chosen.into_iter().map(|i| triples[i].clone()).collect()
}

/// Replaces terms of triples by variables, consistently: every occurrence
/// of a masked term becomes the same variable, so joins are preserved.
pub struct Masker {
    vars: HashMap<Term, String>,
    masked: HashSet<Term>,
    kept: HashSet<Term>,
    /// Chance that a subject/object term is masked.
    pub node_rate: f64,
    /// Chance that a predicate is masked.
    pub predicate_rate: f64,
    prefix: String,
}

impl Masker {
    pub fn new(prefix: &str) -> Self {
        Masker {
            vars: HashMap::new(),
            masked: HashSet::new(),
            kept: HashSet::new(),
            node_rate: 0.7,
            predicate_rate: 0.1,
            prefix: prefix.into(),
        }
    }

    fn position<R: Rng>(&mut self, t: &Term, rate: f64, rng: &mut R) -> PatternTerm {
        if !self.masked.contains(t) && !self.kept.contains(t) {
            if rng.random_bool(rate) {
                self.masked.insert(t.clone());
            } else {
                self.kept.insert(t.clone());
            }
        }
        if self.masked.contains(t) {
            let n = self.vars.len();
            let prefix = &self.prefix;
            PatternTerm::Var(self.vars.entry(t.clone()).or_insert_with(|| format!("{prefix}{n}")).clone())
        } else {
            PatternTerm::Term(t.clone())
        }
    }

    pub fn mask<R: Rng>(&mut self, t: &Triple, rng: &mut R) -> TriplePattern {
        TriplePattern::new(
            self.position(&t.subject, self.node_rate, rng),
            self.position(&t.predicate, self.predicate_rate, rng),
            self.position(&t.object, self.node_rate, rng),
        )
    }

    /// Variable standing for `t`, if it was masked.
    pub fn var_of(&self, t: &Term) -> Option<&str> {
        self.vars.get(t).map(String::as_str)
    }

    /// Masked terms with their variables.
    pub fn bindings(&self) -> impl Iterator<Item = (&Term, &str)> {
        self.vars.iter().map(|(t, v)| (t, v.as_str()))
    }
}

pub fn write_pattern_term(out: &mut String, t: &PatternTerm) {
    match t {
        PatternTerm::Var(v) => {
            let _ = write!(out, "?{v}");
        }
        PatternTerm::Term(t) => write_term(out, t),
    }
}

/// Triple patterns as SPARQL text, each terminated by " . ".
pub fn bgp_text(bgp: &[TriplePattern]) -> String {
    let mut out = String::new();
    for tp in bgp {
        for p in tp.positions() {
            write_pattern_term(&mut out, p);
            out.push(' ');
        }
        out.push_str(". ");
    }
    out
}

/// A BGP with a guaranteed match in graph `graph`.
#[derive(Clone, Debug)]
pub struct PlantedQuery {
    pub graph: usize,
    pub shape: BgpShape,
    pub bgp: Vec<TriplePattern>,
    pub text: String,
}

/// Samples a BGP of up to `size` patterns from a random graph of `store`.
pub fn planted_query<R: Rng>(store: &GraphStore, size: usize, shape: BgpShape, rng: &mut R) -> Option<PlantedQuery> {
    if store.is_empty() {
        return None;
    }
    let graph = rng.random_range(0..store.graph_count());
    let triples: Vec<Triple> = store.graph(graph)?.triples.iter().cloned().collect();
    let mut masker = Masker::new("x");
    let bgp: Vec<TriplePattern> = sample_triples(&triples, size, shape, rng)
        .iter()
        .map(|t| masker.mask(t, rng))
        .collect();
    let text = format!("SELECT * WHERE {{ GRAPH ?g {{ {}}} }}", bgp_text(&bgp));
    Some(PlantedQuery {
        graph,
        shape,
        bgp,
        text,
    })
}

/// Random queries over the whole grammar (nested groups, UNION, OPTIONAL,
/// FILTER with predicates, EXISTS and NOT EXISTS, DISTINCT, LIMIT/OFFSET,
/// prefixes), built from the data so that many have answers.
pub struct QueryGen<'s> {
    store: &'s GraphStore,
    /// Largest BGP drawn for one block.
    pub max_bgp: usize,
    /// Allow LIMIT/OFFSET.
    pub modifiers: bool,
}

struct QueryState {
    masker: Masker,
    /// Variables bound by mandatory patterns of the top-level group.
    mandatory: Vec<String>,
    /// Variables of OPTIONAL blocks.
    optional: Vec<String>,
    /// Literal values seen behind variables, for filter constants.
    values: Vec<(String, Term)>,
}

impl<'s> QueryGen<'s> {
    pub fn new(store: &'s GraphStore) -> Self {
        QueryGen {
            store,
            max_bgp: 4,
            modifiers: true,
        }
    }

    fn triples_of(&self, g: usize) -> Vec<Triple> {
        self.store.graph(g).map(|g| g.triples.iter().cloned().collect()).unwrap_or_default()
    }

    /// A BGP block sampled from `graph` (or from a random graph with
    /// probability `stray`), sharing the query-wide masking.
    fn block<R: Rng>(&self, graph: usize, stray: f64, st: &mut QueryState, rng: &mut R) -> Vec<TriplePattern> {
        let g = if rng.random_bool(stray) {
            rng.random_range(0..self.store.graph_count())
        } else {
            graph
        };
        let triples = self.triples_of(g);
        let size = rng.random_range(1..=self.max_bgp);
        let shape = *BgpShape::ALL.choose(rng).unwrap();
        let bgp: Vec<TriplePattern> = sample_triples(&triples, size, shape, rng)
            .iter()
            .map(|t| st.masker.mask(t, rng))
            .collect();
        bgp
    }

    fn note_values(st: &mut QueryState, store_triples: &[Triple]) {
        for t in store_triples {
            for term in [&t.subject, &t.object] {
                if let Some(v) = st.masker.var_of(term) {
                    st.values.push((v.to_string(), term.clone()));
                }
            }
        }
    }

    fn predicate<R: Rng>(&self, st: &QueryState, depth: u32, rng: &mut R) -> String {
        let vars: Vec<&String> = st.mandatory.iter().chain(&st.optional).collect();
        if vars.is_empty() {
            return "true".into();
        }
        if depth < 2 && rng.random_bool(0.3) {
            let a = self.predicate(st, depth + 1, rng);
            let b = self.predicate(st, depth + 1, rng);
            return match rng.random_range(0..3) {
                0 => format!("({a} && {b})"),
                1 => format!("({a} || {b})"),
                _ => format!("!({a})"),
            };
        }
        let pick = rng.random_range(0..10);
        if pick == 0 {
            let v = if !st.optional.is_empty() && rng.random_bool(0.7) {
                st.optional.choose(rng).unwrap()
            } else {
                vars.choose(rng).unwrap()
            };
            return format!("bound(?{v})");
        }
        if let Some((v, value)) = st.values.choose(rng).filter(|_| pick < 8) {
            let mut lit = String::new();
            write_term(&mut lit, value);
            return match value {
                Term::Literal { datatype: Some(d), .. } if d.ends_with("#integer") => {
                    let n: i64 = value.lexical().parse().unwrap_or(0);
                    let op = ["<", "<=", ">", ">=", "=", "!="].choose(rng).unwrap();
                    let k = n + rng.random_range(-5..=5);
                    if rng.random_bool(0.2) {
                        format!("?{v} {op} {k}.5")
                    } else {
                        format!("?{v} {op} {k}")
                    }
                }
                Term::Literal { .. } if rng.random_bool(0.5) => {
                    let word = value.lexical().rsplit(' ').next().unwrap_or("");
                    let flags = if rng.random_bool(0.3) { ", \"i\"" } else { "" };
                    format!("regex(?{v}, \"{}\"{flags})", word.to_uppercase())
                }
                _ => {
                    let op = ["=", "!="].choose(rng).unwrap();
                    format!("?{v} {op} {lit}")
                }
            };
        }
        let a = vars.choose(rng).unwrap();
        let b = vars.choose(rng).unwrap();
        format!("?{a} != ?{b}")
    }

    fn constraint<R: Rng>(&self, graph: usize, st: &mut QueryState, rng: &mut R) -> String {
        match rng.random_range(0..4) {
            0 | 1 => format!("FILTER ({})", self.predicate(st, 0, rng)),
            k => {
                let bgp = self.block(graph, 0.3, st, rng);
                let kw = if k == 2 { "EXISTS" } else { "NOT EXISTS" };
                format!("FILTER {kw} {{ {}}}", bgp_text(&bgp))
            }
        }
    }

    /// One random query text. `graph` anchors the mandatory part.
    pub fn query<R: Rng>(&self, rng: &mut R) -> Option<String> {
        if self.store.is_empty() {
            return None;
        }
        let graph = rng.random_range(0..self.store.graph_count());
        let triples = self.triples_of(graph);
        let mut st = QueryState {
            masker: Masker::new("v"),
            mandatory: Vec::new(),
            optional: Vec::new(),
            values: Vec::new(),
        };
        let mut body = Vec::new();
        let main = self.block(graph, 0.05, &mut st, rng);
        body.push(bgp_text(&main));
        let vars_of = |bgp: &[TriplePattern]| -> Vec<String> {
            bgp.iter().flat_map(|tp| tp.variables()).map(str::to_string).collect()
        };
        st.mandatory.extend(vars_of(&main));
        Self::note_values(&mut st, &triples);
        let extras = rng.random_range(0..=3);
        for _ in 0..extras {
            match rng.random_range(0..5) {
                0 => {
                    let bgp = self.block(graph, 0.3, &mut st, rng);
                    st.optional.extend(vars_of(&bgp));
                    let filter = if rng.random_bool(0.3) {
                        format!("FILTER ({}) ", self.predicate(&st, 1, rng))
                    } else {
                        String::new()
                    };
                    body.push(format!("OPTIONAL {{ {}{filter}}} ", bgp_text(&bgp)));
                }
                1 => {
                    let branches = rng.random_range(2..=3);
                    let mut parts = Vec::new();
                    for _ in 0..branches {
                        let bgp = self.block(graph, 0.4, &mut st, rng);
                        st.optional.extend(vars_of(&bgp));
                        parts.push(format!("{{ {}}}", bgp_text(&bgp)));
                    }
                    body.push(format!("{} ", parts.join(" UNION ")));
                }
                2 => {
                    let bgp = self.block(graph, 0.1, &mut st, rng);
                    st.mandatory.extend(vars_of(&bgp));
                    body.push(format!("{{ {}}} ", bgp_text(&bgp)));
                }
                3 => body.push(format!("{} ", self.constraint(graph, &mut st, rng))),
                _ => {
                    let bgp = self.block(graph, 0.0, &mut st, rng);
                    st.mandatory.extend(vars_of(&bgp));
                    body.push(bgp_text(&bgp));
                }
            }
        }
        if rng.random_bool(0.4) {
            let c = self.constraint(graph, &mut st, rng);
            // filters may appear anywhere in their group
            let at = rng.random_range(0..=body.len());
            body.insert(at, format!("{c} "));
        }
        let mut all: Vec<String> = st.mandatory.iter().chain(&st.optional).cloned().collect::<IndexSet<_>>().into_iter().collect();
        all.shuffle(rng);
        let select = if all.is_empty() || rng.random_bool(0.4) {
            "*".to_string()
        } else {
            let n = rng.random_range(1..=all.len());
            let mut cols: Vec<String> = all[..n].iter().map(|v| format!("?{v}")).collect();
            if rng.random_bool(0.3) {
                cols.insert(0, "?g".into());
            }
            cols.join(" ")
        };
        let distinct = if rng.random_bool(0.25) { "DISTINCT " } else { "" };
        let mut text = format!("SELECT {distinct}{select} WHERE {{ GRAPH ?g {{ {}}} }}", body.concat());
        if self.modifiers && rng.random_bool(0.15) {
            let _ = write!(text, " LIMIT {}", rng.random_range(0..10));
            if rng.random_bool(0.5) {
                let _ = write!(text, " OFFSET {}", rng.random_range(0..5));
            }
        }
        if rng.random_bool(0.3) {
            text = with_prefixes(&text);
        }
        Some(text)
    }
}

/// Rewrites full IRIs of the example namespaces into prefixed names.
fn with_prefixes(text: &str) -> String {
    let mut used: Vec<(String, String)> = Vec::new();
    let mut out = String::new();
    let mut rest = text;
    while let Some(start) = rest.find('<') {
        let Some(len) = rest[start..].find('>') else { break };
        let iri = &rest[start + 1..start + len];
        out.push_str(&rest[..start]);
        let split = iri.rfind('/').map(|i| i + 1).unwrap_or(0);
        let (ns, local) = iri.split_at(split);
        let is_ns = ns.starts_with(BASE_IRI) && !local.is_empty() && local.chars().all(|c| c.is_ascii_alphanumeric());
        if is_ns {
            let name = ns[BASE_IRI.len()..].trim_end_matches('/').replace('/', "_");
            let name = if name.is_empty() { "ex".to_string() } else { name };
            if !used.iter().any(|(p, _)| *p == name) {
                used.push((name.clone(), ns.to_string()));
            }
            let _ = write!(out, "{name}:{local}");
        } else {
            out.push_str(&rest[start..start + len + 1]);
        }
        rest = &rest[start + len + 1..];
    }
    out.push_str(rest);
    let mut head = String::new();
    for (p, ns) in used {
        let _ = writeln!(head, "PREFIX {p}: <{ns}>");
    }
    head + &out
}

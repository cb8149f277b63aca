//! Canonical patterns and Pattern Vectors.
//!
//! A graph is summarised by masking every triple with each of the seven
//! canonical patterns and fingerprinting the result; a basic graph pattern is
//! summarised by fingerprinting each triple pattern under the single canonical
//! pattern its variable positions select. Both sides use the same byte
//! encoding, so a triple and any triple pattern it matches land on the same
//! fingerprint.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::fingerprint::Fingerprinter;
use crate::rdf::{Term, Triple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CanonicalPattern {
    Spo,
    SpX,
    SxO,
    XPo,
    Sxx,
    XPx,
    XxO,
}

impl CanonicalPattern {
    pub const ALL: [CanonicalPattern; 7] = [
        CanonicalPattern::Spo,
        CanonicalPattern::SpX,
        CanonicalPattern::SxO,
        CanonicalPattern::XPo,
        CanonicalPattern::Sxx,
        CanonicalPattern::XPx,
        CanonicalPattern::XxO,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            CanonicalPattern::Spo => "SPO",
            CanonicalPattern::SpX => "SP?",
            CanonicalPattern::SxO => "S?O",
            CanonicalPattern::XPo => "?PO",
            CanonicalPattern::Sxx => "S??",
            CanonicalPattern::XPx => "?P?",
            CanonicalPattern::XxO => "??O",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.label() == label)
    }

    /// Which of (subject, predicate, object) the pattern keeps.
    pub fn kept(self) -> [bool; 3] {
        match self {
            CanonicalPattern::Spo => [true, true, true],
            CanonicalPattern::SpX => [true, true, false],
            CanonicalPattern::SxO => [true, false, true],
            CanonicalPattern::XPo => [false, true, true],
            CanonicalPattern::Sxx => [true, false, false],
            CanonicalPattern::XPx => [false, true, false],
            CanonicalPattern::XxO => [false, false, true],
        }
    }

    /// `None` for the all-wildcard mask, which has no canonical pattern.
    pub fn from_kept(kept: [bool; 3]) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.kept() == kept)
    }
}

impl fmt::Display for CanonicalPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One position of a triple pattern.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternTerm {
    Term(Term),
    Var(String),
}

impl PatternTerm {
    pub fn as_var(&self) -> Option<&str> {
        match self {
            PatternTerm::Var(v) => Some(v),
            PatternTerm::Term(_) => None,
        }
    }

    pub fn as_term(&self) -> Option<&Term> {
        match self {
            PatternTerm::Term(t) => Some(t),
            PatternTerm::Var(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn new(subject: PatternTerm, predicate: PatternTerm, object: PatternTerm) -> Self {
        TriplePattern {
            subject,
            predicate,
            object,
        }
    }

    pub fn positions(&self) -> [&PatternTerm; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.positions().into_iter().filter_map(PatternTerm::as_var)
    }
}

/// A triple with some positions replaced by the wildcard `?`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskedTriple<'a> {
    pub pattern: CanonicalPattern,
    pub fields: [Option<&'a Term>; 3],
}

const FIELD_SEP: u8 = 0x1F;
const SUFFIX_SEP: u8 = 0x1E;
const ESCAPE: u8 = 0x1D;

fn write_escaped(fp: &mut Fingerprinter, s: &str) {
    for &b in s.as_bytes() {
        if matches!(b, ESCAPE | SUFFIX_SEP | FIELD_SEP) {
            fp.write_byte(ESCAPE);
        }
        fp.write_byte(b);
    }
}

fn write_term(fp: &mut Fingerprinter, term: &Term) {
    match term {
        Term::Iri(iri) => {
            fp.write_byte(b'I');
            write_escaped(fp, iri);
        }
        Term::BlankNode(label) => {
            fp.write_byte(b'B');
            write_escaped(fp, label);
        }
        Term::Literal {
            lexical,
            datatype,
            language,
        } => {
            fp.write_byte(b'L');
            write_escaped(fp, lexical);
            if let Some(dt) = datatype {
                fp.write(&[SUFFIX_SEP, b'^']);
                write_escaped(fp, dt);
            }
            if let Some(lang) = language {
                fp.write(&[SUFFIX_SEP, b'@']);
                write_escaped(fp, lang);
            }
        }
    }
}

impl MaskedTriple<'_> {
    /// Fingerprint of the canonical byte encoding
    /// `tag 0x1F field 0x1F field 0x1F field`.
    pub fn fingerprint(&self) -> u64 {
        let mut fp = Fingerprinter::new();
        fp.write_byte(self.pattern.index() as u8);
        for field in self.fields {
            fp.write_byte(FIELD_SEP);
            match field {
                Some(t) => write_term(&mut fp, t),
                None => fp.write_byte(b'?'),
            }
        }
        fp.finish()
    }
}

/// Data-side transformation: mask `triple` according to `pattern`.
pub fn transform_triple(pattern: CanonicalPattern, triple: &Triple) -> MaskedTriple<'_> {
    let kept = pattern.kept();
    let terms = [&triple.subject, &triple.predicate, &triple.object];
    MaskedTriple {
        pattern,
        fields: [0, 1, 2].map(|i| kept[i].then_some(terms[i])),
    }
}

/// Query-side transformation: variables become `?` (names are dropped) and the
/// canonical pattern is chosen by which positions hold constants. An
/// all-variable pattern has no canonical pattern and yields `None`.
pub fn transform_pattern(tp: &TriplePattern) -> Option<MaskedTriple<'_>> {
    let fields = tp.positions().map(PatternTerm::as_term);
    let pattern = CanonicalPattern::from_kept(fields.map(|f| f.is_some()))?;
    Some(MaskedTriple { pattern, fields })
}

/// Multiset of fingerprints stored as `(fingerprint, multiplicity)` pairs sorted by fingerprint.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct FingerprintBag {
    entries: Vec<(u64, u32)>,
}

impl FingerprintBag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_items(mut items: Vec<u64>) -> Self {
        items.sort_unstable();
        let mut entries: Vec<(u64, u32)> = Vec::new();
        for fp in items {
            match entries.last_mut() {
                Some((last, n)) if *last == fp => *n += 1,
                _ => entries.push((fp, 1)),
            }
        }
        FingerprintBag { entries }
    }

    /// Builds from pairs; repeated fingerprints have their multiplicities added.
    pub fn from_counts(pairs: impl IntoIterator<Item = (u64, u32)>) -> Self {
        let mut entries: Vec<(u64, u32)> = pairs.into_iter().filter(|&(_, n)| n > 0).collect();
        entries.sort_unstable();
        let mut merged: Vec<(u64, u32)> = Vec::with_capacity(entries.len());
        for (fp, n) in entries {
            match merged.last_mut() {
                Some((last, m)) if *last == fp => *m += n,
                _ => merged.push((fp, n)),
            }
        }
        FingerprintBag { entries: merged }
    }

    pub fn entries(&self) -> &[(u64, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of distinct fingerprints.
    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    /// Sum of multiplicities.
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, n)| n as u64).sum()
    }

    pub fn multiplicity(&self, fp: u64) -> u32 {
        match self.entries.binary_search_by_key(&fp, |&(f, _)| f) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0,
        }
    }

    pub fn support(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|&(f, _)| f)
    }

    /// Linear merge; `combine` receives the two multiplicities (0 when absent).
    fn merge(&self, other: &Self, mut combine: impl FnMut(u32, u32) -> u32) -> Vec<(u64, u32)> {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::with_capacity(a.len().max(b.len()));
        while i < a.len() || j < b.len() {
            let (fp, m) = match (a.get(i), b.get(j)) {
                (Some(&(fa, na)), Some(&(fb, nb))) => match fa.cmp(&fb) {
                    Ordering::Less => {
                        i += 1;
                        (fa, combine(na, 0))
                    }
                    Ordering::Greater => {
                        j += 1;
                        (fb, combine(0, nb))
                    }
                    Ordering::Equal => {
                        i += 1;
                        j += 1;
                        (fa, combine(na, nb))
                    }
                },
                (Some(&(fa, na)), None) => {
                    i += 1;
                    (fa, combine(na, 0))
                }
                (None, Some(&(fb, nb))) => {
                    j += 1;
                    (fb, combine(0, nb))
                }
                (None, None) => unreachable!(),
            };
            if m > 0 {
                out.push((fp, m));
            }
        }
        out
    }

    /// Multiset union with elementwise-max multiplicities.
    pub fn union(&self, other: &Self) -> Self {
        FingerprintBag {
            entries: self.merge(other, u32::max),
        }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        FingerprintBag {
            entries: self.merge(other, u32::min),
        }
    }

    /// Multiset Jaccard (sum of min over sum of max); 0 when both are empty.
    pub fn jaccard(&self, other: &Self) -> f64 {
        let mut inter = 0u64;
        let mut union = 0u64;
        self.merge(other, |a, b| {
            inter += a.min(b) as u64;
            union += a.max(b) as u64;
            0
        });
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// True when every multiplicity in `sub` is at most the one here.
    pub fn contains(&self, sub: &Self) -> bool {
        let mut i = 0;
        for &(fp, n) in &sub.entries {
            while i < self.entries.len() && self.entries[i].0 < fp {
                i += 1;
            }
            match self.entries.get(i) {
                Some(&(f, m)) if f == fp && m >= n => i += 1,
                _ => return false,
            }
        }
        true
    }
}

/// Seven fingerprint multisets, one per canonical pattern.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PatternVector {
    vectors: [FingerprintBag; 7],
}

impl PatternVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_vectors(vectors: [FingerprintBag; 7]) -> Self {
        PatternVector { vectors }
    }

    pub fn get(&self, pattern: CanonicalPattern) -> &FingerprintBag {
        &self.vectors[pattern.index()]
    }

    pub fn vectors(&self) -> &[FingerprintBag; 7] {
        &self.vectors
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.iter().all(FingerprintBag::is_empty)
    }

    /// Pattern Vector of a graph: one insertion per triple per canonical pattern.
    pub fn of_graph<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut raw: [Vec<u64>; 7] = Default::default();
        for t in triples {
            for p in CanonicalPattern::ALL {
                raw[p.index()].push(transform_triple(p, t).fingerprint());
            }
        }
        PatternVector {
            vectors: raw.map(FingerprintBag::from_items),
        }
    }

    /// Pattern Vector of a basic graph pattern: each triple pattern contributes
    /// one fingerprint to the vector of its canonical pattern. All-variable
    /// patterns constrain nothing and are skipped.
    pub fn of_bgp<'a>(patterns: impl IntoIterator<Item = &'a TriplePattern>) -> Self {
        let mut raw: [Vec<u64>; 7] = Default::default();
        for tp in patterns {
            if let Some(m) = transform_pattern(tp) {
                raw[m.pattern.index()].push(m.fingerprint());
            }
        }
        PatternVector {
            vectors: raw.map(FingerprintBag::from_items),
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        PatternVector {
            vectors: std::array::from_fn(|i| self.vectors[i].union(&other.vectors[i])),
        }
    }

    /// Maximum over patterns of the per-pattern multiset Jaccard.
    pub fn similarity(&self, other: &Self) -> f64 {
        self.vectors
            .iter()
            .zip(&other.vectors)
            .map(|(a, b)| a.jaccard(b))
            .fold(0.0, f64::max)
    }

    /// Exact containment test: every pattern's multiset of `query` is a
    /// sub-multiset of this vector's.
    pub fn contains(&self, query: &Self) -> bool {
        self.vectors
            .iter()
            .zip(&query.vectors)
            .all(|(c, q)| c.contains(q))
    }

    /// Debug dump, one `label<TAB>fingerprint-hex<TAB>multiplicity` line per entry.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for p in CanonicalPattern::ALL {
            for &(fp, n) in self.get(p).entries() {
                let _ = writeln!(out, "{}\t{fp:016x}\t{n}", p.label());
            }
        }
        out
    }

    pub fn parse_dump(text: &str) -> Option<Self> {
        let mut raw: [Vec<(u64, u32)>; 7] = Default::default();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let mut parts = line.split('\t');
            let p = CanonicalPattern::from_label(parts.next()?)?;
            let fp = u64::from_str_radix(parts.next()?, 16).ok()?;
            let n = parts.next()?.parse().ok()?;
            raw[p.index()].push((fp, n));
        }
        Some(PatternVector {
            vectors: raw.map(FingerprintBag::from_counts),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn iri(s: &str) -> Term {
        Term::iri(s)
    }

    fn var(s: &str) -> PatternTerm {
        PatternTerm::Var(s.into())
    }

    fn cst(s: &str) -> PatternTerm {
        PatternTerm::Term(iri(s))
    }

    fn triple(s: &str, p: &str, o: &str) -> Triple {
        Triple::new(iri(s), iri(p), iri(o))
    }

    #[test]
    fn data_transformation_table() {
        let t = triple("s", "p", "o");
        let (s, p, o) = (&t.subject, &t.predicate, &t.object);
        let f = |pat| transform_triple(pat, &t).fields;
        assert_eq!(f(CanonicalPattern::Spo), [Some(s), Some(p), Some(o)]);
        assert_eq!(f(CanonicalPattern::SpX), [Some(s), Some(p), None]);
        assert_eq!(f(CanonicalPattern::SxO), [Some(s), None, Some(o)]);
        assert_eq!(f(CanonicalPattern::XPo), [None, Some(p), Some(o)]);
        assert_eq!(f(CanonicalPattern::Sxx), [Some(s), None, None]);
        assert_eq!(f(CanonicalPattern::XPx), [None, Some(p), None]);
        assert_eq!(f(CanonicalPattern::XxO), [None, None, Some(o)]);
    }

    #[test]
    fn query_transformation_table() {
        let p = iri("p");
        let tp = TriplePattern::new(var("vs"), cst("p"), var("vo"));
        let m = transform_pattern(&tp).unwrap();
        assert_eq!(m.pattern, CanonicalPattern::XPx);
        assert_eq!(m.fields, [None, Some(&p), None]);

        let tp = TriplePattern::new(cst("s"), cst("p"), cst("o"));
        assert_eq!(
            transform_pattern(&tp).unwrap().pattern,
            CanonicalPattern::Spo
        );
        assert!(transform_pattern(&TriplePattern::new(var("a"), var("b"), var("c"))).is_none());
    }

    #[test]
    fn variable_names_are_erased() {
        let a = TriplePattern::new(var("s1"), cst("movie:producer"), var("o1"));
        let b = TriplePattern::new(var("s2"), cst("movie:producer"), var("o2"));
        assert_eq!(
            transform_pattern(&a).unwrap().fingerprint(),
            transform_pattern(&b).unwrap().fingerprint()
        );
        let pv = PatternVector::of_bgp([&a, &b]);
        let bag = pv.get(CanonicalPattern::XPx);
        assert_eq!(bag.distinct(), 1);
        assert_eq!(bag.entries()[0].1, 2);
    }

    #[test]
    fn encoding_distinguishes_literal_suffixes() {
        let lang = Triple::new(iri("s"), iri("p"), Term::lang_literal("x", "en"));
        let typed = Triple::new(iri("s"), iri("p"), Term::typed_literal("x", "en"));
        let plain = Triple::new(iri("s"), iri("p"), Term::literal("x"));
        let fps: Vec<u64> = [&lang, &typed, &plain]
            .iter()
            .map(|t| transform_triple(CanonicalPattern::Spo, t).fingerprint())
            .collect();
        assert_ne!(fps[0], fps[1]);
        assert_ne!(fps[1], fps[2]);
        assert_ne!(fps[0], fps[2]);
        // a literal "?" is not the wildcard and an IRI is not a blank node
        let q = Triple::new(iri("s"), iri("p"), Term::literal("?"));
        assert_ne!(
            transform_triple(CanonicalPattern::Spo, &q).fingerprint(),
            transform_triple(CanonicalPattern::SpX, &q).fingerprint()
        );
        let b = Triple::new(Term::blank("s"), iri("p"), iri("o"));
        assert_ne!(
            transform_triple(CanonicalPattern::Spo, &b).fingerprint(),
            transform_triple(CanonicalPattern::Spo, &triple("s", "p", "o")).fingerprint()
        );
    }

    #[test]
    fn graph_vector_shapes() {
        assert!(PatternVector::of_graph(&[]).is_empty());

        let g = [triple("a", "p", "b"), triple("c", "p", "d")];
        let pv = PatternVector::of_graph(&g);
        let wanted = transform_pattern(&TriplePattern::new(var("x"), cst("p"), var("y")))
            .unwrap()
            .fingerprint();
        assert_eq!(pv.get(CanonicalPattern::XPx).multiplicity(wanted), 2);
        for p in CanonicalPattern::ALL {
            assert_eq!(pv.get(p).total(), 2);
        }
        assert!(pv
            .get(CanonicalPattern::Spo)
            .entries()
            .iter()
            .all(|&(_, n)| n == 1));
    }

    #[test]
    fn first_block_of_producer_query_is_all_pp() {
        let bgp = [
            TriplePattern::new(
                var("producer"),
                cst("http://data.linkedmdb.org/resource/movie/producer_name"),
                var("name"),
            ),
            TriplePattern::new(
                var("producer"),
                cst("http://www.w3.org/2000/01/rdf-schema#label"),
                var("label"),
            ),
        ];
        let pv = PatternVector::of_bgp(&bgp);
        for p in CanonicalPattern::ALL {
            let expected = if p == CanonicalPattern::XPx { 2 } else { 0 };
            assert_eq!(pv.get(p).distinct(), expected, "{p}");
        }
        assert!(PatternVector::of_bgp(&[]).is_empty());
    }

    fn bag(pairs: &[(u64, u32)]) -> FingerprintBag {
        FingerprintBag::from_counts(pairs.iter().copied())
    }

    fn pv_with(pattern: CanonicalPattern, b: FingerprintBag) -> PatternVector {
        let mut v: [FingerprintBag; 7] = Default::default();
        v[pattern.index()] = b;
        PatternVector::from_vectors(v)
    }

    #[test]
    fn union_takes_elementwise_max() {
        let a = pv_with(CanonicalPattern::SxO, bag(&[(1, 1), (2, 2)]));
        let b = pv_with(CanonicalPattern::SxO, bag(&[(2, 1), (3, 3)]));
        let u = a.union(&b);
        assert_eq!(
            u.get(CanonicalPattern::SxO),
            &bag(&[(1, 1), (2, 2), (3, 3)])
        );
        assert_eq!(a.union(&PatternVector::new()), a);
        assert_eq!(a.union(&a), a);
    }

    #[test]
    fn similarity_examples() {
        let a = pv_with(CanonicalPattern::Spo, bag(&[(1, 1), (2, 1), (3, 1)]));
        let b = pv_with(CanonicalPattern::Spo, bag(&[(2, 1), (3, 1), (4, 1)]));
        assert_eq!(a.similarity(&b), 0.5);
        assert_eq!(a.similarity(&a), 1.0);
        let c = pv_with(CanonicalPattern::Spo, bag(&[(9, 1)]));
        assert_eq!(a.similarity(&c), 0.0);
        assert_eq!(PatternVector::new().similarity(&PatternVector::new()), 0.0);
    }

    #[test]
    fn containment_examples() {
        let a = pv_with(CanonicalPattern::XPx, bag(&[(1, 2), (5, 1)]));
        assert!(a.contains(&PatternVector::new()));
        assert!(a.contains(&pv_with(CanonicalPattern::XPx, bag(&[(1, 2)]))));
        assert!(!a.contains(&pv_with(CanonicalPattern::XPx, bag(&[(1, 3)]))));
        assert!(!a.contains(&pv_with(CanonicalPattern::XPx, bag(&[(2, 1)]))));
        assert!(!a.contains(&pv_with(CanonicalPattern::Spo, bag(&[(1, 1)]))));
    }

    #[test]
    fn dump_round_trip() {
        let pv = PatternVector::of_graph(&[triple("a", "p", "b"), triple("a", "q", "b")]);
        let text = pv.dump();
        assert_eq!(text.lines().count(), 2 + 2 + 1 + 2 + 1 + 2 + 1);
        assert!(text.starts_with("SPO\t"));
        assert_eq!(PatternVector::parse_dump(&text), Some(pv));
    }

    fn brute_jaccard(a: &[u64], b: &[u64]) -> f64 {
        let count = |xs: &[u64]| {
            let mut m: HashMap<u64, u64> = HashMap::new();
            for &x in xs {
                *m.entry(x).or_default() += 1;
            }
            m
        };
        let (ca, cb) = (count(a), count(b));
        let keys: std::collections::HashSet<u64> = ca.keys().chain(cb.keys()).copied().collect();
        let (mut i, mut u) = (0, 0);
        for k in keys {
            let (x, y) = (
                ca.get(&k).copied().unwrap_or(0),
                cb.get(&k).copied().unwrap_or(0),
            );
            i += x.min(y);
            u += x.max(y);
        }
        if u == 0 {
            0.0
        } else {
            i as f64 / u as f64
        }
    }

    fn arb_pv() -> impl Strategy<Value = PatternVector> {
        proptest::array::uniform7(proptest::collection::vec(0u64..12, 0..10))
            .prop_map(|raw| PatternVector::from_vectors(raw.map(FingerprintBag::from_items)))
    }

    proptest! {
        #[test]
        fn union_laws(a in arb_pv(), b in arb_pv(), c in arb_pv()) {
            prop_assert_eq!(a.union(&b), b.union(&a));
            prop_assert_eq!(a.union(&b).union(&c), a.union(&b.union(&c)));
            prop_assert_eq!(a.union(&a), a.clone());
            prop_assert!(a.union(&b).contains(&a));
            prop_assert!(a.union(&b).contains(&b));
        }

        #[test]
        fn similarity_matches_brute_force(
            xs in proptest::collection::vec(0u64..8, 0..20),
            ys in proptest::collection::vec(0u64..8, 0..20),
        ) {
            let a = FingerprintBag::from_items(xs.clone());
            let b = FingerprintBag::from_items(ys.clone());
            prop_assert!((a.jaccard(&b) - brute_jaccard(&xs, &ys)).abs() < 1e-12);
            let pa = pv_with(CanonicalPattern::Sxx, a.clone());
            let pb = pv_with(CanonicalPattern::Sxx, b.clone());
            prop_assert_eq!(pa.similarity(&pb), pb.similarity(&pa));
            if !a.is_empty() {
                prop_assert_eq!(pa.similarity(&pa), 1.0);
            }
        }

        #[test]
        fn masked_graph_triples_are_contained(
            triples in proptest::collection::vec((0u8..4, 0u8..3, 0u8..4), 1..12),
            masks in proptest::collection::vec(0u8..8, 1..12),
        ) {
            let graph: Vec<Triple> = triples
                .iter()
                .map(|&(s, p, o)| triple(&format!("e{s}"), &format!("p{p}"), &format!("e{o}")))
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let bgp: Vec<TriplePattern> = graph
                .iter()
                .zip(masks.iter().cycle())
                .enumerate()
                .map(|(i, (t, &mask))| {
                    let pos = |bit: u8, term: &Term, name: &str| {
                        if mask >> bit & 1 == 1 {
                            PatternTerm::Var(format!("{name}{i}"))
                        } else {
                            PatternTerm::Term(term.clone())
                        }
                    };
                    TriplePattern::new(
                        pos(0, &t.subject, "s"),
                        pos(1, &t.predicate, "p"),
                        pos(2, &t.object, "o"),
                    )
                })
                .collect();
            let c = PatternVector::of_graph(&graph);
            prop_assert!(c.contains(&PatternVector::of_bgp(&bgp)));
            // alignment: each pattern's fingerprint is the data-side fingerprint of its triple
            for (t, tp) in graph.iter().zip(&bgp) {
                if let Some(m) = transform_pattern(tp) {
                    prop_assert_eq!(m.fingerprint(), transform_triple(m.pattern, t).fingerprint());
                }
            }
        }
    }
}

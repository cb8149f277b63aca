//! Browser bindings for the interactive demo page in `www/`.
//!
//! Every export takes plain numbers or strings and returns a JSON string, so
//! the same functions run natively in tests and in the browser. Failures are
//! reported as `{"error": ...}` objects rather than exceptions.

use serde::Serialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

use riq::datagen::{generate, GenConfig};
use riq::engine::{answer_with_candidates, find_candidates, FilterStats};
use riq::filter::{BloomFilter, CountingBloomFilter, FilterParams};
use riq::index::{build_index, IndexConfig, DEFAULT_FILTER_SEEDS};
use riq::lsh::banding_probability;
use riq::rdf::{group_by_context, parse_nquads_str, ParseOptions, Term};
use riq::sparql::parse_query;

/// Largest filter the explorer builds, to keep the page responsive.
pub const MAX_EXPLORER_CAPACITY: u32 = 1_000_000;
pub const MAX_EXPLORER_PROBES: u32 = 1_000_000;

fn error(message: impl Into<String>) -> String {
    json!({ "error": message.into() }).to_string()
}

#[derive(Debug, Serialize, PartialEq)]
pub struct CurvePoint {
    pub similarity: f64,
    pub probability: f64,
}

/// Probability that two graphs whose Pattern Vectors have Jaccard
/// similarity `p` share at least one of `k` bands of `l` rows, at `points`
/// evenly spaced values of `p` in [0, 1].
pub fn curve(k: u32, l: u32, points: u32) -> Result<Vec<CurvePoint>, String> {
    if k == 0 || l == 0 {
        return Err("k and l must be at least 1".into());
    }
    if points < 2 {
        return Err("at least two points are needed".into());
    }
    Ok((0..points)
        .map(|i| {
            let p = f64::from(i) / f64::from(points - 1);
            CurvePoint {
                similarity: p,
                probability: banding_probability(p, k, l),
            }
        })
        .collect())
}

/// JSON `{"k", "l", "threshold", "points": [{"similarity", "probability"}]}`.
/// `threshold` is the similarity at which the curve crosses 1/2.
#[wasm_bindgen]
pub fn banding_curve(k: u32, l: u32, points: u32) -> String {
    match curve(k, l, points) {
        Ok(pts) => {
            let threshold = (1.0 - 0.5f64.powf(1.0 / f64::from(k))).powf(1.0 / f64::from(l));
            json!({ "k": k, "l": l, "threshold": threshold, "points": pts }).to_string()
        }
        Err(e) => error(e),
    }
}

#[derive(Debug, Serialize, PartialEq)]
pub struct FilterTrial {
    pub capacity: u64,
    pub epsilon: f64,
    pub cells: u64,
    pub hashes: u32,
    pub bloom_bytes: usize,
    pub counting_bytes: usize,
    /// False-positive rate predicted from the cell and hash counts.
    pub predicted_rate: f64,
    pub bloom_rate: f64,
    pub counting_rate: f64,
    pub probes: u32,
}

/// Deterministic, well-spread 64-bit items (splitmix64 outputs).
fn items(seed: u64, n: u64) -> impl Iterator<Item = u64> {
    (0..n).map(move |i| {
        let mut z = seed.wrapping_add((i + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    })
}

/// Fills a Bloom and a counting Bloom filter sized for `capacity` items at
/// rate `epsilon`, then probes both with `probes` items never inserted.
pub fn filter_trial(capacity: u32, epsilon: f64, probes: u32, seed: u64) -> Result<FilterTrial, String> {
    if capacity == 0 || capacity > MAX_EXPLORER_CAPACITY {
        return Err(format!("capacity must lie in 1..={MAX_EXPLORER_CAPACITY}"));
    }
    if probes == 0 || probes > MAX_EXPLORER_PROBES {
        return Err(format!("probes must lie in 1..={MAX_EXPLORER_PROBES}"));
    }
    let params = FilterParams::new(u64::from(capacity), epsilon, DEFAULT_FILTER_SEEDS).map_err(|e| e.to_string())?;
    let mut bloom = BloomFilter::new(params);
    let mut counting = CountingBloomFilter::new(params);
    for item in items(seed, u64::from(capacity)) {
        bloom.insert(item);
        counting.insert(item, 1);
    }
    // a different stream, so probes are (almost surely) absent
    let (mut bf_hits, mut cbf_hits) = (0u32, 0u32);
    for item in items(!seed, u64::from(probes)) {
        bf_hits += u32::from(bloom.query(item));
        cbf_hits += u32::from(counting.count(item) > 0);
    }
    let k = f64::from(params.k_hashes);
    let predicted = (1.0 - (-k * f64::from(capacity) / params.m_cells as f64).exp()).powf(k);
    Ok(FilterTrial {
        capacity: u64::from(capacity),
        epsilon,
        cells: params.m_cells,
        hashes: params.k_hashes,
        bloom_bytes: bloom.byte_len(),
        counting_bytes: counting.byte_len(),
        predicted_rate: predicted,
        bloom_rate: f64::from(bf_hits) / f64::from(probes),
        counting_rate: f64::from(cbf_hits) / f64::from(probes),
        probes,
    })
}

/// JSON form of [`filter_trial`].
#[wasm_bindgen]
pub fn bloom_explorer(capacity: u32, epsilon: f64, probes: u32, seed: u32) -> String {
    match filter_trial(capacity, epsilon, probes, u64::from(seed)) {
        Ok(t) => serde_json::to_string(&t).unwrap_or_else(|e| error(e.to_string())),
        Err(e) => error(e),
    }
}

/// A small synthetic dataset in N-Quads, for pre-filling the page.
#[wasm_bindgen]
pub fn sample_dataset(vocabularies: u32, graphs: u32, triples: u32, seed: u32) -> String {
    let cfg = GenConfig {
        vocabularies: vocabularies as usize,
        graphs: graphs as usize,
        triples: triples as usize,
        min_triples: None,
        overlap: 0.0,
        seed: u64::from(seed),
    };
    if graphs == 0 {
        return String::new();
    }
    generate(&cfg).map(|d| d.to_nquads()).unwrap_or_default()
}

fn cell(t: &Option<Term>) -> Value {
    match t {
        Some(t) => Value::String(t.to_string()),
        None => Value::Null,
    }
}

#[derive(Debug, Serialize)]
struct CandidateView {
    group_id: usize,
    members: usize,
    pruned_query: String,
}

/// Indexes `dataset` (N-Quads; malformed lines are skipped and counted) and
/// answers `query`. Syntax errors come back with line, column and a caret
/// diagnostic.
pub fn query_value(dataset: &str, query: &str) -> Value {
    let q = match parse_query(query) {
        Ok(q) => q,
        Err(e) => {
            return json!({
                "error": e.to_string(),
                "line": e.line,
                "col": e.col,
                "diagnostic": e.render(query),
            })
        }
    };
    let parsed = match parse_nquads_str(dataset, &ParseOptions::default()) {
        Ok(p) => p,
        Err(e) => return json!({ "error": e.to_string() }),
    };
    let skipped: Vec<String> = parsed.errors.iter().map(ToString::to_string).collect();
    let run = || -> Result<Value, String> {
        let index = build_index(group_by_context(parsed.quads), &IndexConfig::default()).map_err(|e| e.to_string())?;
        let report = find_candidates(&q, &index).map_err(|e| e.to_string())?;
        let table = answer_with_candidates(&q, &index, &report).map_err(|e| e.to_string())?;
        let candidates: Vec<CandidateView> = report
            .candidates
            .iter()
            .map(|c| CandidateView {
                group_id: c.group_id,
                members: index.groups[c.group_id].members.len(),
                pruned_query: c.pruned_query.clone(),
            })
            .collect();
        let stats: FilterStats = report.filter_stats;
        Ok(json!({
            "graphs": index.manifest.dataset.graphs,
            "quads": index.manifest.dataset.quads,
            "groups": index.groups.len(),
            "skipped_lines": skipped,
            "candidates": candidates,
            "filter_stats": stats,
            "columns": table.columns,
            "rows": table.rows.iter().map(|r| r.iter().map(cell).collect::<Vec<_>>()).collect::<Vec<_>>(),
        }))
    };
    run().unwrap_or_else(|e| json!({ "error": e }))
}

/// JSON form of [`query_value`].
#[wasm_bindgen]
pub fn run_query(dataset: &str, query: &str) -> String {
    query_value(dataset, query).to_string()
}

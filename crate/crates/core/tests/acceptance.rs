//! Acceptance suite: one PASS/FAIL line per criterion, with the measured
//! value. A failing criterion makes the exit status non-zero only when
//! `RIQ_ACCEPTANCE_STRICT=1` is set.
//!
//! Run with `cargo test -p riq-core --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use riq::datagen::{generate, planted_query, BgpShape, GenConfig, Masker, QueryGen};
use riq::engine::{answer_query, find_candidates};
use riq::filter::{BloomFilter, CountingBloomFilter, FilterParams};
use riq::fingerprint::fingerprint;
use riq::index::{build_index, IndexConfig, PvIndex, DEFAULT_EPSILON};
use riq::lsh::{banding_probability, bands_collide, LshConfig, LshParams};
use riq::pattern::PatternTerm;
use riq::rdf::{group_by_context, parse_nquads_str, GraphStore, ParseOptions};
use riq::sparql::{format_query, parse_query, parse_query_with_stats, Production, ProductionCounts, Query};

use common::{evaluate_distinct, is_sub_bag, matching_graphs, sorted};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn group_of(index: &PvIndex) -> Vec<usize> {
    let mut out = vec![0; index.manifest.dataset.graphs];
    for g in &index.groups {
        for &m in &g.members {
            out[m] = g.group_id;
        }
    }
    out
}

/// Every graph holding a match of a planted BGP lies in a candidate group,
/// and the planted graph shows up in the answers.
fn no_false_dismissals() -> Outcome {
    const DATASETS: u64 = 20;
    const QUERIES: usize = 50;
    let results: Vec<(usize, usize, usize, Vec<String>)> = (0..DATASETS)
        .into_par_iter()
        .map(|ds| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + ds);
            let cfg = GenConfig {
                vocabularies: rng.random_range(2..=6),
                graphs: rng.random_range(100..=500),
                triples: 200,
                min_triples: Some(10),
                overlap: [0.0, 0.25, 0.5][ds as usize % 3],
                seed: ds,
            };
            let store = generate(&cfg).unwrap().store();
            let index = build_index(store.clone(), &IndexConfig::default()).unwrap();
            let group_of = group_of(&index);
            let (mut ok, mut max_size, mut cyclic) = (0, 0, 0);
            let mut failures = Vec::new();
            for i in 0..QUERIES {
                let shape = BgpShape::ALL[i % 4];
                let size = 1 + (i * 7 + ds as usize) % 22;
                let planted = planted_query(&store, size, shape, &mut rng).unwrap();
                max_size = max_size.max(planted.bgp.len());
                let nodes: std::collections::HashSet<&PatternTerm> =
                    planted.bgp.iter().flat_map(|tp| [&tp.subject, &tp.object]).collect();
                cyclic += usize::from(planted.bgp.len() >= nodes.len());
                let q = parse_query(&planted.text).unwrap();
                let candidates = find_candidates(&q, &index).unwrap().candidate_group_ids;
                let dismissed: Vec<usize> = matching_graphs(&planted.bgp, &store)
                    .into_iter()
                    .filter(|g| !candidates.contains(&group_of[*g]))
                    .collect();
                let context = store.graph(planted.graph).unwrap().context.clone();
                let answered = answer_query(&q, &index).unwrap().rows.iter().any(|r| r[0].as_ref() == Some(&context));
                if dismissed.is_empty() && answered {
                    ok += 1;
                } else {
                    failures.push(format!("dataset {ds}: graphs {dismissed:?} dismissed for {}", planted.text));
                }
            }
            (ok, max_size, cyclic, failures)
        })
        .collect();
    let total = DATASETS as usize * QUERIES;
    let ok: usize = results.iter().map(|r| r.0).sum();
    let max_size = results.iter().map(|r| r.1).max().unwrap_or(0);
    let cyclic: usize = results.iter().map(|r| r.2).sum();
    for f in results.iter().flat_map(|r| &r.3).take(3) {
        eprintln!("  {f}");
    }
    outcome(
        ok == total,
        format!("{ok}/{total} pairs without dismissal; largest BGP {max_size} patterns; {cyclic} cyclic BGPs"),
    )
}

/// `answer_query` equals the whole-dataset reference evaluator.
fn oracle_equivalence() -> Outcome {
    const DATASETS: u64 = 5;
    const QUERIES: usize = 120;
    let results: Vec<(usize, usize, ProductionCounts, Vec<String>)> = (0..DATASETS)
        .into_par_iter()
        .map(|ds| {
            let cfg = GenConfig {
                vocabularies: 3,
                graphs: 60,
                triples: 40,
                min_triples: Some(10),
                overlap: 0.25,
                seed: 2000 + ds,
            };
            let store = generate(&cfg).unwrap().store();
            let index = build_index(store.clone(), &IndexConfig::default()).unwrap();
            let gen = QueryGen::new(&store);
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + ds);
            let mut counts = ProductionCounts::default();
            let (mut ok, mut nonempty) = (0, 0);
            let mut failures = Vec::new();
            for _ in 0..QUERIES {
                let text = gen.query(&mut rng).unwrap();
                let (q, c) = parse_query_with_stats(&text).unwrap();
                counts.merge(&c);
                match compare_with_oracle(&q, &store, &index) {
                    Ok(rows) => {
                        ok += 1;
                        nonempty += usize::from(rows > 0);
                    }
                    Err(e) => failures.push(format!("{text}: {e}")),
                }
            }
            (ok, nonempty, counts, failures)
        })
        .collect();
    let total = DATASETS as usize * QUERIES;
    let ok: usize = results.iter().map(|r| r.0).sum();
    let nonempty: usize = results.iter().map(|r| r.1).sum();
    let mut counts = ProductionCounts::default();
    for r in &results {
        counts.merge(&r.2);
    }
    let missing: Vec<Production> = Production::GRAMMAR.into_iter().filter(|p| counts.get(*p) == 0).collect();
    for f in results.iter().flat_map(|r| &r.3).take(3) {
        eprintln!("  {f}");
    }
    outcome(
        ok == total && missing.is_empty(),
        format!("{ok}/{total} queries equal ({nonempty} non-empty); productions missing: {missing:?}"),
    )
}

fn compare_with_oracle(q: &Query, store: &GraphStore, index: &PvIndex) -> Result<usize, String> {
    let got = answer_query(q, index).map_err(|e| e.to_string())?;
    let want = evaluate_distinct(q, store);
    if q.limit.is_none() && q.offset.is_none() {
        if sorted(got.rows.clone()) != sorted(want.clone()) {
            return Err(format!("engine {} rows, reference {}", got.len(), want.len()));
        }
    } else {
        let expected = want
            .len()
            .saturating_sub(q.offset.unwrap_or(0) as usize)
            .min(q.limit.map_or(usize::MAX, |l| l as usize));
        if got.len() != expected || !is_sub_bag(&got.rows, &want) {
            return Err(format!("engine {} rows, expected {expected}", got.len()));
        }
    }
    Ok(want.len())
}

/// Measured false-positive rates of filters filled to capacity.
fn filter_fp_rate() -> Outcome {
    const CAPACITY: u64 = 10_000;
    const PROBES: u64 = 100_000;
    let params = FilterParams::new(CAPACITY, DEFAULT_EPSILON, [0x1234_5678, 0x9ABC_DEF0]).unwrap();
    let item = |i: u64| fingerprint(&i.to_le_bytes());
    let mut bf = BloomFilter::new(params);
    let mut cbf = CountingBloomFilter::new(params);
    for i in 0..CAPACITY {
        bf.insert(item(i));
        cbf.insert(item(i), 1 + (i % 3) as u32);
    }
    let absent = CAPACITY..CAPACITY + PROBES;
    let bf_fp = absent.clone().filter(|&i| bf.query(item(i))).count() as f64 / PROBES as f64;
    let cbf_fp = absent.filter(|&i| cbf.count(item(i)) > 0).count() as f64 / PROBES as f64;
    outcome(
        bf_fp <= 0.075 && cbf_fp <= 0.075,
        format!("Bloom {bf_fp:.4}, counting Bloom {cbf_fp:.4} (limit 0.075, target 0.05)"),
    )
}

/// Empirical band-collision frequency against `1 - (1 - p^l)^k`.
fn banding_law() -> Outcome {
    const DRAWS: u64 = 2_000;
    const UNION: usize = 200;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for p in [0.1, 0.3, 0.5, 0.8] {
        let common = (p * UNION as f64).round() as usize;
        let size = (UNION + common) / 2;
        let items: Vec<u64> = (0..UNION as u64).map(|i| fingerprint(&i.to_be_bytes())).collect();
        let a = &items[..size];
        let b = &items[UNION - size..];
        let hits = (0..DRAWS)
            .into_par_iter()
            .filter(|&seed| {
                let params = LshParams::new(LshConfig {
                    master_seed: seed,
                    ..LshConfig::default()
                })
                .unwrap();
                bands_collide(&params.sign(a.iter().copied()), &params.sign(b.iter().copied())).unwrap()
            })
            .count();
        let c = LshConfig::default();
        let expected = banding_probability(p, c.k, c.l);
        let measured = hits as f64 / DRAWS as f64;
        worst = worst.max((measured - expected).abs());
        parts.push(format!("p={p}: {measured:.3} vs {expected:.3}"));
    }
    outcome(worst <= 0.05, format!("{}; max deviation {worst:.3}", parts.join(", ")))
}

/// Queries confined to one vocabulary reach few groups, mostly of that
/// vocabulary. Both conditions are checked for every query of the workload.
fn pruning_effectiveness() -> Outcome {
    const QUERIES: usize = 200;
    let d = generate(&GenConfig {
        vocabularies: 5,
        graphs: 1000,
        triples: 50,
        seed: 5,
        ..GenConfig::default()
    })
    .unwrap();
    let vocabulary = d.truth.vocabulary_of();
    let store = d.store();
    let index = build_index(store.clone(), &IndexConfig::default()).unwrap();
    let total_groups = index.groups.len();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (mut passing, mut foreign_hits, mut foreign_tests) = (0, 0, 0);
    let (mut worst_purity, mut max_candidates, mut purity_sum) = (1.0f64, 0, 0.0);
    let mut queries = 0;
    while queries < QUERIES {
        let graph = rng.random_range(0..store.graph_count());
        let v = vocabulary[graph];
        let triples: Vec<_> = store.graph(graph).unwrap().triples.iter().cloned().collect();
        let shape = BgpShape::ALL[queries % 4];
        let sample = riq::datagen::sample_triples(&triples, rng.random_range(1..=6), shape, &mut rng);
        let mut masker = Masker::new("x");
        let bgp: Vec<_> = sample.iter().map(|t| masker.mask(t, &mut rng)).collect();
        // confined to the vocabulary: at least one constant from it
        if bgp.iter().all(|tp| tp.positions().iter().all(|p| matches!(p, PatternTerm::Var(_)))) {
            continue;
        }
        queries += 1;
        let text = format!("SELECT * WHERE {{ GRAPH ?g {{ {}}} }}", riq::datagen::bgp_text(&bgp));
        let report = find_candidates(&parse_query(&text).unwrap(), &index).unwrap();
        let members: Vec<usize> = report
            .candidate_group_ids
            .iter()
            .flat_map(|&g| index.groups[g].members.iter().copied())
            .collect();
        let own = members.iter().filter(|&&m| vocabulary[m] == v).count();
        let purity = own as f64 / members.len().max(1) as f64;
        let holds_v = |g: usize| index.groups[g].members.iter().any(|&m| vocabulary[m] == v);
        let with_vocabulary = (0..total_groups).filter(|&g| holds_v(g)).count();
        let bound = total_groups as f64 * (DEFAULT_EPSILON + 0.05) + with_vocabulary as f64;
        let count = report.candidate_group_ids.len();
        passing += usize::from(purity >= 0.95 && count as f64 <= bound);
        foreign_hits += report.candidate_group_ids.iter().filter(|&&g| !holds_v(g)).count();
        foreign_tests += total_groups - with_vocabulary;
        worst_purity = worst_purity.min(purity);
        purity_sum += purity;
        max_candidates = max_candidates.max(count);
    }
    outcome(
        passing == QUERIES,
        format!(
            "{passing}/{QUERIES} queries meet both bounds; {total_groups} groups; foreign-group hit rate {:.2}%; \
             mean purity {:.1}%, worst {:.1}%; at most {max_candidates} candidate groups",
            100.0 * foreign_hits as f64 / foreign_tests.max(1) as f64,
            100.0 * purity_sum / QUERIES as f64,
            100.0 * worst_purity,
        ),
    )
}

fn dir_bytes(dir: &Path, filter: &dyn Fn(&Path) -> bool) -> u64 {
    let mut total = 0;
    for entry in walk(dir) {
        if filter(&entry) {
            total += std::fs::metadata(&entry).unwrap().len();
        }
    }
    total
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

/// Filter files against the size of the input N-Quads.
fn compactness() -> Outcome {
    let d = generate(&GenConfig::default()).unwrap();
    let input = d.to_nquads().len() as u64;
    let index = build_index(d.store(), &IndexConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    index.save(dir.path()).unwrap();
    let filters = dir_bytes(dir.path(), &|p| p.extension().is_some_and(|e| e == "filters"));
    let ratio = filters as f64 / input as f64;
    outcome(
        ratio <= 0.15,
        format!("filters {filters} B / N-Quads {input} B = {:.1}% (limit 15%)", ratio * 100.0),
    )
}

/// Identical builds give identical bytes, whatever the worker count.
fn determinism() -> Outcome {
    let store = generate(&GenConfig {
        graphs: 300,
        min_triples: Some(10),
        overlap: 0.25,
        seed: 7,
        ..GenConfig::default()
    })
    .unwrap()
    .store();
    let snapshot = |workers: usize| -> BTreeMap<String, Vec<u8>> {
        let cfg = IndexConfig {
            workers: Some(workers),
            keep_pvs: true,
            ..IndexConfig::with_seed(7)
        };
        let index = build_index(store.clone(), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        index.save(dir.path()).unwrap();
        walk(dir.path())
            .into_iter()
            .map(|p| (p.strip_prefix(dir.path()).unwrap().display().to_string(), std::fs::read(&p).unwrap()))
            .collect()
    };
    let a = snapshot(1);
    let b = snapshot(1);
    let c = snapshot(4);
    let golden = include_str!("data/fingerprint_vectors.tsv")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter(|l| {
            let (input, output) = l.split_once('\t').unwrap();
            let bytes: Vec<u8> = (0..input.len()).step_by(2).map(|i| u8::from_str_radix(&input[i..i + 2], 16).unwrap()).collect();
            format!("{:016x}", fingerprint(&bytes)) != output
        })
        .count();
    outcome(
        a == b && a == c && golden == 0,
        format!(
            "{} files identical across 3 builds: {}; golden hash mismatches: {golden}",
            a.len(),
            a == b && a == c
        ),
    )
}

fn corpus() -> Vec<&'static str> {
    include_str!("data/corpus.rq")
        .split("\n# ---\n")
        .map(|q| {
            let start = q.lines().take_while(|l| l.starts_with('#')).map(|l| l.len() + 1).sum::<usize>();
            q[start..].trim()
        })
        .collect()
}

/// The producer query and the corpus parse, round-trip and execute, and
/// together reach every grammar production.
fn grammar_coverage() -> Outcome {
    let default = generate(&GenConfig::default()).unwrap().store();
    let default_index = build_index(default.clone(), &IndexConfig::default()).unwrap();
    let movies = group_by_context(
        parse_nquads_str(include_str!("data/linkedmdb.nq"), &ParseOptions::default()).unwrap().quads,
    );
    let movie_index = build_index(movies.clone(), &IndexConfig::default()).unwrap();
    let mut workload: Vec<(&str, &GraphStore, &PvIndex)> = vec![(include_str!("data/producer.rq"), &movies, &movie_index)];
    workload.extend(corpus().into_iter().map(|q| (q, &default, &default_index)));
    let mut counts = ProductionCounts::default();
    let mut ok = 0;
    for (text, store, index) in &workload {
        let Ok((q, c)) = parse_query_with_stats(text) else {
            eprintln!("  does not parse: {text}");
            continue;
        };
        counts.merge(&c);
        let round_trip = parse_query(&format_query(&q)).is_ok_and(|r| r == q);
        let executed = compare_with_oracle(&q, store, index);
        if round_trip && executed.is_ok() {
            ok += 1;
        } else {
            eprintln!("  round trip {round_trip}, execution {executed:?}: {text}");
        }
    }
    let missing: Vec<Production> = Production::GRAMMAR.into_iter().filter(|p| counts.get(*p) == 0).collect();
    outcome(
        ok == workload.len() && missing.is_empty(),
        format!("{ok}/{} queries parse, round-trip and execute; productions missing: {missing:?}", workload.len()),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; none apply.
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("no false dismissals", no_false_dismissals),
        ("oracle equivalence", oracle_equivalence),
        ("filter false-positive rate", filter_fp_rate),
        ("LSH banding law", banding_law),
        ("pruning effectiveness", pruning_effectiveness),
        ("index compactness", compactness),
        ("determinism", determinism),
        ("grammar coverage", grammar_coverage),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{verdict} {}. {name}: {} [{:.1}s]", i + 1, o.detail, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        // a red criterion is a reported result, not a broken build; set
        // RIQ_ACCEPTANCE_STRICT=1 to turn it into a failing exit status
        if std::env::var_os("RIQ_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
            std::process::exit(1);
        }
    } else {
        println!("all {} criteria passed", criteria.len());
    }
}

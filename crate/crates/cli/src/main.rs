use std::fs::{self, File};
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use riq::datagen::{generate, GenConfig};
use riq::engine::{answer_with_candidates, describe_report, find_candidates};
use riq::index::{build_index, with_workers, IndexConfig, PvIndex, DEFAULT_EPSILON};
use riq::rdf::{group_by_context, parse_nquads, ParseOptions, Term};
use riq::sparql::{parse_query, SyntaxError};

/// Index RDF quad datasets by graph similarity and answer SPARQL-subset
/// queries against the index.
#[derive(Parser, Debug)]
#[command(name = "riq", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an index directory from an N-Quads file.
    Index(IndexArgs),
    /// Answer a query against an index directory.
    Query(QueryArgs),
    /// Print statistics of an index directory as JSON.
    Stats(StatsArgs),
    /// Generate a synthetic N-Quads dataset with ground truth.
    Gen(GenArgs),
}

#[derive(Args, Debug)]
struct WorkerArgs {
    /// Worker threads for the parallel phases (default: number of processors).
    #[arg(long, env = "RIQ_WORKERS", value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
}

impl WorkerArgs {
    fn get(&self) -> Option<usize> {
        self.workers.map(|w| w as usize)
    }
}

#[derive(Args, Debug)]
struct IndexArgs {
    /// Input N-Quads file.
    #[arg(short, long)]
    input: PathBuf,
    /// Output index directory (created if missing).
    #[arg(short, long)]
    output: PathBuf,
    /// Target false-positive rate of every filter, in (0, 1).
    #[arg(long, default_value_t = DEFAULT_EPSILON, value_parser = parse_epsilon)]
    epsilon: f64,
    /// Number of LSH bands.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    k: u32,
    /// Rows per LSH band.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    l: u32,
    /// Seed for the LSH functions and filter hashes.
    #[arg(long, env = "RIQ_SEED")]
    seed: Option<u64>,
    /// Abort on the first malformed line instead of skipping it.
    #[arg(long)]
    strict: bool,
    /// Graph IRI given to lines that carry only a triple.
    #[arg(long, value_name = "IRI")]
    default_graph: Option<String>,
    /// Also store the per-graph Pattern Vectors in the index.
    #[arg(long)]
    keep_pvs: bool,
    #[command(flatten)]
    workers: WorkerArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Args, Debug)]
struct QueryArgs {
    /// Index directory.
    #[arg(short = 'x', long)]
    index: PathBuf,
    /// File holding the query; `-` reads standard input.
    #[arg(short, long, conflicts_with = "expr", required_unless_present = "expr")]
    query: Option<PathBuf>,
    /// Query text given inline.
    #[arg(short, long)]
    expr: Option<String>,
    /// Output format of the result rows.
    #[arg(short, long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
    /// Print the candidate groups and pruned queries as JSON without executing.
    #[arg(long)]
    candidates_only: bool,
    #[command(flatten)]
    workers: WorkerArgs,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Index directory.
    #[arg(short = 'x', long)]
    index: PathBuf,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Output N-Quads file.
    #[arg(short, long)]
    output: PathBuf,
    /// Ground-truth JSON file (vocabulary to graph ids).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    vocabularies: usize,
    /// Total number of graphs, spread round-robin over the vocabularies.
    #[arg(long, default_value_t = 200)]
    graphs: usize,
    /// Triples per graph (the maximum when --min-triples is given).
    #[arg(long, default_value_t = 50)]
    triples: usize,
    /// Draw each graph's size uniformly from min-triples..=triples.
    #[arg(long)]
    min_triples: Option<usize>,
    /// Fraction of predicates shared by all vocabularies, in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    overlap: f64,
    #[arg(long, env = "RIQ_SEED", default_value_t = 1)]
    seed: u64,
}

fn parse_epsilon(s: &str) -> Result<f64, String> {
    let e: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if e > 0.0 && e < 1.0 {
        Ok(e)
    } else {
        Err(format!("{e} is outside (0, 1)"))
    }
}

/// A query that failed to parse, kept with its source for the diagnostic.
#[derive(Debug)]
struct QuerySyntax {
    err: SyntaxError,
    source: String,
}

impl std::fmt::Display for QuerySyntax {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.err.render(&self.source).trim_end())
    }
}

impl std::error::Error for QuerySyntax {}

fn stats_line(value: serde_json::Value) {
    eprintln!("{value}");
}

fn cmd_index(args: &IndexArgs) -> Result<()> {
    let start = Instant::now();
    let file = File::open(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let opts = ParseOptions {
        strict: args.strict,
        default_graph: args.default_graph.as_deref().map(Term::iri),
    };
    let mut config = args.seed.map_or_else(IndexConfig::default, IndexConfig::with_seed);
    config.epsilon = args.epsilon;
    config.lsh.k = args.k;
    config.lsh.l = args.l;
    config.keep_pvs = args.keep_pvs;
    config.workers = args.workers.get();
    fs::create_dir_all(&args.output).with_context(|| format!("cannot create {}", args.output.display()))?;

    let parsed =
        parse_nquads(BufReader::new(file), &opts).with_context(|| format!("{}", args.input.display()))?;
    for bad in &parsed.errors {
        eprintln!("warning: {}: skipped {bad}", args.input.display());
    }
    let skipped = parsed.errors.len();
    let store = group_by_context(parsed.quads);
    let index = build_index(store, &config)?;
    index.save(&args.output)?;
    let stats = index.stats();
    let secs = start.elapsed().as_secs_f64();
    println!(
        "indexed {} graphs ({} quads) into {} groups; {} filter bytes; {:.3} s",
        stats.graphs, stats.quads, stats.groups, stats.filter_bytes, secs
    );
    stats_line(json!({
        "event": "index",
        "graphs": stats.graphs,
        "quads": stats.quads,
        "groups": stats.groups,
        "largest_group": stats.largest_group,
        "filter_bytes": stats.filter_bytes,
        "skipped_lines": skipped,
        "wall_ms": secs * 1e3,
    }));
    Ok(())
}

fn read_query(args: &QueryArgs) -> Result<String> {
    if let Some(text) = &args.expr {
        return Ok(text.clone());
    }
    let path = args.query.as_deref().unwrap_or(Path::new("-"));
    if path == Path::new("-") {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text).context("cannot read query from standard input")?;
        Ok(text)
    } else {
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
    }
}

fn cmd_query(args: &QueryArgs) -> Result<()> {
    let index = PvIndex::load(&args.index).with_context(|| format!("cannot load index {}", args.index.display()))?;
    let text = read_query(args)?;
    let q = parse_query(&text).map_err(|err| QuerySyntax {
        err,
        source: text.clone(),
    })?;

    with_workers(args.workers.get(), || -> Result<()> {
        let start = Instant::now();
        let report = find_candidates(&q, &index)?;
        let filter_ms = start.elapsed().as_secs_f64() * 1e3;
        eprintln!("{}", describe_report(&report, index.groups.len()));
        let mut out = io::stdout().lock();
        if args.candidates_only {
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out)?;
            stats_line(json!({
                "event": "candidates",
                "groups": index.groups.len(),
                "candidates": report.candidate_group_ids.len(),
                "filter_stats": report.filter_stats,
                "filter_ms": filter_ms,
            }));
            return Ok(());
        }
        let exec_start = Instant::now();
        let table = answer_with_candidates(&q, &index, &report)?;
        let exec_ms = exec_start.elapsed().as_secs_f64() * 1e3;
        match args.format {
            Format::Tsv => out.write_all(table.to_tsv().as_bytes())?,
            Format::Json => {
                serde_json::to_writer_pretty(&mut out, &table.to_json())?;
                writeln!(out)?;
            }
        }
        out.flush()?;
        stats_line(json!({
            "event": "query",
            "groups": index.groups.len(),
            "candidates": report.candidate_group_ids.len(),
            "rows": table.len(),
            "filter_stats": report.filter_stats,
            "filter_ms": filter_ms,
            "exec_ms": exec_ms,
        }));
        Ok(())
    })
}

fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let index = PvIndex::load(&args.index).with_context(|| format!("cannot load index {}", args.index.display()))?;
    let out = json!({
        "manifest": index.manifest,
        "stats": index.stats(),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let cfg = GenConfig {
        vocabularies: args.vocabularies,
        graphs: args.graphs,
        triples: args.triples,
        min_triples: args.min_triples,
        overlap: args.overlap,
        seed: args.seed,
    };
    let data = generate(&cfg)?;
    fs::write(&args.output, data.to_nquads()).with_context(|| format!("cannot write {}", args.output.display()))?;
    if let Some(path) = &args.truth {
        let text = serde_json::to_string_pretty(&data.truth)? + "\n";
        fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    }
    stats_line(json!({
        "event": "gen",
        "graphs": cfg.graphs,
        "quads": data.quads.len(),
        "vocabularies": cfg.vocabularies,
    }));
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Index(a) => cmd_index(a),
        Command::Query(a) => cmd_query(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Gen(a) => {
            if a.graphs == 0 {
                bail!("--graphs must be at least 1");
            }
            cmd_gen(a)
        }
    }
}

fn main() -> ExitCode {
    // usage errors are configuration errors (exit 1); 2 is reserved for
    // query syntax errors
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(syntax) = e.downcast_ref::<QuerySyntax>() {
                eprintln!("error: {syntax}");
                return ExitCode::from(2);
            }
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

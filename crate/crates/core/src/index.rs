//! The PV-Index: graphs are grouped by LSH collisions on their Pattern
//! Vectors, and each group is summarised by one Bloom filter (SPO) and six
//! Counting Bloom filters built from the union of its members' vectors.
//!
//! On-disk layout of an index directory:
//!
//! ```text
//! manifest.json         parameters, seeds, dataset stats, per-file CRC-32
//! groups.toc            <group id> TAB <quad count> TAB <member graph ids, comma separated>
//! groups/<id>.filters   RIQF blocks: SPO Bloom filter, then the six counting filters
//! groups/<id>.nq        member quads, lines sorted bytewise
//! pvs/<graph id>.pv     per-graph Pattern Vector dumps (only with keep_pvs)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{BloomFilter, CountingBloomFilter, FilterError, FilterParams};
use crate::fingerprint::{RabinConfig, POLYNOMIAL};
use crate::lsh::{LshConfig, LshError, LshParams, LshSignature};
use crate::pattern::{CanonicalPattern, PatternVector};
use crate::rdf::{self, GraphRef, GraphStore, ParseOptions};

pub const INDEX_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_FILTER_SEEDS: [u64; 2] = [0x9AE1_6A3B_2F90_404F, 0xC2B2_AE3D_27D4_EB4F];

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corrupt index: {detail}")]
    CorruptIndex { detail: String },
    #[error("index format mismatch: {detail}")]
    VersionMismatch { detail: String },
}

impl From<LshError> for IndexError {
    fn from(e: LshError) -> Self {
        IndexError::Config(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IndexError + '_ {
    move |source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(detail: impl Into<String>) -> IndexError {
    IndexError::CorruptIndex {
        detail: detail.into(),
    }
}

#[derive(Clone, Debug)]
pub struct IndexConfig {
    pub epsilon: f64,
    pub lsh: LshConfig,
    pub filter_seeds: [u64; 2],
    /// Retain per-graph Pattern Vectors and write them out on save.
    pub keep_pvs: bool,
    /// Worker threads for the parallel phases; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            epsilon: DEFAULT_EPSILON,
            lsh: LshConfig::default(),
            filter_seeds: DEFAULT_FILTER_SEEDS,
            keep_pvs: false,
            workers: None,
        }
    }
}

impl IndexConfig {
    /// Derives LSH and filter seeds from one seed.
    pub fn with_seed(seed: u64) -> Self {
        let mut c = IndexConfig::default();
        c.lsh.master_seed = seed;
        c.filter_seeds = [
            DEFAULT_FILTER_SEEDS[0] ^ seed.rotate_left(17),
            DEFAULT_FILTER_SEEDS[1] ^ seed.rotate_left(41),
        ];
        c
    }

    fn validate(&self) -> Result<LshParams, IndexError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(IndexError::Config(format!(
                "epsilon {} outside (0, 1)",
                self.epsilon
            )));
        }
        if self.workers == Some(0) {
            return Err(IndexError::Config("worker count must be at least 1".into()));
        }
        Ok(LshParams::new(self.lsh)?)
    }
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

/// The filters of one group, SPO first, then the other six patterns in
/// canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupFilters {
    pub spo: BloomFilter,
    pub patterns: [CountingBloomFilter; 6],
}

impl GroupFilters {
    /// Counting filter for a non-SPO pattern.
    pub fn counting(&self, pattern: CanonicalPattern) -> Option<&CountingBloomFilter> {
        match pattern {
            CanonicalPattern::Spo => None,
            p => Some(&self.patterns[p.index() - 1]),
        }
    }

    pub fn byte_len(&self) -> usize {
        self.spo.byte_len() + self.patterns.iter().map(|f| f.byte_len()).sum::<usize>()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        self.spo.write_to(&mut out);
        for f in &self.patterns {
            f.write_to(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FilterError> {
        let mut input = bytes;
        let spo = BloomFilter::read_from(&mut input)?;
        let mut patterns = Vec::with_capacity(6);
        for _ in 0..6 {
            patterns.push(CountingBloomFilter::read_from(&mut input)?);
        }
        if !input.is_empty() {
            return Err(FilterError::Corrupt(format!(
                "{} trailing bytes",
                input.len()
            )));
        }
        Ok(GroupFilters {
            spo,
            patterns: patterns.try_into().unwrap(),
        })
    }

    fn params(&self) -> impl Iterator<Item = &FilterParams> {
        std::iter::once(self.spo.params()).chain(self.patterns.iter().map(|f| f.params()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupRecord {
    pub group_id: usize,
    /// Sorted graph ids.
    pub members: Vec<usize>,
    pub quad_count: usize,
    pub filters: GroupFilters,
}

/// Groups graphs whose signatures collide on the same (pattern, band, value).
///
/// Graphs sharing a bucket are joined with union-find, which gives exactly
/// the connected components of the pairwise collision graph. Components are
/// ordered by their smallest member; members are sorted.
pub fn build_similarity_groups(pvs: &[PatternVector], params: &LshParams) -> Vec<Vec<usize>> {
    let signatures: Vec<[LshSignature; 7]> = pvs
        .par_iter()
        .map(|pv| std::array::from_fn(|r| params.sign(pv.vectors()[r].support())))
        .collect();
    group_signatures(&signatures)
}

pub(crate) fn group_signatures(signatures: &[[LshSignature; 7]]) -> Vec<Vec<usize>> {
    let mut dsu = DisjointSets::new(signatures.len());
    let mut buckets: HashMap<(u8, u32, u64), usize> = HashMap::new();
    for (graph, sigs) in signatures.iter().enumerate() {
        for (r, sig) in sigs.iter().enumerate() {
            for (band, &value) in sig.values().iter().enumerate() {
                match buckets.entry((r as u8, band as u32, value)) {
                    std::collections::hash_map::Entry::Occupied(e) => dsu.union(*e.get(), graph),
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(graph);
                    }
                }
            }
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut order: Vec<usize> = Vec::new();
    for g in 0..signatures.len() {
        let root = dsu.find(g);
        let members = by_root.entry(root).or_default();
        if members.is_empty() {
            order.push(root);
        }
        members.push(g);
    }
    order
        .into_iter()
        .map(|root| by_root.remove(&root).unwrap())
        .collect()
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Union of the members' vectors (elementwise-max multiplicities).
pub fn union_of(members: &[usize], pvs: &[PatternVector]) -> PatternVector {
    members
        .iter()
        .fold(PatternVector::new(), |acc, &g| acc.union(&pvs[g]))
}

/// Freezes a union vector into filters: each filter's capacity is the
/// number of distinct fingerprints in its vector.
pub fn filters_for_union(
    union: &PatternVector,
    epsilon: f64,
    seeds: [u64; 2],
) -> Result<GroupFilters, FilterError> {
    let spo_bag = union.get(CanonicalPattern::Spo);
    let mut spo = BloomFilter::new(FilterParams::new(
        spo_bag.distinct() as u64,
        epsilon,
        seeds,
    )?);
    for fp in spo_bag.support() {
        spo.insert(fp);
    }
    let mut patterns = Vec::with_capacity(6);
    for p in &CanonicalPattern::ALL[1..] {
        let bag = union.get(*p);
        let mut f =
            CountingBloomFilter::new(FilterParams::new(bag.distinct() as u64, epsilon, seeds)?);
        for &(fp, n) in bag.entries() {
            f.insert(fp, n);
        }
        patterns.push(f);
    }
    Ok(GroupFilters {
        spo,
        patterns: patterns.try_into().unwrap(),
    })
}

pub fn build_group_record(
    group_id: usize,
    members: Vec<usize>,
    pvs: &[PatternVector],
    store: &GraphStore,
    epsilon: f64,
    seeds: [u64; 2],
) -> Result<GroupRecord, IndexError> {
    assert!(!members.is_empty(), "empty component");
    let union = union_of(&members, pvs);
    let filters =
        filters_for_union(&union, epsilon, seeds).map_err(|e| IndexError::Config(e.to_string()))?;
    let quad_count = members
        .iter()
        .map(|&g| store.graph(g).map_or(0, |g| g.triples.len()))
        .sum();
    Ok(GroupRecord {
        group_id,
        members,
        quad_count,
        filters,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub graphs: usize,
    pub quads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub epsilon: f64,
    pub rabin: RabinConfig,
    pub lsh: LshConfig,
    pub filter_seeds: [u64; 2],
    pub group_count: usize,
    pub dataset: DatasetStats,
    /// CRC-32 (hex) of every other file in the directory, keyed by relative path.
    #[serde(default)]
    pub checksums: BTreeMap<String, String>,
}

#[derive(Clone, Debug)]
enum Partitions {
    Memory(Arc<GraphStore>),
    Disk(PathBuf),
}

#[derive(Clone, Debug)]
pub struct PvIndex {
    pub manifest: Manifest,
    pub groups: Vec<GroupRecord>,
    partitions: Partitions,
    pvs: Option<Vec<PatternVector>>,
}

/// Member graphs of one group, borrowed from an in-memory store or loaded
/// from the group's partition file.
pub enum GroupGraphs<'a> {
    Borrowed(&'a GraphStore, &'a [usize]),
    Owned(GraphStore),
}

impl GroupGraphs<'_> {
    pub fn graphs(&self) -> Vec<GraphRef<'_>> {
        match self {
            GroupGraphs::Borrowed(store, members) => {
                members.iter().filter_map(|&g| store.graph(g)).collect()
            }
            GroupGraphs::Owned(store) => store.graphs().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub groups: usize,
    pub graphs: usize,
    pub quads: usize,
    pub filter_bytes: usize,
    pub group_sizes: Vec<usize>,
    pub quads_per_group: Vec<usize>,
    pub largest_group: usize,
}

/// Builds the index in memory. Call [`PvIndex::save`] to persist it.
pub fn build_index(
    store: impl Into<Arc<GraphStore>>,
    config: &IndexConfig,
) -> Result<PvIndex, IndexError> {
    let store: Arc<GraphStore> = store.into();
    let lsh = config.validate()?;
    with_workers(config.workers, || {
        let pvs: Vec<PatternVector> = (0..store.graph_count())
            .into_par_iter()
            .map(|g| PatternVector::of_graph(store.graph(g).unwrap().triples))
            .collect();
        let components = build_similarity_groups(&pvs, &lsh);
        let groups = components
            .into_par_iter()
            .enumerate()
            .map(|(id, members)| {
                build_group_record(
                    id,
                    members,
                    &pvs,
                    &store,
                    config.epsilon,
                    config.filter_seeds,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let manifest = Manifest {
            format_version: INDEX_FORMAT_VERSION,
            epsilon: config.epsilon,
            rabin: RabinConfig::default(),
            lsh: config.lsh,
            filter_seeds: config.filter_seeds,
            group_count: groups.len(),
            dataset: DatasetStats {
                graphs: store.graph_count(),
                quads: store.quad_count(),
            },
            checksums: BTreeMap::new(),
        };
        Ok(PvIndex {
            manifest,
            groups,
            partitions: Partitions::Memory(store.clone()),
            pvs: config.keep_pvs.then_some(pvs),
        })
    })
}

fn crc_hex(bytes: &[u8]) -> String {
    format!("{:08x}", crc32fast::hash(bytes))
}

impl PvIndex {
    pub fn lsh_params(&self) -> Result<LshParams, IndexError> {
        Ok(LshParams::new(self.manifest.lsh)?)
    }

    pub fn pattern_vectors(&self) -> Option<&[PatternVector]> {
        self.pvs.as_deref()
    }

    /// The in-memory dataset, when the index was built rather than loaded.
    pub fn store(&self) -> Option<&GraphStore> {
        match &self.partitions {
            Partitions::Memory(s) => Some(s),
            Partitions::Disk(_) => None,
        }
    }

    pub fn group_graphs(&self, group_id: usize) -> Result<GroupGraphs<'_>, IndexError> {
        let group = self
            .groups
            .get(group_id)
            .ok_or_else(|| corrupt(format!("no group {group_id}")))?;
        match &self.partitions {
            Partitions::Memory(store) => Ok(GroupGraphs::Borrowed(store, &group.members)),
            Partitions::Disk(dir) => {
                let path = dir.join(partition_name(group_id));
                let text = fs::read(&path).map_err(io_err(&path))?;
                let opts = ParseOptions {
                    strict: true,
                    default_graph: None,
                };
                let parsed = rdf::parse_nquads(&text[..], &opts)
                    .map_err(|e| corrupt(format!("{}: {e}", path.display())))?;
                Ok(GroupGraphs::Owned(rdf::group_by_context(parsed.quads)))
            }
        }
    }

    pub fn stats(&self) -> IndexStats {
        let group_sizes: Vec<usize> = self.groups.iter().map(|g| g.members.len()).collect();
        IndexStats {
            groups: self.groups.len(),
            graphs: self.manifest.dataset.graphs,
            quads: self.manifest.dataset.quads,
            filter_bytes: self.groups.iter().map(|g| g.filters.byte_len()).sum(),
            largest_group: group_sizes.iter().copied().max().unwrap_or(0),
            group_sizes,
            quads_per_group: self.groups.iter().map(|g| g.quad_count).collect(),
        }
    }

    /// Writes the index directory. Output is a pure function of the index
    /// contents, so equal builds give byte-identical directories.
    pub fn save(&self, dir: &Path) -> Result<(), IndexError> {
        let groups_dir = dir.join("groups");
        fs::create_dir_all(&groups_dir).map_err(io_err(&groups_dir))?;
        let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();

        let mut toc = String::new();
        for g in &self.groups {
            let members: Vec<String> = g.members.iter().map(usize::to_string).collect();
            let _ = writeln!(
                toc,
                "{}\t{}\t{}",
                g.group_id,
                g.quad_count,
                members.join(",")
            );
            files.insert(filters_name(g.group_id), g.filters.to_bytes());
            let partition = match self.group_graphs(g.group_id)? {
                GroupGraphs::Borrowed(store, members) => {
                    let mut lines: Vec<String> = members
                        .iter()
                        .flat_map(|&m| store.quads_of(m))
                        .map(|q| q.to_nquads_line())
                        .collect();
                    lines.sort_unstable();
                    lines.concat().into_bytes()
                }
                GroupGraphs::Owned(_) => {
                    let path = self
                        .partition_dir()
                        .unwrap()
                        .join(partition_name(g.group_id));
                    fs::read(&path).map_err(io_err(&path))?
                }
            };
            files.insert(partition_name(g.group_id), partition);
        }
        files.insert("groups.toc".into(), toc.into_bytes());
        if let Some(pvs) = &self.pvs {
            let pv_dir = dir.join("pvs");
            fs::create_dir_all(&pv_dir).map_err(io_err(&pv_dir))?;
            for (g, pv) in pvs.iter().enumerate() {
                files.insert(format!("pvs/{g}.pv"), pv.dump().into_bytes());
            }
        }

        let mut manifest = self.manifest.clone();
        manifest.checksums = files.iter().map(|(k, v)| (k.clone(), crc_hex(v))).collect();
        for (name, bytes) in &files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(io_err(&path))?;
        }
        let path = dir.join("manifest.json");
        let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        json.push('\n');
        fs::write(&path, json).map_err(io_err(&path))?;
        Ok(())
    }

    fn partition_dir(&self) -> Option<&Path> {
        match &self.partitions {
            Partitions::Disk(d) => Some(d),
            Partitions::Memory(_) => None,
        }
    }

    /// Opens an index directory, validating format version, fingerprint
    /// polynomial, checksums and filter headers.
    pub fn load(dir: &Path) -> Result<PvIndex, IndexError> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| corrupt(format!("manifest.json: {e}")))?;
        if manifest.format_version != INDEX_FORMAT_VERSION {
            return Err(IndexError::VersionMismatch {
                detail: format!(
                    "index format {} (expected {INDEX_FORMAT_VERSION})",
                    manifest.format_version
                ),
            });
        }
        if manifest.rabin.polynomial != POLYNOMIAL || manifest.rabin.width != 64 {
            return Err(IndexError::VersionMismatch {
                detail: format!(
                    "fingerprint polynomial {:#x} is not supported",
                    manifest.rabin.polynomial
                ),
            });
        }
        LshParams::new(manifest.lsh).map_err(|e| corrupt(e.to_string()))?;

        let read_checked = |name: &str| -> Result<Vec<u8>, IndexError> {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            match manifest.checksums.get(name) {
                Some(sum) if *sum == crc_hex(&bytes) => Ok(bytes),
                Some(_) => Err(corrupt(format!("checksum mismatch in {name}"))),
                None => Err(corrupt(format!("{name} missing from manifest"))),
            }
        };

        let toc = String::from_utf8(read_checked("groups.toc")?)
            .map_err(|_| corrupt("groups.toc is not UTF-8"))?;
        let mut groups = Vec::new();
        for (i, line) in toc.lines().enumerate() {
            let mut parts = line.split('\t');
            let (Some(id), Some(quads), Some(members), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(corrupt(format!("groups.toc line {}", i + 1)));
            };
            let bad = || corrupt(format!("groups.toc line {}", i + 1));
            let group_id: usize = id.parse().map_err(|_| bad())?;
            if group_id != i {
                return Err(bad());
            }
            let quad_count: usize = quads.parse().map_err(|_| bad())?;
            let members = members
                .split(',')
                .map(|m| m.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad())?;
            let filters = GroupFilters::from_bytes(&read_checked(&filters_name(group_id))?)
                .map_err(|e| corrupt(format!("{}: {e}", filters_name(group_id))))?;
            if filters.params().any(|p| {
                p.epsilon.to_bits() != manifest.epsilon.to_bits()
                    || p.seeds != manifest.filter_seeds
            }) {
                return Err(corrupt(format!(
                    "{} disagrees with manifest",
                    filters_name(group_id)
                )));
            }
            read_checked(&partition_name(group_id))?;
            groups.push(GroupRecord {
                group_id,
                members,
                quad_count,
                filters,
            });
        }
        if groups.len() != manifest.group_count {
            return Err(corrupt(format!(
                "{} groups listed, manifest says {}",
                groups.len(),
                manifest.group_count
            )));
        }
        let mut seen = vec![false; manifest.dataset.graphs];
        for g in groups.iter().flat_map(|g| &g.members) {
            match seen.get_mut(*g) {
                Some(s) if !*s => *s = true,
                _ => return Err(corrupt(format!("graph {g} listed twice or out of range"))),
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(corrupt("some graphs belong to no group"));
        }
        let pvs = if manifest.checksums.contains_key("pvs/0.pv") {
            let mut pvs = Vec::with_capacity(manifest.dataset.graphs);
            for g in 0..manifest.dataset.graphs {
                let name = format!("pvs/{g}.pv");
                let text = String::from_utf8(read_checked(&name)?)
                    .map_err(|_| corrupt(format!("{name} is not UTF-8")))?;
                pvs.push(
                    PatternVector::parse_dump(&text)
                        .ok_or_else(|| corrupt(format!("{name} is malformed")))?,
                );
            }
            Some(pvs)
        } else {
            None
        };
        Ok(PvIndex {
            manifest,
            groups,
            partitions: Partitions::Disk(dir.to_path_buf()),
            pvs,
        })
    }
}

fn filters_name(group_id: usize) -> String {
    format!("groups/{group_id}.filters")
}

fn partition_name(group_id: usize) -> String {
    format!("groups/{group_id}.nq")
}

//! Bloom and Counting Bloom filters sized from a capacity and a target
//! false-positive rate, with the containment tests used during filtering.
//!
//! Cell positions use double hashing over the 64-bit fingerprint:
//! `h_i(x) = h1(x) + i * h2(x) mod m`, where `h1`/`h2` are the fingerprint
//! mixed with the two filter seeds.

use thiserror::Error;

const MAGIC: &[u8; 4] = b"RIQF";
pub const FILTER_FORMAT_VERSION: u32 = 1;

const TAG_BLOOM: u8 = 0;
const TAG_COUNTING: u8 = 1;
const TAG_EMPTY: u8 = 2;

/// Fixed header size: magic, version, tag, capacity, epsilon, m, k, two seeds.
const HEADER_LEN: usize = 4 + 4 + 1 + 8 + 8 + 8 + 4 + 8 + 8;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("filter parameters differ")]
    ParamMismatch,
    #[error("false-positive rate {0} outside (0, 1)")]
    InvalidEpsilon(f64),
    #[error("corrupt filter block: {0}")]
    Corrupt(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterParams {
    pub capacity: u64,
    pub epsilon: f64,
    pub m_cells: u64,
    pub k_hashes: u32,
    pub seeds: [u64; 2],
}

impl FilterParams {
    pub fn new(capacity: u64, epsilon: f64, seeds: [u64; 2]) -> Result<Self, FilterError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(FilterError::InvalidEpsilon(epsilon));
        }
        if capacity == 0 {
            return Ok(FilterParams {
                capacity,
                epsilon,
                m_cells: 0,
                k_hashes: 0,
                seeds,
            });
        }
        let ln2 = std::f64::consts::LN_2;
        let n = capacity as f64;
        let m = ((-n * epsilon.ln()) / (ln2 * ln2)).ceil().max(8.0) as u64;
        let k = ((m as f64 / n) * ln2).round().max(1.0) as u32;
        Ok(FilterParams {
            capacity,
            epsilon,
            m_cells: m,
            k_hashes: k,
            seeds,
        })
    }

    /// Zero-capacity filters hold no cells.
    pub fn is_empty_filter(&self) -> bool {
        self.m_cells == 0
    }

    /// Cell indices probed for `item`; may repeat a cell.
    pub fn cells(&self, item: u64) -> impl Iterator<Item = usize> {
        let m = self.m_cells;
        let h1 = mix64(item ^ self.seeds[0]);
        let h2 = mix64(item ^ self.seeds[1]) | 1;
        (0..self.k_hashes as u64).map(move |i| (h1.wrapping_add(i.wrapping_mul(h2)) % m) as usize)
    }

    fn same_as(&self, other: &FilterParams) -> bool {
        self.capacity == other.capacity
            && self.epsilon.to_bits() == other.epsilon.to_bits()
            && self.m_cells == other.m_cells
            && self.k_hashes == other.k_hashes
            && self.seeds == other.seeds
    }

    fn write_header(&self, tag: u8, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FILTER_FORMAT_VERSION.to_le_bytes());
        out.push(tag);
        out.extend_from_slice(&self.capacity.to_le_bytes());
        out.extend_from_slice(&self.epsilon.to_le_bytes());
        out.extend_from_slice(&self.m_cells.to_le_bytes());
        out.extend_from_slice(&self.k_hashes.to_le_bytes());
        out.extend_from_slice(&self.seeds[0].to_le_bytes());
        out.extend_from_slice(&self.seeds[1].to_le_bytes());
    }

    fn read_header(input: &mut &[u8]) -> Result<(u8, FilterParams), FilterError> {
        let mut r = Reader(input);
        if r.take(4)? != MAGIC {
            return Err(FilterError::Corrupt("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FILTER_FORMAT_VERSION {
            return Err(FilterError::Corrupt(format!(
                "unsupported version {version}"
            )));
        }
        let tag = r.take(1)?[0];
        let params = FilterParams {
            capacity: r.u64()?,
            epsilon: f64::from_bits(r.u64()?),
            m_cells: r.u64()?,
            k_hashes: r.u32()?,
            seeds: [r.u64()?, r.u64()?],
        };
        let consistent = if params.capacity == 0 {
            tag == TAG_EMPTY && params.m_cells == 0
        } else {
            tag != TAG_EMPTY && params.m_cells > 0 && params.k_hashes > 0
        };
        if !consistent || !(params.epsilon > 0.0 && params.epsilon < 1.0) {
            return Err(FilterError::Corrupt("inconsistent header".into()));
        }
        Ok((tag, params))
    }
}

/// splitmix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Reader<'a, 'b>(&'a mut &'b [u8]);

impl<'b> Reader<'_, 'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8], FilterError> {
        if self.0.len() < n {
            return Err(FilterError::Corrupt("truncated".into()));
        }
        let (head, tail) = self.0.split_at(n);
        *self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, FilterError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FilterError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BloomFilter {
    params: FilterParams,
    bits: Vec<u64>,
    /// Set when an item is inserted into a zero-cell filter.
    overflowed: bool,
}

impl BloomFilter {
    pub fn new(params: FilterParams) -> Self {
        BloomFilter {
            params,
            bits: vec![0; params.m_cells.div_ceil(64) as usize],
            overflowed: false,
        }
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn insert(&mut self, item: u64) {
        if self.params.is_empty_filter() {
            self.overflowed = true;
            return;
        }
        for c in self.params.cells(item) {
            self.bits[c / 64] |= 1 << (c % 64);
        }
    }

    pub fn query(&self, item: u64) -> bool {
        if self.params.is_empty_filter() {
            return false;
        }
        self.params
            .cells(item)
            .all(|c| self.bits[c / 64] >> (c % 64) & 1 == 1)
    }

    pub fn is_empty(&self) -> bool {
        !self.overflowed && self.bits.iter().all(|&w| w == 0)
    }

    pub fn ones(&self) -> u64 {
        self.bits.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// True iff every bit set in `query` is set here.
    pub fn contains_all(&self, query: &BloomFilter) -> Result<bool, FilterError> {
        if !self.params.same_as(&query.params) {
            return Err(FilterError::ParamMismatch);
        }
        if query.overflowed {
            return Ok(false);
        }
        Ok(self.bits.iter().zip(&query.bits).all(|(c, q)| q & !c == 0))
    }

    /// Same result as building a query filter with these params from `items`
    /// and calling [`contains_all`](Self::contains_all), without allocating it.
    /// `cells_checked` is incremented once per probed cell.
    pub fn contains_items(
        &self,
        items: impl IntoIterator<Item = u64>,
        cells_checked: &mut u64,
    ) -> bool {
        for item in items {
            if self.params.is_empty_filter() {
                return false;
            }
            for c in self.params.cells(item) {
                *cells_checked += 1;
                if self.bits[c / 64] >> (c % 64) & 1 == 0 {
                    return false;
                }
            }
        }
        true
    }

    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.params.m_cells.div_ceil(8) as usize
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        if self.params.is_empty_filter() {
            self.params.write_header(TAG_EMPTY, out);
            return;
        }
        self.params.write_header(TAG_BLOOM, out);
        let nbytes = self.params.m_cells.div_ceil(8) as usize;
        let bytes = self.bits.iter().flat_map(|w| w.to_le_bytes()).take(nbytes);
        out.extend(bytes);
    }

    pub fn read_from(input: &mut &[u8]) -> Result<Self, FilterError> {
        let (tag, params) = FilterParams::read_header(input)?;
        if tag == TAG_EMPTY {
            return Ok(BloomFilter::new(params));
        }
        if tag != TAG_BLOOM {
            return Err(FilterError::Corrupt(format!(
                "expected Bloom filter, found tag {tag}"
            )));
        }
        let nbytes = params.m_cells.div_ceil(8) as usize;
        let payload = Reader(input).take(nbytes)?;
        let mut f = BloomFilter::new(params);
        for (i, chunk) in payload.chunks(8).enumerate() {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            f.bits[i] = u64::from_le_bytes(word);
        }
        let tail = params.m_cells % 64;
        if tail != 0 && f.bits.last().is_some_and(|w| w >> tail != 0) {
            return Err(FilterError::Corrupt("bits set past the last cell".into()));
        }
        Ok(f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountingBloomFilter {
    params: FilterParams,
    counters: Vec<u16>,
    overflowed: bool,
}

impl CountingBloomFilter {
    pub fn new(params: FilterParams) -> Self {
        CountingBloomFilter {
            params,
            counters: vec![0; params.m_cells as usize],
            overflowed: false,
        }
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    /// Adds `mult` occurrences of `item`; counters saturate at `u16::MAX`.
    pub fn insert(&mut self, item: u64, mult: u32) {
        debug_assert!(mult >= 1);
        if self.params.is_empty_filter() {
            self.overflowed = true;
            return;
        }
        let add = mult.min(u16::MAX as u32) as u16;
        for c in self.params.cells(item) {
            self.counters[c] = self.counters[c].saturating_add(add);
        }
    }

    /// Minimum counter over the item's cells.
    pub fn count(&self, item: u64) -> u32 {
        if self.params.is_empty_filter() {
            return 0;
        }
        self.params
            .cells(item)
            .map(|c| self.counters[c] as u32)
            .min()
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        !self.overflowed && self.counters.iter().all(|&c| c == 0)
    }

    pub fn nonzero(&self) -> u64 {
        self.counters.iter().filter(|&&c| c > 0).count() as u64
    }

    /// True iff each non-zero counter of `query` is at most the counter here.
    pub fn contains_all(&self, query: &CountingBloomFilter) -> Result<bool, FilterError> {
        if !self.params.same_as(&query.params) {
            return Err(FilterError::ParamMismatch);
        }
        if query.overflowed {
            return Ok(false);
        }
        Ok(self
            .counters
            .iter()
            .zip(&query.counters)
            .all(|(&c, &q)| q == 0 || c >= q))
    }

    /// Equivalent to [`contains_all`](Self::contains_all) against a query
    /// filter built from `items` (fingerprint, multiplicity) with these params.
    pub fn contains_multiset(&self, items: &[(u64, u32)], cells_checked: &mut u64) -> bool {
        if items.is_empty() {
            return true;
        }
        if self.params.is_empty_filter() {
            return false;
        }
        let mut cells: Vec<(usize, u16)> =
            Vec::with_capacity(items.len() * self.params.k_hashes as usize);
        for &(item, mult) in items {
            let add = mult.min(u16::MAX as u32) as u16;
            cells.extend(self.params.cells(item).map(|c| (c, add)));
        }
        cells.sort_unstable_by_key(|&(c, _)| c);
        let mut i = 0;
        while i < cells.len() {
            let cell = cells[i].0;
            let mut need: u16 = 0;
            while i < cells.len() && cells[i].0 == cell {
                need = need.saturating_add(cells[i].1);
                i += 1;
            }
            *cells_checked += 1;
            if self.counters[cell] < need {
                return false;
            }
        }
        true
    }

    pub fn byte_len(&self) -> usize {
        HEADER_LEN + 2 * self.params.m_cells as usize
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        if self.params.is_empty_filter() {
            self.params.write_header(TAG_EMPTY, out);
            return;
        }
        self.params.write_header(TAG_COUNTING, out);
        out.reserve(self.counters.len() * 2);
        for c in &self.counters {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }

    pub fn read_from(input: &mut &[u8]) -> Result<Self, FilterError> {
        let (tag, params) = FilterParams::read_header(input)?;
        if tag == TAG_EMPTY {
            return Ok(CountingBloomFilter::new(params));
        }
        if tag != TAG_COUNTING {
            return Err(FilterError::Corrupt(format!(
                "expected counting filter, found tag {tag}"
            )));
        }
        let payload = Reader(input).take(params.m_cells as usize * 2)?;
        let counters = payload
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect();
        Ok(CountingBloomFilter {
            params,
            counters,
            overflowed: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    const SEEDS: [u64; 2] = [0x1234, 0xABCD];

    fn params(n: u64) -> FilterParams {
        FilterParams::new(n, 0.05, SEEDS).unwrap()
    }

    #[test]
    fn sizing_formula() {
        let p = params(1000);
        // ceil(1000 * ln 20 / ln^2 2) = 6236, k = round(6.236 * ln 2) = 4
        assert_eq!(p.m_cells, 6236);
        assert_eq!(p.k_hashes, 4);
        let tiny = params(1);
        assert_eq!(tiny.m_cells, 8);
        assert_eq!(tiny.k_hashes, 6);
        let empty = params(0);
        assert!(empty.is_empty_filter());
        assert_eq!(
            FilterParams::new(10, 1.0, SEEDS),
            Err(FilterError::InvalidEpsilon(1.0))
        );
        assert!(FilterParams::new(10, 0.0, SEEDS).is_err());
    }

    #[test]
    fn bloom_basics() {
        let mut f = BloomFilter::new(params(100));
        assert!(!f.query(42));
        f.insert(42);
        assert!(f.query(42));
        assert!(f.contains_all(&f).unwrap());
        assert!(f.contains_all(&BloomFilter::new(params(100))).unwrap());
        assert_eq!(
            f.contains_all(&BloomFilter::new(params(101))),
            Err(FilterError::ParamMismatch)
        );
    }

    #[test]
    fn empty_filter_rules() {
        let container = BloomFilter::new(params(0));
        let mut query = BloomFilter::new(params(0));
        assert!(container.contains_all(&query).unwrap());
        query.insert(7);
        assert!(!container.contains_all(&query).unwrap());
        let mut checked = 0;
        assert!(container.contains_items([], &mut checked));
        assert!(!container.contains_items([7], &mut checked));

        let c = CountingBloomFilter::new(params(0));
        assert_eq!(c.count(1), 0);
        assert!(c.contains_multiset(&[], &mut checked));
        assert!(!c.contains_multiset(&[(1, 1)], &mut checked));
    }

    fn measured_fp_rate(capacity: u64, probes: u64, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = FilterParams::new(capacity, 0.05, [rng.random(), rng.random()]).unwrap();
        let mut bf = BloomFilter::new(p);
        let mut cbf = CountingBloomFilter::new(p);
        let inserted: std::collections::HashSet<u64> =
            (0..capacity).map(|_| rng.random()).collect();
        for &x in &inserted {
            bf.insert(x);
            cbf.insert(x, 1);
        }
        let (mut fp_bf, mut fp_cbf, mut n) = (0u64, 0u64, 0u64);
        while n < probes {
            let x: u64 = rng.random();
            if inserted.contains(&x) {
                continue;
            }
            n += 1;
            fp_bf += bf.query(x) as u64;
            fp_cbf += (cbf.count(x) > 0) as u64;
        }
        (fp_bf as f64 / n as f64, fp_cbf as f64 / n as f64)
    }

    #[test]
    fn fp_rate_at_capacity() {
        let (bf, cbf) = measured_fp_rate(10_000, 100_000, 99);
        assert!(bf <= 0.075, "bloom fp {bf}");
        assert!(cbf <= 0.075, "counting fp {cbf}");
    }

    #[test]
    fn counting_basics() {
        let mut f = CountingBloomFilter::new(params(10));
        assert_eq!(f.count(3), 0);
        f.insert(3, 1);
        f.insert(3, 1);
        assert!(f.count(3) >= 2);
        let mut q = CountingBloomFilter::new(params(10));
        assert!(f.contains_all(&q).unwrap());
        q.insert(3, 2);
        assert!(f.contains_all(&q).unwrap());
        q.insert(3, 1);
        assert!(!f.contains_all(&q).unwrap());
    }

    #[test]
    fn counters_saturate() {
        let mut f = CountingBloomFilter::new(params(4));
        f.insert(1, 70_000);
        f.insert(1, 5);
        assert_eq!(f.count(1), u16::MAX as u32);
    }

    #[test]
    fn excess_multiplicity_is_usually_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let trials = 2000;
        let mut false_accepts = 0;
        for _ in 0..trials {
            let p = FilterParams::new(200, 0.05, [rng.random(), rng.random()]).unwrap();
            let mut c = CountingBloomFilter::new(p);
            let items: Vec<(u64, u32)> = (0..200)
                .map(|_| (rng.random(), rng.random_range(1..4)))
                .collect();
            for &(x, m) in &items {
                c.insert(x, m);
            }
            let (x, m) = items[rng.random_range(0..items.len())];
            let mut q = CountingBloomFilter::new(p);
            q.insert(x, m + 1);
            false_accepts += c.contains_all(&q).unwrap() as u32;
        }
        assert!((false_accepts as f64 / trials as f64) <= 0.05 * 1.5);
    }

    #[test]
    fn serialization_round_trip() {
        let mut bf = BloomFilter::new(params(37));
        let mut cbf = CountingBloomFilter::new(params(37));
        for x in 0..37u64 {
            bf.insert(x * 7919);
            cbf.insert(x * 7919, (x % 3 + 1) as u32);
        }
        let mut buf = Vec::new();
        bf.write_to(&mut buf);
        cbf.write_to(&mut buf);
        BloomFilter::new(params(0)).write_to(&mut buf);
        assert_eq!(buf.len(), bf.byte_len() + cbf.byte_len() + HEADER_LEN);
        assert_eq!(&buf[..4], b"RIQF");

        let mut input = &buf[..];
        assert_eq!(BloomFilter::read_from(&mut input).unwrap(), bf);
        assert_eq!(CountingBloomFilter::read_from(&mut input).unwrap(), cbf);
        let empty = CountingBloomFilter::read_from(&mut input).unwrap();
        assert!(empty.params().is_empty_filter());
        assert!(input.is_empty());

        let mut truncated = &buf[..bf.byte_len() - 1];
        assert!(matches!(
            BloomFilter::read_from(&mut truncated),
            Err(FilterError::Corrupt(_))
        ));
        let mut wrong = &buf[bf.byte_len()..];
        assert!(BloomFilter::read_from(&mut wrong).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(BloomFilter::read_from(&mut &bad[..]).is_err());
    }

    fn multiset() -> impl Strategy<Value = Vec<(u64, u32)>> {
        proptest::collection::hash_map(any::<u64>(), 1u32..5, 0..60)
            .prop_map(|m| m.into_iter().collect())
    }

    proptest! {
        #[test]
        fn no_false_negatives(items in multiset(), keep in proptest::collection::vec(any::<bool>(), 60), sub in proptest::collection::vec(0u32..5, 60)) {
            let p = params(items.len() as u64);
            let mut bf = BloomFilter::new(p);
            let mut cbf = CountingBloomFilter::new(p);
            let mut truth: HashMap<u64, u32> = HashMap::new();
            for &(x, m) in &items {
                bf.insert(x);
                cbf.insert(x, m);
                truth.insert(x, m);
            }
            for (&x, &m) in &truth {
                prop_assert!(bf.query(x));
                prop_assert!(cbf.count(x) >= m);
            }
            // sub-multiset queries are always contained, dense and sparse paths agree
            let subset: Vec<(u64, u32)> = items
                .iter()
                .zip(keep.iter().zip(&sub))
                .filter(|(_, (k, _))| **k)
                .map(|(&(x, m), (_, &s))| (x, s.min(m).max(1)))
                .collect();
            let mut qbf = BloomFilter::new(p);
            let mut qcbf = CountingBloomFilter::new(p);
            for &(x, m) in &subset {
                qbf.insert(x);
                qcbf.insert(x, m);
            }
            prop_assert!(bf.contains_all(&qbf).unwrap());
            prop_assert!(cbf.contains_all(&qcbf).unwrap());
            let mut n = 0;
            prop_assert!(bf.contains_items(subset.iter().map(|&(x, _)| x), &mut n));
            prop_assert!(cbf.contains_multiset(&subset, &mut n));
        }

        #[test]
        fn sparse_and_dense_containment_agree(
            container in multiset(),
            query in proptest::collection::vec((0u64..40, 1u32..4), 0..8),
        ) {
            let p = FilterParams::new(8, 0.3, SEEDS).unwrap();
            let mut c = CountingBloomFilter::new(p);
            let mut cb = BloomFilter::new(p);
            for &(x, m) in container.iter().take(30) {
                c.insert(x % 40, m);
                cb.insert(x % 40);
            }
            let merged: Vec<(u64, u32)> = crate::pattern::FingerprintBag::from_counts(query.iter().copied())
                .entries()
                .to_vec();
            let mut q = CountingBloomFilter::new(p);
            let mut qb = BloomFilter::new(p);
            for &(x, m) in &merged {
                q.insert(x, m);
                qb.insert(x);
            }
            let mut n = 0;
            prop_assert_eq!(c.contains_all(&q).unwrap(), c.contains_multiset(&merged, &mut n));
            prop_assert_eq!(cb.contains_all(&qb).unwrap(), cb.contains_items(merged.iter().map(|&(x, _)| x), &mut n));
        }
    }
}

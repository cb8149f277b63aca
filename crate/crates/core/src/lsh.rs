//! Min-hash locality-sensitive hashing with banding.
//!
//! `k * l` linear row functions `h(x) = (a x + b) mod u` are drawn from a
//! master seed. A set's row value is the minimum of `h` over its distinct
//! items; each band of `l` row values is fingerprinted into `[0, m)`. Two sets
//! with Jaccard similarity `p` share at least one band value with
//! probability `1 - (1 - p^l)^k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::Fingerprinter;

pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Error, PartialEq)]
pub enum LshError {
    #[error("band count and rows per band must both be at least 1 (got k={k}, l={l})")]
    ZeroBands { k: u32, l: u32 },
    #[error("row modulus {0} must be a prime above 2^40")]
    BadModulus(u64),
    #[error("signature range must be at least 1")]
    BadRange,
    #[error("signatures come from different parameters")]
    ParamMismatch,
}

/// Persisted LSH settings; row functions are regenerated from `master_seed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LshConfig {
    /// Number of bands.
    pub k: u32,
    /// Rows per band.
    pub l: u32,
    /// Band values fall in `[0, m)`.
    pub m: u64,
    /// Prime modulus of the row functions.
    pub u: u64,
    pub master_seed: u64,
}

impl Default for LshConfig {
    fn default() -> Self {
        LshConfig {
            k: 5,
            l: 3,
            m: MERSENNE_61,
            u: MERSENNE_61,
            master_seed: 0x5249_515F_4C53_4821,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LshParams {
    config: LshConfig,
    rows: Vec<(u64, u64)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LshSignature {
    /// Signature of an empty set; never collides.
    Empty,
    Bands(Vec<u64>),
}

impl LshParams {
    pub fn new(config: LshConfig) -> Result<Self, LshError> {
        if config.k == 0 || config.l == 0 {
            return Err(LshError::ZeroBands {
                k: config.k,
                l: config.l,
            });
        }
        if config.u <= 1 << 40 || !is_prime(config.u) {
            return Err(LshError::BadModulus(config.u));
        }
        if config.m == 0 {
            return Err(LshError::BadRange);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed);
        let rows = (0..config.k as usize * config.l as usize)
            .map(|_| (rng.random_range(1..config.u), rng.random_range(0..config.u)))
            .collect();
        Ok(LshParams { config, rows })
    }

    pub fn config(&self) -> &LshConfig {
        &self.config
    }

    pub fn rows(&self) -> &[(u64, u64)] {
        &self.rows
    }

    /// Min-hash values of `items` for every row function; `None` when empty.
    /// Multiplicities are irrelevant: the minimum ranges over distinct items.
    pub fn min_hashes(&self, items: impl IntoIterator<Item = u64>) -> Option<Vec<u64>> {
        let u = self.config.u as u128;
        let mut mins = vec![u64::MAX; self.rows.len()];
        let mut any = false;
        for x in items {
            any = true;
            let x = x as u128 % u;
            for (slot, &(a, b)) in mins.iter_mut().zip(&self.rows) {
                let h = ((a as u128 * x + b as u128) % u) as u64;
                if h < *slot {
                    *slot = h;
                }
            }
        }
        any.then_some(mins)
    }

    pub fn sign(&self, items: impl IntoIterator<Item = u64>) -> LshSignature {
        let Some(mins) = self.min_hashes(items) else {
            return LshSignature::Empty;
        };
        let bands = mins
            .chunks(self.config.l as usize)
            .map(|band| {
                let mut fp = Fingerprinter::new();
                for v in band {
                    fp.write(&v.to_le_bytes());
                }
                fp.finish() % self.config.m
            })
            .collect();
        LshSignature::Bands(bands)
    }
}

impl LshSignature {
    pub fn values(&self) -> &[u64] {
        match self {
            LshSignature::Empty => &[],
            LshSignature::Bands(v) => v,
        }
    }
}

/// True iff the signatures agree at some band position.
pub fn bands_collide(a: &LshSignature, b: &LshSignature) -> Result<bool, LshError> {
    match (a, b) {
        (LshSignature::Bands(x), LshSignature::Bands(y)) => {
            if x.len() != y.len() {
                return Err(LshError::ParamMismatch);
            }
            Ok(x.iter().zip(y).any(|(p, q)| p == q))
        }
        _ => Ok(false),
    }
}

/// Probability that two sets of Jaccard similarity `p` collide in at least one band.
pub fn banding_probability(p: f64, k: u32, l: u32) -> f64 {
    1.0 - (1.0 - p.powi(l as i32)).powi(k as i32)
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for p in BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

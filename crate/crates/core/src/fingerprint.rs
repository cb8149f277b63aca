//! Rabin fingerprints over GF(2) modulo a fixed irreducible polynomial of degree 64.
//!
//! The input bit string is prefixed with an implicit `1` bit and shifted by
//! `x^64` before reduction, i.e. `fp(B) = ((x^{8n} + B(x)) * x^64) mod P(x)`.
//! Bytes are consumed most-significant bit first, so the output does not
//! depend on host endianness.

use serde::{Deserialize, Serialize};

/// Low 64 coefficients of a dense irreducible `P(x)` of degree 64 (the `x^64` term is implicit).
pub const POLYNOMIAL: u64 = 0x1AA8_EB6E_3719_E197;

const TABLE: [u64; 256] = build_table(POLYNOMIAL);

const fn build_table(poly: u64) -> [u64; 256] {
    let mut table = [0u64; 256];
    let mut t = 0;
    while t < 256 {
        // t(x) * x^64 mod P, one shift at a time
        let mut v = t as u64;
        let mut i = 0;
        while i < 64 {
            let carry = v >> 63;
            v <<= 1;
            if carry == 1 {
                v ^= poly;
            }
            i += 1;
        }
        table[t] = v;
        t += 1;
    }
    table
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RabinConfig {
    pub polynomial: u64,
    pub width: u32,
}

impl Default for RabinConfig {
    fn default() -> Self {
        RabinConfig {
            polynomial: POLYNOMIAL,
            width: 64,
        }
    }
}

/// Incremental fingerprint state; [`Fingerprinter::finish`] applies the final shift.
#[derive(Clone, Copy, Debug)]
pub struct Fingerprinter {
    state: u64,
}

impl Default for Fingerprinter {
    fn default() -> Self {
        Fingerprinter { state: 1 }
    }
}

impl Fingerprinter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn write_byte(&mut self, b: u8) {
        let top = (self.state >> 56) as usize;
        self.state = ((self.state << 8) | b as u64) ^ TABLE[top];
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.write_byte(b);
        }
    }

    pub fn finish(mut self) -> u64 {
        for _ in 0..8 {
            self.write_byte(0);
        }
        self.state
    }
}

pub fn fingerprint(bytes: &[u8]) -> u64 {
    let mut f = Fingerprinter::new();
    f.write(bytes);
    f.finish()
}

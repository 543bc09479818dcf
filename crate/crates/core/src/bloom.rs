//! A plain bloom filter over 128-bit key hashes, used by the rolling
//! multiplicity pass that prefilters thresholded co-occurrence graphs.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BloomError {
    #[error("false positive rate {0} must lie strictly between 0 and 1")]
    Rate(f64),
}

#[derive(Debug, Clone)]
pub struct BloomFilter {
    bits: Vec<u64>,
    nbits: u64,
    nhashes: u32,
}

impl BloomFilter {
    /// Sizes the filter for `expected` insertions at false-positive rate `fp_rate`:
    /// `bits = -n ln p / ln² 2`, `hashes = bits/n · ln 2`.
    pub fn with_rate(expected: usize, fp_rate: f64) -> Result<Self, BloomError> {
        if !(fp_rate > 0.0 && fp_rate < 1.0) {
            return Err(BloomError::Rate(fp_rate));
        }
        let n = expected.max(1) as f64;
        let ln2 = std::f64::consts::LN_2;
        let nbits = ((-n * fp_rate.ln()) / (ln2 * ln2)).ceil().max(64.0) as u64;
        let nhashes = ((nbits as f64 / n) * ln2).round().clamp(1.0, 32.0) as u32;
        Ok(Self {
            bits: vec![0; nbits.div_ceil(64) as usize],
            nbits,
            nhashes,
        })
    }

    pub fn num_bits(&self) -> u64 {
        self.nbits
    }

    pub fn num_hashes(&self) -> u32 {
        self.nhashes
    }

    // Kirsch-Mitzenmacher double hashing over the two 64-bit halves.
    fn position(&self, hash: u128, i: u64) -> u64 {
        let h1 = hash as u64;
        let h2 = ((hash >> 64) as u64) | 1;
        h1.wrapping_add(i.wrapping_mul(h2)) % self.nbits
    }

    pub fn insert(&mut self, hash: u128) {
        for i in 0..u64::from(self.nhashes) {
            let p = self.position(hash, i);
            self.bits[(p / 64) as usize] |= 1 << (p % 64);
        }
    }

    pub fn contains(&self, hash: u128) -> bool {
        (0..u64::from(self.nhashes)).all(|i| {
            let p = self.position(hash, i);
            self.bits[(p / 64) as usize] & (1 << (p % 64)) != 0
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use xxhash_rust::xxh3::xxh3_128;

    #[test]
    fn rejects_bad_rates() {
        for r in [0.0, 1.0, -0.5, 2.0, f64::NAN] {
            assert!(BloomFilter::with_rate(10, r).is_err());
        }
    }

    #[test]
    fn no_false_negatives_and_bounded_false_positives() {
        let mut bf = BloomFilter::with_rate(10_000, 0.01).unwrap();
        for i in 0u64..10_000 {
            bf.insert(xxh3_128(&i.to_le_bytes()));
        }
        for i in 0u64..10_000 {
            assert!(bf.contains(xxh3_128(&i.to_le_bytes())));
        }
        let fp = (10_000u64..110_000)
            .filter(|i| bf.contains(xxh3_128(&i.to_le_bytes())))
            .count();
        // 1% target over 100k probes; allow generous slack
        assert!(fp < 2_000, "false positives {fp}");
    }
}

//! Bloom filter backend: one filter per source IP per day.
//!
//! Probe positions come from double hashing over two independent 64-bit
//! slices of SHA-256 of the record's canonical bytes, so membership checks
//! are reproducible from the record alone. Inserts are monotone; a member
//! is never reported absent.

use serde::{Deserialize, Serialize};

use super::AccumulatorError;
use crate::encode::{hash, put_bytes, TAG_BLOOM_PAYLOAD};
use crate::model::base64_bytes;

/// Filter sizing derived from expected capacity and target false-positive
/// probability:
///
/// ```text
/// bits   m = ceil(-n * ln p / (ln 2)^2)
/// probes k = max(1, round((m / n) * ln 2))
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloomParams {
    /// Expected number of records per day.
    pub capacity: u64,
    /// Target false-positive probability in (0, 1).
    pub target_fp: f64,
    /// Bit-array size m.
    pub bits: u64,
    /// Number of probe positions k.
    pub hashes: u32,
}

/// Compute filter sizing from (capacity, target false-positive rate).
pub fn derive_bloom_params(capacity: u64, target_fp: f64) -> Result<BloomParams, AccumulatorError> {
    if capacity == 0 {
        return Err(AccumulatorError::ZeroCapacity);
    }
    if !(target_fp > 0.0 && target_fp < 1.0) {
        return Err(AccumulatorError::BadFalsePositiveRate(target_fp));
    }
    let ln2 = std::f64::consts::LN_2;
    let m = (-(capacity as f64) * target_fp.ln() / (ln2 * ln2)).ceil() as u64;
    let m = m.max(1);
    let k = ((m as f64 / capacity as f64) * ln2).round() as u32;
    let k = k.clamp(1, 64);
    Ok(BloomParams {
        capacity,
        target_fp,
        bits: m,
        hashes: k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloomFilter {
    pub params: BloomParams,
    /// Bit array, little-endian within each byte, m bits rounded up to bytes.
    #[serde(with = "base64_bytes")]
    bits: Vec<u8>,
}

impl BloomFilter {
    pub fn empty(params: BloomParams) -> Self {
        let n_bytes = params.bits.div_ceil(8) as usize;
        BloomFilter {
            params,
            bits: vec![0u8; n_bytes],
        }
    }

    /// Probe positions for a record's canonical bytes: double hashing,
    /// `pos_i = (h1 + i * h2) mod m` computed exactly in 128-bit arithmetic.
    fn positions(record_bytes: &[u8], params: &BloomParams) -> impl Iterator<Item = u64> {
        let digest = hash(record_bytes);
        let h1 = u64::from_be_bytes(digest.as_bytes()[0..8].try_into().unwrap());
        let h2 = u64::from_be_bytes(digest.as_bytes()[8..16].try_into().unwrap());
        let m = params.bits as u128;
        (0..params.hashes as u128).map(move |i| ((h1 as u128 + i * h2 as u128) % m) as u64)
    }

    pub fn insert(&mut self, record_bytes: &[u8]) {
        let positions: Vec<u64> = Self::positions(record_bytes, &self.params).collect();
        for pos in positions {
            self.bits[(pos / 8) as usize] |= 1 << (pos % 8);
        }
    }

    /// True iff every probe bit is set. No false negatives: once inserted,
    /// a record's bits stay set.
    pub fn contains(&self, record_bytes: &[u8]) -> bool {
        Self::positions(record_bytes, &self.params)
            .all(|pos| self.bits[(pos / 8) as usize] & (1 << (pos % 8)) != 0)
    }

    pub fn popcount(&self) -> u64 {
        self.bits.iter().map(|b| b.count_ones() as u64).sum()
    }

    pub fn bit_len(&self) -> u64 {
        self.params.bits
    }

    pub fn byte_len(&self) -> usize {
        self.bits.len()
    }

    pub(super) fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + 8 + 8 + 8 + 4 + 4 + self.bits.len());
        out.push(TAG_BLOOM_PAYLOAD);
        out.extend_from_slice(&self.params.capacity.to_be_bytes());
        out.extend_from_slice(&self.params.target_fp.to_bits().to_be_bytes());
        out.extend_from_slice(&self.params.bits.to_be_bytes());
        out.extend_from_slice(&self.params.hashes.to_be_bytes());
        put_bytes(&mut out, &self.bits);
        out
    }

    pub(super) fn validate(&self) -> Result<(), AccumulatorError> {
        if self.params.bits == 0 {
            return Err(AccumulatorError::ZeroCapacity);
        }
        if !(1..=64).contains(&self.params.hashes) {
            return Err(AccumulatorError::ValueOutOfRange);
        }
        if self.bits.len() as u64 != self.params.bits.div_ceil(8)
            || self.popcount() > self.params.bits
        {
            return Err(AccumulatorError::ValueOutOfRange);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn sizing_matches_formula_oracle() {
        // Frozen from direct evaluation of m = ceil(-n ln p / (ln 2)^2),
        // k = max(1, round((m/n) ln 2)).
        let p = derive_bloom_params(5000, 0.01).unwrap();
        assert_eq!((p.bits, p.hashes), (47_926, 7));

        let p = derive_bloom_params(10_000, 0.01).unwrap();
        assert_eq!((p.bits, p.hashes), (95_851, 7));

        let p = derive_bloom_params(10_000, 0.02).unwrap();
        assert_eq!((p.bits, p.hashes), (81_424, 6));

        // Minimal case straight from the same formulas.
        let p = derive_bloom_params(1, 0.5).unwrap();
        assert_eq!((p.bits, p.hashes), (2, 1));
    }

    #[test]
    fn sizing_rejects_bad_inputs() {
        assert!(derive_bloom_params(0, 0.01).is_err());
        assert!(derive_bloom_params(10, 0.0).is_err());
        assert!(derive_bloom_params(10, 1.0).is_err());
        assert!(derive_bloom_params(10, 1.5).is_err());
        assert!(derive_bloom_params(10, -0.1).is_err());
    }

    #[test]
    fn insert_sets_at_most_k_bits_and_is_idempotent() {
        let params = derive_bloom_params(100, 0.01).unwrap();
        let k = params.hashes as u64;
        let mut filter = BloomFilter::empty(params);
        filter.insert(b"record-one");
        assert!(filter.popcount() <= k);
        assert!(filter.popcount() >= 1);

        let snapshot = filter.clone();
        filter.insert(b"record-one");
        assert_eq!(filter, snapshot);
    }

    #[test]
    fn empty_filter_contains_nothing() {
        let filter = BloomFilter::empty(derive_bloom_params(100, 0.01).unwrap());
        assert!(!filter.contains(b"anything"));
    }

    #[test]
    fn no_false_negatives() {
        let mut rng = StdRng::seed_from_u64(3);
        let params = derive_bloom_params(500, 0.01).unwrap();
        let mut filter = BloomFilter::empty(params);
        let members: Vec<Vec<u8>> = (0..500)
            .map(|_| (0..32).map(|_| rng.gen()).collect())
            .collect();
        for m in &members {
            filter.insert(m);
        }
        for m in &members {
            assert!(filter.contains(m));
        }
    }

    #[test]
    fn inserts_are_monotone() {
        let params = derive_bloom_params(50, 0.05).unwrap();
        let mut filter = BloomFilter::empty(params);
        let mut prev = filter.clone();
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let item: Vec<u8> = (0..16).map(|_| rng.gen()).collect();
            filter.insert(&item);
            for (old, new) in prev.bits.iter().zip(filter.bits.iter()) {
                assert_eq!(old & new, *old, "a set bit was cleared");
            }
            prev = filter.clone();
        }
    }

    #[test]
    fn measured_fp_rate_tracks_target() {
        let mut rng = StdRng::seed_from_u64(17);
        let params = derive_bloom_params(1000, 0.01).unwrap();
        let mut filter = BloomFilter::empty(params);
        for _ in 0..1000 {
            let item: Vec<u8> = (0..24).map(|_| rng.gen()).collect();
            filter.insert(&item);
        }
        let probes = 20_000;
        let false_positives = (0..probes)
            .filter(|_| {
                let probe: Vec<u8> = (0..23).map(|_| rng.gen()).collect();
                filter.contains(&probe)
            })
            .count();
        let rate = false_positives as f64 / probes as f64;
        assert!(rate <= 0.02, "false-positive rate {rate} exceeds 2x target");
    }
}

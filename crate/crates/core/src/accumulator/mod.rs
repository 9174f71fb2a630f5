//! Per-(IP, day) membership accumulators.
//!
//! Two interchangeable backends stand behind one payload type: a Bloom
//! filter (fast, small, bounded false-positive rate, zero false negatives)
//! and a modular-exponentiation one-way accumulator (zero false positives,
//! per-record witnesses). One accumulator instance exists per source IP per
//! UTC day; the sealed payload is what the daily proof signs.

mod bloom;
mod rsa;

pub use bloom::{derive_bloom_params, BloomFilter, BloomParams};
pub use rsa::{record_exponent, root_factor, witnesses_for_exponents, RsaAccumulator, RsaParams};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encode::CanonicalEncode;
use crate::model::{ChainId, ChainedRecord, MembershipWitness};

#[derive(Debug, Error, PartialEq)]
pub enum AccumulatorError {
    #[error("bloom capacity must be >= 1")]
    ZeroCapacity,
    #[error("bloom target false-positive rate must lie in (0, 1), got {0}")]
    BadFalsePositiveRate(f64),
    #[error("accumulator value out of range")]
    ValueOutOfRange,
    #[error("unknown backend {0:?} (expected \"bloom\" or \"rsa\")")]
    UnknownBackend(String),
}

/// Which accumulator construction a store runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Bloom,
    Rsa,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Bloom => f.write_str("bloom"),
            Backend::Rsa => f.write_str("rsa"),
        }
    }
}

impl FromStr for Backend {
    type Err = AccumulatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bloom" => Ok(Backend::Bloom),
            "rsa" => Ok(Backend::Rsa),
            other => Err(AccumulatorError::UnknownBackend(other.to_string())),
        }
    }
}

/// Backend-specific accumulator payload; the unit that is folded per record,
/// persisted in the proof store, and canonically encoded for sealing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum AccumulatorPayload {
    Bloom(BloomFilter),
    Rsa(RsaAccumulator),
}

impl AccumulatorPayload {
    pub fn backend(&self) -> Backend {
        match self {
            AccumulatorPayload::Bloom(_) => Backend::Bloom,
            AccumulatorPayload::Rsa(_) => Backend::Rsa,
        }
    }

    /// Fold one persisted record into the membership digest.
    pub fn fold_record(&mut self, record: &ChainedRecord) {
        let bytes = record.encode();
        match self {
            AccumulatorPayload::Bloom(filter) => filter.insert(&bytes),
            AccumulatorPayload::Rsa(acc) => acc.fold(&bytes),
        }
    }

    /// Canonical bytes of the payload; this is exactly what the daily proof
    /// hashes and signs.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        match self {
            AccumulatorPayload::Bloom(filter) => filter.canonical_bytes(),
            AccumulatorPayload::Rsa(acc) => acc.canonical_bytes(),
        }
    }

    /// Structural invariants checked after deserialization from disk.
    pub fn validate(&self) -> Result<(), AccumulatorError> {
        match self {
            AccumulatorPayload::Bloom(filter) => filter.validate(),
            AccumulatorPayload::Rsa(acc) => acc.validate(),
        }
    }
}

/// Sizing/key configuration from which fresh empty payloads are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum AccumulatorConfig {
    Bloom { params: BloomParams },
    Rsa { params: RsaParams },
}

impl AccumulatorConfig {
    pub fn backend(&self) -> Backend {
        match self {
            AccumulatorConfig::Bloom { .. } => Backend::Bloom,
            AccumulatorConfig::Rsa { .. } => Backend::Rsa,
        }
    }

    /// Empty accumulator for a fresh (ip, day): an all-zero bit array, or
    /// the accumulator seed before any fold.
    pub fn empty_payload(&self) -> AccumulatorPayload {
        match self {
            AccumulatorConfig::Bloom { params } => {
                AccumulatorPayload::Bloom(BloomFilter::empty(params.clone()))
            }
            AccumulatorConfig::Rsa { params } => {
                AccumulatorPayload::Rsa(RsaAccumulator::empty(params.clone()))
            }
        }
    }
}

/// One accumulator instance: the (ip, day) it covers plus its payload.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatorState {
    pub chain: ChainId,
    pub payload: AccumulatorPayload,
}

/// Witnesses for a completed day, one per record in chain order. Bloom days
/// need none; the filter itself answers membership.
pub fn day_witnesses(
    payload: &AccumulatorPayload,
    records: &[ChainedRecord],
) -> Option<Vec<MembershipWitness>> {
    match payload {
        AccumulatorPayload::Bloom(_) => None,
        AccumulatorPayload::Rsa(acc) => Some(acc.witnesses(records)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::hash;
    use crate::model::EncryptedLogEntry;
    use chrono::DateTime;

    fn record(tag: u8) -> ChainedRecord {
        ChainedRecord {
            ele: EncryptedLogEntry {
                ciphertext: vec![tag; 24],
                from_ip: "11.1.0.3".parse().unwrap(),
                timestamp: DateTime::from_timestamp_micros(tag as i64 * 1000).unwrap(),
            },
            chain: hash(&[tag]),
        }
    }

    #[test]
    fn backend_parses_and_prints() {
        assert_eq!("bloom".parse::<Backend>().unwrap(), Backend::Bloom);
        assert_eq!("RSA".parse::<Backend>().unwrap(), Backend::Rsa);
        assert!("merkle".parse::<Backend>().is_err());
        assert_eq!(Backend::Bloom.to_string(), "bloom");
    }

    #[test]
    fn payload_json_round_trip() {
        let params = derive_bloom_params(100, 0.01).unwrap();
        let mut payload = AccumulatorPayload::Bloom(BloomFilter::empty(params));
        payload.fold_record(&record(1));
        payload.fold_record(&record(2));

        let json = serde_json::to_string(&payload).unwrap();
        let back: AccumulatorPayload = serde_json::from_str(&json).unwrap();
        assert_eq!(back, payload);
        assert_eq!(back.canonical_bytes(), payload.canonical_bytes());
    }

    #[test]
    fn canonical_bytes_distinguish_backends() {
        let bloom = AccumulatorConfig::Bloom {
            params: derive_bloom_params(10, 0.5).unwrap(),
        };
        let rsa = AccumulatorConfig::Rsa {
            params: RsaParams::toy(),
        };
        assert_ne!(
            bloom.empty_payload().canonical_bytes(),
            rsa.empty_payload().canonical_bytes()
        );
    }
}

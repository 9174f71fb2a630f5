//! Domain types shared by every subsystem.
//!
//! A parsed network event ([`LogEntry`]) is partially encrypted into an
//! [`EncryptedLogEntry`], linked into a per-(IP, day) hash chain as a
//! [`ChainedRecord`], folded into that day's accumulator, and finally sealed
//! under a signed [`ProofOfPastLog`].

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use num_bigint_dig::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Length of every digest produced by the engine.
pub const DIGEST_LEN: usize = 32;

/// A 32-byte SHA-256 digest, rendered as lowercase hex at every interface.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, ModelError> {
        let bytes = hex::decode(s).map_err(|_| ModelError::BadDigest)?;
        let arr: [u8; DIGEST_LEN] = bytes.try_into().map_err(|_| ModelError::BadDigest)?;
        Ok(Digest(arr))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// One parsed network event: who talked to whom, when, on which port, and
/// on behalf of which cloud user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    /// Fixed (private) IP of the VM that generated the traffic; stays plaintext.
    pub from_ip: Ipv4Addr,
    /// Destination IP; confidential.
    pub to_ip: Ipv4Addr,
    /// Event time, UTC, microsecond precision.
    pub timestamp: DateTime<Utc>,
    /// Destination port; confidential.
    pub port: u16,
    /// Cloud user that owned the source VM at `timestamp`; confidential.
    pub user_id: String,
}

impl LogEntry {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.user_id.is_empty() {
            return Err(ModelError::EmptyUserId);
        }
        Ok(())
    }

    /// UTC calendar day this entry belongs to. Day boundaries are UTC midnight.
    pub fn day(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

/// A log entry with the confidential triple (to_ip, port, user_id) sealed
/// into a hybrid-encrypted ciphertext. Source IP and timestamp stay in the
/// clear so stores remain searchable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedLogEntry {
    pub ciphertext: Vec<u8>,
    pub from_ip: Ipv4Addr,
    pub timestamp: DateTime<Utc>,
}

/// The unit of persistent storage: an encrypted entry plus the hash-chain
/// digest that pins its position in the day's sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainedRecord {
    pub ele: EncryptedLogEntry,
    pub chain: Digest,
}

/// Identifies one hash chain / accumulator instance: a source IP on a UTC day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChainId {
    pub ip: Ipv4Addr,
    pub day: NaiveDate,
}

impl ChainId {
    pub fn new(ip: Ipv4Addr, day: NaiveDate) -> Self {
        ChainId { ip, day }
    }

    pub fn for_entry(entry: &LogEntry) -> Self {
        ChainId {
            ip: entry.from_ip,
            day: entry.day(),
        }
    }
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.ip, self.day)
    }
}

/// The published daily seal: digest of and signature over the day's final
/// accumulator payload, plus publication time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofOfPastLog {
    pub ip: Ipv4Addr,
    pub day: NaiveDate,
    /// SHA-256 over the canonical encoding of the final accumulator payload.
    pub ae_digest: Digest,
    /// Provider signature over that same encoding.
    #[serde(with = "crate::model::base64_bytes")]
    pub signature: Vec<u8>,
    pub published_at: DateTime<Utc>,
}

/// Per-record witness for the modular-exponentiation accumulator: the
/// accumulator folded over every record except this one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipWitness {
    pub record_index: u64,
    #[serde(with = "biguint_b64")]
    pub value: BigUint,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("user_id must be non-empty")]
    EmptyUserId,
    #[error("digest must be 32 bytes of hex")]
    BadDigest,
    #[error("invalid IPv4 address")]
    BadIp,
    #[error("invalid timestamp")]
    BadTimestamp,
}

pub fn parse_ipv4(s: &str) -> Result<Ipv4Addr, ModelError> {
    Ipv4Addr::from_str(s).map_err(|_| ModelError::BadIp)
}

/// serde adapter: big integers travel as base64 of their big-endian bytes.
pub mod biguint_b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use num_bigint_dig::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &BigUint, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&STANDARD.encode(value.to_bytes_be()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(deserializer)?;
        let bytes = STANDARD
            .decode(s.as_bytes())
            .map_err(serde::de::Error::custom)?;
        Ok(BigUint::from_bytes_be(&bytes))
    }
}

/// serde adapter: binary fields travel as standard base64 in JSON documents.
pub mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(deserializer)?;
        STANDARD
            .decode(s.as_bytes())
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_hex_round_trip() {
        let d = Digest([0xab; 32]);
        let hex = d.to_hex();
        assert_eq!(hex.len(), 64);
        assert_eq!(Digest::from_hex(&hex).unwrap(), d);
    }

    #[test]
    fn digest_rejects_short_hex() {
        assert!(Digest::from_hex("abcd").is_err());
        assert!(Digest::from_hex("zz").is_err());
    }

    #[test]
    fn empty_user_id_rejected() {
        let entry = LogEntry {
            from_ip: "11.1.0.5".parse().unwrap(),
            to_ip: "74.125.130.106".parse().unwrap(),
            timestamp: Utc::now(),
            port: 80,
            user_id: String::new(),
        };
        assert!(entry.validate().is_err());
    }
}

//! Tamper-evident secure logging engine.
//!
//! Network-log records are parsed, field-encrypted, linked into per-(IP,
//! day) hash chains, folded into a daily cryptographic accumulator, and
//! sealed under a signed, published Proof of Past Log. Auditors verify
//! proof validity, per-record membership, and generation order, catching
//! removal, reordering, chain rewriting, planted records, and substituted
//! proofs even when producer, user, and investigator collude.

pub mod accumulator;
pub mod adversary;
pub mod bench;
pub mod crypto;
pub mod encode;
pub mod fixture;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod storage;
pub mod verifier;

pub use accumulator::{AccumulatorConfig, AccumulatorPayload, Backend};
pub use encode::{hash, CanonicalEncode};
pub use model::{ChainId, ChainedRecord, Digest, EncryptedLogEntry, LogEntry, ProofOfPastLog};

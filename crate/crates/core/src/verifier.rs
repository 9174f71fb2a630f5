//! Auditor-side verification.
//!
//! An audit of one (ip, day) runs four gates over a presented set of
//! records and its accumulator payload:
//!
//! 1. **Proof validity**: the published proof's signature verifies under
//!    the provider key against the presented payload, and the payload
//!    hashes to the published digest.
//! 2. **Membership**: every presented record is in the sealed accumulator
//!    (Bloom probe, or witness exponentiation for the one-way backend).
//! 3. **Sequence**: the chain recurrence holds from the (ip, day) genesis
//!    link through every presented record, fixing generation order.
//! 4. **Completeness**: refolding the presented records from an empty
//!    accumulator reproduces the sealed payload, so records cannot be
//!    silently dropped from the tail of a day, which neither membership nor
//!    the chain recurrence alone would notice.
//!
//! Everything here is read-only and runs on ciphertext records; audits
//! never need (or touch) the agency decryption key.

use std::net::Ipv4Addr;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use chrono::NaiveDate;
use rsa::RsaPublicKey;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accumulator::{AccumulatorPayload, Backend, BloomFilter, RsaAccumulator};
use crate::crypto;
use crate::encode::{chain_next, decode_chained_record, genesis, hash, CanonicalEncode};
use crate::model::{ChainId, ChainedRecord, MembershipWitness, ProofOfPastLog};
use crate::storage::{StorageError, Stores};

/// Why a verification step rejected. Closed set, so harnesses can assert
/// the diagnosis and not just the rejection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "kebab-case")]
pub enum RejectReason {
    /// The feed carries no proof for this (ip, day).
    UnpublishedDay,
    /// The published signature does not verify over the presented payload.
    BadSignature,
    /// The presented payload does not hash to the published digest.
    DigestMismatch,
    /// The chain recurrence breaks at this presented index.
    SequenceViolation { index: usize },
    /// A presented record is not a member of the sealed accumulator.
    NotMember { index: usize },
    /// The one-way backend has no witness for this presented index.
    WitnessAbsent { index: usize },
    /// Refolding the presented records does not reproduce the sealed
    /// accumulator payload.
    AccumulatorMismatch,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::UnpublishedDay => write!(f, "unpublished-day"),
            RejectReason::BadSignature => write!(f, "bad-signature"),
            RejectReason::DigestMismatch => write!(f, "digest-mismatch"),
            RejectReason::SequenceViolation { index } => write!(f, "sequence-violation@{index}"),
            RejectReason::NotMember { index } => write!(f, "not-member@{index}"),
            RejectReason::WitnessAbsent { index } => write!(f, "witness-absent@{index}"),
            RejectReason::AccumulatorMismatch => write!(f, "accumulator-mismatch"),
        }
    }
}

/// What an investigator hands the auditor for one day: the claimed final
/// accumulator payload, the records in claimed generation order, and (for
/// the one-way backend) their witnesses.
#[derive(Debug, Clone, PartialEq)]
pub struct DayPresentation {
    pub chain: ChainId,
    pub payload: AccumulatorPayload,
    pub records: Vec<ChainedRecord>,
    pub witnesses: Option<Vec<MembershipWitness>>,
}

/// Verdict of one audit gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepVerdict {
    pub passed: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub reasons: Vec<RejectReason>,
}

impl StepVerdict {
    fn pass() -> Self {
        StepVerdict {
            passed: true,
            reasons: Vec::new(),
        }
    }

    fn fail(reasons: Vec<RejectReason>) -> Self {
        StepVerdict {
            passed: false,
            reasons,
        }
    }
}

/// Full audit outcome for one (ip, day).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub ip: Ipv4Addr,
    pub day: NaiveDate,
    pub backend: Backend,
    pub records_presented: usize,
    pub proof: StepVerdict,
    pub membership: StepVerdict,
    pub sequence: StepVerdict,
    pub completeness: StepVerdict,
    pub accepted: bool,
}

impl AuditReport {
    pub fn reasons(&self) -> Vec<RejectReason> {
        let mut out = Vec::new();
        for step in [
            &self.proof,
            &self.membership,
            &self.sequence,
            &self.completeness,
        ] {
            out.extend(step.reasons.iter().cloned());
        }
        out
    }

    fn rejected(chain: ChainId, backend: Backend, records: usize, reason: RejectReason) -> Self {
        AuditReport {
            ip: chain.ip,
            day: chain.day,
            backend,
            records_presented: records,
            proof: StepVerdict::fail(vec![reason]),
            membership: StepVerdict::fail(vec![]),
            sequence: StepVerdict::fail(vec![]),
            completeness: StepVerdict::fail(vec![]),
            accepted: false,
        }
    }
}

/// Check a published proof against a claimed payload encoding. Digest
/// equality is diagnosed first: a payload that doesn't hash to the
/// published digest is a digest mismatch even though its signature check
/// would fail too; bad-signature then singles out proofs whose digest is
/// self-consistent but signed under the wrong key.
pub fn verify_ppl(
    ppl: &ProofOfPastLog,
    payload_bytes: &[u8],
    provider_key: &RsaPublicKey,
) -> Result<(), RejectReason> {
    if hash(payload_bytes) != ppl.ae_digest {
        return Err(RejectReason::DigestMismatch);
    }
    if !crypto::verify_signature(payload_bytes, &ppl.signature, provider_key) {
        return Err(RejectReason::BadSignature);
    }
    Ok(())
}

/// Membership of one presented record (at `index` in presentation order)
/// in the sealed accumulator.
pub fn verify_membership(
    record: &ChainedRecord,
    index: usize,
    payload: &AccumulatorPayload,
    witnesses: Option<&[MembershipWitness]>,
) -> Result<(), RejectReason> {
    let bytes = record.encode();
    match payload {
        AccumulatorPayload::Bloom(filter) => {
            if filter.contains(&bytes) {
                Ok(())
            } else {
                Err(RejectReason::NotMember { index })
            }
        }
        AccumulatorPayload::Rsa(acc) => {
            let witness = witnesses
                .and_then(|ws| ws.iter().find(|w| w.record_index == index as u64))
                .ok_or(RejectReason::WitnessAbsent { index })?;
            if RsaAccumulator::verify_membership(&bytes, &witness.value, &acc.value, &acc.params) {
                Ok(())
            } else {
                Err(RejectReason::NotMember { index })
            }
        }
    }
}

/// Replay the chain recurrence over records in claimed order, starting at
/// the (ip, day) genesis link. Returns the first index where it breaks.
pub fn verify_sequence(records: &[ChainedRecord], chain: ChainId) -> Result<(), usize> {
    let mut prev = genesis(chain);
    for (i, record) in records.iter().enumerate() {
        if record.chain != chain_next(&record.ele, &prev) {
            return Err(i);
        }
        prev = record.chain;
    }
    Ok(())
}

/// Refold the presented records into a fresh accumulator built from the
/// presented payload's own parameters.
pub fn recompute_payload(
    payload: &AccumulatorPayload,
    records: &[ChainedRecord],
) -> AccumulatorPayload {
    let mut fresh = match payload {
        AccumulatorPayload::Bloom(filter) => {
            AccumulatorPayload::Bloom(BloomFilter::empty(filter.params.clone()))
        }
        AccumulatorPayload::Rsa(acc) => {
            AccumulatorPayload::Rsa(RsaAccumulator::empty(acc.params.clone()))
        }
    };
    for record in records {
        fresh.fold_record(record);
    }
    fresh
}

/// Run all four gates for one day. `feed` is the published proof feed and
/// `provider_key` the out-of-band trusted provider verifying key.
pub fn audit_day(
    presentation: &DayPresentation,
    feed: &[ProofOfPastLog],
    provider_key: &RsaPublicKey,
) -> AuditReport {
    let chain = presentation.chain;
    let backend = presentation.payload.backend();
    let n = presentation.records.len();

    let Some(ppl) = feed.iter().find(|p| p.ip == chain.ip && p.day == chain.day) else {
        return AuditReport::rejected(chain, backend, n, RejectReason::UnpublishedDay);
    };

    let payload_bytes = presentation.payload.canonical_bytes();
    let proof = match verify_ppl(ppl, &payload_bytes, provider_key) {
        Ok(()) => StepVerdict::pass(),
        Err(reason) => StepVerdict::fail(vec![reason]),
    };

    let membership_failures: Vec<RejectReason> = presentation
        .records
        .iter()
        .enumerate()
        .filter_map(|(i, record)| {
            verify_membership(
                record,
                i,
                &presentation.payload,
                presentation.witnesses.as_deref(),
            )
            .err()
        })
        .collect();
    let membership = if membership_failures.is_empty() {
        StepVerdict::pass()
    } else {
        StepVerdict::fail(membership_failures)
    };

    let sequence = match verify_sequence(&presentation.records, chain) {
        Ok(()) => StepVerdict::pass(),
        Err(index) => StepVerdict::fail(vec![RejectReason::SequenceViolation { index }]),
    };

    let recomputed = recompute_payload(&presentation.payload, &presentation.records);
    let completeness = if recomputed.canonical_bytes() == payload_bytes {
        StepVerdict::pass()
    } else {
        StepVerdict::fail(vec![RejectReason::AccumulatorMismatch])
    };

    let accepted = proof.passed && membership.passed && sequence.passed && completeness.passed;
    AuditReport {
        ip: chain.ip,
        day: chain.day,
        backend,
        records_presented: n,
        proof,
        membership,
        sequence,
        completeness,
        accepted,
    }
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("day {0} is not sealed; export needs a published proof")]
    NotSealed(ChainId),
    #[error("bundle field {field}: {reason}")]
    Malformed { field: &'static str, reason: String },
}

/// The investigator bundle: everything the auditor needs for one day, as a
/// single canonical JSON document. Records are base64 of their canonical
/// bytes so verification is bit-exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportBundle {
    pub version: u32,
    pub ip: Ipv4Addr,
    pub day: NaiveDate,
    pub payload: AccumulatorPayload,
    pub records: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witnesses: Option<Vec<MembershipWitness>>,
    /// Convenience copy of the published proof; audits trust the feed, not
    /// this field.
    pub ppl: ProofOfPastLog,
}

pub const BUNDLE_VERSION: u32 = 1;

impl ExportBundle {
    /// Assemble the bundle for a sealed day from the operator's stores.
    pub fn from_stores(stores: &Stores, chain: ChainId) -> Result<Self, BundleError> {
        let proof = stores
            .load_proof(chain)?
            .filter(|p| p.sealed)
            .ok_or(BundleError::NotSealed(chain))?;
        let ppl = match proof.ppl.clone() {
            Some(p) => p,
            None => stores
                .feed_entry(chain)?
                .ok_or(BundleError::NotSealed(chain))?,
        };
        let (records, _) = stores.read_records(chain)?;
        Ok(ExportBundle {
            version: BUNDLE_VERSION,
            ip: chain.ip,
            day: chain.day,
            payload: proof.payload,
            records: records.iter().map(|r| BASE64.encode(r.encode())).collect(),
            witnesses: proof.witnesses,
            ppl,
        })
    }

    pub fn chain(&self) -> ChainId {
        ChainId::new(self.ip, self.day)
    }

    /// Decode into the verifier's presentation form.
    pub fn to_presentation(&self) -> Result<DayPresentation, BundleError> {
        let mut records = Vec::with_capacity(self.records.len());
        for (i, encoded) in self.records.iter().enumerate() {
            let bytes = BASE64
                .decode(encoded.as_bytes())
                .map_err(|e| BundleError::Malformed {
                    field: "records",
                    reason: format!("entry {i}: {e}"),
                })?;
            records.push(
                decode_chained_record(&bytes).map_err(|e| BundleError::Malformed {
                    field: "records",
                    reason: format!("entry {i}: {e}"),
                })?,
            );
        }
        Ok(DayPresentation {
            chain: self.chain(),
            payload: self.payload.clone(),
            records,
            witnesses: self.witnesses.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BundleError> {
        serde_json::from_str(text).map_err(|e| BundleError::Malformed {
            field: "bundle",
            reason: e.to_string(),
        })
    }
}

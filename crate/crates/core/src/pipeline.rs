//! Insertion pipeline: entry → encrypted entry → chain link → persisted
//! record → accumulator fold, plus end-of-day sealing.
//!
//! One writer per (ip, day) chain; the per-chain lease inside the pipeline
//! is the only mutual-exclusion point, so distinct chains append
//! concurrently. The record is made durable in the log store first and the
//! accumulator document follows; because folding is deterministic, a crash
//! between the two is repaired on the next open by refolding the records
//! the accumulator has not yet absorbed. Either both stores reflect an
//! append or, after recovery, neither does.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rsa::{RsaPrivateKey, RsaPublicKey};
use thiserror::Error;

use crate::accumulator::{day_witnesses, AccumulatorConfig, AccumulatorPayload};
use crate::crypto::{self, CryptoError};
use crate::encode::{chain_next, genesis, hash};
use crate::model::{ChainId, ChainedRecord, Digest, LogEntry, ModelError, ProofOfPastLog};
use crate::storage::{ProofEntry, RecoveryNote, StorageError, Stores};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("chain {0} is sealed; appends are rejected")]
    ChainSealed(ChainId),
    #[error("day {chain} is already sealed")]
    AlreadySealed {
        chain: ChainId,
        ppl: Box<ProofOfPastLog>,
    },
    #[error("feed already holds a proof for {0} over different accumulator content")]
    SealDigestMismatch(ChainId),
    #[error(
        "stores disagree for {chain}: {segment} records on disk, accumulator absorbed {proof}"
    )]
    InconsistentStores {
        chain: ChainId,
        segment: u64,
        proof: u64,
    },
    #[error("data root is configured for backend {existing}, requested {requested}")]
    BackendMismatch { existing: String, requested: String },
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Cached single-writer view of one chain, valid while this process holds
/// the lease and no storage error has intervened.
struct ChainState {
    prev: Digest,
    count: u64,
    payload: AccumulatorPayload,
    sealed: bool,
}

type ChainSlot = Arc<Mutex<Option<ChainState>>>;

pub struct Pipeline {
    stores: Arc<Stores>,
    agency_public: RsaPublicKey,
    provider_private: RsaPrivateKey,
    provider_pem: String,
    config: AccumulatorConfig,
    chains: Mutex<HashMap<ChainId, ChainSlot>>,
}

impl Pipeline {
    /// Open the pipeline over a data root. The accumulator configuration is
    /// pinned by the root on first use; a later `requested` value may not
    /// switch backends.
    pub fn open(
        stores: Arc<Stores>,
        agency_public: RsaPublicKey,
        provider_private: RsaPrivateKey,
        provider_public: &RsaPublicKey,
        requested: Option<AccumulatorConfig>,
    ) -> Result<Self, PipelineError> {
        let config = match (stores.load_accumulator_config()?, requested) {
            (Some(existing), Some(requested)) if existing.backend() != requested.backend() => {
                return Err(PipelineError::BackendMismatch {
                    existing: existing.backend().to_string(),
                    requested: requested.backend().to_string(),
                });
            }
            (Some(existing), _) => existing,
            (None, Some(requested)) => {
                stores.store_accumulator_config(&requested)?;
                requested
            }
            (None, None) => {
                let params = crate::accumulator::derive_bloom_params(5000, 0.01)
                    .expect("default sizing is valid");
                let config = AccumulatorConfig::Bloom { params };
                stores.store_accumulator_config(&config)?;
                config
            }
        };
        let provider_pem = crypto::public_key_pem(provider_public)?;
        Ok(Pipeline {
            stores,
            agency_public,
            provider_private,
            provider_pem,
            config,
            chains: Mutex::new(HashMap::new()),
        })
    }

    pub fn stores(&self) -> &Stores {
        &self.stores
    }

    pub fn config(&self) -> &AccumulatorConfig {
        &self.config
    }

    fn chain_slot(&self, chain: ChainId) -> ChainSlot {
        let mut map = self.chains.lock().unwrap();
        map.entry(chain)
            .or_insert_with(|| Arc::new(Mutex::new(None)))
            .clone()
    }

    /// Bring a chain's cached state in line with disk: load the segment and
    /// accumulator, refold any records a crash left out of the
    /// accumulator, and persist the repair.
    fn reconcile(&self, chain: ChainId) -> Result<ChainState, PipelineError> {
        let (records, _torn_note): (Vec<ChainedRecord>, Option<RecoveryNote>) =
            self.stores.read_records(chain)?;
        let segment_count = records.len() as u64;

        let (mut payload, mut proof_count, sealed_in_proof) = match self.stores.load_proof(chain)? {
            Some(entry) => (entry.payload, entry.record_count, entry.sealed),
            None => (self.config.empty_payload(), 0, false),
        };

        // A proof published to the feed seals the day even if a crash kept
        // the proof store from recording it.
        let sealed = sealed_in_proof || self.stores.feed_entry(chain)?.is_some();

        if proof_count > segment_count || (sealed && proof_count != segment_count) {
            // Honest crashes only ever leave the segment ahead of an
            // unsealed accumulator; anything else is tampering or damage,
            // and a sealed chain is never refolded.
            return Err(PipelineError::InconsistentStores {
                chain,
                segment: segment_count,
                proof: proof_count,
            });
        }
        if proof_count < segment_count {
            for record in &records[proof_count as usize..] {
                payload.fold_record(record);
            }
            proof_count = segment_count;
            self.stores.store_proof(&ProofEntry {
                ip: chain.ip,
                day: chain.day,
                record_count: proof_count,
                sealed: sealed_in_proof,
                payload: payload.clone(),
                witnesses: None,
                ppl: None,
            })?;
        }

        let prev = match records.last() {
            Some(last) => last.chain,
            None => genesis(chain),
        };
        Ok(ChainState {
            prev,
            count: proof_count,
            payload,
            sealed,
        })
    }

    /// Append one entry to its (from_ip, day) chain: encrypt the
    /// confidential fields, extend the hash chain, persist the record, fold
    /// it into the day's accumulator.
    pub fn append(&self, entry: &LogEntry) -> Result<ChainedRecord, PipelineError> {
        entry.validate()?;
        let chain = ChainId::for_entry(entry);
        let slot = self.chain_slot(chain);
        let mut guard = slot.lock().unwrap();

        if guard.is_none() {
            *guard = Some(self.reconcile(chain)?);
        }
        let state = guard.as_mut().unwrap();
        if state.sealed {
            return Err(PipelineError::ChainSealed(chain));
        }

        let ele = crypto::encrypt_fields(entry, &self.agency_public)?;
        let record = ChainedRecord {
            chain: chain_next(&ele, &state.prev),
            ele,
        };

        let commit = (|| -> Result<(), PipelineError> {
            self.stores.append_record(chain, &record)?;
            state.payload.fold_record(&record);
            self.stores.store_proof(&ProofEntry {
                ip: chain.ip,
                day: chain.day,
                record_count: state.count + 1,
                sealed: false,
                payload: state.payload.clone(),
                witnesses: None,
                ppl: None,
            })?;
            Ok(())
        })();

        if let Err(e) = commit {
            // Drop the cached view; the next touch re-reads disk and refolds
            // whatever actually landed.
            *guard = None;
            return Err(e);
        }

        state.prev = record.chain;
        state.count += 1;
        Ok(record)
    }

    /// Seal a (ip, day): compute witnesses, sign the final accumulator
    /// payload, publish the proof to the feed, and mark the chain immutable.
    /// Days with zero records seal too; an empty-day proof closes the
    /// window for planting records retroactively.
    pub fn seal_day(&self, chain: ChainId) -> Result<ProofOfPastLog, PipelineError> {
        let slot = self.chain_slot(chain);
        let mut guard = slot.lock().unwrap();
        if guard.is_none() {
            *guard = Some(self.reconcile(chain)?);
        }
        let state = guard.as_mut().unwrap();

        if let Some(existing) = self.stores.load_proof(chain)? {
            if existing.sealed {
                let ppl = existing.ppl.map(Ok).unwrap_or_else(|| {
                    match self.stores.feed_entry(chain) {
                        Ok(Some(p)) => Ok(p),
                        Ok(None) => Err(PipelineError::SealDigestMismatch(chain)),
                        Err(e) => Err(e.into()),
                    }
                })?;
                return Err(PipelineError::AlreadySealed {
                    chain,
                    ppl: Box::new(ppl),
                });
            }
        }

        let payload_bytes = state.payload.canonical_bytes();
        let ae_digest = hash(&payload_bytes);

        // A feed entry without a sealed proof document means a previous seal
        // crashed between publishing and recording; adopt it if it covers
        // the same accumulator content.
        if let Some(published) = self.stores.feed_entry(chain)? {
            if published.ae_digest != ae_digest {
                return Err(PipelineError::SealDigestMismatch(chain));
            }
            self.persist_sealed(chain, state, published.clone())?;
            return Ok(published);
        }

        let (records, _) = self.stores.read_records(chain)?;
        let witnesses = day_witnesses(&state.payload, &records);
        let signature = crypto::sign(&payload_bytes, &self.provider_private)?;
        let ppl = ProofOfPastLog {
            ip: chain.ip,
            day: chain.day,
            ae_digest,
            signature,
            published_at: chrono::Utc::now(),
        };

        self.stores.publish_ppl(&ppl, &self.provider_pem)?;
        self.persist_sealed_with_witnesses(chain, state, ppl.clone(), witnesses)?;
        Ok(ppl)
    }

    fn persist_sealed(
        &self,
        chain: ChainId,
        state: &mut ChainState,
        ppl: ProofOfPastLog,
    ) -> Result<(), PipelineError> {
        let (records, _) = self.stores.read_records(chain)?;
        let witnesses = day_witnesses(&state.payload, &records);
        self.persist_sealed_with_witnesses(chain, state, ppl, witnesses)
    }

    fn persist_sealed_with_witnesses(
        &self,
        chain: ChainId,
        state: &mut ChainState,
        ppl: ProofOfPastLog,
        witnesses: Option<Vec<crate::model::MembershipWitness>>,
    ) -> Result<(), PipelineError> {
        self.stores.store_proof(&ProofEntry {
            ip: chain.ip,
            day: chain.day,
            record_count: state.count,
            sealed: true,
            payload: state.payload.clone(),
            witnesses,
            ppl: Some(ppl),
        })?;
        state.sealed = true;
        Ok(())
    }
}

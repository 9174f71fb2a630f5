//! Timing harness for the three phases an operator cares about: insertion,
//! daily sealing, and per-record verification.
//!
//! Only shapes are meaningful here: insertion should grow linearly with
//! record count, Bloom sealing should stay flat while one-way-accumulator
//! sealing grows with its per-record witness work, and verification cost
//! per record should not depend on day size. Sealing and verification are
//! measured as medians of repeated pure computations so millisecond-scale
//! phases don't drown in scheduler noise.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::accumulator::{day_witnesses, AccumulatorConfig, Backend};
use crate::crypto::{self, KeyMaterial};
use crate::fixture::{synthetic_entries, FixtureError};
use crate::model::ChainId;
use crate::pipeline::Pipeline;
use crate::storage::Stores;
use crate::verifier::{audit_day, ExportBundle};

#[derive(Debug, Clone, Serialize)]
pub struct BenchSample {
    pub backend: Backend,
    pub size: usize,
    /// Full pipeline time to append `size` entries.
    pub insert_total: Duration,
    /// Seal computation: witness generation plus payload hash-and-sign.
    pub seal: Duration,
    /// Full-day audit time divided by record count.
    pub verify_per_record: Duration,
}

impl BenchSample {
    pub fn csv_header() -> &'static str {
        "backend,size,insert_ms,seal_ms,verify_us_per_record"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.3},{:.3},{:.3}",
            self.backend,
            self.size,
            self.insert_total.as_secs_f64() * 1e3,
            self.seal.as_secs_f64() * 1e3,
            self.verify_per_record.as_secs_f64() * 1e6,
        )
    }
}

fn median(mut samples: Vec<Duration>) -> Duration {
    samples.sort();
    samples[samples.len() / 2]
}

/// Ingest, seal, and audit one synthetic day of `size` records under
/// `root`, timing each phase. The directory must be empty.
pub fn measure_day(
    root: &Path,
    keys: &KeyMaterial,
    config: AccumulatorConfig,
    size: usize,
    seed: u64,
) -> Result<BenchSample, FixtureError> {
    let backend = config.backend();
    let chain = ChainId::new(
        "11.1.0.5".parse().unwrap(),
        chrono::NaiveDate::from_ymd_opt(2012, 11, 19).unwrap(),
    );
    let stores = Arc::new(Stores::open(root));
    let pipeline = Pipeline::open(
        Arc::clone(&stores),
        keys.agency_public.clone(),
        keys.provider_private.clone(),
        &keys.provider_public,
        Some(config),
    )?;

    let entries = synthetic_entries(chain, size, seed);
    let start = Instant::now();
    for entry in &entries {
        pipeline.append(entry)?;
    }
    let insert_total = start.elapsed();

    // Time the sealing computation on its own, repeatably: witnesses plus
    // hash-and-sign of the final payload.
    let (records, _) = stores.read_records(chain)?;
    let proof = stores.load_proof(chain)?.expect("day has records");
    let seal = median(
        (0..3)
            .map(|_| {
                let t = Instant::now();
                let witnesses = day_witnesses(&proof.payload, &records).unwrap_or_default();
                let payload_bytes = proof.payload.canonical_bytes();
                let signature =
                    crypto::sign(&payload_bytes, &keys.provider_private).expect("signing");
                std::hint::black_box((witnesses, signature));
                t.elapsed()
            })
            .collect(),
    );

    pipeline.seal_day(chain)?;

    let bundle = ExportBundle::from_stores(&stores, chain)?;
    let presentation = bundle.to_presentation()?;
    let feed = stores.read_feed()?;
    let audit_total = median(
        (0..3)
            .map(|_| {
                let t = Instant::now();
                let report = audit_day(&presentation, &feed, &keys.provider_public);
                assert!(report.accepted, "bench day must verify");
                t.elapsed()
            })
            .collect(),
    );
    let verify_per_record = audit_total / size.max(1) as u32;

    Ok(BenchSample {
        backend,
        size,
        insert_total,
        seal,
        verify_per_record,
    })
}

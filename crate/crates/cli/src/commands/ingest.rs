use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use seclaas_core::ingest::{
    classify_line, parse_snort_line, LineClass, MappingStore, UNKNOWN_USER,
};
use serde::Serialize;

use crate::config::Settings;
use crate::GlobalOpts;

use super::{ok, open_pipeline};

#[derive(Debug, Default, Serialize)]
struct Summary {
    appended: u64,
    skipped: u64,
    unresolved_users: u64,
    malformed_headers: u64,
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    global: GlobalOpts,
    input: PathBuf,
    mappings: PathBuf,
    year: Option<i32>,
    bloom_capacity: Option<u64>,
    bloom_fp: Option<f64>,
    rsa_prime_bits: Option<usize>,
    json: bool,
) -> Result<ExitCode> {
    let settings = Settings::resolve(
        global.data_root,
        global.backend,
        global.keys,
        global.config,
        year,
        bloom_capacity,
        bloom_fp,
        rsa_prime_bits,
    )?;
    let year = settings
        .year
        .context("--year is required (alert lines omit it)")?;

    let store = MappingStore::load(&mappings)?;
    // Read lossily: one undecodable byte must not take the rest of the
    // evidence with it.
    let bytes = std::fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
    let text = String::from_utf8_lossy(&bytes);

    let (_stores, pipeline) = open_pipeline(&settings)?;

    let mut summary = Summary::default();
    for line in text.lines() {
        if classify_line(line) == LineClass::Skip {
            if !line.trim().is_empty() {
                summary.skipped += 1;
            }
            continue;
        }
        let alert = match parse_snort_line(line, year) {
            Ok(alert) => alert,
            Err(e) => {
                if summary.malformed_headers < 5 {
                    eprintln!("skipping malformed header: {e}");
                } else if summary.malformed_headers == 5 {
                    eprintln!("(further malformed headers suppressed)");
                }
                summary.malformed_headers += 1;
                summary.skipped += 1;
                continue;
            }
        };
        // Resolve the source to its lease: user id, plus normalization of a
        // floating address to the VM's fixed IP so each VM keeps one chain.
        let mut entry = match store.resolve(alert.from_ip, alert.timestamp) {
            Ok(lease) => {
                let mut e = alert.into_entry(lease.user_id.clone());
                e.from_ip = lease.fixed_ip;
                e
            }
            Err(_) => {
                summary.unresolved_users += 1;
                alert.into_entry(UNKNOWN_USER.to_string())
            }
        };
        entry.user_id = if entry.user_id.is_empty() {
            UNKNOWN_USER.into()
        } else {
            entry.user_id
        };
        pipeline.append(&entry)?;
        summary.appended += 1;
    }

    if json {
        println!("{}", serde_json::to_string(&summary)?);
    } else {
        println!(
            "appended {} record(s), skipped {} line(s), {} unresolved user(s)",
            summary.appended, summary.skipped, summary.unresolved_users
        );
        if summary.malformed_headers > 0 {
            println!(
                "  ({} skipped line(s) were malformed headers)",
                summary.malformed_headers
            );
        }
    }
    ok()
}

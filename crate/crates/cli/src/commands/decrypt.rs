use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use seclaas_core::crypto::{decrypt_fields, load_private_key};
use seclaas_core::verifier::ExportBundle;
use serde::Serialize;

use super::ok;
use crate::GlobalOpts;

#[derive(Serialize)]
struct PlainRecord {
    index: usize,
    timestamp: String,
    from_ip: String,
    to_ip: String,
    port: u16,
    user_id: String,
}

pub fn run(
    _global: GlobalOpts,
    bundle: PathBuf,
    agency_key: PathBuf,
    json: bool,
) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&bundle)
        .with_context(|| format!("reading bundle {}", bundle.display()))?;
    let bundle = ExportBundle::from_json(&text)?;
    let key = load_private_key(&agency_key)?;

    let presentation = bundle.to_presentation()?;
    let mut rows = Vec::with_capacity(presentation.records.len());
    for (index, record) in presentation.records.iter().enumerate() {
        let fields = decrypt_fields(&record.ele, &key)
            .with_context(|| format!("record {index}: decryption failed"))?;
        rows.push(PlainRecord {
            index,
            timestamp: record.ele.timestamp.to_rfc3339(),
            from_ip: record.ele.from_ip.to_string(),
            to_ip: fields.to_ip.to_string(),
            port: fields.port,
            user_id: fields.user_id,
        });
    }

    if json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        for row in &rows {
            println!(
                "{:>4}  {}  {} -> {}:{}  user={}",
                row.index, row.timestamp, row.from_ip, row.to_ip, row.port, row.user_id
            );
        }
        eprintln!("decrypted {} record(s)", rows.len());
    }
    ok()
}

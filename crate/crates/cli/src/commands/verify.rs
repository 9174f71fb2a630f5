use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use seclaas_core::crypto;
use seclaas_core::storage::Stores;
use seclaas_core::verifier::{audit_day, AuditReport, ExportBundle, StepVerdict};

use super::{parse_chain, settings, EXIT_OK, EXIT_REJECT};
use crate::GlobalOpts;

pub fn run(
    global: GlobalOpts,
    ip: String,
    day: String,
    records: PathBuf,
    provider_key: Option<PathBuf>,
    json: bool,
) -> Result<ExitCode> {
    let settings = settings(&global)?;
    let chain = parse_chain(&ip, &day)?;

    let text = std::fs::read_to_string(&records)
        .with_context(|| format!("reading bundle {}", records.display()))?;
    let bundle = ExportBundle::from_json(&text)?;
    if bundle.chain() != chain {
        bail!(
            "bundle covers {}, but --ip/--day name {}",
            bundle.chain(),
            chain
        );
    }

    let stores = Stores::open(&settings.data_root);
    let feed = stores.read_feed()?;
    let key_pem = match provider_key {
        Some(path) => std::fs::read_to_string(&path)
            .with_context(|| format!("reading provider key {}", path.display()))?,
        None => stores
            .provider_key_pem()
            .context("no provider key in the feed; pass --provider-key")?,
    };
    let provider = crypto::public_key_from_pem(&key_pem)?;

    let presentation = bundle.to_presentation()?;
    let report = audit_day(&presentation, &feed, &provider);

    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print_report(&report);
    }
    Ok(ExitCode::from(if report.accepted {
        EXIT_OK
    } else {
        EXIT_REJECT
    }))
}

fn step(name: &str, verdict: &StepVerdict) {
    if verdict.passed {
        println!("  {name:<13} ok");
    } else if verdict.reasons.is_empty() {
        println!("  {name:<13} not evaluated");
    } else {
        let reasons: Vec<String> = verdict.reasons.iter().map(|r| r.to_string()).collect();
        println!("  {name:<13} FAIL [{}]", reasons.join(", "));
    }
}

fn print_report(report: &AuditReport) {
    println!(
        "audit {}/{} ({}, {} record(s)): {}",
        report.ip,
        report.day,
        report.backend,
        report.records_presented,
        if report.accepted { "ACCEPT" } else { "REJECT" }
    );
    step("proof:", &report.proof);
    step("membership:", &report.membership);
    step("sequence:", &report.sequence);
    step("completeness:", &report.completeness);
}

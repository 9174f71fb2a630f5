use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use seclaas_core::accumulator::{derive_bloom_params, AccumulatorConfig, Backend, RsaParams};
use seclaas_core::adversary::{run_matrix, AttackScenario, CellOutcome, MatrixReport};
use seclaas_core::crypto::KeyMaterial;
use seclaas_core::fixture::{sealed_day, DayFixture};
use seclaas_core::model::ChainId;

use super::{settings, work_dir, EXIT_OK, EXIT_REJECT};
use crate::GlobalOpts;

pub fn run(
    global: GlobalOpts,
    days: u32,
    records: usize,
    seed: u64,
    work: Option<PathBuf>,
    json: bool,
) -> Result<ExitCode> {
    let settings = settings(&global)?;
    let root = work_dir(work, "attack-sim")?;

    eprintln!("generating provider/agency and attacker keypairs...");
    let honest = KeyMaterial::generate(2048).context("generating honest keys")?;
    let attacker = KeyMaterial::generate(2048).context("generating attacker keys")?;

    let backends: Vec<Backend> = match settings.backend {
        Some(b) => vec![b],
        None => vec![Backend::Bloom, Backend::Rsa],
    };

    let mut all_ok = true;
    let mut reports: Vec<(Backend, MatrixReport)> = Vec::new();
    for backend in backends {
        let mut fixtures: Vec<DayFixture> = Vec::new();
        for d in 0..days {
            let chain = ChainId::new(
                "11.1.0.5".parse().unwrap(),
                NaiveDate::from_ymd_opt(2012, 11, 1).unwrap() + chrono::Duration::days(d as i64),
            );
            let fixture_root = root.join(format!("{backend}-day{d}"));
            let config = match backend {
                Backend::Bloom => AccumulatorConfig::Bloom {
                    params: derive_bloom_params(settings.bloom_capacity, settings.bloom_fp)
                        .map_err(|e| anyhow::anyhow!("{e}"))?,
                },
                // Desk-scale matrix; production prime sizes add nothing here.
                Backend::Rsa => AccumulatorConfig::Rsa {
                    params: RsaParams::generate(settings.rsa_prime_bits.min(64)),
                },
            };
            eprintln!("building fixture {backend} day {d} ({records} records)...");
            fixtures.push(sealed_day(
                &fixture_root,
                &honest,
                config,
                chain,
                records,
                seed ^ d as u64,
            )?);
        }

        let report = run_matrix(
            &fixtures,
            &AttackScenario::ALL,
            &honest.agency_public,
            &honest.provider_public,
            &attacker,
            seed,
        );
        all_ok &= report.all_expected;
        reports.push((backend, report));
    }

    if json {
        let combined: Vec<serde_json::Value> = reports
            .iter()
            .map(|(b, r)| {
                serde_json::json!({ "backend": b.to_string(), "report": serde_json::to_value(r).unwrap() })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&combined)?);
    } else {
        for (backend, report) in &reports {
            println!("== {backend} backend ==");
            for cell in &report.cells {
                let outcome = match &cell.outcome {
                    CellOutcome::Rejected { reasons } => {
                        format!("rejected [{}]", reasons.join(", "))
                    }
                    CellOutcome::Accepted => "accepted".to_string(),
                    CellOutcome::Skipped { why } => format!("skipped ({why})"),
                    CellOutcome::LeakFree => "no plaintext leaked".to_string(),
                    CellOutcome::LeakDetected { what } => format!("LEAK: {what}"),
                };
                println!(
                    "  {:<12} {:<28} {:<40} {}",
                    cell.fixture,
                    cell.scenario,
                    outcome,
                    if cell.as_expected {
                        "as expected"
                    } else {
                        "UNEXPECTED"
                    }
                );
            }
            println!(
                "  honest controls accepted: {}/{}",
                report.honest_accepted, report.honest_controls
            );
        }
        println!(
            "overall: {}",
            if all_ok {
                "all verdicts as expected"
            } else {
                "UNEXPECTED VERDICTS"
            }
        );
    }

    Ok(ExitCode::from(if all_ok { EXIT_OK } else { EXIT_REJECT }))
}

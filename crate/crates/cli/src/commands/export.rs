use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use seclaas_core::storage::Stores;
use seclaas_core::verifier::ExportBundle;
use serde::Serialize;

use super::{ok, parse_chain, settings, write_or_stdout};
use crate::GlobalOpts;

/// Mirrorable copy of the public feed: every published proof plus the
/// provider verifying key, in one document.
#[derive(Serialize)]
struct FeedExport {
    provider_key: String,
    proofs: Vec<seclaas_core::model::ProofOfPastLog>,
}

pub fn run(
    global: GlobalOpts,
    ip: Option<String>,
    day: Option<String>,
    feed: bool,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let settings = settings(&global)?;
    let stores = Stores::open(&settings.data_root);

    if feed {
        let export = FeedExport {
            provider_key: stores.provider_key_pem()?,
            proofs: stores.read_feed()?,
        };
        write_or_stdout(out.as_deref(), &serde_json::to_string(&export)?)?;
        if let Some(path) = out {
            eprintln!(
                "exported feed ({} proofs) to {}",
                export.proofs.len(),
                path.display()
            );
        }
        return ok();
    }

    let (Some(ip), Some(day)) = (ip, day) else {
        bail!("export needs --ip and --day (or --feed for the whole published feed)");
    };
    let chain = parse_chain(&ip, &day)?;
    let bundle = ExportBundle::from_stores(&stores, chain)?;
    write_or_stdout(out.as_deref(), &bundle.to_json())?;
    if let Some(path) = out {
        eprintln!(
            "exported {} record(s) for {chain} to {}",
            bundle.records.len(),
            path.display()
        );
    }
    ok()
}

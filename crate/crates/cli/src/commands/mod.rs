pub mod attack_sim;
pub mod bench;
pub mod decrypt;
pub mod export;
pub mod ingest;
pub mod keygen;
pub mod seal;
pub mod verify;

use std::net::Ipv4Addr;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use seclaas_core::crypto::KeyMaterial;
use seclaas_core::model::ChainId;
use seclaas_core::pipeline::Pipeline;
use seclaas_core::storage::Stores;

use crate::config::Settings;
use crate::GlobalOpts;

pub const EXIT_OK: u8 = 0;
pub const EXIT_REJECT: u8 = 1;

pub fn ok() -> Result<ExitCode> {
    Ok(ExitCode::from(EXIT_OK))
}

pub fn settings(global: &GlobalOpts) -> Result<Settings> {
    Settings::resolve(
        global.data_root.clone(),
        global.backend.clone(),
        global.keys.clone(),
        global.config.clone(),
        None,
        None,
        None,
        None,
    )
}

pub fn parse_chain(ip: &str, day: &str) -> Result<ChainId> {
    let ip: Ipv4Addr = ip.parse().with_context(|| format!("bad --ip {ip:?}"))?;
    let day = NaiveDate::parse_from_str(day, "%Y-%m-%d")
        .with_context(|| format!("bad --day {day:?} (expected YYYY-MM-DD)"))?;
    Ok(ChainId::new(ip, day))
}

/// Open the pipeline for a stateful verb: keys from the keys dir, backend
/// pinned by the data root (or freshly configured from settings).
pub fn open_pipeline(settings: &Settings) -> Result<(Arc<Stores>, Pipeline)> {
    let keys = KeyMaterial::load(&settings.keys_dir).with_context(|| {
        format!(
            "loading keys from {} (run `seclaas keygen` first?)",
            settings.keys_dir.display()
        )
    })?;
    let stores = Arc::new(Stores::open(&settings.data_root));
    let requested = match stores.load_accumulator_config()? {
        Some(existing) => {
            settings.check_backend(&existing)?;
            None
        }
        None => Some(settings.build_accumulator_config()?),
    };
    let pipeline = Pipeline::open(
        Arc::clone(&stores),
        keys.agency_public.clone(),
        keys.provider_private.clone(),
        &keys.provider_public,
        requested,
    )?;
    Ok((stores, pipeline))
}

/// A scratch directory for self-contained verbs: the given path, or a fresh
/// directory under the system temp root that lives until process exit.
pub fn work_dir(explicit: Option<std::path::PathBuf>, label: &str) -> Result<std::path::PathBuf> {
    match explicit {
        Some(dir) => {
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("creating work dir {}", dir.display()))?;
            Ok(dir)
        }
        None => {
            let nonce = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos())
                .unwrap_or(0);
            let dir = std::env::temp_dir()
                .join(format!("seclaas-{label}-{}-{nonce}", std::process::id()));
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("creating work dir {}", dir.display()))?;
            Ok(dir)
        }
    }
}

pub fn write_or_stdout(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(path) => {
            std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            println!("{contents}");
            Ok(())
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use seclaas_core::crypto::KeyMaterial;

use super::{ok, settings};
use crate::GlobalOpts;

pub fn run(
    global: GlobalOpts,
    out_dir: Option<PathBuf>,
    force: bool,
    bits: usize,
) -> Result<ExitCode> {
    let settings = settings(&global)?;
    let dir = out_dir.unwrap_or(settings.keys_dir);

    let keys = KeyMaterial::generate(bits).context("generating keypairs")?;
    keys.save(&dir, force)?;
    keys.self_test()
        .context("generated keys failed self-test")?;

    println!("wrote 4 key files to {}", dir.display());
    println!("  agency keypair: hybrid envelope encryption (OAEP-SHA-256 + AES-256-GCM)");
    println!("  provider keypair: proof signatures (PKCS#1 v1.5, SHA-256), {bits}-bit");
    ok()
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use seclaas_core::accumulator::{derive_bloom_params, AccumulatorConfig, Backend, RsaParams};
use seclaas_core::bench::{measure_day, BenchSample};
use seclaas_core::crypto::KeyMaterial;

use super::{ok, settings, work_dir};
use crate::GlobalOpts;

pub fn run(
    global: GlobalOpts,
    sizes: Vec<usize>,
    seed: u64,
    work: Option<PathBuf>,
) -> Result<ExitCode> {
    let settings = settings(&global)?;
    let root = work_dir(work, "bench")?;

    eprintln!("generating keys...");
    let keys = KeyMaterial::generate(2048).context("generating keys")?;

    let backends: Vec<Backend> = match settings.backend {
        Some(b) => vec![b],
        None => vec![Backend::Bloom, Backend::Rsa],
    };

    println!("{}", BenchSample::csv_header());
    for backend in backends {
        // One parameter set per backend so sizes are comparable.
        let rsa_params = RsaParams::generate(settings.rsa_prime_bits.min(64));
        for &size in &sizes {
            let config = match backend {
                Backend::Bloom => AccumulatorConfig::Bloom {
                    params: derive_bloom_params(size.max(1) as u64, settings.bloom_fp)
                        .map_err(|e| anyhow::anyhow!("{e}"))?,
                },
                Backend::Rsa => AccumulatorConfig::Rsa {
                    params: rsa_params.clone(),
                },
            };
            let day_root = root.join(format!("{backend}-{size}"));
            eprintln!("measuring {backend} at {size} records...");
            let sample = measure_day(&day_root, &keys, config, size, seed)?;
            println!("{}", sample.csv_row());
        }
    }
    ok()
}

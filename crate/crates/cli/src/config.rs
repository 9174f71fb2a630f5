//! Settings resolution: command-line flags beat environment variables
//! (`SECLAAS_DATA_ROOT`, `SECLAAS_BACKEND`), which beat the optional TOML
//! config file, which beats built-in defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use seclaas_core::accumulator::{derive_bloom_params, AccumulatorConfig, Backend, RsaParams};
use serde::Deserialize;

pub const ENV_DATA_ROOT: &str = "SECLAAS_DATA_ROOT";
pub const ENV_BACKEND: &str = "SECLAAS_BACKEND";
pub const ENV_CONFIG: &str = "SECLAAS_CONFIG";

const DEFAULT_DATA_ROOT: &str = "./seclaas-data";
pub const DEFAULT_BLOOM_CAPACITY: u64 = 5000;
pub const DEFAULT_BLOOM_FP: f64 = 0.01;
pub const DEFAULT_RSA_PRIME_BITS: usize = 1024;

/// Optional config file contents.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub data_root: Option<PathBuf>,
    pub backend: Option<String>,
    pub keys_dir: Option<PathBuf>,
    pub year: Option<i32>,
    pub bloom_capacity: Option<u64>,
    pub bloom_fp: Option<f64>,
    pub rsa_prime_bits: Option<usize>,
}

impl ConfigFile {
    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        let path = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(ENV_CONFIG).map(PathBuf::from),
        };
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug)]
pub struct Settings {
    pub data_root: PathBuf,
    /// Backend the user asked for, if they asked at all.
    pub backend: Option<Backend>,
    pub keys_dir: PathBuf,
    pub year: Option<i32>,
    pub bloom_capacity: u64,
    pub bloom_fp: f64,
    pub rsa_prime_bits: usize,
}

impl Settings {
    #[allow(clippy::too_many_arguments)]
    pub fn resolve(
        flag_data_root: Option<PathBuf>,
        flag_backend: Option<String>,
        flag_keys: Option<PathBuf>,
        flag_config: Option<PathBuf>,
        flag_year: Option<i32>,
        flag_bloom_capacity: Option<u64>,
        flag_bloom_fp: Option<f64>,
        flag_rsa_prime_bits: Option<usize>,
    ) -> Result<Settings> {
        let file = ConfigFile::load(flag_config.as_deref())?;

        let data_root = flag_data_root
            .or_else(|| std::env::var_os(ENV_DATA_ROOT).map(PathBuf::from))
            .or(file.data_root)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_ROOT));

        let backend_str = flag_backend
            .or_else(|| std::env::var(ENV_BACKEND).ok())
            .or(file.backend);
        let backend = match backend_str {
            Some(s) => Some(Backend::from_str(&s).map_err(|e| anyhow::anyhow!("{e}"))?),
            None => None,
        };

        let keys_dir = flag_keys
            .or(file.keys_dir)
            .unwrap_or_else(|| data_root.join("keys"));

        Ok(Settings {
            data_root,
            backend,
            keys_dir,
            year: flag_year.or(file.year),
            bloom_capacity: flag_bloom_capacity
                .or(file.bloom_capacity)
                .unwrap_or(DEFAULT_BLOOM_CAPACITY),
            bloom_fp: flag_bloom_fp.or(file.bloom_fp).unwrap_or(DEFAULT_BLOOM_FP),
            rsa_prime_bits: flag_rsa_prime_bits
                .or(file.rsa_prime_bits)
                .unwrap_or(DEFAULT_RSA_PRIME_BITS),
        })
    }

    /// Accumulator configuration for a fresh data root.
    pub fn build_accumulator_config(&self) -> Result<AccumulatorConfig> {
        match self.backend.unwrap_or(Backend::Bloom) {
            Backend::Bloom => {
                let params = derive_bloom_params(self.bloom_capacity, self.bloom_fp)
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                Ok(AccumulatorConfig::Bloom { params })
            }
            Backend::Rsa => Ok(AccumulatorConfig::Rsa {
                params: RsaParams::generate(self.rsa_prime_bits),
            }),
        }
    }

    /// Refuse an explicit backend request that contradicts the data root.
    pub fn check_backend(&self, existing: &AccumulatorConfig) -> Result<()> {
        if let Some(requested) = self.backend {
            if requested != existing.backend() {
                bail!(
                    "data root {} is configured for backend {}, requested {}",
                    self.data_root.display(),
                    existing.backend(),
                    requested
                );
            }
        }
        Ok(())
    }
}

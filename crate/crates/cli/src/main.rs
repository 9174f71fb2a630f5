//! `seclaas`, the operator and auditor front end for the secure logging
//! engine.
//!
//! Exit codes: 0 success or audit accept, 1 audit reject, 2 usage or I/O
//! error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "seclaas",
    version,
    about = "Tamper-evident network-log storage with signed daily proofs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the stateful verbs; see `config` for precedence.
#[derive(Args, Debug, Clone)]
struct GlobalOpts {
    /// Data root holding logs/, proofs/, and feed/.
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
    /// Accumulator backend: bloom or rsa.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Directory with the four key files (default: <data-root>/keys).
    #[arg(long, global = true)]
    keys: Option<PathBuf>,
    /// TOML config file (default: $SECLAAS_CONFIG if set).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the agency and provider keypairs.
    Keygen {
        #[command(flatten)]
        global: GlobalOpts,
        /// Output directory (default: <data-root>/keys).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Overwrite existing key files.
        #[arg(long)]
        force: bool,
        /// RSA modulus size in bits.
        #[arg(long, default_value_t = 2048)]
        bits: usize,
    },
    /// Parse an alert file and append every event to its (ip, day) chain.
    Ingest {
        #[command(flatten)]
        global: GlobalOpts,
        /// Alert file, one event header per line.
        #[arg(long)]
        input: PathBuf,
        /// Lease table mapping floating/fixed IPs to users.
        #[arg(long)]
        mappings: PathBuf,
        /// Year the alert timestamps omit.
        #[arg(long)]
        year: Option<i32>,
        /// Bloom capacity for a fresh data root.
        #[arg(long)]
        bloom_capacity: Option<u64>,
        /// Bloom target false-positive rate for a fresh data root.
        #[arg(long)]
        bloom_fp: Option<f64>,
        /// Prime size for a fresh rsa-backend data root.
        #[arg(long)]
        rsa_prime_bits: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Seal one (ip, day): sign the final accumulator state and publish it.
    Seal {
        #[command(flatten)]
        global: GlobalOpts,
        #[arg(long)]
        ip: String,
        /// UTC day, YYYY-MM-DD.
        #[arg(long)]
        day: String,
        #[arg(long)]
        json: bool,
    },
    /// Audit an exported bundle against the published feed.
    Verify {
        #[command(flatten)]
        global: GlobalOpts,
        #[arg(long)]
        ip: String,
        #[arg(long)]
        day: String,
        /// Exported bundle file to audit.
        #[arg(long)]
        records: PathBuf,
        /// Trusted provider verifying key (default: the feed's copy).
        #[arg(long)]
        provider_key: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Write the investigator bundle for a sealed day.
    Export {
        #[command(flatten)]
        global: GlobalOpts,
        #[arg(long, required_unless_present = "feed")]
        ip: Option<String>,
        #[arg(long, required_unless_present = "feed")]
        day: Option<String>,
        /// Export the whole published feed for mirroring instead of one
        /// day's bundle.
        #[arg(long, conflicts_with_all = ["ip", "day"])]
        feed: bool,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decrypt a bundle's confidential fields with the agency private key.
    Decrypt {
        #[command(flatten)]
        global: GlobalOpts,
        /// Exported bundle file.
        #[arg(long)]
        bundle: PathBuf,
        /// Agency private key file.
        #[arg(long)]
        agency_key: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the collusion-attack matrix against fresh fixture days.
    AttackSim {
        #[command(flatten)]
        global: GlobalOpts,
        /// Print the full matrix (always on; kept for compatibility).
        #[arg(long)]
        matrix: bool,
        /// Fixture days per backend.
        #[arg(long, default_value_t = 5)]
        days: u32,
        /// Records per fixture day.
        #[arg(long, default_value_t = 8)]
        records: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Scratch directory (default: a fresh temp dir).
        #[arg(long)]
        work_dir: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Time insertion, sealing, and verification across day sizes.
    Bench {
        #[command(flatten)]
        global: GlobalOpts,
        /// Comma-separated record counts.
        #[arg(long, value_delimiter = ',', default_value = "1000,3000,9000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Scratch directory (default: a fresh temp dir).
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Keygen {
            global,
            out_dir,
            force,
            bits,
        } => commands::keygen::run(global, out_dir, force, bits),
        Command::Ingest {
            global,
            input,
            mappings,
            year,
            bloom_capacity,
            bloom_fp,
            rsa_prime_bits,
            json,
        } => commands::ingest::run(
            global,
            input,
            mappings,
            year,
            bloom_capacity,
            bloom_fp,
            rsa_prime_bits,
            json,
        ),
        Command::Seal {
            global,
            ip,
            day,
            json,
        } => commands::seal::run(global, ip, day, json),
        Command::Verify {
            global,
            ip,
            day,
            records,
            provider_key,
            json,
        } => commands::verify::run(global, ip, day, records, provider_key, json),
        Command::Export {
            global,
            ip,
            day,
            feed,
            out,
        } => commands::export::run(global, ip, day, feed, out),
        Command::Decrypt {
            global,
            bundle,
            agency_key,
            json,
        } => commands::decrypt::run(global, bundle, agency_key, json),
        Command::AttackSim {
            global,
            matrix: _,
            days,
            records,
            seed,
            work_dir,
            json,
        } => commands::attack_sim::run(global, days, records, seed, work_dir, json),
        Command::Bench {
            global,
            sizes,
            seed,
            work_dir,
        } => commands::bench::run(global, sizes, seed, work_dir),
    };

    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

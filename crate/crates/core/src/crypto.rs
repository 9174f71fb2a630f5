//! Field-level hybrid encryption and provider signatures.
//!
//! The confidential triple (to_ip, port, user_id) of each entry is sealed
//! with a fresh AES-256-GCM key, and that key is wrapped under the agency
//! RSA public key (OAEP, SHA-256). Daily accumulator seals are signed with
//! the provider RSA key using PKCS#1 v1.5 over SHA-256. Both schemes are
//! named in the key file headers so independent verifiers can interoperate.

use std::fs;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes256Gcm, Key, Nonce};
use rand::rngs::OsRng;
use rand::RngCore;
use rsa::pkcs8::{
    DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey, LineEnding,
};
use rsa::{Oaep, Pkcs1v15Sign, RsaPrivateKey, RsaPublicKey};
use sha2::Sha256;
use thiserror::Error;

use crate::encode::{hash, put_bytes, put_ip};
use crate::model::{EncryptedLogEntry, LogEntry};

/// RSA modulus size for freshly generated keypairs.
pub const DEFAULT_KEY_BITS: usize = 2048;

const NONCE_LEN: usize = 12;
const SYM_KEY_LEN: usize = 32;

pub const AGENCY_PRIVATE_FILE: &str = "agency_private.pem";
pub const AGENCY_PUBLIC_FILE: &str = "agency_public.pem";
pub const PROVIDER_PRIVATE_FILE: &str = "provider_private.pem";
pub const PROVIDER_PUBLIC_FILE: &str = "provider_public.pem";

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("key format error: {0}")]
    KeyFormat(String),
    #[error("encryption failure")]
    Encrypt,
    #[error("authenticated decryption failed")]
    Decrypt,
    #[error("signing failure: {0}")]
    Sign(String),
    #[error("key file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("refusing to overwrite existing key file {0} (use force)")]
    WouldOverwrite(PathBuf),
}

/// The two keypairs the engine runs on: the agencies' shared encryption
/// keypair and the provider's signing keypair.
pub struct KeyMaterial {
    pub agency_public: RsaPublicKey,
    pub agency_private: RsaPrivateKey,
    pub provider_public: RsaPublicKey,
    pub provider_private: RsaPrivateKey,
}

impl KeyMaterial {
    /// Generate both keypairs. 2048-bit unless a smaller size is forced for
    /// tests.
    pub fn generate(bits: usize) -> Result<Self, CryptoError> {
        let mut rng = OsRng;
        let agency_private = RsaPrivateKey::new(&mut rng, bits)
            .map_err(|e| CryptoError::KeyFormat(e.to_string()))?;
        let provider_private = RsaPrivateKey::new(&mut rng, bits)
            .map_err(|e| CryptoError::KeyFormat(e.to_string()))?;
        Ok(KeyMaterial {
            agency_public: agency_private.to_public_key(),
            provider_public: provider_private.to_public_key(),
            agency_private,
            provider_private,
        })
    }

    /// Write the four key files under `dir`. Existing files are only
    /// replaced when `force` is set.
    pub fn save(&self, dir: &Path, force: bool) -> Result<(), CryptoError> {
        fs::create_dir_all(dir).map_err(|e| CryptoError::Io {
            path: dir.into(),
            source: e,
        })?;
        let files = [
            (
                AGENCY_PRIVATE_FILE,
                pem_private(&self.agency_private, AGENCY_HEADER)?,
            ),
            (
                AGENCY_PUBLIC_FILE,
                pem_public(&self.agency_public, AGENCY_HEADER)?,
            ),
            (
                PROVIDER_PRIVATE_FILE,
                pem_private(&self.provider_private, PROVIDER_HEADER)?,
            ),
            (
                PROVIDER_PUBLIC_FILE,
                pem_public(&self.provider_public, PROVIDER_HEADER)?,
            ),
        ];
        for (name, _) in &files {
            let path = dir.join(name);
            if path.exists() && !force {
                return Err(CryptoError::WouldOverwrite(path));
            }
        }
        for (name, contents) in files {
            let path = dir.join(name);
            fs::write(&path, contents).map_err(|e| CryptoError::Io { path, source: e })?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CryptoError> {
        Ok(KeyMaterial {
            agency_public: load_public_key(&dir.join(AGENCY_PUBLIC_FILE))?,
            agency_private: load_private_key(&dir.join(AGENCY_PRIVATE_FILE))?,
            provider_public: load_public_key(&dir.join(PROVIDER_PUBLIC_FILE))?,
            provider_private: load_private_key(&dir.join(PROVIDER_PRIVATE_FILE))?,
        })
    }

    /// Round-trip self-test over both keypairs: encrypt/decrypt one entry
    /// and sign/verify one payload.
    pub fn self_test(&self) -> Result<(), CryptoError> {
        let entry = LogEntry {
            from_ip: Ipv4Addr::new(10, 0, 0, 1),
            to_ip: Ipv4Addr::new(10, 0, 0, 2),
            timestamp: chrono::DateTime::from_timestamp_micros(1_000_000).unwrap(),
            port: 443,
            user_id: "selftest".into(),
        };
        let ele = encrypt_fields(&entry, &self.agency_public)?;
        let fields = decrypt_fields(&ele, &self.agency_private)?;
        if fields.to_ip != entry.to_ip
            || fields.port != entry.port
            || fields.user_id != entry.user_id
        {
            return Err(CryptoError::Decrypt);
        }
        let sig = sign(b"selftest-payload", &self.provider_private)?;
        if !verify_signature(b"selftest-payload", &sig, &self.provider_public) {
            return Err(CryptoError::Sign("self-test verification failed".into()));
        }
        Ok(())
    }
}

const AGENCY_HEADER: &str =
    "# seclaas agency key: RSA hybrid envelope, OAEP-SHA-256 wrapping AES-256-GCM\n";
const PROVIDER_HEADER: &str = "# seclaas provider key: RSA signatures, PKCS#1 v1.5 with SHA-256\n";

fn pem_private(key: &RsaPrivateKey, header: &str) -> Result<String, CryptoError> {
    let pem = key
        .to_pkcs8_pem(LineEnding::LF)
        .map_err(|e| CryptoError::KeyFormat(e.to_string()))?;
    Ok(format!("{header}{}", pem.as_str()))
}

fn pem_public(key: &RsaPublicKey, header: &str) -> Result<String, CryptoError> {
    let pem = key
        .to_public_key_pem(LineEnding::LF)
        .map_err(|e| CryptoError::KeyFormat(e.to_string()))?;
    Ok(format!("{header}{pem}"))
}

fn read_pem(path: &Path) -> Result<String, CryptoError> {
    let text = fs::read_to_string(path).map_err(|e| CryptoError::Io {
        path: path.into(),
        source: e,
    })?;
    // Comment lines above the armor describe the scheme; parsers skip them.
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n"))
}

pub fn load_private_key(path: &Path) -> Result<RsaPrivateKey, CryptoError> {
    RsaPrivateKey::from_pkcs8_pem(&read_pem(path)?)
        .map_err(|e| CryptoError::KeyFormat(format!("{}: {e}", path.display())))
}

pub fn load_public_key(path: &Path) -> Result<RsaPublicKey, CryptoError> {
    RsaPublicKey::from_public_key_pem(&read_pem(path)?)
        .map_err(|e| CryptoError::KeyFormat(format!("{}: {e}", path.display())))
}

pub fn public_key_pem(key: &RsaPublicKey) -> Result<String, CryptoError> {
    pem_public(key, PROVIDER_HEADER)
}

pub fn public_key_from_pem(text: &str) -> Result<RsaPublicKey, CryptoError> {
    let body = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    RsaPublicKey::from_public_key_pem(&body).map_err(|e| CryptoError::KeyFormat(e.to_string()))
}

/// The confidential triple recovered from an encrypted entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfidentialFields {
    pub to_ip: Ipv4Addr,
    pub port: u16,
    pub user_id: String,
}

fn confidential_plaintext(entry: &LogEntry) -> Vec<u8> {
    let mut buf = Vec::with_capacity(6 + entry.user_id.len() + 4);
    put_ip(&mut buf, entry.to_ip);
    buf.extend_from_slice(&entry.port.to_be_bytes());
    put_bytes(&mut buf, entry.user_id.as_bytes());
    buf
}

fn parse_confidential(plain: &[u8]) -> Result<ConfidentialFields, CryptoError> {
    if plain.len() < 10 {
        return Err(CryptoError::Decrypt);
    }
    let to_ip = Ipv4Addr::new(plain[0], plain[1], plain[2], plain[3]);
    let port = u16::from_be_bytes([plain[4], plain[5]]);
    let len = u32::from_be_bytes([plain[6], plain[7], plain[8], plain[9]]) as usize;
    if plain.len() != 10 + len {
        return Err(CryptoError::Decrypt);
    }
    let user_id = String::from_utf8(plain[10..].to_vec()).map_err(|_| CryptoError::Decrypt)?;
    Ok(ConfidentialFields {
        to_ip,
        port,
        user_id,
    })
}

/// Seal the confidential fields of `entry` under the agency public key.
///
/// Encryption is randomized: a fresh data key and nonce are drawn per entry,
/// so equal entries produce unequal ciphertexts. The envelope layout is
/// `u16 wrapped-key length || wrapped key || 12-byte nonce || AEAD output`.
pub fn encrypt_fields(
    entry: &LogEntry,
    agency_public: &RsaPublicKey,
) -> Result<EncryptedLogEntry, CryptoError> {
    let mut rng = OsRng;
    let mut sym_key = [0u8; SYM_KEY_LEN];
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut sym_key);
    rng.fill_bytes(&mut nonce);

    let wrapped = agency_public
        .encrypt(&mut rng, Oaep::new::<Sha256>(), &sym_key)
        .map_err(|_| CryptoError::Encrypt)?;

    let cipher = Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(&sym_key));
    let sealed = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            confidential_plaintext(entry).as_slice(),
        )
        .map_err(|_| CryptoError::Encrypt)?;

    let mut ciphertext = Vec::with_capacity(2 + wrapped.len() + NONCE_LEN + sealed.len());
    ciphertext.extend_from_slice(&(wrapped.len() as u16).to_be_bytes());
    ciphertext.extend_from_slice(&wrapped);
    ciphertext.extend_from_slice(&nonce);
    ciphertext.extend_from_slice(&sealed);

    Ok(EncryptedLogEntry {
        ciphertext,
        from_ip: entry.from_ip,
        timestamp: entry.timestamp,
    })
}

/// Open the envelope with the agency private key. Any corruption or key
/// mismatch fails closed with no partial plaintext.
pub fn decrypt_fields(
    ele: &EncryptedLogEntry,
    agency_private: &RsaPrivateKey,
) -> Result<ConfidentialFields, CryptoError> {
    let ct = &ele.ciphertext;
    if ct.len() < 2 {
        return Err(CryptoError::Decrypt);
    }
    let wrapped_len = u16::from_be_bytes([ct[0], ct[1]]) as usize;
    if ct.len() < 2 + wrapped_len + NONCE_LEN {
        return Err(CryptoError::Decrypt);
    }
    let wrapped = &ct[2..2 + wrapped_len];
    let nonce = &ct[2 + wrapped_len..2 + wrapped_len + NONCE_LEN];
    let sealed = &ct[2 + wrapped_len + NONCE_LEN..];

    let sym_key = agency_private
        .decrypt(Oaep::new::<Sha256>(), wrapped)
        .map_err(|_| CryptoError::Decrypt)?;
    if sym_key.len() != SYM_KEY_LEN {
        return Err(CryptoError::Decrypt);
    }

    let cipher = Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(&sym_key));
    let plain = cipher
        .decrypt(Nonce::from_slice(nonce), sealed)
        .map_err(|_| CryptoError::Decrypt)?;
    parse_confidential(&plain)
}

/// Provider signature over `payload`: PKCS#1 v1.5 over SHA-256(payload).
pub fn sign(payload: &[u8], provider_private: &RsaPrivateKey) -> Result<Vec<u8>, CryptoError> {
    let digest = hash(payload);
    provider_private
        .sign(Pkcs1v15Sign::new::<Sha256>(), digest.as_bytes())
        .map_err(|e| CryptoError::Sign(e.to_string()))
}

/// True iff `signature` is valid for `payload` under the provider key.
/// Malformed signature bytes return false rather than an error so
/// verification pipelines never abort on adversarial input.
pub fn verify_signature(payload: &[u8], signature: &[u8], provider_public: &RsaPublicKey) -> bool {
    let digest = hash(payload);
    provider_public
        .verify(Pkcs1v15Sign::new::<Sha256>(), digest.as_bytes(), signature)
        .is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::DateTime;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::sync::OnceLock;

    pub(crate) fn test_keys() -> &'static KeyMaterial {
        static KEYS: OnceLock<KeyMaterial> = OnceLock::new();
        KEYS.get_or_init(|| KeyMaterial::generate(DEFAULT_KEY_BITS).unwrap())
    }

    fn sample_entry() -> LogEntry {
        LogEntry {
            from_ip: "11.1.0.5".parse().unwrap(),
            to_ip: "74.125.130.106".parse().unwrap(),
            timestamp: DateTime::from_timestamp_micros(1_353_332_623_222_391).unwrap(),
            port: 80,
            user_id: "tenant-42".into(),
        }
    }

    #[test]
    fn round_trip_recovers_confidential_triple() {
        let keys = test_keys();
        let entry = sample_entry();
        let ele = encrypt_fields(&entry, &keys.agency_public).unwrap();
        let fields = decrypt_fields(&ele, &keys.agency_private).unwrap();
        assert_eq!(fields.to_ip, entry.to_ip);
        assert_eq!(fields.port, 80);
        assert_eq!(fields.user_id, "tenant-42");
    }

    #[test]
    fn plaintext_fields_survive_encryption() {
        let keys = test_keys();
        let entry = sample_entry();
        let ele = encrypt_fields(&entry, &keys.agency_public).unwrap();
        assert_eq!(ele.from_ip, "11.1.0.5".parse::<Ipv4Addr>().unwrap());
        assert_eq!(ele.timestamp, entry.timestamp);
    }

    #[test]
    fn encryption_is_randomized() {
        let keys = test_keys();
        let entry = sample_entry();
        let a = encrypt_fields(&entry, &keys.agency_public).unwrap();
        let b = encrypt_fields(&entry, &keys.agency_public).unwrap();
        assert_ne!(a.ciphertext, b.ciphertext);
    }

    #[test]
    fn flipped_ciphertext_byte_fails_closed() {
        let keys = test_keys();
        let mut ele = encrypt_fields(&sample_entry(), &keys.agency_public).unwrap();
        let last = ele.ciphertext.len() - 1;
        ele.ciphertext[last] ^= 0x01;
        assert!(decrypt_fields(&ele, &keys.agency_private).is_err());
    }

    #[test]
    fn wrong_private_key_fails_closed() {
        let keys = test_keys();
        let other = KeyMaterial::generate(DEFAULT_KEY_BITS).unwrap();
        let ele = encrypt_fields(&sample_entry(), &keys.agency_public).unwrap();
        assert!(decrypt_fields(&ele, &other.agency_private).is_err());
    }

    #[test]
    fn signature_round_trip_and_tamper() {
        let keys = test_keys();
        let payload = b"accumulator payload bytes";
        let sig = sign(payload, &keys.provider_private).unwrap();
        assert!(verify_signature(payload, &sig, &keys.provider_public));

        let mut tampered = payload.to_vec();
        tampered[0] ^= 0xff;
        assert!(!verify_signature(&tampered, &sig, &keys.provider_public));

        let truncated = &sig[..sig.len() - 1];
        assert!(!verify_signature(payload, truncated, &keys.provider_public));

        let other = KeyMaterial::generate(DEFAULT_KEY_BITS).unwrap();
        assert!(!verify_signature(payload, &sig, &other.provider_public));
    }

    #[test]
    fn random_blobs_never_verify() {
        let keys = test_keys();
        let mut rng = StdRng::seed_from_u64(7);
        let payload = b"fixed payload";
        for _ in 0..10_000 {
            let mut sig = vec![0u8; 256];
            rng.fill(&mut sig[..]);
            assert!(!verify_signature(payload, &sig, &keys.provider_public));
        }
    }

    #[test]
    fn ciphertext_has_no_plaintext_leak_and_uniform_bits() {
        let keys = test_keys();
        let entry = sample_entry();
        let mut pool = Vec::new();
        for _ in 0..16 {
            pool.extend(
                encrypt_fields(&entry, &keys.agency_public)
                    .unwrap()
                    .ciphertext,
            );
        }
        let needle_ip = entry.to_ip.to_string().into_bytes();
        let needle_user = entry.user_id.clone().into_bytes();
        assert!(!contains_subslice(&pool, &needle_ip));
        assert!(!contains_subslice(&pool, &needle_user));

        let ones: u64 = pool.iter().map(|b| b.count_ones() as u64).sum();
        let frac = ones as f64 / (pool.len() as f64 * 8.0);
        assert!(
            (0.45..=0.55).contains(&frac),
            "bit fraction {frac} outside uniformity band"
        );
    }

    fn contains_subslice(haystack: &[u8], needle: &[u8]) -> bool {
        haystack.windows(needle.len()).any(|w| w == needle)
    }

    #[test]
    fn key_files_round_trip_with_headers() {
        let dir = tempfile::tempdir().unwrap();
        let keys = test_keys();
        keys.save(dir.path(), false).unwrap();
        assert!(keys.save(dir.path(), false).is_err());
        keys.save(dir.path(), true).unwrap();

        let text = fs::read_to_string(dir.path().join(PROVIDER_PUBLIC_FILE)).unwrap();
        assert!(text.starts_with("# seclaas provider key"));

        let loaded = KeyMaterial::load(dir.path()).unwrap();
        loaded.self_test().unwrap();
        assert_eq!(loaded.provider_public, keys.provider_public);
    }

    #[test]
    fn randomized_trials_round_trip() {
        let keys = test_keys();
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..1000 {
            let entry = LogEntry {
                from_ip: Ipv4Addr::from(rng.gen::<u32>()),
                to_ip: Ipv4Addr::from(rng.gen::<u32>()),
                timestamp: DateTime::from_timestamp_micros(
                    rng.gen_range(0..=4_000_000_000_000_000),
                )
                .unwrap(),
                port: rng.gen(),
                user_id: format!("user-{}", rng.gen::<u32>()),
            };
            let ele = encrypt_fields(&entry, &keys.agency_public).unwrap();
            let fields = decrypt_fields(&ele, &keys.agency_private).unwrap();
            assert_eq!(
                (fields.to_ip, fields.port, fields.user_id),
                (entry.to_ip, entry.port, entry.user_id)
            );
        }
    }
}

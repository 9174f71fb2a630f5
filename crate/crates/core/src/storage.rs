//! File-backed log store, proof store, and published feed.
//!
//! Layout under the data root:
//!
//! ```text
//! logs/<ip>/<YYYY-MM-DD>.seg     length-prefixed, CRC-framed records
//! proofs/<ip>/<YYYY-MM-DD>.json  accumulator state, witnesses, seal
//! feed/ppl.jsonl                 append-only published proofs, one per line
//! feed/provider_pub.key          provider verifying key (armored)
//! accumulator.json               backend parameters for this root
//! ```
//!
//! Segment frames are `u32 length || record bytes || u32 CRC-32`, after an
//! 8-byte file header. A torn tail (partial frame, or a bad checksum on the
//! final frame) is detected and truncated on recovery; corruption anywhere
//! earlier is a hard error. Proof documents are replaced atomically via a
//! temp file and rename, and the feed only ever grows.
//!
//! Every physical write passes a checkpoint first (see [`Stores::set_write_hook`]);
//! crash-consistency tests inject failures there to cut the process off at
//! any boundary.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accumulator::{AccumulatorConfig, AccumulatorPayload};
use crate::encode::{decode_chained_record, CanonicalEncode};
use crate::model::{ChainId, ChainedRecord, MembershipWitness, ProofOfPastLog};

const SEGMENT_MAGIC: &[u8; 8] = b"SLSEG\x01\x00\x00";

/// Checkpoint callback invoked before each physical write with a boundary
/// label such as `"segment:payload"` or `"proof:rename"`. Returning an
/// error stands in for the process dying at that instant. Production use
/// leaves this unset.
pub type WriteHook = Box<dyn FnMut(&str) -> std::io::Result<()> + Send>;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} corrupt at offset {offset}: {reason}")]
    Corrupt {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
    #[error("{path}: {reason}")]
    BadDocument { path: PathBuf, reason: String },
    #[error("a proof for {0} is already published")]
    DuplicatePublish(ChainId),
    #[error("data root {0} holds {1} accumulator state, requested {2}")]
    BackendMismatch(PathBuf, String, String),
}

fn io_err(path: &Path, source: std::io::Error) -> StorageError {
    StorageError::Io {
        path: path.into(),
        source,
    }
}

/// Validated-tail report produced when recovery drops a torn final frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecoveryNote {
    pub path: PathBuf,
    pub valid_records: u64,
    pub dropped_bytes: u64,
}

/// Proof-store document for one (ip, day): the running accumulator payload,
/// how many records it has absorbed, and, once sealed, the witnesses and
/// the published proof.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofEntry {
    pub ip: Ipv4Addr,
    pub day: NaiveDate,
    pub record_count: u64,
    pub sealed: bool,
    pub payload: AccumulatorPayload,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witnesses: Option<Vec<MembershipWitness>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ppl: Option<ProofOfPastLog>,
}

impl ProofEntry {
    pub fn chain(&self) -> ChainId {
        ChainId::new(self.ip, self.day)
    }
}

struct SegmentState {
    file: File,
    len: u64,
    count: u64,
}

/// All three stores rooted at one directory. Shareable across threads; the
/// pipeline guarantees a single writer per chain, feed appends serialize
/// internally, readers always re-read and re-validate whole files.
pub struct Stores {
    root: PathBuf,
    segments: Mutex<HashMap<ChainId, SegmentState>>,
    feed_lock: Mutex<()>,
    hook: Mutex<Option<WriteHook>>,
}

impl Stores {
    pub fn open(root: impl Into<PathBuf>) -> Self {
        Stores {
            root: root.into(),
            segments: Mutex::new(HashMap::new()),
            feed_lock: Mutex::new(()),
            hook: Mutex::new(None),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Install a crash-injection checkpoint. Test seam; see [`WriteHook`].
    pub fn set_write_hook(&self, hook: Option<WriteHook>) {
        *self.hook.lock().unwrap() = hook;
    }

    fn checkpoint(&self, label: &str, path: &Path) -> Result<(), StorageError> {
        if let Some(hook) = self.hook.lock().unwrap().as_mut() {
            hook(label).map_err(|e| io_err(path, e))?;
        }
        Ok(())
    }

    pub fn segment_path(&self, chain: ChainId) -> PathBuf {
        self.root
            .join("logs")
            .join(chain.ip.to_string())
            .join(format!("{}.seg", chain.day))
    }

    pub fn proof_path(&self, chain: ChainId) -> PathBuf {
        self.root
            .join("proofs")
            .join(chain.ip.to_string())
            .join(format!("{}.json", chain.day))
    }

    pub fn feed_path(&self) -> PathBuf {
        self.root.join("feed").join("ppl.jsonl")
    }

    pub fn provider_key_path(&self) -> PathBuf {
        self.root.join("feed").join("provider_pub.key")
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("accumulator.json")
    }

    // ---- log segments -----------------------------------------------------

    /// Append one record to its chain's segment. The segment is scanned and
    /// recovered on first touch; later appends reuse the validated handle.
    pub fn append_record(
        &self,
        chain: ChainId,
        record: &ChainedRecord,
    ) -> Result<(), StorageError> {
        let path = self.segment_path(chain);
        let mut segments = self.segments.lock().unwrap();
        let state = match segments.entry(chain) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => e.insert(self.open_segment(&path)?),
        };

        let payload = record.encode();
        let crc = crc32fast::hash(&payload);

        state
            .file
            .seek(SeekFrom::Start(state.len))
            .map_err(|e| io_err(&path, e))?;
        self.checkpoint("segment:len", &path)?;
        state
            .file
            .write_all(&(payload.len() as u32).to_be_bytes())
            .map_err(|e| io_err(&path, e))?;
        self.checkpoint("segment:payload", &path)?;
        state
            .file
            .write_all(&payload)
            .map_err(|e| io_err(&path, e))?;
        self.checkpoint("segment:crc", &path)?;
        state
            .file
            .write_all(&crc.to_be_bytes())
            .map_err(|e| io_err(&path, e))?;

        state.len += 4 + payload.len() as u64 + 4;
        state.count += 1;
        Ok(())
    }

    fn open_segment(&self, path: &Path) -> Result<SegmentState, StorageError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
        }
        let fresh = !path.exists();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        if fresh {
            self.checkpoint("segment:header", path)?;
            file.write_all(SEGMENT_MAGIC).map_err(|e| io_err(path, e))?;
            return Ok(SegmentState {
                file,
                len: SEGMENT_MAGIC.len() as u64,
                count: 0,
            });
        }
        let scan = scan_segment(&mut file, path)?;
        // A torn tail is dead weight; the next frame starts at the validated
        // length whether or not we shrink the file first.
        if scan.valid_len < scan.file_len {
            file.set_len(scan.valid_len).map_err(|e| io_err(path, e))?;
        }
        if scan.valid_len == 0 {
            // The crash hit mid-header; rewrite it before any frame lands.
            file.seek(SeekFrom::Start(0)).map_err(|e| io_err(path, e))?;
            self.checkpoint("segment:header", path)?;
            file.write_all(SEGMENT_MAGIC).map_err(|e| io_err(path, e))?;
            return Ok(SegmentState {
                file,
                len: SEGMENT_MAGIC.len() as u64,
                count: 0,
            });
        }
        Ok(SegmentState {
            file,
            len: scan.valid_len,
            count: scan.records.len() as u64,
        })
    }

    /// Snapshot read of a chain's records in write order. Unknown chains
    /// read as empty; a torn tail is dropped and reported in the note.
    pub fn read_records(
        &self,
        chain: ChainId,
    ) -> Result<(Vec<ChainedRecord>, Option<RecoveryNote>), StorageError> {
        let path = self.segment_path(chain);
        if !path.exists() {
            return Ok((Vec::new(), None));
        }
        let mut file = File::open(&path).map_err(|e| io_err(&path, e))?;
        let scan = scan_segment(&mut file, &path)?;
        let note = (scan.valid_len < scan.file_len).then(|| RecoveryNote {
            path: path.clone(),
            valid_records: scan.records.len() as u64,
            dropped_bytes: scan.file_len - scan.valid_len,
        });
        Ok((scan.records, note))
    }

    // ---- proof store ------------------------------------------------------

    pub fn load_proof(&self, chain: ChainId) -> Result<Option<ProofEntry>, StorageError> {
        let path = self.proof_path(chain);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let entry: ProofEntry =
            serde_json::from_str(&text).map_err(|e| StorageError::BadDocument {
                path: path.clone(),
                reason: e.to_string(),
            })?;
        entry
            .payload
            .validate()
            .map_err(|e| StorageError::BadDocument {
                path: path.clone(),
                reason: e.to_string(),
            })?;
        Ok(Some(entry))
    }

    pub fn store_proof(&self, entry: &ProofEntry) -> Result<(), StorageError> {
        let path = self.proof_path(entry.chain());
        self.write_json_atomic(&path, entry, "proof")
    }

    // ---- accumulator configuration ----------------------------------------

    pub fn load_accumulator_config(&self) -> Result<Option<AccumulatorConfig>, StorageError> {
        let path = self.config_path();
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| StorageError::BadDocument {
                path,
                reason: e.to_string(),
            })
    }

    pub fn store_accumulator_config(&self, config: &AccumulatorConfig) -> Result<(), StorageError> {
        let path = self.config_path();
        self.write_json_atomic(&path, config, "config")
    }

    // ---- published feed ----------------------------------------------------

    /// Append a proof to the public feed. One proof per (ip, day), ever;
    /// the provider key is materialized next to the feed on first publish.
    pub fn publish_ppl(
        &self,
        ppl: &ProofOfPastLog,
        provider_key_pem: &str,
    ) -> Result<(), StorageError> {
        let _guard = self.feed_lock.lock().unwrap();
        let path = self.feed_path();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(&path, e))?;
        }

        let existing = self.read_feed_locked(&path)?;
        if existing.iter().any(|p| p.ip == ppl.ip && p.day == ppl.day) {
            return Err(StorageError::DuplicatePublish(ChainId::new(
                ppl.ip, ppl.day,
            )));
        }

        let key_path = self.provider_key_path();
        if !key_path.exists() {
            self.checkpoint("feed:key", &key_path)?;
            fs::write(&key_path, provider_key_pem).map_err(|e| io_err(&key_path, e))?;
        }

        let mut line = serde_json::to_string(ppl).map_err(|e| StorageError::BadDocument {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        line.push('\n');

        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .write(true)
            .truncate(false)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        let valid_len = feed_valid_len(&mut file, &path)?;
        file.set_len(valid_len).map_err(|e| io_err(&path, e))?;
        file.seek(SeekFrom::Start(valid_len))
            .map_err(|e| io_err(&path, e))?;
        self.checkpoint("feed:append", &path)?;
        file.write_all(line.as_bytes())
            .map_err(|e| io_err(&path, e))?;
        Ok(())
    }

    /// All published proofs, in publication order. A torn final line (a
    /// crash mid-publish) is ignored; damage anywhere earlier is an error.
    pub fn read_feed(&self) -> Result<Vec<ProofOfPastLog>, StorageError> {
        let _guard = self.feed_lock.lock().unwrap();
        self.read_feed_locked(&self.feed_path())
    }

    fn read_feed_locked(&self, path: &Path) -> Result<Vec<ProofOfPastLog>, StorageError> {
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut out = Vec::new();
        let mut lines = text.split_inclusive('\n').peekable();
        while let Some(line) = lines.next() {
            let is_last = lines.peek().is_none();
            let complete = line.ends_with('\n');
            match serde_json::from_str::<ProofOfPastLog>(line.trim_end()) {
                Ok(ppl) if complete => out.push(ppl),
                Ok(_) | Err(_) if is_last && !complete => break, // torn tail
                Ok(ppl) => out.push(ppl),
                Err(e) => {
                    return Err(StorageError::BadDocument {
                        path: path.into(),
                        reason: format!("feed line {}: {e}", out.len() + 1),
                    })
                }
            }
        }
        Ok(out)
    }

    pub fn feed_entry(&self, chain: ChainId) -> Result<Option<ProofOfPastLog>, StorageError> {
        Ok(self
            .read_feed()?
            .into_iter()
            .find(|p| p.ip == chain.ip && p.day == chain.day))
    }

    pub fn provider_key_pem(&self) -> Result<String, StorageError> {
        let path = self.provider_key_path();
        fs::read_to_string(&path).map_err(|e| io_err(&path, e))
    }

    // ---- helpers -----------------------------------------------------------

    fn write_json_atomic<T: Serialize>(
        &self,
        path: &Path,
        value: &T,
        label: &str,
    ) -> Result<(), StorageError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
        }
        let json = serde_json::to_string(value).map_err(|e| StorageError::BadDocument {
            path: path.into(),
            reason: e.to_string(),
        })?;
        let tmp = path.with_extension("json.tmp");
        self.checkpoint(&format!("{label}:tmp"), path)?;
        fs::write(&tmp, json.as_bytes()).map_err(|e| io_err(&tmp, e))?;
        self.checkpoint(&format!("{label}:rename"), path)?;
        fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
        Ok(())
    }
}

struct SegmentScan {
    records: Vec<ChainedRecord>,
    valid_len: u64,
    file_len: u64,
}

/// Walk a segment's frames, validating length, checksum, and decodability.
/// Returns the records of the valid prefix and how far it extends.
fn scan_segment(file: &mut File, path: &Path) -> Result<SegmentScan, StorageError> {
    let mut buf = Vec::new();
    file.seek(SeekFrom::Start(0)).map_err(|e| io_err(path, e))?;
    file.read_to_end(&mut buf).map_err(|e| io_err(path, e))?;
    let file_len = buf.len() as u64;

    if buf.len() < SEGMENT_MAGIC.len() || &buf[..SEGMENT_MAGIC.len()] != SEGMENT_MAGIC {
        // A file shorter than its header can only be a torn creation.
        if SEGMENT_MAGIC.starts_with(&buf) {
            return Ok(SegmentScan {
                records: Vec::new(),
                valid_len: 0,
                file_len,
            });
        }
        return Err(StorageError::Corrupt {
            path: path.into(),
            offset: 0,
            reason: "bad segment magic".into(),
        });
    }

    let mut records = Vec::new();
    let mut pos = SEGMENT_MAGIC.len();
    let mut valid_len = pos as u64;
    while pos < buf.len() {
        let frame_start = pos;
        let whole_frame = (|| {
            if pos + 4 > buf.len() {
                return None;
            }
            let len = u32::from_be_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
            let end = pos.checked_add(4)?.checked_add(len)?.checked_add(4)?;
            if end > buf.len() {
                return None;
            }
            let payload = &buf[pos + 4..pos + 4 + len];
            let stored_crc = u32::from_be_bytes(buf[end - 4..end].try_into().unwrap());
            if crc32fast::hash(payload) != stored_crc {
                return None;
            }
            Some((payload, end))
        })();

        match whole_frame {
            Some((payload, end)) => {
                let record = decode_chained_record(payload).map_err(|e| StorageError::Corrupt {
                    path: path.into(),
                    offset: frame_start as u64,
                    reason: format!("framed bytes do not decode: {e}"),
                })?;
                records.push(record);
                pos = end;
                valid_len = pos as u64;
            }
            None => {
                // Torn or checksum-broken frame. Legitimate only at the tail:
                // if yet another parseable frame follows, the file was
                // corrupted in place, not cut short.
                if has_frame_after(&buf, frame_start) {
                    return Err(StorageError::Corrupt {
                        path: path.into(),
                        offset: frame_start as u64,
                        reason: "damaged frame followed by valid data".into(),
                    });
                }
                break;
            }
        }
    }

    Ok(SegmentScan {
        records,
        valid_len,
        file_len,
    })
}

/// Is there any offset past `from` where a checksum-valid frame begins?
fn has_frame_after(buf: &[u8], from: usize) -> bool {
    let mut start = from + 1;
    while start + 8 <= buf.len() {
        let len = u32::from_be_bytes(buf[start..start + 4].try_into().unwrap()) as usize;
        if let Some(end) = start
            .checked_add(4)
            .and_then(|v| v.checked_add(len))
            .and_then(|v| v.checked_add(4))
        {
            if end <= buf.len() {
                let payload = &buf[start + 4..start + 4 + len];
                let crc = u32::from_be_bytes(buf[end - 4..end].try_into().unwrap());
                if crc32fast::hash(payload) == crc && decode_chained_record(payload).is_ok() {
                    return true;
                }
            }
        }
        start += 1;
    }
    false
}

/// Byte length of the feed's newline-terminated valid prefix.
fn feed_valid_len(file: &mut File, path: &Path) -> Result<u64, StorageError> {
    let mut buf = Vec::new();
    file.seek(SeekFrom::Start(0)).map_err(|e| io_err(path, e))?;
    file.read_to_end(&mut buf).map_err(|e| io_err(path, e))?;
    match buf.iter().rposition(|&b| b == b'\n') {
        Some(last_newline) => Ok(last_newline as u64 + 1),
        None => Ok(0),
    }
}

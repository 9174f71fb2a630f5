//! Canonical byte encoding, the SHA-256 primitive, and hash-chain linking.
//!
//! Every digest, chain link, accumulator fold, and signature in the engine is
//! computed over these bytes, so the layout is normative and must never
//! change behind a version's back:
//!
//! * integers are big-endian, fixed width;
//! * IPv4 addresses are their 4 octets;
//! * timestamps are `i64` microseconds since the Unix epoch (UTC);
//! * calendar days are `u16` year, `u8` month, `u8` day;
//! * variable-length fields carry a `u32` big-endian length prefix;
//! * `f64` parameters are their IEEE-754 bit pattern as `u64`;
//! * big integers are their minimal big-endian magnitude bytes,
//!   length-prefixed;
//! * every struct starts with a one-byte type tag and encodes its fields in
//!   declaration order.
//!
//! Fixed field order plus length prefixes make the encoding injective per
//! type; the leading tag keeps distinct types from colliding.

use std::net::Ipv4Addr;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use num_bigint_dig::BigUint;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::model::{
    ChainId, ChainedRecord, Digest, EncryptedLogEntry, LogEntry, MembershipWitness, ProofOfPastLog,
    DIGEST_LEN,
};

pub const TAG_LOG_ENTRY: u8 = 0x01;
pub const TAG_ENCRYPTED_ENTRY: u8 = 0x02;
pub const TAG_CHAINED_RECORD: u8 = 0x03;
pub const TAG_BLOOM_PAYLOAD: u8 = 0x04;
pub const TAG_RSA_PAYLOAD: u8 = 0x05;
pub const TAG_PROOF_OF_PAST_LOG: u8 = 0x06;
pub const TAG_WITNESS: u8 = 0x07;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("expected type tag {expected:#04x}, found {found:#04x}")]
    WrongTag { expected: u8, found: u8 },
    #[error("trailing bytes after value")]
    TrailingBytes,
    #[error("field out of range: {0}")]
    OutOfRange(&'static str),
}

/// Types with a canonical, injective byte encoding.
pub trait CanonicalEncode {
    fn encode_into(&self, out: &mut Vec<u8>);

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }
}

pub fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

pub fn put_ip(out: &mut Vec<u8>, ip: Ipv4Addr) {
    out.extend_from_slice(&ip.octets());
}

pub fn put_timestamp(out: &mut Vec<u8>, ts: DateTime<Utc>) {
    out.extend_from_slice(&ts.timestamp_micros().to_be_bytes());
}

pub fn put_day(out: &mut Vec<u8>, day: NaiveDate) {
    out.extend_from_slice(&(day.year() as u16).to_be_bytes());
    out.push(day.month() as u8);
    out.push(day.day() as u8);
}

pub fn put_biguint(out: &mut Vec<u8>, value: &BigUint) {
    put_bytes(out, &value.to_bytes_be());
}

impl CanonicalEncode for LogEntry {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(TAG_LOG_ENTRY);
        put_ip(out, self.from_ip);
        put_ip(out, self.to_ip);
        put_timestamp(out, self.timestamp);
        out.extend_from_slice(&self.port.to_be_bytes());
        put_bytes(out, self.user_id.as_bytes());
    }
}

impl CanonicalEncode for EncryptedLogEntry {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(TAG_ENCRYPTED_ENTRY);
        put_ip(out, self.from_ip);
        put_timestamp(out, self.timestamp);
        put_bytes(out, &self.ciphertext);
    }
}

impl CanonicalEncode for ChainedRecord {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(TAG_CHAINED_RECORD);
        self.ele.encode_into(out);
        out.extend_from_slice(self.chain.as_bytes());
    }
}

impl CanonicalEncode for ProofOfPastLog {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(TAG_PROOF_OF_PAST_LOG);
        put_ip(out, self.ip);
        put_day(out, self.day);
        out.extend_from_slice(self.ae_digest.as_bytes());
        put_bytes(out, &self.signature);
        put_timestamp(out, self.published_at);
    }
}

impl CanonicalEncode for MembershipWitness {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(TAG_WITNESS);
        out.extend_from_slice(&self.record_index.to_be_bytes());
        put_biguint(out, &self.value);
    }
}

/// Cursor over canonical bytes; decoding is only needed for the types the
/// log store and export bundles persist in binary form.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.buf.len() {
            return Err(DecodeError::Truncated(self.pos));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn tag(&mut self, expected: u8) -> Result<(), DecodeError> {
        let found = self.take(1)?[0];
        if found != expected {
            return Err(DecodeError::WrongTag { expected, found });
        }
        Ok(())
    }

    pub fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = u32::from_be_bytes(self.take(4)?.try_into().unwrap()) as usize;
        self.take(len)
    }

    pub fn ip(&mut self) -> Result<Ipv4Addr, DecodeError> {
        let o = self.take(4)?;
        Ok(Ipv4Addr::new(o[0], o[1], o[2], o[3]))
    }

    pub fn timestamp(&mut self) -> Result<DateTime<Utc>, DecodeError> {
        DateTime::from_timestamp_micros(self.i64()?).ok_or(DecodeError::OutOfRange("timestamp"))
    }

    pub fn digest(&mut self) -> Result<Digest, DecodeError> {
        Ok(Digest(self.take(DIGEST_LEN)?.try_into().unwrap()))
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        if self.pos != self.buf.len() {
            return Err(DecodeError::TrailingBytes);
        }
        Ok(())
    }
}

pub fn decode_encrypted_entry(reader: &mut Reader<'_>) -> Result<EncryptedLogEntry, DecodeError> {
    reader.tag(TAG_ENCRYPTED_ENTRY)?;
    let from_ip = reader.ip()?;
    let timestamp = reader.timestamp()?;
    let ciphertext = reader.bytes()?.to_vec();
    Ok(EncryptedLogEntry {
        ciphertext,
        from_ip,
        timestamp,
    })
}

/// Decode a [`ChainedRecord`] from exactly `buf`.
pub fn decode_chained_record(buf: &[u8]) -> Result<ChainedRecord, DecodeError> {
    let mut reader = Reader::new(buf);
    reader.tag(TAG_CHAINED_RECORD)?;
    let ele = decode_encrypted_entry(&mut reader)?;
    let chain = reader.digest()?;
    reader.finish()?;
    Ok(ChainedRecord { ele, chain })
}

/// SHA-256 of `data` as a 32-byte digest.
pub fn hash(data: &[u8]) -> Digest {
    let out = Sha256::digest(data);
    Digest(out.into())
}

/// Chain seed for the first record of a (ip, day) chain. Deriving it from
/// the chain identity domain-separates chains, so a record sequence cannot
/// be spliced from one (ip, day) into another.
pub fn genesis(chain: ChainId) -> Digest {
    let mut buf = Vec::with_capacity(8);
    put_ip(&mut buf, chain.ip);
    put_day(&mut buf, chain.day);
    hash(&buf)
}

/// Next chain digest: SHA-256 over the encrypted entry's canonical bytes
/// followed by the previous link.
pub fn chain_next(ele: &EncryptedLogEntry, prev: &Digest) -> Digest {
    let mut buf = ele.encode();
    buf.extend_from_slice(prev.as_bytes());
    hash(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_entry() -> LogEntry {
        LogEntry {
            from_ip: "11.1.0.5".parse().unwrap(),
            to_ip: "74.125.130.106".parse().unwrap(),
            timestamp: DateTime::from_timestamp_micros(1_353_332_623_222_391).unwrap(),
            port: 80,
            user_id: "user-17".into(),
        }
    }

    #[test]
    fn sha256_published_vectors() {
        assert_eq!(
            hash(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hash(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn encoding_is_deterministic() {
        let e = sample_entry();
        assert_eq!(e.encode(), e.encode());
    }

    #[test]
    fn port_difference_changes_encoding() {
        let a = sample_entry();
        let mut b = sample_entry();
        b.port = 81;
        assert_ne!(a.encode(), b.encode());
    }

    #[test]
    fn encrypted_entry_round_trip() {
        let ele = EncryptedLogEntry {
            ciphertext: vec![9, 8, 7, 6, 5],
            from_ip: "11.1.0.3".parse().unwrap(),
            timestamp: DateTime::from_timestamp_micros(123_456_789).unwrap(),
        };
        let rec = ChainedRecord {
            ele,
            chain: hash(b"x"),
        };
        let decoded = decode_chained_record(&rec.encode()).unwrap();
        assert_eq!(decoded, rec);
    }

    #[test]
    fn decode_rejects_trailing_bytes() {
        let rec = ChainedRecord {
            ele: EncryptedLogEntry {
                ciphertext: vec![1],
                from_ip: "1.2.3.4".parse().unwrap(),
                timestamp: DateTime::from_timestamp_micros(0).unwrap(),
            },
            chain: hash(b"y"),
        };
        let mut bytes = rec.encode();
        bytes.push(0);
        assert_eq!(
            decode_chained_record(&bytes),
            Err(DecodeError::TrailingBytes)
        );
    }

    #[test]
    fn genesis_separates_chains() {
        let day = NaiveDate::from_ymd_opt(2012, 11, 19).unwrap();
        let a = genesis(ChainId::new("11.1.0.3".parse().unwrap(), day));
        let b = genesis(ChainId::new("11.1.0.5".parse().unwrap(), day));
        let c = genesis(ChainId::new(
            "11.1.0.3".parse().unwrap(),
            NaiveDate::from_ymd_opt(2012, 11, 20).unwrap(),
        ));
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn chain_links_replay_by_hand() {
        let chain_id = ChainId::new(
            "11.1.0.5".parse().unwrap(),
            NaiveDate::from_ymd_opt(2012, 11, 19).unwrap(),
        );
        let ele = EncryptedLogEntry {
            ciphertext: vec![1, 2, 3],
            from_ip: chain_id.ip,
            timestamp: DateTime::from_timestamp_micros(1_353_332_623_222_391).unwrap(),
        };
        let g = genesis(chain_id);
        let link = chain_next(&ele, &g);

        let mut manual = ele.encode();
        manual.extend_from_slice(g.as_bytes());
        assert_eq!(link, hash(&manual));
        assert_eq!(link.as_bytes().len(), 32);
    }

    #[test]
    fn fixture_record_digest_is_pinned() {
        // Golden value: any change to the canonical layout breaks stored
        // chains and published proofs, so it must fail loudly here first.
        let record = ChainedRecord {
            ele: EncryptedLogEntry {
                ciphertext: (0u8..32).collect(),
                from_ip: "11.1.0.5".parse().unwrap(),
                timestamp: DateTime::from_timestamp_micros(1_353_332_623_222_391).unwrap(),
            },
            chain: Digest([0x42; 32]),
        };
        assert_eq!(record.encode().len(), 82);
        assert_eq!(
            hash(&record.encode()).to_hex(),
            "6ec59254b1a715fb870fcac043423119d365d0908cd4d3253c861f13d7ecfade"
        );
    }

    #[test]
    fn injectivity_over_ten_thousand_random_pairs() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(2012);
        let random_entry = |rng: &mut StdRng| LogEntry {
            from_ip: Ipv4Addr::from(rng.gen::<u32>()),
            to_ip: Ipv4Addr::from(rng.gen::<u32>()),
            timestamp: DateTime::from_timestamp_micros(rng.gen_range(0..4_000_000_000_000_000))
                .unwrap(),
            port: rng.gen(),
            user_id: format!("u{}", rng.gen::<u64>()),
        };
        for _ in 0..10_000 {
            let a = random_entry(&mut rng);
            let b = random_entry(&mut rng);
            if a != b {
                assert_ne!(a.encode(), b.encode());
            }
            let ra = ChainedRecord {
                ele: EncryptedLogEntry {
                    ciphertext: a.encode(),
                    from_ip: a.from_ip,
                    timestamp: a.timestamp,
                },
                chain: hash(&a.encode()),
            };
            let rb = ChainedRecord {
                ele: EncryptedLogEntry {
                    ciphertext: b.encode(),
                    from_ip: b.from_ip,
                    timestamp: b.timestamp,
                },
                chain: hash(&b.encode()),
            };
            if ra != rb {
                assert_ne!(ra.encode(), rb.encode());
            }
        }
    }

    prop_compose! {
        fn arb_entry()(
            from in any::<u32>(),
            to in any::<u32>(),
            micros in 0i64..4_102_444_800_000_000,
            port in any::<u16>(),
            user in "[a-z0-9-]{1,20}",
        ) -> LogEntry {
            LogEntry {
                from_ip: Ipv4Addr::from(from),
                to_ip: Ipv4Addr::from(to),
                timestamp: DateTime::from_timestamp_micros(micros).unwrap(),
                port,
                user_id: user,
            }
        }
    }

    proptest! {
        #[test]
        fn distinct_entries_encode_distinctly(a in arb_entry(), b in arb_entry()) {
            prop_assume!(a != b);
            prop_assert_ne!(a.encode(), b.encode());
        }

        #[test]
        fn encrypted_entry_encode_decode_identity(
            entry in arb_entry(),
            ct in proptest::collection::vec(any::<u8>(), 0..256),
        ) {
            let rec = ChainedRecord {
                ele: EncryptedLogEntry {
                    ciphertext: ct,
                    from_ip: entry.from_ip,
                    timestamp: entry.timestamp,
                },
                chain: hash(&entry.encode()),
            };
            prop_assert_eq!(decode_chained_record(&rec.encode()).unwrap(), rec);
        }
    }
}

//! Snort fast-alert parsing and public-IP → user resolution.
//!
//! Input files carry one event header per line in the form
//!
//! ```text
//! MM/DD-HH:MM:SS.ffffff ... src_ip:src_port -> dst_ip:dst_port ...
//! ```
//!
//! Alert lines omit the year, so every input file is ingested with a base
//! year from configuration. Continuation lines (TCP flags, TTL, and other
//! packet detail) are not headers and are skipped by callers via
//! [`classify_line`].

use std::fmt;
use std::fs;
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use thiserror::Error;

use crate::model::LogEntry;

/// Sentinel user recorded when no lease covers an event; dropping the
/// record instead would discard evidence.
pub const UNKNOWN_USER: &str = "unknown";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("parse error at column {column}: {reason} in line {line:?}")]
    Parse {
        line: String,
        column: usize,
        reason: String,
    },
    #[error("mapping store line {line}: {reason}")]
    MappingStore { line: usize, reason: String },
    #[error("no user mapped for {ip} at {at}")]
    UnresolvedUser { ip: Ipv4Addr, at: DateTime<Utc> },
}

fn parse_err(line: &str, column: usize, reason: impl Into<String>) -> IngestError {
    IngestError::Parse {
        line: line.to_string(),
        column,
        reason: reason.into(),
    }
}

/// A parsed alert header, before user resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAlert {
    pub from_ip: Ipv4Addr,
    pub from_port: u16,
    pub to_ip: Ipv4Addr,
    pub to_port: u16,
    pub timestamp: DateTime<Utc>,
}

impl ParsedAlert {
    /// Complete the alert into a [`LogEntry`] once the user is known. The
    /// destination port is the one recorded.
    pub fn into_entry(self, user_id: String) -> LogEntry {
        LogEntry {
            from_ip: self.from_ip,
            to_ip: self.to_ip,
            timestamp: self.timestamp,
            port: self.to_port,
            user_id,
        }
    }

    /// Render back into header form; parsing the result reproduces `self`.
    pub fn format_header(&self) -> String {
        format!(
            "{} {}:{} -> {}:{}",
            self.timestamp.format("%m/%d-%H:%M:%S%.6f"),
            self.from_ip,
            self.from_port,
            self.to_ip,
            self.to_port,
        )
    }
}

/// How the ingest loop should treat a raw input line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineClass {
    /// Starts with an MM/DD- timestamp: a header that must parse.
    Header,
    /// Packet-detail continuation, blank line, or other non-header text.
    Skip,
}

/// Headers are exactly the lines that open with a `dd/dd-` timestamp.
pub fn classify_line(line: &str) -> LineClass {
    let b = line.as_bytes();
    if b.len() >= 6
        && b[0].is_ascii_digit()
        && b[1].is_ascii_digit()
        && b[2] == b'/'
        && b[3].is_ascii_digit()
        && b[4].is_ascii_digit()
        && b[5] == b'-'
    {
        LineClass::Header
    } else {
        LineClass::Skip
    }
}

/// Parse one alert header line. `base_year` supplies the year the format
/// omits.
pub fn parse_snort_line(line: &str, base_year: i32) -> Result<ParsedAlert, IngestError> {
    let trimmed = line.trim_end();
    let mut fields = Vec::new();
    let mut offset = 0usize;
    for token in trimmed.split_whitespace() {
        // Track byte offsets so errors can point at the offending column.
        let col = trimmed[offset..]
            .find(token)
            .map(|p| offset + p)
            .unwrap_or(offset);
        fields.push((col, token));
        offset = col + token.len();
    }

    if fields.is_empty() {
        return Err(parse_err(line, 0, "empty line"));
    }

    let (ts_col, ts_token) = fields[0];
    let timestamp =
        parse_timestamp(ts_token, base_year).map_err(|reason| parse_err(line, ts_col, reason))?;

    let arrow = fields
        .iter()
        .position(|(_, t)| *t == "->")
        .ok_or_else(|| parse_err(line, trimmed.len(), "missing \"->\" between endpoints"))?;
    if arrow == 0 || arrow + 1 >= fields.len() {
        return Err(parse_err(
            line,
            fields[arrow].0,
            "\"->\" lacks an endpoint on one side",
        ));
    }

    let (src_col, src) = fields[arrow - 1];
    let (dst_col, dst) = fields[arrow + 1];
    let (from_ip, from_port) =
        parse_endpoint(src).map_err(|reason| parse_err(line, src_col, reason))?;
    let (to_ip, to_port) =
        parse_endpoint(dst).map_err(|reason| parse_err(line, dst_col, reason))?;

    Ok(ParsedAlert {
        from_ip,
        from_port,
        to_ip,
        to_port,
        timestamp,
    })
}

fn parse_endpoint(token: &str) -> Result<(Ipv4Addr, u16), String> {
    let (ip_part, port_part) = token
        .rsplit_once(':')
        .ok_or_else(|| format!("endpoint {token:?} is not ip:port"))?;
    let ip = Ipv4Addr::from_str(ip_part).map_err(|_| format!("bad IPv4 address {ip_part:?}"))?;
    let port = u16::from_str(port_part).map_err(|_| format!("bad port {port_part:?}"))?;
    Ok((ip, port))
}

fn parse_timestamp(token: &str, base_year: i32) -> Result<DateTime<Utc>, String> {
    // MM/DD-HH:MM:SS.ffffff
    let (date_part, time_part) = token
        .split_once('-')
        .ok_or_else(|| format!("bad timestamp {token:?}"))?;
    let (month, day) = date_part
        .split_once('/')
        .ok_or_else(|| format!("bad date {date_part:?}"))?;
    let month: u32 = month.parse().map_err(|_| format!("bad month {month:?}"))?;
    let day: u32 = day.parse().map_err(|_| format!("bad day {day:?}"))?;

    let mut it = time_part.split(':');
    let (h, m, s) = match (it.next(), it.next(), it.next(), it.next()) {
        (Some(h), Some(m), Some(s), None) => (h, m, s),
        _ => return Err(format!("bad time {time_part:?}")),
    };
    let hour: u32 = h.parse().map_err(|_| format!("bad hour {h:?}"))?;
    let minute: u32 = m.parse().map_err(|_| format!("bad minute {m:?}"))?;
    let (sec_str, micros) = match s.split_once('.') {
        Some((sec, frac)) => {
            if frac.len() > 6 || frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(format!("bad fractional seconds {frac:?}"));
            }
            let scale = 10u32.pow(6 - frac.len() as u32);
            let value: u32 = frac.parse().map_err(|_| format!("bad fraction {frac:?}"))?;
            (sec, value * scale)
        }
        None => (s, 0),
    };
    let second: u32 = sec_str
        .parse()
        .map_err(|_| format!("bad second {sec_str:?}"))?;

    let date = NaiveDate::from_ymd_opt(base_year, month, day)
        .ok_or_else(|| format!("no such date {month:02}/{day:02} in {base_year}"))?;
    let naive = date
        .and_hms_micro_opt(hour, minute, second, micros)
        .ok_or_else(|| format!("invalid time {time_part:?}"))?;
    Ok(Utc.from_utc_datetime(&naive))
}

/// One floating-IP lease: while it holds, traffic from either the floating
/// or the fixed address belongs to `user_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpUserMapping {
    pub floating_ip: Ipv4Addr,
    pub fixed_ip: Ipv4Addr,
    pub instance_id: String,
    pub user_id: String,
    pub valid_from: DateTime<Utc>,
    pub valid_to: DateTime<Utc>,
}

impl IpUserMapping {
    fn covers(&self, ip: Ipv4Addr, at: DateTime<Utc>) -> bool {
        (self.floating_ip == ip || self.fixed_ip == ip)
            && self.valid_from <= at
            && at < self.valid_to
    }
}

/// Read-only lease table loaded from a delimited text file with columns
/// `floating_ip  fixed_ip  instance_id  user_id  valid_from  valid_to`
/// (tab-separated, RFC 3339 timestamps, `#` comments allowed).
#[derive(Debug, Clone, Default)]
pub struct MappingStore {
    leases: Vec<IpUserMapping>,
}

impl fmt::Display for MappingStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} leases", self.leases.len())
    }
}

impl MappingStore {
    pub fn from_leases(leases: Vec<IpUserMapping>) -> Result<Self, IngestError> {
        let store = MappingStore { leases };
        store.validate()?;
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|e| IngestError::MappingStore {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let mut leases = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() != 6 {
                return Err(IngestError::MappingStore {
                    line: line_no,
                    reason: format!("expected 6 tab-separated columns, found {}", cols.len()),
                });
            }
            let field = |i: usize, what: &str, err: String| IngestError::MappingStore {
                line: line_no,
                reason: format!("column {} ({what}): {err}", i + 1),
            };
            let floating_ip =
                Ipv4Addr::from_str(cols[0]).map_err(|e| field(0, "floating_ip", e.to_string()))?;
            let fixed_ip =
                Ipv4Addr::from_str(cols[1]).map_err(|e| field(1, "fixed_ip", e.to_string()))?;
            let valid_from = DateTime::parse_from_rfc3339(cols[4])
                .map_err(|e| field(4, "valid_from", e.to_string()))?
                .with_timezone(&Utc);
            let valid_to = DateTime::parse_from_rfc3339(cols[5])
                .map_err(|e| field(5, "valid_to", e.to_string()))?
                .with_timezone(&Utc);
            leases.push(IpUserMapping {
                floating_ip,
                fixed_ip,
                instance_id: cols[2].to_string(),
                user_id: cols[3].to_string(),
                valid_from,
                valid_to,
            });
        }
        Self::from_leases(leases)
    }

    /// Lease-window invariants: windows are non-empty and, per floating or
    /// fixed address, pairwise disjoint: any instant maps to at most one
    /// user.
    fn validate(&self) -> Result<(), IngestError> {
        for (i, lease) in self.leases.iter().enumerate() {
            if lease.valid_from >= lease.valid_to {
                return Err(IngestError::MappingStore {
                    line: i + 1,
                    reason: format!(
                        "empty lease window for {} ({} >= {})",
                        lease.floating_ip, lease.valid_from, lease.valid_to
                    ),
                });
            }
        }
        for (i, a) in self.leases.iter().enumerate() {
            for b in self.leases.iter().skip(i + 1) {
                let shares_ip = a.floating_ip == b.floating_ip
                    || a.fixed_ip == b.fixed_ip
                    || a.floating_ip == b.fixed_ip
                    || a.fixed_ip == b.floating_ip;
                let overlaps = a.valid_from < b.valid_to && b.valid_from < a.valid_to;
                if shares_ip && overlaps {
                    return Err(IngestError::MappingStore {
                        line: i + 1,
                        reason: format!(
                            "overlapping leases for {} / {}",
                            a.floating_ip, b.floating_ip
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// The lease whose window contains `at` for the given floating or fixed
    /// IP. Callers use it both for the user and to normalize a floating
    /// address to the VM's fixed IP.
    pub fn resolve(&self, ip: Ipv4Addr, at: DateTime<Utc>) -> Result<&IpUserMapping, IngestError> {
        self.leases
            .iter()
            .find(|l| l.covers(ip, at))
            .ok_or(IngestError::UnresolvedUser { ip, at })
    }

    /// The user whose lease window contains `at` for the given floating or
    /// fixed IP.
    pub fn resolve_user(&self, ip: Ipv4Addr, at: DateTime<Utc>) -> Result<&str, IngestError> {
        self.resolve(ip, at).map(|l| l.user_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.leases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leases.is_empty()
    }
}

//! Test-Box style measurement logs.
//!
//! Sender lines:
//!
//! ```text
//! SNDP 9 1263374005 -h tt146.ripe.net -p 6000 -n 100 -s 1353080554
//! ```
//!
//! Receiver lines (one logical record per line):
//!
//! ```text
//! RCDP 12 2 <src ip> <src port> <dst ip> <dst port> <epoch.frac> <delay> 0X.. 0X.. <serial> <e1> <e2>
//! ```
//!
//! The `9`, `12 2`, hex flag and trailing fields are carried through
//! unvalidated beyond their lexical shape.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::io::BufRead;
use std::net::{IpAddr, SocketAddr};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Delay, DelaySample, Direction, PacketSize, ProbePair};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SenderRecord {
    pub timestamp: u64,
    pub host: String,
    pub port: Option<u16>,
    pub bytes: u32,
    pub serial: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverRecord {
    pub source: SocketAddr,
    pub destination: SocketAddr,
    pub received_at: f64,
    pub delay: Delay,
    pub serial: u64,
}

/// Whitespace-separated fields with their byte offsets.
fn fields(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split_ascii_whitespace()
        .map(move |tok| (tok.as_ptr() as usize - line.as_ptr() as usize, tok))
}

fn malformed(offset: usize, reason: impl Into<String>) -> Error {
    Error::MalformedLine {
        offset,
        reason: reason.into(),
    }
}

fn field<T: std::str::FromStr>((offset, tok): (usize, &str), what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| malformed(offset, format!("bad {what} {tok:?}")))
}

fn next_field<'a>(
    it: &mut impl Iterator<Item = (usize, &'a str)>,
    end: usize,
    what: &str,
) -> Result<(usize, &'a str)> {
    it.next()
        .ok_or_else(|| malformed(end, format!("missing {what}")))
}

fn expect_tag(first: Option<(usize, &str)>, tag: &str) -> Result<()> {
    match first {
        Some((_, t)) if t == tag => Ok(()),
        Some((offset, t)) => Err(malformed(offset, format!("expected {tag}, found {t:?}"))),
        None => Err(malformed(0, "empty line")),
    }
}

pub fn parse_sender_line(line: &str) -> Result<SenderRecord> {
    let end = line.len();
    let mut it = fields(line);
    expect_tag(it.next(), "SNDP")?;
    let kind = next_field(&mut it, end, "record kind")?;
    field::<u32>(kind, "record kind")?;
    let timestamp = field(next_field(&mut it, end, "timestamp")?, "timestamp")?;

    let (mut host, mut port, mut bytes, mut serial) = (None, None, None, None);
    while let Some((offset, flag)) = it.next() {
        let value = next_field(&mut it, end, &format!("value for {flag}"))?;
        match flag {
            "-h" => host = Some(value.1.to_string()),
            "-p" => port = Some(field::<u16>(value, "port")?),
            "-n" => bytes = Some(field::<u32>(value, "packet size")?),
            "-s" => serial = Some(field::<u64>(value, "serial")?),
            f if f.starts_with('-') && f.len() > 1 => {}
            other => {
                return Err(malformed(
                    offset,
                    format!("expected an option, found {other:?}"),
                ))
            }
        }
    }
    let bytes = bytes.ok_or_else(|| malformed(end, "missing -n"))?;
    PacketSize::new(bytes).map_err(|e| malformed(end, e.to_string()))?;
    Ok(SenderRecord {
        timestamp,
        host: host.ok_or_else(|| malformed(end, "missing -h"))?,
        port,
        bytes,
        serial: serial.ok_or_else(|| malformed(end, "missing -s"))?,
    })
}

fn hex_flag((offset, tok): (usize, &str)) -> Result<()> {
    let digits = tok.strip_prefix("0X").or_else(|| tok.strip_prefix("0x"));
    match digits {
        Some(d) if !d.is_empty() && d.bytes().all(|b| b.is_ascii_hexdigit()) => Ok(()),
        _ => Err(malformed(offset, format!("bad hex flag {tok:?}"))),
    }
}

pub fn parse_receiver_line(line: &str) -> Result<ReceiverRecord> {
    let end = line.len();
    let mut it = fields(line);
    expect_tag(it.next(), "RCDP")?;
    for what in ["record kind", "record version"] {
        field::<u32>(next_field(&mut it, end, what)?, what)?;
    }
    let mut addr = |what: &str| -> Result<SocketAddr> {
        let ip: IpAddr = field(next_field(&mut it, end, what)?, what)?;
        let port: u16 = field(next_field(&mut it, end, "port")?, "port")?;
        Ok(SocketAddr::new(ip, port))
    };
    let source = addr("source address")?;
    let destination = addr("destination address")?;
    let received_at: f64 = field(next_field(&mut it, end, "timestamp")?, "timestamp")?;
    let delay_field = next_field(&mut it, end, "delay")?;
    let delay = Delay::from_secs(field(delay_field, "delay")?)
        .map_err(|e| malformed(delay_field.0, e.to_string()))?;
    hex_flag(next_field(&mut it, end, "flag")?)?;
    hex_flag(next_field(&mut it, end, "flag")?)?;
    let serial = field(next_field(&mut it, end, "serial")?, "serial")?;
    for what in ["error estimate", "error estimate"] {
        field::<f64>(next_field(&mut it, end, what)?, what)?;
    }
    if let Some((offset, extra)) = it.next() {
        return Err(malformed(
            offset,
            format!("unexpected trailing field {extra:?}"),
        ));
    }
    if !received_at.is_finite() {
        return Err(malformed(end, "timestamp is not finite"));
    }
    Ok(ReceiverRecord {
        source,
        destination,
        received_at,
        delay,
        serial,
    })
}

/// Decode raw bytes as UTF-8, reporting the first invalid byte as the offset.
pub fn decode_line(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| malformed(e.valid_up_to(), "invalid UTF-8"))
}

#[derive(Debug)]
pub struct ParsedLog<T> {
    pub records: Vec<T>,
    /// `(line number, error)` per rejected line.
    pub malformed: Vec<(usize, Error)>,
}

/// Parse a whole log. Blank lines are skipped; every other line becomes a
/// record or a diagnostic.
pub fn parse_log<R, T, F>(mut input: R, parse: F) -> Result<ParsedLog<T>>
where
    R: BufRead,
    F: Fn(&str) -> Result<T>,
{
    let mut out = ParsedLog {
        records: Vec::new(),
        malformed: Vec::new(),
    };
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let parsed = decode_line(&buf).and_then(|line| {
            let line = line.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                Ok(None)
            } else {
                parse(line).map(Some)
            }
        });
        match parsed {
            Ok(Some(rec)) => out.records.push(rec),
            Ok(None) => {}
            Err(e) => out.malformed.push((line_no, e)),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MatchStats {
    pub matched: usize,
    pub unmatched_sent: usize,
    pub unmatched_received: usize,
    pub duplicate_sent: usize,
    pub duplicate_received: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub samples: Vec<DelaySample>,
    pub stats: MatchStats,
}

/// Join sender and receiver records on serial.
///
/// The first occurrence of a serial wins on either side; later ones are
/// counted as duplicates. `sent_at` is the receiver timestamp minus the
/// delay. Samples come out in receiver order.
pub fn match_sessions(
    sent: &[SenderRecord],
    received: &[ReceiverRecord],
    direction: Direction,
) -> MatchOutcome {
    let mut stats = MatchStats::default();
    let mut by_serial: HashMap<u64, (&SenderRecord, bool)> = HashMap::with_capacity(sent.len());
    for s in sent {
        match by_serial.entry(s.serial) {
            Entry::Vacant(v) => {
                v.insert((s, false));
            }
            Entry::Occupied(_) => stats.duplicate_sent += 1,
        }
    }
    let mut samples = Vec::new();
    for r in received {
        match by_serial.get_mut(&r.serial) {
            Some((_, true)) => stats.duplicate_received += 1,
            Some((s, used)) => {
                *used = true;
                let packet_size = PacketSize::new(s.bytes).expect("validated by the parser");
                samples.push(DelaySample {
                    packet_size,
                    delay: r.delay,
                    serial: r.serial,
                    sent_at: r.received_at - r.delay.secs(),
                    direction,
                });
            }
            None => stats.unmatched_received += 1,
        }
    }
    stats.matched = samples.len();
    stats.unmatched_sent = by_serial.values().filter(|(_, used)| !used).count();
    MatchOutcome { samples, stats }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairingPolicy {
    /// Each large sample takes the closest unpaired small sample within
    /// `window_s` seconds.
    NearestInTime { window_s: f64 },
    /// Adjacent small/large samples in time order pair up.
    Sequential,
}

pub const DEFAULT_PAIRING_WINDOW_S: f64 = 60.0;

impl Default for PairingPolicy {
    fn default() -> Self {
        PairingPolicy::NearestInTime {
            window_s: DEFAULT_PAIRING_WINDOW_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairingOutcome {
    pub pairs: Vec<ProbePair>,
    pub unpaired_small: usize,
    pub unpaired_large: usize,
}

pub fn pair_by_size(
    samples: &[DelaySample],
    w1: PacketSize,
    w2: PacketSize,
    policy: PairingPolicy,
) -> Result<PairingOutcome> {
    if w1 >= w2 {
        return Err(Error::invalid(
            "packet sizes",
            format!("{w1} must be below {w2}"),
        ));
    }
    let mut sorted: Vec<&DelaySample> = samples
        .iter()
        .filter(|s| s.packet_size == w1 || s.packet_size == w2)
        .collect();
    sorted.sort_by(|a, b| a.sent_at.total_cmp(&b.sent_at));
    let n_small = sorted.iter().filter(|s| s.packet_size == w1).count();
    let n_large = sorted.len() - n_small;

    let pairs = match policy {
        PairingPolicy::NearestInTime { window_s } => pair_nearest(&sorted, w1, window_s)?,
        PairingPolicy::Sequential => pair_sequential(&sorted, w1)?,
    };
    if pairs.is_empty() {
        return Err(Error::NoPairsFound);
    }
    Ok(PairingOutcome {
        unpaired_small: n_small - pairs.len(),
        unpaired_large: n_large - pairs.len(),
        pairs,
    })
}

fn pair_nearest(sorted: &[&DelaySample], w1: PacketSize, window_s: f64) -> Result<Vec<ProbePair>> {
    if !(window_s >= 0.0) {
        return Err(Error::invalid("pairing window", format!("{window_s} s")));
    }
    let small: Vec<&DelaySample> = sorted
        .iter()
        .copied()
        .filter(|s| s.packet_size == w1)
        .collect();
    let mut used = vec![false; small.len()];
    let mut pairs = Vec::new();
    for large in sorted.iter().filter(|s| s.packet_size != w1) {
        let t = large.sent_at;
        let split = small.partition_point(|s| s.sent_at < t);
        let before = (0..split).rev().find(|&i| !used[i]);
        let after = (split..small.len()).find(|&i| !used[i]);
        let dist = |i: usize| (small[i].sent_at - t).abs();
        let best = match (before, after) {
            (Some(b), Some(a)) => Some(if dist(a) < dist(b) { a } else { b }),
            (b, a) => b.or(a),
        };
        if let Some(i) = best.filter(|&i| dist(i) <= window_s) {
            used[i] = true;
            pairs.push(ProbePair::new(*small[i], **large)?);
        }
    }
    Ok(pairs)
}

fn pair_sequential(sorted: &[&DelaySample], w1: PacketSize) -> Result<Vec<ProbePair>> {
    let mut pairs = Vec::new();
    let mut pending: Option<&DelaySample> = None;
    for &s in sorted {
        match pending {
            Some(p) if (p.packet_size == w1) != (s.packet_size == w1) => {
                let (small, large) = if p.packet_size == w1 { (p, s) } else { (s, p) };
                pairs.push(ProbePair::new(*small, *large)?);
                pending = None;
            }
            _ => pending = Some(s),
        }
    }
    Ok(pairs)
}

/// `1 / (mean - min)` of the delays of one packet size.
///
/// The minimum observed delay stands in for the fixed delay, which biases
/// the estimate upward when few samples are available.
pub fn estimate_lambda(samples: &[DelaySample]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let size = samples[0].packet_size;
    if let Some(other) = samples.iter().find(|s| s.packet_size != size) {
        return Err(Error::InsufficientData(format!(
            "samples mix {size} and {}",
            other.packet_size
        )));
    }
    let delays = samples.iter().map(|s| s.delay.secs());
    let min = delays.clone().fold(f64::INFINITY, f64::min);
    let mean = delays.sum::<f64>() / samples.len() as f64;
    let spread = mean - min;
    if !(spread > 0.0) {
        return Err(Error::InsufficientData(
            "delays have no variable component".into(),
        ));
    }
    Ok(1.0 / spread)
}

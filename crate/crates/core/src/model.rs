//! Value types shared across the toolkit.
//!
//! Sizes are UDP payload bytes. Delays are seconds. Bandwidth is always held
//! in bit/s; the only byte-to-bit conversion lives in [`PacketSize::bits`].

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest UDP payload over IPv4.
pub const MAX_UDP_PAYLOAD: u32 = 65_507;

/// Probe payload size in bytes (UDP payload, headers excluded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct PacketSize(u32);

impl PacketSize {
    pub fn new(bytes: u32) -> Result<Self> {
        if bytes == 0 || bytes > MAX_UDP_PAYLOAD {
            return Err(Error::invalid(
                "packet size",
                format!("{bytes} bytes is outside 1..={MAX_UDP_PAYLOAD}"),
            ));
        }
        Ok(PacketSize(bytes))
    }

    pub fn bytes(self) -> u32 {
        self.0
    }

    pub fn bits(self) -> f64 {
        f64::from(self.0) * 8.0
    }
}

impl TryFrom<u32> for PacketSize {
    type Error = Error;
    fn try_from(bytes: u32) -> Result<Self> {
        PacketSize::new(bytes)
    }
}

impl From<PacketSize> for u32 {
    fn from(size: PacketSize) -> u32 {
        size.0
    }
}

impl fmt::Display for PacketSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} B", self.0)
    }
}

/// Non-negative, finite delay in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Delay(f64);

impl Delay {
    pub const ZERO: Delay = Delay(0.0);

    pub fn from_secs(seconds: f64) -> Result<Self> {
        if !seconds.is_finite() || seconds < 0.0 {
            return Err(Error::invalid("delay", format!("{seconds} s")));
        }
        Ok(Delay(seconds))
    }

    pub fn secs(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Delay {
    type Error = Error;
    fn try_from(seconds: f64) -> Result<Self> {
        Delay::from_secs(seconds)
    }
}

impl From<Delay> for f64 {
    fn from(d: Delay) -> f64 {
        d.0
    }
}

/// Random queueing part of a delay, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct VariableDelay(f64);

impl VariableDelay {
    pub fn from_secs(seconds: f64) -> Result<Self> {
        if !seconds.is_finite() || seconds < 0.0 {
            return Err(Error::invalid("variable delay", format!("{seconds} s")));
        }
        Ok(VariableDelay(seconds))
    }

    pub fn secs(self) -> f64 {
        self.0
    }
}

/// Strictly positive, finite rate in bit/s.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn from_bps(bits_per_second: f64) -> Result<Self> {
        if !bits_per_second.is_finite() || bits_per_second <= 0.0 {
            return Err(Error::invalid(
                "bandwidth",
                format!("{bits_per_second} bit/s"),
            ));
        }
        Ok(Bandwidth(bits_per_second))
    }

    pub fn from_mbps(mbps: f64) -> Result<Self> {
        Self::from_bps(mbps * 1e6)
    }

    pub fn bps(self) -> f64 {
        self.0
    }

    pub fn mbps(self) -> f64 {
        self.0 / 1e6
    }
}

impl TryFrom<f64> for Bandwidth {
    type Error = Error;
    fn try_from(bps: f64) -> Result<Self> {
        Bandwidth::from_bps(bps)
    }
}

impl From<Bandwidth> for f64 {
    fn from(b: Bandwidth) -> f64 {
        b.0
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} Mbit/s", self.mbps())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "forward" => Ok(Direction::Forward),
            "reverse" => Ok(Direction::Reverse),
            other => Err(Error::invalid("direction", format!("{other:?}"))),
        }
    }
}

/// One observed probe packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelaySample {
    pub packet_size: PacketSize,
    pub delay: Delay,
    pub serial: u64,
    /// Seconds since the Unix epoch.
    pub sent_at: f64,
    pub direction: Direction,
}

/// A small-packet and a large-packet observation used together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbePair {
    small: DelaySample,
    large: DelaySample,
}

impl ProbePair {
    pub fn new(small: DelaySample, large: DelaySample) -> Result<Self> {
        if small.packet_size >= large.packet_size {
            return Err(Error::invalid(
                "probe pair",
                format!(
                    "small {} is not below large {}",
                    small.packet_size, large.packet_size
                ),
            ));
        }
        if small.direction != large.direction {
            return Err(Error::invalid("probe pair", "samples differ in direction"));
        }
        Ok(ProbePair { small, large })
    }

    pub fn small(&self) -> &DelaySample {
        &self.small
    }

    pub fn large(&self) -> &DelaySample {
        &self.large
    }

    pub fn sizes(&self) -> (PacketSize, PacketSize) {
        (self.small.packet_size, self.large.packet_size)
    }

    /// Large minus small delay, seconds. May be negative.
    pub fn delay_diff(&self) -> f64 {
        self.large.delay.secs() - self.small.delay.secs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hop {
    pub capacity: Bandwidth,
    pub propagation_delay: Delay,
}

/// Path description used by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct PathModel {
    hops: Vec<Hop>,
    lambda: f64,
    d_min: Option<Delay>,
}

impl PathModel {
    pub fn new(hops: Vec<Hop>, lambda: f64, d_min: Option<Delay>) -> Result<Self> {
        if hops.is_empty() {
            return Err(Error::invalid("path", "at least one hop is required"));
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::invalid(
                "lambda",
                format!("{lambda} must be positive"),
            ));
        }
        Ok(PathModel {
            hops,
            lambda,
            d_min,
        })
    }

    /// One hop with the given capacity and no propagation delay.
    pub fn single_hop(capacity: Bandwidth, lambda: f64) -> Result<Self> {
        Self::new(
            vec![Hop {
                capacity,
                propagation_delay: Delay::ZERO,
            }],
            lambda,
            None,
        )
    }

    pub fn hops(&self) -> &[Hop] {
        &self.hops
    }

    /// Intensity of the exponential variable delay, 1/s.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn d_min(&self) -> Option<Delay> {
        self.d_min
    }

    /// Sum of per-hop serialization times for one bit, s/bit.
    pub fn inverse_capacity_sum(&self) -> f64 {
        self.hops.iter().map(|h| 1.0 / h.capacity.bps()).sum()
    }

    pub fn propagation_sum(&self) -> f64 {
        self.hops.iter().map(|h| h.propagation_delay.secs()).sum()
    }
}

/// Outcome of averaging many probe pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "EstimateJson", try_from = "EstimateJson")]
pub struct BandwidthEstimate {
    pub value: Bandwidth,
    pub n_pairs: usize,
    /// Sample SD of per-batch estimates, bit/s. Absent with a single batch.
    pub sd: Option<f64>,
    /// SD of per-batch delay differences over their mean. To first order
    /// this equals `sd / value`. Absent together with `sd`.
    pub relative_error: Option<f64>,
    /// Mean large-minus-small delay over all pairs used, seconds.
    pub mean_delay_diff: f64,
}

#[derive(Serialize, Deserialize)]
struct EstimateJson {
    bps: f64,
    mbps: f64,
    n_pairs: usize,
    sd_bps: Option<f64>,
    relative_error: Option<f64>,
    mean_delay_diff_s: f64,
}

impl From<BandwidthEstimate> for EstimateJson {
    fn from(e: BandwidthEstimate) -> Self {
        EstimateJson {
            bps: e.value.bps(),
            mbps: e.value.mbps(),
            n_pairs: e.n_pairs,
            sd_bps: e.sd,
            relative_error: e.relative_error,
            mean_delay_diff_s: e.mean_delay_diff,
        }
    }
}

impl TryFrom<EstimateJson> for BandwidthEstimate {
    type Error = Error;
    fn try_from(j: EstimateJson) -> Result<Self> {
        if j.n_pairs == 0 {
            return Err(Error::invalid("estimate", "n_pairs must be positive"));
        }
        if j.sd_bps.is_some_and(|sd| !(sd >= 0.0)) {
            return Err(Error::invalid("estimate", "sd_bps must be non-negative"));
        }
        Ok(BandwidthEstimate {
            value: Bandwidth::from_bps(j.bps)?,
            n_pairs: j.n_pairs,
            sd: j.sd_bps,
            relative_error: j.relative_error,
            mean_delay_diff: j.mean_delay_diff_s,
        })
    }
}

impl fmt::Display for BandwidthEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} over {} pairs", self.value, self.n_pairs)?;
        if let (Some(sd), Some(eta)) = (self.sd, self.relative_error) {
            write!(f, " (sd {:.2} Mbit/s, {:.1}%)", sd / 1e6, eta * 100.0)?;
        }
        write!(f, ", mean diff {:.6} s", self.mean_delay_diff)
    }
}

// --- CSV sample format -----------------------------------------------------

pub const SAMPLE_CSV_HEADER: [&str; 5] = ["direction", "serial", "sent_at", "bytes", "delay_s"];

/// Seconds with at most nine fractional digits, trailing zeros trimmed.
pub fn format_seconds(seconds: f64) -> String {
    let mut s = format!("{seconds:.9}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    s
}

#[derive(Deserialize)]
struct SampleRow {
    direction: Direction,
    serial: u64,
    sent_at: f64,
    bytes: u32,
    delay_s: f64,
}

pub fn write_samples_csv<W: Write>(out: W, samples: &[DelaySample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(SAMPLE_CSV_HEADER).map_err(csv_err)?;
    for s in samples {
        w.write_record([
            s.direction.as_str().to_string(),
            s.serial.to_string(),
            s.sent_at.to_string(),
            s.packet_size.bytes().to_string(),
            format_seconds(s.delay.secs()),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(input: R) -> Result<Vec<DelaySample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    {
        let headers = rdr.headers().map_err(|e| Error::Csv {
            line: 1,
            reason: e.to_string(),
        })?;
        if headers.iter().ne(SAMPLE_CSV_HEADER) {
            return Err(Error::Csv {
                line: 1,
                reason: format!("expected header {}", SAMPLE_CSV_HEADER.join(",")),
            });
        }
    }
    let mut samples = Vec::new();
    for row in rdr.deserialize::<SampleRow>() {
        let row = row.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = samples.len() as u64 + 2;
        let wrap = |e: Error| Error::Csv {
            line,
            reason: e.to_string(),
        };
        samples.push(DelaySample {
            packet_size: PacketSize::new(row.bytes).map_err(wrap)?,
            delay: Delay::from_secs(row.delay_s).map_err(wrap)?,
            serial: row.serial,
            sent_at: row.sent_at,
            direction: row.direction,
        });
    }
    Ok(samples)
}

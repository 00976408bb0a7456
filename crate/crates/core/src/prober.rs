//! Live two-size probing over UDP.
//!
//! The prober sends small and large datagrams alternately to an echo
//! reflector and times each round trip with a monotonic clock. RTTs are used
//! in place of one-way delays, so the resulting estimate describes the
//! bottleneck of the round trip; the reverse-path fixed term cancels only when
//! the reply sizes match, which holds for an echo.
//!
//! Wire format of a probe: 8-byte big-endian serial, 8-byte big-endian
//! nanoseconds on the prober's monotonic clock, zero padding up to the probe
//! size. The reflector never looks inside.

use std::collections::HashMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Delay, DelaySample, Direction, PacketSize, ProbePair};

/// Largest UDP payload that fits a 1500-byte MTU without fragmentation.
pub const MAX_PROBE_PAYLOAD: u32 = 1472;
pub const HEADER_LEN: usize = 16;

pub fn encode_probe(serial: u64, timestamp_ns: u64, size: PacketSize) -> Vec<u8> {
    let mut buf = vec![0u8; (size.bytes() as usize).max(HEADER_LEN)];
    buf[..8].copy_from_slice(&serial.to_be_bytes());
    buf[8..16].copy_from_slice(&timestamp_ns.to_be_bytes());
    buf
}

/// `(serial, timestamp_ns)` of a probe payload.
pub fn decode_probe(payload: &[u8]) -> Option<(u64, u64)> {
    let serial = u64::from_be_bytes(payload.get(..8)?.try_into().ok()?);
    let ts = u64::from_be_bytes(payload.get(8..16)?.try_into().ok()?);
    Some((serial, ts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub target: SocketAddr,
    pub w1: PacketSize,
    pub w2: PacketSize,
    /// Number of pairs.
    pub count: usize,
    pub spacing: Duration,
    pub timeout: Duration,
}

impl ProbeConfig {
    pub const DEFAULT_W1: u32 = 100;
    pub const DEFAULT_W2: u32 = 1100;
    pub const DEFAULT_SPACING: Duration = Duration::from_millis(100);
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(2);

    pub fn new(
        target: SocketAddr,
        w1: PacketSize,
        w2: PacketSize,
        count: usize,
        spacing: Duration,
        timeout: Duration,
    ) -> Result<Self> {
        if w1.bytes() < HEADER_LEN as u32 {
            return Err(Error::invalid(
                "w1",
                format!("probes carry a {HEADER_LEN}-byte header"),
            ));
        }
        if w1 >= w2 || w2.bytes() > MAX_PROBE_PAYLOAD {
            return Err(Error::invalid(
                "probe sizes",
                format!("need w1 < w2 <= {MAX_PROBE_PAYLOAD}, got {w1} and {w2}"),
            ));
        }
        if spacing.is_zero() {
            return Err(Error::invalid("spacing", "must be positive"));
        }
        if timeout.is_zero() {
            return Err(Error::invalid("timeout", "must be positive"));
        }
        Ok(ProbeConfig {
            target,
            w1,
            w2,
            count,
            spacing,
            timeout,
        })
    }

    /// Resolve `host:port` and apply the default sizes and timings.
    pub fn for_target(target: &str, count: usize) -> Result<Self> {
        Self::new(
            resolve(target)?,
            PacketSize::new(Self::DEFAULT_W1)?,
            PacketSize::new(Self::DEFAULT_W2)?,
            count,
            Self::DEFAULT_SPACING,
            Self::DEFAULT_TIMEOUT,
        )
    }
}

pub fn resolve(target: &str) -> Result<SocketAddr> {
    target
        .to_socket_addrs()
        .map_err(|e| Error::Unreachable(format!("{target}: {e}")))?
        .next()
        .ok_or_else(|| Error::Unreachable(format!("{target}: no address")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeStats {
    pub sent: u64,
    pub received: u64,
    pub lost_pairs: u64,
    pub unknown_replies: u64,
    /// Largest deviation of a send from its schedule, seconds.
    pub max_send_jitter_s: f64,
    /// Delays are round-trip times, not one-way delays.
    pub round_trip: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub pairs: Vec<ProbePair>,
    pub stats: ProbeStats,
}

impl ProbeReport {
    pub fn samples(&self) -> Vec<DelaySample> {
        self.pairs
            .iter()
            .flat_map(|p| [*p.small(), *p.large()])
            .collect()
    }
}

struct InFlight {
    sent: Instant,
    sent_wall: f64,
    rtt: Option<Duration>,
}

fn wall_clock() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Probe `cfg.target` with `cfg.count` interleaved small/large pairs.
///
/// Serial `2k` is the small packet of pair `k`, `2k + 1` the large one. A
/// reply later than `cfg.timeout` counts as lost; a lost packet drops its
/// whole pair.
pub fn probe(cfg: &ProbeConfig) -> Result<ProbeReport> {
    let mut stats = ProbeStats {
        sent: 0,
        received: 0,
        lost_pairs: 0,
        unknown_replies: 0,
        max_send_jitter_s: 0.0,
        round_trip: true,
    };
    if cfg.count == 0 {
        return Ok(ProbeReport {
            pairs: Vec::new(),
            stats,
        });
    }

    let bind_addr: SocketAddr = if cfg.target.is_ipv4() {
        "0.0.0.0:0"
    } else {
        "[::]:0"
    }
    .parse()
    .expect("literal");
    let socket = UdpSocket::bind(bind_addr).map_err(|source| Error::BindFailure {
        addr: bind_addr.to_string(),
        source,
    })?;
    socket
        .connect(cfg.target)
        .map_err(|e| Error::Unreachable(e.to_string()))?;
    socket.set_read_timeout(Some(Duration::from_millis(20)))?;
    let sender = socket.try_clone()?;

    let total = 2 * cfg.count as u64;
    let epoch = Instant::now();
    let in_flight: Mutex<HashMap<u64, InFlight>> = Mutex::new(HashMap::new());
    let sending_done = AtomicBool::new(false);
    let sent_count = AtomicU64::new(0);
    let mut jitter = Duration::ZERO;
    let mut unknown = 0u64;
    let mut received = 0u64;

    let send_result: Result<()> = thread::scope(|scope| {
        let send = scope.spawn(|| -> Result<Duration> {
            let mut max_jitter = Duration::ZERO;
            for serial in 0..total {
                let due = epoch + cfg.spacing * serial as u32;
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    thread::sleep(wait);
                }
                let size = if serial % 2 == 0 { cfg.w1 } else { cfg.w2 };
                let now = Instant::now();
                max_jitter = max_jitter.max(now.saturating_duration_since(due));
                let ts = now.duration_since(epoch).as_nanos() as u64;
                let payload = encode_probe(serial, ts, size);
                in_flight.lock().expect("in-flight table poisoned").insert(
                    serial,
                    InFlight {
                        sent: now,
                        sent_wall: wall_clock(),
                        rtt: None,
                    },
                );
                match sender.send(&payload) {
                    Ok(_) => {}
                    // ICMP unreachable from an earlier probe surfaces here on some stacks
                    Err(e) if e.kind() == ErrorKind::ConnectionRefused => {}
                    Err(e) => {
                        sending_done.store(true, Ordering::Release);
                        return Err(e.into());
                    }
                }
                sent_count.fetch_add(1, Ordering::Relaxed);
            }
            sending_done.store(true, Ordering::Release);
            Ok(max_jitter)
        });

        let mut buf = vec![0u8; MAX_PROBE_PAYLOAD as usize + 64];
        let mut last_send_seen: Option<Instant> = None;
        loop {
            if sending_done.load(Ordering::Acquire) {
                let last = *last_send_seen.get_or_insert_with(Instant::now);
                let table = in_flight.lock().expect("in-flight table poisoned");
                let all_answered = table.values().all(|f| f.rtt.is_some());
                drop(table);
                if all_answered || last.elapsed() > cfg.timeout {
                    break;
                }
            }
            match socket.recv(&mut buf) {
                Ok(len) => {
                    let arrived = Instant::now();
                    let Some((serial, _ts)) = decode_probe(&buf[..len]) else {
                        unknown += 1;
                        continue;
                    };
                    let mut table = in_flight.lock().expect("in-flight table poisoned");
                    match table.get_mut(&serial) {
                        Some(f) if f.rtt.is_none() => {
                            let rtt = arrived.checked_duration_since(f.sent).ok_or_else(|| {
                                Error::ClockError(format!("reply to {serial} precedes its send"))
                            })?;
                            if rtt <= cfg.timeout {
                                f.rtt = Some(rtt);
                                received += 1;
                            }
                        }
                        _ => unknown += 1,
                    }
                }
                Err(e)
                    if matches!(
                        e.kind(),
                        ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::ConnectionRefused
                    ) => {}
                Err(e) => return Err(e.into()),
            }
        }
        jitter = send.join().expect("sender thread panicked")?;
        Ok(())
    });
    send_result?;

    stats.sent = sent_count.load(Ordering::Relaxed);
    stats.received = received;
    stats.unknown_replies = unknown;
    stats.max_send_jitter_s = jitter.as_secs_f64();
    if received == 0 {
        return Err(Error::Unreachable(format!(
            "no replies from {} to {} probes",
            cfg.target, stats.sent
        )));
    }

    let table = in_flight.into_inner().expect("in-flight table poisoned");
    let sample = |serial: u64, size: PacketSize| -> Option<DelaySample> {
        let f = table.get(&serial)?;
        let rtt = f.rtt?;
        Some(DelaySample {
            packet_size: size,
            delay: Delay::from_secs(rtt.as_secs_f64()).ok()?,
            serial,
            sent_at: f.sent_wall,
            direction: Direction::Forward,
        })
    };
    let mut pairs = Vec::with_capacity(cfg.count);
    for k in 0..cfg.count as u64 {
        match (sample(2 * k, cfg.w1), sample(2 * k + 1, cfg.w2)) {
            (Some(small), Some(large)) => pairs.push(ProbePair::new(small, large)?),
            _ => stats.lost_pairs += 1,
        }
    }
    Ok(ProbeReport { pairs, stats })
}

/// UDP echo endpoint.
pub struct Reflector {
    socket: UdpSocket,
}

impl Reflector {
    pub fn bind<A: ToSocketAddrs + std::fmt::Display>(addr: A) -> Result<Self> {
        let socket = UdpSocket::bind(&addr).map_err(|source| Error::BindFailure {
            addr: addr.to_string(),
            source,
        })?;
        Ok(Reflector { socket })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.socket.local_addr()?)
    }

    /// Echo datagrams until `stop` is set. Returns the number echoed.
    pub fn serve_until(&self, stop: &AtomicBool) -> Result<u64> {
        self.socket
            .set_read_timeout(Some(Duration::from_millis(50)))?;
        let mut buf = vec![0u8; 65_536];
        let mut echoed = 0;
        while !stop.load(Ordering::Relaxed) {
            match self.socket.recv_from(&mut buf) {
                Ok((len, from)) => {
                    // a vanished peer must not stop the reflector
                    if self.socket.send_to(&buf[..len], from).is_ok() {
                        echoed += 1;
                    }
                }
                Err(e)
                    if matches!(
                        e.kind(),
                        ErrorKind::WouldBlock
                            | ErrorKind::TimedOut
                            | ErrorKind::ConnectionRefused
                            | ErrorKind::ConnectionReset
                    ) => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(echoed)
    }

    /// Echo forever.
    pub fn serve(&self) -> Result<()> {
        self.serve_until(&AtomicBool::new(false)).map(|_| ())
    }

    /// Run on a background thread; the returned handle stops it on drop.
    pub fn spawn(self) -> ReflectorHandle {
        let stop = Arc::new(AtomicBool::new(false));
        let addr = self.socket.local_addr().ok();
        let flag = Arc::clone(&stop);
        let thread = thread::spawn(move || self.serve_until(&flag));
        ReflectorHandle {
            stop,
            thread: Some(thread),
            addr,
        }
    }
}

/// Serve on `listen` until the process ends.
pub fn reflect(listen: &str) -> Result<()> {
    Reflector::bind(listen)?.serve()
}

pub struct ReflectorHandle {
    stop: Arc<AtomicBool>,
    thread: Option<thread::JoinHandle<Result<u64>>>,
    addr: Option<SocketAddr>,
}

impl ReflectorHandle {
    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.addr
    }

    pub fn stop(mut self) -> Result<u64> {
        self.stop.store(true, Ordering::Relaxed);
        self.thread
            .take()
            .expect("joined once")
            .join()
            .expect("reflector panicked")
    }
}

impl Drop for ReflectorHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn probe_payload_layout() {
        let p = encode_probe(0x0102_0304_0506_0708, 42, PacketSize::new(100).unwrap());
        assert_eq!(p.len(), 100);
        assert_eq!(&p[..8], &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(&p[8..16], &42u64.to_be_bytes());
        assert!(p[16..].iter().all(|&b| b == 0));
        assert_eq!(decode_probe(&p), Some((0x0102_0304_0506_0708, 42)));
        assert_eq!(decode_probe(&p[..15]), None);
    }

    #[test]
    fn config_validation() {
        let t: SocketAddr = "127.0.0.1:9".parse().unwrap();
        let s = |b| PacketSize::new(b).unwrap();
        let ok = ProbeConfig::new(
            t,
            s(100),
            s(1100),
            10,
            Duration::from_millis(1),
            Duration::from_secs(1),
        );
        assert!(ok.is_ok());
        let d = Duration::from_millis(1);
        assert!(ProbeConfig::new(t, s(1100), s(100), 1, d, d).is_err());
        assert!(ProbeConfig::new(t, s(100), s(1473), 1, d, d).is_err());
        assert!(ProbeConfig::new(t, s(100), s(1472), 1, d, d).is_ok());
        assert!(ProbeConfig::new(t, s(8), s(1000), 1, d, d).is_err());
        assert!(ProbeConfig::new(t, s(100), s(1000), 1, Duration::ZERO, d).is_err());
    }

    #[test]
    fn zero_count_is_empty() {
        let cfg = ProbeConfig::for_target("127.0.0.1:9", 0).unwrap();
        let r = probe(&cfg).unwrap();
        assert!(r.pairs.is_empty());
        assert_eq!(r.stats.sent, 0);
    }

    #[test]
    fn unresolvable_target() {
        assert!(matches!(
            resolve("no-such-host.invalid:9"),
            Err(Error::Unreachable(_))
        ));
        assert!(matches!(
            resolve("not a target"),
            Err(Error::Unreachable(_))
        ));
    }

    proptest! {
        #[test]
        fn payload_round_trip(serial in any::<u64>(), ts in any::<u64>(), size in 16u32..=1472) {
            let p = encode_probe(serial, ts, PacketSize::new(size).unwrap());
            prop_assert_eq!(p.len(), size as usize);
            prop_assert_eq!(decode_probe(&p), Some((serial, ts)));
        }
    }
}

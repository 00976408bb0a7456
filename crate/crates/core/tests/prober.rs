use std::net::UdpSocket;
use std::time::{Duration, Instant};

use vps_core::prober::{probe, ProbeConfig, Reflector};
use vps_core::{Error, PacketSize};

fn size(b: u32) -> PacketSize {
    PacketSize::new(b).unwrap()
}

#[test]
fn reflector_echoes_unchanged() {
    let handle = Reflector::bind("127.0.0.1:0").unwrap().spawn();
    let addr = handle.local_addr().unwrap();
    let client = UdpSocket::bind("127.0.0.1:0").unwrap();
    client
        .set_read_timeout(Some(Duration::from_secs(2)))
        .unwrap();
    let mut buf = [0u8; 2048];
    for payload in [vec![7u8; 100], vec![0xAB; 1472], b"not a probe".to_vec()] {
        client.send_to(&payload, addr).unwrap();
        let (len, from) = client.recv_from(&mut buf).unwrap();
        assert_eq!(from, addr);
        assert_eq!(&buf[..len], payload.as_slice());
    }
    assert_eq!(handle.stop().unwrap(), 3);
}

#[test]
fn reflector_bind_failure() {
    let taken = UdpSocket::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap();
    assert!(matches!(
        Reflector::bind(addr.to_string()),
        Err(Error::BindFailure { .. })
    ));
}

#[test]
fn loopback_probe_pairs_every_packet() {
    let handle = Reflector::bind("127.0.0.1:0").unwrap().spawn();
    let cfg = ProbeConfig::new(
        handle.local_addr().unwrap(),
        size(100),
        size(1100),
        100,
        Duration::from_millis(2),
        Duration::from_secs(1),
    )
    .unwrap();
    let report = probe(&cfg).unwrap();
    assert_eq!(report.stats.sent, 200);
    assert_eq!(report.pairs.len() as u64 + report.stats.lost_pairs, 100);
    assert!(report.pairs.len() >= 95, "lost {}", report.stats.lost_pairs);
    assert!(report.stats.round_trip);
    let mut last = None;
    for p in &report.pairs {
        assert!(p.small().serial < p.large().serial);
        assert!(last.is_none_or(|l| l < p.small().serial));
        last = Some(p.large().serial);
        assert!(p.small().delay.secs() > 0.0 && p.large().delay.secs() > 0.0);
        assert!(p.large().delay.secs() < 1.0);
    }
    assert_eq!(report.samples().len(), 2 * report.pairs.len());
}

#[test]
fn send_spacing_jitter_is_small() {
    let handle = Reflector::bind("127.0.0.1:0").unwrap().spawn();
    let spacing = Duration::from_millis(20);
    let cfg = ProbeConfig::new(
        handle.local_addr().unwrap(),
        size(100),
        size(1100),
        10,
        spacing,
        Duration::from_secs(1),
    )
    .unwrap();
    let report = probe(&cfg).unwrap();
    assert!(
        report.stats.max_send_jitter_s <= 0.1 * spacing.as_secs_f64(),
        "jitter {} s",
        report.stats.max_send_jitter_s
    );
}

#[test]
fn silent_target_is_unreachable_within_bound() {
    // bound but never answers
    let sink = UdpSocket::bind("127.0.0.1:0").unwrap();
    let count = 3;
    let spacing = Duration::from_millis(10);
    let timeout = Duration::from_millis(200);
    let cfg = ProbeConfig::new(
        sink.local_addr().unwrap(),
        size(100),
        size(1100),
        count,
        spacing,
        timeout,
    )
    .unwrap();
    let start = Instant::now();
    assert!(matches!(probe(&cfg), Err(Error::Unreachable(_))));
    let bound = spacing * (2 * count as u32) + timeout * count as u32 + Duration::from_secs(1);
    assert!(start.elapsed() <= bound, "{:?}", start.elapsed());
}

#[test]
fn closed_port_is_unreachable() {
    let port = {
        let s = UdpSocket::bind("127.0.0.1:0").unwrap();
        s.local_addr().unwrap()
    };
    let cfg = ProbeConfig::new(
        port,
        size(100),
        size(1100),
        2,
        Duration::from_millis(5),
        Duration::from_millis(100),
    )
    .unwrap();
    assert!(matches!(probe(&cfg), Err(Error::Unreachable(_))));
}

#[test]
fn stray_replies_are_counted() {
    // reflector that also sends one unsolicited datagram per request
    let server = UdpSocket::bind("127.0.0.1:0").unwrap();
    let addr = server.local_addr().unwrap();
    let t = std::thread::spawn(move || {
        server
            .set_read_timeout(Some(Duration::from_millis(500)))
            .unwrap();
        let mut buf = [0u8; 2048];
        while let Ok((len, from)) = server.recv_from(&mut buf) {
            server.send_to(&[1u8; 4], from).unwrap();
            let mut bogus = buf[..len].to_vec();
            bogus[..8].copy_from_slice(&u64::MAX.to_be_bytes());
            server.send_to(&bogus, from).unwrap();
            server.send_to(&buf[..len], from).unwrap();
        }
    });
    let cfg = ProbeConfig::new(
        addr,
        size(100),
        size(1100),
        5,
        Duration::from_millis(5),
        Duration::from_millis(300),
    )
    .unwrap();
    let report = probe(&cfg).unwrap();
    assert_eq!(report.pairs.len(), 5);
    assert_eq!(report.stats.unknown_replies, 20);
    t.join().unwrap();
}

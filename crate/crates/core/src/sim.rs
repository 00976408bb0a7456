//! Monte-Carlo delay generation.
//!
//! A packet of `W` bytes sees `fixed_delay(W) + X` where `X ~ Exp(lambda)`
//! is drawn by inverse transform, `X = -ln(1 - u) / lambda`, `u ~ U[0, 1)`.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`) seeded from the config
//! seed. Stream 0 produces the pair sequence; replication `t` of the SD
//! estimate runs on stream `t + 1`, so replications are independent of each
//! other and of scheduling.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::sample_sd;
use crate::model::{
    Bandwidth, Delay, DelaySample, Direction, Hop, PacketSize, PathModel, ProbePair, VariableDelay,
};

/// Spacing between simulated pairs on the `sent_at` axis, seconds.
pub const PAIR_INTERVAL_S: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub path: PathModel,
    pub w1: PacketSize,
    pub w2: PacketSize,
    pub n_pairs: usize,
    pub n_trials: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(
        path: PathModel,
        w1: PacketSize,
        w2: PacketSize,
        n_pairs: usize,
        n_trials: usize,
        seed: u64,
    ) -> Result<Self> {
        if w1 >= w2 {
            return Err(Error::invalid(
                "packet sizes",
                format!("{w1} must be below {w2}"),
            ));
        }
        if n_pairs == 0 || n_trials == 0 {
            return Err(Error::invalid(
                "sim config",
                "n_pairs and n_trials must be positive",
            ));
        }
        Ok(SimConfig {
            path,
            w1,
            w2,
            n_pairs,
            n_trials,
            seed,
        })
    }

    /// Reference setup: one 10 Mbit/s hop, lambda = 1000/s, 100 and 1100 byte probes.
    pub fn reference(n_pairs: usize, n_trials: usize, seed: u64) -> Self {
        let path = PathModel::single_hop(Bandwidth::from_mbps(10.0).unwrap(), 1000.0).unwrap();
        let w1 = PacketSize::new(100).unwrap();
        let w2 = PacketSize::new(1100).unwrap();
        SimConfig::new(path, w1, w2, n_pairs, n_trials, seed).unwrap()
    }

    /// Expected `D2 - D1`; the variable parts cancel in expectation.
    pub fn true_delay_diff(&self) -> f64 {
        fixed_delay(&self.path, self.w2).secs() - fixed_delay(&self.path, self.w1).secs()
    }

    /// Available bandwidth implied by the path's fixed-delay slope.
    pub fn true_bandwidth(&self) -> f64 {
        (self.w2.bits() - self.w1.bits()) / self.true_delay_diff()
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Size-dependent plus constant delay of a path. `bytes = 0` gives the
/// constant part alone.
pub fn fixed_delay_bytes(path: &PathModel, bytes: u32) -> Delay {
    let serialization = f64::from(bytes) * 8.0 * path.inverse_capacity_sum();
    let constant = path
        .d_min()
        .map_or_else(|| path.propagation_sum(), Delay::secs);
    Delay::from_secs(serialization + constant).expect("sum of non-negative finite terms")
}

pub fn fixed_delay(path: &PathModel, w: PacketSize) -> Delay {
    fixed_delay_bytes(path, w.bytes())
}

/// Exponential variate from a uniform `u` in `[0, 1)`.
pub fn variable_delay(u: f64, lambda: f64) -> VariableDelay {
    debug_assert!((0.0..1.0).contains(&u));
    VariableDelay::from_secs(-(1.0 - u).ln() / lambda).expect("u in [0, 1)")
}

pub fn draw_variable_delay<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> VariableDelay {
    variable_delay(rng.random::<f64>(), lambda)
}

pub fn draw_delay<R: Rng + ?Sized>(path: &PathModel, w: PacketSize, rng: &mut R) -> Delay {
    let var = draw_variable_delay(path.lambda(), rng);
    Delay::from_secs(fixed_delay(path, w).secs() + var.secs()).expect("finite")
}

/// `cfg.n_pairs` pairs with independent draws per packet. Serials are `2i`
/// (small) and `2i + 1` (large); pair `i` is sent at `i` seconds, the large
/// packet half an interval after the small one.
pub fn simulate_pairs(cfg: &SimConfig) -> Vec<ProbePair> {
    let mut rng = cfg.rng(0);
    (0..cfg.n_pairs)
        .map(|i| {
            let t = i as f64 * PAIR_INTERVAL_S;
            let small = DelaySample {
                packet_size: cfg.w1,
                delay: draw_delay(&cfg.path, cfg.w1, &mut rng),
                serial: 2 * i as u64,
                sent_at: t,
                direction: Direction::Forward,
            };
            let large = DelaySample {
                packet_size: cfg.w2,
                delay: draw_delay(&cfg.path, cfg.w2, &mut rng),
                serial: 2 * i as u64 + 1,
                sent_at: t + PAIR_INTERVAL_S / 2.0,
                direction: Direction::Forward,
            };
            ProbePair::new(small, large).expect("w1 < w2 checked by SimConfig")
        })
        .collect()
}

/// Flattened samples of [`simulate_pairs`] in send order.
pub fn simulate_samples(cfg: &SimConfig) -> Vec<DelaySample> {
    simulate_pairs(cfg)
        .into_iter()
        .flat_map(|p| [*p.small(), *p.large()])
        .collect()
}

fn replicate_mean_diff(cfg: &SimConfig, n: usize, trial: usize) -> f64 {
    let mut rng = cfg.rng(trial as u64 + 1);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        s1 += draw_delay(&cfg.path, cfg.w1, &mut rng).secs();
        s2 += draw_delay(&cfg.path, cfg.w2, &mut rng).secs();
    }
    (s2 - s1) / n as f64
}

/// SD of `mean(D2) - mean(D1)` over `n` pairs, estimated from
/// `cfg.n_trials` independent replications.
pub fn sd_of_delay_diff(cfg: &SimConfig, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("measurement count", "must be at least 1"));
    }
    if cfg.n_trials < 2 {
        return Err(Error::InsufficientData(format!(
            "{} replication cannot give a standard deviation",
            cfg.n_trials
        )));
    }
    let diffs: Vec<f64> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|t| replicate_mean_diff(cfg, n, t))
        .collect();
    Ok(sample_sd(&diffs).expect("at least two trials"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPoint {
    pub n: usize,
    pub sd_s: f64,
    /// `sd_s` relative to the true mean delay difference.
    pub eta: f64,
}

pub fn error_vs_n(cfg: &SimConfig, ns: &[usize]) -> Result<Vec<ErrorPoint>> {
    if ns.is_empty() {
        return Err(Error::EmptyInput);
    }
    let diff = cfg.true_delay_diff();
    ns.iter()
        .map(|&n| {
            let sd_s = sd_of_delay_diff(cfg, n)?;
            Ok(ErrorPoint {
                n,
                sd_s,
                eta: sd_s / diff,
            })
        })
        .collect()
}

pub fn write_error_table<W: Write>(mut out: W, points: &[ErrorPoint]) -> Result<()> {
    writeln!(out, "n,sd_s,eta")?;
    for p in points {
        writeln!(out, "{},{},{}", p.n, p.sd_s, p.eta)?;
    }
    Ok(())
}

/// Simulation job read from a flat `key = value` file.
///
/// ```text
/// # comment
/// lambda = 1000          # 1/s
/// hop = 10e6 0           # capacity bit/s, propagation delay s; repeatable
/// d_min = 0.001          # optional, replaces the propagation sum
/// w1 = 100
/// w2 = 1100
/// n_pairs = 3000
/// n_trials = 10000
/// seed = 1
/// ns = 5,10,20,30,50,100,200
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SimJob {
    pub config: SimConfig,
    pub ns: Vec<usize>,
}

pub const DEFAULT_NS: [usize; 7] = [5, 10, 20, 30, 50, 100, 200];

impl SimJob {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lambda = None;
        let mut hops = Vec::new();
        let mut d_min = None;
        let mut w1 = None;
        let mut w2 = None;
        let mut n_pairs = None;
        let mut n_trials = None;
        let mut seed = None;
        let mut ns = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Config { line, reason };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|e| err(format!("{key}: {e}")));
            let int = |v: &str| v.parse::<u64>().map_err(|e| err(format!("{key}: {e}")));
            match key {
                "lambda" => lambda = Some(num(value)?),
                "hop" => {
                    let mut parts = value.split_whitespace();
                    let cap = parts
                        .next()
                        .ok_or_else(|| err("hop needs a capacity".into()))?;
                    let prop = parts.next().unwrap_or("0");
                    if parts.next().is_some() {
                        return Err(err("hop takes capacity and propagation delay".into()));
                    }
                    hops.push(Hop {
                        capacity: Bandwidth::from_bps(num(cap)?).map_err(|e| err(e.to_string()))?,
                        propagation_delay: Delay::from_secs(num(prop)?)
                            .map_err(|e| err(e.to_string()))?,
                    });
                }
                "d_min" => {
                    d_min = Some(Delay::from_secs(num(value)?).map_err(|e| err(e.to_string()))?)
                }
                "w1" | "w2" => {
                    let bytes = u32::try_from(int(value)?).map_err(|e| err(e.to_string()))?;
                    let size = PacketSize::new(bytes).map_err(|e| err(e.to_string()))?;
                    if key == "w1" {
                        w1 = Some(size)
                    } else {
                        w2 = Some(size)
                    }
                }
                "n_pairs" => n_pairs = Some(int(value)? as usize),
                "n_trials" => n_trials = Some(int(value)? as usize),
                "seed" => seed = Some(int(value)?),
                "ns" => {
                    ns = Some(
                        value
                            .split(',')
                            .map(|v| int(v.trim()).map(|n| n as usize))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }

        let missing = |key: &str| Error::Config {
            line: 0,
            reason: format!("missing key {key}"),
        };
        let path = PathModel::new(hops, lambda.ok_or_else(|| missing("lambda"))?, d_min)?;
        let config = SimConfig::new(
            path,
            w1.unwrap_or(PacketSize::new(100)?),
            w2.unwrap_or(PacketSize::new(1100)?),
            n_pairs.unwrap_or(3000),
            n_trials.unwrap_or(10_000),
            seed.unwrap_or(1),
        )?;
        let ns = ns.unwrap_or_else(|| DEFAULT_NS.to_vec());
        if ns.contains(&0) {
            return Err(Error::Config {
                line: 0,
                reason: "ns entries must be positive".into(),
            });
        }
        Ok(SimJob { config, ns })
    }
}

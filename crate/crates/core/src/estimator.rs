//! Bandwidth estimation from probe pairs.
//!
//! Delays are averaged first and the averaged difference is divided into the
//! size difference afterwards. Averaging per-pair rates instead is biased
//! (mean of reciprocals), so the batch path never goes through
//! [`estimate_pair`].

use crate::error::{Error, Result};
use crate::model::{Bandwidth, BandwidthEstimate, PacketSize, ProbePair};

/// `8 * delta_bytes / delay_diff` without sign checks.
///
/// Non-positive or infinite results are returned as-is; callers wanting a
/// validated [`Bandwidth`] use [`bandwidth_from_difference`].
pub fn raw_rate(delta_bytes: u32, delay_diff: f64) -> f64 {
    f64::from(delta_bytes) * 8.0 / delay_diff
}

pub fn bandwidth_from_difference(delta_bytes: u32, delay_diff: f64) -> Result<Bandwidth> {
    if !(delay_diff > 0.0) {
        return Err(Error::NonPositiveDelayDifference { diff_s: delay_diff });
    }
    Bandwidth::from_bps(raw_rate(delta_bytes, delay_diff))
}

fn size_delta(sizes: (PacketSize, PacketSize)) -> u32 {
    sizes.1.bytes() - sizes.0.bytes()
}

/// Estimate from a single pair.
pub fn estimate_pair(pair: &ProbePair) -> Result<Bandwidth> {
    bandwidth_from_difference(size_delta(pair.sizes()), pair.delay_diff())
}

fn common_sizes(pairs: &[ProbePair]) -> Result<(PacketSize, PacketSize)> {
    let first = pairs.first().ok_or(Error::EmptyInput)?.sizes();
    if let Some(other) = pairs.iter().map(ProbePair::sizes).find(|s| *s != first) {
        return Err(Error::MixedPacketSizes {
            expected: (first.0.bytes(), first.1.bytes()),
            found: (other.0.bytes(), other.1.bytes()),
        });
    }
    Ok(first)
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

/// Sample standard deviation (n - 1 denominator). `None` below two values.
pub fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs.iter().copied());
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// `mean(D2) - mean(D1)` for each consecutive batch of `batch_size` pairs.
///
/// A trailing batch shorter than `batch_size` is dropped.
pub fn batch_delay_differences(pairs: &[ProbePair], batch_size: usize) -> Result<Vec<f64>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size", "must be at least 1"));
    }
    common_sizes(pairs)?;
    Ok(pairs
        .chunks_exact(batch_size)
        .map(|batch| {
            mean(batch.iter().map(|p| p.large().delay.secs()))
                - mean(batch.iter().map(|p| p.small().delay.secs()))
        })
        .collect())
}

/// Per-batch rates in bit/s, unchecked. Batches dominated by variable delay
/// show up as negative or huge values, which is what a time-series plot of
/// the estimates should display.
pub fn batch_rates(pairs: &[ProbePair], batch_size: usize) -> Result<Vec<f64>> {
    let delta = size_delta(common_sizes(pairs)?);
    Ok(batch_delay_differences(pairs, batch_size)?
        .into_iter()
        .map(|d| raw_rate(delta, d))
        .collect())
}

/// Averaged estimate over consecutive batches.
///
/// `value` is the mean of the per-batch estimates and `sd` their sample SD;
/// with a single batch `sd` is absent. `relative_error` is the SD of the
/// per-batch delay differences over their mean, which is what the planner's
/// reference table holds; it avoids the heavy tail that `sd / value`
/// inherits from dividing by small differences.
pub fn estimate_batch(pairs: &[ProbePair], batch_size: usize) -> Result<BandwidthEstimate> {
    let delta = size_delta(common_sizes(pairs)?);
    let diffs = batch_delay_differences(pairs, batch_size)?;
    if diffs.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} pairs do not fill one batch of {batch_size}",
            pairs.len()
        )));
    }
    let rates = diffs
        .iter()
        .map(|&d| bandwidth_from_difference(delta, d).map(Bandwidth::bps))
        .collect::<Result<Vec<_>>>()?;
    let value = Bandwidth::from_bps(mean(rates.iter().copied()))?;
    let mean_diff = mean(diffs.iter().copied());
    Ok(BandwidthEstimate {
        value,
        n_pairs: diffs.len() * batch_size,
        sd: sample_sd(&rates),
        relative_error: sample_sd(&diffs).map(|s| s / mean_diff),
        mean_delay_diff: mean_diff,
    })
}

/// Relative bandwidth error caused by a delay precision of `delta_d`:
/// `2 * delta_d / mean_diff`.
pub fn relative_error(delta_d: f64, mean_diff: f64) -> Result<f64> {
    if !(mean_diff > 0.0) {
        return Err(Error::NonPositiveDelayDifference { diff_s: mean_diff });
    }
    if !(delta_d >= 0.0) || !delta_d.is_finite() {
        return Err(Error::invalid("delay precision", format!("{delta_d} s")));
    }
    Ok(2.0 * delta_d / mean_diff)
}

/// Largest available bandwidth measurable at relative error `eta` when delays
/// are known to within `delta_d` seconds.
pub fn upper_measurable_bandwidth(
    w1: PacketSize,
    w2: PacketSize,
    delta_d: f64,
    eta: f64,
) -> Result<Bandwidth> {
    if w2 <= w1 {
        return Err(Error::invalid(
            "packet sizes",
            format!("{w2} must exceed {w1}"),
        ));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidEta(eta));
    }
    if !(delta_d > 0.0) || !delta_d.is_finite() {
        return Err(Error::ZeroPrecision(delta_d));
    }
    Bandwidth::from_bps((w2.bits() - w1.bits()) * eta / (2.0 * delta_d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Delay, DelaySample, Direction};
    use proptest::prelude::*;

    fn size(b: u32) -> PacketSize {
        PacketSize::new(b).unwrap()
    }

    fn pair_with(w1: u32, d1: f64, w2: u32, d2: f64) -> ProbePair {
        let s = |bytes, delay, serial| DelaySample {
            packet_size: size(bytes),
            delay: Delay::from_secs(delay).unwrap(),
            serial,
            sent_at: 0.0,
            direction: Direction::Forward,
        };
        ProbePair::new(s(w1, d1, 1), s(w2, d2, 2)).unwrap()
    }

    fn pair(d1: f64, d2: f64) -> ProbePair {
        pair_with(100, d1, 1100, d2)
    }

    #[test]
    fn bytes_become_bits_once() {
        let b = estimate_pair(&pair(0.010, 0.010815)).unwrap();
        assert!((b.bps() - 9_815_950.920_245).abs() < 1.0, "{}", b.bps());
        let b = bandwidth_from_difference(1000, 0.000815).unwrap();
        assert_eq!(b.bps().round(), 9_815_951.0);
        assert!((b.bps() - 9_815_950.9).abs() < 0.1);
    }

    #[test]
    fn worked_pair_examples() {
        let b = bandwidth_from_difference(1000, 0.001869).unwrap();
        assert!((b.mbps() - 4.28).abs() < 0.005);
        let b = bandwidth_from_difference(1000, 0.008).unwrap();
        assert!((b.bps() - 1e6).abs() < 1e-6);
    }

    #[test]
    fn pair_rejects_non_positive_difference() {
        assert!(matches!(
            estimate_pair(&pair(0.02, 0.01)),
            Err(Error::NonPositiveDelayDifference { .. })
        ));
        assert!(matches!(
            estimate_pair(&pair(0.01, 0.01)),
            Err(Error::NonPositiveDelayDifference { .. })
        ));
    }

    #[test]
    fn batch_errors() {
        assert!(matches!(estimate_batch(&[], 1), Err(Error::EmptyInput)));
        let mixed = [pair(0.01, 0.011), pair_with(100, 0.01, 1024, 0.011)];
        assert!(matches!(
            estimate_batch(&mixed, 1),
            Err(Error::MixedPacketSizes { .. })
        ));
        let neg = [pair(0.01, 0.011), pair(0.02, 0.011)];
        assert!(matches!(
            estimate_batch(&neg, 1),
            Err(Error::NonPositiveDelayDifference { .. })
        ));
        assert!(estimate_batch(&[pair(0.01, 0.011)], 0).is_err());
        assert!(matches!(
            estimate_batch(&[pair(0.01, 0.011)], 2),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn single_batch_uses_global_means() {
        let pairs = [pair(0.010, 0.011), pair(0.012, 0.0125), pair(0.009, 0.0105)];
        let est = estimate_batch(&pairs, pairs.len()).unwrap();
        let d = (0.011 + 0.0125 + 0.0105) / 3.0 - (0.010 + 0.012 + 0.009) / 3.0;
        assert!((est.value.bps() - 8000.0 / d).abs() < 1e-6);
        assert_eq!(est.sd, None);
        assert_eq!(est.relative_error, None);
        assert_eq!(est.n_pairs, 3);
    }

    #[test]
    fn delays_are_averaged_before_dividing() {
        // per-pair diffs 1 ms and 3 ms: averaging delays gives 2 ms -> 4 Mbit/s,
        // averaging per-pair rates would give (8 + 2.667) / 2 = 5.333 Mbit/s
        let pairs = [pair(0.010, 0.011), pair(0.010, 0.013)];
        let est = estimate_batch(&pairs, 2).unwrap();
        assert!((est.value.mbps() - 4.0).abs() < 1e-9);
        let per_pair = estimate_batch(&pairs, 1).unwrap();
        assert!((per_pair.value.mbps() - 16.0 / 3.0).abs() < 1e-9);
        assert_ne!(est.value, per_pair.value);
    }

    #[test]
    fn trailing_batch_is_dropped() {
        let pairs: Vec<_> = (0..7)
            .map(|i| pair(0.01, 0.011 + i as f64 * 1e-4))
            .collect();
        let est = estimate_batch(&pairs, 3).unwrap();
        assert_eq!(est.n_pairs, 6);
        assert_eq!(batch_delay_differences(&pairs, 3).unwrap().len(), 2);
        let diffs = batch_delay_differences(&pairs, 3).unwrap();
        let expected = sample_sd(&diffs).unwrap() / est.mean_delay_diff;
        assert!((est.relative_error.unwrap() - expected).abs() < 1e-12);
        assert!(est.sd.is_some());
    }

    #[test]
    fn batch_rates_keep_sign() {
        let pairs = [pair(0.01, 0.011), pair(0.02, 0.011)];
        let rates = batch_rates(&pairs, 1).unwrap();
        assert!(rates[0] > 0.0 && rates[1] < 0.0);
    }

    #[test]
    fn relative_error_examples() {
        assert!((relative_error(2e-6, 4e-5).unwrap() - 0.10).abs() < 1e-12);
        assert_eq!(relative_error(0.0, 4e-5).unwrap(), 0.0);
        assert!((relative_error(1e-3, 8e-3).unwrap() - 0.25).abs() < 1e-12);
        assert!(relative_error(1e-3, 0.0).is_err());
        assert!(relative_error(-1e-3, 1.0).is_err());
    }

    #[test]
    fn upper_bound_examples() {
        let b = upper_measurable_bandwidth(size(100), size(1600), 2e-6, 0.10).unwrap();
        assert!((b.bps() - 300e6).abs() / 300e6 < 1e-12);
        let b = upper_measurable_bandwidth(size(100), size(1600), 1e-3, 0.25).unwrap();
        assert!((b.bps() - 1.5e6).abs() / 1.5e6 < 1e-12);
    }

    #[test]
    fn upper_bound_is_linear() {
        let (w1, w2) = (size(100), size(1100));
        let base = upper_measurable_bandwidth(w1, w2, 1e-5, 0.2).unwrap().bps();
        let eta2 = upper_measurable_bandwidth(w1, w2, 1e-5, 0.4).unwrap().bps();
        let dd2 = upper_measurable_bandwidth(w1, w2, 2e-5, 0.2).unwrap().bps();
        assert!((eta2 / base - 2.0).abs() < 1e-12);
        assert!((dd2 / base - 0.5).abs() < 1e-12);
    }

    #[test]
    fn upper_bound_errors() {
        let (w1, w2) = (size(100), size(1100));
        assert!(matches!(
            upper_measurable_bandwidth(w1, w2, 1e-5, 0.0),
            Err(Error::InvalidEta(_))
        ));
        assert!(matches!(
            upper_measurable_bandwidth(w1, w2, 1e-5, 1.0),
            Err(Error::InvalidEta(_))
        ));
        assert!(matches!(
            upper_measurable_bandwidth(w1, w2, 0.0, 0.1),
            Err(Error::ZeroPrecision(_))
        ));
        assert!(upper_measurable_bandwidth(w2, w1, 1e-5, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn pair_estimate_is_scale_invariant(dw in 1u32..60_000, dd in 1e-7f64..1.0, k in 1.0f64..50.0) {
            let base = bandwidth_from_difference(dw, dd).unwrap().bps();
            let k = k.floor();
            let scaled = bandwidth_from_difference(dw * k as u32, dd * k).unwrap().bps();
            prop_assert!((scaled - base).abs() / base < 1e-12);
        }
    }
}

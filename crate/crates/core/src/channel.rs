//! Rayleigh block-fading channel math.
//!
//! Link gains `g = |h|^2` are exponential with mean `λ`. Everything here is a
//! pure function of its inputs; the analyzer and the simulator share these
//! primitives so both see the same thresholds.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Which node transmits on a link: the source (`s -> k`) or a relay (`k -> d`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    SourceToRelay,
    RelayToDestination,
}

/// Mean gain of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelParams {
    pub mean_gain: f64,
}

impl ChannelParams {
    pub fn new(mean_gain: f64) -> Result<Self> {
        if !(mean_gain.is_finite() && mean_gain > 0.0) {
            return Err(invalid(
                "mean_gain",
                format!("must be finite and > 0, got {mean_gain}"),
            ));
        }
        Ok(Self { mean_gain })
    }

    /// CDF of the gain, `1 - exp(-x/λ)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-x / self.mean_gain).exp_m1()
        }
    }

    /// Survival function `exp(-x/λ)`; exact at `x = ∞`.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            (-x / self.mean_gain).exp()
        }
    }

    /// `P(lo <= g < hi)`, computed from survival values to keep small
    /// differences accurate.
    pub fn interval_prob(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            0.0
        } else {
            (self.survival(lo) - self.survival(hi)).max(0.0)
        }
    }
}

/// Transmit powers, harvesting and rate parameters. Slot duration is 1 and
/// energies are counted in units of one relay packet `E_r = α·P_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerParams {
    /// `P_s`.
    pub source_power: f64,
    /// `α`, with relay power `P_r = α·P_s`.
    pub relay_coeff: f64,
    /// `ρ`.
    pub harvest_coeff: f64,
    /// `σ²`.
    pub noise_power: f64,
    /// Target rate `η` in bits/s/Hz.
    pub target_rate: f64,
}

impl PowerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.source_power.is_finite() && self.source_power > 0.0) {
            return Err(invalid("source_power", "must be finite and > 0"));
        }
        if !(self.relay_coeff > 0.0 && self.relay_coeff <= 1.0) {
            return Err(invalid(
                "relay_coeff",
                format!("must lie in (0, 1], got {}", self.relay_coeff),
            ));
        }
        if !(self.harvest_coeff.is_finite() && self.harvest_coeff >= 0.0) {
            return Err(invalid("harvest_coeff", "must be finite and >= 0"));
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return Err(invalid("noise_power", "must be finite and > 0"));
        }
        if self.target_rate.is_nan() || self.target_rate <= 0.0 {
            return Err(invalid("target_rate", "must be > 0"));
        }
        Ok(())
    }

    pub fn relay_power(&self) -> f64 {
        self.relay_coeff * self.source_power
    }

    pub fn tx_power(&self, direction: Direction) -> f64 {
        match direction {
            Direction::SourceToRelay => self.source_power,
            Direction::RelayToDestination => self.relay_power(),
        }
    }

    /// Outage threshold for links transmitted in `direction`.
    pub fn threshold(&self, direction: Direction) -> OutageThreshold {
        OutageThreshold::new(self.target_rate, self.noise_power, self.tx_power(direction))
    }

    /// Gain needed to harvest `m` energy units, `m·α/ρ`. Zero for `m = 0` and
    /// infinite for `m >= 1` when nothing is harvested.
    pub fn charge_threshold(&self, m: u32) -> f64 {
        if m == 0 {
            0.0
        } else if self.harvest_coeff == 0.0 {
            f64::INFINITY
        } else {
            m as f64 * self.relay_coeff / self.harvest_coeff
        }
    }
}

/// `ξ = (2^η - 1)·σ²/P_t`: a link is in outage iff its gain is below `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct OutageThreshold(f64);

impl OutageThreshold {
    pub fn new(target_rate: f64, noise_power: f64, tx_power: f64) -> Self {
        Self((target_rate * std::f64::consts::LN_2).exp_m1() * noise_power / tx_power)
    }

    pub fn xi(self) -> f64 {
        self.0
    }
}

/// Shannon capacity `log2(1 + P·g/σ²)`.
pub fn capacity(gain: f64, tx_power: f64, noise_power: f64) -> f64 {
    (tx_power * gain / noise_power).ln_1p() / std::f64::consts::LN_2
}

/// `P(g < ξ) = F(ξ)`.
pub fn outage_prob(xi: OutageThreshold, channel: ChannelParams) -> f64 {
    channel.cdf(xi.xi())
}

/// Whole energy units harvested from a source transmission, `⌊(ρ/α)·g⌋`.
/// The fractional remainder is dropped.
pub fn energy_increment(gain: f64, params: &PowerParams) -> u32 {
    if params.harvest_coeff == 0.0 || gain <= 0.0 {
        return 0;
    }
    // `as` saturates for very large gains.
    (params.harvest_coeff / params.relay_coeff * gain).floor() as u32
}

fn check_headroom(m: u32, headroom: u32) -> Result<()> {
    if m > headroom {
        Err(Error::IncrementExceedsHeadroom { m, headroom })
    } else {
        Ok(())
    }
}

/// Probability that a storage with `headroom` free units grows by exactly `m`
/// (by at least `m` when `m == headroom`, since the storage saturates).
pub fn charge_prob(
    m: u32,
    headroom: u32,
    channel: ChannelParams,
    params: &PowerParams,
) -> Result<f64> {
    check_headroom(m, headroom)?;
    let lo = params.charge_threshold(m);
    let hi = if m == headroom {
        f64::INFINITY
    } else {
        params.charge_threshold(m + 1)
    };
    Ok(channel.interval_prob(lo, hi))
}

/// Joint probability that the charging link is in outage and the storage
/// grows by `m`.
pub fn charge_and_outage_prob(
    m: u32,
    headroom: u32,
    channel: ChannelParams,
    xi: OutageThreshold,
    params: &PowerParams,
) -> Result<f64> {
    check_headroom(m, headroom)?;
    let lo = params.charge_threshold(m);
    if xi.xi() <= lo {
        return Ok(0.0);
    }
    let hi = if m == headroom {
        xi.xi()
    } else {
        params.charge_threshold(m + 1).min(xi.xi())
    };
    Ok(channel.interval_prob(lo, hi))
}

/// Draws one block-fading gain with mean `λ`.
pub fn sample_gain<R: Rng + ?Sized>(channel: ChannelParams, rng: &mut R) -> f64 {
    let unit: f64 = Exp1.sample(rng);
    unit * channel.mean_gain
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn power(rho: f64, alpha: f64) -> PowerParams {
        PowerParams {
            source_power: 1.0,
            relay_coeff: alpha,
            harvest_coeff: rho,
            noise_power: 1.0,
            target_rate: 1.0,
        }
    }

    fn unit() -> ChannelParams {
        ChannelParams::new(1.0).unwrap()
    }

    /// Inverse-CDF sampling, independent of the `Exp1` path in `sample_gain`.
    fn oracle_gains(mean: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                -mean * (1.0 - u).ln()
            })
            .collect()
    }

    fn within_3_sigma(freq: f64, p: f64, n: usize) -> bool {
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        (freq - p).abs() <= 3.0 * sigma + 1e-12
    }

    #[test]
    fn capacity_values() {
        assert_eq!(capacity(0.0, 5.0, 2.0), 0.0);
        assert!((capacity(3.0, 1.0, 1.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn capacity_threshold_matches_empirical_outage() {
        // gain=1, P=10: threshold at η where capacity equals the rate.
        let eta = capacity(1.0, 10.0, 1.0);
        let xi = OutageThreshold::new(eta, 1.0, 10.0);
        assert!((xi.xi() - 1.0).abs() < 1e-12);
        let n = 1_000_000;
        let below = oracle_gains(1.0, n, 7)
            .iter()
            .filter(|&&g| capacity(g, 10.0, 1.0) < eta)
            .count();
        let p = outage_prob(xi, unit());
        assert!(within_3_sigma(below as f64 / n as f64, p, n));
    }

    #[test]
    fn outage_prob_values() {
        let tiny = OutageThreshold::new(1e-300, 1.0, 1.0);
        assert!(outage_prob(tiny, unit()) < 1e-299);
        assert!((outage_prob(OutageThreshold(std::f64::consts::LN_2), unit()) - 0.5).abs() < 1e-15);
        let xi = OutageThreshold::new(1.0, 1.0, 1.0);
        assert!((xi.xi() - 1.0).abs() < 1e-15);
        let p = outage_prob(xi, unit());
        assert!((p - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let n = 1_000_000;
        let below = oracle_gains(1.0, n, 11)
            .iter()
            .filter(|&&g| g < 1.0)
            .count();
        assert!(within_3_sigma(below as f64 / n as f64, p, n));
    }

    #[test]
    fn outage_monotone_in_power_and_rate() {
        let ch = unit();
        let mut last = 1.0;
        for p in [0.1, 1.0, 10.0, 100.0] {
            let v = outage_prob(OutageThreshold::new(1.0, 1.0, p), ch);
            assert!(v < last);
            last = v;
        }
        let mut last = 0.0;
        for rate in [0.1, 0.5, 1.0, 2.0] {
            let v = outage_prob(OutageThreshold::new(rate, 1.0, 1.0), ch);
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn energy_increment_values() {
        assert_eq!(energy_increment(0.0, &power(0.5, 1.0)), 0);
        assert_eq!(energy_increment(2.0, &power(0.5, 1.0)), 1);
        assert_eq!(energy_increment(1.7, &power(0.5, 0.4)), 2);
        assert_eq!(energy_increment(100.0, &power(0.0, 1.0)), 0);
    }

    #[test]
    fn energy_increment_floor_boundaries() {
        let p = power(0.5, 1.0);
        for m in 0..20u32 {
            let edge = p.charge_threshold(m);
            assert_eq!(energy_increment(edge, &p), m, "at threshold of {m}");
            if m > 0 {
                assert_eq!(energy_increment(edge * (1.0 - 1e-12), &p), m - 1);
            }
        }
    }

    #[test]
    fn charge_prob_values() {
        let p0 = power(0.0, 1.0);
        assert_eq!(charge_prob(0, 3, unit(), &p0).unwrap(), 1.0);
        assert_eq!(charge_prob(1, 3, unit(), &p0).unwrap(), 0.0);
        assert_eq!(charge_prob(3, 3, unit(), &p0).unwrap(), 0.0);

        let p = power(0.5, 1.0);
        let e = |x: f64| (-x).exp();
        let c: Vec<f64> = (0..=2)
            .map(|m| charge_prob(m, 2, unit(), &p).unwrap())
            .collect();
        assert!((c[0] - (1.0 - e(2.0))).abs() < 1e-15);
        assert!((c[1] - (e(2.0) - e(4.0))).abs() < 1e-15);
        assert!((c[2] - e(4.0)).abs() < 1e-15);
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        assert!(matches!(
            charge_prob(3, 2, unit(), &p),
            Err(Error::IncrementExceedsHeadroom { m: 3, headroom: 2 })
        ));
    }

    #[test]
    fn charge_prob_matches_increment_frequencies() {
        let p = power(0.5, 1.0);
        let n = 1_000_000;
        let mut counts = [0usize; 3];
        for g in oracle_gains(1.0, n, 3) {
            counts[energy_increment(g, &p).min(2) as usize] += 1;
        }
        for m in 0..=2 {
            let prob = charge_prob(m, 2, unit(), &p).unwrap();
            assert!(within_3_sigma(
                counts[m as usize] as f64 / n as f64,
                prob,
                n
            ));
        }
    }

    #[test]
    fn charge_and_outage_values() {
        let p = power(0.5, 1.0);
        let xi = OutageThreshold(3.0);
        let v = charge_and_outage_prob(1, 2, unit(), xi, &p).unwrap();
        let expect = (-2.0f64).exp() - (-3.0f64).exp();
        assert!((v - expect).abs() < 1e-15);
        // Disjoint: ξ at or below the lower charge edge.
        assert_eq!(
            charge_and_outage_prob(2, 4, unit(), OutageThreshold(4.0), &p).unwrap(),
            0.0
        );
        assert_eq!(
            charge_and_outage_prob(2, 4, unit(), OutageThreshold(3.0), &p).unwrap(),
            0.0
        );

        let n = 1_000_000;
        let joint = oracle_gains(1.0, n, 5)
            .iter()
            .filter(|&&g| g < 3.0 && energy_increment(g, &p) == 1)
            .count();
        assert!(within_3_sigma(joint as f64 / n as f64, v, n));
    }

    #[test]
    fn sample_gain_is_deterministic_and_exponential() {
        let ch = unit();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..1000)
                .map(|_| sample_gain(ch, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 1_000_000;
        let samples: Vec<f64> = (0..n).map(|_| sample_gain(ch, &mut rng)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.005, "mean {mean}");
        let below = samples.iter().filter(|&&g| g <= 2.0).count() as f64 / n as f64;
        assert!((below - (1.0 - (-2.0f64).exp())).abs() < 0.002);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn charge_masses_are_consistent(
                rho in 0.0f64..2.0,
                alpha in 0.05f64..=1.0,
                mean in 0.05f64..5.0,
                xi in 0.0f64..20.0,
                headroom in 0u32..8,
            ) {
                let p = power(rho, alpha);
                let ch = ChannelParams::new(mean).unwrap();
                let xi = OutageThreshold(xi);
                let mut total = 0.0;
                let mut joint_total = 0.0;
                for m in 0..=headroom {
                    let c = charge_prob(m, headroom, ch, &p).unwrap();
                    let j = charge_and_outage_prob(m, headroom, ch, xi, &p).unwrap();
                    prop_assert!((0.0..=1.0).contains(&c));
                    prop_assert!((0.0..=1.0).contains(&j));
                    prop_assert!(j <= c + 1e-15);
                    prop_assert!(j <= outage_prob(xi, ch) + 1e-15);
                    total += c;
                    joint_total += j;
                }
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!((joint_total - outage_prob(xi, ch)).abs() < 1e-12);
            }
        }
    }
}

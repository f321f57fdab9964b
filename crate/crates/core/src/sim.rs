//! Slot-by-slot Monte Carlo simulation.
//!
//! Every slot draws `2K` independent block-fading gains, asks the policy for
//! a link and applies the outcome. Outage slots leave the state untouched.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{energy_increment, sample_gain, Direction};
use crate::error::{invalid, Result};
use crate::markov::{analyze, CurvePoint, OutageCurve, SeriesSource};
use crate::policy::{
    rank_links, select_link_baseline, select_with_ranking, BaselineMemory, LinkGains, PolicyKind,
};
use crate::state::{
    apply_in_place, is_deadlock, is_edge_state, LinkId, NetworkConfig, StateIndexer, SystemState,
};

pub const DEFAULT_WARMUP_SLOTS: u64 = 10_000;

/// z-value of the two-sided 95% normal interval.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    /// Power parameters other than `P_s` are taken from here; `P_s` follows `snr_db`.
    pub config: NetworkConfig,
    pub policy: PolicyKind,
    pub snr_db: f64,
    /// Total slots, warmup included.
    pub num_slots: u64,
    pub seed: u64,
    /// Leading slots excluded from all statistics.
    pub warmup_slots: u64,
    /// Record state occupancy and transition counts.
    pub track_chain: bool,
}

impl SimulationSpec {
    pub fn new(
        config: NetworkConfig,
        policy: PolicyKind,
        snr_db: f64,
        num_slots: u64,
        seed: u64,
    ) -> Self {
        Self {
            config,
            policy,
            snr_db,
            num_slots,
            seed,
            warmup_slots: DEFAULT_WARMUP_SLOTS.min(num_slots.saturating_sub(1)),
            track_chain: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.num_slots <= self.warmup_slots {
            return Err(invalid("num_slots", "must exceed warmup_slots"));
        }
        if !self.snr_db.is_finite() {
            return Err(invalid("snr_db", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// Measured slots (after warmup).
    pub slots: u64,
    pub outage_slots: u64,
    pub outage_fraction: f64,
    /// Half-width of the 95% normal-approximation binomial interval.
    pub ci_halfwidth: f64,
    /// `(state index, visit fraction)` at the start of each measured slot,
    /// sorted by index. Empty unless tracking was requested.
    pub occupancy: Vec<(u64, f64)>,
    /// `(from, to, count)` over measured slots, self-loops included, sorted.
    pub transition_counts: Vec<(u64, u64, u64)>,
    /// Packets delivered to the destination per measured slot.
    pub throughput: f64,
    /// Packets accepted by relays over the whole run.
    pub admitted: u64,
    /// Packets delivered to the destination over the whole run.
    pub delivered: u64,
    /// Slots (whole run) that ended in the deadlock state.
    pub deadlock_slots: u64,
    pub final_state: SystemState,
}

struct RankEntry {
    edge: Option<usize>,
    ranking: Box<[LinkId]>,
}

fn rank_entry(state: &SystemState, config: &NetworkConfig) -> RankEntry {
    RankEntry {
        edge: is_edge_state(state, config),
        ranking: rank_links(state, config)
            .map(|r| r.into_links().into_boxed_slice())
            .unwrap_or_default(),
    }
}

/// Runs one simulation from the all-empty state. Deterministic in the spec.
pub fn run_simulation(spec: &SimulationSpec) -> Result<SimulationResult> {
    spec.validate()?;
    let config = spec.config.with_snr_db(spec.snr_db);
    let k = config.num_relays;
    let indexer = StateIndexer::new(&config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut state = config.empty_state();
    let mut gains = LinkGains::uniform(k, 0.0);
    let mut increments = vec![0u32; k];
    let mut memory = BaselineMemory::default();
    let mut rankings: HashMap<u64, RankEntry> = HashMap::new();

    let mut outage_slots = 0u64;
    let mut admitted = 0u64;
    let mut delivered = 0u64;
    let mut delivered_measured = 0u64;
    let mut deadlock_slots = 0u64;
    let mut visits: HashMap<u64, u64> = HashMap::new();
    let mut transitions: HashMap<(u64, u64), u64> = HashMap::new();

    for slot in 0..spec.num_slots {
        for j in 0..k {
            gains.source[j] = sample_gain(config.source_links[j], &mut rng);
            gains.relay[j] = sample_gain(config.relay_links[j], &mut rng);
        }
        let measured = slot >= spec.warmup_slots;
        let need_index = spec.policy == PolicyKind::Proposed || (measured && spec.track_chain);
        let before = if need_index { indexer.index(&state) } else { 0 };

        let selection = match spec.policy {
            PolicyKind::Proposed => {
                let entry = rankings
                    .entry(before)
                    .or_insert_with(|| rank_entry(&state, &config));
                select_with_ranking(&entry.ranking, entry.edge, &gains, &config)
            }
            kind => select_link_baseline(kind, &state, &gains, &config, &mut memory),
        };

        match selection {
            Some(link) => {
                debug_assert!(crate::state::is_link_available(&state, &config, link));
                debug_assert!(crate::policy::supports_rate(
                    link,
                    gains.gain(link),
                    &config
                ));
                match link.direction {
                    Direction::SourceToRelay => {
                        for (j, inc) in increments.iter_mut().enumerate() {
                            *inc = if j == link.relay {
                                0
                            } else {
                                energy_increment(gains.source[j], &config.power)
                            };
                        }
                        admitted += 1;
                        apply_in_place(&mut state, &config, link, &increments);
                        if is_deadlock(&state, &config) {
                            deadlock_slots += 1;
                        }
                    }
                    Direction::RelayToDestination => {
                        increments.iter_mut().for_each(|m| *m = 0);
                        delivered += 1;
                        if measured {
                            delivered_measured += 1;
                        }
                        apply_in_place(&mut state, &config, link, &increments);
                    }
                }
            }
            None => {
                if measured {
                    outage_slots += 1;
                }
                if is_deadlock(&state, &config) {
                    deadlock_slots += 1;
                }
            }
        }
        debug_assert_eq!(admitted - delivered, state.buffered());

        if measured && spec.track_chain {
            *visits.entry(before).or_default() += 1;
            *transitions
                .entry((before, indexer.index(&state)))
                .or_default() += 1;
        }
    }

    let slots = spec.num_slots - spec.warmup_slots;
    let n = slots as f64;
    let p = outage_slots as f64 / n;
    let mut occupancy: Vec<(u64, f64)> =
        visits.into_iter().map(|(i, c)| (i, c as f64 / n)).collect();
    occupancy.sort_unstable_by_key(|&(i, _)| i);
    let mut transition_counts: Vec<(u64, u64, u64)> = transitions
        .into_iter()
        .map(|((i, j), c)| (i, j, c))
        .collect();
    transition_counts.sort_unstable();

    Ok(SimulationResult {
        slots,
        outage_slots,
        outage_fraction: p,
        ci_halfwidth: Z95 * (p * (1.0 - p) / n).sqrt(),
        occupancy,
        transition_counts,
        throughput: delivered_measured as f64 / n,
        admitted,
        delivered,
        deadlock_slots,
        final_state: state,
    })
}

/// SplitMix64 finalizer; gives each sweep point an independent stream.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Slot budget per SNR point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotSchedule {
    Fixed(u64),
    /// `base · 10^(growth · (snr − first_snr)/10)`, capped at `max`, so the
    /// relative interval stays bounded as outage falls.
    Growing {
        base: u64,
        growth: f64,
        max: u64,
    },
}

impl SlotSchedule {
    pub fn slots(&self, snr_db: f64, first_snr_db: f64) -> u64 {
        match *self {
            SlotSchedule::Fixed(n) => n,
            SlotSchedule::Growing { base, growth, max } => {
                let scale = 10f64.powf(growth * (snr_db - first_snr_db).max(0.0) / 10.0);
                ((base as f64 * scale).round() as u64).clamp(base, max.max(base))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub config: NetworkConfig,
    pub policy: PolicyKind,
    pub snr_db: Vec<f64>,
    pub slots: SlotSchedule,
    pub warmup_slots: u64,
    pub seed: u64,
    /// Also solve the chain when the policy is the proposed one and the
    /// state count is within `state_cap`.
    pub analytical: bool,
    pub state_cap: u64,
}

/// Simulates every SNR point (in parallel, merged in SNR order) and attaches
/// the analytical series when requested and feasible.
pub fn sweep(spec: &SweepSpec) -> Result<OutageCurve> {
    if spec.snr_db.is_empty() {
        return Err(invalid("snr_db", "sweep needs at least one SNR point"));
    }
    let first = spec.snr_db[0];
    let simulated: Vec<CurvePoint> = spec
        .snr_db
        .par_iter()
        .enumerate()
        .map(|(i, &snr)| {
            let sim = SimulationSpec {
                config: spec.config.clone(),
                policy: spec.policy,
                snr_db: snr,
                num_slots: spec.slots.slots(snr, first) + spec.warmup_slots,
                seed: derive_seed(spec.seed, i as u64),
                warmup_slots: spec.warmup_slots,
                track_chain: false,
            };
            let r = run_simulation(&sim)?;
            Ok(CurvePoint {
                snr_db: snr,
                p_out: r.outage_fraction,
                source: SeriesSource::Simulated,
                ci_halfwidth: Some(r.ci_halfwidth),
            })
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    let feasible = spec.config.state_count() <= spec.state_cap as u128;
    if spec.analytical && spec.policy == PolicyKind::Proposed && feasible {
        let analytical: Vec<CurvePoint> = spec
            .snr_db
            .par_iter()
            .map(|&snr| {
                let a = analyze(&spec.config.with_snr_db(snr), spec.state_cap)?;
                Ok(CurvePoint {
                    snr_db: snr,
                    p_out: a.p_out,
                    source: SeriesSource::Analytical,
                    ci_halfwidth: None,
                })
            })
            .collect::<Result<_>>()?;
        points.extend(analytical);
    }
    points.extend(simulated);
    Ok(OutageCurve { points })
}

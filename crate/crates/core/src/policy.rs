//! Link priorities and selection rules.
//!
//! Priorities depend only on the state: each available link is scored by the
//! availability vector of the state it would lead to, with harvesting
//! predicted from the mean source gains. Within a slot, links are tried from
//! highest to lowest priority and the first one that supports the target rate
//! transmits.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::channel::{capacity, energy_increment, Direction};
use crate::error::{Error, Result};
use crate::state::{
    apply_in_place, availability_vector, available_links, is_edge_state, is_link_available, LinkId,
    NetworkConfig, SystemState,
};

/// Selection scheme used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Proposed,
    MaxLink,
    MaxMin,
    /// Source and relay phases alternate; approximates the alternating-order
    /// schemes used for comparison.
    Alternating,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Proposed => "proposed",
            PolicyKind::MaxLink => "maxlink",
            PolicyKind::MaxMin => "maxmin",
            PolicyKind::Alternating => "alternating",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(PolicyKind::Proposed),
            "maxlink" | "max_link" => Ok(PolicyKind::MaxLink),
            "maxmin" | "max_min" => Ok(PolicyKind::MaxMin),
            "alternating" => Ok(PolicyKind::Alternating),
            other => Err(crate::error::invalid(
                "policy",
                format!("unknown policy `{other}`"),
            )),
        }
    }
}

/// Available links, highest priority first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorityRanking(Vec<LinkId>);

impl PriorityRanking {
    pub fn links(&self) -> &[LinkId] {
        &self.0
    }

    pub fn into_links(self) -> Vec<LinkId> {
        self.0
    }
}

/// Realized gains of every link in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    pub source: Vec<f64>,
    pub relay: Vec<f64>,
}

impl LinkGains {
    pub fn uniform(num_relays: usize, gain: f64) -> Self {
        Self {
            source: vec![gain; num_relays],
            relay: vec![gain; num_relays],
        }
    }

    pub fn gain(&self, link: LinkId) -> f64 {
        match link.direction {
            Direction::SourceToRelay => self.source[link.relay],
            Direction::RelayToDestination => self.relay[link.relay],
        }
    }
}

/// Expected harvest `⌊(ρ/α)·λ⌋` at each relay when the source transmits to `selected`.
pub fn predicted_increments(config: &NetworkConfig, selected: usize) -> Vec<u32> {
    (0..config.num_relays)
        .map(|j| {
            if j == selected {
                0
            } else {
                energy_increment(config.source_links[j].mean_gain, &config.power)
            }
        })
        .collect()
}

/// State reached if `link` transmits and every other relay harvests its
/// expected (quantized) energy.
pub fn predicted_next_state(
    state: &SystemState,
    link: LinkId,
    config: &NetworkConfig,
) -> Result<SystemState> {
    if !is_link_available(state, config, link) {
        return Err(Error::UnavailableLink(link));
    }
    let increments = match link.direction {
        Direction::SourceToRelay => predicted_increments(config, link.relay),
        Direction::RelayToDestination => vec![0; config.num_relays],
    };
    let mut next = state.clone();
    apply_in_place(&mut next, config, link, &increments);
    Ok(next)
}

/// Orders the available links by the availability of their predicted next
/// state. Ties go to source links first, then to the lower relay index.
pub fn rank_links(state: &SystemState, config: &NetworkConfig) -> Result<PriorityRanking> {
    let links = available_links(state, config);
    if links.is_empty() {
        return Err(Error::Deadlock);
    }
    let mut scored = links
        .into_iter()
        .map(|l| {
            let next = predicted_next_state(state, l, config)?;
            Ok((availability_vector(&next, config), l))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|(va, la), (vb, lb)| match vb.cmp(va) {
        Ordering::Equal => la.cmp(lb),
        o => o,
    });
    Ok(PriorityRanking(
        scored.into_iter().map(|(_, l)| l).collect(),
    ))
}

/// Whether `link` supports the target rate at its realized gain.
pub fn supports_rate(link: LinkId, gain: f64, config: &NetworkConfig) -> bool {
    let p = &config.power;
    capacity(gain, p.tx_power(link.direction), p.noise_power) > p.target_rate
}

fn charges_someone(gains: &LinkGains, config: &NetworkConfig, selected: usize) -> bool {
    gains
        .source
        .iter()
        .enumerate()
        .any(|(j, &g)| j != selected && energy_increment(g, &config.power) >= 1)
}

/// Selection for the proposed scheme given a precomputed ranking.
/// `edge` is the nearly-full relay when the state is an edge state.
pub fn select_with_ranking(
    ranking: &[LinkId],
    edge: Option<usize>,
    gains: &LinkGains,
    config: &NetworkConfig,
) -> Option<LinkId> {
    if let Some(q) = edge {
        let link = LinkId::source(q);
        let ok = supports_rate(link, gains.gain(link), config) && charges_someone(gains, config, q);
        return ok.then_some(link);
    }
    ranking
        .iter()
        .copied()
        .find(|&l| supports_rate(l, gains.gain(l), config))
}

/// Proposed selection; `None` is an outage.
pub fn select_link(
    state: &SystemState,
    gains: &LinkGains,
    config: &NetworkConfig,
) -> Option<LinkId> {
    let ranking = rank_links(state, config).ok()?;
    select_with_ranking(ranking.links(), is_edge_state(state, config), gains, config)
}

/// Cross-slot memory of the baseline schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineMemory {
    /// Direction the alternating scheme serves next; for max-min, whether the
    /// next slot is the forward hop.
    pub phase: Direction,
    /// Relay holding the packet that max-min must forward next.
    pub pending: Option<usize>,
}

impl Default for BaselineMemory {
    fn default() -> Self {
        Self {
            phase: Direction::SourceToRelay,
            pending: None,
        }
    }
}

fn best_capacity(
    links: impl Iterator<Item = LinkId>,
    gains: &LinkGains,
    config: &NetworkConfig,
) -> Option<(LinkId, f64)> {
    let p = &config.power;
    links
        .map(|l| {
            (
                l,
                capacity(gains.gain(l), p.tx_power(l.direction), p.noise_power),
            )
        })
        .fold(None, |best, (l, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((l, c)),
        })
}

/// Baseline selection. Updates `memory` when a link is selected.
pub fn select_link_baseline(
    kind: PolicyKind,
    state: &SystemState,
    gains: &LinkGains,
    config: &NetworkConfig,
    memory: &mut BaselineMemory,
) -> Option<LinkId> {
    let rate = config.power.target_rate;
    match kind {
        PolicyKind::Proposed => select_link(state, gains, config),
        PolicyKind::MaxLink => {
            let avail = available_links(state, config);
            best_capacity(avail.into_iter(), gains, config)
                .filter(|&(_, c)| c > rate)
                .map(|(l, _)| l)
        }
        PolicyKind::MaxMin => {
            if let Some(k) = memory.pending {
                let link = LinkId::relay(k);
                let ok = is_link_available(state, config, link)
                    && supports_rate(link, gains.gain(link), config);
                if ok {
                    memory.pending = None;
                    memory.phase = Direction::SourceToRelay;
                    return Some(link);
                }
                return None;
            }
            let p = &config.power;
            let mut best: Option<(usize, f64)> = None;
            for k in 0..config.num_relays {
                if state.data[k] >= config.buffer_capacity || state.energy[k] == 0 {
                    continue;
                }
                let cs = capacity(gains.source[k], p.source_power, p.noise_power);
                let cr = capacity(gains.relay[k], p.relay_power(), p.noise_power);
                let c = cs.min(cr);
                if best.is_none_or(|(_, bc)| c > bc) {
                    best = Some((k, c));
                }
            }
            let (k, c) = best.filter(|&(_, c)| c > rate)?;
            debug_assert!(c > rate);
            memory.pending = Some(k);
            memory.phase = Direction::RelayToDestination;
            Some(LinkId::source(k))
        }
        PolicyKind::Alternating => {
            let avail = available_links(state, config);
            let in_phase: Vec<LinkId> = avail
                .iter()
                .copied()
                .filter(|l| l.direction == memory.phase)
                .collect();
            let pool = if in_phase.is_empty() { avail } else { in_phase };
            let (link, c) = best_capacity(pool.into_iter(), gains, config)?;
            if c <= rate {
                return None;
            }
            memory.phase = match link.direction {
                Direction::SourceToRelay => Direction::RelayToDestination,
                Direction::RelayToDestination => Direction::SourceToRelay,
            };
            Some(link)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::tests::{power, worked_example};
    use crate::state::{apply_transition, is_deadlock, StateIndexer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn predicted_state_in_worked_example() {
        let (config, s) = worked_example();
        let next = predicted_next_state(&s, LinkId::source(0), &config).unwrap();
        assert_eq!(next, SystemState::new(vec![3, 5, 1], vec![0, 2, 4]));
        let next = predicted_next_state(&s, LinkId::relay(2), &config).unwrap();
        assert_eq!(next, SystemState::new(vec![2, 5, 0], vec![0, 1, 3]));
        assert!(predicted_next_state(&s, LinkId::source(1), &config).is_err());

        let mut no_harvest = config.clone();
        no_harvest.power.harvest_coeff = 0.0;
        assert_eq!(predicted_increments(&no_harvest, 0), vec![0, 0, 0]);
    }

    #[test]
    fn table_ii_vectors_and_ranking() {
        let (config, s) = worked_example();
        let vec_for = |l| {
            availability_vector(&predicted_next_state(&s, l, &config).unwrap(), &config)
                .as_slice()
                .to_vec()
        };
        assert_eq!(vec_for(LinkId::source(0)), vec![0, 0, 1, 2, 2, 3, 4, 4, 5]);
        assert_eq!(vec_for(LinkId::source(2)), vec![0, 1, 2, 2, 2, 3, 3, 4, 5]);
        assert_eq!(vec_for(LinkId::relay(1)), vec![0, 0, 1, 1, 2, 3, 4, 4, 4]);
        assert_eq!(vec_for(LinkId::relay(2)), vec![0, 0, 0, 1, 2, 3, 3, 5, 5]);

        let ranking = rank_links(&s, &config).unwrap();
        assert_eq!(
            ranking.links(),
            &[
                LinkId::source(2),
                LinkId::source(0),
                LinkId::relay(1),
                LinkId::relay(2)
            ]
        );
    }

    #[test]
    fn ranking_edge_cases() {
        let (config, _) = worked_example();
        let edge = SystemState::new(vec![4, 5, 5], vec![0, 0, 0]);
        assert_eq!(
            rank_links(&edge, &config).unwrap().links(),
            &[LinkId::source(0)]
        );
        let dead = SystemState::new(vec![5, 5, 5], vec![0, 0, 0]);
        assert!(matches!(rank_links(&dead, &config), Err(Error::Deadlock)));

        // Symmetric relays tie; the lower index wins.
        let empty = config.empty_state();
        assert_eq!(
            rank_links(&empty, &config).unwrap().links(),
            &[LinkId::source(0), LinkId::source(1), LinkId::source(2)]
        );
    }

    #[test]
    fn selection_rules() {
        let (config, s) = worked_example();
        // Huge gains: top-ranked link.
        assert_eq!(
            select_link(&s, &LinkGains::uniform(3, 1e9), &config),
            Some(LinkId::source(2))
        );
        // Top link below the rate, second above.
        let mut g = LinkGains::uniform(3, 1e9);
        g.source[2] = 0.0;
        assert_eq!(select_link(&s, &g, &config), Some(LinkId::source(0)));
        // Everything in outage.
        assert_eq!(select_link(&s, &LinkGains::uniform(3, 0.0), &config), None);

        let edge = SystemState::new(vec![4, 5, 5], vec![0, 0, 0]);
        // Rate supported but no other relay harvests a full unit (needs g >= 2).
        let mut g = LinkGains::uniform(3, 1.9);
        g.source[0] = 1e9;
        assert_eq!(select_link(&edge, &g, &config), None);
        g.source[2] = 2.0;
        assert_eq!(select_link(&edge, &g, &config), Some(LinkId::source(0)));
        // Charging alone is not enough.
        g.source[0] = 0.0;
        assert_eq!(select_link(&edge, &g, &config), None);

        let dead = SystemState::new(vec![5, 5, 5], vec![0, 0, 0]);
        assert_eq!(
            select_link(&dead, &LinkGains::uniform(3, 1e9), &config),
            None
        );
    }

    #[test]
    fn edge_selection_never_deadlocks() {
        let (config, _) = worked_example();
        let edge = SystemState::new(vec![5, 4, 5], vec![0, 0, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let g = LinkGains {
                source: (0..3)
                    .map(|_| crate::channel::sample_gain(config.source_links[0], &mut rng))
                    .collect(),
                relay: (0..3)
                    .map(|_| crate::channel::sample_gain(config.relay_links[0], &mut rng))
                    .collect(),
            };
            if let Some(link) = select_link(&edge, &g, &config) {
                let inc: Vec<u32> = (0..3)
                    .map(|j| {
                        if j == link.relay {
                            0
                        } else {
                            energy_increment(g.source[j], &config.power)
                        }
                    })
                    .collect();
                let next = apply_transition(&edge, &config, link, &inc).unwrap();
                assert!(next.energy.iter().any(|&e| e >= 1));
                assert!(!is_deadlock(&next, &config));
            }
        }
    }

    #[test]
    fn baselines() {
        let config = NetworkConfig::uniform(2, 3, 2, 1.0, power(0.5, 1.0)).unwrap();
        let mut mem = BaselineMemory::default();

        // One available link: max-link and proposed agree.
        let s = SystemState::new(vec![0, 3], vec![0, 0]);
        for gain in [0.1, 0.5, 5.0] {
            let g = LinkGains::uniform(2, gain);
            assert_eq!(
                select_link_baseline(PolicyKind::MaxLink, &s, &g, &config, &mut mem),
                select_link(&s, &g, &config)
            );
        }

        // Alternating in the source phase with all buffers full falls back to relays.
        let full = SystemState::new(vec![3, 3], vec![1, 2]);
        let mut mem = BaselineMemory::default();
        let mut g = LinkGains::uniform(2, 10.0);
        g.relay[0] = 20.0;
        assert_eq!(
            select_link_baseline(PolicyKind::Alternating, &full, &g, &config, &mut mem),
            Some(LinkId::relay(0))
        );
        assert_eq!(mem.phase, Direction::SourceToRelay);

        let s = SystemState::new(vec![1, 1], vec![1, 1]);
        let mut mem = BaselineMemory::default();
        let mut g = LinkGains::uniform(2, 10.0);
        g.source[1] = 30.0;
        assert_eq!(
            select_link_baseline(PolicyKind::Alternating, &s, &g, &config, &mut mem),
            Some(LinkId::source(1))
        );
        assert_eq!(mem.phase, Direction::RelayToDestination);
        assert_eq!(
            select_link_baseline(PolicyKind::Alternating, &s, &g, &config, &mut mem)
                .map(|l| l.direction),
            Some(Direction::RelayToDestination)
        );

        // Max-min: two-slot transaction through the best bottleneck relay.
        let mut mem = BaselineMemory::default();
        let g = LinkGains {
            source: vec![50.0, 5.0],
            relay: vec![4.0, 6.0],
        };
        assert_eq!(
            select_link_baseline(PolicyKind::MaxMin, &s, &g, &config, &mut mem),
            Some(LinkId::source(1))
        );
        assert_eq!(mem.pending, Some(1));
        let next = SystemState::new(vec![1, 2], vec![1, 1]);
        let weak = LinkGains {
            source: vec![50.0, 50.0],
            relay: vec![50.0, 0.0],
        };
        assert_eq!(
            select_link_baseline(PolicyKind::MaxMin, &next, &weak, &config, &mut mem),
            None
        );
        assert_eq!(
            select_link_baseline(PolicyKind::MaxMin, &next, &g, &config, &mut mem),
            Some(LinkId::relay(1))
        );
        assert_eq!(mem.pending, None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn ranking_is_permutation_and_gain_free(
                k in 1usize..4, ld in 1u32..5, le in 1u32..4,
                rho in 0.0f64..1.5, alpha in 0.1f64..=1.0, mean in 0.2f64..3.0,
                pick in any::<u64>(), seed in any::<u64>(),
            ) {
                let config = NetworkConfig::uniform(k, ld, le, mean, power(rho, alpha)).unwrap();
                let ix = StateIndexer::new(&config).unwrap();
                let s = ix.state_of(pick % ix.count());
                let avail = available_links(&s, &config);
                prop_assume!(!avail.is_empty());
                let ranking = rank_links(&s, &config).unwrap();
                let mut sorted = ranking.links().to_vec();
                sorted.sort();
                prop_assert_eq!(&sorted, &avail);

                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..100 {
                    let g = LinkGains {
                        source: (0..k).map(|_| crate::channel::sample_gain(config.source_links[0], &mut rng)).collect(),
                        relay: (0..k).map(|_| crate::channel::sample_gain(config.relay_links[0], &mut rng)).collect(),
                    };
                    prop_assert_eq!(&rank_links(&s, &config).unwrap(), &ranking);
                    if let Some(l) = select_link(&s, &g, &config) {
                        prop_assert!(supports_rate(l, g.gain(l), &config));
                    }
                }

                // Scaling mean gains without changing any predicted increment
                // leaves the ranking unchanged.
                let inc = energy_increment(mean, &config.power);
                let scaled_mean = mean * 1.01;
                if energy_increment(scaled_mean, &config.power) == inc {
                    let scaled = NetworkConfig::uniform(k, ld, le, scaled_mean, power(rho, alpha)).unwrap();
                    prop_assert_eq!(rank_links(&s, &scaled).unwrap(), ranking);
                }
            }
        }
    }
}

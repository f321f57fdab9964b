//! Joint data-buffer / energy-storage state of the relays.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, Direction, OutageThreshold, PowerParams};
use crate::error::{invalid, Error, Result};

/// Default cap on the number of enumerated states for the analytical path.
pub const DEFAULT_STATE_CAP: u64 = 1_000_000;

/// Network dimensions, per-link channel statistics and power parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_relays: usize,
    pub buffer_capacity: u32,
    pub storage_capacity: u32,
    /// Mean gains of the `s -> k` links.
    pub source_links: Vec<ChannelParams>,
    /// Mean gains of the `k -> d` links.
    pub relay_links: Vec<ChannelParams>,
    pub power: PowerParams,
}

impl NetworkConfig {
    /// All links share one mean gain.
    pub fn uniform(
        num_relays: usize,
        buffer_capacity: u32,
        storage_capacity: u32,
        mean_gain: f64,
        power: PowerParams,
    ) -> Result<Self> {
        let ch = ChannelParams::new(mean_gain)?;
        let config = Self {
            num_relays,
            buffer_capacity,
            storage_capacity,
            source_links: vec![ch; num_relays],
            relay_links: vec![ch; num_relays],
            power,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_relays == 0 {
            return Err(invalid("num_relays", "must be >= 1"));
        }
        if self.buffer_capacity == 0 {
            return Err(invalid("buffer_capacity", "must be >= 1"));
        }
        if self.storage_capacity == 0 {
            return Err(invalid("storage_capacity", "must be >= 1"));
        }
        if self.source_links.len() != self.num_relays || self.relay_links.len() != self.num_relays {
            return Err(invalid(
                "links",
                "need exactly one mean gain per relay and direction",
            ));
        }
        for ch in self.source_links.iter().chain(&self.relay_links) {
            ChannelParams::new(ch.mean_gain)?;
        }
        self.power.validate()
    }

    /// Same network with `P_s = σ²·10^(snr/10)`.
    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        let mut out = self.clone();
        out.power.source_power = self.power.noise_power * 10f64.powf(snr_db / 10.0);
        out
    }

    pub fn with_target_rate(&self, target_rate: f64) -> Self {
        let mut out = self.clone();
        out.power.target_rate = target_rate;
        out
    }

    pub fn channel(&self, link: LinkId) -> ChannelParams {
        match link.direction {
            Direction::SourceToRelay => self.source_links[link.relay],
            Direction::RelayToDestination => self.relay_links[link.relay],
        }
    }

    pub fn threshold(&self, direction: Direction) -> OutageThreshold {
        self.power.threshold(direction)
    }

    /// `F_k(ξ)` for the link, with `ξ` built from its transmitter's power.
    pub fn link_outage_prob(&self, link: LinkId) -> f64 {
        crate::channel::outage_prob(self.threshold(link.direction), self.channel(link))
    }

    /// All `2K` links: source links first, then relay links, each by relay index.
    pub fn links(&self) -> impl Iterator<Item = LinkId> + '_ {
        (0..self.num_relays)
            .map(LinkId::source)
            .chain((0..self.num_relays).map(LinkId::relay))
    }

    /// `[(L_D + 1)(L_E + 1)]^K`, saturating.
    pub fn state_count(&self) -> u128 {
        let per_relay = (self.buffer_capacity as u128 + 1) * (self.storage_capacity as u128 + 1);
        per_relay.saturating_pow(self.num_relays as u32)
    }

    pub fn empty_state(&self) -> SystemState {
        SystemState::empty(self.num_relays)
    }
}

/// One of the `2K` links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId {
    pub direction: Direction,
    pub relay: usize,
}

impl LinkId {
    pub fn source(relay: usize) -> Self {
        Self {
            direction: Direction::SourceToRelay,
            relay,
        }
    }

    pub fn relay(relay: usize) -> Self {
        Self {
            direction: Direction::RelayToDestination,
            relay,
        }
    }

    pub fn is_source(&self) -> bool {
        self.direction == Direction::SourceToRelay
    }
}

/// Relays are numbered from 1 in the text form, e.g. `s->1` and `3->d`.
impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.direction {
            Direction::SourceToRelay => write!(f, "s->{}", self.relay + 1),
            Direction::RelayToDestination => write!(f, "{}->d", self.relay + 1),
        }
    }
}

/// Buffer and storage lengths of every relay.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemState {
    pub data: Vec<u32>,
    pub energy: Vec<u32>,
}

impl SystemState {
    pub fn new(data: Vec<u32>, energy: Vec<u32>) -> Self {
        Self { data, energy }
    }

    pub fn empty(num_relays: usize) -> Self {
        Self {
            data: vec![0; num_relays],
            energy: vec![0; num_relays],
        }
    }

    pub fn num_relays(&self) -> usize {
        self.data.len()
    }

    pub fn validate(&self, config: &NetworkConfig) -> Result<()> {
        if self.data.len() != config.num_relays || self.energy.len() != config.num_relays {
            return Err(Error::InvalidState(format!(
                "{self} does not have {} relays",
                config.num_relays
            )));
        }
        if self.data.iter().any(|&d| d > config.buffer_capacity)
            || self.energy.iter().any(|&e| e > config.storage_capacity)
        {
            return Err(Error::InvalidState(format!("{self} exceeds capacity")));
        }
        Ok(())
    }

    /// Total packets held in relay buffers.
    pub fn buffered(&self) -> u64 {
        self.data.iter().map(|&d| d as u64).sum()
    }
}

/// Canonical text form `D:[..];E:[..]`.
impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(v: &[u32]) -> String {
            v.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
        }
        write!(f, "D:[{}];E:[{}]", list(&self.data), list(&self.energy))
    }
}

impl FromStr for SystemState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidState(format!("cannot parse `{s}`"));
        let (d, e) = s.trim().split_once(';').ok_or_else(bad)?;
        let parse = |part: &str, tag: &str| -> Result<Vec<u32>> {
            let inner = part
                .strip_prefix(tag)
                .and_then(|p| p.strip_prefix('['))
                .and_then(|p| p.strip_suffix(']'))
                .ok_or_else(bad)?;
            if inner.is_empty() {
                return Ok(Vec::new());
            }
            inner
                .split(',')
                .map(|x| x.trim().parse().map_err(|_| bad()))
                .collect()
        };
        let data = parse(d, "D:")?;
        let energy = parse(e, "E:")?;
        if data.len() != energy.len() {
            return Err(bad());
        }
        Ok(Self { data, energy })
    }
}

/// Ascending-sorted availability indices of a state; `Ord` is the
/// lexicographic order in which a larger vector means higher availability.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AvailabilityVector(Vec<u32>);

impl AvailabilityVector {
    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn from_sorted(indices: Vec<u32>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] <= w[1]));
        Self(indices)
    }
}

/// `(distance from empty buffer, distance from full buffer, distance from empty storage)`.
pub fn availability_indices(
    state: &SystemState,
    config: &NetworkConfig,
    relay: usize,
) -> (u32, u32, u32) {
    let d = state.data[relay];
    (d, config.buffer_capacity - d, state.energy[relay])
}

pub fn availability_vector(state: &SystemState, config: &NetworkConfig) -> AvailabilityVector {
    let mut v = Vec::with_capacity(3 * config.num_relays);
    for k in 0..config.num_relays {
        let (a, b, c) = availability_indices(state, config, k);
        v.extend([a, b, c]);
    }
    v.sort_unstable();
    AvailabilityVector(v)
}

/// Lexicographic comparison; `Greater` means `a` has higher availability.
pub fn compare_availability(a: &AvailabilityVector, b: &AvailabilityVector) -> Result<Ordering> {
    if a.0.len() != b.0.len() {
        return Err(Error::LengthMismatch(a.0.len(), b.0.len()));
    }
    Ok(a.cmp(b))
}

pub fn is_link_available(state: &SystemState, config: &NetworkConfig, link: LinkId) -> bool {
    let k = link.relay;
    match link.direction {
        Direction::SourceToRelay => state.data[k] < config.buffer_capacity,
        Direction::RelayToDestination => state.data[k] > 0 && state.energy[k] > 0,
    }
}

/// Available links in canonical order (source links, then relay links).
pub fn available_links(state: &SystemState, config: &NetworkConfig) -> Vec<LinkId> {
    config
        .links()
        .filter(|&l| is_link_available(state, config, l))
        .collect()
}

/// Returns the relay whose buffer is one short of full when the state is an
/// edge state: every storage empty, one buffer at `L_D - 1`, the rest full.
pub fn is_edge_state(state: &SystemState, config: &NetworkConfig) -> Option<usize> {
    if state.energy.iter().any(|&e| e > 0) {
        return None;
    }
    let mut nearly_full = None;
    for (k, &d) in state.data.iter().enumerate() {
        if d == config.buffer_capacity {
            continue;
        }
        if d + 1 == config.buffer_capacity && nearly_full.is_none() {
            nearly_full = Some(k);
        } else {
            return None;
        }
    }
    nearly_full
}

pub fn is_deadlock(state: &SystemState, config: &NetworkConfig) -> bool {
    !config.links().any(|l| is_link_available(state, config, l))
}

/// Applies the outcome of one slot. `increments[j]` is the energy harvested
/// by relay `j` while the source transmits; it must be zero for the selected
/// relay, and all zero for a relay transmission.
pub fn apply_transition(
    state: &SystemState,
    config: &NetworkConfig,
    link: LinkId,
    increments: &[u32],
) -> Result<SystemState> {
    if !is_link_available(state, config, link) {
        return Err(Error::UnavailableLink(link));
    }
    if increments.len() != config.num_relays {
        return Err(invalid("increments", "need one entry per relay"));
    }
    match link.direction {
        Direction::SourceToRelay if increments[link.relay] != 0 => {
            return Err(invalid("increments", "selected relay does not harvest"));
        }
        Direction::RelayToDestination if increments.iter().any(|&m| m != 0) => {
            return Err(invalid("increments", "relay transmissions do not charge"));
        }
        _ => {}
    }
    let mut next = state.clone();
    apply_in_place(&mut next, config, link, increments);
    Ok(next)
}

/// Unchecked form of [`apply_transition`] for hot loops.
pub(crate) fn apply_in_place(
    state: &mut SystemState,
    config: &NetworkConfig,
    link: LinkId,
    increments: &[u32],
) {
    let k = link.relay;
    match link.direction {
        Direction::SourceToRelay => {
            state.data[k] = (state.data[k] + 1).min(config.buffer_capacity);
            for (j, (e, &m)) in state.energy.iter_mut().zip(increments).enumerate() {
                if j != k {
                    *e = e.saturating_add(m).min(config.storage_capacity);
                }
            }
        }
        Direction::RelayToDestination => {
            state.data[k] = state.data[k].saturating_sub(1);
            state.energy[k] = state.energy[k].saturating_sub(1);
        }
    }
}

/// Mixed-radix bijection between states and `0..count`.
///
/// Digits are `data[0], .., data[K-1], energy[0], .., energy[K-1]`, with
/// `data[0]` most significant; data digits have radix `L_D + 1`, energy
/// digits radix `L_E + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateIndexer {
    num_relays: usize,
    data_radix: u64,
    energy_radix: u64,
    count: u64,
}

impl StateIndexer {
    pub fn new(config: &NetworkConfig) -> Result<Self> {
        Self::with_cap(config, u64::MAX)
    }

    /// Rejects configurations with more than `cap` states.
    pub fn with_cap(config: &NetworkConfig, cap: u64) -> Result<Self> {
        let count = config.state_count();
        if count > cap as u128 {
            return Err(Error::StateCapExceeded { count, cap });
        }
        Ok(Self {
            num_relays: config.num_relays,
            data_radix: config.buffer_capacity as u64 + 1,
            energy_radix: config.storage_capacity as u64 + 1,
            count: count as u64,
        })
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn index(&self, state: &SystemState) -> u64 {
        let mut idx = 0u64;
        for &d in &state.data {
            idx = idx * self.data_radix + d as u64;
        }
        for &e in &state.energy {
            idx = idx * self.energy_radix + e as u64;
        }
        idx
    }

    pub fn state_of(&self, mut idx: u64) -> SystemState {
        let mut state = SystemState::empty(self.num_relays);
        for e in state.energy.iter_mut().rev() {
            *e = (idx % self.energy_radix) as u32;
            idx /= self.energy_radix;
        }
        for d in state.data.iter_mut().rev() {
            *d = (idx % self.data_radix) as u32;
            idx /= self.data_radix;
        }
        state
    }
}

/// All states in index order.
pub fn enumerate_states(config: &NetworkConfig, cap: u64) -> Result<Vec<SystemState>> {
    let indexer = StateIndexer::with_cap(config, cap)?;
    Ok((0..indexer.count()).map(|i| indexer.state_of(i)).collect())
}

//! Exact Markov-chain analysis of the proposed scheme.
//!
//! Column `i` of the transition matrix holds `P(s_j | s_i)`; the diagonal is
//! the per-state outage probability, since outage slots freeze the state.

mod curve;
mod solve;

pub use curve::{estimate_diversity, CurvePoint, OutageCurve, SeriesSource};
pub use solve::{
    analyze, analyze_matrix, overall_outage, stationary_distribution, OutageAnalysis, SolveMethod,
    StationaryDistribution, DIRECT_SOLVE_LIMIT,
};

use std::io::Write;

use rayon::prelude::*;

use crate::channel::{charge_and_outage_prob, charge_prob, Direction};
use crate::error::Result;
use crate::policy::rank_links;
use crate::state::{
    apply_in_place, available_links, is_deadlock, is_edge_state, LinkId, NetworkConfig,
    StateIndexer, SystemState,
};

/// Probability that no link transmits in `state`.
pub fn state_outage_prob(state: &SystemState, config: &NetworkConfig) -> f64 {
    if is_deadlock(state, config) {
        return 1.0;
    }
    if let Some(q) = is_edge_state(state, config) {
        let pass = 1.0 - config.link_outage_prob(LinkId::source(q));
        let no_charge: f64 = (0..config.num_relays)
            .filter(|&k| k != q)
            .map(|k| no_charge_prob(state, config, k))
            .product();
        return 1.0 - pass * (1.0 - no_charge);
    }
    available_links(state, config)
        .into_iter()
        .map(|l| config.link_outage_prob(l))
        .product()
}

fn headroom(state: &SystemState, config: &NetworkConfig, k: usize) -> u32 {
    config.storage_capacity - state.energy[k]
}

fn no_charge_prob(state: &SystemState, config: &NetworkConfig, k: usize) -> f64 {
    charge_prob(
        0,
        headroom(state, config, k),
        config.source_links[k],
        &config.power,
    )
    .expect("m = 0 never exceeds headroom")
}

/// Per-relay distribution over harvested units while `s -> selected`
/// transmits. `outage[k]` marks relays whose own source link must also be in
/// outage (it outranks the selected link).
fn increment_tables(
    state: &SystemState,
    config: &NetworkConfig,
    selected: usize,
    outage: &[bool],
) -> Vec<Vec<f64>> {
    let xi_s = config.threshold(Direction::SourceToRelay);
    (0..config.num_relays)
        .map(|k| {
            if k == selected {
                return vec![1.0];
            }
            let h = headroom(state, config, k);
            let ch = config.source_links[k];
            (0..=h)
                .map(|m| {
                    if outage[k] {
                        charge_and_outage_prob(m, h, ch, xi_s, &config.power)
                    } else {
                        charge_prob(m, h, ch, &config.power)
                    }
                    .expect("m <= headroom")
                })
                .collect()
        })
        .collect()
}

/// Visits every increment vector with nonzero probability.
fn for_each_increment(tables: &[Vec<f64>], mut visit: impl FnMut(&[u32], f64)) {
    fn rec(
        tables: &[Vec<f64>],
        k: usize,
        prob: f64,
        incs: &mut Vec<u32>,
        visit: &mut dyn FnMut(&[u32], f64),
    ) {
        if k == tables.len() {
            visit(incs, prob);
            return;
        }
        for (m, &p) in tables[k].iter().enumerate() {
            if p > 0.0 {
                incs[k] = m as u32;
                rec(tables, k + 1, prob * p, incs, visit);
            }
        }
        incs[k] = 0;
    }
    let mut incs = vec![0; tables.len()];
    rec(tables, 0, 1.0, &mut incs, &mut visit);
}

/// Sparse column of the transition matrix for `state`, as `(row, prob)`
/// pairs sorted by row. Includes the diagonal outage term.
pub fn transition_column(
    state: &SystemState,
    config: &NetworkConfig,
    indexer: &StateIndexer,
) -> Vec<(u64, f64)> {
    let here = indexer.index(state);
    let mut entries = vec![(here, state_outage_prob(state, config))];
    let mut push = |link: LinkId, incs: &[u32], prob: f64| {
        let mut next = state.clone();
        apply_in_place(&mut next, config, link, incs);
        entries.push((indexer.index(&next), prob));
    };

    if let Some(q) = is_edge_state(state, config) {
        let link = LinkId::source(q);
        let pass = 1.0 - config.link_outage_prob(link);
        let tables = increment_tables(state, config, q, &vec![false; config.num_relays]);
        for_each_increment(&tables, |incs, p| {
            if incs.iter().any(|&m| m >= 1) {
                push(link, incs, pass * p);
            }
        });
    } else if let Ok(ranking) = rank_links(state, config) {
        // Outage product over higher-priority relay links, and which source
        // links outrank the current one.
        let mut relay_outage = 1.0;
        let mut source_outranks = vec![false; config.num_relays];
        for &link in ranking.links() {
            let pass = 1.0 - config.link_outage_prob(link);
            match link.direction {
                Direction::RelayToDestination => {
                    let source_outage: f64 = (0..config.num_relays)
                        .filter(|&k| source_outranks[k])
                        .map(|k| config.link_outage_prob(LinkId::source(k)))
                        .product();
                    let zeros = vec![0; config.num_relays];
                    push(link, &zeros, pass * relay_outage * source_outage);
                    relay_outage *= config.link_outage_prob(link);
                }
                Direction::SourceToRelay => {
                    let tables = increment_tables(state, config, link.relay, &source_outranks);
                    let base = pass * relay_outage;
                    for_each_increment(&tables, |incs, p| push(link, incs, base * p));
                    source_outranks[link.relay] = true;
                }
            }
        }
    }

    entries.sort_unstable_by_key(|&(j, _)| j);
    entries.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    entries.retain(|&(_, p)| p > 0.0);
    entries
}

/// Column-stochastic transition matrix over all enumerated states.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    indexer: StateIndexer,
    columns: Vec<Vec<(u32, f64)>>,
}

impl TransitionMatrix {
    /// Builds every column in parallel. Fails if the state count exceeds `cap`.
    pub fn build(config: &NetworkConfig, cap: u64) -> Result<Self> {
        config.validate()?;
        let indexer = StateIndexer::with_cap(config, cap)?;
        let columns = (0..indexer.count())
            .into_par_iter()
            .map(|i| {
                transition_column(&indexer.state_of(i), config, &indexer)
                    .into_iter()
                    .map(|(j, p)| (j as u32, p))
                    .collect()
            })
            .collect();
        Ok(Self { indexer, columns })
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn indexer(&self) -> &StateIndexer {
        &self.indexer
    }

    /// Nonzero entries `(row, prob)` of column `i`.
    pub fn column(&self, i: usize) -> &[(u32, f64)] {
        &self.columns[i]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let c = &self.columns[col];
        c.binary_search_by_key(&(row as u32), |&(j, _)| j)
            .map(|pos| c[pos].1)
            .unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| c.iter().map(|&(_, p)| p).sum())
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for (i, col) in self.columns.iter().enumerate() {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for &(j, p) in col {
                y[j as usize] += p * xi;
            }
        }
        y
    }

    /// Writes `state_i,state_j,prob` lines (transition from `i` to `j`),
    /// column by column with rows ascending.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "state_i,state_j,prob")?;
        for (i, col) in self.columns.iter().enumerate() {
            for &(j, p) in col {
                writeln!(out, "{i},{j},{p:e}")?;
            }
        }
        Ok(())
    }
}

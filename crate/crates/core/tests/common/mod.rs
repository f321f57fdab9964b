#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

use relay_grid::channel::PowerParams;
use relay_grid::policy::rank_links;
use relay_grid::state::{apply_transition, available_links, is_deadlock, is_edge_state};
use relay_grid::{Direction, LinkId, NetworkConfig, SystemState};

pub fn config(k: usize, ld: u32, le: u32, rho: f64, alpha: f64, snr_db: f64) -> NetworkConfig {
    let power = PowerParams {
        source_power: 1.0,
        relay_coeff: alpha,
        harvest_coeff: rho,
        noise_power: 1.0,
        target_rate: 1.0,
    };
    NetworkConfig::uniform(k, ld, le, 1.0, power)
        .unwrap()
        .with_snr_db(snr_db)
}

/// Every increment vector the channel can produce for a source link to `q`.
pub fn increment_vectors(
    state: &SystemState,
    c: &NetworkConfig,
    q: usize,
    need_charge: bool,
) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for j in 0..c.num_relays {
        let max = if j == q {
            0
        } else {
            c.storage_capacity - state.energy[j]
        };
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..=max).map(move |m| {
                    let mut w = v.clone();
                    w.push(m);
                    w
                })
            })
            .collect();
    }
    if need_charge {
        // Edge states have all storages empty; some other relay must harvest.
        out.retain(|v| v.iter().any(|&m| m >= 1));
    }
    out
}

/// States reachable from empty under any channel realization, checking that
/// none of them is a deadlock.
pub fn explore(c: &NetworkConfig) -> HashSet<SystemState> {
    let start = c.empty_state();
    let mut seen = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        assert!(!is_deadlock(&s, c), "deadlock reached: {s}");
        let selectable: Vec<(LinkId, bool)> = match is_edge_state(&s, c) {
            Some(q) => vec![(LinkId::source(q), true)],
            None => {
                let ranked = rank_links(&s, c).unwrap().into_links();
                assert_eq!(ranked.len(), available_links(&s, c).len());
                ranked.into_iter().map(|l| (l, false)).collect()
            }
        };
        for (link, edge) in selectable {
            let vectors = match link.direction {
                Direction::SourceToRelay => increment_vectors(&s, c, link.relay, edge),
                Direction::RelayToDestination => vec![vec![0; c.num_relays]],
            };
            for inc in vectors {
                let next = apply_transition(&s, c, link, &inc).unwrap();
                if seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
    }
    seen
}

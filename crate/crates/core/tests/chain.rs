use std::collections::{HashMap, HashSet, VecDeque};

mod common;

use common::{config, explore};
use relay_grid::markov::{analyze, stationary_distribution};
use relay_grid::sim::run_simulation;
use relay_grid::state::StateIndexer;
use relay_grid::{PolicyKind, SimulationSpec, SystemState, TransitionMatrix};

#[test]
fn exhaustive_search_finds_no_deadlock() {
    for k in [2, 3] {
        for (ld, le) in [(1, 1), (2, 1), (3, 2), (2, 3)] {
            if k == 3 && ld * le > 4 {
                continue;
            }
            let c = config(k, ld, le, 0.5, 1.0, 10.0);
            let reached = explore(&c);
            assert!(reached.len() > 1);
        }
    }
}

#[test]
fn search_matches_chain_support() {
    // The search ignores that a source link cannot be in outage and harvest
    // at once unless its outage threshold exceeds the charge threshold. That
    // holds at -10 dB, where every combinatorial move has positive
    // probability and the two sets coincide; at 8 dB the chain is a subset.
    for (k, ld, le, snr, exact) in [
        (2, 2, 1, -10.0, true),
        (2, 3, 2, -10.0, true),
        (3, 2, 1, -10.0, true),
        (2, 2, 1, 8.0, false),
        (3, 2, 1, 8.0, false),
    ] {
        let c = config(k, ld, le, 0.5, 1.0, snr);
        let reached = explore(&c);
        let a = TransitionMatrix::build(&c, 1_000_000).unwrap();
        let indexer = StateIndexer::new(&c).unwrap();
        let start = indexer.index(&c.empty_state()) as usize;
        let mut seen = vec![false; a.dim()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            for &(j, p) in a.column(i) {
                assert!(p > 0.0);
                if !seen[j as usize] {
                    seen[j as usize] = true;
                    queue.push_back(j as usize);
                }
            }
        }
        let support: HashSet<SystemState> = (0..a.dim())
            .filter(|&i| seen[i])
            .map(|i| indexer.state_of(i as u64))
            .collect();
        let only_bfs: Vec<_> = reached
            .difference(&support)
            .map(|s| s.to_string())
            .collect();
        let only_chain: Vec<_> = support
            .difference(&reached)
            .map(|s| s.to_string())
            .collect();
        assert!(
            only_chain.is_empty() && (!exact || only_bfs.is_empty()),
            "K={k} LD={ld} LE={le}: search only {only_bfs:?}, chain only {only_chain:?}"
        );
    }
}

#[test]
fn simulations_never_deadlock() {
    for policy in [
        PolicyKind::Proposed,
        PolicyKind::MaxLink,
        PolicyKind::Alternating,
        PolicyKind::MaxMin,
    ] {
        for (k, ld, le, rho) in [(2, 3, 2, 0.5), (3, 1, 1, 2.0), (3, 2, 4, 0.3)] {
            let c = config(k, ld, le, rho, 1.0, 10.0);
            let r = run_simulation(&SimulationSpec::new(c, policy, 10.0, 200_000, 5)).unwrap();
            if policy == PolicyKind::Proposed {
                assert_eq!(r.deadlock_slots, 0, "{policy:?} K={k}");
            }
            assert!(r.outage_fraction <= 1.0);
        }
    }
}

/// Two-sided normal quantile for a family-wise level of 1e-3 over at most
/// 10^4 comparisons (Bonferroni): Φ⁻¹(1 − 5e-8) ≈ 5.33.
const Z_FAMILY: f64 = 5.4;

#[test]
fn transition_frequencies_match_matrix() {
    let c = config(2, 3, 2, 0.5, 1.0, 8.0);
    let a = TransitionMatrix::build(&c, 1_000_000).unwrap();
    let mut spec = SimulationSpec::new(c.clone(), PolicyKind::Proposed, 8.0, 5_000_000, 11);
    spec.track_chain = true;
    let r = run_simulation(&spec).unwrap();

    let mut visits: HashMap<u64, u64> = HashMap::new();
    let mut counts: HashMap<(u64, u64), u64> = HashMap::new();
    for &(i, j, n) in &r.transition_counts {
        *visits.entry(i).or_default() += n;
        counts.insert((i, j), n);
    }
    // Every observed transition must exist in the matrix.
    for &(i, j) in counts.keys() {
        assert!(
            a.get(j as usize, i as usize) > 0.0,
            "unexpected move {i} -> {j}"
        );
    }
    let mut compared = 0;
    for (&i, &n) in &visits {
        if n < 1000 {
            continue;
        }
        for &(j, p) in a.column(i as usize) {
            let observed = *counts.get(&(i, j as u64)).unwrap_or(&0) as f64 / n as f64;
            let sd = (p * (1.0 - p) / n as f64).sqrt().max(1e-12);
            let z = (observed - p).abs() / sd;
            assert!(
                z < Z_FAMILY,
                "{i}->{j}: observed {observed}, expected {p}, z = {z:.2}"
            );
            compared += 1;
        }
    }
    assert!(compared > 10);
}

#[test]
fn occupancy_matches_stationary_distribution() {
    let c = config(2, 3, 2, 0.5, 1.0, 8.0);
    let analysis = analyze(&c, 1_000_000).unwrap();
    let mut spec = SimulationSpec::new(c, PolicyKind::Proposed, 8.0, 10_000_000, 21);
    spec.track_chain = true;
    let r = run_simulation(&spec).unwrap();
    let pi = &analysis.stationary.pi;
    let mut sim = vec![0.0; pi.len()];
    for &(i, f) in &r.occupancy {
        sim[i as usize] = f;
    }
    let tv = 0.5 * pi.iter().zip(&sim).map(|(a, b)| (a - b).abs()).sum::<f64>();
    assert!(tv < 0.01, "total variation {tv}");
}

#[test]
fn stationary_solution_is_a_fixed_point() {
    let c = config(3, 2, 2, 0.5, 0.7, 6.0);
    let a = TransitionMatrix::build(&c, 1_000_000).unwrap();
    let start = a.indexer().index(&c.empty_state()) as usize;
    let s = stationary_distribution(&a, start).unwrap();
    let next = a.mul_vec(&s.pi);
    let err = next
        .iter()
        .zip(&s.pi)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-10);
    assert!((s.pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
}

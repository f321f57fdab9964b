//! Stationary distribution and overall outage probability.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::TransitionMatrix;
use crate::error::{Error, Result};
use crate::state::{NetworkConfig, DEFAULT_STATE_CAP};

/// Largest recurrent class solved with a dense direct method.
pub const DIRECT_SOLVE_LIMIT: usize = 5000;

const POWER_TOLERANCE: f64 = 1e-12;
const POWER_MAX_ITERATIONS: usize = 2_000_000;
const RESIDUAL_TOLERANCE: f64 = 1e-8;
const ROUTE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Direct,
    PowerIteration { iterations: usize },
}

/// Stationary distribution over all enumerated states; zero outside the
/// recurrent class reached from the start state.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
    /// Sorted state indices of the recurrent class.
    pub class: Vec<usize>,
    pub method: SolveMethod,
    /// `‖Aπ − π‖∞`.
    pub residual: f64,
}

fn reachable_from(a: &TransitionMatrix, start: usize) -> Vec<usize> {
    let mut seen = vec![false; a.dim()];
    let mut order = Vec::new();
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        order.push(i);
        for &(j, _) in a.column(i) {
            let j = j as usize;
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.sort_unstable();
    order
}

/// The unique closed communicating class reachable from `start`.
fn recurrent_class(a: &TransitionMatrix, start: usize) -> Result<Vec<usize>> {
    let reach = reachable_from(a, start);
    let mut local = vec![usize::MAX; a.dim()];
    for (n, &i) in reach.iter().enumerate() {
        local[i] = n;
    }
    let mut graph = DiGraph::<(), ()>::with_capacity(reach.len(), 0);
    let nodes: Vec<_> = reach.iter().map(|_| graph.add_node(())).collect();
    for (n, &i) in reach.iter().enumerate() {
        for &(j, _) in a.column(i) {
            graph.add_edge(nodes[n], nodes[local[j as usize]], ());
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut component = vec![0usize; reach.len()];
    for (c, scc) in sccs.iter().enumerate() {
        for node in scc {
            component[node.index()] = c;
        }
    }
    let closed: Vec<usize> = (0..sccs.len())
        .filter(|&c| {
            sccs[c].iter().all(|node| {
                graph
                    .neighbors(*node)
                    .all(|next| component[next.index()] == c)
            })
        })
        .collect();
    if closed.len() != 1 {
        return Err(Error::Reducible {
            closed_classes: closed.len(),
        });
    }
    let mut class: Vec<usize> = sccs[closed[0]].iter().map(|n| reach[n.index()]).collect();
    class.sort_unstable();
    Ok(class)
}

/// Dense `A_C − I + B` on the class, with `B` all ones.
fn shifted_dense(a: &TransitionMatrix, class: &[usize], local: &[usize]) -> DMatrix<f64> {
    let n = class.len();
    let mut m = DMatrix::from_element(n, n, 1.0);
    for (c, &i) in class.iter().enumerate() {
        m[(c, c)] -= 1.0;
        for &(j, p) in a.column(i) {
            m[(local[j as usize], c)] += p;
        }
    }
    m
}

fn power_iteration(
    a: &TransitionMatrix,
    class: &[usize],
    local: &[usize],
) -> Result<(Vec<f64>, usize)> {
    let n = class.len();
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=POWER_MAX_ITERATIONS {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (c, &i) in class.iter().enumerate() {
            for &(j, p) in a.column(i) {
                y[local[j as usize]] += p * x[c];
            }
        }
        residual = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual < POWER_TOLERANCE {
            return Ok((y, it));
        }
        // Lazy step: same fixed point, no periodic oscillation.
        for (xv, yv) in x.iter_mut().zip(&y) {
            *xv = 0.5 * (*xv + yv);
        }
        let s: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= s);
    }
    Err(Error::NotConverged {
        iterations: POWER_MAX_ITERATIONS,
        residual,
    })
}

/// Solves `(A − I + B)π = b` on the recurrent class reachable from `start`
/// (dense LU up to [`DIRECT_SOLVE_LIMIT`] states, power iteration beyond) and
/// embeds the result with zeros elsewhere.
pub fn stationary_distribution(
    a: &TransitionMatrix,
    start: usize,
) -> Result<StationaryDistribution> {
    let class = recurrent_class(a, start)?;
    let mut local = vec![usize::MAX; a.dim()];
    for (c, &i) in class.iter().enumerate() {
        local[i] = c;
    }
    let (restricted, method) = if class.len() <= DIRECT_SOLVE_LIMIT {
        let m = shifted_dense(a, &class, &local);
        let b = DVector::from_element(class.len(), 1.0);
        let pi = m.lu().solve(&b).ok_or(Error::Singular)?;
        (pi.as_slice().to_vec(), SolveMethod::Direct)
    } else {
        let (pi, iterations) = power_iteration(a, &class, &local)?;
        (pi, SolveMethod::PowerIteration { iterations })
    };

    let mut pi = vec![0.0; a.dim()];
    for (c, &i) in class.iter().enumerate() {
        // Round-off can leave entries a hair below zero.
        pi[i] = restricted[c].max(0.0);
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    let ap = a.mul_vec(&pi);
    let residual = ap
        .iter()
        .zip(&pi)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    if !residual.is_finite() || residual > RESIDUAL_TOLERANCE {
        return Err(Error::Singular);
    }
    Ok(StationaryDistribution {
        pi,
        class,
        method,
        residual,
    })
}

/// Outage probability of one network configuration.
#[derive(Debug, Clone)]
pub struct OutageAnalysis {
    /// `Σ π_i A_ii`.
    pub p_out: f64,
    /// `diag(A)ᵀ (A − I + B)⁻¹ b` on the recurrent class, evaluated through
    /// the transposed system; only for direct solves.
    pub p_out_closed_form: Option<f64>,
    pub stationary: StationaryDistribution,
    pub state_count: usize,
}

/// Analyzes `config` as given (its power parameters fix the SNR and rate),
/// starting from the all-empty state.
pub fn analyze(config: &NetworkConfig, cap: u64) -> Result<OutageAnalysis> {
    let a = TransitionMatrix::build(config, cap)?;
    analyze_matrix(&a, config)
}

pub fn analyze_matrix(a: &TransitionMatrix, config: &NetworkConfig) -> Result<OutageAnalysis> {
    let start = a.indexer().index(&config.empty_state()) as usize;
    let stationary = stationary_distribution(a, start)?;
    let diag = a.diagonal();
    let p_out: f64 = stationary.pi.iter().zip(&diag).map(|(p, d)| p * d).sum();

    let p_out_closed_form = if stationary.method == SolveMethod::Direct {
        let class = &stationary.class;
        let mut local = vec![usize::MAX; a.dim()];
        for (c, &i) in class.iter().enumerate() {
            local[i] = c;
        }
        // (A − I + B)ᵀ y = diag(A)  ⇒  diag(A)ᵀ (A − I + B)⁻¹ b = yᵀ b.
        let mt = shifted_dense(a, class, &local).transpose();
        let d = DVector::from_iterator(class.len(), class.iter().map(|&i| diag[i]));
        let y = mt.lu().solve(&d).ok_or(Error::Singular)?;
        let closed = y.sum();
        if (closed - p_out).abs() > ROUTE_TOLERANCE {
            return Err(Error::RouteMismatch {
                direct: p_out,
                closed_form: closed,
            });
        }
        Some(closed)
    } else {
        None
    };

    Ok(OutageAnalysis {
        p_out,
        p_out_closed_form,
        stationary,
        state_count: a.dim(),
    })
}

/// Overall outage at `snr_db` (with `σ²` as configured), using the default
/// state cap.
pub fn overall_outage(config: &NetworkConfig, snr_db: f64) -> Result<OutageAnalysis> {
    analyze(&config.with_snr_db(snr_db), DEFAULT_STATE_CAP)
}

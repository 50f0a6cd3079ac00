use nalgebra::DMatrix;

use super::{Marginals, TransportPlan};
use crate::affinity::{gw_objective, CostMatrices};
use crate::error::{Error, Result};

/// Largest side length either exact oracle accepts.
pub const ORACLE_MAX_SIZE: usize = 8;

const FLOW_EPS: f64 = 1e-15;

#[derive(Debug, Clone)]
pub enum OracleProblem {
    /// `min ⟨cost, Γ⟩` over the marginal polytope.
    Linear { cost: DMatrix<f64>, marginals: Marginals },
    /// `min ⟨Cpq, Γ⟩ + ⟨L(Γ), Γ⟩` over plans that put an equal weight on each
    /// pair of a partial injection.
    Quadratic { costs: CostMatrices, marginals: Marginals },
}

/// Exact optimum of a tiny transport problem.
///
/// The linear case is solved as a min-cost flow (successive shortest paths),
/// which reaches the optimal vertex of the transport polytope for arbitrary
/// marginals and mass. The quadratic case enumerates every partial injection
/// of `k = ⌈s / w⌉` pairs, where `w` is the smallest marginal entry, each
/// carrying mass `s / k`; for uniform square equality problems these are the
/// scaled permutation matrices.
pub fn exact_small_oracle(problem: &OracleProblem) -> Result<TransportPlan> {
    let (marginals, rows, cols) = match problem {
        OracleProblem::Linear { cost, marginals } => (marginals, cost.nrows(), cost.ncols()),
        OracleProblem::Quadratic { costs, marginals } => (marginals, costs.rows(), costs.cols()),
    };
    if rows > ORACLE_MAX_SIZE || cols > ORACLE_MAX_SIZE {
        return Err(Error::OracleTooLarge { rows, cols, max: ORACLE_MAX_SIZE });
    }
    marginals.check_shape(rows, cols)?;
    let (gamma, objective) = match problem {
        OracleProblem::Linear { cost, marginals } => {
            let g = min_cost_flow(cost, marginals)?;
            let obj = cost.dot(&g);
            (g, obj)
        }
        OracleProblem::Quadratic { costs, marginals } => best_injection(costs, marginals)?,
    };
    Ok(TransportPlan {
        gamma,
        marginals: marginals.clone(),
        objective_trace: vec![objective],
        iterations: 1,
        converged: true,
    })
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

/// Source → rows (cap p) → columns (cap ∞, cost C) → sink (cap q).
fn min_cost_flow(cost: &DMatrix<f64>, marginals: &Marginals) -> Result<DMatrix<f64>> {
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("exact oracle needs finite costs"));
    }
    let (n, m) = cost.shape();
    let source = n + m;
    let sink = source + 1;
    let nodes = sink + 1;
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut add = |edges: &mut Vec<Edge>, from: usize, to: usize, cap: f64, cost: f64| {
        adj[from].push(edges.len());
        edges.push(Edge { to, cap, cost });
        adj[to].push(edges.len());
        edges.push(Edge { to: from, cap: 0.0, cost: -cost });
    };
    for i in 0..n {
        add(&mut edges, source, i, marginals.p()[i], 0.0);
    }
    let mut pair_edge = vec![0usize; n * m];
    for i in 0..n {
        for j in 0..m {
            pair_edge[i * m + j] = edges.len();
            add(&mut edges, i, n + j, f64::INFINITY, cost[(i, j)]);
        }
    }
    for j in 0..m {
        add(&mut edges, n + j, sink, marginals.q()[j], 0.0);
    }

    let mut remaining = marginals.total_mass();
    let target = remaining;
    while remaining > FLOW_EPS * target.max(1.0) {
        // Bellman-Ford on the residual graph; it has no negative cycles while
        // every augmentation follows a shortest path.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        dist[source] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &e in &adj[u] {
                    let edge = &edges[e];
                    if edge.cap > FLOW_EPS && dist[u] + edge.cost < dist[edge.to] - 1e-15 {
                        dist[edge.to] = dist[u] + edge.cost;
                        via[edge.to] = e;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink] == f64::INFINITY {
            return Err(Error::InfeasibleMass { mass: target, limit: target - remaining });
        }
        let mut push = remaining;
        let mut v = sink;
        while v != source {
            let e = via[v];
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = sink;
        while v != source {
            let e = via[v];
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            v = edges[e ^ 1].to;
        }
        remaining -= push;
    }

    Ok(DMatrix::from_fn(n, m, |i, j| edges[pair_edge[i * m + j] ^ 1].cap))
}

fn best_injection(costs: &CostMatrices, marginals: &Marginals) -> Result<(DMatrix<f64>, f64)> {
    let (n, m) = (costs.rows(), costs.cols());
    let smallest = marginals.p().iter().chain(marginals.q().iter()).fold(f64::INFINITY, |a, &x| a.min(x));
    let mass = marginals.total_mass();
    if !(smallest > 0.0) {
        return Err(Error::invalid("quadratic oracle needs strictly positive marginals"));
    }
    let k = ((mass / smallest) - 1e-9).ceil().max(1.0) as usize;
    if k > n.min(m) {
        return Err(Error::invalid(format!(
            "mass {mass} cannot be spread over a partial injection of at most {} pairs",
            n.min(m)
        )));
    }
    let weight = mass / k as f64;

    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    let mut pairs = Vec::with_capacity(k);
    let mut used = vec![false; m];
    let mut gamma = DMatrix::zeros(n, m);
    enumerate(0, k, n, &mut used, &mut pairs, &mut |pairs| {
        gamma.fill(0.0);
        for &(i, j) in pairs {
            gamma[(i, j)] = weight;
        }
        let obj = costs.cpq.dot(&gamma) + gw_objective(costs, &gamma).unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, pairs.to_vec()));
        }
    });
    let (obj, pairs) = best.ok_or_else(|| Error::invalid("no partial injection found"))?;
    let mut gamma = DMatrix::zeros(n, m);
    for (i, j) in pairs {
        gamma[(i, j)] = weight;
    }
    Ok((gamma, obj))
}

/// Visits every injection of `k` rows (chosen in increasing order from
/// `row..n`) into distinct columns.
fn enumerate(
    row: usize,
    k: usize,
    n: usize,
    used: &mut [bool],
    pairs: &mut Vec<(usize, usize)>,
    visit: &mut dyn FnMut(&[(usize, usize)]),
) {
    if pairs.len() == k {
        visit(pairs);
        return;
    }
    if n - row < k - pairs.len() {
        return;
    }
    for j in 0..used.len() {
        if !used[j] {
            used[j] = true;
            pairs.push((row, j));
            enumerate(row + 1, k, n, used, pairs, visit);
            pairs.pop();
            used[j] = false;
        }
    }
    enumerate(row + 1, k, n, used, pairs, visit);
}

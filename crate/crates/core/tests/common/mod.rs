//! Shared generators for the integration suites.

use influence::budgetmax::{AllocationProblem, CoverageObjective, ModularObjective};
use influence::constraints::{normalize_costs, ConstraintSystem, GroundSet};
use influence::netmodel::{DiffusionNetwork, NodeId, TransmissionLaw};
use influence::rngs::stream_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64, index: u64) -> ChaCha8Rng {
    stream_rng(seed, 0xACC, index)
}

/// Random directed graph on `n` nodes with independent edge probability `p`
/// and exponential laws with rates in `[0.5, 2]`.
pub fn random_digraph(n: usize, p: f64, rng: &mut impl Rng) -> DiffusionNetwork {
    let mut edges = Vec::new();
    for u in 0..n as NodeId {
        for v in 0..n as NodeId {
            if u != v && rng.gen_bool(p) {
                let law = TransmissionLaw::exponential(rng.gen_range(0.5..2.0)).unwrap();
                edges.push((u, v, law));
            }
        }
    }
    DiffusionNetwork::new(n, edges).unwrap()
}

pub enum ExactProblem {
    Modular(AllocationProblem<ModularObjective>),
    Coverage(AllocationProblem<CoverageObjective>),
}

/// Random uniform-cost instance with an exact oracle: either additive
/// per-element values or exact coverage counts over fixed edge-time draws.
pub fn random_uniform_instance(seed: u64, index: u64, delta: f64) -> ExactProblem {
    let mut r = rng(seed, index);
    let products = r.gen_range(1..=3usize);
    let users = r.gen_range(2..=6usize);
    let ground = GroundSet::new(products, users).unwrap();
    let user_caps: Vec<u32> = (0..users).map(|_| r.gen_range(0..3)).collect();
    let row_caps: Vec<u32> = (0..products).map(|_| r.gen_range(0..4)).collect();
    let sys = ConstraintSystem::uniform(ground, &user_caps, &row_caps).unwrap();
    if index.is_multiple_of(2) {
        let values: Vec<f64> = (0..ground.size()).map(|_| r.gen_range(0.0..5.0)).collect();
        let obj = ModularObjective::new(ground, values).unwrap();
        ExactProblem::Modular(AllocationProblem::new(obj, sys, delta).unwrap())
    } else {
        let nets: Vec<DiffusionNetwork> = (0..products)
            .map(|_| random_digraph(users, r.gen_range(0.15..0.5), &mut r))
            .collect();
        let weights: Vec<f64> = (0..products).map(|_| r.gen_range(0.5..2.0)).collect();
        let horizons: Vec<f64> = (0..products).map(|_| r.gen_range(0.5..3.0)).collect();
        let user_nodes: Vec<NodeId> = (0..users as NodeId).collect();
        let obj = CoverageObjective::from_networks(
            &nets,
            weights,
            &horizons,
            &user_nodes,
            3,
            seed ^ index,
        )
        .unwrap();
        ExactProblem::Coverage(AllocationProblem::new(obj, sys, delta).unwrap())
    }
}

/// Smallest label among nodes within distance `t` of `s`, by a plain
/// quadratic Dijkstra; the independent oracle for sketch queries.
pub fn brute_min_label(
    net: &DiffusionNetwork,
    times: &[f64],
    labels: &[f64],
    s: NodeId,
    t: f64,
) -> f64 {
    let n = net.num_nodes();
    let mut dist = vec![f64::INFINITY; n];
    dist[s as usize] = 0.0;
    let mut visited = vec![false; n];
    loop {
        let mut u = None;
        let mut du = f64::INFINITY;
        for v in 0..n {
            if !visited[v] && dist[v] < du {
                du = dist[v];
                u = Some(v);
            }
        }
        let Some(u) = u else { break };
        visited[u] = true;
        for &(next, eidx) in net.forward(u as NodeId) {
            let nd = du + times[eidx as usize];
            if nd < dist[next as usize] {
                dist[next as usize] = nd;
            }
        }
    }
    (0..n)
        .filter(|&v| dist[v] <= t)
        .map(|v| labels[v])
        .fold(f64::INFINITY, f64::min)
}

/// Random knapsack instance (|Z| <= 16) with an exact oracle.
pub fn random_knapsack_instance(seed: u64, index: u64, delta: f64) -> ExactProblem {
    let mut r = rng(seed, 1_000_000 + index);
    let products = r.gen_range(1..=2usize);
    let users = r.gen_range(2..=(16 / products).min(8));
    let ground = GroundSet::new(products, users).unwrap();
    let user_caps: Vec<u32> = (0..users).map(|_| r.gen_range(0..3)).collect();
    let raw_costs: Vec<f64> = (0..ground.size()).map(|_| r.gen_range(0.05..1.3)).collect();
    let budgets: Vec<f64> = (0..products).map(|_| r.gen_range(0.5..2.0)).collect();
    let ks = normalize_costs(ground, &raw_costs, &budgets).unwrap();
    let sys = ConstraintSystem::with_knapsack(ground, &user_caps, ks).unwrap();
    if index.is_multiple_of(2) {
        let values: Vec<f64> = (0..ground.size()).map(|_| r.gen_range(0.0..5.0)).collect();
        let obj = ModularObjective::new(ground, values).unwrap();
        ExactProblem::Modular(AllocationProblem::new(obj, sys, delta).unwrap())
    } else {
        let nets: Vec<DiffusionNetwork> = (0..products)
            .map(|_| random_digraph(users, r.gen_range(0.15..0.5), &mut r))
            .collect();
        let weights: Vec<f64> = (0..products).map(|_| r.gen_range(0.5..2.0)).collect();
        let horizons: Vec<f64> = (0..products).map(|_| r.gen_range(0.5..3.0)).collect();
        let user_nodes: Vec<NodeId> = (0..users as NodeId).collect();
        let obj = CoverageObjective::from_networks(
            &nets,
            weights,
            &horizons,
            &user_nodes,
            3,
            seed ^ (index << 1),
        )
        .unwrap();
        ExactProblem::Coverage(AllocationProblem::new(obj, sys, delta).unwrap())
    }
}

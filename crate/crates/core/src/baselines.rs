//! Comparison allocators: degree-ordered greedy, its cost-aware and
//! group-local variants, and a random allocator.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::budgetmax::{Allocation, AllocationProblem, Objective, SelectionRecord};
use crate::constraints::{row_activity, GroundElement};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Descending out-degree of the user's node in the product's network.
    Degree,
    /// Descending degree-to-cost ratio.
    DegreeCostRatio,
    /// Degree-to-cost ratio, scanned round-robin across user groups.
    LocalDegree,
    Random,
}

/// Scan (product, user) pairs in descending degree (or degree/cost) order,
/// adding every pair that keeps the allocation feasible. `degrees[i][j]` is
/// the out-degree of user `j`'s node in product `i`'s network. Ties break
/// by user id, then product id.
pub fn greedy_degree<O: Objective>(
    problem: &AllocationProblem<O>,
    degrees: &[Vec<u32>],
    kind: BaselineKind,
    groups: Option<&[Vec<u32>]>,
) -> Result<Allocation> {
    let ground = problem.ground();
    if degrees.len() != ground.num_products || degrees.iter().any(|d| d.len() != ground.num_users) {
        return Err(Error::input("one degree per (product, user) pair required"));
    }
    let score = |z: GroundElement| -> f64 {
        let d = degrees[z.product as usize][z.user as usize] as f64;
        match kind {
            BaselineKind::Degree => d,
            BaselineKind::DegreeCostRatio | BaselineKind::LocalDegree => d / problem.constraints().cost(z),
            BaselineKind::Random => unreachable!("random allocation has its own entry point"),
        }
    };
    let sorted_pairs = |user_filter: &dyn Fn(u32) -> bool| -> Vec<GroundElement> {
        let mut pairs: Vec<GroundElement> = ground.iter().filter(|z| user_filter(z.user)).collect();
        pairs.sort_by(|&a, &b| {
            score(b)
                .total_cmp(&score(a))
                .then(a.user.cmp(&b.user))
                .then(a.product.cmp(&b.product))
        });
        pairs
    };

    match kind {
        BaselineKind::Degree | BaselineKind::DegreeCostRatio => {
            let pairs = sorted_pairs(&|_| true);
            commit_scan(problem, pairs.into_iter())
        }
        BaselineKind::LocalDegree => {
            let groups = groups.ok_or_else(|| Error::input("local degree baseline requires user groups"))?;
            let mut covered = vec![false; ground.num_users];
            for g in groups {
                for &u in g {
                    if u as usize >= ground.num_users {
                        return Err(Error::input(format!("group user {u} out of range")));
                    }
                    if covered[u as usize] {
                        return Err(Error::input(format!("user {u} appears in two groups")));
                    }
                    covered[u as usize] = true;
                }
            }
            if !covered.iter().all(|&c| c) {
                return Err(Error::input("groups must cover every user"));
            }
            // round-robin: one candidate pair per group visit, groups in
            // the order given; the scan-order convention between groups is
            // otherwise unspecified, so this pins one
            let queues: Vec<std::vec::IntoIter<GroundElement>> = groups
                .iter()
                .map(|g| sorted_pairs(&|u| g.contains(&u)).into_iter())
                .collect();
            let order = RoundRobin { queues, cursor: 0 };
            commit_scan(problem, order)
        }
        BaselineKind::Random => Err(Error::input("use random_allocation for the random baseline")),
    }
}

struct RoundRobin {
    queues: Vec<std::vec::IntoIter<GroundElement>>,
    cursor: usize,
}

impl Iterator for RoundRobin {
    type Item = GroundElement;

    fn next(&mut self) -> Option<GroundElement> {
        let n = self.queues.len();
        for _ in 0..n {
            let i = self.cursor;
            self.cursor = (self.cursor + 1) % n;
            if let Some(z) = self.queues[i].next() {
                return Some(z);
            }
        }
        None
    }
}

/// Uniformly shuffled pair list filtered by feasibility.
pub fn random_allocation<O: Objective, R: Rng + ?Sized>(
    problem: &AllocationProblem<O>,
    rng: &mut R,
) -> Result<Allocation> {
    let ground = problem.ground();
    let mut pairs: Vec<GroundElement> = ground.iter().collect();
    pairs.shuffle(rng);
    commit_scan(problem, pairs.into_iter())
}

fn commit_scan<O: Objective>(
    problem: &AllocationProblem<O>,
    order: impl Iterator<Item = GroundElement>,
) -> Result<Allocation> {
    let mut cstate = problem.constraints().open();
    let mut ostate = problem.objective().open_state();
    let mut trace = Vec::new();
    for z in order {
        if !cstate.can_add(z) {
            continue;
        }
        let g = problem.objective().gain(&ostate, z);
        problem.objective().commit(&mut ostate, z);
        cstate.add(z)?;
        trace.push(SelectionRecord {
            element: z,
            threshold: 0.0,
            gain: g,
            density: g / problem.constraints().cost(z),
        });
    }
    let activity = row_activity(&cstate);
    Ok(Allocation {
        selected: cstate.elements().to_vec(),
        value: problem.objective().value(&ostate),
        trace,
        k_a: activity.active.len(),
        budget_blocked: activity.budget_blocked.len(),
        rho: 0.0,
        grid: Vec::new(),
    })
}

//! The allocation ground set and its feasibility structure.
//!
//! Ground elements are (product, user) pairs. Feasible allocations lie in
//! the intersection of matroids (per-user slot caps, per-product caps under
//! uniform cost, nested group caps) with optional per-product knapsacks over
//! normalized costs.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Absolute slack on the normalized-budget test, so accumulated float sums
/// cannot flip feasibility at exact boundaries.
pub const KNAPSACK_EPS: f64 = 1e-12;

/// The product-by-user index space. Element ids are row-major:
/// `id = product * num_users + user`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundSet {
    pub num_products: usize,
    pub num_users: usize,
}

/// One assignment of a product to a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundElement {
    pub product: u32,
    pub user: u32,
}

impl GroundSet {
    pub fn new(num_products: usize, num_users: usize) -> Result<Self> {
        if num_products == 0 || num_users == 0 {
            return Err(Error::input("ground set requires at least one product and one user"));
        }
        Ok(Self {
            num_products,
            num_users,
        })
    }

    pub fn size(&self) -> usize {
        self.num_products * self.num_users
    }

    pub fn id(&self, z: GroundElement) -> usize {
        z.product as usize * self.num_users + z.user as usize
    }

    pub fn element(&self, id: usize) -> GroundElement {
        GroundElement {
            product: (id / self.num_users) as u32,
            user: (id % self.num_users) as u32,
        }
    }

    pub fn contains(&self, z: GroundElement) -> bool {
        (z.product as usize) < self.num_products && (z.user as usize) < self.num_users
    }

    /// All elements in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = GroundElement> + '_ {
        (0..self.size()).map(|id| self.element(id))
    }
}

/// Independence = per-block cardinality caps over a partition of the ground
/// set.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionMatroid {
    block_of: Vec<u32>,
    caps: Vec<u32>,
}

impl PartitionMatroid {
    pub fn new(ground: GroundSet, block_of: Vec<u32>, caps: Vec<u32>) -> Result<Self> {
        if block_of.len() != ground.size() {
            return Err(Error::input("block assignment must cover the ground set"));
        }
        if let Some(&b) = block_of.iter().find(|&&b| b as usize >= caps.len()) {
            return Err(Error::input(format!("element mapped to unknown block {b}")));
        }
        Ok(Self { block_of, caps })
    }

    /// One block per user column with capacity `user_caps[j]`.
    pub fn user_columns(ground: GroundSet, user_caps: &[u32]) -> Result<Self> {
        if user_caps.len() != ground.num_users {
            return Err(Error::input(format!(
                "expected {} user capacities, got {}",
                ground.num_users,
                user_caps.len()
            )));
        }
        let block_of = ground.iter().map(|z| z.user).collect();
        Self::new(ground, block_of, user_caps.to_vec())
    }

    /// One block per product row with capacity `product_caps[i]`;
    /// the uniform-cost reduction of a per-product budget.
    pub fn product_rows(ground: GroundSet, product_caps: &[u32]) -> Result<Self> {
        if product_caps.len() != ground.num_products {
            return Err(Error::input(format!(
                "expected {} product capacities, got {}",
                ground.num_products,
                product_caps.len()
            )));
        }
        let block_of = ground.iter().map(|z| z.product).collect();
        Self::new(ground, block_of, product_caps.to_vec())
    }

    pub fn num_blocks(&self) -> usize {
        self.caps.len()
    }

    pub fn block_of(&self, id: usize) -> u32 {
        self.block_of[id]
    }

    pub fn cap(&self, block: u32) -> u32 {
        self.caps[block as usize]
    }
}

/// A nested family of user groups with a cap per group. For any two groups
/// one contains the other or they are disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct LaminarMatroid {
    groups: Vec<LaminarGroup>,
    /// Groups containing each user; by laminarity they form a chain.
    chains: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaminarGroup {
    pub users: Vec<u32>,
    pub cap: u32,
}

impl LaminarMatroid {
    pub fn new(num_users: usize, mut groups: Vec<LaminarGroup>) -> Result<Self> {
        for g in &mut groups {
            g.users.sort_unstable();
            g.users.dedup();
            if let Some(&u) = g.users.iter().find(|&&u| u as usize >= num_users) {
                return Err(Error::input(format!("group user {u} out of range")));
            }
            if g.users.is_empty() {
                return Err(Error::input("empty groups are not allowed"));
            }
        }
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let (ga, gb) = (&groups[a], &groups[b]);
                let inter = ga.users.iter().filter(|u| gb.users.binary_search(u).is_ok()).count();
                let nested = inter == ga.users.len() || inter == gb.users.len();
                if inter > 0 && !nested {
                    return Err(Error::input(format!(
                        "groups {a} and {b} overlap without nesting; family is not laminar"
                    )));
                }
            }
        }
        let mut chains = vec![Vec::new(); num_users];
        for (gi, g) in groups.iter().enumerate() {
            for &u in &g.users {
                chains[u as usize].push(gi as u32);
            }
        }
        Ok(Self { groups, chains })
    }

    pub fn groups(&self) -> &[LaminarGroup] {
        &self.groups
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Matroid {
    Partition(PartitionMatroid),
    Laminar(LaminarMatroid),
}

impl Matroid {
    /// Set-level independence check, recounting from scratch.
    pub fn is_independent(&self, ground: GroundSet, set: &[GroundElement]) -> Result<bool> {
        for &z in set {
            if !ground.contains(z) {
                return Err(Error::input(format!("element {z:?} outside the ground set")));
            }
        }
        match self {
            Matroid::Partition(pm) => {
                let mut counts = vec![0u32; pm.num_blocks()];
                for &z in set {
                    let b = pm.block_of[ground.id(z)] as usize;
                    counts[b] += 1;
                    if counts[b] > pm.caps[b] {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Matroid::Laminar(lm) => {
                let mut counts = vec![0u32; lm.groups.len()];
                for &z in set {
                    for &gi in &lm.chains[z.user as usize] {
                        counts[gi as usize] += 1;
                        if counts[gi as usize] > lm.groups[gi as usize].cap {
                            return Ok(false);
                        }
                    }
                }
                Ok(true)
            }
        }
    }
}

/// Normalized per-product budget constraints: costs scaled so every budget
/// is one; elements whose scaled cost exceeds one are kept but flagged
/// excluded and can never be selected.
#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackSystem {
    costs: Vec<f64>,
    excluded: Vec<bool>,
    num_products: usize,
}

impl KnapsackSystem {
    pub fn cost(&self, ground: GroundSet, z: GroundElement) -> f64 {
        self.costs[ground.id(z)]
    }

    pub fn is_excluded(&self, ground: GroundSet, z: GroundElement) -> bool {
        self.excluded[ground.id(z)]
    }

    pub fn num_products(&self) -> usize {
        self.num_products
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }
}

/// Divide row `i`'s raw costs by budget `B_i`; flag elements that no longer
/// fit in a whole budget. Normalizing an already-normalized system (budgets
/// one) is a no-op.
pub fn normalize_costs(ground: GroundSet, raw_costs: &[f64], budgets: &[f64]) -> Result<KnapsackSystem> {
    if raw_costs.len() != ground.size() {
        return Err(Error::input(format!(
            "expected {} costs, got {}",
            ground.size(),
            raw_costs.len()
        )));
    }
    if budgets.len() != ground.num_products {
        return Err(Error::input(format!(
            "expected {} budgets, got {}",
            ground.num_products,
            budgets.len()
        )));
    }
    if let Some(b) = budgets.iter().find(|b| !(**b > 0.0)) {
        return Err(Error::input(format!("budgets must be positive, got {b}")));
    }
    if let Some(c) = raw_costs.iter().find(|c| !(**c > 0.0)) {
        return Err(Error::input(format!("costs must be positive, got {c}")));
    }
    let mut costs = Vec::with_capacity(raw_costs.len());
    let mut excluded = Vec::with_capacity(raw_costs.len());
    for (id, &c) in raw_costs.iter().enumerate() {
        let z = ground.element(id);
        let norm = c / budgets[z.product as usize];
        costs.push(norm);
        excluded.push(norm > 1.0 + KNAPSACK_EPS);
    }
    Ok(KnapsackSystem {
        costs,
        excluded,
        num_products: ground.num_products,
    })
}

/// The full feasibility structure of an allocation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    ground: GroundSet,
    matroids: Vec<Matroid>,
    knapsack: Option<KnapsackSystem>,
}

impl ConstraintSystem {
    pub fn new(ground: GroundSet, matroids: Vec<Matroid>, knapsack: Option<KnapsackSystem>) -> Result<Self> {
        if matroids.is_empty() {
            return Err(Error::input("at least one matroid is required"));
        }
        if let Some(k) = &knapsack {
            if k.costs.len() != ground.size() {
                return Err(Error::input("knapsack costs must cover the ground set"));
            }
        }
        Ok(Self {
            ground,
            matroids,
            knapsack,
        })
    }

    /// Uniform-cost instance: user-column caps plus product-row caps,
    /// no knapsack.
    pub fn uniform(ground: GroundSet, user_caps: &[u32], product_caps: &[u32]) -> Result<Self> {
        Ok(Self {
            ground,
            matroids: vec![
                Matroid::Partition(PartitionMatroid::user_columns(ground, user_caps)?),
                Matroid::Partition(PartitionMatroid::product_rows(ground, product_caps)?),
            ],
            knapsack: None,
        })
    }

    /// Non-uniform instance: user-column caps plus per-product knapsacks.
    pub fn with_knapsack(ground: GroundSet, user_caps: &[u32], knapsack: KnapsackSystem) -> Result<Self> {
        Ok(Self {
            ground,
            matroids: vec![Matroid::Partition(PartitionMatroid::user_columns(ground, user_caps)?)],
            knapsack: Some(knapsack),
        })
    }

    pub fn ground(&self) -> GroundSet {
        self.ground
    }

    pub fn matroids(&self) -> &[Matroid] {
        &self.matroids
    }

    pub fn num_matroids(&self) -> usize {
        self.matroids.len()
    }

    pub fn knapsack(&self) -> Option<&KnapsackSystem> {
        self.knapsack.as_ref()
    }

    /// Cost of `z`: the normalized knapsack cost, or one on uniform
    /// instances.
    pub fn cost(&self, z: GroundElement) -> f64 {
        match &self.knapsack {
            Some(k) => k.cost(self.ground, z),
            None => 1.0,
        }
    }

    pub fn is_excluded(&self, z: GroundElement) -> bool {
        match &self.knapsack {
            Some(k) => k.is_excluded(self.ground, z),
            None => false,
        }
    }

    /// From-scratch feasibility of a set (duplicates rejected).
    pub fn is_feasible_set(&self, set: &[GroundElement]) -> Result<bool> {
        let mut seen = HashSet::new();
        for &z in set {
            if !self.ground.contains(z) {
                return Err(Error::input(format!("element {z:?} outside the ground set")));
            }
            if !seen.insert(z) {
                return Err(Error::input(format!("duplicate element {z:?}")));
            }
        }
        for m in &self.matroids {
            if !m.is_independent(self.ground, set)? {
                return Ok(false);
            }
        }
        if let Some(k) = &self.knapsack {
            let mut row = vec![0.0f64; self.ground.num_products];
            for &z in set {
                if k.is_excluded(self.ground, z) {
                    return Ok(false);
                }
                row[z.product as usize] += k.cost(self.ground, z);
            }
            if row.iter().any(|&c| c > 1.0 + KNAPSACK_EPS) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Matroid-intersection feasibility only, ignoring knapsacks and
    /// exclusions; the blocking analysis of the greedy is stated in these
    /// terms.
    pub fn is_matroid_independent(&self, set: &[GroundElement]) -> Result<bool> {
        for m in &self.matroids {
            if !m.is_independent(self.ground, set)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn open(&self) -> SelectionState<'_> {
        SelectionState::new(self)
    }
}

/// Incrementally maintained counters for a growing feasible set; `can_add`
/// costs O(matroids + group chain) instead of revalidating the whole set.
/// Cloneable for speculative probes.
#[derive(Debug, Clone)]
pub struct SelectionState<'a> {
    sys: &'a ConstraintSystem,
    selected: Vec<bool>,
    order: Vec<GroundElement>,
    matroid_counts: Vec<Vec<u32>>,
    row_cost: Vec<f64>,
}

impl<'a> SelectionState<'a> {
    fn new(sys: &'a ConstraintSystem) -> Self {
        let matroid_counts = sys
            .matroids
            .iter()
            .map(|m| match m {
                Matroid::Partition(pm) => vec![0u32; pm.num_blocks()],
                Matroid::Laminar(lm) => vec![0u32; lm.groups.len()],
            })
            .collect();
        Self {
            sys,
            selected: vec![false; sys.ground.size()],
            order: Vec::new(),
            matroid_counts,
            row_cost: vec![0.0; sys.ground.num_products],
        }
    }

    pub fn system(&self) -> &ConstraintSystem {
        self.sys
    }

    pub fn contains(&self, z: GroundElement) -> bool {
        self.selected[self.sys.ground.id(z)]
    }

    /// Elements in insertion order.
    pub fn elements(&self) -> &[GroundElement] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn row_cost(&self, product: u32) -> f64 {
        self.row_cost[product as usize]
    }

    /// Whether the current set plus `z` stays feasible.
    pub fn can_add(&self, z: GroundElement) -> bool {
        if !self.sys.ground.contains(z) || self.contains(z) || self.sys.is_excluded(z) {
            return false;
        }
        for (m, counts) in self.sys.matroids.iter().zip(&self.matroid_counts) {
            match m {
                Matroid::Partition(pm) => {
                    let b = pm.block_of[self.sys.ground.id(z)] as usize;
                    if counts[b] + 1 > pm.caps[b] {
                        return false;
                    }
                }
                Matroid::Laminar(lm) => {
                    for &gi in &lm.chains[z.user as usize] {
                        if counts[gi as usize] + 1 > lm.groups[gi as usize].cap {
                            return false;
                        }
                    }
                }
            }
        }
        if let Some(k) = &self.sys.knapsack {
            let c = k.cost(self.sys.ground, z);
            if self.row_cost[z.product as usize] + c > 1.0 + KNAPSACK_EPS {
                return false;
            }
        }
        true
    }

    pub fn add(&mut self, z: GroundElement) -> Result<()> {
        if !self.can_add(z) {
            return Err(Error::contract(format!("adding {z:?} violates a constraint")));
        }
        let id = self.sys.ground.id(z);
        self.selected[id] = true;
        self.order.push(z);
        for (m, counts) in self.sys.matroids.iter().zip(self.matroid_counts.iter_mut()) {
            match m {
                Matroid::Partition(pm) => {
                    counts[pm.block_of[id] as usize] += 1;
                }
                Matroid::Laminar(lm) => {
                    for &gi in &lm.chains[z.user as usize] {
                        counts[gi as usize] += 1;
                    }
                }
            }
        }
        if let Some(k) = &self.sys.knapsack {
            self.row_cost[z.product as usize] += k.cost(self.sys.ground, z);
        }
        Ok(())
    }
}

/// Per-row activity at the end of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RowActivity {
    /// Rows where no remaining element can be added to the current set
    /// (matroid saturation counts too, since the test is full feasibility).
    pub active: Vec<u32>,
    /// Rows whose residual budget alone blocks every remaining element.
    pub budget_blocked: Vec<u32>,
}

/// Products for which no remaining element of the row can be added.
pub fn active_knapsacks(state: &SelectionState<'_>) -> Vec<u32> {
    row_activity(state).active
}

/// Active rows plus the budget-only diagnostic; the full-feasibility notion
/// and the pure budget notion disagree when a matroid saturates first, so
/// both are reported.
pub fn row_activity(state: &SelectionState<'_>) -> RowActivity {
    let sys = state.sys;
    let ground = sys.ground;
    let mut active = Vec::new();
    let mut budget_blocked = Vec::new();
    for i in 0..ground.num_products as u32 {
        let mut any_addable = false;
        let mut any_budget_fits = false;
        for j in 0..ground.num_users as u32 {
            let z = GroundElement { product: i, user: j };
            if state.contains(z) {
                continue;
            }
            if state.can_add(z) {
                any_addable = true;
            }
            if let Some(k) = sys.knapsack() {
                if !k.is_excluded(ground, z) && state.row_cost(i) + k.cost(ground, z) <= 1.0 + KNAPSACK_EPS {
                    any_budget_fits = true;
                }
            }
        }
        if !any_addable {
            active.push(i);
        }
        if sys.knapsack().is_some() && !any_budget_fits {
            budget_blocked.push(i);
        }
    }
    RowActivity {
        active,
        budget_blocked,
    }
}

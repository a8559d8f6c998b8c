//! Constrained allocation of products to users.
//!
//! The optimizer greedily selects (product, user) assignments whose marginal
//! gain clears a geometrically decreasing threshold, restricted to
//! assignments whose gain-per-cost density clears a density threshold `rho`.
//! On uniform-cost instances a single run at `rho = 0` suffices; with
//! knapsacks, a geometric grid of densities is enumerated and the best run
//! wins.

use rayon::prelude::*;

use crate::constraints::{row_activity, ConstraintSystem, GroundElement, GroundSet};
use crate::continest::{estimate_from_minima, estimate_merged_minima, SketchBundle};
use crate::error::{Error, Result};
use crate::netmodel::{fmt_f64, DiffusionNetwork, NodeId};
use crate::rngs::{self, domain};

/// A value oracle over allocations, evaluated through an incremental state.
///
/// `commit` must maintain `value` as the running sum of the gains it
/// reported, so a replay of any set reproduces its value exactly and the
/// working value never decreases under nonnegative gains.
pub trait Objective: Sync {
    type State: Clone + Send + Sync;

    fn ground(&self) -> GroundSet;
    fn open_state(&self) -> Self::State;
    fn value(&self, state: &Self::State) -> f64;
    /// Marginal value of adding `z` to the committed set. Pure.
    fn gain(&self, state: &Self::State, z: GroundElement) -> f64;
    fn commit(&self, state: &mut Self::State, z: GroundElement);
}

/// An allocation instance: value oracle, feasibility structure, and the
/// threshold decay knob `delta`.
pub struct AllocationProblem<O: Objective> {
    objective: O,
    constraints: ConstraintSystem,
    delta: f64,
}

impl<O: Objective> AllocationProblem<O> {
    pub fn new(objective: O, constraints: ConstraintSystem, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::input(format!("delta must be in (0,1), got {delta}")));
        }
        if objective.ground() != constraints.ground() {
            return Err(Error::input("objective and constraints disagree on the ground set"));
        }
        Ok(Self {
            objective,
            constraints,
            delta,
        })
    }

    pub fn objective(&self) -> &O {
        &self.objective
    }

    pub fn constraints(&self) -> &ConstraintSystem {
        &self.constraints
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn ground(&self) -> GroundSet {
        self.constraints.ground()
    }
}

/// One greedy selection: the element, the threshold it cleared, its gain at
/// selection time, and the gain/cost density.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub element: GroundElement,
    pub threshold: f64,
    pub gain: f64,
    pub density: f64,
}

/// Summary of one fixed-density run inside the density enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub rho: f64,
    pub value: f64,
    pub k_a: usize,
}

/// A feasible allocation with its evaluation and per-selection trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Selected elements in selection order.
    pub selected: Vec<GroundElement>,
    pub value: f64,
    pub trace: Vec<SelectionRecord>,
    /// Rows to which no further element can feasibly be added.
    pub k_a: usize,
    /// Rows blocked by their residual budget alone (diagnostic).
    pub budget_blocked: usize,
    /// Density threshold of the winning run; zero for uniform runs.
    pub rho: f64,
    /// All runs of the density enumeration, empty for direct runs.
    pub grid: Vec<GridPoint>,
}

impl Allocation {
    fn empty() -> Self {
        Allocation {
            selected: Vec::new(),
            value: 0.0,
            trace: Vec::new(),
            k_a: 0,
            budget_blocked: 0,
            rho: 0.0,
            grid: Vec::new(),
        }
    }

    /// CSV rows `product,user,gain_at_selection,threshold,density` plus a
    /// summary comment line. Wall time is intentionally not part of the
    /// file so outputs stay byte-identical across runs.
    pub fn to_csv(&self, delta: f64) -> String {
        let mut out = String::from("product,user,gain_at_selection,threshold,density\n");
        for r in &self.trace {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.element.product,
                r.element.user,
                fmt_f64(r.gain),
                fmt_f64(r.threshold),
                fmt_f64(r.density)
            ));
        }
        out.push_str(&format!(
            "# value={} k_a={} rho={} delta={}\n",
            fmt_f64(self.value),
            self.k_a,
            fmt_f64(self.rho),
            fmt_f64(delta)
        ));
        out
    }
}

/// Objective value of a set, evaluated by replaying its elements in
/// ascending id order through the oracle state.
pub fn objective<O: Objective>(problem: &AllocationProblem<O>, set: &[GroundElement]) -> Result<f64> {
    let ground = problem.ground();
    let mut ids = Vec::with_capacity(set.len());
    for &z in set {
        if !ground.contains(z) {
            return Err(Error::input(format!("element {z:?} outside the ground set")));
        }
        ids.push(ground.id(z));
    }
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::input("duplicate element in set"));
    }
    let mut state = problem.objective.open_state();
    for id in ids {
        problem.objective.commit(&mut state, ground.element(id));
    }
    Ok(problem.objective.value(&state))
}

/// Marginal gain `f(S + z) - f(S)`, evaluated at the replayed state of `S`.
pub fn marginal<O: Objective>(
    problem: &AllocationProblem<O>,
    set: &[GroundElement],
    z: GroundElement,
) -> Result<f64> {
    let ground = problem.ground();
    if !ground.contains(z) {
        return Err(Error::input(format!("element {z:?} outside the ground set")));
    }
    if set.contains(&z) {
        return Err(Error::input(format!("element {z:?} already in the set")));
    }
    let mut ids: Vec<usize> = set.iter().map(|&e| ground.id(e)).collect();
    ids.sort_unstable();
    let mut state = problem.objective.open_state();
    for id in ids {
        problem.objective.commit(&mut state, ground.element(id));
    }
    Ok(problem.objective.gain(&state, z))
}

/// Singleton values of every element, probed in parallel against one frozen
/// empty state. Excluded elements get negative infinity so the filters
/// never pick them.
pub fn singleton_gains<O: Objective>(problem: &AllocationProblem<O>) -> Vec<f64> {
    let ground = problem.ground();
    let empty = problem.objective.open_state();
    (0..ground.size())
        .into_par_iter()
        .map(|id| {
            let z = ground.element(id);
            if problem.constraints.is_excluded(z) {
                f64::NEG_INFINITY
            } else {
                problem.objective.gain(&empty, z)
            }
        })
        .collect()
}

/// Adaptive threshold greedy at a fixed density threshold `rho`.
///
/// `d` is the global maximum singleton value (shared across grid runs) and
/// `singletons` the cached per-element singleton values.
fn run_greedy<O: Objective>(
    problem: &AllocationProblem<O>,
    rho: f64,
    d: f64,
    singletons: &[f64],
) -> Result<Allocation> {
    let ground = problem.ground();
    let constraints = &problem.constraints;
    let delta = problem.delta;
    let n_ground = ground.size() as f64;

    // d_rho: best singleton among elements passing the density filter
    let mut d_rho = f64::NEG_INFINITY;
    for (id, &s) in singletons.iter().enumerate() {
        let z = ground.element(id);
        if s.is_finite() && s >= constraints.cost(z) * rho {
            d_rho = d_rho.max(s);
        }
    }
    if !d_rho.is_finite() {
        // nothing passes the density filter: the empty allocation is valid
        let state = constraints.open();
        let activity = row_activity(&state);
        return Ok(Allocation {
            k_a: activity.active.len(),
            budget_blocked: activity.budget_blocked.len(),
            rho,
            ..Allocation::empty()
        });
    }

    // w_t = d_rho / (1+delta)^t down to the first one at or below
    // delta*d/N, then a final zero pass
    let floor = delta * d / n_ground;
    let mut thresholds = Vec::new();
    let mut w = d_rho;
    loop {
        thresholds.push(w);
        if w <= floor {
            break;
        }
        w /= 1.0 + delta;
    }
    thresholds.push(0.0);

    let mut cstate = constraints.open();
    let mut ostate = problem.objective.open_state();
    let mut trace = Vec::new();
    for &w in &thresholds {
        for id in 0..ground.size() {
            let z = ground.element(id);
            if !cstate.can_add(z) {
                continue;
            }
            let g = problem.objective.gain(&ostate, z);
            if g >= constraints.cost(z) * rho && g >= w {
                problem.objective.commit(&mut ostate, z);
                cstate.add(z)?;
                trace.push(SelectionRecord {
                    element: z,
                    threshold: w,
                    gain: g,
                    density: g / constraints.cost(z),
                });
            }
        }
    }

    let activity = row_activity(&cstate);
    Ok(Allocation {
        selected: cstate.elements().to_vec(),
        value: problem.objective.value(&ostate),
        trace,
        k_a: activity.active.len(),
        budget_blocked: activity.budget_blocked.len(),
        rho,
        grid: Vec::new(),
    })
}

/// Upper bound on the number of thresholds a run can visit.
pub fn max_thresholds(num_elements: usize, delta: f64) -> usize {
    ceil_log(num_elements as f64 / delta, delta) + 2
}

/// Smallest `k` with `(1+delta)^k >= x`.
fn ceil_log(x: f64, delta: f64) -> usize {
    let mut k = 0;
    let mut acc = 1.0;
    while acc < x {
        acc *= 1.0 + delta;
        k += 1;
    }
    k
}

/// One adaptive-threshold greedy pass at density `rho`. Computes its own
/// singleton cache; use [`enumerate_densities`] to share it across a grid.
pub fn greedy_fixed_density<O: Objective>(problem: &AllocationProblem<O>, rho: f64) -> Result<Allocation> {
    if !(rho >= 0.0) {
        return Err(Error::input(format!("rho must be >= 0, got {rho}")));
    }
    let singletons = singleton_gains(problem);
    let d = max_finite(&singletons);
    run_greedy(problem, rho, d, &singletons)
}

fn max_finite(xs: &[f64]) -> f64 {
    xs.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max)
}

/// Density threshold enumeration for knapsack instances: runs the fixed
/// density greedy over the geometric grid
/// `rho in { 2d/(P+2k+1) * (1+delta)^t }` plus `rho = 0`, and returns the
/// best-valued allocation (ties to the smaller density). All runs are
/// recorded in `grid`.
///
/// The extra `rho = 0` run sits outside the geometric grid; it never
/// lowers the returned value and covers instances whose budgets never bind.
pub fn enumerate_densities<O: Objective>(problem: &AllocationProblem<O>) -> Result<Allocation> {
    if problem.constraints.knapsack().is_none() {
        return Err(Error::contract(
            "density enumeration requires a knapsack system; use maximize_uniform instead",
        ));
    }
    let ground = problem.ground();
    let singletons = singleton_gains(problem);
    let d = max_finite(&singletons);

    let p = problem.constraints.num_matroids() as f64;
    let k = ground.num_products as f64;
    let base = 2.0 * d / (p + 2.0 * k + 1.0);
    let grid_points = ceil_log(ground.size() as f64, problem.delta) + 1;
    let mut rhos = Vec::with_capacity(grid_points + 1);
    rhos.push(0.0);
    let mut r = base;
    for _ in 0..grid_points {
        rhos.push(r);
        r *= 1.0 + problem.delta;
    }

    let runs: Vec<Allocation> = rhos
        .par_iter()
        .map(|&rho| run_greedy(problem, rho, d, &singletons))
        .collect::<Result<Vec<_>>>()?;

    let grid: Vec<GridPoint> = runs
        .iter()
        .map(|a| GridPoint {
            rho: a.rho,
            value: a.value,
            k_a: a.k_a,
        })
        .collect();

    // first strict maximum wins: rhos ascend, so ties break toward the
    // smaller density
    let mut best = 0;
    for (i, a) in runs.iter().enumerate() {
        if a.value > runs[best].value {
            best = i;
        }
    }
    let mut alloc = runs.into_iter().nth(best).expect("at least one run");
    alloc.grid = grid;
    Ok(alloc)
}

/// Uniform-cost maximization: a single greedy run at `rho = 0`.
pub fn maximize_uniform<O: Objective>(problem: &AllocationProblem<O>) -> Result<Allocation> {
    if problem.constraints.knapsack().is_some() {
        return Err(Error::contract(
            "uniform maximization requires a knapsack-free instance; use enumerate_densities",
        ));
    }
    greedy_fixed_density(problem, 0.0)
}

/// Maximum ground-set size the exhaustive optimum will attempt.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// Exhaustive feasible-subset optimum. The search walks elements in id
/// order and prunes on feasibility (feasible sets form a down-closed
/// family), so only feasible subsets are visited.
pub fn brute_force_optimum<O: Objective>(problem: &AllocationProblem<O>) -> Result<Allocation> {
    let ground = problem.ground();
    if ground.size() > BRUTE_FORCE_LIMIT {
        return Err(Error::capacity(format!(
            "brute force limited to {BRUTE_FORCE_LIMIT} elements, got {}",
            ground.size()
        )));
    }
    struct Search<'p, O: Objective> {
        problem: &'p AllocationProblem<O>,
        best_value: f64,
        best_set: Vec<GroundElement>,
    }
    fn recurse<O: Objective>(
        s: &mut Search<'_, O>,
        id: usize,
        cstate: &crate::constraints::SelectionState<'_>,
        ostate: &O::State,
    ) {
        let ground = s.problem.ground();
        if id == ground.size() {
            let v = s.problem.objective.value(ostate);
            if v > s.best_value {
                s.best_value = v;
                s.best_set = cstate.elements().to_vec();
            }
            return;
        }
        let z = ground.element(id);
        recurse(s, id + 1, cstate, ostate);
        if cstate.can_add(z) {
            let mut c2 = cstate.clone();
            c2.add(z).expect("guarded by can_add");
            let mut o2 = ostate.clone();
            s.problem.objective.commit(&mut o2, z);
            recurse(s, id + 1, &c2, &o2);
        }
    }
    let mut search = Search {
        problem,
        best_value: f64::NEG_INFINITY,
        best_set: Vec::new(),
    };
    let cstate = problem.constraints.open();
    let ostate = problem.objective.open_state();
    recurse(&mut search, 0, &cstate, &ostate);

    let mut sorted = search.best_set.clone();
    sorted.sort_by_key(|&z| ground.id(z));
    let mut cstate = problem.constraints.open();
    for &z in &sorted {
        cstate.add(z)?;
    }
    let activity = row_activity(&cstate);
    Ok(Allocation {
        selected: sorted.clone(),
        value: objective(problem, &sorted)?,
        trace: Vec::new(),
        k_a: activity.active.len(),
        budget_blocked: activity.budget_blocked.len(),
        rho: 0.0,
        grid: Vec::new(),
    })
}

/// The per-step blocking analysis of a greedy run against an optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockingBoundReport {
    /// `|C_t|` for each greedy step `t` (1-based): optimal elements that
    /// were matroid-feasible before step `t` and infeasible after it.
    pub blocked_per_step: Vec<usize>,
    /// Number of matroids `P` in the intersection.
    pub num_matroids: usize,
    /// Optimal elements outside the greedy set that were never blocked.
    pub never_blocked: usize,
    /// Whether every prefix satisfies `sum_{i<=t} |C_i| <= P t`.
    pub prefix_bound_holds: bool,
}

/// Partition the optimal elements missing from the greedy solution by the
/// greedy step that blocked them (matroid feasibility only) and check the
/// prefix bound `sum_{i<=t} |C_i| <= P t`.
pub fn blocking_bound_report<O: Objective>(
    problem: &AllocationProblem<O>,
    greedy: &Allocation,
    optimal: &Allocation,
) -> Result<BlockingBoundReport> {
    let constraints = &problem.constraints;
    let g = &greedy.selected;
    let p = constraints.num_matroids();
    let mut blocked_per_step = vec![0usize; g.len()];
    let mut never_blocked = 0usize;
    for &z in &optimal.selected {
        if g.contains(&z) {
            continue;
        }
        let mut blocked_at = None;
        for t in 1..=g.len() {
            let mut with_prev: Vec<GroundElement> = g[..t - 1].to_vec();
            with_prev.push(z);
            let mut with_cur: Vec<GroundElement> = g[..t].to_vec();
            with_cur.push(z);
            if constraints.is_matroid_independent(&with_prev)?
                && !constraints.is_matroid_independent(&with_cur)?
            {
                blocked_at = Some(t);
                break;
            }
        }
        match blocked_at {
            Some(t) => blocked_per_step[t - 1] += 1,
            None => never_blocked += 1,
        }
    }
    let mut prefix = 0;
    let mut holds = true;
    for (t, &c) in blocked_per_step.iter().enumerate() {
        prefix += c;
        if prefix > p * (t + 1) {
            holds = false;
        }
    }
    Ok(BlockingBoundReport {
        blocked_per_step,
        num_matroids: p,
        never_blocked,
        prefix_bound_holds: holds,
    })
}

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

/// Additive per-element values; the simplest exact oracle for small
/// instances.
pub struct ModularObjective {
    ground: GroundSet,
    values: Vec<f64>,
}

impl ModularObjective {
    pub fn new(ground: GroundSet, values: Vec<f64>) -> Result<Self> {
        if values.len() != ground.size() {
            return Err(Error::input("one value per ground element required"));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::input(format!("values must be nonnegative, got {v}")));
        }
        Ok(Self { ground, values })
    }
}

#[derive(Debug, Clone)]
pub struct ModularState {
    value: f64,
}

impl Objective for ModularObjective {
    type State = ModularState;

    fn ground(&self) -> GroundSet {
        self.ground
    }

    fn open_state(&self) -> ModularState {
        ModularState { value: 0.0 }
    }

    fn value(&self, state: &ModularState) -> f64 {
        state.value
    }

    fn gain(&self, _state: &ModularState, z: GroundElement) -> f64 {
        self.values[self.ground.id(z)]
    }

    fn commit(&self, state: &mut ModularState, z: GroundElement) {
        state.value += self.gain(state, z);
    }
}

/// Exact coverage oracle over fixed edge-time draws: the value of an
/// allocation is the weighted average, over the fixed samples, of how many
/// nodes each product reaches from its assigned users. Submodular and
/// evaluated exactly via 64-bit reach masks, so it serves as the
/// error-free stand-in for the sketch estimate on small instances.
pub struct CoverageObjective {
    ground: GroundSet,
    weights: Vec<f64>,
    /// `masks[product][sample][user]`: nodes within the horizon.
    masks: Vec<Vec<Vec<u64>>>,
}

impl CoverageObjective {
    pub fn from_masks(ground: GroundSet, weights: Vec<f64>, masks: Vec<Vec<Vec<u64>>>) -> Result<Self> {
        if weights.len() != ground.num_products || masks.len() != ground.num_products {
            return Err(Error::input("one weight and mask table per product required"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::input(format!("weights must be positive, got {w}")));
        }
        for per_product in &masks {
            if per_product.is_empty() {
                return Err(Error::input("each product needs at least one sample"));
            }
            if per_product.iter().any(|s| s.len() != ground.num_users) {
                return Err(Error::input("each sample needs one mask per user"));
            }
        }
        Ok(Self {
            ground,
            weights,
            masks,
        })
    }

    /// Build reach masks by sampling `samples` edge-time draws per product
    /// network and running bounded shortest paths from every user node.
    /// Requires at most 64 network nodes.
    pub fn from_networks(
        nets: &[DiffusionNetwork],
        weights: Vec<f64>,
        horizons: &[f64],
        user_nodes: &[NodeId],
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let ground = GroundSet::new(nets.len(), user_nodes.len())?;
        if horizons.len() != nets.len() {
            return Err(Error::input("one horizon per product required"));
        }
        if samples == 0 {
            return Err(Error::input("at least one sample required"));
        }
        let mut masks = Vec::with_capacity(nets.len());
        for (i, net) in nets.iter().enumerate() {
            if net.num_nodes() > 64 {
                return Err(Error::capacity("coverage oracle limited to 64 nodes"));
            }
            let mut per_product = Vec::with_capacity(samples);
            for s in 0..samples {
                let mut rng = rngs::stream_rng(seed, domain::INSTANCE, (i * samples + s) as u64);
                let sample = net.sample_edge_times(&mut rng);
                let mut per_user = Vec::with_capacity(user_nodes.len());
                for &node in user_nodes {
                    if !net.contains_node(node) {
                        return Err(Error::input(format!("user node {node} out of range")));
                    }
                    let dist = single_source_distances(net, &sample, node);
                    let mut mask = 0u64;
                    for (v, &d) in dist.iter().enumerate() {
                        if d <= horizons[i] {
                            mask |= 1 << v;
                        }
                    }
                    per_user.push(mask);
                }
                per_product.push(per_user);
            }
            masks.push(per_product);
        }
        Self::from_masks(ground, weights, masks)
    }

    fn term(&self, product: usize, or_masks: &[u64]) -> f64 {
        let total: u64 = or_masks.iter().map(|m| m.count_ones() as u64).sum();
        self.weights[product] * (total as f64 / or_masks.len() as f64)
    }
}

fn single_source_distances(
    net: &DiffusionNetwork,
    sample: &crate::netmodel::EdgeTimeSample,
    from: NodeId,
) -> Vec<f64> {
    let n = net.num_nodes();
    let mut dist = vec![f64::INFINITY; n];
    dist[from as usize] = 0.0;
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
            let nd = du + sample.times()[eidx as usize];
            if nd < dist[next as usize] {
                dist[next as usize] = nd;
            }
        }
    }
    dist
}

#[derive(Debug, Clone)]
pub struct CoverageState {
    or_masks: Vec<Vec<u64>>,
    terms: Vec<f64>,
    value: f64,
}

impl Objective for CoverageObjective {
    type State = CoverageState;

    fn ground(&self) -> GroundSet {
        self.ground
    }

    fn open_state(&self) -> CoverageState {
        let or_masks: Vec<Vec<u64>> = self.masks.iter().map(|p| vec![0u64; p.len()]).collect();
        CoverageState {
            terms: vec![0.0; self.masks.len()],
            or_masks,
            value: 0.0,
        }
    }

    fn value(&self, state: &CoverageState) -> f64 {
        state.value
    }

    fn gain(&self, state: &CoverageState, z: GroundElement) -> f64 {
        let i = z.product as usize;
        let j = z.user as usize;
        let merged: Vec<u64> = state.or_masks[i]
            .iter()
            .zip(&self.masks[i])
            .map(|(&or, sample)| or | sample[j])
            .collect();
        self.term(i, &merged) - state.terms[i]
    }

    fn commit(&self, state: &mut CoverageState, z: GroundElement) {
        let g = self.gain(state, z);
        let i = z.product as usize;
        let j = z.user as usize;
        for (or, sample) in state.or_masks[i].iter_mut().zip(&self.masks[i]) {
            *or |= sample[j];
        }
        state.terms[i] = self.term(i, &state.or_masks[i]);
        state.value += g;
    }
}

/// The production oracle: per-product sketch bundles queried incrementally.
///
/// Query labels for every (product, user) pair are cached eagerly at
/// construction, so a gain probe is one fused min-merge pass over the
/// layer minima.
pub struct SketchObjective<'a> {
    ground: GroundSet,
    bundles: &'a [SketchBundle],
    weights: Vec<f64>,
    horizons: Vec<f64>,
    query: Vec<Vec<f64>>,
}

impl<'a> SketchObjective<'a> {
    pub fn new(
        bundles: &'a [SketchBundle],
        weights: Vec<f64>,
        horizons: Vec<f64>,
        user_nodes: &[NodeId],
    ) -> Result<Self> {
        if bundles.is_empty() || user_nodes.is_empty() {
            return Err(Error::input("at least one product bundle and one user required"));
        }
        if weights.len() != bundles.len() || horizons.len() != bundles.len() {
            return Err(Error::input("one weight and one horizon per product required"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::input(format!("weights must be positive, got {w}")));
        }
        if let Some(t) = horizons.iter().find(|t| !(**t >= 0.0)) {
            return Err(Error::input(format!("horizons must be >= 0, got {t}")));
        }
        let ground = GroundSet::new(bundles.len(), user_nodes.len())?;
        let query: Vec<Vec<f64>> = (0..ground.size())
            .into_par_iter()
            .map(|id| {
                let z = ground.element(id);
                let i = z.product as usize;
                bundles[i].query_labels(user_nodes[z.user as usize], horizons[i])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ground,
            bundles,
            weights,
            horizons,
            query,
        })
    }

    pub fn horizons(&self) -> &[f64] {
        &self.horizons
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Debug, Clone)]
pub struct SketchState {
    minima: Vec<Vec<f64>>,
    estimates: Vec<f64>,
    value: f64,
}

impl SketchState {
    /// Current per-product influence estimates.
    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }
}

impl<'a> Objective for SketchObjective<'a> {
    type State = SketchState;

    fn ground(&self) -> GroundSet {
        self.ground
    }

    fn open_state(&self) -> SketchState {
        let minima: Vec<Vec<f64>> = self
            .bundles
            .iter()
            .map(|b| vec![f64::INFINITY; b.n() * b.m()])
            .collect();
        let estimates: Vec<f64> = self
            .bundles
            .iter()
            .zip(&minima)
            .map(|(b, m)| estimate_from_minima(b, m).value)
            .collect();
        SketchState {
            minima,
            estimates,
            value: 0.0,
        }
    }

    fn value(&self, state: &SketchState) -> f64 {
        state.value
    }

    fn gain(&self, state: &SketchState, z: GroundElement) -> f64 {
        let i = z.product as usize;
        let q = &self.query[self.ground.id(z)];
        let with = estimate_merged_minima(&self.bundles[i], &state.minima[i], q).value;
        self.weights[i] * with - self.weights[i] * state.estimates[i]
    }

    fn commit(&self, state: &mut SketchState, z: GroundElement) {
        let i = z.product as usize;
        let q = &self.query[self.ground.id(z)];
        let with = estimate_merged_minima(&self.bundles[i], &state.minima[i], q).value;
        let g = self.weights[i] * with - self.weights[i] * state.estimates[i];
        for (slot, &label) in state.minima[i].iter_mut().zip(q) {
            if label < *slot {
                *slot = label;
            }
        }
        state.estimates[i] = with;
        state.value += g;
    }
}

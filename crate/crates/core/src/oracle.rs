//! Ground-truth and reference estimators.
//!
//! `ns_estimate` is the naive sampling baseline: draw a full set of edge
//! times, run a shortest-path sweep, count the nodes reached within the
//! horizon, and average over many independent draws. It is quadratic-ish in
//! network size but unbiased, so it serves as the accuracy yardstick for the
//! sketch estimator. `analytic_chain_influence` gives closed-form values on
//! exponential path graphs for calibration tests.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::netmodel::{DiffusionNetwork, EdgeTimeSample, NodeId};
use crate::rngs::{self, domain};

/// A validated, deduplicated set of source nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSet {
    nodes: Vec<NodeId>,
}

impl SourceSet {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let mut nodes: Vec<NodeId> = nodes.into_iter().collect();
        nodes.sort_unstable();
        nodes.dedup();
        Self { nodes }
    }

    pub fn empty() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self, net: &DiffusionNetwork) -> Result<()> {
        for &v in &self.nodes {
            if !net.contains_node(v) {
                return Err(Error::input(format!(
                    "source node {v} out of range for {} nodes",
                    net.num_nodes()
                )));
            }
        }
        Ok(())
    }
}

impl<const N: usize> From<[NodeId; N]> for SourceSet {
    fn from(nodes: [NodeId; N]) -> Self {
        Self::new(nodes)
    }
}

/// An influence value with its Monte Carlo uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluenceEstimate {
    /// Expected number of nodes infected within the horizon.
    pub value: f64,
    /// Number of outer samples the estimate averaged over.
    pub n_used: usize,
    /// Standard error (sample standard deviation / sqrt(n)).
    pub stderr: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: NodeId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Scratch buffers for repeated bounded shortest-path counts.
struct DijkstraScratch {
    dist: Vec<f64>,
    version: Vec<u32>,
    round: u32,
    heap: BinaryHeap<HeapEntry>,
}

impl DijkstraScratch {
    fn new(num_nodes: usize) -> Self {
        Self {
            dist: vec![f64::INFINITY; num_nodes],
            version: vec![0; num_nodes],
            round: 0,
            heap: BinaryHeap::new(),
        }
    }

    fn get(&self, v: NodeId) -> f64 {
        if self.version[v as usize] == self.round {
            self.dist[v as usize]
        } else {
            f64::INFINITY
        }
    }

    fn set(&mut self, v: NodeId, d: f64) {
        self.version[v as usize] = self.round;
        self.dist[v as usize] = d;
    }

    /// Nodes within distance `horizon` of any source, sources included.
    /// Pops beyond the horizon terminate the sweep early.
    fn count_within(
        &mut self,
        net: &DiffusionNetwork,
        times: &[f64],
        sources: &[NodeId],
        horizon: f64,
    ) -> usize {
        self.round += 1;
        self.heap.clear();
        for &s in sources {
            self.set(s, 0.0);
            self.heap.push(HeapEntry { dist: 0.0, node: s });
        }
        let mut count = 0;
        while let Some(HeapEntry { dist, node }) = self.heap.pop() {
            if dist > self.get(node) {
                continue; // stale entry
            }
            if dist > horizon {
                break;
            }
            count += 1;
            for &(next, eidx) in net.forward(node) {
                let nd = dist + times[eidx as usize];
                if nd <= horizon && nd < self.get(next) {
                    self.set(next, nd);
                    self.heap.push(HeapEntry { dist: nd, node: next });
                }
            }
        }
        count
    }
}

/// Number of nodes whose shortest-path distance from the source set,
/// under the fixed edge times, is at most `horizon`.
pub fn exact_neighborhood(
    net: &DiffusionNetwork,
    sample: &EdgeTimeSample,
    sources: &SourceSet,
    horizon: f64,
) -> Result<usize> {
    if !(horizon >= 0.0) {
        return Err(Error::input(format!("horizon must be >= 0, got {horizon}")));
    }
    if sample.len() != net.num_edges() {
        return Err(Error::input("edge time sample does not match network"));
    }
    sources.validate(net)?;
    if sources.is_empty() {
        return Ok(0);
    }
    let mut scratch = DijkstraScratch::new(net.num_nodes());
    Ok(scratch.count_within(net, sample.times(), sources.nodes(), horizon))
}

/// Naive sampling estimate of the influence of `sources` within `horizon`.
///
/// Draws `n` independent edge-time samples and averages the neighborhood
/// counts. Sample `l` always uses the stream derived from `(seed, l)`, so the
/// result is byte-identical for any worker count.
pub fn ns_estimate(
    net: &DiffusionNetwork,
    sources: &SourceSet,
    horizon: f64,
    n: usize,
    seed: u64,
) -> Result<InfluenceEstimate> {
    if n == 0 {
        return Err(Error::input("ns_estimate requires n >= 1"));
    }
    if !(horizon >= 0.0) {
        return Err(Error::input(format!("horizon must be >= 0, got {horizon}")));
    }
    sources.validate(net)?;
    if sources.is_empty() {
        return Ok(InfluenceEstimate {
            value: 0.0,
            n_used: n,
            stderr: 0.0,
        });
    }

    // Integer counts reduce exactly, so the parallel sum is deterministic.
    const CHUNK: usize = 256;
    let (sum, sum_sq) = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut scratch = DijkstraScratch::new(net.num_nodes());
            let mut s: u64 = 0;
            let mut s2: u64 = 0;
            for &l in chunk {
                let mut rng = rngs::stream_rng(seed, domain::NS_SAMPLE, l as u64);
                let sample = net.sample_edge_times(&mut rng);
                let c = scratch.count_within(net, sample.times(), sources.nodes(), horizon) as u64;
                s += c;
                s2 += c * c;
            }
            (s, s2)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    let nf = n as f64;
    let mean = sum as f64 / nf;
    let stderr = if n > 1 {
        let var = (sum_sq as f64 - nf * mean * mean) / (nf - 1.0);
        (var.max(0.0) / nf).sqrt()
    } else {
        0.0
    };
    Ok(InfluenceEstimate {
        value: mean,
        n_used: n,
        stderr,
    })
}

// ---------------------------------------------------------------------------
// Closed-form chain influence.
//
// The density of a sum of independent exponentials lives in the class
// sum_i poly_i(t) * exp(-lambda_i t); that class is closed under convolution
// with another exponential and under integration, so both the hypoexponential
// CDF and its repeated-rate (Erlang) limit come out of one exact algebra.
// ---------------------------------------------------------------------------

/// One `poly(t) * exp(-rate * t)` term; `coef[j]` multiplies `t^j`.
#[derive(Debug, Clone)]
struct ExpPolyTerm {
    rate: f64,
    coef: Vec<f64>,
}

fn add_term(terms: &mut Vec<ExpPolyTerm>, rate: f64, degree: usize, value: f64) {
    if value == 0.0 {
        return;
    }
    // exact bit-match grouping: repeated rates must collapse into one term
    if let Some(t) = terms.iter_mut().find(|t| t.rate == rate) {
        if t.coef.len() <= degree {
            t.coef.resize(degree + 1, 0.0);
        }
        t.coef[degree] += value;
    } else {
        let mut coef = vec![0.0; degree + 1];
        coef[degree] = value;
        terms.push(ExpPolyTerm { rate, coef });
    }
}

/// Convolve a density in exp-poly form with `Exp(mu)`.
fn convolve_exp(terms: &[ExpPolyTerm], mu: f64) -> Vec<ExpPolyTerm> {
    let mut out = Vec::new();
    for term in terms {
        for (j, &c) in term.coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            if term.rate == mu {
                // integral of s^j ds gives t^{j+1}/(j+1) on the same rate
                add_term(&mut out, mu, j + 1, mu * c / (j + 1) as f64);
            } else {
                // integral of s^j e^{a s} ds, a = mu - rate:
                //   e^{a t} * sum_r (-1)^r j!/(j-r)! / a^{r+1} t^{j-r}  -  (-1)^j j!/a^{j+1}
                let a = mu - term.rate;
                let mut fact = 1.0; // j! / (j-r)!
                let mut apow = a; // a^{r+1}
                let mut sign = 1.0;
                for r in 0..=j {
                    add_term(&mut out, term.rate, j - r, mu * c * sign * fact / apow);
                    fact *= (j - r) as f64;
                    apow *= a;
                    sign = -sign;
                }
                let q0 = sign_pow(j) * factorial(j) / a.powi(j as i32 + 1);
                add_term(&mut out, mu, 0, -mu * c * q0);
            }
        }
    }
    out
}

fn factorial(j: usize) -> f64 {
    (1..=j).map(|k| k as f64).product()
}

fn sign_pow(j: usize) -> f64 {
    if j.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Integral over [0, t] of c * s^j * e^{-rate s}:
/// c * j!/rate^{j+1} * (1 - e^{-rate t} * sum_{r<=j} (rate t)^r / r!).
fn integrate_term(rate: f64, coef: &[f64], t: f64) -> f64 {
    let mut total = 0.0;
    let et = (-rate * t).exp();
    for (j, &c) in coef.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let mut tail = 0.0;
        let mut pw = 1.0; // (rate t)^r / r!
        for r in 0..=j {
            tail += pw;
            pw *= rate * t / (r + 1) as f64;
        }
        total += c * factorial(j) / rate.powi(j as i32 + 1) * (1.0 - et * tail);
    }
    total
}

/// CDF of the sum of independent exponentials with the given rates.
fn hypoexponential_cdf(rates: &[f64], t: f64) -> f64 {
    let mut density = vec![ExpPolyTerm {
        rate: rates[0],
        coef: vec![rates[0]],
    }];
    for &r in &rates[1..] {
        density = convolve_exp(&density, r);
    }
    let cdf: f64 = density.iter().map(|term| integrate_term(term.rate, &term.coef, t)).sum();
    cdf.clamp(0.0, 1.0)
}

/// Influence of the head of an exponential chain  a0 -> a1 -> ... -> ak
/// within horizon `t`: 1 plus, for each prefix, the probability that the
/// prefix sum of waiting times is at most `t`. Repeated rates collapse into
/// Erlang segments inside the exact convolution algebra.
pub fn analytic_chain_influence(rates: &[f64], t: f64) -> Result<f64> {
    if rates.is_empty() {
        return Err(Error::input("chain requires at least one rate"));
    }
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::input(format!("rates must be strictly positive, got {r}")));
    }
    if !(t >= 0.0) {
        return Err(Error::input(format!("horizon must be >= 0, got {t}")));
    }
    let mut total = 1.0;
    for k in 1..=rates.len() {
        total += hypoexponential_cdf(&rates[..k], t);
    }
    Ok(total)
}

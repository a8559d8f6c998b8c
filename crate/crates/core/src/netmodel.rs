//! Directed diffusion networks with per-edge transmission laws.
//!
//! A network is a directed graph where each edge carries a parametric density
//! over the transmission (waiting) time along that edge. Sampling one waiting
//! time per edge turns influence questions into shortest-path questions.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rngs::{self, domain};

pub type NodeId = u32;

/// Largest Kronecker exponent we accept; pair enumeration is O(4^power).
pub const MAX_KRONECKER_POWER: u32 = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawKind {
    Exponential,
    Rayleigh,
    Weibull,
}

impl LawKind {
    pub fn token(self) -> &'static str {
        match self {
            LawKind::Exponential => "exponential",
            LawKind::Rayleigh => "rayleigh",
            LawKind::Weibull => "weibull",
        }
    }

    pub fn from_token(s: &str) -> Option<LawKind> {
        match s {
            "exponential" => Some(LawKind::Exponential),
            "rayleigh" => Some(LawKind::Rayleigh),
            "weibull" => Some(LawKind::Weibull),
            _ => None,
        }
    }
}

impl fmt::Display for LawKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// A positive waiting-time density on one edge.
///
/// `alpha` is the rate for `Exponential` and the scale for `Rayleigh` and
/// `Weibull`; `beta` is the Weibull shape and is fixed to zero otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionLaw {
    kind: LawKind,
    alpha: f64,
    beta: f64,
}

impl TransmissionLaw {
    /// Exponential with rate `rate`; CDF `1 - exp(-rate * t)`.
    pub fn exponential(rate: f64) -> Result<Self> {
        check_positive("exponential rate", rate)?;
        Ok(Self {
            kind: LawKind::Exponential,
            alpha: rate,
            beta: 0.0,
        })
    }

    /// Rayleigh with scale `sigma`; CDF `1 - exp(-t^2 / (2 sigma^2))`.
    pub fn rayleigh(sigma: f64) -> Result<Self> {
        check_positive("rayleigh scale", sigma)?;
        Ok(Self {
            kind: LawKind::Rayleigh,
            alpha: sigma,
            beta: 0.0,
        })
    }

    /// Weibull with scale `alpha` and shape `beta`;
    /// CDF `1 - exp(-(t/alpha)^beta)`.
    pub fn weibull(alpha: f64, beta: f64) -> Result<Self> {
        check_positive("weibull scale", alpha)?;
        check_positive("weibull shape", beta)?;
        Ok(Self {
            kind: LawKind::Weibull,
            alpha,
            beta,
        })
    }

    pub fn kind(&self) -> LawKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// One draw by inverse-transform sampling. Strictly positive.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.gen(); // [0, 1)
            let w = -(1.0 - u).ln(); // standard-exponential deviate, >= 0
            let t = match self.kind {
                LawKind::Exponential => w / self.alpha,
                LawKind::Rayleigh => self.alpha * (2.0 * w).sqrt(),
                LawKind::Weibull => self.alpha * w.powf(1.0 / self.beta),
            };
            if t > 0.0 {
                return t;
            }
        }
    }

    /// Cumulative distribution function at `t`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self.kind {
            LawKind::Exponential => 1.0 - (-self.alpha * t).exp(),
            LawKind::Rayleigh => 1.0 - (-t * t / (2.0 * self.alpha * self.alpha)).exp(),
            LawKind::Weibull => 1.0 - (-(t / self.alpha).powf(self.beta)).exp(),
        }
    }
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::input(format!("{what} must be strictly positive, got {v}")));
    }
    Ok(())
}

/// One sampled waiting time per edge, aligned with the network's edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTimeSample {
    times: Vec<f64>,
}

impl EdgeTimeSample {
    pub fn from_times(net: &DiffusionNetwork, times: Vec<f64>) -> Result<Self> {
        if times.len() != net.num_edges() {
            return Err(Error::input(format!(
                "edge time sample has {} entries, network has {} edges",
                times.len(),
                net.num_edges()
            )));
        }
        if let Some(t) = times.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::input(format!("edge times must be positive, got {t}")));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub law: TransmissionLaw,
}

/// Immutable directed graph with per-edge transmission laws and both
/// forward and reverse adjacency. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct DiffusionNetwork {
    num_nodes: usize,
    edges: Vec<Edge>,
    forward: Vec<Vec<(NodeId, u32)>>,
    reverse: Vec<Vec<(NodeId, u32)>>,
}

impl DiffusionNetwork {
    pub fn new(num_nodes: usize, edge_list: Vec<(NodeId, NodeId, TransmissionLaw)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edge_list.len());
        let mut edges = Vec::with_capacity(edge_list.len());
        for (src, dst, law) in edge_list {
            if src as usize >= num_nodes || dst as usize >= num_nodes {
                return Err(Error::input(format!(
                    "edge ({src}, {dst}) out of range for {num_nodes} nodes"
                )));
            }
            if src == dst {
                return Err(Error::input(format!("self-loop at node {src} rejected")));
            }
            if !seen.insert((src, dst)) {
                return Err(Error::input(format!("duplicate edge ({src}, {dst}) rejected")));
            }
            edges.push(Edge { src, dst, law });
        }
        let mut forward = vec![Vec::new(); num_nodes];
        let mut reverse = vec![Vec::new(); num_nodes];
        for (idx, e) in edges.iter().enumerate() {
            forward[e.src as usize].push((e.dst, idx as u32));
            reverse[e.dst as usize].push((e.src, idx as u32));
        }
        Ok(Self {
            num_nodes,
            edges,
            forward,
            reverse,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Outgoing `(neighbor, edge index)` pairs of `v`.
    pub fn forward(&self, v: NodeId) -> &[(NodeId, u32)] {
        &self.forward[v as usize]
    }

    /// Incoming `(neighbor, edge index)` pairs of `v`.
    pub fn reverse(&self, v: NodeId) -> &[(NodeId, u32)] {
        &self.reverse[v as usize]
    }

    pub fn out_degree(&self, v: NodeId) -> usize {
        self.forward[v as usize].len()
    }

    pub fn contains_node(&self, v: NodeId) -> bool {
        (v as usize) < self.num_nodes
    }

    /// One independent waiting-time draw per edge, in edge order.
    pub fn sample_edge_times<R: Rng + ?Sized>(&self, rng: &mut R) -> EdgeTimeSample {
        let times = self.edges.iter().map(|e| e.law.sample(rng)).collect();
        EdgeTimeSample { times }
    }

    /// FNV-1a over the structural content; used by sketch manifests.
    pub fn structure_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.num_nodes as u64);
        eat(self.edges.len() as u64);
        for e in &self.edges {
            eat(e.src as u64);
            eat(e.dst as u64);
            eat(e.law.kind as u64);
            eat(e.law.alpha.to_bits());
            eat(e.law.beta.to_bits());
        }
        h
    }

    /// Plain-text format: header `nodes=<N> edges=<M>`, then one line per
    /// edge `src dst kind alpha beta` (beta written as 0 for non-Weibull).
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "nodes={} edges={}", self.num_nodes, self.edges.len())?;
        for e in &self.edges {
            writeln!(
                w,
                "{} {} {} {} {}",
                e.src,
                e.dst,
                e.law.kind.token(),
                fmt_f64(e.law.alpha),
                fmt_f64(e.law.beta)
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = File::create(path)?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();
        let (num_nodes, num_edges) = match lines.next() {
            Some((_, line)) => parse_header(&line?)?,
            None => return Err(Error::parse(1, "empty network file")),
        };
        let mut edge_list = Vec::with_capacity(num_edges);
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            edge_list.push(parse_edge_line(lineno, &line, num_nodes)?);
        }
        if edge_list.len() != num_edges {
            return Err(Error::input(format!(
                "header declares {} edges, file contains {}",
                num_edges,
                edge_list.len()
            )));
        }
        Self::new(num_nodes, edge_list)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }
}

/// 17-significant-digit decimal; round-trips f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut nodes = None;
    let mut edges = None;
    for tok in line.split_whitespace() {
        if let Some(v) = tok.strip_prefix("nodes=") {
            nodes = v.parse::<usize>().ok();
        } else if let Some(v) = tok.strip_prefix("edges=") {
            edges = v.parse::<usize>().ok();
        }
    }
    match (nodes, edges) {
        (Some(n), Some(m)) => Ok((n, m)),
        _ => Err(Error::parse(1, "expected header `nodes=<N> edges=<M>`")),
    }
}

fn parse_edge_line(lineno: usize, line: &str, num_nodes: usize) -> Result<(NodeId, NodeId, TransmissionLaw)> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 5 {
        return Err(Error::parse(lineno, format!("expected 5 fields, got {}", toks.len())));
    }
    let src: u64 = toks[0]
        .parse()
        .map_err(|_| Error::parse(lineno, format!("bad src `{}`", toks[0])))?;
    let dst: u64 = toks[1]
        .parse()
        .map_err(|_| Error::parse(lineno, format!("bad dst `{}`", toks[1])))?;
    if src >= num_nodes as u64 || dst >= num_nodes as u64 {
        return Err(Error::parse(
            lineno,
            format!("node id out of range for {num_nodes} nodes"),
        ));
    }
    let kind = LawKind::from_token(toks[2])
        .ok_or_else(|| Error::parse(lineno, format!("unknown law kind `{}`", toks[2])))?;
    let alpha: f64 = toks[3]
        .parse()
        .map_err(|_| Error::parse(lineno, format!("bad alpha `{}`", toks[3])))?;
    let beta: f64 = toks[4]
        .parse()
        .map_err(|_| Error::parse(lineno, format!("bad beta `{}`", toks[4])))?;
    let law = match kind {
        LawKind::Exponential | LawKind::Rayleigh => {
            if beta != 0.0 {
                return Err(Error::parse(lineno, format!("beta must be 0 for {kind}, got {beta}")));
            }
            if kind == LawKind::Exponential {
                TransmissionLaw::exponential(alpha)
            } else {
                TransmissionLaw::rayleigh(alpha)
            }
        }
        LawKind::Weibull => TransmissionLaw::weibull(alpha, beta),
    }
    .map_err(|e| Error::parse(lineno, e.to_string()))?;
    Ok((src as NodeId, dst as NodeId, law))
}

/// A bare directed edge set; laws are attached separately.
#[derive(Debug, Clone)]
pub struct EdgeList {
    pub num_nodes: usize,
    pub pairs: Vec<(NodeId, NodeId)>,
}

/// Stochastic-Kronecker graph on `2^power` nodes.
///
/// Each directed pair `(u, v)` with `u != v` is kept independently with
/// probability `prod_k base[bit_k(u)][bit_k(v)]`. All pairs are enumerated,
/// so generation costs O(4^power) Bernoulli draws; `power` is capped at
/// [`MAX_KRONECKER_POWER`]. Self-loops are never emitted.
pub fn generate_kronecker<R: Rng + ?Sized>(
    base: &[[f64; 2]; 2],
    power: u32,
    rng: &mut R,
) -> Result<EdgeList> {
    for row in base {
        for &p in row {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::input(format!("base entries must be in [0,1], got {p}")));
            }
        }
    }
    if power == 0 {
        return Err(Error::input("kronecker power must be >= 1"));
    }
    if power > MAX_KRONECKER_POWER {
        return Err(Error::capacity(format!(
            "kronecker power {power} exceeds maximum {MAX_KRONECKER_POWER} (O(4^power) enumeration)"
        )));
    }
    let n: u64 = 1u64 << power;

    // pow tables over bit-agreement counts: the probability of pair (u, v)
    // factorizes as prod_c base[c]^count_c with counts from popcounts.
    let mut table = [[1.0f64; 64]; 4];
    for c in 0..4 {
        let b = base[c >> 1][c & 1];
        for k in 1..=power as usize {
            table[c][k] = table[c][k - 1] * b;
        }
    }

    // One sub-seed per row keeps edge presence a pure function of
    // (seed, u, v) while letting rows run in parallel.
    let row_seeds: Vec<u64> = (0..n).map(|_| rng.gen()).collect();

    let mask = n - 1;
    let per_row: Vec<Vec<(NodeId, NodeId)>> = (0..n)
        .into_par_iter()
        .map(|u| {
            let mut row_rng = rngs::stream_rng(row_seeds[u as usize], domain::KRONECKER, u);
            let mut out = Vec::new();
            for v in 0..n {
                let c11 = (u & v).count_ones() as usize;
                let c10 = (u & !v & mask).count_ones() as usize;
                let c01 = (!u & v & mask).count_ones() as usize;
                let c00 = power as usize - c11 - c10 - c01;
                let p = table[0][c00] * table[1][c01] * table[2][c10] * table[3][c11];
                let draw: f64 = row_rng.gen();
                if u != v && draw < p {
                    out.push((u as NodeId, v as NodeId));
                }
            }
            out
        })
        .collect();

    let mut pairs = Vec::new();
    for row in per_row {
        pairs.extend(row);
    }
    Ok(EdgeList {
        num_nodes: n as usize,
        pairs,
    })
}

/// Expected number of edges (self-loops excluded) of the Kronecker model,
/// by direct enumeration of all pairs. Test oracle; O(4^power).
pub fn kronecker_expected_edges(base: &[[f64; 2]; 2], power: u32) -> f64 {
    let n: u64 = 1 << power;
    let mut total = 0.0;
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            let mut p = 1.0;
            for k in 0..power {
                let ub = ((u >> k) & 1) as usize;
                let vb = ((v >> k) & 1) as usize;
                p *= base[ub][vb];
            }
            total += p;
        }
    }
    total
}

/// Attach an independent random law to every edge, with both parameters
/// drawn uniformly from `[lo, hi]`. The lower bound must be strictly
/// positive so every density stays proper.
pub fn assign_random_laws<R: Rng + ?Sized>(
    graph: &EdgeList,
    kind: LawKind,
    range: (f64, f64),
    rng: &mut R,
) -> Result<DiffusionNetwork> {
    let (lo, hi) = range;
    if !(lo > 0.0) {
        return Err(Error::input(format!(
            "law parameter lower bound must be strictly positive, got {lo}"
        )));
    }
    if hi < lo {
        return Err(Error::input(format!("law parameter range [{lo}, {hi}] is empty")));
    }
    let mut edges = Vec::with_capacity(graph.pairs.len());
    for &(src, dst) in &graph.pairs {
        let alpha = rng.gen_range(lo..=hi);
        let law = match kind {
            LawKind::Exponential => TransmissionLaw::exponential(alpha)?,
            LawKind::Rayleigh => TransmissionLaw::rayleigh(alpha)?,
            LawKind::Weibull => {
                let beta = rng.gen_range(lo..=hi);
                TransmissionLaw::weibull(alpha, beta)?
            }
        };
        edges.push((src, dst, law));
    }
    DiffusionNetwork::new(graph.num_nodes, edges)
}

//! Sketch-based influence estimation.
//!
//! A bundle holds `n` outer edge-time samples, each with `m` independent
//! label assignments and their least-label-list layers. The influence of a
//! source set within horizon `T` is estimated per outer sample from the `m`
//! queried minima via `(m-1) / sum(minima)`, then averaged over the outer
//! samples and clamped to the feasible range `[0, |V|]`.
//!
//! Layers can be restricted to a set of target nodes: only the lists of
//! potential sources are retained, which is what makes precomputing sketches
//! for large networks affordable.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lll::{self, Entry, LabelAssignment};
use crate::netmodel::{DiffusionNetwork, EdgeTimeSample, NodeId};
use crate::oracle::{InfluenceEstimate, SourceSet};
use crate::rngs::{self, domain};

/// Flattened least-label lists for the retained nodes of one layer.
#[derive(Debug, Clone, PartialEq)]
struct CompactLayer {
    offsets: Vec<u32>,
    entries: Vec<Entry>,
}

impl CompactLayer {
    fn slot(&self, slot: usize) -> &[Entry] {
        let lo = self.offsets[slot] as usize;
        let hi = self.offsets[slot + 1] as usize;
        &self.entries[lo..hi]
    }
}

/// Which nodes a bundle retains lists for.
#[derive(Debug, Clone, PartialEq)]
enum TargetSet {
    All,
    Subset { nodes: Vec<NodeId>, slot_of: Vec<i64> },
}

/// Build parameters for [`build_bundle_with`].
#[derive(Debug, Clone)]
pub struct BundleConfig {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    /// Retain lists only for these nodes (they are the only valid query
    /// sources afterwards). `None` keeps every node.
    pub targets: Option<Vec<NodeId>>,
    /// Advisory horizon recorded in the manifest.
    pub horizon_hint: Option<f64>,
    /// Truncate list construction at `horizon_hint`. Off by default:
    /// untruncated lists answer queries at any horizon.
    pub prune_to_horizon: bool,
}

impl BundleConfig {
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            seed,
            targets: None,
            horizon_hint: None,
            prune_to_horizon: false,
        }
    }
}

/// Hard cap on the expected stored entries of one bundle (~16 GiB of
/// pairs); builds that would exceed it fail with a capacity error.
pub const MAX_BUNDLE_ENTRIES: f64 = 1e9;

/// The randomization state of the sketch estimator: `n x m` layers over one
/// network, plus the seed that regenerates every sample and label draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchBundle {
    n: usize,
    m: usize,
    num_nodes: usize,
    seed: u64,
    network_hash: u64,
    horizon_hint: Option<f64>,
    targets: TargetSet,
    layers: Vec<CompactLayer>,
}

impl SketchBundle {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon_hint(&self) -> Option<f64> {
        self.horizon_hint
    }

    pub fn network_hash(&self) -> u64 {
        self.network_hash
    }

    /// Total stored `(distance, label)` entries across all layers.
    pub fn total_entries(&self) -> usize {
        self.layers.iter().map(|l| l.entries.len()).sum()
    }

    pub fn matches_network(&self, net: &DiffusionNetwork) -> bool {
        self.network_hash == net.structure_hash() && self.num_nodes == net.num_nodes()
    }

    fn slot(&self, node: NodeId) -> Result<usize> {
        if (node as usize) >= self.num_nodes {
            return Err(Error::input(format!(
                "node {node} out of range for {} nodes",
                self.num_nodes
            )));
        }
        match &self.targets {
            TargetSet::All => Ok(node as usize),
            TargetSet::Subset { slot_of, .. } => {
                let s = slot_of[node as usize];
                if s < 0 {
                    Err(Error::input(format!("node {node} is not retained in this bundle")))
                } else {
                    Ok(s as usize)
                }
            }
        }
    }

    fn lists(&self, layer: usize, slot: usize) -> &[Entry] {
        self.layers[layer].slot(slot)
    }

    /// Queried least label of `node` at horizon `t` for every `(l, u)` layer,
    /// in layer order (`l * m + u`).
    pub fn query_labels(&self, node: NodeId, t: f64) -> Result<Vec<f64>> {
        let slot = self.slot(node)?;
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in 0..self.layers.len() {
            let label = lll::query_entries(self.lists(layer, slot), t)
                .ok_or_else(|| Error::contract(format!("empty list for node {node}")))?;
            out.push(label);
        }
        Ok(out)
    }

    /// Regenerate the edge-time sample of outer iteration `l`.
    ///
    /// Edge times are derived from the bundle seed rather than stored, so
    /// memory stays proportional to the sketches alone.
    pub fn edge_time_sample(&self, net: &DiffusionNetwork, l: usize) -> Result<EdgeTimeSample> {
        if !self.matches_network(net) {
            return Err(Error::input("network does not match the bundle manifest"));
        }
        if l >= self.n {
            return Err(Error::input(format!("outer index {l} out of range for n={}", self.n)));
        }
        let mut rng = rngs::stream_rng(self.seed, domain::EDGE_TIMES, l as u64);
        Ok(net.sample_edge_times(&mut rng))
    }

    /// Regenerate the label assignment of layer `(l, u)`.
    pub fn label_assignment(&self, l: usize, u: usize) -> Result<LabelAssignment> {
        if l >= self.n || u >= self.m {
            return Err(Error::input("layer index out of range"));
        }
        let mut rng = rngs::stream_rng(self.seed, domain::LABELS, (l * self.m + u) as u64);
        lll::draw_labels(self.num_nodes, &mut rng)
    }
}

/// Build a bundle retaining every node's list.
pub fn build_bundle(net: &DiffusionNetwork, n: usize, m: usize, seed: u64) -> Result<SketchBundle> {
    build_bundle_with(net, &BundleConfig::new(n, m, seed))
}

/// Build a bundle according to `config`. Layers are built in parallel; the
/// `(l, u)` layer always consumes the stream derived from `(seed, l, u)`, so
/// the result does not depend on the worker count.
pub fn build_bundle_with(net: &DiffusionNetwork, config: &BundleConfig) -> Result<SketchBundle> {
    if config.n < 1 {
        return Err(Error::input("bundle requires n >= 1"));
    }
    if config.m < 3 {
        return Err(Error::input(format!(
            "bundle requires m >= 3 (estimator variance needs m - 2 > 0), got {}",
            config.m
        )));
    }
    if net.num_nodes() == 0 {
        return Err(Error::input("network has no nodes"));
    }
    let targets = match &config.targets {
        None => TargetSet::All,
        Some(nodes) => {
            let mut nodes = nodes.clone();
            nodes.sort_unstable();
            nodes.dedup();
            if nodes.is_empty() {
                return Err(Error::input("target set must be nonempty"));
            }
            let mut slot_of = vec![-1i64; net.num_nodes()];
            for (slot, &v) in nodes.iter().enumerate() {
                if !net.contains_node(v) {
                    return Err(Error::input(format!("target node {v} out of range")));
                }
                slot_of[v as usize] = slot as i64;
            }
            TargetSet::Subset { nodes, slot_of }
        }
    };
    let max_distance = if config.prune_to_horizon {
        config.horizon_hint
    } else {
        None
    };

    let retained = match &targets {
        TargetSet::All => net.num_nodes(),
        TargetSet::Subset { nodes, .. } => nodes.len(),
    };
    let expected_entries =
        (config.n * config.m * retained) as f64 * ((net.num_nodes() as f64).ln() + 2.0);
    if expected_entries > MAX_BUNDLE_ENTRIES {
        return Err(Error::capacity(format!(
            "bundle would hold ~{expected_entries:.2e} entries (n={}, m={}, {retained} retained nodes); \
             reduce n or restrict the targets",
            config.n, config.m
        )));
    }

    let m = config.m;
    let layers: Vec<CompactLayer> = (0..config.n)
        .into_par_iter()
        .map(|l| -> Result<Vec<CompactLayer>> {
            let mut rng = rngs::stream_rng(config.seed, domain::EDGE_TIMES, l as u64);
            let sample = net.sample_edge_times(&mut rng);
            let mut out = Vec::with_capacity(m);
            for u in 0..m {
                let mut lrng = rngs::stream_rng(config.seed, domain::LABELS, (l * m + u) as u64);
                let labels = lll::draw_labels(net.num_nodes(), &mut lrng)?;
                let layer = lll::build_lists_bounded(net, &sample, &labels, max_distance)?;
                out.push(compact(&layer, &targets));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    Ok(SketchBundle {
        n: config.n,
        m,
        num_nodes: net.num_nodes(),
        seed: config.seed,
        network_hash: net.structure_hash(),
        horizon_hint: config.horizon_hint,
        targets,
        layers,
    })
}

fn compact(layer: &lll::SketchLayer, targets: &TargetSet) -> CompactLayer {
    let retained: Vec<usize> = match targets {
        TargetSet::All => (0..layer.num_nodes()).collect(),
        TargetSet::Subset { nodes, .. } => nodes.iter().map(|&v| v as usize).collect(),
    };
    let mut offsets = Vec::with_capacity(retained.len() + 1);
    let mut entries = Vec::new();
    offsets.push(0u32);
    for v in retained {
        entries.extend_from_slice(layer.lists()[v].entries());
        offsets.push(entries.len() as u32);
    }
    CompactLayer { offsets, entries }
}

/// `(m - 1) / sum(minima)`: the neighborhood-size estimate from `m` least
/// labels. Unbiased for the true size; requires `m >= 3` for finite variance.
pub fn estimate_size(minima: &[f64]) -> Result<f64> {
    let m = minima.len();
    if m < 3 {
        return Err(Error::input(format!("estimate_size requires m >= 3, got {m}")));
    }
    if let Some(r) = minima.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::input(format!("least labels must be positive, got {r}")));
    }
    let sum: f64 = minima.iter().sum();
    Ok((m - 1) as f64 / sum)
}

/// Estimator arithmetic shared by every evaluation path: per outer sample,
/// `(m-1)/sum`, then mean and standard error across outer samples, with the
/// mean clamped to the feasible range `[0, |V|]`. `minima` is laid out
/// `l * m + u`; infinite minima denote an empty source set and contribute
/// zero.
///
/// Clamping the per-sample estimates instead would truncate the heavy upper
/// tail of `(m-1)/sum` and bias small-network estimates visibly downward
/// (at m = 5 the per-sample relative deviation is 1/sqrt(3)), so only the
/// aggregate is projected back into range.
pub fn estimate_from_minima(bundle: &SketchBundle, minima: &[f64]) -> InfluenceEstimate {
    estimate_merged_minima(bundle, minima, minima)
}

/// [`estimate_from_minima`] over the pointwise minimum of two minima
/// vectors, fused so no merged vector is allocated. Performs the identical
/// float operations, so results match the two-step path bit for bit.
pub fn estimate_merged_minima(bundle: &SketchBundle, base: &[f64], other: &[f64]) -> InfluenceEstimate {
    debug_assert_eq!(base.len(), bundle.n * bundle.m);
    debug_assert_eq!(other.len(), bundle.n * bundle.m);
    let n = bundle.n;
    let m = bundle.m;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for l in 0..n {
        let mut sum = 0.0;
        for u in 0..m {
            sum += base[l * m + u].min(other[l * m + u]);
        }
        let est = ((m - 1) as f64) / sum;
        let delta = est - mean;
        mean += delta / (l + 1) as f64;
        m2 += delta * (est - mean);
    }
    let stderr = if n > 1 {
        (m2 / (n - 1) as f64 / n as f64).max(0.0).sqrt()
    } else {
        0.0
    };
    InfluenceEstimate {
        value: mean.clamp(0.0, bundle.num_nodes as f64),
        n_used: n,
        stderr,
    }
}

/// Sketch estimate of the influence of `sources` within horizon `t`.
/// An empty source set is worth exactly zero.
pub fn estimate_influence(bundle: &SketchBundle, sources: &SourceSet, t: f64) -> Result<InfluenceEstimate> {
    let mut state = open_incremental(bundle, t)?;
    for &j in sources.nodes() {
        state.commit(j)?;
    }
    Ok(state.estimate())
}

/// Incrementally maintained per-layer minima for a growing source set.
///
/// Gains are probed against the committed set without mutating it; a commit
/// folds the node's queried labels into the stored minima. Since minima only
/// shrink, re-estimating after commits matches a fresh evaluation exactly.
#[derive(Debug, Clone)]
pub struct IncrementalState<'a> {
    bundle: &'a SketchBundle,
    horizon: f64,
    minima: Vec<f64>,
    committed: Vec<NodeId>,
    current: InfluenceEstimate,
}

/// Open an empty incremental state at horizon `t`.
pub fn open_incremental(bundle: &SketchBundle, t: f64) -> Result<IncrementalState<'_>> {
    if !(t >= 0.0) {
        return Err(Error::input(format!("horizon must be >= 0, got {t}")));
    }
    let minima = vec![f64::INFINITY; bundle.n * bundle.m];
    let current = estimate_from_minima(bundle, &minima);
    Ok(IncrementalState {
        bundle,
        horizon: t,
        minima,
        committed: Vec::new(),
        current,
    })
}

impl<'a> IncrementalState<'a> {
    pub fn committed(&self) -> &[NodeId] {
        &self.committed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Current estimate for the committed set; bit-identical to a fresh
    /// [`estimate_influence`] of the same set.
    pub fn estimate(&self) -> InfluenceEstimate {
        self.current
    }

    /// Estimated marginal influence of adding `j`, without committing it.
    pub fn probe_gain(&self, j: NodeId) -> Result<f64> {
        let est = self.estimate_with(j)?;
        Ok(est.value - self.current.value)
    }

    /// Estimate as if `j` were committed.
    pub fn estimate_with(&self, j: NodeId) -> Result<InfluenceEstimate> {
        if self.committed.contains(&j) {
            return Err(Error::input(format!("node {j} already committed")));
        }
        let q = self.bundle.query_labels(j, self.horizon)?;
        Ok(estimate_merged_minima(self.bundle, &self.minima, &q))
    }

    /// Fold `j` into the committed set.
    pub fn commit(&mut self, j: NodeId) -> Result<()> {
        if self.committed.contains(&j) {
            return Err(Error::input(format!("node {j} already committed")));
        }
        let q = self.bundle.query_labels(j, self.horizon)?;
        for (slot, label) in self.minima.iter_mut().zip(q) {
            if label < *slot {
                *slot = label;
            }
        }
        self.committed.push(j);
        self.current = estimate_from_minima(self.bundle, &self.minima);
        Ok(())
    }
}

/// Outer sample count sufficient for uniform accuracy `epsilon` with
/// probability `1 - alpha` over source sets of size at most `capacity`:
/// `ceil(capacity * lambda / epsilon^2 * ln(2 |V| / alpha))`.
///
/// `lambda` bundles the unobservable variance terms; a conservative
/// instantiation is `2 v^2 / (m-2) + 2 v^2 (m-1)/(m-2) + 2 v epsilon / 3`
/// with `v = |V|`, since neighborhood sizes never exceed `|V|`.
pub fn sample_size_bound(
    epsilon: f64,
    alpha: f64,
    capacity: usize,
    lambda: f64,
    num_nodes: usize,
) -> Result<u64> {
    Ok(raw_sample_size(epsilon, alpha, capacity, lambda, num_nodes)?.ceil() as u64)
}

/// [`sample_size_bound`] before the ceiling; used to test scaling laws.
pub fn raw_sample_size(
    epsilon: f64,
    alpha: f64,
    capacity: usize,
    lambda: f64,
    num_nodes: usize,
) -> Result<f64> {
    if !(epsilon > 0.0) || !(lambda > 0.0) {
        return Err(Error::input("epsilon and lambda must be positive"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::input(format!("alpha must be in (0,1), got {alpha}")));
    }
    if capacity == 0 || num_nodes == 0 {
        return Err(Error::input("capacity and num_nodes must be positive"));
    }
    Ok(capacity as f64 * lambda / (epsilon * epsilon) * (2.0 * num_nodes as f64 / alpha).ln())
}

// --- persistence ---

const MAGIC: &[u8; 4] = b"CTSB";
const VERSION: u32 = 1;

impl SketchBundle {
    /// Versioned binary dump: manifest (n, m, seed, network hash, horizon,
    /// targets) followed by each layer's lists as little-endian 64-bit pairs.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.m as u64).to_le_bytes())?;
        w.write_all(&(self.num_nodes as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.network_hash.to_le_bytes())?;
        w.write_all(&self.horizon_hint.unwrap_or(f64::NAN).to_le_bytes())?;
        match &self.targets {
            TargetSet::All => w.write_all(&u64::MAX.to_le_bytes())?,
            TargetSet::Subset { nodes, .. } => {
                w.write_all(&(nodes.len() as u64).to_le_bytes())?;
                for &v in nodes {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        let slots = match &self.targets {
            TargetSet::All => self.num_nodes,
            TargetSet::Subset { nodes, .. } => nodes.len(),
        };
        for layer in &self.layers {
            for s in 0..slots {
                lll::write_entries(&mut w, layer.slot(s))?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::input("not a sketch bundle file"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::input(format!("unsupported bundle version {version}")));
        }
        let n = read_u64(&mut r)? as usize;
        let m = read_u64(&mut r)? as usize;
        let num_nodes = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        let network_hash = read_u64(&mut r)?;
        let horizon_bits = read_u64(&mut r)?;
        let horizon = f64::from_bits(horizon_bits);
        let horizon_hint = if horizon.is_nan() { None } else { Some(horizon) };
        if n < 1 || m < 3 {
            return Err(Error::input("corrupt bundle header"));
        }
        let num_targets = read_u64(&mut r)?;
        let targets = if num_targets == u64::MAX {
            TargetSet::All
        } else {
            let mut nodes = Vec::with_capacity(num_targets as usize);
            let mut b = [0u8; 4];
            for _ in 0..num_targets {
                r.read_exact(&mut b)?;
                nodes.push(u32::from_le_bytes(b));
            }
            let mut slot_of = vec![-1i64; num_nodes];
            for (slot, &v) in nodes.iter().enumerate() {
                if v as usize >= num_nodes {
                    return Err(Error::input("corrupt bundle target list"));
                }
                slot_of[v as usize] = slot as i64;
            }
            TargetSet::Subset { nodes, slot_of }
        };
        let slots = match &targets {
            TargetSet::All => num_nodes,
            TargetSet::Subset { nodes, .. } => nodes.len(),
        };
        let mut layers = Vec::with_capacity(n * m);
        for _ in 0..n * m {
            let mut offsets = Vec::with_capacity(slots + 1);
            let mut entries = Vec::new();
            offsets.push(0u32);
            for _ in 0..slots {
                let es = lll::read_entries(&mut r)?;
                entries.extend(es);
                offsets.push(entries.len() as u32);
            }
            layers.push(CompactLayer { offsets, entries });
        }
        Ok(SketchBundle {
            n,
            m,
            num_nodes,
            seed,
            network_hash,
            horizon_hint,
            targets,
            layers,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{assign_random_laws, generate_kronecker, LawKind, TransmissionLaw};
    use crate::oracle;
    use crate::rngs::stream_rng;
    use rand::Rng;

    fn small_net(seed: u64, power: u32) -> DiffusionNetwork {
        let mut rng = stream_rng(seed, 0x22, 0);
        let el = generate_kronecker(&[[0.9, 0.5], [0.5, 0.3]], power, &mut rng).unwrap();
        assign_random_laws(&el, LawKind::Weibull, (0.5, 3.0), &mut rng).unwrap()
    }

    #[test]
    fn one_node_bundle() {
        let net = DiffusionNetwork::new(1, vec![]).unwrap();
        let bundle = build_bundle(&net, 1, 3, 7).unwrap();
        assert_eq!(bundle.total_entries(), 3, "three layers, one (0, label) entry each");
        for layer in 0..3 {
            let entries = bundle.lists(layer, 0);
            assert_eq!(entries.len(), 1);
            assert_eq!(entries[0].distance, 0.0);
            assert!(entries[0].label > 0.0);
        }
    }

    #[test]
    fn build_is_deterministic_and_validated() {
        let net = small_net(1, 4);
        let a = build_bundle(&net, 4, 3, 9).unwrap();
        let b = build_bundle(&net, 4, 3, 9).unwrap();
        assert_eq!(a, b);
        assert!(build_bundle(&net, 0, 3, 9).is_err());
        assert!(build_bundle(&net, 1, 2, 9).is_err(), "m < 3 rejected");
    }

    #[test]
    fn estimate_size_arithmetic() {
        assert_eq!(estimate_size(&[0.5, 1.0, 0.5]).unwrap(), 1.0);
        assert_eq!(estimate_size(&[1.0; 5]).unwrap(), 0.8);
        assert!(estimate_size(&[1.0, 1.0]).is_err());
        assert!(estimate_size(&[1.0, -0.5, 1.0]).is_err());
    }

    #[test]
    fn estimate_size_is_unbiased_for_fixed_neighborhood() {
        // neighborhood of true size 7: labels of its members
        let mut rng = stream_rng(3, 0x22, 1);
        let m = 5;
        let draws = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..draws {
            let mins: Vec<f64> = (0..m)
                .map(|_| {
                    (0..7)
                        .map(|_| {
                            let u: f64 = rng.gen();
                            -(1.0 - u).ln()
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let est = estimate_size(&mins).unwrap();
            sum += est;
            sumsq += est * est;
        }
        let mean = sum / draws as f64;
        let var = (sumsq - draws as f64 * mean * mean) / (draws as f64 - 1.0);
        let stderr = (var / draws as f64).sqrt();
        assert!(
            (mean - 7.0).abs() < 3.0 * stderr,
            "mean {mean}, stderr {stderr}"
        );
    }

    #[test]
    fn empty_sources_are_worth_zero() {
        let net = small_net(4, 3);
        let bundle = build_bundle(&net, 8, 3, 11).unwrap();
        let est = estimate_influence(&bundle, &SourceSet::empty(), 5.0).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn isolated_source_estimates_one() {
        let net = DiffusionNetwork::new(4, vec![]).unwrap();
        let bundle = build_bundle(&net, 200, 5, 13).unwrap();
        let est = estimate_influence(&bundle, &SourceSet::from([2]), 3.0).unwrap();
        assert!((est.value - 1.0).abs() < 0.15, "value {}", est.value);
    }

    #[test]
    fn chain_estimate_matches_closed_form() {
        let law = TransmissionLaw::exponential(1.0).unwrap();
        let net = DiffusionNetwork::new(2, vec![(0, 1, law)]).unwrap();
        let bundle = build_bundle(&net, 4000, 5, 17).unwrap();
        let est = estimate_influence(&bundle, &SourceSet::from([0]), 1.0).unwrap();
        let truth = oracle::analytic_chain_influence(&[1.0], 1.0).unwrap();
        assert!(
            (est.value - truth).abs() < 3.0 * est.stderr,
            "value {} truth {truth} stderr {}",
            est.value,
            est.stderr
        );
    }

    #[test]
    fn incremental_state_contract() {
        let net = small_net(5, 3);
        let bundle = build_bundle(&net, 32, 4, 19).unwrap();
        let t = 2.0;

        let mut state = open_incremental(&bundle, t).unwrap();
        assert_eq!(state.estimate().value, 0.0);
        let g0 = state.probe_gain(3).unwrap();
        let direct = estimate_influence(&bundle, &SourceSet::from([3]), t).unwrap();
        assert_eq!(g0, direct.value, "first gain equals the singleton estimate");

        state.commit(3).unwrap();
        state.commit(5).unwrap();
        let fresh = estimate_influence(&bundle, &SourceSet::from([3, 5]), t).unwrap();
        assert_eq!(state.estimate(), fresh, "commit then re-query is bit-for-bit");

        assert!(state.commit(3).is_err(), "double commit rejected");
        assert!(state.probe_gain(9999).is_err(), "unknown node rejected");
    }

    #[test]
    fn estimate_is_monotone_under_inclusion() {
        let net = small_net(6, 2);
        let bundle = build_bundle(&net, 16, 3, 23).unwrap();
        let n = net.num_nodes() as u32;
        for t in [0.5, 2.0] {
            for mask in 0u32..1 << n {
                let set = SourceSet::new((0..n).filter(|v| mask >> v & 1 == 1));
                let v = estimate_influence(&bundle, &set, t).unwrap().value;
                for z in 0..n {
                    if mask >> z & 1 == 1 {
                        continue;
                    }
                    let set2 = SourceSet::new((0..n).filter(|v| (mask | 1 << z) >> v & 1 == 1));
                    let v2 = estimate_influence(&bundle, &set2, t).unwrap().value;
                    assert!(v2 >= v, "monotonicity violated at mask {mask:b} + {z}");
                }
            }
        }
    }

    #[test]
    fn per_sample_counts_from_regenerated_samples_are_submodular() {
        // the exact size surrogate: per-sample neighborhood counts computed
        // from the bundle's own regenerated edge times
        let net = small_net(7, 2);
        let bundle = build_bundle(&net, 6, 3, 29).unwrap();
        let t = 1.5;
        let n = net.num_nodes() as u32;
        for l in 0..bundle.n() {
            let sample = bundle.edge_time_sample(&net, l).unwrap();
            let count = |mask: u32| {
                let set = SourceSet::new((0..n).filter(|v| mask >> v & 1 == 1));
                oracle::exact_neighborhood(&net, &sample, &set, t).unwrap() as i64
            };
            for a in 0u32..1 << n {
                for b in a..1 << n {
                    if a & b != a {
                        continue;
                    }
                    for z in 0..n {
                        if b >> z & 1 == 1 {
                            continue;
                        }
                        assert!(count(a | 1 << z) - count(a) >= count(b | 1 << z) - count(b));
                    }
                }
            }
        }
    }

    #[test]
    fn restricted_bundle_matches_full_bundle_on_targets() {
        let net = small_net(8, 4);
        let full = build_bundle(&net, 12, 3, 31).unwrap();
        let mut config = BundleConfig::new(12, 3, 31);
        config.targets = Some(vec![1, 5, 9]);
        let restricted = build_bundle_with(&net, &config).unwrap();
        for t in [0.0, 1.0, 4.0] {
            for set in [SourceSet::from([1]), SourceSet::from([5, 9]), SourceSet::from([1, 5, 9])] {
                let a = estimate_influence(&full, &set, t).unwrap();
                let b = estimate_influence(&restricted, &set, t).unwrap();
                assert_eq!(a, b);
            }
        }
        assert!(estimate_influence(&restricted, &SourceSet::from([2]), 1.0).is_err());
    }

    #[test]
    fn memory_stays_within_the_log_bound() {
        let net = small_net(9, 6);
        let n = 4;
        let m = 3;
        let bundle = build_bundle(&net, n, m, 37).unwrap();
        let v = net.num_nodes() as f64;
        let bound = (n * m) as f64 * v * (4.0 * v.ln() + 4.0);
        assert!(
            (bundle.total_entries() as f64) <= bound,
            "{} entries exceeds bound {bound}",
            bundle.total_entries()
        );
    }

    #[test]
    fn sample_size_bound_formula() {
        let n = sample_size_bound(0.1, 0.05, 1, 1.0, 100).unwrap();
        assert_eq!(n, 830, "ceil(100 ln 4000)");

        let base = raw_sample_size(0.1, 0.05, 1, 1.0, 100).unwrap();
        let halved = raw_sample_size(0.05, 0.05, 1, 1.0, 100).unwrap();
        assert!((halved / base - 4.0).abs() < 1e-12, "halving epsilon quadruples n");

        let c10 = raw_sample_size(0.1, 0.05, 10, 1.0, 100).unwrap();
        assert!((c10 / base - 10.0).abs() < 1e-12, "linear in the capacity");

        assert!(sample_size_bound(0.0, 0.05, 1, 1.0, 100).is_err());
        assert!(sample_size_bound(0.1, 1.5, 1, 1.0, 100).is_err());
    }

    #[test]
    fn bundle_roundtrip_through_disk() {
        let net = small_net(10, 3);
        let mut config = BundleConfig::new(5, 3, 41);
        config.targets = Some(vec![0, 3, 6]);
        config.horizon_hint = Some(4.0);
        let bundle = build_bundle_with(&net, &config).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.ctsb");
        bundle.save(&path).unwrap();
        let back = SketchBundle::load(&path).unwrap();
        assert_eq!(bundle, back);
        assert!(back.matches_network(&net));
        assert!(!back.matches_network(&small_net(11, 3)));
    }

    #[test]
    fn rmse_decays_with_outer_samples() {
        let net = small_net(12, 4);
        let sources = SourceSet::from([0]);
        let t = 3.0;
        let truth = oracle::ns_estimate(&net, &sources, t, 60_000, 43).unwrap().value;
        let rmse = |n: usize, trials: u64| {
            let mut acc = 0.0;
            for k in 0..trials {
                let bundle = build_bundle(&net, n, 5, 1000 + k).unwrap();
                let est = estimate_influence(&bundle, &sources, t).unwrap().value;
                acc += (est - truth) * (est - truth);
            }
            (acc / trials as f64).sqrt()
        };
        let coarse = rmse(150, 24);
        let fine = rmse(600, 24);
        let ratio = coarse / fine;
        assert!(
            (2.0 / 1.5..=2.0 * 1.5).contains(&ratio),
            "quadrupling n should halve RMSE, got ratio {ratio}"
        );
    }

    #[test]
    fn more_labels_do_not_hurt_accuracy() {
        let net = small_net(13, 4);
        let sources = SourceSet::from([0]);
        let t = 3.0;
        let truth = oracle::ns_estimate(&net, &sources, t, 60_000, 47).unwrap().value;
        let rmse = |m: usize| {
            let trials = 40;
            let mut acc = 0.0;
            for k in 0..trials {
                let bundle = build_bundle(&net, 200, m, 2000 + k).unwrap();
                let est = estimate_influence(&bundle, &sources, t).unwrap().value;
                acc += (est - truth) * (est - truth);
            }
            (acc / trials as f64).sqrt()
        };
        let five = rmse(5);
        let ten = rmse(10);
        assert!(ten <= five * 1.15, "rmse m=5 {five} vs m=10 {ten}");
    }
}

//! Least-label lists: per-node sketches answering "smallest exponential
//! label within distance T" in O(log) time.
//!
//! Build: assign every node an i.i.d. standard-exponential label, then
//! process nodes in ascending label order. Each node runs a Dijkstra on the
//! reverse graph, pruned to regions where it improves on the best distance
//! recorded by earlier (smaller) labels. Whenever node `i` settles node `s`
//! at distance `d` strictly below `s`'s best so far, `(d, label_i)` is
//! appended to `s`'s list. Lists therefore hold strictly decreasing
//! distances paired with strictly increasing labels, ending at `(0, own)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::netmodel::{DiffusionNetwork, EdgeTimeSample, NodeId};
use crate::oracle::SourceSet;

/// One exponential label per node.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelAssignment {
    labels: Vec<f64>,
}

impl LabelAssignment {
    pub fn from_labels(labels: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::input("label assignment requires at least one node"));
        }
        if let Some(l) = labels.iter().find(|l| !(**l > 0.0)) {
            return Err(Error::input(format!("labels must be positive, got {l}")));
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// `num_nodes` i.i.d. exp(1) labels.
pub fn draw_labels<R: Rng + ?Sized>(num_nodes: usize, rng: &mut R) -> Result<LabelAssignment> {
    if num_nodes == 0 {
        return Err(Error::input("draw_labels requires num_nodes >= 1"));
    }
    let labels = (0..num_nodes)
        .map(|_| loop {
            let u: f64 = rng.gen();
            let l = -(1.0 - u).ln();
            if l > 0.0 {
                break l;
            }
        })
        .collect();
    Ok(LabelAssignment { labels })
}

/// A `(distance, label)` pair in a least-label list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub distance: f64,
    pub label: f64,
}

/// Ordered `(distance, label)` pairs: distances strictly decreasing down to
/// 0, labels strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LeastLabelList {
    entries: Vec<Entry>,
}

impl LeastLabelList {
    pub fn from_entries(entries: Vec<Entry>) -> Result<Self> {
        let list = Self { entries };
        list.validate()?;
        Ok(list)
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Smallest label within distance `t`, or `None` on an empty list.
    pub fn query(&self, t: f64) -> Option<f64> {
        query_entries(&self.entries, t)
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.entries.windows(2) {
            if !(w[0].distance > w[1].distance) {
                return Err(Error::contract(format!(
                    "distances not strictly decreasing: {} then {}",
                    w[0].distance, w[1].distance
                )));
            }
            if !(w[0].label < w[1].label) {
                return Err(Error::contract(format!(
                    "labels not strictly increasing: {} then {}",
                    w[0].label, w[1].label
                )));
            }
        }
        if let Some(e) = self.entries.iter().find(|e| !(e.label > 0.0) || e.distance < 0.0) {
            return Err(Error::contract(format!("bad entry ({}, {})", e.distance, e.label)));
        }
        Ok(())
    }
}

/// Binary search for the deepest entry with distance <= `t`.
///
/// `entries` must be sorted by strictly decreasing distance. The boundary is
/// half-open on purpose: an entry at exactly distance `t` is reachable.
pub fn query_entries(entries: &[Entry], t: f64) -> Option<f64> {
    if entries.is_empty() {
        return None;
    }
    // first index with distance <= t; labels grow along the list so the
    // earliest qualifying entry carries the smallest label
    let mut lo = 0usize;
    let mut hi = entries.len();
    while lo < hi {
        let mid = (lo + hi) / 2;
        if entries[mid].distance <= t {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    entries.get(lo).map(|e| e.label)
}

/// All least-label lists for one `(edge times, labels)` draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchLayer {
    lists: Vec<LeastLabelList>,
    /// Seed the labels came from, when the layer was built by a seeded
    /// driver; `None` for directly supplied labels.
    pub label_seed: Option<u64>,
}

impl SketchLayer {
    pub fn lists(&self) -> &[LeastLabelList] {
        &self.lists
    }

    pub fn list(&self, v: NodeId) -> &LeastLabelList {
        &self.lists[v as usize]
    }

    pub fn num_nodes(&self) -> usize {
        self.lists.len()
    }

    pub fn total_entries(&self) -> usize {
        self.lists.iter().map(|l| l.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for l in &self.lists {
            l.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: NodeId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
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

/// Build every node's least-label list for one fixed edge-time sample.
///
/// `max_distance` optionally truncates the search; the resulting lists are
/// then only valid for queries with `t <= max_distance`.
pub fn build_lists_bounded(
    net: &DiffusionNetwork,
    sample: &EdgeTimeSample,
    labels: &LabelAssignment,
    max_distance: Option<f64>,
) -> Result<SketchLayer> {
    if sample.len() != net.num_edges() {
        return Err(Error::input("edge time sample does not match network"));
    }
    if labels.len() != net.num_nodes() {
        return Err(Error::input(format!(
            "label assignment has {} labels, network has {} nodes",
            labels.len(),
            net.num_nodes()
        )));
    }
    let n = net.num_nodes();
    let times = sample.times();
    let lab = labels.labels();
    let cap = max_distance.unwrap_or(f64::INFINITY);

    // ascending label order, ties (measure zero) broken by node id
    let mut order: Vec<NodeId> = (0..n as NodeId).collect();
    order.sort_by(|&a, &b| lab[a as usize].total_cmp(&lab[b as usize]).then(a.cmp(&b)));

    let mut best = vec![f64::INFINITY; n];
    let mut lists: Vec<Vec<Entry>> = vec![Vec::new(); n];

    // versioned distance array so per-label runs skip reinitialization
    let mut dist = vec![f64::INFINITY; n];
    let mut version = vec![0u32; n];
    let mut round = 0u32;
    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::new();

    for &origin in &order {
        round += 1;
        heap.clear();
        let label = lab[origin as usize];
        dist[origin as usize] = 0.0;
        version[origin as usize] = round;
        heap.push(HeapEntry {
            dist: 0.0,
            node: origin,
        });
        while let Some(HeapEntry { dist: d, node }) = heap.pop() {
            if version[node as usize] == round && d > dist[node as usize] {
                continue; // stale
            }
            if d >= best[node as usize] {
                continue; // an earlier (smaller) label already got here closer
            }
            lists[node as usize].push(Entry {
                distance: d,
                label,
            });
            best[node as usize] = d;
            // expand along incoming edges: origin reaches `prev` through
            // `node` in the original direction prev -> node
            for &(prev, eidx) in net.reverse(node) {
                let nd = d + times[eidx as usize];
                let cur = if version[prev as usize] == round {
                    dist[prev as usize]
                } else {
                    f64::INFINITY
                };
                if nd <= cap && nd < best[prev as usize] && nd < cur {
                    dist[prev as usize] = nd;
                    version[prev as usize] = round;
                    heap.push(HeapEntry { dist: nd, node: prev });
                }
            }
        }
    }

    let layer = SketchLayer {
        lists: lists
            .into_iter()
            .map(|entries| LeastLabelList { entries })
            .collect(),
        label_seed: None,
    };
    debug_assert!(layer.validate().is_ok());
    Ok(layer)
}

/// [`build_lists_bounded`] without a distance cap.
pub fn build_lists(
    net: &DiffusionNetwork,
    sample: &EdgeTimeSample,
    labels: &LabelAssignment,
) -> Result<SketchLayer> {
    build_lists_bounded(net, sample, labels, None)
}

/// Smallest label reachable within `t` from any source:
/// `min_{i in sources} query(list(i), t)`.
pub fn min_label_over_sources(layer: &SketchLayer, sources: &SourceSet, t: f64) -> Result<f64> {
    if sources.is_empty() {
        return Err(Error::input("min_label_over_sources requires a nonempty source set"));
    }
    let mut m = f64::INFINITY;
    for &s in sources.nodes() {
        let list = layer
            .lists
            .get(s as usize)
            .ok_or_else(|| Error::input(format!("node {s} out of range")))?;
        if let Some(l) = list.query(t) {
            m = m.min(l);
        }
    }
    if m.is_infinite() {
        return Err(Error::contract("queried nodes have empty lists"));
    }
    Ok(m)
}

// --- binary list encoding (shared by the sketch-bundle dump) ---

pub(crate) fn write_entries<W: Write>(w: &mut W, entries: &[Entry]) -> Result<()> {
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for e in entries {
        w.write_all(&e.distance.to_le_bytes())?;
        w.write_all(&e.label.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_entries<R: Read>(r: &mut R) -> Result<Vec<Entry>> {
    let mut len4 = [0u8; 4];
    r.read_exact(&mut len4)?;
    let len = u32::from_le_bytes(len4) as usize;
    let mut entries = Vec::with_capacity(len);
    let mut buf = [0u8; 16];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        entries.push(Entry {
            distance: f64::from_le_bytes(buf[0..8].try_into().unwrap()),
            label: f64::from_le_bytes(buf[8..16].try_into().unwrap()),
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{assign_random_laws, generate_kronecker, LawKind, TransmissionLaw};
    use crate::rngs::stream_rng;
    use proptest::prelude::*;

    fn law() -> TransmissionLaw {
        TransmissionLaw::exponential(1.0).unwrap()
    }

    #[test]
    fn draw_labels_contract() {
        let one = draw_labels(1, &mut stream_rng(1, 0, 0)).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one.labels()[0] > 0.0);

        let mut r = stream_rng(2, 0, 0);
        let many = draw_labels(1_000_000, &mut r).unwrap();
        let mean: f64 = many.labels().iter().sum::<f64>() / many.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "exp(1) mean, got {mean}");

        let a = draw_labels(64, &mut stream_rng(3, 0, 0)).unwrap();
        let b = draw_labels(64, &mut stream_rng(3, 0, 0)).unwrap();
        assert_eq!(a, b);

        assert!(draw_labels(0, &mut stream_rng(3, 0, 0)).is_err());
    }

    #[test]
    fn single_node_list() {
        let net = DiffusionNetwork::new(1, vec![]).unwrap();
        let sample = EdgeTimeSample::from_times(&net, vec![]).unwrap();
        let labels = LabelAssignment::from_labels(vec![0.7]).unwrap();
        let layer = build_lists(&net, &sample, &labels).unwrap();
        assert_eq!(
            layer.list(0).entries(),
            &[Entry {
                distance: 0.0,
                label: 0.7
            }]
        );
    }

    #[test]
    fn two_node_chain_lists_by_hand() {
        // a -> b with time 1.0; labels r_a = 0.5, r_b = 0.2.
        // b's small label travels backwards to a at distance 1.0.
        let net = DiffusionNetwork::new(2, vec![(0, 1, law())]).unwrap();
        let sample = EdgeTimeSample::from_times(&net, vec![1.0]).unwrap();
        let labels = LabelAssignment::from_labels(vec![0.5, 0.2]).unwrap();
        let layer = build_lists(&net, &sample, &labels).unwrap();
        assert_eq!(
            layer.list(0).entries(),
            &[
                Entry {
                    distance: 1.0,
                    label: 0.2
                },
                Entry {
                    distance: 0.0,
                    label: 0.5
                }
            ]
        );
        assert_eq!(
            layer.list(1).entries(),
            &[Entry {
                distance: 0.0,
                label: 0.2
            }]
        );

        // multi-source minima from the hand-built lists
        let both = SourceSet::from([0, 1]);
        assert_eq!(min_label_over_sources(&layer, &both, 0.0).unwrap(), 0.2);
        assert_eq!(
            min_label_over_sources(&layer, &SourceSet::from([0]), 0.0).unwrap(),
            0.5
        );
        assert!(min_label_over_sources(&layer, &SourceSet::empty(), 0.0).is_err());
    }

    #[test]
    fn worked_example_fixture_queries() {
        // a hand-maintained fixture list pinning query semantics on a
        // nontrivial list, independent of any particular build
        let list = LeastLabelList::from_entries(vec![
            Entry {
                distance: 2.0,
                label: 0.2,
            },
            Entry {
                distance: 1.0,
                label: 0.3,
            },
            Entry {
                distance: 0.5,
                label: 1.5,
            },
            Entry {
                distance: 0.0,
                label: 1.8,
            },
        ])
        .unwrap();
        assert_eq!(list.query(0.8), Some(1.5));
        assert_eq!(list.query(2.5), Some(0.2));
        assert_eq!(list.query(0.0), Some(1.8), "own label at distance zero");
        assert_eq!(list.query(1.0), Some(0.3), "boundary distance included");
        assert_eq!(LeastLabelList::default().query(1.0), None);
    }

    #[test]
    fn adding_sources_never_increases_minimum() {
        let mut rng = stream_rng(5, 0x11, 0);
        let el = generate_kronecker(&[[0.8, 0.6], [0.6, 0.5]], 2, &mut rng).unwrap();
        let net = assign_random_laws(&el, LawKind::Exponential, (0.5, 2.0), &mut rng).unwrap();
        let sample = net.sample_edge_times(&mut rng);
        let labels = draw_labels(net.num_nodes(), &mut rng).unwrap();
        let layer = build_lists(&net, &sample, &labels).unwrap();
        let n = net.num_nodes() as u32;
        for t in [0.0, 0.4, 1.5] {
            for mask in 1u32..1 << n {
                let set = SourceSet::new((0..n).filter(|v| mask >> v & 1 == 1));
                let m = min_label_over_sources(&layer, &set, t).unwrap();
                for extra in 0..n {
                    if mask >> extra & 1 == 1 {
                        continue;
                    }
                    let bigger = SourceSet::new((0..n).filter(|v| (mask | 1 << extra) >> v & 1 == 1));
                    let mb = min_label_over_sources(&layer, &bigger, t).unwrap();
                    assert!(mb <= m);
                }
            }
        }
    }

    /// Exhaustive oracle: smallest label among nodes within distance t of s,
    /// found by a plain Dijkstra per source.
    fn brute_force_min_label(
        net: &DiffusionNetwork,
        sample: &EdgeTimeSample,
        labels: &LabelAssignment,
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
                let nd = du + sample.times()[eidx as usize];
                if nd < dist[next as usize] {
                    dist[next as usize] = nd;
                }
            }
        }
        (0..n)
            .filter(|&v| dist[v] <= t)
            .map(|v| labels.labels()[v])
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn queries_match_brute_force_on_small_graphs() {
        let mut rng = stream_rng(6, 0x11, 1);
        for _ in 0..20 {
            let el = generate_kronecker(&[[0.9, 0.6], [0.6, 0.5]], 3, &mut rng).unwrap();
            let net = assign_random_laws(&el, LawKind::Weibull, (0.3, 3.0), &mut rng).unwrap();
            let sample = net.sample_edge_times(&mut rng);
            let labels = draw_labels(net.num_nodes(), &mut rng).unwrap();
            let layer = build_lists(&net, &sample, &labels).unwrap();
            layer.validate().unwrap();
            for s in 0..net.num_nodes() as NodeId {
                for _ in 0..20 {
                    let t: f64 = rand::Rng::gen_range(&mut rng, 0.0..4.0);
                    let got = layer.list(s).query(t).unwrap();
                    let want = brute_force_min_label(&net, &sample, &labels, s, t);
                    assert_eq!(got, want, "node {s}, t {t}");
                }
            }
        }
    }

    #[test]
    fn bounded_build_matches_full_build_below_the_cap() {
        let mut rng = stream_rng(7, 0x11, 2);
        let el = generate_kronecker(&[[0.8, 0.5], [0.5, 0.4]], 3, &mut rng).unwrap();
        let net = assign_random_laws(&el, LawKind::Exponential, (0.5, 2.0), &mut rng).unwrap();
        let sample = net.sample_edge_times(&mut rng);
        let labels = draw_labels(net.num_nodes(), &mut rng).unwrap();
        let full = build_lists(&net, &sample, &labels).unwrap();
        let capped = build_lists_bounded(&net, &sample, &labels, Some(1.5)).unwrap();
        for s in 0..net.num_nodes() as NodeId {
            for t in [0.0, 0.5, 1.0, 1.5] {
                assert_eq!(full.list(s).query(t), capped.list(s).query(t));
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let mut rng = stream_rng(8, 0x11, 3);
        let el = generate_kronecker(&[[0.9, 0.5], [0.5, 0.3]], 6, &mut rng).unwrap();
        let net = assign_random_laws(&el, LawKind::Weibull, (0.1, 10.0), &mut rng).unwrap();
        let sample = net.sample_edge_times(&mut rng);
        let labels = draw_labels(net.num_nodes(), &mut rng).unwrap();
        let a = build_lists(&net, &sample, &labels).unwrap();
        let b = build_lists(&net, &sample, &labels).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn list_lengths_stay_logarithmic() {
        let mut rng = stream_rng(9, 0x11, 4);
        let el = generate_kronecker(&[[0.9, 0.5], [0.5, 0.3]], 8, &mut rng).unwrap();
        let net = assign_random_laws(&el, LawKind::Weibull, (0.1, 10.0), &mut rng).unwrap();
        let sample = net.sample_edge_times(&mut rng);
        let labels = draw_labels(net.num_nodes(), &mut rng).unwrap();
        let layer = build_lists(&net, &sample, &labels).unwrap();
        let v = net.num_nodes() as f64;
        let mean = layer.total_entries() as f64 / v;
        let bound = 4.0 * (v.ln() + 1.0);
        let mut hist = std::collections::BTreeMap::new();
        for l in layer.lists() {
            *hist.entry(l.len()).or_insert(0usize) += 1;
        }
        assert!(
            mean <= bound,
            "mean list length {mean} exceeds {bound}; distribution {hist:?}"
        );
    }

    #[test]
    fn entry_roundtrip() {
        let entries = vec![
            Entry {
                distance: 2.5,
                label: 0.25,
            },
            Entry {
                distance: 0.0,
                label: 1.5,
            },
        ];
        let mut buf = Vec::new();
        write_entries(&mut buf, &entries).unwrap();
        let back = read_entries(&mut &buf[..]).unwrap();
        assert_eq!(entries, back);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn built_lists_always_satisfy_ordering(seed in 0u64..1000) {
            let mut rng = stream_rng(seed, 0x11, 5);
            let el = generate_kronecker(&[[0.9, 0.6], [0.6, 0.5]], 4, &mut rng).unwrap();
            let net = assign_random_laws(&el, LawKind::Exponential, (0.2, 5.0), &mut rng).unwrap();
            let sample = net.sample_edge_times(&mut rng);
            let labels = draw_labels(net.num_nodes(), &mut rng).unwrap();
            let layer = build_lists(&net, &sample, &labels).unwrap();
            prop_assert!(layer.validate().is_ok());
            for (v, list) in layer.lists().iter().enumerate() {
                let last = list.entries().last().unwrap();
                prop_assert_eq!(last.distance, 0.0);
                prop_assert_eq!(last.label, labels.labels()[v]);
            }
        }
    }
}

//! Training graphs: vertex weights `v_n` and symmetric edge weights
//! `γ_{n,n'}` over the training samples.
//!
//! Clustered and serial graphs have `Θ(N²/L)` edges. They are stored as a
//! [`GroupStructure`] and only enumerated on request; the moment accumulation
//! in [`crate::gsfa`] works from group sums directly. A graph is a sum of
//! weighted edge components, which is what [`combine_graphs`] produces.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// An undirected weighted edge, stored once with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(i: usize, j: usize, weight: f64) -> Self {
        Edge { i, j, weight }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupKind {
    Clustered,
    Serial,
    Generic,
}

/// Partition of the samples into groups.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupStructure {
    pub kind: GroupKind,
    pub group_of_sample: Vec<usize>,
    pub group_sizes: Vec<usize>,
    /// Mean label per group, strictly increasing. Serial graphs only.
    pub representative_labels: Vec<f64>,
}

impl GroupStructure {
    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }

    /// Sample indices of each group, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self
            .group_sizes
            .iter()
            .map(|&s| Vec::with_capacity(s))
            .collect();
        for (n, &g) in self.group_of_sample.iter().enumerate() {
            out[g].push(n);
        }
        out
    }

    fn permuted(&self, inverse: &[usize]) -> Self {
        let mut group_of_sample = vec![0; self.group_of_sample.len()];
        for (old, &g) in self.group_of_sample.iter().enumerate() {
            group_of_sample[inverse[old]] = g;
        }
        GroupStructure {
            group_of_sample,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum EdgeSource {
    /// Sparse triple list; every stored edge counts in both orientations.
    Explicit(Vec<Edge>),
    /// Complete subgraph inside each group with weight `1/(N_s - 1)`.
    Clustered(GroupStructure),
    /// All pairs between consecutive groups with weight 1.
    Serial(GroupStructure),
}

#[derive(Clone, Debug)]
pub(crate) struct EdgeComponent {
    pub(crate) scale: f64,
    pub(crate) source: EdgeSource,
}

impl EdgeComponent {
    /// Sum of the edge weights over both orientations.
    fn ordered_weight_sum(&self) -> f64 {
        let raw = match &self.source {
            EdgeSource::Explicit(edges) => 2.0 * edges.iter().map(|e| e.weight).sum::<f64>(),
            EdgeSource::Clustered(gs) => gs
                .group_sizes
                .iter()
                .filter(|&&s| s >= 2)
                .map(|&s| s as f64)
                .sum(),
            EdgeSource::Serial(gs) => {
                2.0 * gs
                    .group_sizes
                    .windows(2)
                    .map(|w| (w[0] * w[1]) as f64)
                    .sum::<f64>()
            }
        };
        self.scale * raw
    }

    fn for_each_edge(&self, mut f: impl FnMut(usize, usize, f64)) {
        match &self.source {
            EdgeSource::Explicit(edges) => {
                for e in edges {
                    f(e.i, e.j, self.scale * e.weight);
                }
            }
            EdgeSource::Clustered(gs) => {
                for members in gs.members() {
                    if members.len() < 2 {
                        continue;
                    }
                    let w = self.scale / (members.len() - 1) as f64;
                    for (a, &i) in members.iter().enumerate() {
                        for &j in &members[a + 1..] {
                            f(i, j, w);
                        }
                    }
                }
            }
            EdgeSource::Serial(gs) => {
                let members = gs.members();
                for pair in members.windows(2) {
                    for &i in &pair[0] {
                        for &j in &pair[1] {
                            f(i.min(j), i.max(j), self.scale);
                        }
                    }
                }
            }
        }
    }

    fn add_degrees(&self, degree: &mut [f64]) {
        match &self.source {
            EdgeSource::Explicit(edges) => {
                for e in edges {
                    if e.i < degree.len() {
                        degree[e.i] += self.scale * e.weight;
                    }
                    if e.j < degree.len() {
                        degree[e.j] += self.scale * e.weight;
                    }
                }
            }
            EdgeSource::Clustered(gs) => {
                for (n, &g) in gs.group_of_sample.iter().enumerate() {
                    if gs.group_sizes[g] >= 2 {
                        degree[n] += self.scale;
                    }
                }
            }
            EdgeSource::Serial(gs) => {
                let l = gs.group_sizes.len();
                for (n, &g) in gs.group_of_sample.iter().enumerate() {
                    let prev = if g > 0 { gs.group_sizes[g - 1] } else { 0 };
                    let next = if g + 1 < l { gs.group_sizes[g + 1] } else { 0 };
                    degree[n] += self.scale * (prev + next) as f64;
                }
            }
        }
    }

    fn permuted(&self, inverse: &[usize]) -> Self {
        let source = match &self.source {
            EdgeSource::Explicit(edges) => EdgeSource::Explicit(
                edges
                    .iter()
                    .map(|e| {
                        let (a, b) = (inverse[e.i], inverse[e.j]);
                        Edge::new(a.min(b), a.max(b), e.weight)
                    })
                    .collect(),
            ),
            EdgeSource::Clustered(gs) => EdgeSource::Clustered(gs.permuted(inverse)),
            EdgeSource::Serial(gs) => EdgeSource::Serial(gs.permuted(inverse)),
        };
        EdgeComponent {
            scale: self.scale,
            source,
        }
    }
}

/// Weighted training graph over `N` samples.
#[derive(Clone, Debug)]
pub struct TrainingGraph {
    n_samples: usize,
    vertex_weights: Vec<f64>,
    components: Vec<EdgeComponent>,
    edge_normalizer: f64,
    vertex_normalizer: f64,
}

impl TrainingGraph {
    fn assemble(n_samples: usize, vertex_weights: Vec<f64>, components: Vec<EdgeComponent>) -> Self {
        let edge_normalizer = components.iter().map(|c| c.ordered_weight_sum()).sum();
        let vertex_normalizer = vertex_weights.iter().sum();
        TrainingGraph {
            n_samples,
            vertex_weights,
            components,
            edge_normalizer,
            vertex_normalizer,
        }
    }

    /// Generic triple-list graph. Edges may be given in either orientation;
    /// they are stored with `i < j`.
    pub fn from_edges(n_samples: usize, vertex_weights: Vec<f64>, edges: Vec<Edge>) -> Result<Self> {
        if vertex_weights.len() != n_samples {
            return Err(Error::dims("vertex weights", n_samples, vertex_weights.len()));
        }
        if let Some(n) = vertex_weights.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "vertex weight at {n} must be positive"
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut stored = Vec::with_capacity(edges.len());
        for e in edges {
            if e.i >= n_samples || e.j >= n_samples {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) out of range for {n_samples} samples",
                    e.i, e.j
                )));
            }
            if e.i == e.j {
                return Err(Error::InvalidArgument(format!("self-loop at {}", e.i)));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) weight must be positive",
                    e.i, e.j
                )));
            }
            let (i, j) = (e.i.min(e.j), e.i.max(e.j));
            if !seen.insert((i, j)) {
                return Err(Error::InvalidArgument(format!("duplicate edge ({i}, {j})")));
            }
            stored.push(Edge::new(i, j, e.weight));
        }
        Ok(Self::assemble(
            n_samples,
            vertex_weights,
            vec![EdgeComponent {
                scale: 1.0,
                source: EdgeSource::Explicit(stored),
            }],
        ))
    }

    /// Unchecked constructor for loaders: nothing is validated and the
    /// normalizers are taken as given. Run [`validate_graph`] on the result.
    pub fn from_raw_parts(
        n_samples: usize,
        vertex_weights: Vec<f64>,
        edges: Vec<Edge>,
        edge_normalizer: f64,
        vertex_normalizer: f64,
    ) -> Self {
        TrainingGraph {
            n_samples,
            vertex_weights,
            components: vec![EdgeComponent {
                scale: 1.0,
                source: EdgeSource::Explicit(edges),
            }],
            edge_normalizer,
            vertex_normalizer,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn vertex_weights(&self) -> &[f64] {
        &self.vertex_weights
    }

    /// `R`, the edge-weight sum over both orientations.
    pub fn edge_normalizer(&self) -> f64 {
        self.edge_normalizer
    }

    /// `Q_v`, the vertex-weight sum.
    pub fn vertex_normalizer(&self) -> f64 {
        self.vertex_normalizer
    }

    pub(crate) fn components(&self) -> &[EdgeComponent] {
        &self.components
    }

    /// Group structure of a plain clustered or serial graph.
    pub fn group_structure(&self) -> Option<&GroupStructure> {
        match self.components.as_slice() {
            [c] => match &c.source {
                EdgeSource::Clustered(gs) | EdgeSource::Serial(gs) => Some(gs),
                EdgeSource::Explicit(_) => None,
            },
            _ => None,
        }
    }

    /// All edges with `i < j`, weights of coinciding pairs summed, sorted by
    /// `(i, j)`. Materializes every pair; meant for inspection and tests.
    pub fn edges(&self) -> Vec<Edge> {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for c in &self.components {
            c.for_each_edge(|i, j, w| {
                let key = (i.min(j), i.max(j));
                *acc.entry(key).or_insert(0.0) += w;
            });
        }
        acc.into_iter()
            .map(|((i, j), weight)| Edge { i, j, weight })
            .collect()
    }

    /// Number of stored edges counting coinciding pairs once.
    pub fn n_edges(&self) -> usize {
        self.edges().len()
    }

    /// Sum of incident edge weights per vertex.
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_samples];
        for c in &self.components {
            c.add_degrees(&mut d);
        }
        d
    }

    /// Multiplies every edge weight by `edge_factor` and every vertex weight
    /// by `vertex_factor`.
    pub fn scaled(&self, edge_factor: f64, vertex_factor: f64) -> Self {
        let components = self
            .components
            .iter()
            .map(|c| EdgeComponent {
                scale: c.scale * edge_factor,
                source: c.source.clone(),
            })
            .collect();
        let v = self.vertex_weights.iter().map(|w| w * vertex_factor).collect();
        Self::assemble(self.n_samples, v, components)
    }

    /// Relabels the vertices for a reordered sample set: new sample `k` is
    /// old sample `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n_samples {
            return Err(Error::dims("permutation", self.n_samples, order.len()));
        }
        let mut inverse = vec![usize::MAX; self.n_samples];
        for (new, &old) in order.iter().enumerate() {
            if old >= self.n_samples || inverse[old] != usize::MAX {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            inverse[old] = new;
        }
        let v = order.iter().map(|&old| self.vertex_weights[old]).collect();
        let components = self.components.iter().map(|c| c.permuted(&inverse)).collect();
        Ok(Self::assemble(self.n_samples, v, components))
    }
}

/// Chain graph `0 - 1 - … - N-1` with unit weights; GSFA on it is plain SFA.
pub fn linear_graph(n_samples: usize) -> Result<TrainingGraph> {
    if n_samples < 3 {
        return Err(Error::DegenerateGraph(format!(
            "linear graph needs at least 3 samples, got {n_samples}"
        )));
    }
    let edges = (0..n_samples - 1).map(|n| Edge::new(n, n + 1, 1.0)).collect();
    Ok(TrainingGraph::assemble(
        n_samples,
        vec![1.0; n_samples],
        vec![EdgeComponent {
            scale: 1.0,
            source: EdgeSource::Explicit(edges),
        }],
    ))
}

/// One fully connected subgraph per class, edge weight `1/(N_s - 1)`,
/// unit vertex weights. Class ids need not be contiguous; groups are
/// numbered by ascending class id.
pub fn clustered_graph(class_of_sample: &[usize]) -> Result<TrainingGraph> {
    let gs = group_by_class(class_of_sample, GroupKind::Clustered)?;
    let n = class_of_sample.len();
    Ok(TrainingGraph::assemble(
        n,
        vec![1.0; n],
        vec![EdgeComponent {
            scale: 1.0,
            source: EdgeSource::Clustered(gs),
        }],
    ))
}

pub(crate) fn group_by_class(class_of_sample: &[usize], kind: GroupKind) -> Result<GroupStructure> {
    if class_of_sample.is_empty() {
        return Err(Error::DegenerateGraph("no samples".into()));
    }
    let mut ids: Vec<usize> = class_of_sample.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let index: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(g, &c)| (c, g)).collect();
    let group_of_sample: Vec<usize> = class_of_sample.iter().map(|c| index[c]).collect();
    let mut group_sizes = vec![0; ids.len()];
    for &g in &group_of_sample {
        group_sizes[g] += 1;
    }
    Ok(GroupStructure {
        kind,
        group_of_sample,
        group_sizes,
        representative_labels: Vec::new(),
    })
}

/// Sizes of `n_groups` contiguous groups over `n` items, the remainder going
/// one each to the earliest groups.
pub fn equal_group_sizes(n: usize, n_groups: usize) -> Vec<usize> {
    let base = n / n_groups;
    let rem = n % n_groups;
    (0..n_groups).map(|g| base + usize::from(g < rem)).collect()
}

/// Sample indices ordered by label, ties broken by index.
pub(crate) fn order_by_label(labels: &[f64]) -> Result<Vec<usize>> {
    if let Some(n) = labels.iter().position(|l| !l.is_finite()) {
        return Err(Error::InvalidArgument(format!("label at {n} is not finite")));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]).then(a.cmp(&b)));
    Ok(order)
}

/// Serial graph: samples sorted by label and split into `n_groups` groups;
/// every pair across consecutive groups gets weight 1. Vertex weight is 1 in
/// the first and last group and 2 elsewhere.
pub fn serial_graph(labels: &[f64], n_groups: usize) -> Result<(TrainingGraph, GroupStructure)> {
    let n = labels.len();
    if n_groups < 2 {
        return Err(Error::DegenerateGraph(format!(
            "serial graph needs at least 2 groups, got {n_groups}"
        )));
    }
    if n < n_groups {
        return Err(Error::DegenerateGraph(format!(
            "{n} samples cannot fill {n_groups} groups"
        )));
    }
    let order = order_by_label(labels)?;
    let group_sizes = equal_group_sizes(n, n_groups);
    let mut group_of_sample = vec![0; n];
    let mut representative_labels = Vec::with_capacity(n_groups);
    let mut pos = 0;
    for (g, &size) in group_sizes.iter().enumerate() {
        let mut sum = 0.0;
        for &idx in &order[pos..pos + size] {
            group_of_sample[idx] = g;
            sum += labels[idx];
        }
        representative_labels.push(sum / size as f64);
        pos += size;
    }
    if representative_labels.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::DegenerateGraph(
            "group mean labels are not strictly increasing; too many tied labels".into(),
        ));
    }
    let vertex_weights = group_of_sample
        .iter()
        .map(|&g| if g == 0 || g == n_groups - 1 { 1.0 } else { 2.0 })
        .collect();
    let gs = GroupStructure {
        kind: GroupKind::Serial,
        group_of_sample,
        group_sizes,
        representative_labels,
    };
    let graph = TrainingGraph::assemble(
        n,
        vertex_weights,
        vec![EdgeComponent {
            scale: 1.0,
            source: EdgeSource::Serial(gs.clone()),
        }],
    );
    Ok((graph, gs))
}

/// True when `a` and `b` are proportional within relative `tol`.
pub fn vertex_weights_proportional(a: &[f64], b: &[f64], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    a.iter()
        .zip(b)
        .all(|(&x, &y)| ((x / sa) - (y / sb)).abs() <= tol * (x / sa).abs().max((y / sb).abs()))
}

/// Adds vertex and edge weights of graphs over the same samples.
///
/// Non-proportional vertex weights are logged as a warning, not rejected.
pub fn combine_graphs(graphs: &[TrainingGraph]) -> Result<TrainingGraph> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no graphs to combine".into()))?;
    let n = first.n_samples;
    let mut v = vec![0.0; n];
    let mut components = Vec::new();
    for (k, g) in graphs.iter().enumerate() {
        if g.n_samples != n {
            return Err(Error::dims("combine_graphs", n, g.n_samples));
        }
        if k > 0 && !vertex_weights_proportional(&first.vertex_weights, &g.vertex_weights, 1e-6) {
            log::warn!("combined graph {k} has vertex weights not proportional to graph 0");
        }
        for (acc, w) in v.iter_mut().zip(&g.vertex_weights) {
            *acc += w;
        }
        components.extend(g.components.iter().cloned());
    }
    Ok(TrainingGraph::assemble(n, v, components))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FindingKind {
    SelfLoop(usize),
    IndexOutOfRange { i: usize, j: usize },
    NonPositiveEdgeWeight { i: usize, j: usize },
    NonPositiveVertexWeight(usize),
    Asymmetric { i: usize, j: usize },
    DuplicateEdge { i: usize, j: usize },
    IsolatedVertex(usize),
    VertexCountMismatch { expected: usize, actual: usize },
    InconsistentEdgeNormalizer { stored: f64, recomputed: f64 },
    InconsistentVertexNormalizer { stored: f64, recomputed: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Finding {
    pub severity: Severity,
    pub kind: FindingKind,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use FindingKind::*;
        match &self.kind {
            SelfLoop(n) => write!(f, "self-loop at {n}"),
            IndexOutOfRange { i, j } => write!(f, "edge ({i}, {j}) out of range"),
            NonPositiveEdgeWeight { i, j } => write!(f, "non-positive weight on edge ({i}, {j})"),
            NonPositiveVertexWeight(n) => write!(f, "non-positive vertex weight at {n}"),
            Asymmetric { i, j } => write!(f, "asymmetric weights between {i} and {j}"),
            DuplicateEdge { i, j } => write!(f, "duplicate edge ({i}, {j})"),
            IsolatedVertex(n) => write!(f, "isolated vertex {n}"),
            VertexCountMismatch { expected, actual } => {
                write!(f, "{actual} vertex weights for {expected} samples")
            }
            InconsistentEdgeNormalizer { stored, recomputed } => {
                write!(f, "edge normalizer {stored} differs from recomputed {recomputed}")
            }
            InconsistentVertexNormalizer { stored, recomputed } => {
                write!(f, "vertex normalizer {stored} differs from recomputed {recomputed}")
            }
        }
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Structural report on a graph. Never fails.
pub fn validate_graph(g: &TrainingGraph) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut push = |severity, kind| out.push(Finding { severity, kind });
    let n = g.n_samples;
    if g.vertex_weights.len() != n {
        push(
            Severity::Error,
            FindingKind::VertexCountMismatch {
                expected: n,
                actual: g.vertex_weights.len(),
            },
        );
    }
    for (k, &v) in g.vertex_weights.iter().enumerate() {
        if !(v > 0.0) {
            push(Severity::Error, FindingKind::NonPositiveVertexWeight(k));
        }
    }
    for c in &g.components {
        if let EdgeSource::Explicit(edges) = &c.source {
            let mut seen: BTreeMap<(usize, usize), (bool, f64)> = BTreeMap::new();
            for e in edges {
                if e.i >= n || e.j >= n {
                    push(Severity::Error, FindingKind::IndexOutOfRange { i: e.i, j: e.j });
                    continue;
                }
                if e.i == e.j {
                    push(Severity::Error, FindingKind::SelfLoop(e.i));
                    continue;
                }
                if !(e.weight > 0.0) {
                    push(Severity::Error, FindingKind::NonPositiveEdgeWeight { i: e.i, j: e.j });
                }
                let key = (e.i.min(e.j), e.i.max(e.j));
                let forward = e.i < e.j;
                match seen.get(&key) {
                    Some(&(prev_forward, w)) if prev_forward != forward && w != e.weight => {
                        push(Severity::Error, FindingKind::Asymmetric { i: key.0, j: key.1 })
                    }
                    Some(_) => push(Severity::Error, FindingKind::DuplicateEdge { i: key.0, j: key.1 }),
                    None => {
                        seen.insert(key, (forward, e.weight));
                    }
                }
            }
        }
    }
    for (k, d) in g.degrees().iter().enumerate() {
        if *d == 0.0 {
            push(Severity::Warning, FindingKind::IsolatedVertex(k));
        }
    }
    let r: f64 = g.components.iter().map(|c| c.ordered_weight_sum()).sum();
    if !rel_close(r, g.edge_normalizer, 1e-12) {
        push(
            Severity::Error,
            FindingKind::InconsistentEdgeNormalizer {
                stored: g.edge_normalizer,
                recomputed: r,
            },
        );
    }
    let q: f64 = g.vertex_weights.iter().sum();
    if !rel_close(q, g.vertex_normalizer, 1e-12) {
        push(
            Severity::Error,
            FindingKind::InconsistentVertexNormalizer {
                stored: g.vertex_normalizer,
                recomputed: q,
            },
        );
    }
    out
}

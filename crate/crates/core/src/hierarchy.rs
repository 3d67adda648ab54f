//! Grid-structured networks of iGSFA or GSFA nodes.
//!
//! Layer 0 is the input, a `rows × cols` grid of scalar units stored
//! row-major in each sample. Every later layer is a grid of nodes; the node
//! at `(r, c)` reads the `fan_in` block of units starting at
//! `(r·stride_r, c·stride_c)` of the layer below. Units of a node layer are
//! its nodes, each contributing `output_dim` values, so the output of a layer
//! is the row-major concatenation of its node outputs. A node reads its
//! fan-in block in row-major order.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansions::ExpansionSpec;
use crate::graphs::TrainingGraph;
use crate::linalg;
use crate::node::{
    train_gsfa_node_with_output, train_node_with_output, GsfaNodeModel, IgsfaNodeModel, NodeConfig, ScalingMode,
    SlowPartRule,
};
use crate::pca::{train_pca, PcaModel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    #[default]
    Igsfa,
    Gsfa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// Expected node grid; checked against the derived geometry when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_shape: Option<(usize, usize)>,
    pub fan_in: (usize, usize),
    /// Defaults to `fan_in` (no overlap).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<(usize, usize)>,
    pub output_dim: usize,
    #[serde(default = "ExpansionSpec::identity")]
    pub expansion: ExpansionSpec,
    #[serde(default)]
    pub slow_part: SlowPartRule,
    #[serde(default)]
    pub scaling: ScalingMode,
    /// PCA applied to each node's raw input before the node itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_pca_dim: Option<usize>,
    #[serde(default)]
    pub node_kind: NodeKind,
}

impl LayerSpec {
    pub fn new(fan_in: (usize, usize), output_dim: usize) -> Self {
        LayerSpec {
            grid_shape: None,
            fan_in,
            stride: None,
            output_dim,
            expansion: ExpansionSpec::identity(),
            slow_part: SlowPartRule::default(),
            scaling: ScalingMode::default(),
            pre_pca_dim: None,
            node_kind: NodeKind::default(),
        }
    }

    pub fn stride(&self) -> (usize, usize) {
        self.stride.unwrap_or(self.fan_in)
    }

    pub fn node_config(&self) -> NodeConfig {
        NodeConfig {
            output_dim: self.output_dim,
            slow_part: self.slow_part,
            expansion: self.expansion.clone(),
            scaling: self.scaling,
            extra_features: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// `(rows, cols)` of the single-channel input.
    pub input_shape: (usize, usize),
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn input_dim(&self) -> usize {
        self.input_shape.0 * self.input_shape.1
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim(), |l| l.output_dim)
    }
}

/// Resolved geometry of one node layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWiring {
    pub grid: (usize, usize),
    /// Values per unit of the layer below.
    pub unit_dim_in: usize,
    pub output_dim: usize,
    /// Per node, row-major, the column indices read from the layer below.
    pub node_inputs: Vec<Vec<usize>>,
}

impl LayerWiring {
    pub fn n_nodes(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn node_input_dim(&self) -> usize {
        self.node_inputs.first().map_or(0, Vec::len)
    }

    pub fn layer_output_dim(&self) -> usize {
        self.n_nodes() * self.output_dim
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WiringPlan {
    pub input_dim: usize,
    pub layers: Vec<LayerWiring>,
}

impl WiringPlan {
    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, LayerWiring::layer_output_dim)
    }
}

fn axis_count(n: usize, f: usize, s: usize, layer: usize, axis: &str) -> Result<usize> {
    let bad = |msg: String| Err(Error::Config(format!("layer {layer} ({axis}): {msg}")));
    if f == 0 || s == 0 {
        return bad("fan-in and stride must be positive".into());
    }
    if f > n {
        return bad(format!("fan-in {f} exceeds the {n} units below"));
    }
    if s > f {
        return bad(format!("stride {s} > fan-in {f} leaves a coverage gap"));
    }
    if (n - f) % s != 0 {
        return bad(format!("fan-in {f} with stride {s} does not tile {n} units"));
    }
    Ok((n - f) / s + 1)
}

/// Resolves the per-node input indices of every layer and checks that the
/// geometry tiles exactly and ends in a single node.
pub fn build_network(spec: &NetworkSpec) -> Result<WiringPlan> {
    let (r0, c0) = spec.input_shape;
    if r0 == 0 || c0 == 0 {
        return Err(Error::Config("input shape must be non-empty".into()));
    }
    if spec.layers.is_empty() {
        return Err(Error::Config("network has no layers".into()));
    }
    let mut below = (r0, c0);
    let mut unit_dim = 1;
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (li, l) in spec.layers.iter().enumerate() {
        let layer = li + 1;
        let (sr, sc) = l.stride();
        let grid = (
            axis_count(below.0, l.fan_in.0, sr, layer, "rows")?,
            axis_count(below.1, l.fan_in.1, sc, layer, "cols")?,
        );
        if let Some(expected) = l.grid_shape {
            if expected != grid {
                return Err(Error::Config(format!(
                    "layer {layer}: declared grid {expected:?} but geometry gives {grid:?}"
                )));
            }
        }
        if l.output_dim == 0 {
            return Err(Error::Config(format!("layer {layer}: output_dim must be positive")));
        }
        let mut node_inputs = Vec::with_capacity(grid.0 * grid.1);
        let mut covered = vec![false; below.0 * below.1];
        for r in 0..grid.0 {
            for c in 0..grid.1 {
                let mut idx = Vec::with_capacity(l.fan_in.0 * l.fan_in.1 * unit_dim);
                for fr in 0..l.fan_in.0 {
                    for fc in 0..l.fan_in.1 {
                        let unit = (r * sr + fr) * below.1 + (c * sc + fc);
                        covered[unit] = true;
                        idx.extend(unit * unit_dim..(unit + 1) * unit_dim);
                    }
                }
                node_inputs.push(idx);
            }
        }
        if let Some(u) = covered.iter().position(|&v| !v) {
            return Err(Error::Config(format!("layer {layer}: unit {u} below is not read by any node")));
        }
        let in_dim = l.fan_in.0 * l.fan_in.1 * unit_dim;
        if let Some(p) = l.pre_pca_dim {
            if p == 0 || p > in_dim {
                return Err(Error::Config(format!(
                    "layer {layer}: pre-PCA dimension {p} must be in 1..={in_dim}"
                )));
            }
        }
        layers.push(LayerWiring {
            grid,
            unit_dim_in: unit_dim,
            output_dim: l.output_dim,
            node_inputs,
        });
        below = grid;
        unit_dim = l.output_dim;
    }
    if below != (1, 1) {
        return Err(Error::Config(format!("top layer must be a single node, got {below:?}")));
    }
    Ok(WiringPlan {
        input_dim: r0 * c0,
        layers,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeModel {
    Igsfa(IgsfaNodeModel),
    Gsfa(GsfaNodeModel),
}

/// A trained node together with its optional input PCA.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkNode {
    pub pre_pca: Option<PcaModel>,
    pub model: NodeModel,
}

impl NetworkNode {
    pub fn output_dim(&self) -> usize {
        match &self.model {
            NodeModel::Igsfa(m) => m.output_dim,
            NodeModel::Gsfa(m) => m.output_dim,
        }
    }

    pub fn extract(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let pre;
        let x = match &self.pre_pca {
            Some(p) => {
                pre = p.apply(x)?;
                pre.view()
            }
            None => x.view(),
        };
        match &self.model {
            NodeModel::Igsfa(m) => m.extract(&x),
            NodeModel::Gsfa(m) => m.extract(&x),
        }
    }
}

fn train_network_node(x: &ArrayView2<f64>, g: &TrainingGraph, l: &LayerSpec) -> Result<(NetworkNode, Array2<f64>)> {
    let pre_pca = l.pre_pca_dim.map(|d| train_pca(x, d)).transpose()?;
    let reduced;
    let xin = match &pre_pca {
        Some(p) => {
            reduced = p.apply(x)?;
            reduced.view()
        }
        None => x.view(),
    };
    let (model, y) = match l.node_kind {
        NodeKind::Igsfa => {
            let (m, y) = train_node_with_output(&xin, g, &l.node_config())?;
            (NodeModel::Igsfa(m), y)
        }
        NodeKind::Gsfa => {
            let (m, y) = train_gsfa_node_with_output(&xin, g, l.output_dim, &l.expansion)?;
            (NodeModel::Gsfa(m), y)
        }
    };
    Ok((NetworkNode { pre_pca, model }, y))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedNetwork {
    pub spec: NetworkSpec,
    pub plan: WiringPlan,
    /// `layers[l][r * cols + c]`
    pub layers: Vec<Vec<NetworkNode>>,
}

impl TrainedNetwork {
    pub fn input_dim(&self) -> usize {
        self.plan.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.plan.output_dim()
    }

    pub fn n_nodes(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// Output of the first `n_layers` layers.
    pub fn extract_upto(&self, x: &ArrayView2<f64>, n_layers: usize) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dims("network input", self.input_dim(), x.ncols()));
        }
        let mut cur = x.to_owned();
        for (li, (wiring, nodes)) in self.plan.layers.iter().zip(&self.layers).take(n_layers).enumerate() {
            let outs: Vec<Array2<f64>> = nodes
                .par_iter()
                .zip(&wiring.node_inputs)
                .enumerate()
                .map(|(k, (node, idx))| {
                    node.extract(&cur.select(Axis(1), idx).view())
                        .map_err(|e| locate(e, li, k, wiring.grid.1))
                })
                .collect::<Result<_>>()?;
            cur = assemble(&outs, x.nrows(), wiring.output_dim);
        }
        Ok(cur)
    }

    pub fn extract(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.extract_upto(x, self.layers.len())
    }

    pub fn node(&self, layer: usize, row: usize, col: usize) -> Option<&NetworkNode> {
        let cols = self.plan.layers.get(layer)?.grid.1;
        self.layers.get(layer)?.get(row * cols + col)
    }
}

fn locate(e: Error, layer: usize, k: usize, cols: usize) -> Error {
    Error::Node {
        layer: layer + 1,
        row: k / cols,
        col: k % cols,
        source: Box::new(e),
    }
}

fn assemble(outs: &[Array2<f64>], n: usize, d: usize) -> Array2<f64> {
    let mut y = Array2::zeros((n, outs.len() * d));
    for (k, o) in outs.iter().enumerate() {
        y.slice_mut(s![.., k * d..(k + 1) * d]).assign(o);
    }
    y
}

/// Trains layer by layer with one shared graph, returning the network and
/// its outputs on the training data.
pub fn train_network_with_output(
    spec: &NetworkSpec,
    x: &ArrayView2<f64>,
    g: &TrainingGraph,
) -> Result<(TrainedNetwork, Array2<f64>)> {
    let plan = build_network(spec)?;
    if x.ncols() != plan.input_dim {
        return Err(Error::dims("network input", plan.input_dim, x.ncols()));
    }
    if g.n_samples() != x.nrows() {
        return Err(Error::dims("training graph samples", x.nrows(), g.n_samples()));
    }
    let mut cur = x.to_owned();
    let mut layers = Vec::with_capacity(plan.layers.len());
    for (li, (wiring, l)) in plan.layers.iter().zip(&spec.layers).enumerate() {
        let trained: Vec<(NetworkNode, Array2<f64>)> = wiring
            .node_inputs
            .par_iter()
            .enumerate()
            .map(|(k, idx)| {
                train_network_node(&cur.select(Axis(1), idx).view(), g, l).map_err(|e| locate(e, li, k, wiring.grid.1))
            })
            .collect::<Result<_>>()?;
        let (nodes, outs): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
        cur = assemble(&outs, x.nrows(), wiring.output_dim);
        log::debug!("trained layer {} ({} nodes)", li + 1, nodes.len());
        layers.push(nodes);
    }
    let net = TrainedNetwork {
        spec: spec.clone(),
        plan,
        layers,
    };
    Ok((net, cur))
}

pub fn train_network(spec: &NetworkSpec, x: &ArrayView2<f64>, g: &TrainingGraph) -> Result<TrainedNetwork> {
    Ok(train_network_with_output(spec, x, g)?.0)
}

pub fn extract_network(net: &TrainedNetwork, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
    net.extract(x)
}

/// Linear reconstruction `x̂ = D y + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalReconstructionModel {
    /// `I × D_out`
    pub map: Array2<f64>,
    pub offset: Array1<f64>,
}

impl GlobalReconstructionModel {
    /// Predicts the training mean for every input.
    pub fn constant(mean: Array1<f64>, feature_dim: usize) -> Self {
        GlobalReconstructionModel {
            map: Array2::zeros((mean.len(), feature_dim)),
            offset: mean,
        }
    }

    pub fn reconstruct(&self, y: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if y.ncols() != self.map.ncols() {
            return Err(Error::dims("global reconstruction", self.map.ncols(), y.ncols()));
        }
        let mut x = y.dot(&self.map.t());
        x += &self.offset;
        Ok(x)
    }
}

/// Least-squares fit of inputs from features on the same samples.
pub fn fit_global_reconstruction(x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<GlobalReconstructionModel> {
    if x.nrows() != y.nrows() {
        return Err(Error::dims("global reconstruction samples", x.nrows(), y.nrows()));
    }
    if x.nrows() <= y.ncols() {
        return Err(Error::InvalidArgument(format!(
            "global reconstruction needs more samples ({}) than features ({})",
            x.nrows(),
            y.ncols()
        )));
    }
    let (map, offset) = linalg::affine_least_squares(y, x)?;
    if map.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite global reconstruction".into()));
    }
    Ok(GlobalReconstructionModel { map, offset })
}

/// `Σ‖x − x̂‖² / Σ‖x − x̄‖²` with `x̄` the mean of `x`.
pub fn reconstruction_error(x: &ArrayView2<f64>, x_hat: &ArrayView2<f64>) -> Result<f64> {
    if x.dim() != x_hat.dim() {
        return Err(Error::dims("reconstruction error", x.len(), x_hat.len()));
    }
    let mean = linalg::mean_rows(x);
    let energy = linalg::center(x, &mean.view()).mapv(|v| v * v).sum();
    if energy <= 0.0 {
        return Err(Error::Numeric("evaluation data have zero variance".into()));
    }
    let err = (x - x_hat).mapv(|v| v * v).sum();
    Ok(err / energy)
}

/// Normalized reconstruction error of `net` followed by `model` on `x`.
pub fn e_rec(model: &GlobalReconstructionModel, net: &TrainedNetwork, x: &ArrayView2<f64>) -> Result<f64> {
    let y = net.extract(x)?;
    let x_hat = model.reconstruct(&y.view())?;
    reconstruction_error(x, &x_hat.view())
}

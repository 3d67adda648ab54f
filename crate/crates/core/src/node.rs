//! Information-preserving GSFA node.
//!
//! The output of a node is a slow part (the `J` slowest GSFA features of the
//! expanded input, rescaled so their amplitude matches their contribution to
//! a linear reconstruction of the input) followed by a reconstructive part
//! (the leading `D - J` principal components of what the slow part fails to
//! reconstruct).

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansions::ExpansionSpec;
use crate::graphs::TrainingGraph;
use crate::gsfa::{delta_of, train_gsfa_upto, DeltaReport, GsfaModel};
use crate::linalg::{self, thin_qr};
use crate::pca::{train_pca, PcaModel};

/// Conventional delta threshold, slightly below the noise level of 2.0.
pub const DEFAULT_DELTA_THRESHOLD: f64 = 1.96;

/// Relative lower bound on the sensitivity scales.
pub const SCALE_FLOOR_FACTOR: f64 = 1e-6;

/// How the size `J` of the slow part is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlowPartRule {
    /// Keep the features with `Δ < threshold`.
    DeltaThreshold(f64),
    /// Keep exactly this many, capped at `J'`.
    Fixed(usize),
}

impl Default for SlowPartRule {
    fn default() -> Self {
        SlowPartRule::DeltaThreshold(DEFAULT_DELTA_THRESHOLD)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// `y' = Λ s'` with `λ_j = ‖M_j‖₂`; does not mix the slow features.
    #[default]
    Sensitivity,
    /// `y' = R s'` from `M = Q R`.
    Qr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub output_dim: usize,
    #[serde(default)]
    pub slow_part: SlowPartRule,
    #[serde(default = "ExpansionSpec::identity")]
    pub expansion: ExpansionSpec,
    #[serde(default)]
    pub scaling: ScalingMode,
    /// GSFA features computed beyond `min(I', D)` for diagnostics only.
    #[serde(default)]
    pub extra_features: usize,
}

impl NodeConfig {
    pub fn new(output_dim: usize) -> Self {
        NodeConfig {
            output_dim,
            slow_part: SlowPartRule::default(),
            expansion: ExpansionSpec::identity(),
            scaling: ScalingMode::default(),
            extra_features: 0,
        }
    }

    pub fn with_expansion(mut self, expansion: ExpansionSpec) -> Self {
        self.expansion = expansion;
        self
    }

    pub fn with_slow_part(mut self, rule: SlowPartRule) -> Self {
        self.slow_part = rule;
        self
    }

    pub fn with_scaling(mut self, scaling: ScalingMode) -> Self {
        self.scaling = scaling;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SlowScaling {
    /// `Q` is `I × J` with orthonormal columns, `R` is `J × J` upper triangular.
    Qr { q: Array2<f64>, r: Array2<f64> },
    /// Diagonal of `Λ` after flooring.
    Sensitivity { lambda: Array1<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct IgsfaNodeModel {
    pub input_dim: usize,
    pub output_dim: usize,
    pub expanded_dim: usize,
    pub slow_part: SlowPartRule,
    pub expansion: ExpansionSpec,
    /// Plain mean of the training inputs.
    pub x_mean: Array1<f64>,
    /// GSFA over the expanded centered inputs; its offset is `z̄`.
    pub gsfa: GsfaModel,
    /// `J' = min(I', D)`, possibly capped by the rank of the expanded data.
    pub j_prime: usize,
    /// `J`, the size of the slow part.
    pub n_slow: usize,
    /// `I × J` least-squares map from slow features to centered inputs.
    pub m: Array2<f64>,
    pub b: Array1<f64>,
    pub scaling: SlowScaling,
    /// PCA of the residuals keeping `D - J` components.
    pub pca: PcaModel,
    pub scale_floor: f64,
}

/// Intermediate signals of a node for a batch of samples, one row each.
#[derive(Clone, Debug)]
pub struct NodeSignals {
    pub z: Array2<f64>,
    /// `s'`, the `J` unit-variance slow features.
    pub slow: Array2<f64>,
    /// `y'`, the scaled slow part.
    pub slow_scaled: Array2<f64>,
    /// `a = M s' + b`
    pub approx: Array2<f64>,
    /// `u = x' - a`
    pub residual: Array2<f64>,
    /// `h`, the reconstructive part.
    pub recon_part: Array2<f64>,
    /// `y = y' | h`
    pub output: Array2<f64>,
}

impl IgsfaNodeModel {
    pub fn scaling_mode(&self) -> ScalingMode {
        match self.scaling {
            SlowScaling::Qr { .. } => ScalingMode::Qr,
            SlowScaling::Sensitivity { .. } => ScalingMode::Sensitivity,
        }
    }

    pub fn signals(&self, x: &ArrayView2<f64>) -> Result<NodeSignals> {
        if x.ncols() != self.input_dim {
            return Err(Error::dims("node input", self.input_dim, x.ncols()));
        }
        let xc = linalg::center(x, &self.x_mean.view());
        let z = self.expansion.expand_batch(&xc.view())?;
        let s_all = self.gsfa.extract(&z.view())?;
        let slow = s_all.slice(s![.., ..self.n_slow]).to_owned();
        let (slow_scaled, approx) = match &self.scaling {
            SlowScaling::Qr { q, r } => {
                let ys = slow.dot(&r.t());
                let mut a = ys.dot(&q.t());
                a += &self.b;
                (ys, a)
            }
            SlowScaling::Sensitivity { lambda } => {
                let ys = &slow * lambda;
                let mut a = slow.dot(&self.m.t());
                a += &self.b;
                (ys, a)
            }
        };
        let residual = &xc - &approx;
        let recon_part = self.pca.apply(&residual.view())?;
        let output = concatenate(Axis(1), &[slow_scaled.view(), recon_part.view()])
            .map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(NodeSignals {
            z,
            slow,
            slow_scaled,
            approx,
            residual,
            recon_part,
            output,
        })
    }

    /// Feature extraction for every row of `x`.
    pub fn extract(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.signals(x)?.output)
    }

    /// Linear input reconstruction `x̃ = ã + W_PCAᵀ h + x̄`.
    pub fn reconstruct(&self, y: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if y.ncols() != self.output_dim {
            return Err(Error::dims("node reconstruct", self.output_dim, y.ncols()));
        }
        let ys = y.slice(s![.., ..self.n_slow]);
        let h = y.slice(s![.., self.n_slow..]);
        let mut x = match &self.scaling {
            SlowScaling::Qr { q, .. } => ys.dot(&q.t()),
            SlowScaling::Sensitivity { lambda } => (&ys / lambda).dot(&self.m.t()),
        };
        x += &self.b;
        x += &self.pca.invert(&h)?;
        x += &self.x_mean;
        Ok(x)
    }

    /// Slow-part reconstruction `ã` for scaled slow features.
    pub fn slow_reconstruction(&self, ys: &ArrayView2<f64>) -> Array2<f64> {
        let mut a = match &self.scaling {
            SlowScaling::Qr { q, .. } => ys.dot(&q.t()),
            SlowScaling::Sensitivity { lambda } => (ys / lambda).dot(&self.m.t()),
        };
        a += &self.b;
        a
    }
}

/// Trains a node and returns it with its outputs on the training data.
pub fn train_node_with_output(
    x: &ArrayView2<f64>,
    g: &TrainingGraph,
    cfg: &NodeConfig,
) -> Result<(IgsfaNodeModel, Array2<f64>)> {
    let (n, input_dim) = x.dim();
    let d = cfg.output_dim;
    if d == 0 {
        return Err(Error::InvalidArgument("node output dimension must be positive".into()));
    }
    if n <= d {
        return Err(Error::InvalidArgument(format!(
            "node needs more samples ({n}) than output dimensions ({d})"
        )));
    }
    if let SlowPartRule::DeltaThreshold(t) = cfg.slow_part {
        if !t.is_finite() {
            return Err(Error::InvalidArgument("delta threshold must be finite".into()));
        }
    }
    cfg.expansion.validate(input_dim)?;
    let expanded_dim = cfg.expansion.expanded_dim(input_dim)?;
    if d > expanded_dim {
        return Err(Error::InvalidArgument(format!(
            "output dimension {d} exceeds expanded dimension {expanded_dim}"
        )));
    }

    let x_mean = linalg::mean_rows(x);
    let xc = linalg::center(x, &x_mean.view());
    let z = cfg.expansion.expand_batch(&xc.view())?;
    let j_target = expanded_dim.min(d);
    let gsfa = train_gsfa_upto(&z.view(), g, j_target + cfg.extra_features)?;
    let j_prime = j_target.min(gsfa.n_features());
    let s_all = gsfa.extract(&z.view())?;

    let n_slow = match cfg.slow_part {
        SlowPartRule::DeltaThreshold(t) => gsfa.deltas.iter().take(j_prime).take_while(|&&dv| dv < t).count(),
        SlowPartRule::Fixed(j) => j.min(j_prime),
    };
    let slow = s_all.slice(s![.., ..n_slow]).to_owned();

    let (m, b) = linalg::affine_least_squares(&slow.view(), &xc.view())?;
    let mut approx = slow.dot(&m.t());
    approx += &b;

    let mut lambda_max = 0.0_f64;
    let (scaling, slow_scaled, scale_floor) = match cfg.scaling {
        ScalingMode::Qr => {
            if n_slow > input_dim {
                return Err(Error::InvalidArgument(format!(
                    "QR scaling needs J ({n_slow}) <= input dimension ({input_dim})"
                )));
            }
            let (q, r) = thin_qr(&m.view())?;
            let ys = slow.dot(&r.t());
            (SlowScaling::Qr { q, r }, ys, 0.0)
        }
        ScalingMode::Sensitivity => {
            let norms: Array1<f64> = m.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
            lambda_max = norms.iter().fold(0.0_f64, |a, &v| a.max(v));
            let floor = if lambda_max > 0.0 {
                SCALE_FLOOR_FACTOR * lambda_max
            } else {
                1.0
            };
            let lambda = norms.mapv(|v| v.max(floor));
            let ys = &slow * &lambda;
            (SlowScaling::Sensitivity { lambda }, ys, floor)
        }
    };
    if n_slow > 0 && lambda_max == 0.0 && cfg.scaling == ScalingMode::Sensitivity {
        log::warn!("slow features do not contribute to reconstruction; using unit scales");
    }

    let residual = &xc - &approx;
    let n_pcs = d - n_slow;
    if n_pcs == 0 {
        log::warn!("slow part fills all {d} outputs; node has no reconstructive part");
    }
    let pca = train_pca(&residual.view(), n_pcs).map_err(|e| match e {
        Error::RankDeficient { achievable, .. } => Error::RankDeficient {
            context: "node residual PCA (value is the achievable output dimension)".into(),
            requested: d,
            achievable: n_slow + achievable,
        },
        other => other,
    })?;
    let recon_part = pca.apply(&residual.view())?;
    let output = concatenate(Axis(1), &[slow_scaled.view(), recon_part.view()])
        .map_err(|e| Error::Numeric(e.to_string()))?;

    let model = IgsfaNodeModel {
        input_dim,
        output_dim: d,
        expanded_dim,
        slow_part: cfg.slow_part,
        expansion: cfg.expansion.clone(),
        x_mean,
        gsfa,
        j_prime,
        n_slow,
        m,
        b,
        scaling,
        pca,
        scale_floor,
    };
    Ok((model, output))
}

/// Trains an information-preserving node.
pub fn train_node(x: &ArrayView2<f64>, g: &TrainingGraph, cfg: &NodeConfig) -> Result<IgsfaNodeModel> {
    Ok(train_node_with_output(x, g, cfg)?.0)
}

pub fn extract_node(model: &IgsfaNodeModel, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
    model.extract(x)
}

pub fn reconstruct_node(model: &IgsfaNodeModel, y: &ArrayView2<f64>) -> Result<Array2<f64>> {
    model.reconstruct(y)
}

/// Delta value of each of the `D` outputs under `g`.
pub fn node_delta_report(model: &IgsfaNodeModel, x: &ArrayView2<f64>, g: &TrainingGraph) -> Result<DeltaReport> {
    let y = model.extract(x)?;
    delta_of(&y.view(), g)
}

/// A plain GSFA node: expansion followed by linear GSFA, keeping the `D`
/// slowest features.
#[derive(Clone, Debug, PartialEq)]
pub struct GsfaNodeModel {
    pub input_dim: usize,
    pub output_dim: usize,
    pub expansion: ExpansionSpec,
    pub x_mean: Array1<f64>,
    pub gsfa: GsfaModel,
}

impl GsfaNodeModel {
    pub fn extract(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim {
            return Err(Error::dims("node input", self.input_dim, x.ncols()));
        }
        let xc = linalg::center(x, &self.x_mean.view());
        let z = self.expansion.expand_batch(&xc.view())?;
        self.gsfa.extract(&z.view())
    }
}

pub fn train_gsfa_node_with_output(
    x: &ArrayView2<f64>,
    g: &TrainingGraph,
    output_dim: usize,
    expansion: &ExpansionSpec,
) -> Result<(GsfaNodeModel, Array2<f64>)> {
    let input_dim = x.ncols();
    expansion.validate(input_dim)?;
    let x_mean = linalg::mean_rows(x);
    let xc = linalg::center(x, &x_mean.view());
    let z = expansion.expand_batch(&xc.view())?;
    let gsfa = crate::gsfa::train_gsfa(&z.view(), g, output_dim)?;
    let y = gsfa.extract(&z.view())?;
    Ok((
        GsfaNodeModel {
            input_dim,
            output_dim,
            expansion: expansion.clone(),
            x_mean,
            gsfa,
        },
        y,
    ))
}

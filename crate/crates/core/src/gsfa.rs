//! Graph-based slow feature analysis.
//!
//! Features `y_j = w_j·(x - x̂)` minimize the weighted delta value
//! `Δ_j = (1/R) Σ γ_{n,n'} (y_j(n') - y_j(n))²` subject to weighted zero mean,
//! weighted unit variance and weighted decorrelation under the vertex
//! weights. The problem is the symmetric generalized eigenproblem
//! `Ċ w = Δ C w`, solved by whitening `C` and diagonalizing the whitened `Ċ`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::graphs::{EdgeSource, TrainingGraph};
use crate::linalg::{self, sym_eigh};

/// Eigenvalues of the weighted covariance below this fraction of the
/// largest one are discarded before whitening.
pub const RANK_TOLERANCE: f64 = 1e-9;

const EDGE_CHUNK: usize = 4096;

/// Weighted first and second moments of a sample matrix under a graph.
#[derive(Clone, Debug)]
pub struct Moments {
    /// `x̂ = (1/Q_v) Σ v_n x_n`
    pub mean: Array1<f64>,
    /// `C = (1/Q_v) Σ v_n (x_n - x̂)(x_n - x̂)ᵀ`
    pub cov: Array2<f64>,
    /// `Ċ = (1/R) Σ_{n,n'} γ_{n,n'} (x_{n'} - x_n)(x_{n'} - x_n)ᵀ`, both orientations.
    pub diff_cov: Array2<f64>,
}

/// Computes `(x̂, C, Ċ)`. Clustered and serial components are accumulated
/// from per-group means and scatter matrices in `O(N I²)`; explicit edges
/// cost `O(|E| I²)`.
pub fn weighted_moments(x: &ArrayView2<f64>, g: &TrainingGraph) -> Result<Moments> {
    let (n, dim) = x.dim();
    if n != g.n_samples() {
        return Err(Error::dims("weighted_moments samples", g.n_samples(), n));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let v = g.vertex_weights();
    let q = g.vertex_normalizer();
    let mut mean = Array1::<f64>::zeros(dim);
    for (row, &w) in x.rows().into_iter().zip(v) {
        mean.scaled_add(w, &row);
    }
    mean /= q;
    let xc = linalg::center(x, &mean.view());

    let mut xw = xc.clone();
    for (mut row, &w) in xw.rows_mut().into_iter().zip(v) {
        row *= w.sqrt();
    }
    let cov = xw.t().dot(&xw) / q;

    let r = g.edge_normalizer();
    if !(r > 0.0) {
        return Err(Error::DegenerateGraph("graph has no edges".into()));
    }
    let mut diff = Array2::<f64>::zeros((dim, dim));
    for comp in g.components() {
        accumulate_component(&xc.view(), comp.scale, &comp.source, &mut diff);
    }
    diff /= r;
    Ok(Moments {
        mean,
        cov,
        diff_cov: diff,
    })
}

/// Adds `Σ_{n,n'} γ (x_{n'} - x_n)(…)ᵀ` over both orientations.
fn accumulate_component(xc: &ArrayView2<f64>, scale: f64, src: &EdgeSource, out: &mut Array2<f64>) {
    let dim = xc.ncols();
    match src {
        EdgeSource::Explicit(edges) => {
            for chunk in edges.chunks(EDGE_CHUNK) {
                let mut d = Array2::<f64>::zeros((chunk.len(), dim));
                for (mut row, e) in d.rows_mut().into_iter().zip(chunk) {
                    let f = (2.0 * scale * e.weight).sqrt();
                    row.assign(&xc.row(e.j));
                    row -= &xc.row(e.i);
                    row *= f;
                }
                *out += &d.t().dot(&d);
            }
        }
        EdgeSource::Clustered(gs) => {
            // Σ_{i<j in s} (x_i - x_j)(x_i - x_j)ᵀ = N_s · scatter_s
            for members in gs.members() {
                let ns = members.len();
                if ns < 2 {
                    continue;
                }
                let (_, sc) = group_stats(xc, &members);
                let w = scale / (ns - 1) as f64;
                out.scaled_add(2.0 * w * ns as f64, &sc);
            }
        }
        EdgeSource::Serial(gs) => {
            let members = gs.members();
            let stats: Vec<(Array1<f64>, Array2<f64>)> =
                members.iter().map(|m| group_stats(xc, m)).collect();
            for l in 0..members.len().saturating_sub(1) {
                let (na, nb) = (members[l].len() as f64, members[l + 1].len() as f64);
                let (ma, sa) = &stats[l];
                let (mb, sb) = &stats[l + 1];
                let dm = (ma - mb).insert_axis(Axis(1));
                let outer = dm.dot(&dm.t());
                out.scaled_add(2.0 * scale * nb, sa);
                out.scaled_add(2.0 * scale * na, sb);
                out.scaled_add(2.0 * scale * na * nb, &outer);
            }
        }
    }
}

/// Group mean and scatter about the group mean.
fn group_stats(xc: &ArrayView2<f64>, members: &[usize]) -> (Array1<f64>, Array2<f64>) {
    let rows = xc.select(Axis(0), members);
    let m = linalg::mean_rows(&rows.view());
    let c = linalg::center(&rows.view(), &m.view());
    let sc = c.t().dot(&c);
    (m, sc)
}

/// Trained linear GSFA projection.
#[derive(Clone, Debug, PartialEq)]
pub struct GsfaModel {
    pub input_dim: usize,
    /// `J' × I`, one feature per row, ascending delta.
    pub projection: Array2<f64>,
    /// Weighted mean of the training data.
    pub input_offset: Array1<f64>,
    /// Generalized eigenvalues, ascending.
    pub deltas: Array1<f64>,
    /// Whitening directions that survived rank truncation.
    pub rank_used: usize,
}

impl GsfaModel {
    pub fn n_features(&self) -> usize {
        self.projection.nrows()
    }

    /// `W (x - x̂)` for every row of `x`.
    pub fn extract(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim {
            return Err(Error::dims("gsfa extract", self.input_dim, x.ncols()));
        }
        let xc = linalg::center(x, &self.input_offset.view());
        Ok(xc.dot(&self.projection.t()))
    }

    /// The first `k` features only.
    pub fn truncated(&self, k: usize) -> GsfaModel {
        let k = k.min(self.n_features());
        GsfaModel {
            input_dim: self.input_dim,
            projection: self.projection.slice(s![..k, ..]).to_owned(),
            input_offset: self.input_offset.clone(),
            deltas: self.deltas.slice(s![..k]).to_owned(),
            rank_used: self.rank_used,
        }
    }
}

/// Solves GSFA for `n_features` features.
///
/// Fails with [`Error::RankDeficient`] when fewer than `n_features`
/// whitening directions survive truncation.
pub fn train_gsfa(x: &ArrayView2<f64>, g: &TrainingGraph, n_features: usize) -> Result<GsfaModel> {
    train_gsfa_impl(x, g, n_features, false)
}

/// Like [`train_gsfa`] but returns as many features as the rank allows, up
/// to `max_features`.
pub fn train_gsfa_upto(x: &ArrayView2<f64>, g: &TrainingGraph, max_features: usize) -> Result<GsfaModel> {
    train_gsfa_impl(x, g, max_features, true)
}

fn train_gsfa_impl(
    x: &ArrayView2<f64>,
    g: &TrainingGraph,
    n_features: usize,
    allow_fewer: bool,
) -> Result<GsfaModel> {
    let dim = x.ncols();
    let m = weighted_moments(x, g)?;
    let whitening = whitening_matrix(&m.cov.view())?;
    let rank = whitening.nrows();
    let k = if n_features > rank {
        if !allow_fewer {
            return Err(Error::RankDeficient {
                context: "GSFA whitening".into(),
                requested: n_features,
                achievable: rank,
            });
        }
        rank
    } else {
        n_features
    };

    let cw = whitening.dot(&m.diff_cov).dot(&whitening.t());
    let (vals, vecs) = sym_eigh(&cw.view())?;
    let mut projection = vecs.slice(s![.., ..k]).t().dot(&whitening);
    for mut row in projection.rows_mut() {
        let pivot = row
            .iter()
            .copied()
            .fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }
    debug_assert_eq!(projection.ncols(), dim);
    Ok(GsfaModel {
        input_dim: dim,
        projection,
        input_offset: m.mean,
        deltas: vals.slice(s![..k]).mapv(|v| v.max(0.0)),
        rank_used: rank,
    })
}

/// `r × I` matrix `W` with `W C Wᵀ = I`, dropping directions below
/// [`RANK_TOLERANCE`]. One refinement pass re-whitens inside the kept
/// subspace so the constraints hold to working precision.
fn whitening_matrix(cov: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let (vals, vecs) = sym_eigh(cov)?;
    let max = vals.iter().fold(0.0_f64, |a, &b| a.max(b));
    if !(max > 0.0) {
        return Err(Error::RankDeficient {
            context: "GSFA whitening (zero covariance)".into(),
            requested: 1,
            achievable: 0,
        });
    }
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > RANK_TOLERANCE * max).collect();
    let mut w = Array2::<f64>::zeros((keep.len(), cov.nrows()));
    for (r, &i) in keep.iter().enumerate() {
        let f = 1.0 / vals[i].sqrt();
        w.row_mut(r).assign(&(&vecs.column(i) * f));
    }
    let inner = w.dot(cov).dot(&w.t());
    let (iv, ivec) = sym_eigh(&inner.view())?;
    let inv_sqrt = Array2::from_diag(&iv.mapv(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt()));
    let refine = ivec.dot(&inv_sqrt).dot(&ivec.t());
    Ok(refine.dot(&w))
}

/// Free-function form of [`GsfaModel::extract`].
pub fn extract_gsfa(model: &GsfaModel, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
    model.extract(x)
}

/// Per-feature delta values under a graph after normalizing each feature to
/// weighted unit variance.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaReport {
    pub deltas: Vec<f64>,
    /// Features with zero variance; their delta is reported as 0.
    pub zero_variance: Vec<bool>,
    pub graph_id: String,
    pub n_samples: usize,
}

impl DeltaReport {
    pub fn with_graph_id(mut self, id: impl Into<String>) -> Self {
        self.graph_id = id.into();
        self
    }
}

/// Delta value of every column of `y` under `g`.
pub fn delta_of(y: &ArrayView2<f64>, g: &TrainingGraph) -> Result<DeltaReport> {
    let m = weighted_moments(y, g)?;
    let mut deltas = Vec::with_capacity(y.ncols());
    let mut zero_variance = Vec::with_capacity(y.ncols());
    for j in 0..y.ncols() {
        let var = m.cov[[j, j]];
        let scale = y.column(j).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if !(var > 1e-24 * scale * scale) || var == 0.0 {
            deltas.push(0.0);
            zero_variance.push(true);
        } else {
            deltas.push(m.diff_cov[[j, j]] / var);
            zero_variance.push(false);
        }
    }
    Ok(DeltaReport {
        deltas,
        zero_variance,
        graph_id: String::new(),
        n_samples: y.nrows(),
    })
}

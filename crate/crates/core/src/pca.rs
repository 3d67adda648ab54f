//! Principal component analysis with population covariance.

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{self, sym_eigh};

/// Relative eigenvalue threshold defining the rank of the data.
pub const PCA_RANK_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `d × I`, orthonormal rows, descending variance.
    pub components: Array2<f64>,
    pub variances: Array1<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.nrows()
    }

    /// A model producing no components.
    pub fn empty(mean: Array1<f64>) -> Self {
        let dim = mean.len();
        PcaModel {
            mean,
            components: Array2::zeros((0, dim)),
            variances: Array1::zeros(0),
        }
    }

    pub fn apply(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dims("pca apply", self.input_dim(), x.ncols()));
        }
        Ok(linalg::center(x, &self.mean.view()).dot(&self.components.t()))
    }

    /// `Wᵀ h + mean` for every row of `h`.
    pub fn invert(&self, h: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if h.ncols() != self.output_dim() {
            return Err(Error::dims("pca invert", self.output_dim(), h.ncols()));
        }
        let mut x = h.dot(&self.components);
        x += &self.mean;
        Ok(x)
    }
}

/// Keeps the `d` leading principal components. Fails when the data have
/// fewer than `d` directions above [`PCA_RANK_TOLERANCE`].
pub fn train_pca(x: &ArrayView2<f64>, d: usize) -> Result<PcaModel> {
    let (n, dim) = x.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("PCA on empty data".into()));
    }
    let mean = linalg::mean_rows(x);
    if d == 0 {
        return Ok(PcaModel::empty(mean));
    }
    if d > dim {
        return Err(Error::RankDeficient {
            context: "PCA".into(),
            requested: d,
            achievable: dim,
        });
    }
    let xc = linalg::center(x, &mean.view());
    let cov = linalg::scatter(&xc.view()) / n as f64;
    let (vals, vecs) = sym_eigh(&cov.view())?;
    let rank = linalg::numerical_rank(&vals.view(), PCA_RANK_TOLERANCE);
    if d > rank {
        return Err(Error::RankDeficient {
            context: "PCA".into(),
            requested: d,
            achievable: rank,
        });
    }
    let mut components = Array2::zeros((d, dim));
    let mut variances = Array1::zeros(d);
    for k in 0..d {
        let col = dim - 1 - k;
        let mut v = vecs.column(col).to_owned();
        let pivot = v.iter().copied().fold(0.0_f64, |b, e| if e.abs() > b.abs() { e } else { b });
        if pivot < 0.0 {
            v.mapv_inplace(|e| -e);
        }
        components.row_mut(k).assign(&v);
        variances[k] = vals[col];
    }
    Ok(PcaModel {
        mean,
        components,
        variances,
    })
}

pub fn apply_pca(model: &PcaModel, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
    model.apply(x)
}

pub fn invert_pca(model: &PcaModel, h: &ArrayView2<f64>) -> Result<Array2<f64>> {
    model.invert(h)
}

/// First `k` components of an existing model.
pub fn truncate_pca(model: &PcaModel, k: usize) -> PcaModel {
    let k = k.min(model.output_dim());
    PcaModel {
        mean: model.mean.clone(),
        components: model.components.slice(s![..k, ..]).to_owned(),
        variances: model.variances.slice(s![..k]).to_owned(),
    }
}

//! Gaussian classifiers on top of extracted features, soft label estimates
//! and regression/classification metrics.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{equal_group_sizes, order_by_label};
use crate::linalg::{self, sym_eigh};

/// Weight of the diagonal in the shrunk covariance.
pub const DEFAULT_SHRINKAGE: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// Posterior-weighted mean as is.
    #[default]
    Raw,
    /// Integer part of the posterior-weighted mean.
    Floor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianClass {
    /// Representative label, or the class id for categorical labels.
    pub label: f64,
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
    pub prior: f64,
    precision: Array2<f64>,
    log_det: f64,
}

impl GaussianClass {
    fn new(label: f64, mean: Array1<f64>, cov: Array2<f64>, prior: f64) -> Result<Self> {
        let (vals, vecs) = sym_eigh(&cov.view())?;
        let max = vals.iter().fold(0.0_f64, |a, &v| a.max(v));
        if vals.iter().any(|&v| v <= max * 1e-14 || v <= 0.0) {
            return Err(Error::Numeric(format!("singular covariance for class with label {label}")));
        }
        let inv = Array1::from_iter(vals.iter().map(|v| 1.0 / v));
        let precision = (&vecs * &inv).dot(&vecs.t());
        let log_det = vals.iter().map(|v| v.ln()).sum();
        Ok(GaussianClass {
            label,
            mean,
            cov,
            prior,
            precision,
            log_det,
        })
    }

    /// `log p(y | class) + log prior` up to a shared constant.
    fn log_joint(&self, y: &ArrayView1<f64>) -> f64 {
        let d = y - &self.mean;
        self.prior.ln() - 0.5 * self.log_det - 0.5 * d.dot(&self.precision.dot(&d))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftEstimatorModel {
    pub classes: Vec<GaussianClass>,
    pub n_features: usize,
    pub shrinkage: f64,
}

impl SoftEstimatorModel {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.label).collect()
    }

    /// Unnormalized log posteriors.
    pub fn log_posteriors(&self, y: &ArrayView1<f64>) -> Result<Array1<f64>> {
        if y.len() != self.n_features {
            return Err(Error::dims("classifier input", self.n_features, y.len()));
        }
        Ok(self.classes.iter().map(|c| c.log_joint(y)).collect())
    }

    pub fn posteriors(&self, y: &ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(normalize_log(&self.log_posteriors(y)?))
    }

    pub fn soft_estimate(&self, y: &ArrayView1<f64>, rounding: Rounding) -> Result<f64> {
        let p = self.posteriors(y)?;
        let v = weighted_label(&p.view(), &self.labels());
        Ok(match rounding {
            Rounding::Raw => v,
            Rounding::Floor => v.floor(),
        })
    }

    /// Index of the most probable class.
    pub fn classify(&self, y: &ArrayView1<f64>) -> Result<usize> {
        Ok(argmax(&self.log_posteriors(y)?))
    }

    /// Label of the most probable class.
    pub fn hard_estimate(&self, y: &ArrayView1<f64>) -> Result<f64> {
        Ok(self.classes[self.classify(y)?].label)
    }

    pub fn soft_estimates(&self, y: &ArrayView2<f64>, rounding: Rounding) -> Result<Vec<f64>> {
        y.rows().into_iter().map(|r| self.soft_estimate(&r, rounding)).collect()
    }

    pub fn hard_estimates(&self, y: &ArrayView2<f64>) -> Result<Vec<f64>> {
        y.rows().into_iter().map(|r| self.hard_estimate(&r)).collect()
    }
}

/// Softmax of log values.
pub fn normalize_log(log_p: &Array1<f64>) -> Array1<f64> {
    let m = log_p.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let e = log_p.mapv(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

/// `Σ ℓ_l p_l` for normalized posteriors `p`.
pub fn weighted_label(p: &ArrayView1<f64>, labels: &[f64]) -> f64 {
    p.iter().zip(labels).map(|(p, l)| p * l).sum()
}

fn argmax(v: &Array1<f64>) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

fn fit_classes(
    y: &ArrayView2<f64>,
    groups: &[(f64, Vec<usize>)],
    shrinkage: f64,
) -> Result<SoftEstimatorModel> {
    let (n, dim) = y.dim();
    if dim == 0 {
        return Err(Error::InvalidArgument("classifier needs at least one feature".into()));
    }
    let mut classes = Vec::with_capacity(groups.len());
    for (label, members) in groups {
        if members.len() < 2 * dim {
            return Err(Error::InvalidArgument(format!(
                "class with label {label} has {} samples, needs at least {}",
                members.len(),
                2 * dim
            )));
        }
        let yc = y.select(Axis(0), members);
        let mean = linalg::mean_rows(&yc.view());
        let centered = linalg::center(&yc.view(), &mean.view());
        let sigma = linalg::scatter(&centered.view()) / members.len() as f64;
        let mut cov = &sigma * (1.0 - shrinkage);
        for i in 0..dim {
            cov[[i, i]] += shrinkage * sigma[[i, i]];
        }
        let prior = members.len() as f64 / n as f64;
        classes.push(GaussianClass::new(*label, mean, cov, prior)?);
    }
    Ok(SoftEstimatorModel {
        classes,
        n_features: dim,
        shrinkage,
    })
}

/// Groups samples sorted by label into `n_classes` equal contiguous classes
/// (earlier classes take the remainder) and fits one Gaussian per class.
pub fn train_soft_estimator(y: &ArrayView2<f64>, labels: &[f64], n_classes: usize) -> Result<SoftEstimatorModel> {
    train_soft_estimator_with(y, labels, n_classes, DEFAULT_SHRINKAGE)
}

pub fn train_soft_estimator_with(
    y: &ArrayView2<f64>,
    labels: &[f64],
    n_classes: usize,
    shrinkage: f64,
) -> Result<SoftEstimatorModel> {
    if labels.len() != y.nrows() {
        return Err(Error::dims("classifier labels", y.nrows(), labels.len()));
    }
    if n_classes == 0 || n_classes > labels.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot form {n_classes} classes from {} samples",
            labels.len()
        )));
    }
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::InvalidArgument("shrinkage must lie in [0, 1]".into()));
    }
    let order = order_by_label(labels)?;
    let mut groups = Vec::with_capacity(n_classes);
    let mut start = 0;
    for size in equal_group_sizes(labels.len(), n_classes) {
        let members: Vec<usize> = order[start..start + size].to_vec();
        let label = members.iter().map(|&i| labels[i]).sum::<f64>() / size as f64;
        groups.push((label, members));
        start += size;
    }
    fit_classes(y, &groups, shrinkage)
}

/// One Gaussian per distinct class id; class labels are the ids.
pub fn train_classifier(y: &ArrayView2<f64>, class_ids: &[usize]) -> Result<SoftEstimatorModel> {
    if class_ids.len() != y.nrows() {
        return Err(Error::dims("classifier labels", y.nrows(), class_ids.len()));
    }
    let mut ids: Vec<usize> = class_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let groups: Vec<(f64, Vec<usize>)> = ids
        .iter()
        .map(|&id| {
            let members = (0..class_ids.len()).filter(|&i| class_ids[i] == id).collect();
            (id as f64, members)
        })
        .collect();
    fit_classes(y, &groups, DEFAULT_SHRINKAGE)
}

pub fn soft_estimate(m: &SoftEstimatorModel, y: &ArrayView1<f64>, rounding: Rounding) -> Result<f64> {
    m.soft_estimate(y, rounding)
}

/// Class id (the class label) with the largest posterior.
pub fn classify(m: &SoftEstimatorModel, y: &ArrayView1<f64>) -> Result<usize> {
    Ok(m.hard_estimate(y)? as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsPoint {
    pub threshold: f64,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    /// Fraction of samples with `|error| ≤ threshold`.
    pub cs: Vec<CsPoint>,
}

impl Metrics {
    pub fn cs_at(&self, threshold: f64) -> Option<f64> {
        self.cs.iter().find(|p| p.threshold == threshold).map(|p| p.fraction)
    }

    pub fn cs_csv(&self) -> String {
        let mut out = String::from("threshold,cs\n");
        for p in &self.cs {
            out.push_str(&format!("{},{}\n", p.threshold, p.fraction));
        }
        out
    }
}

/// MAE, RMSE and cumulative scores.
pub fn evaluate(truth: &[f64], estimate: &[f64], thresholds: &[f64]) -> Result<Metrics> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty set".into()));
    }
    if truth.len() != estimate.len() {
        return Err(Error::dims("evaluation", truth.len(), estimate.len()));
    }
    let n = truth.len();
    let err: Vec<f64> = truth.iter().zip(estimate).map(|(t, e)| (e - t).abs()).collect();
    let mae = err.iter().sum::<f64>() / n as f64;
    let rmse = (err.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
    let mut ts = thresholds.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let cs = ts
        .into_iter()
        .map(|threshold| CsPoint {
            threshold,
            fraction: err.iter().filter(|&&e| e <= threshold).count() as f64 / n as f64,
        })
        .collect();
    Ok(Metrics { n, mae, rmse, cs })
}

/// Fraction of matching predictions.
pub fn classification_rate(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty set".into()));
    }
    if truth.len() != predicted.len() {
        return Err(Error::dims("classification rate", truth.len(), predicted.len()));
    }
    Ok(truth.iter().zip(predicted).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Constant predictors fit on training labels: the median for MAE and CS,
/// the mean for RMSE.
pub fn chance_regression(train: &[f64], test: &[f64], thresholds: &[f64]) -> Result<Metrics> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("no training labels".into()));
    }
    let med = median(train);
    let mean = train.iter().sum::<f64>() / train.len() as f64;
    let by_median = evaluate(test, &vec![med; test.len()], thresholds)?;
    let by_mean = evaluate(test, &vec![mean; test.len()], thresholds)?;
    Ok(Metrics {
        rmse: by_mean.rmse,
        ..by_median
    })
}

/// Rate of always predicting the most frequent training class (smallest id
/// on ties).
pub fn chance_classification(train: &[usize], test: &[usize]) -> Result<f64> {
    let max_id = train
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::InvalidArgument("no training labels".into()))?;
    let mut counts = vec![0usize; max_id + 1];
    for &c in train {
        counts[c] += 1;
    }
    let majority = counts
        .iter()
        .enumerate()
        .fold((0, 0), |b, (i, &c)| if c > b.1 { (i, c) } else { b })
        .0;
    classification_rate(test, &vec![majority; test.len()])
}

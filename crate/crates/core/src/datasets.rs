//! Synthetic datasets with known latent signals, and their file format.
//!
//! Each generator draws every random component from its own ChaCha8 stream
//! of the same seed (see the `STREAM_*` constants), so changing how one
//! component is drawn never shifts the others.
//!
//! File layout: `"HGSD"`, `u32` rows, `u32` cols, `rows·cols` little-endian
//! `f64` values in row-major order, then a UTF-8 JSON footer holding labels,
//! latents, split tags and generator metadata up to the end of the file.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::persist::write_atomic;

pub const DATASET_MAGIC: &[u8; 4] = b"HGSD";

pub const STREAM_LATENT: u64 = 1;
pub const STREAM_MIXING: u64 = 2;
pub const STREAM_NOISE: u64 = 3;
pub const STREAM_DISTRACTOR: u64 = 4;
pub const STREAM_SPLIT: u64 = 5;
pub const STREAM_BINARY: u64 = 6;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Training data for dimensionality reduction.
    Dr,
    /// Training data for the supervised step.
    S,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelValues {
    Numeric { values: Vec<f64> },
    Categorical { values: Vec<usize> },
}

impl LabelValues {
    pub fn len(&self) -> usize {
        match self {
            LabelValues::Numeric { values } => values.len(),
            LabelValues::Categorical { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> LabelValues {
        match self {
            LabelValues::Numeric { values } => LabelValues::Numeric {
                values: idx.iter().map(|&i| values[i]).collect(),
            },
            LabelValues::Categorical { values } => LabelValues::Categorical {
                values: idx.iter().map(|&i| values[i]).collect(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelColumn {
    pub name: String,
    #[serde(flatten)]
    pub values: LabelValues,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub x: Array2<f64>,
    pub labels: Vec<LabelColumn>,
    /// Ground-truth hidden signals.
    pub latents: Vec<Series>,
    pub splits: Vec<Split>,
    /// Generator id and parameters.
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Footer {
    labels: Vec<LabelColumn>,
    latents: Vec<Series>,
    splits: Vec<Split>,
    #[serde(default)]
    meta: serde_json::Value,
}

impl DatasetBundle {
    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_samples();
        if self.splits.len() != n {
            return Err(Error::Format(format!("{} split tags for {n} rows", self.splits.len())));
        }
        for l in &self.labels {
            if l.values.len() != n {
                return Err(Error::Format(format!("label {} has {} rows, expected {n}", l.name, l.values.len())));
            }
        }
        for l in &self.latents {
            if l.values.len() != n {
                return Err(Error::Format(format!("latent {} has {} rows, expected {n}", l.name, l.values.len())));
            }
        }
        Ok(())
    }

    fn label(&self, name: &str) -> Result<&LabelValues> {
        self.labels
            .iter()
            .find(|l| l.name == name)
            .map(|l| &l.values)
            .ok_or_else(|| Error::Config(format!("dataset has no label column '{name}'")))
    }

    pub fn numeric_label(&self, name: &str) -> Result<&[f64]> {
        match self.label(name)? {
            LabelValues::Numeric { values } => Ok(values),
            LabelValues::Categorical { .. } => Err(Error::Config(format!("label '{name}' is categorical"))),
        }
    }

    pub fn categorical_label(&self, name: &str) -> Result<&[usize]> {
        match self.label(name)? {
            LabelValues::Categorical { values } => Ok(values),
            LabelValues::Numeric { .. } => Err(Error::Config(format!("label '{name}' is numeric"))),
        }
    }

    /// Label column as reals, categorical ids converted.
    pub fn label_as_f64(&self, name: &str) -> Result<Vec<f64>> {
        Ok(match self.label(name)? {
            LabelValues::Numeric { values } => values.clone(),
            LabelValues::Categorical { values } => values.iter().map(|&v| v as f64).collect(),
        })
    }

    pub fn latent(&self, name: &str) -> Result<&[f64]> {
        self.latents
            .iter()
            .find(|l| l.name == name)
            .map(|l| l.values.as_slice())
            .ok_or_else(|| Error::Config(format!("dataset has no latent '{name}'")))
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.n_samples()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> DatasetBundle {
        DatasetBundle {
            x: self.x.select(Axis(0), idx),
            labels: self
                .labels
                .iter()
                .map(|l| LabelColumn {
                    name: l.name.clone(),
                    values: l.values.select(idx),
                })
                .collect(),
            latents: self
                .latents
                .iter()
                .map(|l| Series {
                    name: l.name.clone(),
                    values: idx.iter().map(|&i| l.values[i]).collect(),
                })
                .collect(),
            splits: idx.iter().map(|&i| self.splits[i]).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn split(&self, split: Split) -> DatasetBundle {
        self.subset(&self.split_indices(split))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let (rows, cols) = self.x.dim();
        let rows32 = u32::try_from(rows).map_err(|_| Error::Format("too many rows".into()))?;
        let cols32 = u32::try_from(cols).map_err(|_| Error::Format("too many columns".into()))?;
        let footer = serde_json::to_vec(&Footer {
            labels: self.labels.clone(),
            latents: self.latents.clone(),
            splits: self.splits.clone(),
            meta: self.meta.clone(),
        })?;
        let mut out = Vec::with_capacity(12 + rows * cols * 8 + footer.len());
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&rows32.to_le_bytes());
        out.extend_from_slice(&cols32.to_le_bytes());
        for v in self.x.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&footer);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != DATASET_MAGIC {
            return Err(Error::Format("not a dataset file".into()));
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let data_len = rows
            .checked_mul(cols)
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(|| Error::Format("dataset dimensions overflow".into()))?;
        if bytes.len() < 12 + data_len {
            return Err(Error::Format("truncated dataset file".into()));
        }
        let values: Vec<f64> = bytes[12..12 + data_len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let x = Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Format(e.to_string()))?;
        let footer: Footer = serde_json::from_slice(&bytes[12 + data_len..])
            .map_err(|e| Error::Format(format!("dataset footer: {e}")))?;
        let d = DatasetBundle {
            x,
            labels: footer.labels,
            latents: footer.latents,
            splits: footer.splits,
            meta: footer.meta,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub fn save_dataset(d: &DatasetBundle, path: &Path) -> Result<()> {
    d.save(path)
}

pub fn load_dataset(path: &Path) -> Result<DatasetBundle> {
    DatasetBundle::load(path)
}

/// Relative sizes of the three splits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub dr: f64,
    pub s: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            dr: 0.5,
            s: 0.25,
            test: 0.25,
        }
    }
}

/// Tags rows by a seeded shuffle; split sizes are rounded down except the
/// test split, which takes the rest.
pub fn assign_splits(n: usize, fractions: SplitFractions, seed: u64) -> Result<Vec<Split>> {
    let SplitFractions { dr, s, test } = fractions;
    if [dr, s, test].iter().any(|v| !v.is_finite() || *v < 0.0) || dr + s + test <= 0.0 {
        return Err(Error::InvalidArgument("split fractions must be non-negative".into()));
    }
    let total = dr + s + test;
    let n_dr = (n as f64 * dr / total).floor() as usize;
    let n_s = (n as f64 * s / total).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, STREAM_SPLIT));
    let mut tags = vec![Split::Test; n];
    for (k, &i) in order.iter().enumerate() {
        if k < n_dr {
            tags[i] = Split::Dr;
        } else if k < n_dr + n_s {
            tags[i] = Split::S;
        }
    }
    Ok(tags)
}

/// ±1 Markov chain flipping sign with probability `p` at each step.
pub fn markov_chain(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut s = if rng.random::<bool>() { 1.0 } else { -1.0 };
    (0..n)
        .map(|t| {
            if t > 0 && rng.random::<f64>() < p {
                s = -s;
            }
            s
        })
        .collect()
}

/// Four ±1 chains `s1, s2, s3, n` with the given flip probabilities,
/// observed as `(s2, s1·n, s3, n)`. All rows are in the DR split.
pub fn gen_toy_infoloss(n: usize, flip_probs: [f64; 4], seed: u64) -> Result<DatasetBundle> {
    if n < 3 {
        return Err(Error::InvalidArgument("toy dataset needs at least 3 samples".into()));
    }
    if flip_probs.iter().any(|&p| !(p > 0.0 && p <= 0.5)) {
        return Err(Error::InvalidArgument("flip probabilities must lie in (0, 0.5]".into()));
    }
    let mut rng = stream_rng(seed, STREAM_LATENT);
    let chains: Vec<Vec<f64>> = flip_probs.iter().map(|&p| markov_chain(n, p, &mut rng)).collect();
    let (s1, s2, s3, nz) = (&chains[0], &chains[1], &chains[2], &chains[3]);
    let mut x = Array2::zeros((n, 4));
    for t in 0..n {
        x[[t, 0]] = s2[t];
        x[[t, 1]] = s1[t] * nz[t];
        x[[t, 2]] = s3[t];
        x[[t, 3]] = nz[t];
    }
    let names = ["s1", "s2", "s3", "n"];
    Ok(DatasetBundle {
        x,
        labels: vec![LabelColumn {
            name: "time".into(),
            values: LabelValues::Numeric {
                values: (0..n).map(|t| t as f64).collect(),
            },
        }],
        latents: names
            .iter()
            .zip(&chains)
            .map(|(name, c)| Series {
                name: (*name).into(),
                values: c.clone(),
            })
            .collect(),
        splits: vec![Split::Dr; n],
        meta: serde_json::json!({
            "generator": "toy-infoloss",
            "n": n,
            "flip_probs": flip_probs,
            "seed": seed,
        }),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    Linear,
    #[default]
    Nonlinear,
}

/// Parameters of [`gen_latent_regression_with`].
///
/// The input is divided into blocks of `block` consecutive channels. Each
/// channel carries a random combination of the label features `θu` and
/// `q` (scaled by `signal`), of its block's `local_distractors` Gaussian
/// latents (scaled by `distractor`), and i.i.d. noise. Channels `0` of
/// consecutive block pairs are replaced by `hidden_pairs` sign-hidden
/// copies `h·θu·m, h·m` with a fast random sign `m`, which reveal `θu` only
/// through their product.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatentRegressionParams {
    pub n: usize,
    pub input_dim: usize,
    pub noise: f64,
    pub mixing: Mixing,
    pub block: usize,
    pub local_distractors: usize,
    pub signal: f64,
    pub distractor: f64,
    pub hidden_pairs: usize,
    pub hidden_scale: f64,
    /// Lag-one correlation of the Gaussian process behind `θ`.
    pub smoothness: f64,
    pub splits: SplitFractions,
}

impl Default for LatentRegressionParams {
    fn default() -> Self {
        LatentRegressionParams {
            n: 20_000,
            input_dim: 64,
            noise: 0.5,
            mixing: Mixing::Nonlinear,
            block: 8,
            local_distractors: 3,
            signal: 0.5,
            distractor: 3.0,
            hidden_pairs: 4,
            hidden_scale: 2.0,
            smoothness: 0.9,
            splits: SplitFractions::default(),
        }
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Complementary error function, relative error below 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Bounded random walk on `[0, 1]` with a uniform marginal: the normal CDF
/// of a stationary AR(1) process with lag-one correlation `a`.
pub fn bounded_walk(n: usize, a: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let innov = (1.0 - a * a).sqrt();
    let mut z: f64 = rng.sample(StandardNormal);
    (0..n)
        .map(|t| {
            if t > 0 {
                z = a * z + innov * rng.sample::<f64, _>(StandardNormal);
            }
            normal_cdf(z)
        })
        .collect()
}

/// Latent-parameter regression dataset with label `theta` in `[0, 1]`.
pub fn gen_latent_regression(n: usize, input_dim: usize, noise: f64, seed: u64) -> Result<DatasetBundle> {
    gen_latent_regression_with(
        &LatentRegressionParams {
            n,
            input_dim,
            noise,
            ..LatentRegressionParams::default()
        },
        seed,
    )
}

pub fn gen_latent_regression_with(p: &LatentRegressionParams, seed: u64) -> Result<DatasetBundle> {
    let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
    if p.input_dim < 4 {
        return bad("latent regression needs input_dim >= 4");
    }
    if p.n < 3 {
        return bad("latent regression needs at least 3 samples");
    }
    if p.block == 0 || p.input_dim % p.block != 0 {
        return bad("block must divide input_dim");
    }
    if p.hidden_pairs * 2 > p.input_dim / p.block {
        return bad("not enough blocks for the hidden pairs");
    }
    if !(0.0..1.0).contains(&p.smoothness) {
        return bad("smoothness must lie in [0, 1)");
    }
    if [p.noise, p.signal, p.distractor, p.hidden_scale].iter().any(|v| !v.is_finite() || *v < 0.0) {
        return bad("scales must be finite and non-negative");
    }
    let (n, dim) = (p.n, p.input_dim);
    let n_blocks = dim / p.block;

    let theta = bounded_walk(n, p.smoothness, &mut stream_rng(seed, STREAM_LATENT));
    // unit-variance label features for a uniform θ
    let tu: Vec<f64> = theta.iter().map(|t| (t - 0.5) * 12f64.sqrt()).collect();
    let q: Vec<f64> = theta
        .iter()
        .map(|t| ((t - 0.5).powi(2) - 1.0 / 12.0) / (1.0 / 180.0f64).sqrt())
        .collect();

    let mut mix_rng = stream_rng(seed, STREAM_MIXING);
    let k = p.local_distractors;
    let a_sig = Array2::from_shape_simple_fn((dim, 2), || mix_rng.sample::<f64, _>(StandardNormal));
    let a_dis = Array2::from_shape_simple_fn((dim, k.max(1)), || mix_rng.sample::<f64, _>(StandardNormal));
    let a_nl = Array2::from_shape_simple_fn((dim, 2 + k), || mix_rng.sample::<f64, _>(StandardNormal) * 0.5);

    let mut dis_rng = stream_rng(seed, STREAM_DISTRACTOR);
    let dis = Array2::from_shape_simple_fn((n, n_blocks * k), || dis_rng.sample::<f64, _>(StandardNormal));
    let signs: Vec<Vec<f64>> = (0..p.hidden_pairs)
        .map(|_| (0..n).map(|_| if dis_rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
        .collect();

    let mut noise_rng = stream_rng(seed, STREAM_NOISE);
    let normal = Normal::new(0.0, p.noise.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let sig_norm = (2.0f64).sqrt();
    let dis_norm = (k.max(1) as f64).sqrt();

    let mut x = Array2::zeros((n, dim));
    for t in 0..n {
        for j in 0..dim {
            let b = j / p.block;
            let s = (a_sig[[j, 0]] * tu[t] + a_sig[[j, 1]] * q[t]) / sig_norm;
            let mut d = 0.0;
            for m in 0..k {
                d += a_dis[[j, m]] * dis[[t, b * k + m]];
            }
            d /= dis_norm;
            let mut v = p.signal * s + p.distractor * d;
            if p.mixing == Mixing::Nonlinear {
                let mut u = a_nl[[j, 0]] * tu[t] + a_nl[[j, 1]] * q[t];
                for m in 0..k {
                    u += a_nl[[j, 2 + m]] * dis[[t, b * k + m]];
                }
                v += p.signal * (u.tanh() + 0.5 * (s * u).tanh());
            }
            x[[t, j]] = v + normal.sample(&mut noise_rng);
        }
        for (pair, m) in signs.iter().enumerate() {
            let u = 2 * pair * p.block;
            let w = (2 * pair + 1) * p.block;
            x[[t, u]] = p.hidden_scale * tu[t] * m[t];
            x[[t, w]] = p.hidden_scale * m[t];
        }
    }

    let mut latents = vec![
        Series {
            name: "theta".into(),
            values: theta.clone(),
        },
        Series {
            name: "q".into(),
            values: q,
        },
    ];
    for (pair, m) in signs.into_iter().enumerate() {
        latents.push(Series {
            name: format!("hidden_sign_{pair}"),
            values: m,
        });
    }
    Ok(DatasetBundle {
        x,
        labels: vec![LabelColumn {
            name: "theta".into(),
            values: LabelValues::Numeric { values: theta },
        }],
        latents,
        splits: assign_splits(n, p.splits, seed)?,
        meta: serde_json::json!({
            "generator": "latent-regression",
            "params": p,
            "seed": seed,
        }),
    })
}

pub const MULTILABEL_INPUT_DIM: usize = 16;

/// A numeric label `age` in `[0, 1]` and two exactly balanced binary labels
/// `race` and `gender`, mixed with two distractors into 16 channels.
pub fn gen_multilabel(n: usize, seed: u64) -> Result<DatasetBundle> {
    if n < 4 {
        return Err(Error::InvalidArgument("multilabel dataset needs at least 4 samples".into()));
    }
    let dim = MULTILABEL_INPUT_DIM;
    let age = bounded_walk(n, 0.0, &mut stream_rng(seed, STREAM_LATENT));
    let mut bin_rng = stream_rng(seed, STREAM_BINARY);
    let balanced = |rng: &mut ChaCha8Rng| {
        let mut v: Vec<usize> = (0..n).map(|i| usize::from(i < n / 2)).collect();
        v.shuffle(rng);
        v
    };
    let race = balanced(&mut bin_rng);
    let gender = balanced(&mut bin_rng);
    let mut mix_rng = stream_rng(seed, STREAM_MIXING);
    let a = Array2::from_shape_simple_fn((dim, 5), || mix_rng.sample::<f64, _>(StandardNormal));
    let mut dis_rng = stream_rng(seed, STREAM_DISTRACTOR);
    let mut noise_rng = stream_rng(seed, STREAM_NOISE);
    let mut x = Array2::zeros((n, dim));
    for t in 0..n {
        let z = Array1::from(vec![
            (age[t] - 0.5) * 12f64.sqrt(),
            2.0 * race[t] as f64 - 1.0,
            2.0 * gender[t] as f64 - 1.0,
            dis_rng.sample::<f64, _>(StandardNormal),
            dis_rng.sample::<f64, _>(StandardNormal),
        ]);
        let lin = a.dot(&z);
        for j in 0..dim {
            let e: f64 = noise_rng.sample(StandardNormal);
            x[[t, j]] = lin[j] + 0.3 * (lin[j] * 0.5).tanh() + 0.2 * e;
        }
    }
    let cat = |name: &str, v: &[usize]| LabelColumn {
        name: name.into(),
        values: LabelValues::Categorical { values: v.to_vec() },
    };
    Ok(DatasetBundle {
        x,
        labels: vec![
            LabelColumn {
                name: "age".into(),
                values: LabelValues::Numeric { values: age.clone() },
            },
            cat("race", &race),
            cat("gender", &gender),
        ],
        latents: vec![Series {
            name: "age".into(),
            values: age,
        }],
        splits: assign_splits(n, SplitFractions::default(), seed)?,
        meta: serde_json::json!({ "generator": "multilabel", "n": n, "seed": seed }),
    })
}

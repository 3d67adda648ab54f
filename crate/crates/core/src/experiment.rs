//! Experiment configuration and the train/evaluate pipeline.
//!
//! A run generates (or loads) a dataset, trains each configured network on
//! the DR split with one training graph, fits the supervised step on the S
//! split and evaluates on the test split. Reports contain no timings, so the
//! same configuration and seed give byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::datasets::{
    gen_latent_regression_with, gen_multilabel, gen_toy_infoloss, DatasetBundle, LatentRegressionParams, Split,
};
use crate::error::{Error, Result};
use crate::graphs::{clustered_graph, combine_graphs, linear_graph, serial_graph, TrainingGraph};
use crate::gsfa::delta_of;
use crate::hierarchy::{fit_global_reconstruction, reconstruction_error, train_network_with_output, NetworkSpec};
use crate::linalg::correlation;
use crate::pca::train_pca;
use crate::persist::{write_atomic, SavedModel};
use crate::presets;
use crate::supervised::{
    chance_classification, chance_regression, classification_rate, evaluate, train_classifier,
    train_soft_estimator, Metrics, Rounding, SoftEstimatorModel,
};

fn default_flip_probs() -> [f64; 4] {
    [0.05, 0.1, 0.2, 0.5]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum DatasetSpec {
    ToyInfoloss {
        n: usize,
        #[serde(default = "default_flip_probs")]
        flip_probs: [f64; 4],
    },
    LatentRegression(LatentRegressionParams),
    Multilabel {
        n: usize,
    },
    /// A dataset file written by `save_dataset`.
    File {
        path: PathBuf,
    },
}

impl DatasetSpec {
    pub fn generate(&self, seed: u64) -> Result<DatasetBundle> {
        match self {
            DatasetSpec::ToyInfoloss { n, flip_probs } => gen_toy_infoloss(*n, *flip_probs, seed),
            DatasetSpec::LatentRegression(p) => gen_latent_regression_with(p, seed),
            DatasetSpec::Multilabel { n } => gen_multilabel(*n, seed),
            DatasetSpec::File { path } => DatasetBundle::load(path),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GraphSpec {
    /// Consecutive samples in stored order.
    Linear,
    Serial {
        #[serde(alias = "label_column")]
        label: String,
        groups: usize,
    },
    Clustered {
        #[serde(alias = "label_column")]
        label: String,
    },
    Combined {
        #[serde(alias = "graphs")]
        parts: Vec<GraphSpec>,
        /// Edge-weight factor per part; defaults to 1.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        /// Rescale each part to unit total edge weight before the weights
        /// are applied.
        #[serde(default)]
        balance: bool,
    },
}

/// Builds the graph over the samples of `d` in stored order.
pub fn build_graph(spec: &GraphSpec, d: &DatasetBundle) -> Result<TrainingGraph> {
    match spec {
        GraphSpec::Linear => linear_graph(d.n_samples()),
        GraphSpec::Serial { label, groups } => Ok(serial_graph(d.numeric_label(label)?, *groups)?.0),
        GraphSpec::Clustered { label } => clustered_graph(d.categorical_label(label)?),
        GraphSpec::Combined {
            parts: graphs,
            weights,
            balance,
        } => {
            if let Some(w) = weights {
                if w.len() != graphs.len() || w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::Config("combined graph weights must be positive, one per graph".into()));
                }
            }
            let parts = graphs
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    let built = build_graph(g, d)?;
                    let mut factor = weights.as_ref().map_or(1.0, |w| w[i]);
                    if *balance {
                        factor /= built.edge_normalizer();
                    }
                    Ok(if factor == 1.0 { built } else { built.scaled(factor, 1.0) })
                })
                .collect::<Result<Vec<_>>>()?;
            combine_graphs(&parts)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<NetworkSpec>,
    #[serde(default = "yes")]
    pub enabled: bool,
}

fn yes() -> bool {
    true
}

impl NetworkEntry {
    pub fn resolve(&self) -> Result<NetworkSpec> {
        match (&self.preset, &self.spec) {
            (Some(p), None) => presets::network(p),
            (None, Some(s)) => Ok(s.clone()),
            _ => Err(Error::Config(format!(
                "network '{}' needs exactly one of 'preset' and 'spec'",
                self.name
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub label: String,
    pub kind: TaskKind,
    /// Leading features given to the classifier by every network.
    pub features: usize,
    /// Leading PCA features; defaults to all of them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca_features: Option<usize>,
    /// Label groups of the soft estimator (regression only).
    #[serde(default = "default_classes")]
    pub n_classes: usize,
    #[serde(default)]
    pub rounding: Rounding,
    #[serde(default = "default_thresholds")]
    pub cs_thresholds: Vec<f64>,
}

fn default_classes() -> usize {
    20
}

fn default_thresholds() -> Vec<f64> {
    vec![0.01, 0.02, 0.05, 0.1, 0.2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub graph: GraphSpec,
    pub networks: Vec<NetworkEntry>,
    /// PCA at the output dimension of the first network.
    #[serde(default)]
    pub pca_baseline: bool,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
    /// Latents correlated with the leading outputs of each method.
    #[serde(default)]
    pub correlate_latents: Vec<String>,
    #[serde(default = "default_corr_features")]
    pub correlate_features: usize,
    /// Save each trained network as `<name>.hgsf` in the output directory.
    #[serde(default)]
    pub save_models: bool,
}

fn default_corr_features() -> usize {
    3
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for n in &self.networks {
            n.resolve()?;
        }
        if self.networks.iter().filter(|n| n.enabled).count() == 0 && !self.pca_baseline {
            return Err(Error::Config("nothing to run: no enabled network and no PCA baseline".into()));
        }
        for t in &self.tasks {
            if t.features == 0 {
                return Err(Error::Config(format!("task '{}' uses zero features", t.label)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub latent: String,
    pub feature: usize,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub label: String,
    pub kind: TaskKind,
    pub features: usize,
    /// Soft estimates (regression).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft: Option<Metrics>,
    /// Label of the most probable class (regression).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hard: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub name: String,
    pub output_dim: usize,
    /// Δ of every output on the DR split under the training graph.
    pub deltas_dr: Vec<f64>,
    /// Δ on the test split ordered by the first regression label.
    pub deltas_test: Vec<f64>,
    pub e_rec_train: f64,
    pub e_rec_test: f64,
    pub correlations: Vec<Correlation>,
    pub tasks: Vec<TaskReport>,
}

impl MethodReport {
    pub fn task(&self, label: &str) -> Option<&TaskReport> {
        self.tasks.iter().find(|t| t.label == label)
    }

    pub fn correlation(&self, latent: &str, feature: usize) -> Option<f64> {
        self.correlations
            .iter()
            .find(|c| c.latent == latent && c.feature == feature)
            .map(|c| c.rho)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChanceReport {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification_rate: Option<f64>,
    pub e_rec: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub dr: usize,
    pub s: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub samples: SplitSizes,
    pub methods: Vec<MethodReport>,
    pub chance: Vec<ChanceReport>,
}

impl RunReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// Trained artifacts of a run, for callers that need more than the report.
pub struct RunArtifacts {
    pub report: RunReport,
    pub dataset: DatasetBundle,
    pub models: Vec<(String, SavedModel)>,
}

/// Feature extractor shared by networks and the PCA baseline.
enum Extractor {
    Network(Box<SavedModel>),
    Pca(crate::pca::PcaModel),
}

impl Extractor {
    fn extract(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Extractor::Network(m) => m.network.extract(x),
            Extractor::Pca(p) => p.apply(x),
        }
    }
}

pub fn run(config: &ExperimentConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let data = config.dataset.generate(config.seed)?;
    let dr = data.split(Split::Dr);
    let s_set = data.split(Split::S);
    let test = data.split(Split::Test);
    let g = build_graph(&config.graph, &dr)?;
    log::info!(
        "dataset: {} samples ({} DR, {} S, {} test), {} inputs",
        data.n_samples(),
        dr.n_samples(),
        s_set.n_samples(),
        test.n_samples(),
        data.input_dim()
    );

    let mut methods = Vec::new();
    let mut models = Vec::new();
    let mut matched_dim = None;
    for entry in config.networks.iter().filter(|n| n.enabled) {
        let spec = entry.resolve()?;
        log::info!("training network '{}'", entry.name);
        let (network, y_dr) = train_network_with_output(&spec, &dr.x.view(), &g)?;
        matched_dim.get_or_insert(network.output_dim());
        let recon = fit_global_reconstruction(&dr.x.view(), &y_dr.view())?;
        let saved = SavedModel {
            network,
            reconstruction: Some(recon),
            extra: serde_json::json!({ "experiment": config.name, "method": entry.name, "seed": config.seed }),
        };
        let ext = Extractor::Network(Box::new(saved));
        methods.push(evaluate_method(config, &entry.name, &ext, &y_dr, &g, &dr, &s_set, &test)?);
        if let Extractor::Network(saved) = ext {
            models.push((entry.name.clone(), *saved));
        }
    }
    if config.pca_baseline {
        let d = matched_dim.ok_or_else(|| Error::Config("PCA baseline needs a network to match".into()))?;
        let pca = train_pca(&dr.x.view(), d)?;
        let y_dr = pca.apply(&dr.x.view())?;
        let ext = Extractor::Pca(pca);
        methods.push(evaluate_method(config, "pca", &ext, &y_dr, &g, &dr, &s_set, &test)?);
    }

    let mut chance = Vec::new();
    for t in &config.tasks {
        let mut c = ChanceReport {
            label: t.label.clone(),
            metrics: None,
            classification_rate: None,
            e_rec: 1.0,
        };
        match t.kind {
            TaskKind::Regression => {
                c.metrics = Some(chance_regression(
                    s_set.numeric_label(&t.label)?,
                    test.numeric_label(&t.label)?,
                    &t.cs_thresholds,
                )?)
            }
            TaskKind::Classification => {
                c.classification_rate = Some(chance_classification(
                    s_set.categorical_label(&t.label)?,
                    test.categorical_label(&t.label)?,
                )?)
            }
        }
        chance.push(c);
    }

    let report = RunReport {
        name: config.name.clone(),
        seed: config.seed,
        samples: SplitSizes {
            dr: dr.n_samples(),
            s: s_set.n_samples(),
            test: test.n_samples(),
        },
        methods,
        chance,
    };
    Ok(RunArtifacts {
        report,
        dataset: data,
        models,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_method(
    config: &ExperimentConfig,
    name: &str,
    ext: &Extractor,
    y_dr: &Array2<f64>,
    g: &TrainingGraph,
    dr: &DatasetBundle,
    s_set: &DatasetBundle,
    test: &DatasetBundle,
) -> Result<MethodReport> {
    let deltas_dr = delta_of(&y_dr.view(), g)?.deltas.to_vec();

    let recon = fit_global_reconstruction(&dr.x.view(), &y_dr.view())?;
    let e_rec_train = reconstruction_error(&dr.x.view(), &recon.reconstruct(&y_dr.view())?.view())?;
    let y_test = if test.n_samples() > 0 {
        Some(ext.extract(&test.x.view())?)
    } else {
        None
    };
    let e_rec_test = match &y_test {
        Some(y) if test.n_samples() > 1 => {
            reconstruction_error(&test.x.view(), &recon.reconstruct(&y.view())?.view())?
        }
        _ => f64::NAN,
    };

    let deltas_test = match (&y_test, config.tasks.iter().find(|t| t.kind == TaskKind::Regression)) {
        (Some(y), Some(t)) if y.nrows() >= 3 => {
            let labels = test.numeric_label(&t.label)?;
            let mut order: Vec<usize> = (0..labels.len()).collect();
            order.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]).then(a.cmp(&b)));
            let ys = y.select(Axis(0), &order);
            delta_of(&ys.view(), &linear_graph(ys.nrows())?)?.deltas.to_vec()
        }
        _ => Vec::new(),
    };

    let mut correlations = Vec::new();
    for latent in &config.correlate_latents {
        let l = Array1::from(dr.latent(latent)?.to_vec());
        for j in 0..config.correlate_features.min(y_dr.ncols()) {
            correlations.push(Correlation {
                latent: latent.clone(),
                feature: j,
                rho: correlation(&y_dr.column(j), &l.view()),
            });
        }
    }

    let mut tasks = Vec::new();
    if !config.tasks.is_empty() {
        let y_s = ext.extract(&s_set.x.view())?;
        let y_t = y_test.as_ref().ok_or_else(|| Error::Config("supervised tasks need a test split".into()))?;
        for t in &config.tasks {
            let k = match (ext, t.pca_features) {
                (Extractor::Pca(_), Some(k)) => k,
                (Extractor::Pca(_), None) => y_s.ncols(),
                _ => t.features,
            }
            .min(y_s.ncols());
            let fs = y_s.slice(s![.., ..k]);
            let ft = y_t.slice(s![.., ..k]);
            tasks.push(match t.kind {
                TaskKind::Regression => {
                    let model = train_soft_estimator(&fs, s_set.numeric_label(&t.label)?, t.n_classes)?;
                    let truth = test.numeric_label(&t.label)?;
                    let soft = model.soft_estimates(&ft, t.rounding)?;
                    let hard = model.hard_estimates(&ft)?;
                    TaskReport {
                        label: t.label.clone(),
                        kind: t.kind,
                        features: k,
                        soft: Some(evaluate(truth, &soft, &t.cs_thresholds)?),
                        hard: Some(evaluate(truth, &hard, &t.cs_thresholds)?),
                        classification_rate: None,
                    }
                }
                TaskKind::Classification => {
                    let model: SoftEstimatorModel = train_classifier(&fs, s_set.categorical_label(&t.label)?)?;
                    let pred: Vec<usize> = model.hard_estimates(&ft)?.into_iter().map(|v| v as usize).collect();
                    TaskReport {
                        label: t.label.clone(),
                        kind: t.kind,
                        features: k,
                        soft: None,
                        hard: None,
                        classification_rate: Some(classification_rate(test.categorical_label(&t.label)?, &pred)?),
                    }
                }
            });
        }
    }

    Ok(MethodReport {
        name: name.to_string(),
        output_dim: y_dr.ncols(),
        deltas_dr,
        deltas_test,
        e_rec_train,
        e_rec_test,
        correlations,
        tasks,
    })
}

/// Per-method Δ values as CSV.
pub fn deltas_csv(r: &RunReport) -> String {
    let mut out = String::from("method,set,feature,delta\n");
    for m in &r.methods {
        for (set, ds) in [("dr", &m.deltas_dr), ("test", &m.deltas_test)] {
            for (j, d) in ds.iter().enumerate() {
                let _ = writeln!(out, "{},{set},{j},{d}", m.name);
            }
        }
    }
    out
}

/// Cumulative scores of the soft estimates as CSV.
pub fn cs_csv(r: &RunReport) -> String {
    let mut out = String::from("method,label,threshold,cs\n");
    let mut rows = |name: &str, label: &str, m: &Metrics| {
        for p in &m.cs {
            let _ = writeln!(out, "{name},{label},{},{}", p.threshold, p.fraction);
        }
    };
    for m in &r.methods {
        for t in &m.tasks {
            if let Some(metrics) = &t.soft {
                rows(&m.name, &t.label, metrics);
            }
        }
    }
    for c in &r.chance {
        if let Some(metrics) = &c.metrics {
            rows("chance", &c.label, metrics);
        }
    }
    out
}

/// Reconstruction errors as CSV.
pub fn erec_csv(r: &RunReport) -> String {
    let mut out = String::from("method,output_dim,e_rec_train,e_rec_test\n");
    for m in &r.methods {
        let _ = writeln!(out, "{},{},{},{}", m.name, m.output_dim, m.e_rec_train, m.e_rec_test);
    }
    let _ = writeln!(out, "chance,0,1,1");
    out
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else {
        format!("{v:.4}")
    }
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<String>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.iter().map(|s| s.to_string()).collect());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect());
    for r in rows {
        out += &line(r.clone());
    }
    out
}

/// Aligned text summary of a run.
pub fn summary_text(r: &RunReport) -> String {
    let mut out = format!(
        "experiment {} (seed {})\nsamples: {} DR, {} S, {} test\n\n",
        r.name, r.seed, r.samples.dr, r.samples.s, r.samples.test
    );
    let rows: Vec<Vec<String>> = r
        .methods
        .iter()
        .map(|m| {
            let d = |j: usize| m.deltas_dr.get(j).map_or("-".into(), |v| fmt(*v));
            vec![
                m.name.clone(),
                m.output_dim.to_string(),
                d(0),
                d(1),
                d(2),
                fmt(m.e_rec_train),
                fmt(m.e_rec_test),
            ]
        })
        .chain(std::iter::once(vec![
            "chance".into(),
            "-".into(),
            "-".into(),
            "-".into(),
            "-".into(),
            fmt(1.0),
            fmt(1.0),
        ]))
        .collect();
    out += &table(&["method", "D", "delta1", "delta2", "delta3", "e_rec_train", "e_rec_test"], &rows);

    let mut task_rows = Vec::new();
    for m in &r.methods {
        for t in &m.tasks {
            task_rows.push(match (&t.soft, &t.hard, t.classification_rate) {
                (Some(s), Some(h), _) => vec![
                    m.name.clone(),
                    t.label.clone(),
                    t.features.to_string(),
                    fmt(s.mae),
                    fmt(s.rmse),
                    fmt(h.mae),
                    "-".into(),
                ],
                (_, _, Some(rate)) => vec![
                    m.name.clone(),
                    t.label.clone(),
                    t.features.to_string(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    fmt(rate),
                ],
                _ => continue,
            });
        }
    }
    for c in &r.chance {
        task_rows.push(vec![
            "chance".into(),
            c.label.clone(),
            "-".into(),
            c.metrics.as_ref().map_or("-".into(), |m| fmt(m.mae)),
            c.metrics.as_ref().map_or("-".into(), |m| fmt(m.rmse)),
            "-".into(),
            c.classification_rate.map_or("-".into(), fmt),
        ]);
    }
    if !task_rows.is_empty() {
        out += "\n";
        out += &table(&["method", "label", "features", "mae", "rmse", "hard_mae", "rate"], &task_rows);
    }

    let corr_rows: Vec<Vec<String>> = r
        .methods
        .iter()
        .flat_map(|m| {
            m.correlations
                .iter()
                .map(|c| vec![m.name.clone(), c.latent.clone(), c.feature.to_string(), fmt(c.rho)])
                .collect::<Vec<_>>()
        })
        .collect();
    if !corr_rows.is_empty() {
        out += "\n";
        out += &table(&["method", "latent", "feature", "rho"], &corr_rows);
    }
    out
}

/// Writes `metrics.json`, `deltas.csv`, `cs.csv`, `erec.csv` and
/// `summary.txt` into `dir`, plus one model file per network when asked.
pub fn write_reports(art: &RunArtifacts, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(&art.report)?;
    json.push('\n');
    write_atomic(&dir.join("metrics.json"), json.as_bytes())?;
    write_atomic(&dir.join("deltas.csv"), deltas_csv(&art.report).as_bytes())?;
    write_atomic(&dir.join("cs.csv"), cs_csv(&art.report).as_bytes())?;
    write_atomic(&dir.join("erec.csv"), erec_csv(&art.report).as_bytes())?;
    write_atomic(&dir.join("summary.txt"), summary_text(&art.report).as_bytes())?;
    if config.save_models {
        for (name, m) in &art.models {
            crate::persist::save_model(&dir.join(format!("{name}.hgsf")), m)?;
        }
    }
    Ok(())
}

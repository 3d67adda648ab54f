use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use higsfa::datasets::{DatasetBundle, Split};
use higsfa::experiment::{self, build_graph, DatasetSpec, ExperimentConfig, TaskKind};
use higsfa::hierarchy::{fit_global_reconstruction, train_network_with_output, NodeModel};
use higsfa::persist::{load_model, save_model, SavedModel};
use higsfa::presets;
use higsfa::supervised::{
    chance_classification, chance_regression, classification_rate, evaluate, train_classifier, train_soft_estimator,
};
use higsfa::Error;
use ndarray::s;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "higsfa", version, about = "Hierarchical information-preserving GSFA toolkit")]
struct Cli {
    /// Experiment (or dataset) configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Experiment preset name; see `inspect-model --list-presets`.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for layer training and extraction.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured dataset file.
    Gen,
    /// Train a network on the DR split and save it with its reconstruction model.
    Train {
        /// Network entry to train; defaults to the first enabled one.
        #[arg(long)]
        network: Option<String>,
        /// Dataset file to use instead of the configured generator.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write network features of a dataset, keeping labels and splits.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Reconstruct inputs from a feature file with the model's linear map.
    Reconstruct {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the configured supervised tasks on the S split of a feature
    /// file and evaluate them on its test split.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
    },
    /// Full pipeline: dataset, networks, baselines, supervised step, reports.
    Run,
    /// Describe a model file, or list the shipped presets.
    InspectModel {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        list_presets: bool,
    },
}

struct CliError {
    code: u8,
    message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Config(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
            Error::Io(_) | Error::Format(_) | Error::Json(_) => EXIT_IO,
            _ => EXIT_NUMERIC,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_CONFIG,
        message: msg.into(),
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Gen => cmd_gen(cli),
        Command::Train { network, data } => cmd_train(cli, network.as_deref(), data.as_deref()),
        Command::Extract { model, data } => cmd_extract(cli, model, data),
        Command::Reconstruct { model, data } => cmd_reconstruct(cli, model, data),
        Command::Evaluate { data } => cmd_evaluate(cli, data),
        Command::Run => cmd_run(cli),
        Command::InspectModel { model, list_presets } => cmd_inspect(model.as_deref(), *list_presets),
    }
}

/// The experiment selected by `--config` or `--preset`, with `--seed` applied.
fn experiment_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(name)) => presets::experiment(name)?,
        (Some(_), Some(_)) => return Err(config_error("use either --config or --preset, not both")),
        (None, None) => return Err(config_error("an experiment needs --config or --preset")),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn cmd_gen(cli: &Cli) -> CliResult<()> {
    // a bare dataset spec is accepted as well as a full experiment
    let (spec, seed) = match (&cli.config, &cli.preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(Error::from)?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            if value.get("dataset").is_some() {
                let cfg = ExperimentConfig::from_json(&text)?;
                (cfg.dataset, Some(cli.seed.unwrap_or(cfg.seed)))
            } else {
                let spec: DatasetSpec =
                    serde_json::from_value(value).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
                (spec, cli.seed)
            }
        }
        _ => {
            let cfg = experiment_config(cli)?;
            (cfg.dataset, Some(cfg.seed))
        }
    };
    let seed = seed.ok_or_else(|| config_error("dataset generation needs --seed"))?;
    let data = spec.generate(seed)?;
    let out = out_path(cli, "dataset.hgsd");
    data.save(&out)?;
    log::info!("wrote {} ({} × {})", out.display(), data.n_samples(), data.input_dim());
    Ok(())
}

fn cmd_train(cli: &Cli, network: Option<&str>, data_path: Option<&Path>) -> CliResult<()> {
    let cfg = experiment_config(cli)?;
    let entry = match network {
        Some(name) => cfg
            .networks
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| config_error(format!("no network named '{name}' in the experiment")))?,
        None => cfg
            .networks
            .iter()
            .find(|n| n.enabled)
            .ok_or_else(|| config_error("the experiment has no enabled network"))?,
    };
    let data = match data_path {
        Some(p) => DatasetBundle::load(p)?,
        None => cfg.dataset.generate(cfg.seed)?,
    };
    let dr = data.split(Split::Dr);
    let g = build_graph(&cfg.graph, &dr)?;
    let spec = entry.resolve()?;
    let (net, y) = train_network_with_output(&spec, &dr.x.view(), &g)?;
    let recon = fit_global_reconstruction(&dr.x.view(), &y.view())?;
    let model = SavedModel {
        network: net,
        reconstruction: Some(recon),
        extra: serde_json::json!({ "experiment": cfg.name, "method": entry.name, "seed": cfg.seed }),
    };
    let out = out_path(cli, "model.hgsf");
    save_model(&out, &model)?;
    log::info!("wrote {} ({} nodes)", out.display(), model.network.n_nodes());
    Ok(())
}

fn with_x(data: &DatasetBundle, x: ndarray::Array2<f64>) -> DatasetBundle {
    DatasetBundle {
        x,
        labels: data.labels.clone(),
        latents: data.latents.clone(),
        splits: data.splits.clone(),
        meta: data.meta.clone(),
    }
}

fn cmd_extract(cli: &Cli, model: &Path, data: &Path) -> CliResult<()> {
    let m = load_model(model)?;
    let d = DatasetBundle::load(data)?;
    let y = m.network.extract(&d.x.view())?;
    let out = out_path(cli, "features.hgsd");
    with_x(&d, y).save(&out)?;
    log::info!("wrote {}", out.display());
    Ok(())
}

fn cmd_reconstruct(cli: &Cli, model: &Path, data: &Path) -> CliResult<()> {
    let m = load_model(model)?;
    let recon = m
        .reconstruction
        .as_ref()
        .ok_or_else(|| config_error("model has no reconstruction map"))?;
    let d = DatasetBundle::load(data)?;
    let x = recon.reconstruct(&d.x.view())?;
    let out = out_path(cli, "reconstruction.hgsd");
    with_x(&d, x).save(&out)?;
    log::info!("wrote {}", out.display());
    Ok(())
}

fn cmd_evaluate(cli: &Cli, data: &Path) -> CliResult<()> {
    let cfg = experiment_config(cli)?;
    if cfg.tasks.is_empty() {
        return Err(config_error("the experiment defines no supervised tasks"));
    }
    let d = DatasetBundle::load(data)?;
    let s_set = d.split(Split::S);
    let test = d.split(Split::Test);
    let mut results = Vec::new();
    for t in &cfg.tasks {
        let k = t.features.min(d.input_dim());
        let fs = s_set.x.slice(s![.., ..k]);
        let ft = test.x.slice(s![.., ..k]);
        let entry = match t.kind {
            TaskKind::Regression => {
                let model = train_soft_estimator(&fs, s_set.numeric_label(&t.label)?, t.n_classes)?;
                let truth = test.numeric_label(&t.label)?;
                let est = model.soft_estimates(&ft, t.rounding)?;
                serde_json::json!({
                    "label": t.label,
                    "features": k,
                    "soft": evaluate(truth, &est, &t.cs_thresholds)?,
                    "chance": chance_regression(s_set.numeric_label(&t.label)?, truth, &t.cs_thresholds)?,
                })
            }
            TaskKind::Classification => {
                let model = train_classifier(&fs, s_set.categorical_label(&t.label)?)?;
                let pred: Vec<usize> = model.hard_estimates(&ft)?.into_iter().map(|v| v as usize).collect();
                let truth = test.categorical_label(&t.label)?;
                serde_json::json!({
                    "label": t.label,
                    "features": k,
                    "classification_rate": classification_rate(truth, &pred)?,
                    "chance": chance_classification(s_set.categorical_label(&t.label)?, truth)?,
                })
            }
        };
        results.push(entry);
    }
    let mut json = serde_json::to_string_pretty(&results).map_err(Error::from)?;
    json.push('\n');
    let out = out_path(cli, "evaluation.json");
    higsfa::persist::write_atomic(&out, json.as_bytes())?;
    print!("{json}");
    Ok(())
}

fn cmd_run(cli: &Cli) -> CliResult<()> {
    let cfg = experiment_config(cli)?;
    let out = out_path(cli, "reports");
    let art = experiment::run(&cfg)?;
    experiment::write_reports(&art, &cfg, &out)?;
    print!("{}", experiment::summary_text(&art.report));
    log::info!("reports written to {}", out.display());
    Ok(())
}

fn cmd_inspect(model: Option<&Path>, list_presets: bool) -> CliResult<()> {
    if list_presets {
        println!("networks: {}", presets::network_names().join(", "));
        println!("experiments: {}", presets::experiment_names().join(", "));
        if model.is_none() {
            return Ok(());
        }
    }
    let path = model.ok_or_else(|| config_error("inspect-model needs --model or --list-presets"))?;
    let m = load_model(path)?;
    let net = &m.network;
    println!("input {:?}, output dim {}, {} nodes", net.spec.input_shape, net.output_dim(), net.n_nodes());
    for (l, (wiring, nodes)) in net.plan.layers.iter().zip(&net.layers).enumerate() {
        let first = &nodes[0];
        let kind = match &first.model {
            NodeModel::Igsfa(n) => {
                let js: Vec<usize> = nodes
                    .iter()
                    .map(|nd| match &nd.model {
                        NodeModel::Igsfa(n) => n.n_slow,
                        NodeModel::Gsfa(_) => 0,
                    })
                    .collect();
                let (lo, hi) = (js.iter().min().copied().unwrap_or(0), js.iter().max().copied().unwrap_or(0));
                format!("igsfa, expanded {}, slow part {lo}..={hi}, {:?} scaling", n.expanded_dim, n.scaling_mode())
            }
            NodeModel::Gsfa(n) => format!("gsfa, expanded {}", n.gsfa.input_dim),
        };
        let pre = first
            .pre_pca
            .as_ref()
            .map_or(String::new(), |p| format!(", pre-PCA {}", p.output_dim()));
        println!(
            "layer {}: {}x{} nodes, input {} -> output {} ({kind}{pre})",
            l + 1,
            wiring.grid.0,
            wiring.grid.1,
            wiring.node_input_dim(),
            wiring.output_dim
        );
    }
    if let Some(r) = &m.reconstruction {
        println!("reconstruction map {} x {}", r.map.nrows(), r.map.ncols());
    }
    if !m.extra.is_null() {
        println!("metadata {}", m.extra);
    }
    Ok(())
}

//! Network and experiment presets shipped with the crate.
//!
//! Network presets use `snake_case` names, experiment presets `kebab-case`.

use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::hierarchy::NetworkSpec;

const NETWORKS: &[(&str, &str)] = &[
    ("toy_hgsfa", include_str!("../presets/toy_hgsfa.json")),
    ("toy_higsfa", include_str!("../presets/toy_higsfa.json")),
    ("latent64_hgsfa", include_str!("../presets/latent64_hgsfa.json")),
    ("latent64_higsfa", include_str!("../presets/latent64_higsfa.json")),
    ("multilabel_higsfa", include_str!("../presets/multilabel_higsfa.json")),
    ("qhsfa_chain16", include_str!("../presets/qhsfa_chain16.json")),
    ("table2_hgsfa", include_str!("../presets/table2_hgsfa.json")),
    ("table2_higsfa", include_str!("../presets/table2_higsfa.json")),
];

const EXPERIMENTS: &[(&str, &str)] = &[
    ("toy-infoloss", include_str!("../presets/toy-infoloss.json")),
    ("latent-regression", include_str!("../presets/latent-regression.json")),
    ("multilabel", include_str!("../presets/multilabel.json")),
];

pub fn network_names() -> Vec<&'static str> {
    NETWORKS.iter().map(|(n, _)| *n).collect()
}

pub fn experiment_names() -> Vec<&'static str> {
    EXPERIMENTS.iter().map(|(n, _)| *n).collect()
}

pub fn network_json(name: &str) -> Option<&'static str> {
    NETWORKS.iter().find(|(n, _)| *n == name).map(|(_, j)| *j)
}

pub fn experiment_json(name: &str) -> Option<&'static str> {
    EXPERIMENTS.iter().find(|(n, _)| *n == name).map(|(_, j)| *j)
}

pub fn network(name: &str) -> Result<NetworkSpec> {
    let json = network_json(name).ok_or_else(|| {
        Error::Config(format!("unknown network preset '{name}' (known: {})", network_names().join(", ")))
    })?;
    serde_json::from_str(json).map_err(|e| Error::Config(format!("preset {name}: {e}")))
}

pub fn experiment(name: &str) -> Result<ExperimentConfig> {
    let json = experiment_json(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown experiment preset '{name}' (known: {})",
            experiment_names().join(", ")
        ))
    })?;
    ExperimentConfig::from_json(json)
}

//! Supervised dimensionality reduction with graph-based slow feature
//! analysis, information-preserving nodes and hierarchical networks.

pub mod datasets;
pub mod error;
pub mod expansions;
pub mod experiment;
pub mod graphs;
pub mod gsfa;
pub mod hierarchy;
pub mod linalg;
pub mod node;
pub mod pca;
pub mod persist;
pub mod presets;
pub mod supervised;

pub use datasets::{
    gen_latent_regression, gen_latent_regression_with, gen_multilabel, gen_toy_infoloss, load_dataset, save_dataset,
    DatasetBundle, LabelColumn, LabelValues, LatentRegressionParams, Mixing, Series, Split, SplitFractions,
};
pub use error::{Error, Result};
pub use expansions::{ExpansionSpec, Term, TermKind};
pub use experiment::{run, write_reports, ExperimentConfig, GraphSpec, RunReport};
pub use graphs::{
    clustered_graph, combine_graphs, linear_graph, serial_graph, validate_graph, Edge, GroupStructure, TrainingGraph,
};
pub use gsfa::{delta_of, extract_gsfa, train_gsfa, DeltaReport, GsfaModel};
pub use hierarchy::{
    build_network, e_rec, extract_network, fit_global_reconstruction, reconstruction_error, train_network,
    train_network_with_output, GlobalReconstructionModel, LayerSpec, NetworkSpec, NodeKind, TrainedNetwork,
};
pub use node::{
    extract_node, node_delta_report, reconstruct_node, train_node, IgsfaNodeModel, NodeConfig, NodeSignals,
    ScalingMode, SlowPartRule,
};
pub use pca::{train_pca, PcaModel};
pub use persist::{load_model, save_model, SavedModel};
pub use supervised::{
    classify, evaluate, soft_estimate, train_classifier, train_soft_estimator, Metrics, Rounding, SoftEstimatorModel,
};

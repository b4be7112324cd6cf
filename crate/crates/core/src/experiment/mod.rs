//! Desk-scale reproduction of the accuracy-vs-SNR and
//! completed-tasks-vs-agents experiments.

mod config;
mod dataset;
mod sweep;

pub use config::{DatasetParams, ExperimentConfig, Scheme, TrainSettings};
pub use dataset::{generate_dataset, DatasetSpec, SyntheticDataset};
pub use sweep::{
    digital_accuracy, evaluate_analog, grid_rng, prepare_model, run_accuracy_sweep,
    run_scalability_sweep, split_for_agents, train_base_model, write_accuracy_csv,
    write_scalability_csv, AccuracyRow, PreparedModel, ScalabilityRow, AGGREGATION_LAYER,
};

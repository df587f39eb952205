//! Position probes: activation datasets and small classifiers over them.

mod collect;
mod dataset;
mod model;

pub use collect::{collect_activations, collect_with, COLLECT_SHARDS};
pub use dataset::{filter_boundary, split_dataset, split_sizes, ActivationDataset, DatasetMeta, GRID};
pub use model::{chance_level, evaluate_probe, train_probe, Probe, ProbeArch, ProbeConfig, ProbeReport, TrainedProbe, REPORT_HEADER};

#[cfg(test)]
mod tests;

//! The network, its training protocol, evaluation metrics and file formats.

mod curves;
mod metrics;
mod network;
mod spec;
mod train;
mod weights;

pub use curves::{emit_curves, CURVES_HEADER, parse_curves_csv, read_curves_csv, write_curves_csv};
pub use metrics::{ConfusionMatrix, Metrics};
pub use network::{Model, Snapshot};
pub use spec::{build_model, LayerShape, LayerSpec, ModelSpec};
pub use train::{
    evaluate, fresh_model, lr_sweep, train, EpochRow, Evaluation, Precision, SweepRow, TrainConfig, TrainLog,
    TrainOutcome, DEFAULT_ETA_SWEEP, THRESHOLD,
};
pub use weights::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

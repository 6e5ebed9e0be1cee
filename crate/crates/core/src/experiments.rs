//! Experiment drivers: configuration, model persistence, and the runners
//! behind the command-line subcommands. Everything here is concrete `f64`;
//! the numeric kernels underneath stay generic.

mod asymptotic;
mod config;
mod confusion_run;
mod manifest;
mod model_io;
mod rates;

pub use asymptotic::{run_asymptotic, AsymptoticPoint, AsymptoticReport};
pub use config::{ClusterMatch, ExperimentConfig, GenieGain};
pub use confusion_run::{
    evaluate_dnn, evaluate_ted, prepare_dataset, run_confusion, train_model, ConfusionOutcome,
};
pub use manifest::RunManifest;
pub use model_io::{load_model, save_model};
pub use rates::{rate_grid_db, run_rates, CcdfCurve, RateReport, SchemeRates};

//! End-to-end multiplicity estimation: build the dataset, train the
//! network, fit the threshold baseline on the same training split, and
//! score both on the held-out test split.

use crate::error::Result;
use crate::multiplicity::{
    fit_normalizer, fit_ted, gen_dataset, normalized_split, train_scg, ConfusionMatrix, Dataset,
    MlpModel, Split, TedModel, TrainHistory,
};
use crate::scene::RngStream;

use super::config::ExperimentConfig;

/// Everything a confusion run produces. The matrices are over the test
/// split only.
#[derive(Clone, Debug)]
pub struct ConfusionOutcome {
    pub model: MlpModel<f64>,
    pub ted: TedModel<f64>,
    pub history: TrainHistory<f64>,
    pub dnn_matrix: ConfusionMatrix,
    pub ted_matrix: ConfusionMatrix,
}

/// Draw the sample set for a config. Sub-streams: "dataset" for the draws,
/// "split" for the train/val/test shuffle.
pub fn prepare_dataset(cfg: &ExperimentConfig, root: &RngStream) -> Result<Dataset<f64>> {
    let deployment = cfg.deployment()?;
    let traffic = cfg.traffic()?;
    let pathloss = cfg.pathloss()?;
    let radio = cfg.radio()?;
    let mut ds = gen_dataset(
        cfg.q_samples,
        &deployment,
        &traffic,
        &pathloss,
        &radio,
        cfg.t_max,
        &root.child("dataset"),
    )?;
    ds.assign_splits(
        cfg.train_frac,
        cfg.val_frac,
        cfg.test_frac,
        &mut root.child("split"),
    )?;
    Ok(ds)
}

/// Fit the input normalizer on the training split, draw initial weights
/// from the "init" sub-stream, and run the optimizer.
pub fn train_model(
    cfg: &ExperimentConfig,
    dataset: &Dataset<f64>,
    root: &RngStream,
) -> Result<(MlpModel<f64>, TrainHistory<f64>)> {
    let norm = fit_normalizer(cfg.normalizer, dataset, cfg.normalizer_floor_db)?;
    let model = MlpModel::init(
        dataset.num_aps(),
        &cfg.hidden(),
        cfg.t_max,
        norm,
        dataset.antennas_per_ap,
        &mut root.child("init"),
    )?;
    train_scg(model, dataset, &cfg.train_config())
}

/// Network confusion over one split, rows = truth, columns = estimate.
pub fn evaluate_dnn(
    model: &MlpModel<f64>,
    dataset: &Dataset<f64>,
    split: Split,
) -> Result<ConfusionMatrix> {
    let (x, labels) = normalized_split(dataset, &model.normalizer, split);
    let preds = model.predict_batch_normalized(&x);
    ConfusionMatrix::from_pairs(model.t_max + 1, labels.into_iter().zip(preds))
}

/// Threshold-detector confusion over one split.
pub fn evaluate_ted(
    ted: &TedModel<f64>,
    dataset: &Dataset<f64>,
    split: Split,
) -> Result<ConfusionMatrix> {
    let idx = dataset.split_indices(split);
    let pairs = idx.into_iter().map(|i| {
        let row = dataset.features.row(i);
        (dataset.labels[i], ted.predict(row.as_slice().unwrap()))
    });
    ConfusionMatrix::from_pairs(ted.t_max() + 1, pairs)
}

/// The full pipeline behind the `confusion` subcommand.
pub fn run_confusion(cfg: &ExperimentConfig, seed: u64) -> Result<ConfusionOutcome> {
    let root = RngStream::root(seed);
    let dataset = prepare_dataset(cfg, &root)?;
    let (model, history) = train_model(cfg, &dataset, &root)?;
    let ted = fit_ted(&dataset)?;
    let dnn_matrix = evaluate_dnn(&model, &dataset, Split::Test)?;
    let ted_matrix = evaluate_ted(&ted, &dataset, Split::Test)?;
    Ok(ConfusionOutcome {
        model,
        ted,
        history,
        dnn_matrix,
        ted_matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiplicity::NormalizerKind;

    /// Small but real end-to-end setup: a 3x3 grid, a light sample budget,
    /// and a short optimizer leash.
    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.ap_rows = 3;
        cfg.ap_cols = 3;
        cfg.antennas_per_ap = 2;
        cfg.shadow_sigma_db = 0.0;
        cfg.q_samples = 600;
        cfg.hidden_layers = vec![16, 8];
        cfg.max_epochs = 60;
        cfg.normalizer = NormalizerKind::DbStandardize;
        cfg
    }

    #[test]
    fn pipeline_runs_and_beats_chance() {
        let cfg = tiny_config();
        let out = run_confusion(&cfg, 7).unwrap();
        let total = out.dnn_matrix.total();
        assert_eq!(total, (cfg.q_samples as f64 * cfg.test_frac).round() as u64);
        assert_eq!(out.ted_matrix.total(), total);
        // Class 0 (noise only) separates trivially from the rest; the run
        // must at least learn that much.
        assert!(out.dnn_matrix.diagonal::<f64>(0) > 0.9);
        let acc: f64 = out.dnn_matrix.accuracy();
        assert!(acc > 0.5, "accuracy {acc}");
        assert!(!out.history.epochs.is_empty());
    }

    #[test]
    fn rerun_is_deterministic() {
        let cfg = tiny_config();
        let a = run_confusion(&cfg, 3).unwrap();
        let b = run_confusion(&cfg, 3).unwrap();
        assert_eq!(a.model.flat_params(), b.model.flat_params());
        for t in 0..=cfg.t_max {
            for e in 0..=cfg.t_max {
                assert_eq!(a.dnn_matrix.count(t, e), b.dnn_matrix.count(t, e));
                assert_eq!(a.ted_matrix.count(t, e), b.ted_matrix.count(t, e));
            }
        }
    }

    #[test]
    fn seed_changes_the_outcome() {
        let cfg = tiny_config();
        let a = run_confusion(&cfg, 3).unwrap();
        let b = run_confusion(&cfg, 4).unwrap();
        assert_ne!(a.model.flat_params(), b.model.flat_params());
    }
}

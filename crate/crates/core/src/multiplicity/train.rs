//! Full-batch training of the multiplicity classifier.
//!
//! The driver wires the batch cross-entropy objective into the conjugate
//! gradient minimizer, evaluates the validation split after every
//! parameter update, and keeps the best-validation snapshot. Training
//! stops at the epoch cap, when the gradient norm drops below tolerance,
//! or after `max_val_checks` consecutive updates without a validation
//! improvement; the returned model always carries the best snapshot.

use crate::error::{invalid, Error, Result};
use crate::multiplicity::dataset::{Dataset, Split};
use crate::multiplicity::mlp::{batch_loss_grad, sorted_rows, take_rows, MlpModel};
use crate::multiplicity::scg::{self, Objective, ScgOptions, ScgStop};
use crate::scalar::Scalar;
use ndarray::Array2;

/// Knobs for one training run. The split fractions are applied by callers
/// when partitioning a dataset; the rest parameterize the optimizer loop.
#[derive(Clone, Copy, Debug)]
pub struct TrainConfig<T> {
    pub max_epochs: usize,
    /// Stop when the gradient norm falls below this.
    pub min_gradient: T,
    /// Consecutive validation checks without improvement before stopping.
    pub max_val_checks: usize,
    pub scg_sigma: T,
    pub scg_lambda_init: T,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 1000,
            min_gradient: T::of(1e-6),
            max_val_checks: 8,
            scg_sigma: T::of(1e-4),
            scg_lambda_init: T::of(1e-6),
            train_frac: 0.8,
            val_frac: 0.1,
            test_frac: 0.1,
        }
    }
}

/// Why training ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    GradientTol,
    ValidationStall,
    /// Optimizer steps shrank to nothing; effectively converged.
    ScaleOverflow,
}

/// One optimizer iteration. `val_loss` is present only when the iteration
/// moved the parameters (validation is skipped while the optimizer is
/// re-scaling in place).
#[derive(Clone, Copy, Debug)]
pub struct EpochRecord<T> {
    pub epoch: usize,
    pub train_loss: T,
    pub val_loss: Option<T>,
    pub grad_norm: T,
}

#[derive(Clone, Debug)]
pub struct TrainHistory<T> {
    pub epochs: Vec<EpochRecord<T>>,
    /// Epoch whose parameters the returned model carries.
    pub best_epoch: usize,
    pub best_val_loss: T,
    pub stop: StopReason,
}

impl<T: Scalar> TrainHistory<T> {
    /// Rows of `epoch,train_loss,val_loss,grad_norm`; the validation column
    /// is empty on epochs without a parameter update.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,grad_norm\n");
        for r in &self.epochs {
            let val = r.val_loss.map(|v| format!("{v}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch, r.train_loss, val, r.grad_norm
            ));
        }
        out
    }
}

/// Summed cross-entropy over the training split at arbitrary parameters.
struct BatchObjective<'a, T> {
    layer_sizes: &'a [usize],
    x: &'a Array2<T>,
    labels: &'a [usize],
}

impl<T: Scalar> Objective<T> for BatchObjective<'_, T> {
    fn dim(&self) -> usize {
        crate::multiplicity::mlp::param_count(self.layer_sizes)
    }
    fn loss(&self, w: &[T]) -> T {
        batch_loss_grad(self.layer_sizes, w, self.x, self.labels, None)
    }
    fn loss_grad(&self, w: &[T], grad: &mut [T]) -> T {
        batch_loss_grad(self.layer_sizes, w, self.x, self.labels, Some(grad))
    }
}

/// Train `model` on the train split of `dataset`, early-stopping on the val
/// split. The dataset must already be partitioned.
pub fn train_scg<T: Scalar>(
    model: MlpModel<T>,
    dataset: &Dataset<T>,
    cfg: &TrainConfig<T>,
) -> Result<(MlpModel<T>, TrainHistory<T>)> {
    if dataset.num_aps() != model.input_dim() {
        return Err(invalid(format!(
            "dataset has {} APs but the model expects {} inputs",
            dataset.num_aps(),
            model.input_dim()
        )));
    }
    if dataset.t_max != model.t_max {
        return Err(invalid(format!(
            "dataset t_max {} does not match model t_max {}",
            dataset.t_max, model.t_max
        )));
    }

    let sorted = sorted_rows(dataset);
    let prep = |split: Split| -> (Array2<T>, Vec<usize>) {
        let idx = dataset.split_indices(split);
        let mut x = take_rows(&sorted, &idx);
        for mut row in x.rows_mut() {
            model.normalizer.apply(row.as_slice_mut().unwrap());
        }
        let labels = idx.iter().map(|&i| dataset.labels[i]).collect();
        (x, labels)
    };
    let (x_train, y_train) = prep(Split::Train);
    if x_train.nrows() == 0 {
        return Err(invalid("training split is empty"));
    }
    let (x_val, y_val) = prep(Split::Val);
    let has_val = x_val.nrows() > 0;

    let mut model = model;
    let layer_sizes = model.layer_sizes.clone();
    let obj = BatchObjective {
        layer_sizes: &layer_sizes,
        x: &x_train,
        labels: &y_train,
    };
    let w0 = model.flat_params();
    let init_loss = obj.loss(&w0);
    if !init_loss.is_finite() {
        return Err(Error::TrainingDivergence(
            "initial loss is not finite".into(),
        ));
    }

    let opts = ScgOptions {
        max_iters: cfg.max_epochs,
        grad_tol: cfg.min_gradient,
        sigma: cfg.scg_sigma,
        lambda_init: cfg.scg_lambda_init,
    };

    let mut records: Vec<EpochRecord<T>> = Vec::new();
    let mut best_params = w0.clone();
    let mut best_val = if has_val {
        batch_loss_grad(&layer_sizes, &w0, &x_val, &y_val, None)
    } else {
        T::infinity()
    };
    let mut best_epoch = 0usize;
    let mut stall = 0usize;
    let mut halted_on_stall = false;

    let outcome = scg::minimize(&obj, w0, &opts, |info| {
        let mut val_loss = None;
        if info.step_taken && has_val {
            let v = batch_loss_grad(&layer_sizes, info.params, &x_val, &y_val, None);
            val_loss = Some(v);
            if v < best_val {
                best_val = v;
                best_params.copy_from_slice(info.params);
                best_epoch = info.iter;
                stall = 0;
            } else {
                stall += 1;
            }
        }
        records.push(EpochRecord {
            epoch: info.iter,
            train_loss: info.loss,
            val_loss,
            grad_norm: info.grad_norm,
        });
        if has_val && stall >= cfg.max_val_checks {
            halted_on_stall = true;
            return false;
        }
        true
    });

    let stop = match outcome.stop {
        ScgStop::Halted => StopReason::ValidationStall,
        ScgStop::MaxIters => StopReason::MaxEpochs,
        ScgStop::GradientTol => StopReason::GradientTol,
        ScgStop::ScaleOverflow => StopReason::ScaleOverflow,
        ScgStop::NonFinite => {
            return Err(Error::TrainingDivergence(format!(
                "loss became non-finite at epoch {}",
                outcome.iters
            )))
        }
    };
    debug_assert_eq!(halted_on_stall, stop == StopReason::ValidationStall);

    if has_val {
        model.set_flat_params(&best_params)?;
    } else {
        best_epoch = outcome.iters;
        best_val = outcome.loss;
        model.set_flat_params(&outcome.params)?;
    }
    Ok((
        model,
        TrainHistory {
            epochs: records,
            best_epoch,
            best_val_loss: best_val,
            stop,
        },
    ))
}

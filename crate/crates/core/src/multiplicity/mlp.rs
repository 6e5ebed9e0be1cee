//! Feed-forward classifier over sorted energy profiles.
//!
//! The input to the network is the energy vector sorted in descending
//! order, then normalized. Sorting makes the input invariant to AP
//! numbering; normalization tames the enormous dynamic range of receive
//! energies. Hidden layers use the logistic sigmoid, the output layer is a
//! softmax over the multiplicity classes 0..=t_max, and training minimizes
//! the summed cross-entropy.

use crate::error::{invalid, Result};
use crate::multiplicity::dataset::{Dataset, Split};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;

/// Fixed shard length for batch fan-out. Shard boundaries depend only on
/// the row count, never on the thread count, and shard results are reduced
/// in index order, which keeps losses and gradients bit-identical however
/// the work is scheduled.
pub(crate) const SHARD_ROWS: usize = 2048;

/// Which input normalization a model applies after sorting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerKind {
    /// Decibel transform with a floor, then per-position standardization
    /// with statistics from the training split.
    DbStandardize,
    /// Affine map of each sorted position onto [-1, 1] via that position's
    /// training-split min and max, the same scaling the threshold detector
    /// uses.
    MinMax,
}

/// Fitted input normalizer. Constants are estimated from the training split
/// and stored with the model.
#[derive(Clone, Debug, PartialEq)]
pub enum Normalizer<T> {
    DbStandardize {
        floor_db: T,
        mean: Vec<T>,
        std: Vec<T>,
    },
    MinMax {
        min: Vec<T>,
        max: Vec<T>,
    },
}

impl<T: Scalar> Normalizer<T> {
    /// Fit on the training rows (already sorted descending).
    pub fn fit(kind: NormalizerKind, sorted_rows: ArrayView2<'_, T>, floor_db: T) -> Result<Self> {
        if sorted_rows.nrows() == 0 {
            return Err(invalid("cannot fit a normalizer on zero rows"));
        }
        match kind {
            NormalizerKind::DbStandardize => {
                let m = sorted_rows.ncols();
                let n = T::from_usize(sorted_rows.nrows()).unwrap();
                let mut mean = vec![T::zero(); m];
                let mut sq = vec![T::zero(); m];
                for row in sorted_rows.rows() {
                    for (j, &e) in row.iter().enumerate() {
                        let v = db_with_floor(e, floor_db);
                        mean[j] += v;
                        sq[j] += v * v;
                    }
                }
                let mut std = vec![T::zero(); m];
                for j in 0..m {
                    mean[j] /= n;
                    let var = (sq[j] / n - mean[j] * mean[j]).max(T::zero());
                    let s = var.sqrt();
                    // a constant feature carries no information; unit scale
                    // keeps it harmless
                    std[j] = if s > T::zero() { s } else { T::one() };
                }
                Ok(Normalizer::DbStandardize {
                    floor_db,
                    mean,
                    std,
                })
            }
            NormalizerKind::MinMax => {
                let m = sorted_rows.ncols();
                let mut min = vec![T::infinity(); m];
                let mut max = vec![T::neg_infinity(); m];
                for row in sorted_rows.rows() {
                    for (j, &e) in row.iter().enumerate() {
                        min[j] = min[j].min(e);
                        max[j] = max[j].max(e);
                    }
                }
                if !min.iter().zip(&max).any(|(lo, hi)| hi > lo) {
                    return Err(invalid("degenerate energy range, cannot scale to [-1, 1]"));
                }
                Ok(Normalizer::MinMax { min, max })
            }
        }
    }

    pub fn kind(&self) -> NormalizerKind {
        match self {
            Normalizer::DbStandardize { .. } => NormalizerKind::DbStandardize,
            Normalizer::MinMax { .. } => NormalizerKind::MinMax,
        }
    }

    /// Normalize one sorted row in place.
    pub fn apply(&self, sorted: &mut [T]) {
        match self {
            Normalizer::DbStandardize { floor_db, mean, std } => {
                for (j, v) in sorted.iter_mut().enumerate() {
                    *v = (db_with_floor(*v, *floor_db) - mean[j]) / std[j];
                }
            }
            Normalizer::MinMax { min, max } => {
                let two = T::of(2.0);
                for (j, v) in sorted.iter_mut().enumerate() {
                    let span = max[j] - min[j];
                    // a constant position carries no information; pin it to
                    // the scale's center
                    *v = if span > T::zero() {
                        two * (*v - min[j]) / span - T::one()
                    } else {
                        T::zero()
                    };
                }
            }
        }
    }
}

fn db_with_floor<T: Scalar>(e: T, floor_db: T) -> T {
    if e <= T::zero() {
        return floor_db;
    }
    (T::of(10.0) * e.log10()).max(floor_db)
}

/// Sorted raw energies plus their normalized form, ready for the network.
#[derive(Clone, Debug)]
pub struct FeatureVector<T> {
    /// Energies sorted descending, before normalization.
    pub raw_sorted: Vec<T>,
    /// The normalized network input.
    pub values: Vec<T>,
}

/// Sort descending and normalize one raw energy vector.
pub fn build_input<T: Scalar>(energy: &[T], normalizer: &Normalizer<T>) -> FeatureVector<T> {
    let mut raw_sorted = energy.to_vec();
    raw_sorted.sort_by(|a, b| b.partial_cmp(a).expect("energies must not be NaN"));
    let mut values = raw_sorted.clone();
    normalizer.apply(&mut values);
    FeatureVector { raw_sorted, values }
}

/// Rows of `dataset.features`, each sorted descending.
pub(crate) fn sorted_rows<T: Scalar>(dataset: &Dataset<T>) -> Array2<T> {
    let mut out = dataset.features.clone();
    for mut row in out.rows_mut() {
        let slice = row.as_slice_mut().unwrap();
        slice.sort_by(|a, b| b.partial_cmp(a).expect("energies must not be NaN"));
    }
    out
}

/// Select rows of a matrix by index.
pub(crate) fn take_rows<T: Scalar>(mat: &Array2<T>, indices: &[usize]) -> Array2<T> {
    let mut out = Array2::zeros((indices.len(), mat.ncols()));
    for (k, &i) in indices.iter().enumerate() {
        out.row_mut(k).assign(&mat.row(i));
    }
    out
}

/// Fit a normalizer of the given kind on a dataset's training split.
pub fn fit_normalizer<T: Scalar>(
    kind: NormalizerKind,
    dataset: &Dataset<T>,
    floor_db: T,
) -> Result<Normalizer<T>> {
    let sorted = sorted_rows(dataset);
    let train_idx = dataset.split_indices(Split::Train);
    let rows = take_rows(&sorted, &train_idx);
    Normalizer::fit(kind, rows.view(), floor_db)
}

/// Sorted-and-normalized input matrix for one split of a dataset.
pub fn normalized_split<T: Scalar>(
    dataset: &Dataset<T>,
    normalizer: &Normalizer<T>,
    split: Split,
) -> (Array2<T>, Vec<usize>) {
    let sorted = sorted_rows(dataset);
    let idx = dataset.split_indices(split);
    let mut x = take_rows(&sorted, &idx);
    for mut row in x.rows_mut() {
        normalizer.apply(row.as_slice_mut().unwrap());
    }
    let labels = idx.iter().map(|&i| dataset.labels[i]).collect();
    (x, labels)
}

/// The multiplicity classifier: dense layers with sigmoid activations and a
/// softmax head over t_max + 1 classes.
#[derive(Clone, Debug)]
pub struct MlpModel<T> {
    /// Input, hidden..., output widths.
    pub layer_sizes: Vec<usize>,
    /// weights[l] has shape (layer_sizes[l+1], layer_sizes[l]).
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
    pub normalizer: Normalizer<T>,
    pub t_max: usize,
    /// Antennas per AP of the deployment the model was trained for; carried
    /// as metadata in the model file.
    pub antennas_per_ap: usize,
}

impl<T: Scalar> MlpModel<T> {
    /// Glorot-uniform weights (limit sqrt(6 / (fan_in + fan_out))), zero
    /// biases. Layer draw order follows the layer index, row-major within a
    /// weight matrix.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        t_max: usize,
        normalizer: Normalizer<T>,
        antennas_per_ap: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || hidden.iter().any(|&h| h == 0) {
            return Err(invalid("layer widths must be positive"));
        }
        if t_max == 0 {
            return Err(invalid("need at least two classes"));
        }
        let mut layer_sizes = Vec::with_capacity(hidden.len() + 2);
        layer_sizes.push(input_dim);
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(t_max + 1);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let limit = T::of((6.0 / (fan_in + fan_out) as f64).sqrt());
            let mut w = Array2::zeros((fan_out, fan_in));
            for v in w.iter_mut() {
                *v = (T::uniform_01(rng) * T::of(2.0) - T::one()) * limit;
            }
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(MlpModel {
            layer_sizes,
            weights,
            biases,
            normalizer,
            t_max,
            antennas_per_ap,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.t_max + 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.layer_sizes)
    }

    /// Class probabilities for one normalized input.
    pub fn forward(&self, values: &[T]) -> Vec<T> {
        let x = ArrayView2::from_shape((1, values.len()), values).unwrap();
        let probs = self.forward_batch(&x.to_owned());
        probs.row(0).to_vec()
    }

    /// Class probabilities for a batch of normalized inputs (rows).
    pub fn forward_batch(&self, x: &Array2<T>) -> Array2<T> {
        let mut a = x.clone();
        let last = self.weights.len() - 1;
        for l in 0..last {
            a = affine(&a, &self.weights[l], &self.biases[l]);
            a.mapv_inplace(sigmoid);
        }
        let mut z = affine(&a, &self.weights[last], &self.biases[last]);
        softmax_rows(&mut z);
        z
    }

    /// Estimated multiplicity from a raw energy vector: argmax probability,
    /// ties toward the smaller class.
    pub fn predict(&self, energy: &[T]) -> usize {
        let input = build_input(energy, &self.normalizer);
        let probs = self.forward(&input.values);
        argmax_low(&probs)
    }

    /// Predictions for many normalized rows at once.
    pub fn predict_batch_normalized(&self, x: &Array2<T>) -> Vec<usize> {
        let probs = self.forward_batch(x);
        probs.rows().into_iter().map(|r| argmax_low(r.as_slice().unwrap())).collect()
    }

    /// All parameters flattened layer by layer, weights row-major, then the
    /// layer bias.
    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    /// Inverse of [`MlpModel::flat_params`].
    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = flat[off];
                off += 1;
            }
            for v in b.iter_mut() {
                *v = flat[off];
                off += 1;
            }
        }
        Ok(())
    }
}

pub(crate) fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes
        .windows(2)
        .map(|w| w[0] * w[1] + w[1])
        .sum()
}

fn affine<T: Scalar>(x: &Array2<T>, w: &Array2<T>, b: &Array1<T>) -> Array2<T> {
    let mut z = x.dot(&w.t());
    z += &b.view().insert_axis(Axis(0));
    z
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Row-wise softmax with max subtraction, in place.
fn softmax_rows<T: Scalar>(z: &mut Array2<T>) {
    for mut row in z.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn argmax_low<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate().skip(1) {
        // strict > keeps ties at the lower class
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Summed cross-entropy and its gradient over a batch of normalized inputs,
/// at the model's current parameters. The gradient layout matches
/// [`MlpModel::flat_params`].
pub fn loss_and_grad<T: Scalar>(
    model: &MlpModel<T>,
    inputs: &Array2<T>,
    labels: &[usize],
) -> Result<(T, Vec<T>)> {
    if inputs.nrows() != labels.len() {
        return Err(invalid("inputs and labels disagree on batch size"));
    }
    let flat = model.flat_params();
    let mut grad = vec![T::zero(); flat.len()];
    let loss = batch_loss_grad(
        &model.layer_sizes,
        &flat,
        inputs,
        labels,
        Some(grad.as_mut_slice()),
    );
    Ok((loss, grad))
}

/// Summed cross-entropy only.
pub fn loss_only<T: Scalar>(model: &MlpModel<T>, inputs: &Array2<T>, labels: &[usize]) -> T {
    let flat = model.flat_params();
    batch_loss_grad(&model.layer_sizes, &flat, inputs, labels, None)
}

/// Views of one flat parameter vector as per-layer weight and bias arrays.
pub(crate) fn unpack_params<'a, T: Scalar>(
    layer_sizes: &[usize],
    flat: &'a [T],
) -> (Vec<ArrayView2<'a, T>>, Vec<ArrayView1<'a, T>>) {
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut off = 0;
    for lw in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (lw[0], lw[1]);
        weights.push(ArrayView2::from_shape((fan_out, fan_in), &flat[off..off + fan_out * fan_in]).unwrap());
        off += fan_out * fan_in;
        biases.push(ArrayView1::from_shape(fan_out, &flat[off..off + fan_out]).unwrap());
        off += fan_out;
    }
    (weights, biases)
}

/// Loss (and gradient when requested) of one contiguous shard.
fn shard_loss_grad<T: Scalar>(
    layer_sizes: &[usize],
    flat: &[T],
    x: ArrayView2<'_, T>,
    labels: &[usize],
    want_grad: bool,
) -> (T, Option<Vec<T>>) {
    let (weights, biases) = unpack_params(layer_sizes, flat);
    let last = weights.len() - 1;

    // forward, keeping activations for the backward pass
    let mut activations: Vec<Array2<T>> = Vec::with_capacity(last + 1);
    activations.push(x.to_owned());
    for l in 0..last {
        let mut z = activations[l].dot(&weights[l].t());
        z += &biases[l].view().insert_axis(Axis(0));
        z.mapv_inplace(sigmoid);
        activations.push(z);
    }
    let mut logits = activations[last].dot(&weights[last].t());
    logits += &biases[last].view().insert_axis(Axis(0));

    // summed cross-entropy through a stable log-sum-exp
    let mut loss = T::zero();
    for (i, row) in logits.rows().into_iter().enumerate() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max
            + row
                .iter()
                .map(|&v| (v - max).exp())
                .sum::<T>()
                .ln();
        loss += lse - row[labels[i]];
    }
    if !want_grad {
        return (loss, None);
    }

    // backward: softmax minus one-hot, then chain through the sigmoids
    let mut delta = logits;
    softmax_rows(&mut delta);
    for (i, &lab) in labels.iter().enumerate() {
        delta[(i, lab)] -= T::one();
    }
    let mut grad = vec![T::zero(); flat.len()];
    {
        let mut grads_w: Vec<Array2<T>> = Vec::with_capacity(last + 1);
        let mut grads_b: Vec<Array1<T>> = Vec::with_capacity(last + 1);
        for l in (0..=last).rev() {
            grads_w.push(delta.t().dot(&activations[l]));
            grads_b.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut back = delta.dot(&weights[l]);
                back.zip_mut_with(&activations[l], |d, &a| *d = *d * a * (T::one() - a));
                delta = back;
            }
        }
        grads_w.reverse();
        grads_b.reverse();
        let mut off = 0;
        for (gw, gb) in grads_w.iter().zip(&grads_b) {
            for &v in gw.iter() {
                grad[off] = v;
                off += 1;
            }
            for &v in gb.iter() {
                grad[off] = v;
                off += 1;
            }
        }
    }
    (loss, Some(grad))
}

/// Full-batch loss / gradient with fixed-size shard fan-out and in-order
/// reduction.
pub(crate) fn batch_loss_grad<T: Scalar>(
    layer_sizes: &[usize],
    flat: &[T],
    inputs: &Array2<T>,
    labels: &[usize],
    grad_out: Option<&mut [T]>,
) -> T {
    let n = inputs.nrows();
    let want_grad = grad_out.is_some();
    let shards: Vec<(usize, usize)> = (0..n)
        .step_by(SHARD_ROWS)
        .map(|s| (s, (s + SHARD_ROWS).min(n)))
        .collect();
    let results: Vec<(T, Option<Vec<T>>)> = shards
        .par_iter()
        .map(|&(s, e)| {
            shard_loss_grad(
                layer_sizes,
                flat,
                inputs.slice(ndarray::s![s..e, ..]),
                &labels[s..e],
                want_grad,
            )
        })
        .collect();
    let mut total = T::zero();
    if let Some(grad) = grad_out {
        for v in grad.iter_mut() {
            *v = T::zero();
        }
        for (l, g) in results {
            total += l;
            let g = g.unwrap();
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
    } else {
        for (l, _) in results {
            total += l;
        }
    }
    total
}

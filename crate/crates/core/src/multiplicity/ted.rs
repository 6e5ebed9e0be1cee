//! Threshold detector over the mean normalized energy.
//!
//! Baseline multiplicity estimator with no learned weights: energies are
//! sorted descending, each sorted position is mapped onto [-1, 1] by its
//! own affine scale fitted on the training split, the scaled values are
//! averaged, and the average is compared against thresholds placed halfway
//! between the per-class means of that statistic. The scale is per position
//! rather than shared because the top positions are dominated by rare
//! close-by devices whose energies span many orders of magnitude; a shared
//! scale lets those few draws swamp the mid positions that actually
//! separate the classes. More colliders mean more received energy, so the
//! class means must come out strictly increasing for the thresholds to be
//! usable; fitting fails loudly otherwise.

use crate::error::{invalid, Result};
use crate::multiplicity::dataset::{Dataset, Split};
use crate::multiplicity::mlp::{sorted_rows, take_rows};
use crate::scalar::Scalar;

/// Fitted threshold detector.
#[derive(Clone, Debug, PartialEq)]
pub struct TedModel<T> {
    /// Training-split energy extremes per sorted position, defining one
    /// affine scale per position. Both vectors have one entry per AP.
    pub min: Vec<T>,
    pub max: Vec<T>,
    /// Mean statistic per class, strictly increasing.
    pub class_means: Vec<T>,
    /// Bucket edges: class b owns (thresholds[b], thresholds[b+1]]. The
    /// ends are sentinels, thresholds[0] = -1 (the scale's low end) and
    /// thresholds[t_max+1] = +infinity; the interior entries are the
    /// midpoints between consecutive class means.
    pub thresholds: Vec<T>,
}

impl<T: Scalar> TedModel<T> {
    pub fn t_max(&self) -> usize {
        self.thresholds.len() - 2
    }

    /// Mean over sorted positions of the [-1, 1]-scaled energies. The input
    /// may arrive in any order; it is sorted internally.
    pub fn statistic(&self, energy: &[T]) -> T {
        let mut sorted = energy.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).expect("energies must not be NaN"));
        scaled_mean(&self.min, &self.max, &sorted)
    }

    /// Largest class whose lower bucket edge the statistic exceeds;
    /// boundaries resolve to the smaller class, anything at or below the
    /// scale's low end lands in class 0.
    pub fn predict(&self, energy: &[T]) -> usize {
        let x = self.statistic(energy);
        for b in (1..=self.t_max()).rev() {
            if x > self.thresholds[b] {
                return b;
            }
        }
        0
    }
}

/// Mean of the per-position scaled values of one descending-sorted row. A
/// position with zero span carries no information and contributes zero.
fn scaled_mean<T: Scalar>(min: &[T], max: &[T], sorted: &[T]) -> T {
    let two = T::of(2.0);
    let n = T::from_usize(sorted.len()).unwrap();
    let mut acc = T::zero();
    for (j, &e) in sorted.iter().enumerate() {
        let span = max[j] - min[j];
        if span > T::zero() {
            acc += two * (e - min[j]) / span - T::one();
        }
    }
    acc / n
}

/// Fit the detector on the training split of `dataset`.
pub fn fit_ted<T: Scalar>(dataset: &Dataset<T>) -> Result<TedModel<T>> {
    let train = dataset.split_indices(Split::Train);
    if train.is_empty() {
        return Err(invalid("training split is empty"));
    }
    let rows = take_rows(&sorted_rows(dataset), &train);
    let m = rows.ncols();
    let mut min = vec![T::infinity(); m];
    let mut max = vec![T::neg_infinity(); m];
    for row in rows.rows() {
        for (j, &e) in row.iter().enumerate() {
            min[j] = min[j].min(e);
            max[j] = max[j].max(e);
        }
    }
    if !min.iter().zip(&max).any(|(lo, hi)| hi > lo) {
        return Err(invalid("degenerate energy range, cannot scale to [-1, 1]"));
    }

    let classes = dataset.t_max + 1;
    let mut sums = vec![T::zero(); classes];
    let mut counts = vec![0usize; classes];
    for (k, &i) in train.iter().enumerate() {
        let row = rows.row(k);
        let label = dataset.labels[i];
        sums[label] += scaled_mean(&min, &max, row.as_slice().unwrap());
        counts[label] += 1;
    }
    let mut class_means = Vec::with_capacity(classes);
    for b in 0..classes {
        if counts[b] == 0 {
            return Err(invalid(format!(
                "training split has no samples of multiplicity {b}"
            )));
        }
        class_means.push(sums[b] / T::from_usize(counts[b]).unwrap());
    }
    for b in 1..classes {
        if !(class_means[b] > class_means[b - 1]) {
            return Err(invalid(format!(
                "class mean statistic does not increase from multiplicity {} to {}",
                b - 1,
                b
            )));
        }
    }
    let two = T::of(2.0);
    let mut thresholds = Vec::with_capacity(classes + 1);
    thresholds.push(-T::one());
    thresholds.extend(class_means.windows(2).map(|w| (w[0] + w[1]) / two));
    thresholds.push(T::infinity());
    Ok(TedModel {
        min,
        max,
        class_means,
        thresholds,
    })
}

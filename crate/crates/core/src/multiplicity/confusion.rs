//! Confusion matrices for multiplicity estimators.

use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use std::fmt;

/// Counts of (true class, estimated class) pairs. Rows are the true class,
/// columns the estimate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        assert!(num_classes > 0, "need at least one class");
        ConfusionMatrix {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    /// Tally pairs of (true, estimated) labels.
    pub fn from_pairs<I>(num_classes: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut cm = ConfusionMatrix::new(num_classes);
        for (truth, est) in pairs {
            cm.record(truth, est)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, est: usize) -> Result<()> {
        let n = self.num_classes();
        if truth >= n || est >= n {
            return Err(invalid(format!(
                "label pair ({truth}, {est}) outside {n} classes"
            )));
        }
        self.counts[truth][est] += 1;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, truth: usize, est: usize) -> u64 {
        self.counts[truth][est]
    }

    /// Samples whose true class is `truth`.
    pub fn support(&self, truth: usize) -> u64 {
        self.counts[truth].iter().sum()
    }

    pub fn total(&self) -> u64 {
        (0..self.num_classes()).map(|b| self.support(b)).sum()
    }

    /// Row-normalized fraction, 0 for an empty row.
    pub fn fraction<T: Scalar>(&self, truth: usize, est: usize) -> T {
        let support = self.support(truth);
        if support == 0 {
            return T::zero();
        }
        T::of(self.counts[truth][est] as f64 / support as f64)
    }

    /// Fraction of row `truth` estimated exactly right.
    pub fn diagonal<T: Scalar>(&self, truth: usize) -> T {
        self.fraction(truth, truth)
    }

    /// Overall fraction of exact estimates.
    pub fn accuracy<T: Scalar>(&self) -> T {
        let total = self.total();
        if total == 0 {
            return T::zero();
        }
        let hit: u64 = (0..self.num_classes()).map(|b| self.counts[b][b]).sum();
        T::of(hit as f64 / total as f64)
    }

    /// Count in row `truth` landing within one class of the truth.
    pub fn within_one_count(&self, truth: usize) -> u64 {
        let lo = truth.saturating_sub(1);
        let hi = (truth + 1).min(self.num_classes() - 1);
        (lo..=hi).map(|e| self.counts[truth][e]).sum()
    }

    /// Fraction of all samples estimated within one class of the truth.
    pub fn within_one<T: Scalar>(&self) -> T {
        let total = self.total();
        if total == 0 {
            return T::zero();
        }
        let hit: u64 = (0..self.num_classes())
            .map(|b| self.within_one_count(b))
            .sum();
        T::of(hit as f64 / total as f64)
    }

    /// Rows of `true_class,est_0,...,est_{n-1},support` with raw counts.
    pub fn to_csv_string(&self) -> String {
        let n = self.num_classes();
        let mut out = String::from("true_class");
        for e in 0..n {
            out.push_str(&format!(",est_{e}"));
        }
        out.push_str(",support\n");
        for b in 0..n {
            out.push_str(&b.to_string());
            for e in 0..n {
                out.push_str(&format!(",{}", self.counts[b][e]));
            }
            out.push_str(&format!(",{}\n", self.support(b)));
        }
        out
    }
}

impl fmt::Display for ConfusionMatrix {
    /// Row-normalized fractions, three decimals, rows = true class.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.num_classes();
        write!(f, "true\\est")?;
        for e in 0..n {
            write!(f, " {e:>7}")?;
        }
        writeln!(f, " support")?;
        for b in 0..n {
            write!(f, "{b:>8}")?;
            for e in 0..n {
                write!(f, " {:>7.3}", self.fraction::<f64>(b, e))?;
            }
            writeln!(f, " {:>7}", self.support(b))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ConfusionMatrix {
        // 3 classes; row 0: 8 right, 2 to class 1; row 1: 5 right, 1 to
        // class 0, 4 to class 2; row 2: all 6 right
        ConfusionMatrix::from_pairs(
            3,
            [(0, 0); 8]
                .into_iter()
                .chain([(0, 1); 2])
                .chain([(1, 1); 5])
                .chain([(1, 0); 1])
                .chain([(1, 2); 4])
                .chain([(2, 2); 6]),
        )
        .unwrap()
    }

    #[test]
    fn counts_and_support() {
        let cm = sample();
        assert_eq!(cm.count(0, 0), 8);
        assert_eq!(cm.count(1, 2), 4);
        assert_eq!(cm.support(0), 10);
        assert_eq!(cm.support(1), 10);
        assert_eq!(cm.support(2), 6);
        assert_eq!(cm.total(), 26);
    }

    #[test]
    fn fractions_and_accuracy() {
        let cm = sample();
        assert_eq!(cm.diagonal::<f64>(0), 0.8);
        assert_eq!(cm.diagonal::<f64>(1), 0.5);
        assert_eq!(cm.diagonal::<f64>(2), 1.0);
        assert_eq!(cm.accuracy::<f64>(), 19.0 / 26.0);
    }

    #[test]
    fn within_one_clips_at_the_edges() {
        let cm = sample();
        // row 0 counts classes 0 and 1; row 1 all three; row 2 classes 1, 2
        assert_eq!(cm.within_one_count(0), 10);
        assert_eq!(cm.within_one_count(1), 10);
        assert_eq!(cm.within_one_count(2), 6);
        assert_eq!(cm.within_one::<f64>(), 1.0);
    }

    #[test]
    fn empty_rows_give_zero_fractions() {
        let cm = ConfusionMatrix::new(4);
        assert_eq!(cm.diagonal::<f64>(2), 0.0);
        assert_eq!(cm.accuracy::<f64>(), 0.0);
    }

    #[test]
    fn out_of_range_labels_are_rejected() {
        let mut cm = ConfusionMatrix::new(3);
        assert!(cm.record(3, 0).is_err());
        assert!(cm.record(0, 3).is_err());
        assert!(cm.record(2, 2).is_ok());
    }

    #[test]
    fn csv_shape() {
        let cm = sample();
        let csv = cm.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("true_class,est_0,est_1,est_2,support"));
        assert_eq!(lines.next(), Some("0,8,2,0,10"));
        assert_eq!(lines.next(), Some("1,1,5,4,10"));
        assert_eq!(lines.next(), Some("2,0,0,6,6"));
        assert_eq!(lines.next(), None);
    }
}

//! Labelled energy datasets for multiplicity estimation.
//!
//! Each sample is the per-AP energy vector observed on one preamble that
//! exactly B devices picked, with B as the label. Because pool sequences are
//! orthogonal, devices on other preambles contribute nothing to this
//! preamble's matched filter, so a sample only needs the B collider channels
//! plus preamble noise. B is drawn from the per-preamble collision law
//! Binomial(num_ues, activation_prob / pool_size), redrawing the rare B >
//! t_max.

use crate::channel::{tx_snr_linear, ChannelRealization, LinkGains, PathLossParams, RadioParams};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::scene::{place_ues_uniform, Deployment, RngStream, TrafficSpec};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

/// Dataset partition tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Raw (unsorted, un-normalized) energy rows with labels and a train / val /
/// test split.
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    /// Q x M energies in AP index order.
    pub features: Array2<T>,
    /// True multiplicity per row.
    pub labels: Vec<usize>,
    /// Partition tag per row; filled by [`Dataset::assign_splits`].
    pub splits: Vec<Split>,
    pub t_max: usize,
    pub antennas_per_ap: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_aps(&self) -> usize {
        self.features.ncols()
    }

    /// Random split into train / val / test with the given fractions
    /// (summing to 1). Counts are fixed by the fractions; membership is a
    /// uniform permutation drawn from `rng`.
    pub fn assign_splits<R: Rng + ?Sized>(
        &mut self,
        train_frac: f64,
        val_frac: f64,
        test_frac: f64,
        rng: &mut R,
    ) -> Result<()> {
        if (train_frac + val_frac + test_frac - 1.0).abs() > 1e-9 {
            return Err(invalid("split fractions must sum to 1"));
        }
        let q = self.len();
        let n_train = (train_frac * q as f64).round() as usize;
        let n_val = (val_frac * q as f64).round() as usize;
        let n_train = n_train.min(q);
        let n_val = n_val.min(q - n_train);
        let mut order: Vec<usize> = (0..q).collect();
        // Fisher-Yates from the stream
        for i in (1..q).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut splits = vec![Split::Test; q];
        for &i in order.iter().take(n_train) {
            splits[i] = Split::Train;
        }
        for &i in order.iter().skip(n_train).take(n_val) {
            splits[i] = Split::Val;
        }
        self.splits = splits;
        Ok(())
    }

    /// Row indices belonging to one split.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Per-class row counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.t_max + 1];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// CSV: one `#`-prefixed header naming the geometry and generation
    /// parameters, then rows `b,e_0,...,e_{M-1}`.
    pub fn to_csv_string(&self, header_params: &str) -> String {
        let m = self.num_aps();
        let mut out = format!(
            "# gfra-dataset v1 m={m} s={} t_max={} {header_params}\n",
            self.antennas_per_ap, self.t_max
        );
        for i in 0..self.len() {
            let mut line = String::with_capacity(m * 12);
            line.push_str(&self.labels[i].to_string());
            for j in 0..m {
                line.push(',');
                line.push_str(&format!("{}", self.features[(i, j)]));
            }
            line.push('\n');
            out.push_str(&line);
        }
        out
    }

    /// Parse the CSV produced by [`Dataset::to_csv_string`]. Splits are not
    /// stored in the file; call [`Dataset::assign_splits`] afterwards.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| crate::Error::Format("dataset csv is empty".into()))?;
        if !header.starts_with("# gfra-dataset v1 ") {
            return Err(crate::Error::Format(
                "missing dataset header magic 'gfra-dataset v1'".into(),
            ));
        }
        let mut m = None;
        let mut s = None;
        let mut t_max = None;
        for tok in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = tok.strip_prefix("m=") {
                m = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("s=") {
                s = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("t_max=") {
                t_max = v.parse::<usize>().ok();
            }
        }
        let m = m.ok_or_else(|| crate::Error::Format("dataset header lacks m=".into()))?;
        let s = s.ok_or_else(|| crate::Error::Format("dataset header lacks s=".into()))?;
        let t_max = t_max.ok_or_else(|| crate::Error::Format("dataset header lacks t_max=".into()))?;

        let mut labels = Vec::new();
        let mut values: Vec<T> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let b: usize = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| {
                    crate::Error::Format(format!("dataset line {}: bad label", lineno + 2))
                })?;
            if b > t_max {
                return Err(crate::Error::Format(format!(
                    "dataset line {}: label {} exceeds t_max {}",
                    lineno + 2,
                    b,
                    t_max
                )));
            }
            let mut count = 0usize;
            for f in fields {
                let v: f64 = f.trim().parse().map_err(|_| {
                    crate::Error::Format(format!("dataset line {}: bad energy", lineno + 2))
                })?;
                values.push(T::of(v));
                count += 1;
            }
            if count != m {
                return Err(crate::Error::Format(format!(
                    "dataset line {}: expected {} energies, got {}",
                    lineno + 2,
                    m,
                    count
                )));
            }
            labels.push(b);
        }
        let q = labels.len();
        let features = Array2::from_shape_vec((q, m), values)
            .map_err(|e| crate::Error::Format(format!("dataset shape: {e}")))?;
        Ok(Dataset {
            features,
            labels,
            splits: vec![Split::Train; q],
            t_max,
            antennas_per_ap: s,
        })
    }
}

/// Per-preamble collision multiplicity, truncated at t_max by redrawing.
fn sample_multiplicity<T: Scalar, R: Rng + ?Sized>(
    traffic: &TrafficSpec<T>,
    t_max: usize,
    rng: &mut R,
) -> usize {
    let p = traffic.activation_prob.as_f64() / traffic.pool_size as f64;
    let dist = Binomial::new(traffic.num_ues as u64, p).expect("validated probability");
    loop {
        let b = dist.sample(rng) as usize;
        if b <= t_max {
            return b;
        }
    }
}

/// Generate `q` labelled samples. Work is sharded per sample over its own
/// derived stream ("sample", i), so the result does not depend on thread
/// count.
pub fn gen_dataset<T: Scalar>(
    q: usize,
    deployment: &Deployment<T>,
    traffic: &TrafficSpec<T>,
    pathloss: &PathLossParams<T>,
    radio: &RadioParams<T>,
    t_max: usize,
    stream: &RngStream,
) -> Result<Dataset<T>> {
    if q == 0 {
        return Err(invalid("dataset needs at least one sample"));
    }
    if t_max == 0 {
        return Err(invalid("t_max must be at least 1"));
    }
    let m = deployment.num_aps();
    let s = deployment.antennas_per_ap();
    let rho = tx_snr_linear(radio);
    let sample_root = stream.child("sample");

    let rows: Vec<(usize, Vec<T>)> = (0..q)
        .into_par_iter()
        .map(|i| {
            let srng = sample_root.child(i);
            let b = sample_multiplicity(traffic, t_max, &mut srng.child("count"));
            let positions = place_ues_uniform(b, &deployment.area(), &mut srng.child("positions"));
            let gains =
                LinkGains::generate(deployment, &positions, pathloss, &mut srng.child("gains"));
            let channel =
                ChannelRealization::generate(deployment, &gains, &mut srng.child("channel"));
            // orthogonality makes other preambles invisible here, so the
            // matched filter is just collider channels plus scaled noise
            let mut noise_rng = srng.child("noise");
            let scale = (rho * T::from_usize(traffic.pool_size).unwrap()).sqrt().recip();
            let mut filtered: Vec<num_complex::Complex<T>> = (0..m * s)
                .map(|_| crate::scalar::complex_standard_normal::<T, _>(&mut noise_rng) * scale)
                .collect();
            for u in 0..b {
                for (f, &g) in filtered.iter_mut().zip(channel.ue_column(u).iter()) {
                    *f += g;
                }
            }
            (b, crate::airlink::preamble_energy(&filtered, s))
        })
        .collect();

    let mut features = Array2::zeros((q, m));
    let mut labels = Vec::with_capacity(q);
    for (i, (b, row)) in rows.into_iter().enumerate() {
        labels.push(b);
        for (j, v) in row.into_iter().enumerate() {
            features[(i, j)] = v;
        }
    }
    Ok(Dataset {
        features,
        labels,
        splits: vec![Split::Train; q],
        t_max,
        antennas_per_ap: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::AreaSpec;

    fn tiny_setup() -> (Deployment<f64>, TrafficSpec<f64>, PathLossParams<f64>, RadioParams<f64>) {
        (
            Deployment::grid(2, 2, AreaSpec::new(1000.0).unwrap(), 2).unwrap(),
            TrafficSpec::new(2000, 0.01, 20).unwrap(),
            PathLossParams::new(1.0, 30.0, 3.8, 8.0).unwrap(),
            RadioParams::new(17.0, -174.0, 200e3, 9.0).unwrap(),
        )
    }

    #[test]
    fn label_distribution_matches_truncated_binomial() {
        let (d, t, p, r) = tiny_setup();
        let ds = gen_dataset(100_000, &d, &t, &p, &r, 4, &RngStream::root(21)).unwrap();
        let counts = ds.class_counts();
        let total: usize = counts.iter().sum();
        assert_eq!(total, 100_000);
        // Binomial(2000, 5e-4) truncated to 0..=4, renormalized
        let expected = [0.369, 0.369, 0.185, 0.062, 0.015];
        for (b, &e) in expected.iter().enumerate() {
            let got = counts[b] as f64 / total as f64;
            assert!((got - e).abs() < 0.01, "class {b}: {got} vs {e}");
        }
    }

    #[test]
    fn energies_scale_with_multiplicity() {
        let (d, t, p, r) = tiny_setup();
        let ds = gen_dataset(20_000, &d, &t, &p, &r, 4, &RngStream::root(22)).unwrap();
        // the typical total energy grows with the class label; medians,
        // because shadowing makes per-class sample means heavy-tailed
        let mut sums: Vec<Vec<f64>> = vec![Vec::new(); 5];
        for i in 0..ds.len() {
            sums[ds.labels[i]].push(ds.features.row(i).sum());
        }
        let mut median = [0.0f64; 5];
        for b in 0..5 {
            sums[b].sort_by(|a, c| a.partial_cmp(c).unwrap());
            median[b] = sums[b][sums[b].len() / 2];
        }
        for b in 1..5 {
            assert!(
                median[b] > median[b - 1],
                "class {b} median {} not above class {} median {}",
                median[b],
                b - 1,
                median[b - 1]
            );
        }
    }

    #[test]
    fn splits_have_requested_sizes_and_partition() {
        let (d, t, p, r) = tiny_setup();
        let mut ds = gen_dataset(10_000, &d, &t, &p, &r, 4, &RngStream::root(23)).unwrap();
        ds.assign_splits(0.8, 0.1, 0.1, &mut RngStream::root(23).child("split"))
            .unwrap();
        assert_eq!(ds.split_indices(Split::Train).len(), 8000);
        assert_eq!(ds.split_indices(Split::Val).len(), 1000);
        assert_eq!(ds.split_indices(Split::Test).len(), 1000);
        assert!(ds.assign_splits(0.5, 0.1, 0.1, &mut RngStream::root(1)).is_err());
    }

    #[test]
    fn zero_activation_yields_noise_only_samples() {
        let (d, _, p, r) = tiny_setup();
        let silent = TrafficSpec::new(2000, 0.0, 20).unwrap();
        let ds = gen_dataset(200, &d, &silent, &p, &r, 4, &RngStream::root(26)).unwrap();
        assert!(ds.labels.iter().all(|&b| b == 0));
        // noise-only energy has mean 1/(rho * L) per AP
        let expect = 1.0 / (tx_snr_linear(&r) * 20.0);
        let mean = ds.features.mean().unwrap();
        assert!(
            (mean / expect - 1.0).abs() < 0.05,
            "noise energy mean {mean} vs expected {expect}"
        );
    }

    #[test]
    fn generation_is_reproducible() {
        let (d, t, p, r) = tiny_setup();
        let a = gen_dataset(200, &d, &t, &p, &r, 4, &RngStream::root(24)).unwrap();
        let b = gen_dataset(200, &d, &t, &p, &r, 4, &RngStream::root(24)).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.features, b.features);
    }

    #[test]
    fn csv_round_trip_preserves_bits() {
        let (d, t, p, r) = tiny_setup();
        let ds = gen_dataset(50, &d, &t, &p, &r, 4, &RngStream::root(25)).unwrap();
        let text = ds.to_csv_string("n=2000 rho=0.01 l=20 sigma_sf=8 seed=25");
        let back: Dataset<f64> = Dataset::from_csv_str(&text).unwrap();
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.features, ds.features, "shortest round-trip printing is exact");
        assert_eq!(back.antennas_per_ap, 2);
    }

    #[test]
    fn csv_rejects_malformed_input() {
        assert!(Dataset::<f64>::from_csv_str("").is_err());
        assert!(Dataset::<f64>::from_csv_str("not a header\n1,2\n").is_err());
        let missing = "# gfra-dataset v1 m=3 s=1 t_max=4\n0,1.0,2.0\n";
        assert!(Dataset::<f64>::from_csv_str(missing).is_err(), "row shorter than m");
        let bad_label = "# gfra-dataset v1 m=2 s=1 t_max=4\n9,1.0,2.0\n";
        assert!(Dataset::<f64>::from_csv_str(bad_label).is_err());
    }
}

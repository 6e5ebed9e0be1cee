//! Large-scale and small-scale channel model.
//!
//! The gain between a device and an AP factors as beta_um * |h|^2 where
//! beta_um captures distance and shadowing and h is i.i.d. unit-variance
//! complex Gaussian per antenna:
//!
//! ```text
//! beta = X / (1 + PL0 * (d / d0)^v),   X = 10^(sigma_sf * z / 10), z ~ N(0,1)
//! ```
//!
//! with PL0 the reference path loss at distance d0 converted to linear scale.
//! The denominator form keeps beta finite (and at most X) as d -> 0.
//!
//! Powers cross module boundaries in dB / dBm; inside the numerics everything
//! is linear. Transmit power enters the air interface only through the
//! transmit SNR rho = P_tx / noise_power, so received samples are expressed
//! in noise-normalized units throughout.

use crate::error::{invalid, Result};
use crate::scalar::{complex_standard_normal, db_to_linear, Scalar};
use crate::scene::{Deployment, Point2};
use ndarray::{Array2, ArrayView1};
use num_complex::Complex;
use rand::Rng;

/// Distance-dependent attenuation with log-normal shadowing.
#[derive(Clone, Copy, Debug)]
pub struct PathLossParams<T> {
    pub ref_distance_m: T,
    pub ref_loss_db: T,
    pub exponent: T,
    pub shadow_sigma_db: T,
}

impl<T: Scalar> PathLossParams<T> {
    pub fn new(ref_distance_m: T, ref_loss_db: T, exponent: T, shadow_sigma_db: T) -> Result<Self> {
        if !(ref_distance_m > T::zero()) {
            return Err(invalid("reference distance must be positive"));
        }
        if !(exponent > T::one()) {
            return Err(invalid("path loss exponent must exceed 1"));
        }
        if !(shadow_sigma_db >= T::zero()) {
            return Err(invalid("shadow sigma must be nonnegative"));
        }
        Ok(PathLossParams {
            ref_distance_m,
            ref_loss_db,
            exponent,
            shadow_sigma_db,
        })
    }
}

/// Transmit power and receiver noise budget.
#[derive(Clone, Copy, Debug)]
pub struct RadioParams<T> {
    pub tx_power_dbm: T,
    pub noise_psd_dbm_hz: T,
    pub bandwidth_hz: T,
    pub noise_figure_db: T,
}

impl<T: Scalar> RadioParams<T> {
    pub fn new(
        tx_power_dbm: T,
        noise_psd_dbm_hz: T,
        bandwidth_hz: T,
        noise_figure_db: T,
    ) -> Result<Self> {
        if !(bandwidth_hz > T::zero()) {
            return Err(invalid("bandwidth must be positive"));
        }
        Ok(RadioParams {
            tx_power_dbm,
            noise_psd_dbm_hz,
            bandwidth_hz,
            noise_figure_db,
        })
    }
}

/// Noise power at the receiver in dBm: PSD + 10 log10(bandwidth) + noise
/// figure.
pub fn noise_power_dbm<T: Scalar>(radio: &RadioParams<T>) -> T {
    radio.noise_psd_dbm_hz
        + T::of(10.0) * radio.bandwidth_hz.log10()
        + radio.noise_figure_db
}

/// Transmit SNR rho = P_tx / noise power, linear scale.
pub fn tx_snr_linear<T: Scalar>(radio: &RadioParams<T>) -> T {
    db_to_linear(radio.tx_power_dbm - noise_power_dbm(radio))
}

/// One device-to-AP large-scale gain. Always consumes exactly one normal
/// draw, so stream layouts do not depend on the shadowing setting; with
/// sigma = 0 the factor is exactly 1.
pub fn large_scale_gain<T: Scalar, R: Rng + ?Sized>(
    ue: Point2<T>,
    ap: Point2<T>,
    params: &PathLossParams<T>,
    rng: &mut R,
) -> T {
    let z = T::standard_normal(rng);
    let shadow = T::of(10.0).powf(params.shadow_sigma_db * z / T::of(10.0));
    let ratio = ue.dist(ap) / params.ref_distance_m;
    let pl0 = db_to_linear(params.ref_loss_db);
    shadow / (T::one() + pl0 * ratio.powf(params.exponent))
}

/// Large-scale gains for all device/AP pairs, APs along rows.
#[derive(Clone, Debug)]
pub struct LinkGains<T> {
    beta: Array2<T>,
}

impl<T: Scalar> LinkGains<T> {
    /// Draw order: device-major, APs in index order within each device.
    pub fn generate<R: Rng + ?Sized>(
        deployment: &Deployment<T>,
        ue_positions: &[Point2<T>],
        params: &PathLossParams<T>,
        rng: &mut R,
    ) -> Self {
        let m = deployment.num_aps();
        let u = ue_positions.len();
        let mut beta = Array2::zeros((m, u));
        for (ui, &pos) in ue_positions.iter().enumerate() {
            for mi in 0..m {
                beta[(mi, ui)] = large_scale_gain(pos, deployment.position(mi), params, rng);
            }
        }
        LinkGains { beta }
    }

    pub fn from_matrix(beta: Array2<T>) -> Self {
        LinkGains { beta }
    }

    pub fn num_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_ues(&self) -> usize {
        self.beta.ncols()
    }

    pub fn beta(&self, ap: usize, ue: usize) -> T {
        self.beta[(ap, ue)]
    }

    /// All AP gains of one device.
    pub fn ue_column(&self, ue: usize) -> ArrayView1<'_, T> {
        self.beta.column(ue)
    }

    /// Average gain of one device across APs.
    pub fn ue_mean(&self, ue: usize) -> T {
        self.ue_column(ue).iter().copied().sum::<T>() / T::from_usize(self.num_aps()).unwrap()
    }
}

/// Small-scale channel vectors for all active devices: column u stacks the
/// per-AP antenna blocks of device u, rows m*S .. (m+1)*S belonging to AP m.
#[derive(Clone, Debug)]
pub struct ChannelRealization<T> {
    g: Array2<Complex<T>>,
    antennas_per_ap: usize,
}

impl<T: Scalar> ChannelRealization<T> {
    /// g = sqrt(beta) h with h i.i.d. CN(0, 1) per antenna. Draw order:
    /// device-major, then AP index, then antenna.
    pub fn generate<R: Rng + ?Sized>(
        deployment: &Deployment<T>,
        gains: &LinkGains<T>,
        rng: &mut R,
    ) -> Self {
        let m = deployment.num_aps();
        let s = deployment.antennas_per_ap();
        let u = gains.num_ues();
        let mut g = Array2::zeros((m * s, u));
        for ui in 0..u {
            for mi in 0..m {
                let amp = gains.beta(mi, ui).sqrt();
                for si in 0..s {
                    g[(mi * s + si, ui)] = complex_standard_normal::<T, _>(rng) * amp;
                }
            }
        }
        ChannelRealization {
            g,
            antennas_per_ap: s,
        }
    }

    /// Wrap an explicit (M*S x U) matrix, e.g. a synthetic channel.
    pub fn from_matrix(g: Array2<Complex<T>>, antennas_per_ap: usize) -> Self {
        assert!(antennas_per_ap > 0 && g.nrows() % antennas_per_ap == 0);
        ChannelRealization {
            g,
            antennas_per_ap,
        }
    }

    pub fn antennas_per_ap(&self) -> usize {
        self.antennas_per_ap
    }

    pub fn num_aps(&self) -> usize {
        self.g.nrows() / self.antennas_per_ap
    }

    pub fn num_ues(&self) -> usize {
        self.g.ncols()
    }

    /// Stacked channel vector of one device, length M*S.
    pub fn ue_column(&self, ue: usize) -> ArrayView1<'_, Complex<T>> {
        self.g.column(ue)
    }

    /// The S antenna entries of device `ue` at AP `ap`.
    pub fn block(&self, ue: usize, ap: usize) -> Vec<Complex<T>> {
        let s = self.antennas_per_ap;
        (0..s).map(|si| self.g[(ap * s + si, ue)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{AreaSpec, RngStream};
    use approx::assert_relative_eq;

    fn pl_no_shadow() -> PathLossParams<f64> {
        PathLossParams::new(1.0, 30.0, 3.8, 0.0).unwrap()
    }

    #[test]
    fn gain_at_reference_distance() {
        let mut rng = RngStream::root(1).child("");
        let ue = Point2::new(0.0, 0.0);
        let ap = Point2::new(1.0, 0.0);
        let beta = large_scale_gain(ue, ap, &pl_no_shadow(), &mut rng);
        // PL0 = 30 dB -> 1000 linear, so beta = 1 / 1001 at d = d0
        assert_relative_eq!(beta, 1.0 / 1001.0, max_relative = 1e-12);
    }

    #[test]
    fn gain_has_expected_distance_scaling() {
        let mut rng = RngStream::root(1).child("");
        let params = pl_no_shadow();
        let ue = Point2::new(0.0, 0.0);
        let b100 = large_scale_gain(ue, Point2::new(100.0, 0.0), &params, &mut rng);
        let expected = 1.0 / (1.0 + 1000.0 * 100.0f64.powf(3.8));
        assert_relative_eq!(b100, expected, max_relative = 1e-12);
        // far link: the +1 in the denominator is negligible, slope is pure
        // power law
        let b200 = large_scale_gain(ue, Point2::new(200.0, 0.0), &params, &mut rng);
        assert_relative_eq!(b100 / b200, 2.0f64.powf(3.8), max_relative = 1e-6);
    }

    #[test]
    fn gain_bounded_and_monotone_without_shadowing() {
        let mut rng = RngStream::root(2).child("");
        let params = pl_no_shadow();
        let ue = Point2::new(500.0, 500.0);
        let mut last = f64::INFINITY;
        for d in [0.0, 0.5, 1.0, 5.0, 50.0, 500.0] {
            let beta = large_scale_gain(ue, Point2::new(500.0 + d, 500.0), &params, &mut rng);
            assert!(beta > 0.0 && beta <= 1.0);
            assert!(beta <= last, "beta must not grow with distance");
            last = beta;
        }
    }

    #[test]
    fn shadowing_moments_in_db() {
        let params = PathLossParams::new(1.0, 30.0, 3.8, 8.0).unwrap();
        let mut rng = RngStream::root(3).child("shadow");
        let ue = Point2::new(0.0, 0.0);
        let ap = Point2::new(100.0, 0.0);
        let ref_beta = 1.0 / (1.0 + 1000.0 * 100.0f64.powf(3.8));
        let n = 100_000;
        let mut db = Vec::with_capacity(n);
        for _ in 0..n {
            let beta = large_scale_gain(ue, ap, &params, &mut rng);
            db.push(10.0 * (beta / ref_beta).log10());
        }
        let mean = db.iter().sum::<f64>() / n as f64;
        let var = db.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
        // the dB-domain shadowing term is N(0, 8^2)
        assert!(mean.abs() < 0.1, "mean shadow dB = {mean}");
        assert!((var.sqrt() - 8.0).abs() < 0.2, "std shadow dB = {}", var.sqrt());
    }

    #[test]
    fn noise_and_snr_budget() {
        let radio = RadioParams::new(17.0, -174.0, 200e3, 9.0).unwrap();
        let np = noise_power_dbm(&radio);
        // -174 + 10 log10(2e5) + 9
        assert_relative_eq!(np, -174.0 + 10.0 * 200_000f64.log10() + 9.0, max_relative = 1e-12);
        assert!((np + 112.0).abs() < 0.02);
        let rho = tx_snr_linear(&radio);
        assert_relative_eq!(rho, 10f64.powf((17.0 - np) / 10.0), max_relative = 1e-12);
        assert!((rho / 10f64.powf(12.9) - 1.0).abs() < 0.01);
    }

    #[test]
    fn channel_energy_matches_beta() {
        let area = AreaSpec::new(1000.0).unwrap();
        let deployment = Deployment::grid(2, 2, area, 4).unwrap();
        let params = PathLossParams::new(1.0, 30.0, 3.8, 8.0).unwrap();
        let positions = vec![Point2::new(300.0, 300.0)];
        let mut rng = RngStream::root(4).child("fading");
        let mut beta_rng = RngStream::root(4).child("beta");
        let gains = LinkGains::generate(&deployment, &positions, &params, &mut beta_rng);
        // average |g|^2 per antenna over many fades approaches beta
        let n = 20_000;
        let mut acc = vec![0.0f64; deployment.num_aps()];
        for _ in 0..n {
            let ch = ChannelRealization::generate(&deployment, &gains, &mut rng);
            for ap in 0..deployment.num_aps() {
                let e: f64 = ch.block(0, ap).iter().map(|z| z.norm_sqr()).sum();
                acc[ap] += e / deployment.antennas_per_ap() as f64;
            }
        }
        for ap in 0..deployment.num_aps() {
            let mean = acc[ap] / n as f64;
            let beta = gains.beta(ap, 0);
            assert!(
                (mean / beta - 1.0).abs() < 0.05,
                "ap {ap}: mean {mean}, beta {beta}"
            );
        }
    }

    #[test]
    fn channel_blocks_are_consistent_views() {
        let area = AreaSpec::new(1000.0).unwrap();
        let deployment = Deployment::grid(3, 3, area, 2).unwrap();
        let params = pl_no_shadow();
        let positions = vec![Point2::new(100.0, 900.0), Point2::new(700.0, 200.0)];
        let mut rng = RngStream::root(5).child("x");
        let gains = LinkGains::generate(&deployment, &positions, &params, &mut rng);
        let ch = ChannelRealization::generate(&deployment, &gains, &mut rng);
        assert_eq!(ch.num_aps(), 9);
        assert_eq!(ch.num_ues(), 2);
        let col = ch.ue_column(1);
        let block = ch.block(1, 4);
        for si in 0..2 {
            assert_eq!(block[si], col[4 * 2 + si]);
        }
    }
}

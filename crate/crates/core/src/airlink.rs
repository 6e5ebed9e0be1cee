//! Preamble pool, slot simulation, matched filtering and uplink SINR.
//!
//! Active devices transmit a preamble; the APs forward their samples to a
//! central unit which correlates against each pool sequence. Working in
//! noise-normalized units (transmit power expressed as the transmit SNR
//! rho), the stacked samples across all M*S antennas are
//!
//! ```text
//! Y = sum_u sqrt(rho) g_u psi_u^T + N,     N i.i.d. CN(0, 1)
//! ```
//!
//! and the least-squares estimate for pool sequence p is
//!
//! ```text
//! ghat = Y conj(p) / (sqrt(rho) L) = sum_{u on p} g_u + n / sqrt(rho L)
//! ```
//!
//! with n again i.i.d. CN(0, 1); the right-hand form is what
//! [`matched_filter`] synthesizes directly. Both routes are kept and must
//! agree to numerical precision on shared noise.
//!
//! For a device decoded by conjugate beamforming over an AP subset, the
//! post-combining SINR with channel estimate ghat is
//!
//! ```text
//!               rho |ghat^H g_target|^2
//! ------------------------------------------------------
//! rho sum_{other active u} |ghat^H g_u|^2 + |ghat^H w|^2
//! ```
//!
//! where w is a fresh unit-variance complex Gaussian (the data-phase noise
//! in the same normalized units) and all vectors are restricted to the
//! serving APs' antenna blocks.

use crate::channel::{ChannelRealization, LinkGains, PathLossParams, RadioParams};
use crate::error::{invalid, Result};
use crate::scalar::{complex_standard_normal, Scalar};
use crate::scene::{Deployment, Point2, RngStream, TrafficSpec};
use ndarray::Array2;
use num_complex::Complex;
use rand::Rng;

/// Orthogonal preamble pool: all cyclic shifts of one constant-amplitude
/// zero-autocorrelation base sequence. Pool size equals sequence length, and
/// each sequence has squared norm L.
#[derive(Clone, Debug)]
pub struct PreamblePool<T> {
    sequences: Vec<Vec<Complex<T>>>,
    root: usize,
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl<T: Scalar> PreamblePool<T> {
    /// Build the pool of length-L shifts for a root coprime with L. The base
    /// phase is -pi r n^2 / L for even L and -pi r n (n+1) / L for odd L;
    /// both choices give exactly zero periodic autocorrelation at every
    /// nonzero shift, which is what makes the shifted pool orthogonal.
    pub fn new(len: usize, root: usize) -> Result<Self> {
        if len < 2 {
            return Err(invalid("pool length must be at least 2"));
        }
        if root == 0 || root >= len || gcd(root, len) != 1 {
            return Err(invalid(format!(
                "root {root} must lie in 1..{len} and be coprime with the length"
            )));
        }
        let base: Vec<Complex<T>> = (0..len)
            .map(|n| {
                let nf = n as f64;
                let phase = if len % 2 == 0 {
                    -std::f64::consts::PI * root as f64 * nf * nf / len as f64
                } else {
                    -std::f64::consts::PI * root as f64 * nf * (nf + 1.0) / len as f64
                };
                Complex::new(T::of(phase.cos()), T::of(phase.sin()))
            })
            .collect();
        let sequences = (0..len)
            .map(|shift| (0..len).map(|n| base[(n + shift) % len]).collect())
            .collect();
        Ok(PreamblePool { sequences, root })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn sequence(&self, index: usize) -> &[Complex<T>] {
        &self.sequences[index]
    }

    /// Inner product sum_n p_a[n] conj(p_b[n]).
    pub fn inner(&self, a: usize, b: usize) -> Complex<T> {
        self.sequences[a]
            .iter()
            .zip(&self.sequences[b])
            .map(|(x, y)| x * y.conj())
            .fold(Complex::new(T::zero(), T::zero()), |acc, v| acc + v)
    }
}

/// Everything random about one random-access slot: who woke up, where they
/// are, their channels, and which preamble each one picked (0-based).
#[derive(Clone, Debug)]
pub struct SlotRealization<T> {
    pub ue_positions: Vec<Point2<T>>,
    pub gains: LinkGains<T>,
    pub channel: ChannelRealization<T>,
    pub preamble_choice: Vec<usize>,
    pool_size: usize,
}

impl<T: Scalar> SlotRealization<T> {
    /// Assemble a slot from externally drawn pieces (fixed geometries,
    /// scripted preamble choices). All per-device containers must agree on
    /// the device count and every choice must fit the pool.
    pub fn from_parts(
        ue_positions: Vec<Point2<T>>,
        gains: LinkGains<T>,
        channel: ChannelRealization<T>,
        preamble_choice: Vec<usize>,
        pool_size: usize,
    ) -> Result<Self> {
        let n = ue_positions.len();
        if gains.num_ues() != n || channel.num_ues() != n || preamble_choice.len() != n {
            return Err(invalid(format!(
                "device counts disagree: {n} positions, {} gain columns, {} channel columns, {} choices",
                gains.num_ues(),
                channel.num_ues(),
                preamble_choice.len()
            )));
        }
        if preamble_choice.iter().any(|&p| p >= pool_size) {
            return Err(invalid("preamble choice outside the pool"));
        }
        Ok(SlotRealization {
            ue_positions,
            gains,
            channel,
            preamble_choice,
            pool_size,
        })
    }

    pub fn num_active(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    /// Active-device indices that picked the given preamble.
    pub fn colliders(&self, preamble: usize) -> Vec<usize> {
        self.preamble_choice
            .iter()
            .enumerate()
            .filter(|(_, &p)| p == preamble)
            .map(|(u, _)| u)
            .collect()
    }

    /// Number of devices on the given preamble.
    pub fn multiplicity(&self, preamble: usize) -> usize {
        self.preamble_choice.iter().filter(|&&p| p == preamble).count()
    }

    /// Per-preamble multiplicities.
    pub fn multiplicities(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.pool_size];
        for &p in &self.preamble_choice {
            counts[p] += 1;
        }
        counts
    }
}

/// Draw one slot. Sub-streams are derived per stage ("count", "positions",
/// "gains", "channel", "preambles"), so adding draws to one stage never
/// shifts another.
pub fn simulate_slot<T: Scalar>(
    deployment: &Deployment<T>,
    traffic: &TrafficSpec<T>,
    pathloss: &PathLossParams<T>,
    stream: &RngStream,
) -> SlotRealization<T> {
    let count = crate::scene::sample_active_count(traffic, &mut stream.child("count"));
    let area = deployment.area();
    let ue_positions =
        crate::scene::place_ues_uniform(count, &area, &mut stream.child("positions"));
    let gains = LinkGains::generate(deployment, &ue_positions, pathloss, &mut stream.child("gains"));
    let channel = ChannelRealization::generate(deployment, &gains, &mut stream.child("channel"));
    let mut preamble_rng = stream.child("preambles");
    let preamble_choice = (0..count)
        .map(|_| preamble_rng.gen_range(0..traffic.pool_size))
        .collect();
    SlotRealization {
        ue_positions,
        gains,
        channel,
        preamble_choice,
        pool_size: traffic.pool_size,
    }
}

/// Matched-filter output for one preamble: the stacked estimate, per-AP
/// receive energies, and the true number of devices on the preamble.
#[derive(Clone, Debug)]
pub struct PreambleObservation<T> {
    pub filtered: Vec<Complex<T>>,
    pub energy: Vec<T>,
    pub true_multiplicity: usize,
}

/// Per-AP energies of a stacked antenna vector: E_m = |block m|^2 / S.
pub fn preamble_energy<T: Scalar>(filtered: &[Complex<T>], antennas_per_ap: usize) -> Vec<T> {
    assert!(antennas_per_ap > 0 && filtered.len() % antennas_per_ap == 0);
    let s_inv = T::one() / T::from_usize(antennas_per_ap).unwrap();
    filtered
        .chunks_exact(antennas_per_ap)
        .map(|block| block.iter().map(|z| z.norm_sqr()).sum::<T>() * s_inv)
        .collect()
}

/// Direct synthesis of the least-squares estimate for one preamble from a
/// unit-variance noise vector of length M*S.
pub fn matched_filter_with_noise<T: Scalar>(
    slot: &SlotRealization<T>,
    preamble: usize,
    rho: T,
    unit_noise: &[Complex<T>],
) -> PreambleObservation<T> {
    let ms = slot.channel.num_aps() * slot.channel.antennas_per_ap();
    assert_eq!(unit_noise.len(), ms);
    let scale = (rho * T::from_usize(slot.pool_size).unwrap()).sqrt().recip();
    let mut filtered: Vec<Complex<T>> = unit_noise.iter().map(|&n| n * scale).collect();
    let colliders = slot.colliders(preamble);
    for &u in &colliders {
        let col = slot.channel.ue_column(u);
        for (f, &g) in filtered.iter_mut().zip(col.iter()) {
            *f += g;
        }
    }
    let energy = preamble_energy(&filtered, slot.channel.antennas_per_ap());
    PreambleObservation {
        filtered,
        energy,
        true_multiplicity: colliders.len(),
    }
}

/// Matched filter with freshly drawn preamble-phase noise.
pub fn matched_filter<T: Scalar, R: Rng + ?Sized>(
    slot: &SlotRealization<T>,
    preamble: usize,
    radio: &RadioParams<T>,
    rng: &mut R,
) -> PreambleObservation<T> {
    let ms = slot.channel.num_aps() * slot.channel.antennas_per_ap();
    let noise: Vec<Complex<T>> = (0..ms).map(|_| complex_standard_normal(rng)).collect();
    matched_filter_with_noise(slot, preamble, crate::channel::tx_snr_linear(radio), &noise)
}

/// Matched filter in the zero-noise limit: just the sum of collider
/// channels.
pub fn matched_filter_noiseless<T: Scalar>(
    slot: &SlotRealization<T>,
    preamble: usize,
) -> PreambleObservation<T> {
    let ms = slot.channel.num_aps() * slot.channel.antennas_per_ap();
    let mut filtered = vec![Complex::new(T::zero(), T::zero()); ms];
    let colliders = slot.colliders(preamble);
    for &u in &colliders {
        for (f, &g) in filtered.iter_mut().zip(slot.channel.ue_column(u).iter()) {
            *f += g;
        }
    }
    let energy = preamble_energy(&filtered, slot.channel.antennas_per_ap());
    PreambleObservation {
        filtered,
        energy,
        true_multiplicity: colliders.len(),
    }
}

/// Full received sample matrix (M*S x L) over the whole preamble slot, from
/// an explicit unit-variance noise matrix of the same shape.
pub fn received_matrix_with_noise<T: Scalar>(
    slot: &SlotRealization<T>,
    pool: &PreamblePool<T>,
    rho: T,
    unit_noise: &Array2<Complex<T>>,
) -> Array2<Complex<T>> {
    let ms = slot.channel.num_aps() * slot.channel.antennas_per_ap();
    let l = pool.len();
    assert_eq!(unit_noise.dim(), (ms, l));
    assert_eq!(slot.pool_size(), l);
    let sqrt_rho = rho.sqrt();
    let mut y = unit_noise.clone();
    for u in 0..slot.num_active() {
        let seq = pool.sequence(slot.preamble_choice[u]);
        let col = slot.channel.ue_column(u);
        for i in 0..ms {
            let gu = col[i] * sqrt_rho;
            for (n, &p) in seq.iter().enumerate() {
                y[(i, n)] += gu * p;
            }
        }
    }
    y
}

/// Least-squares estimate from the full sample matrix:
/// Y conj(p) / (sqrt(rho) L).
pub fn ls_estimate_from_matrix<T: Scalar>(
    y: &Array2<Complex<T>>,
    pool: &PreamblePool<T>,
    preamble: usize,
    rho: T,
) -> Vec<Complex<T>> {
    let seq = pool.sequence(preamble);
    let l = T::from_usize(pool.len()).unwrap();
    let scale = (rho.sqrt() * l).recip();
    y.rows()
        .into_iter()
        .map(|row| {
            let acc = row
                .iter()
                .zip(seq)
                .map(|(&ys, &p)| ys * p.conj())
                .fold(Complex::new(T::zero(), T::zero()), |a, v| a + v);
            acc * scale
        })
        .collect()
}

/// Restrict a stacked antenna vector to the blocks of the given APs. The AP
/// set is used in ascending index order regardless of input order.
pub fn restrict_to_aps<T: Scalar>(
    stacked: ndarray::ArrayView1<'_, Complex<T>>,
    ap_set: &[usize],
    antennas_per_ap: usize,
) -> Vec<Complex<T>> {
    let mut aps: Vec<usize> = ap_set.to_vec();
    aps.sort_unstable();
    let mut out = Vec::with_capacity(aps.len() * antennas_per_ap);
    for &ap in &aps {
        let start = ap * antennas_per_ap;
        out.extend((start..start + antennas_per_ap).map(|r| stacked[r]));
    }
    out
}

fn hermitian_dot<T: Scalar>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x.conj() * y)
        .fold(Complex::new(T::zero(), T::zero()), |acc, v| acc + v)
}

/// Signal power and interference-plus-noise power behind the
/// post-combining SINR of `target_ue`, decoded with `estimate` over the APs
/// in `ap_set`. Every other active device interferes, whichever preamble it
/// sent; the data-phase noise is drawn fresh from `rng`.
pub fn sinr_components<T: Scalar, R: Rng + ?Sized>(
    slot: &SlotRealization<T>,
    target_ue: usize,
    ap_set: &[usize],
    estimate: &[Complex<T>],
    radio: &RadioParams<T>,
    rng: &mut R,
) -> Result<(T, T)> {
    if ap_set.is_empty() {
        return Err(invalid("serving AP set must not be empty"));
    }
    let s = slot.channel.antennas_per_ap();
    if estimate.len() != ap_set.len() * s {
        return Err(invalid(format!(
            "estimate has {} entries but the AP set spans {}",
            estimate.len(),
            ap_set.len() * s
        )));
    }
    let rho = crate::channel::tx_snr_linear(radio);
    let g_target = restrict_to_aps(slot.channel.ue_column(target_ue), ap_set, s);
    let signal = rho * hermitian_dot(estimate, &g_target).norm_sqr();

    // interference from devices on the same preamble and everyone else,
    // accumulated separately
    let target_preamble = slot.preamble_choice[target_ue];
    let mut collided = T::zero();
    let mut other = T::zero();
    for u in 0..slot.num_active() {
        if u == target_ue {
            continue;
        }
        let g_u = restrict_to_aps(slot.channel.ue_column(u), ap_set, s);
        let p = rho * hermitian_dot(estimate, &g_u).norm_sqr();
        if slot.preamble_choice[u] == target_preamble {
            collided += p;
        } else {
            other += p;
        }
    }

    let noise_vec: Vec<Complex<T>> = (0..estimate.len())
        .map(|_| complex_standard_normal(rng))
        .collect();
    let noise = hermitian_dot(estimate, &noise_vec).norm_sqr();

    Ok((signal, collided + other + noise))
}

/// Post-combining SINR of `target_ue`: the ratio of the two power terms
/// from `sinr_components`. An exactly zero denominator yields infinity
/// (caller caps it).
pub fn sinr_for_ue<T: Scalar, R: Rng + ?Sized>(
    slot: &SlotRealization<T>,
    target_ue: usize,
    ap_set: &[usize],
    estimate: &[Complex<T>],
    radio: &RadioParams<T>,
    rng: &mut R,
) -> Result<T> {
    let (signal, denom) = sinr_components(slot, target_ue, ap_set, estimate, radio, rng)?;
    if denom == T::zero() {
        return Ok(T::infinity());
    }
    Ok(signal / denom)
}

/// Shannon rate in bit/s over the given bandwidth, with infinite SINR capped
/// at `sinr_cap` first. Negative SINR is a caller bug.
pub fn achievable_rate<T: Scalar>(sinr: T, bandwidth_hz: T, sinr_cap: T) -> Result<T> {
    if sinr < T::zero() || sinr.is_nan() {
        return Err(invalid(format!("SINR must be nonnegative, got {sinr}")));
    }
    let capped = if sinr > sinr_cap { sinr_cap } else { sinr };
    Ok(bandwidth_hz * (T::one() + capped).log2())
}

/// Large-system SINR of a collided device: mean-gain ratio
/// mean(beta_target)^2 / sum over co-preamble interferers of mean(beta)^2.
/// With no interferers the value is infinite.
pub fn asymptotic_sinr<T: Scalar>(gains: &LinkGains<T>, target_ue: usize, interferers: &[usize]) -> T {
    let num = gains.ue_mean(target_ue).powi(2);
    let den: T = interferers
        .iter()
        .filter(|&&u| u != target_ue)
        .map(|&u| gains.ue_mean(u).powi(2))
        .sum();
    if den == T::zero() {
        return T::infinity();
    }
    num / den
}

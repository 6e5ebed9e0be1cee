//! Uplink rate experiments: simulate slots, resolve each collided preamble
//! under every configured AP-selection scheme, and aggregate the per-device
//! achievable rates into CCDF curves and summary statistics.

use ndarray::ArrayView1;
use rayon::prelude::*;

use crate::airlink::{
    achievable_rate, matched_filter, restrict_to_aps, simulate_slot, sinr_for_ue,
    PreambleObservation, SlotRealization,
};
use crate::channel::{LinkGains, PathLossParams, RadioParams};
use crate::clustering::{
    assign_cluster_to_position, resolve_collision, select_genie, top_energy_aps, ClusterSet,
    Scheme,
};
use crate::error::{invalid, Result};
use crate::multiplicity::{MlpModel, TedModel};
use crate::scene::{Deployment, RngStream, TrafficSpec};

use super::config::{ClusterMatch, ExperimentConfig, GenieGain};
use super::model_io::check_model_matches;

/// Sentinel `mc` for schemes whose AP set does not depend on the cluster
/// size (the all-AP scheme).
pub const MC_ANY: usize = 0;

/// Exceedance curve of the rate samples on the fixed dB grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CcdfCurve {
    /// Rate grid in dB, 10*log10(bit/s).
    pub grid_db: Vec<f64>,
    /// Fraction of samples strictly above each grid point.
    pub exceedance: Vec<f64>,
}

/// The reporting grid: -20 dB to 80 dB in 0.5 dB steps. At 200 kHz and the
/// default SINR cap every positive-rate sample lands inside it.
pub fn rate_grid_db() -> Vec<f64> {
    (0..=200).map(|i| -20.0 + 0.5 * i as f64).collect()
}

/// Rate samples of one (scheme, cluster size) pair, in trial order.
#[derive(Clone, Debug)]
pub struct SchemeRates {
    pub scheme: Scheme,
    /// Serving-cluster size; `MC_ANY` for the all-AP scheme.
    pub mc: usize,
    /// One achievable rate in bit/s per collided device per trial. Devices
    /// a clustered scheme declined to serve (multiplicity estimate 0)
    /// contribute zero-rate samples.
    pub samples_bps: Vec<f64>,
}

impl SchemeRates {
    /// Rate at 95% exceedance: the 5th-percentile sample. Zero when empty.
    pub fn likely95_bps(&self) -> f64 {
        if self.samples_bps.is_empty() {
            return 0.0;
        }
        let mut sorted = self.samples_bps.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("rates are never NaN"));
        let idx = ((0.05 * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
        sorted[idx]
    }

    /// Sample-mean rate. Zero when empty.
    pub fn ergodic_bps(&self) -> f64 {
        if self.samples_bps.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples_bps.iter().sum();
        sum / self.samples_bps.len() as f64
    }

    pub fn ccdf(&self) -> CcdfCurve {
        let grid_db = rate_grid_db();
        let n = self.samples_bps.len();
        let mut db: Vec<f64> = self
            .samples_bps
            .iter()
            .map(|&r| {
                if r > 0.0 {
                    10.0 * r.log10()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        db.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let exceedance = grid_db
            .iter()
            .map(|&g| {
                if n == 0 {
                    return 0.0;
                }
                // first index with db > g; everything from there up exceeds
                let above = db.partition_point(|&x| x <= g);
                (n - above) as f64 / n as f64
            })
            .collect();
        CcdfCurve { grid_db, exceedance }
    }

    /// Schemes that rely on side information a deployed receiver lacks:
    /// true per-device gains (genie) or true device positions (matching a
    /// device to its resolved cluster).
    pub fn uses_oracle(&self) -> bool {
        matches!(
            self.scheme,
            Scheme::Genie | Scheme::DnnCluster | Scheme::TedCluster
        )
    }
}

/// All (scheme, mc) series of one rate experiment.
#[derive(Clone, Debug)]
pub struct RateReport {
    pub entries: Vec<SchemeRates>,
    pub trials: usize,
}

impl RateReport {
    pub fn find(&self, scheme: Scheme, mc: usize) -> Option<&SchemeRates> {
        self.entries
            .iter()
            .find(|e| e.scheme == scheme && e.mc == mc)
    }

    /// One row per (scheme, mc):
    /// `scheme,mc,num_samples,likely95_bps,ergodic_bps,uses_oracle`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("scheme,mc,num_samples,likely95_bps,ergodic_bps,uses_oracle\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.scheme.as_str(),
                e.mc,
                e.samples_bps.len(),
                e.likely95_bps(),
                e.ergodic_bps(),
                e.uses_oracle()
            ));
        }
        out
    }

    /// Long-format curves: `scheme,mc,rate_db,exceedance`.
    pub fn ccdf_csv(&self) -> String {
        let mut out = String::from("scheme,mc,rate_db,exceedance\n");
        for e in &self.entries {
            let curve = e.ccdf();
            for (g, p) in curve.grid_db.iter().zip(&curve.exceedance) {
                out.push_str(&format!("{},{},{g},{p}\n", e.scheme.as_str(), e.mc));
            }
        }
        out
    }
}

/// (scheme, mc) pairs in report order: config scheme order, cluster sizes
/// in config order, the all-AP scheme collapsed to one entry.
fn entry_plan(cfg: &ExperimentConfig) -> Result<Vec<(Scheme, usize)>> {
    let mut plan = Vec::new();
    for scheme in cfg.scheme_list()? {
        if scheme == Scheme::AllAp {
            plan.push((scheme, MC_ANY));
        } else {
            for &mc in &cfg.mc_list {
                plan.push((scheme, mc));
            }
        }
    }
    Ok(plan)
}

/// Serving cluster for one device under a clustered scheme's resolution.
fn match_cluster(
    clusters: &ClusterSet<f64>,
    slot: &SlotRealization<f64>,
    ue: usize,
    rule: ClusterMatch,
) -> usize {
    match rule {
        ClusterMatch::Centroid => assign_cluster_to_position(clusters, slot.ue_positions[ue]),
        ClusterMatch::Energy => {
            let mut best = 0usize;
            let mut best_gain = f64::NEG_INFINITY;
            for c in 0..clusters.num_clusters() {
                let gain: f64 = clusters
                    .cluster_aps(c)
                    .iter()
                    .map(|&ap| slot.gains.beta(ap, ue))
                    .sum();
                if gain > best_gain {
                    best_gain = gain;
                    best = c;
                }
            }
            best
        }
    }
}

fn genie_ap_set(
    gains: &LinkGains<f64>,
    slot: &SlotRealization<f64>,
    ue: usize,
    mc: usize,
    rule: GenieGain,
    antennas_per_ap: usize,
) -> Vec<usize> {
    match rule {
        GenieGain::LargeScale => select_genie(gains, ue, mc),
        GenieGain::Instantaneous => {
            let col: Vec<_> = slot.channel.ue_column(ue).iter().copied().collect();
            let energy = crate::airlink::preamble_energy(&col, antennas_per_ap);
            top_energy_aps(&energy, mc)
        }
    }
}

struct TrialContext<'a> {
    cfg: &'a ExperimentConfig,
    deployment: &'a Deployment<f64>,
    traffic: &'a TrafficSpec<f64>,
    pathloss: &'a PathLossParams<f64>,
    radio: &'a RadioParams<f64>,
    plan: &'a [(Scheme, usize)],
    model: Option<&'a MlpModel<f64>>,
    ted: Option<&'a TedModel<f64>>,
    root: &'a RngStream,
}

/// One slot: every device on every preamble carrying two or more devices
/// yields one rate sample per plan entry.
fn run_trial(ctx: &TrialContext<'_>, t: usize) -> Result<Vec<Vec<f64>>> {
    let trial = ctx.root.child("trial").child(t);
    let slot = simulate_slot(
        ctx.deployment,
        ctx.traffic,
        ctx.pathloss,
        &trial.child("slot"),
    );
    let s = ctx.deployment.antennas_per_ap();
    let all_aps: Vec<usize> = (0..ctx.deployment.num_aps()).collect();
    let mut out = vec![Vec::new(); ctx.plan.len()];

    for l in 0..ctx.cfg.preamble_pool_size {
        let colliders = slot.colliders(l);
        if colliders.len() < 2 {
            continue;
        }
        let obs: PreambleObservation<f64> =
            matched_filter(&slot, l, ctx.radio, &mut trial.child("mf").child(l));
        let b_dnn = ctx.model.map(|m| m.predict(&obs.energy));
        let b_ted = ctx.ted.map(|m| m.predict(&obs.energy));

        // One clustering per (predictor, mc); every collider on the
        // preamble shares it.
        let mut resolutions: Vec<Option<Option<ClusterSet<f64>>>> = vec![None; ctx.plan.len()];
        for (idx, &(scheme, mc)) in ctx.plan.iter().enumerate() {
            let (tag, b_hat) = match scheme {
                Scheme::DnnCluster => ("dnn", b_dnn.expect("checked in run_rates")),
                Scheme::TedCluster => ("ted", b_ted.expect("checked in run_rates")),
                _ => continue,
            };
            let mut rng = trial.child("kmeans").child(l).child(tag).child(mc);
            let res = resolve_collision(
                &obs.energy,
                b_hat,
                mc,
                ctx.deployment,
                ctx.cfg.kmeans_restarts,
                &mut rng,
            )?;
            resolutions[idx] = Some(res.clusters);
        }

        for &u in &colliders {
            for (idx, &(scheme, mc)) in ctx.plan.iter().enumerate() {
                let ap_set: Vec<usize> = match scheme {
                    Scheme::AllAp => all_aps.clone(),
                    Scheme::McStrongest => top_energy_aps(&obs.energy, mc),
                    Scheme::Genie => genie_ap_set(
                        &slot.gains,
                        &slot,
                        u,
                        mc,
                        ctx.cfg.genie_gain,
                        s,
                    ),
                    Scheme::DnnCluster | Scheme::TedCluster => {
                        match resolutions[idx].as_ref().expect("resolved above") {
                            // multiplicity estimate 0: the device goes
                            // unserved this slot
                            None => {
                                out[idx].push(0.0);
                                continue;
                            }
                            Some(clusters) => {
                                let c = match_cluster(clusters, &slot, u, ctx.cfg.cluster_match);
                                clusters.cluster_aps(c)
                            }
                        }
                    }
                };
                let estimate =
                    restrict_to_aps(ArrayView1::from(&obs.filtered[..]), &ap_set, s);
                let mut data_rng = trial
                    .child("data")
                    .child(l)
                    .child(u)
                    .child(scheme.as_str())
                    .child(mc);
                let sinr = sinr_for_ue(&slot, u, &ap_set, &estimate, ctx.radio, &mut data_rng)?;
                let rate = achievable_rate(sinr, ctx.cfg.bandwidth_hz, ctx.cfg.sinr_cap)?;
                out[idx].push(rate);
            }
        }
    }
    Ok(out)
}

/// The full rate experiment. `model` / `ted` are required exactly when the
/// scheme list asks for the corresponding clustered scheme. Trials run in
/// parallel on independent derived streams and are merged in trial order,
/// so results do not depend on the worker-thread count.
pub fn run_rates(
    cfg: &ExperimentConfig,
    model: Option<&MlpModel<f64>>,
    ted: Option<&TedModel<f64>>,
    seed: u64,
) -> Result<RateReport> {
    let deployment = cfg.deployment()?;
    let traffic = cfg.traffic()?;
    let pathloss = cfg.pathloss()?;
    let radio = cfg.radio()?;
    let plan = entry_plan(cfg)?;

    let schemes = cfg.scheme_list()?;
    if schemes.contains(&Scheme::DnnCluster) {
        let m = model.ok_or_else(|| invalid("scheme dnn_cluster needs a trained model"))?;
        check_model_matches(m, deployment.num_aps(), deployment.antennas_per_ap(), cfg.t_max)?;
    }
    if schemes.contains(&Scheme::TedCluster) {
        let t = ted.ok_or_else(|| invalid("scheme ted_cluster needs a fitted threshold model"))?;
        if t.t_max() != cfg.t_max {
            return Err(invalid(format!(
                "threshold model classifies up to {} colliders, config says {}",
                t.t_max(),
                cfg.t_max
            )));
        }
        if t.min.len() != deployment.num_aps() {
            return Err(invalid(format!(
                "threshold model scales {} energy positions, the deployment has {} APs",
                t.min.len(),
                deployment.num_aps()
            )));
        }
    }
    for &mc in &cfg.mc_list {
        if mc > deployment.num_aps() {
            return Err(invalid(format!(
                "cluster size {mc} exceeds the {} deployed APs",
                deployment.num_aps()
            )));
        }
    }

    let root = RngStream::root(seed);
    let ctx = TrialContext {
        cfg,
        deployment: &deployment,
        traffic: &traffic,
        pathloss: &pathloss,
        radio: &radio,
        plan: &plan,
        model,
        ted,
        root: &root,
    };

    let per_trial: Vec<Vec<Vec<f64>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(&ctx, t))
        .collect::<Result<_>>()?;

    let mut entries: Vec<SchemeRates> = plan
        .iter()
        .map(|&(scheme, mc)| SchemeRates {
            scheme,
            mc,
            samples_bps: Vec::new(),
        })
        .collect();
    for trial_samples in per_trial {
        for (entry, samples) in entries.iter_mut().zip(trial_samples) {
            entry.samples_bps.extend(samples);
        }
    }
    Ok(RateReport {
        entries,
        trials: cfg.trials,
    })
}

//! Large-system check: the post-combining SINR of a collided device,
//! averaged over small-scale fading at fixed device positions, against its
//! closed-form AP-count limit, tabulated over growing grids.

use rayon::prelude::*;

use crate::airlink::{asymptotic_sinr, matched_filter_noiseless, sinr_components, SlotRealization};
use crate::channel::{ChannelRealization, LinkGains};
use crate::error::Result;
use crate::scene::{AreaSpec, Deployment, RngStream};

use super::config::ExperimentConfig;

#[derive(Clone, Copy, Debug)]
pub struct AsymptoticPoint {
    /// AP count of the grid.
    pub m: usize,
    /// Ratio of the fading-averaged signal power to the fading-averaged
    /// interference-plus-noise power. The limit is the ratio of the two
    /// averages' large-system values, so this is the matching estimator; a
    /// per-draw SINR ratio would be heavy-tailed (near-zero denominators)
    /// and its mean inflated at any finite AP count.
    pub empirical_sinr: f64,
    /// The AP-count limit for the same positions and shadowing.
    pub asymptotic_sinr: f64,
}

impl AsymptoticPoint {
    pub fn rel_err(&self) -> f64 {
        (self.empirical_sinr - self.asymptotic_sinr).abs() / self.asymptotic_sinr
    }
}

#[derive(Clone, Debug)]
pub struct AsymptoticReport {
    pub points: Vec<AsymptoticPoint>,
    /// Set when the check could not run (no co-preamble device).
    pub note: Option<String>,
}

impl AsymptoticReport {
    /// `m,empirical_sinr,asymptotic_sinr,rel_err` rows; a skip note becomes
    /// a leading `#` comment.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        if let Some(note) = &self.note {
            out.push_str(&format!("# {note}\n"));
        }
        out.push_str("m,empirical_sinr,asymptotic_sinr,rel_err\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.m,
                p.empirical_sinr,
                p.asymptotic_sinr,
                p.rel_err()
            ));
        }
        out
    }
}

/// For each configured grid size: place the fixed devices on one shared
/// preamble, draw the shadowing once, then average the decoded SINR over
/// fading draws (channel estimate taken noise-free so only the finite AP
/// count separates the two columns). Draw streams are tagged per grid size
/// and per draw, so the table is reproducible under any parallelism.
pub fn run_asymptotic(cfg: &ExperimentConfig, seed: u64) -> Result<AsymptoticReport> {
    let positions = cfg.asym_points();
    if positions.len() < 2 {
        return Ok(AsymptoticReport {
            points: Vec::new(),
            note: Some(
                "skipped: a single device has no co-preamble interferer, the limit is infinite"
                    .to_string(),
            ),
        });
    }
    let pathloss = cfg.pathloss()?;
    let radio = cfg.radio()?;
    let area = AreaSpec::new(cfg.area_side_m)?;
    let root = RngStream::root(seed);
    let n = positions.len();
    let interferers: Vec<usize> = (1..n).collect();

    let mut points = Vec::with_capacity(cfg.asym_grid_sizes.len());
    for &m in &cfg.asym_grid_sizes {
        let side = (m as f64).sqrt().round() as usize;
        let deployment = Deployment::grid(side, side, area, cfg.antennas_per_ap)?;
        let mstream = root.child("m").child(m);
        let gains = LinkGains::generate(
            &deployment,
            &positions,
            &pathloss,
            &mut mstream.child("gains"),
        );
        let limit = asymptotic_sinr(&gains, 0, &interferers);
        let all_aps: Vec<usize> = (0..deployment.num_aps()).collect();

        let powers: Vec<(f64, f64)> = (0..cfg.asym_fading_draws)
            .into_par_iter()
            .map(|i| -> Result<(f64, f64)> {
                let channel = ChannelRealization::generate(
                    &deployment,
                    &gains,
                    &mut mstream.child("fading").child(i),
                );
                let slot = SlotRealization::from_parts(
                    positions.clone(),
                    gains.clone(),
                    channel,
                    vec![0; n],
                    1,
                )?;
                let estimate = matched_filter_noiseless(&slot, 0).filtered;
                sinr_components(
                    &slot,
                    0,
                    &all_aps,
                    &estimate,
                    &radio,
                    &mut mstream.child("noise").child(i),
                )
            })
            .collect::<Result<_>>()?;
        // in-order reduction keeps the table thread-count independent
        let (sig, int) = powers
            .iter()
            .fold((0.0, 0.0), |(a, b), &(s, d)| (a + s, b + d));
        let empirical = sig / int;
        points.push(AsymptoticPoint {
            m,
            empirical_sinr: empirical,
            asymptotic_sinr: limit,
        });
    }
    Ok(AsymptoticReport { points, note: None })
}

//! One flat TOML document drives every subcommand. Missing keys fall back
//! to the defaults below, so an empty file runs the reference setup
//! (10x10 grid of 2-antenna APs over 1 km^2, 2000 devices at 1%% activity
//! on 20 preambles, 8 dB shadowing).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{PathLossParams, RadioParams};
use crate::clustering::Scheme;
use crate::error::{Error, Result};
use crate::multiplicity::{NormalizerKind, TrainConfig};
use crate::scene::{AreaSpec, Deployment, Point2, TrafficSpec};

/// How the genie scheme ranks APs for the target device.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenieGain {
    /// By true large-scale gain (default).
    LargeScale,
    /// By the realized per-AP channel energy of the slot.
    Instantaneous,
}

/// How a device is matched to one of the resolved clusters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMatch {
    /// Nearest cluster centroid to the device's position (default).
    Centroid,
    /// Cluster whose APs collect the most large-scale gain from the device.
    Energy,
}

/// Every tunable of the pipeline in one flat struct. Unknown keys in a
/// config file are rejected rather than silently ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    // Deployment geometry.
    pub ap_rows: usize,
    pub ap_cols: usize,
    pub antennas_per_ap: usize,
    pub area_side_m: f64,

    // Traffic and preamble pool.
    pub num_ues: usize,
    pub activation_prob: f64,
    pub preamble_pool_size: usize,
    pub zc_root: usize,

    // Radio front end.
    pub tx_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,

    // Propagation.
    pub ref_distance_m: f64,
    pub ref_loss_db: f64,
    pub pathloss_exponent: f64,
    pub shadow_sigma_db: f64,

    // Multiplicity estimation.
    pub t_max: usize,
    pub q_samples: usize,
    pub normalizer: NormalizerKind,
    pub normalizer_floor_db: f64,
    /// Hidden widths; empty selects by AP count (>= 100 APs gets
    /// 128-128-64-32, smaller grids 64-128-64-32).
    pub hidden_layers: Vec<usize>,
    pub max_epochs: usize,
    pub min_gradient: f64,
    pub max_val_checks: usize,
    pub scg_sigma: f64,
    pub scg_lambda_init: f64,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,

    // Rate experiments.
    pub trials: usize,
    pub mc_list: Vec<usize>,
    pub schemes: Vec<String>,
    pub kmeans_restarts: usize,
    pub sinr_cap: f64,
    pub genie_gain: GenieGain,
    pub cluster_match: ClusterMatch,

    // Asymptotic check.
    pub asym_grid_sizes: Vec<usize>,
    pub asym_fading_draws: usize,
    /// Flat x,y pairs of the fixed co-preamble devices; the first pair is
    /// the target.
    pub asym_positions: Vec<f64>,

    // Run plumbing.
    pub seed: u64,
    pub out_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            ap_rows: 10,
            ap_cols: 10,
            antennas_per_ap: 2,
            area_side_m: 1000.0,
            num_ues: 2000,
            activation_prob: 0.01,
            preamble_pool_size: 20,
            zc_root: 3,
            tx_power_dbm: 17.0,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            bandwidth_hz: 200_000.0,
            ref_distance_m: 1.0,
            ref_loss_db: 30.0,
            pathloss_exponent: 3.8,
            shadow_sigma_db: 8.0,
            t_max: 4,
            q_samples: 100_000,
            normalizer: NormalizerKind::DbStandardize,
            normalizer_floor_db: -250.0,
            hidden_layers: Vec::new(),
            max_epochs: 1000,
            min_gradient: 1e-6,
            max_val_checks: 8,
            scg_sigma: 1e-4,
            scg_lambda_init: 1e-6,
            train_frac: 0.8,
            val_frac: 0.1,
            test_frac: 0.1,
            trials: 10_000,
            mc_list: vec![1, 4, 16],
            schemes: Scheme::ALL.iter().map(|s| s.as_str().to_string()).collect(),
            kmeans_restarts: 10,
            sinr_cap: 1e12,
            genie_gain: GenieGain::LargeScale,
            cluster_match: ClusterMatch::Centroid,
            asym_grid_sizes: vec![25, 100, 400],
            asym_fading_draws: 1000,
            asym_positions: vec![250.0, 250.0, 750.0, 750.0],
            seed: 1,
            out_dir: "out".to_string(),
        }
    }
}

impl ExperimentConfig {
    /// Parse a TOML document; missing keys take defaults, unknown keys are
    /// config errors.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Every key written out explicitly, in struct order. Two configs that
    /// behave identically serialize identically.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialization, recorded in run
    /// manifests so results can be traced to an exact configuration.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_canonical_toml().as_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        if self.mc_list.is_empty() || self.mc_list.contains(&0) {
            return Err(Error::Config("mc_list entries must be positive".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("schemes must not be empty".into()));
        }
        for s in &self.schemes {
            Scheme::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.asym_positions.len() % 2 != 0 || self.asym_positions.is_empty() {
            return Err(Error::Config(
                "asym_positions needs at least one x,y pair".into(),
            ));
        }
        if self.asym_fading_draws == 0 {
            return Err(Error::Config("asym_fading_draws must be positive".into()));
        }
        for &m in &self.asym_grid_sizes {
            let r = (m as f64).sqrt().round() as usize;
            if r * r != m {
                return Err(Error::Config(format!(
                    "asym_grid_sizes entries must be perfect squares, got {m}"
                )));
            }
        }
        if !(self.sinr_cap > 0.0) {
            return Err(Error::Config("sinr_cap must be positive".into()));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::Config("kmeans_restarts must be positive".into()));
        }
        // Constructor checks below surface bad geometry/radio values early,
        // with config-error categories.
        self.deployment().map_err(reclass)?;
        self.traffic().map_err(reclass)?;
        self.pathloss().map_err(reclass)?;
        self.radio()?;
        crate::airlink::PreamblePool::<f64>::new(self.preamble_pool_size, self.zc_root)
            .map_err(reclass)?;
        Ok(())
    }

    pub fn deployment(&self) -> Result<Deployment<f64>> {
        let area = AreaSpec::new(self.area_side_m)?;
        Deployment::grid(self.ap_rows, self.ap_cols, area, self.antennas_per_ap)
    }

    pub fn traffic(&self) -> Result<TrafficSpec<f64>> {
        TrafficSpec::new(self.num_ues, self.activation_prob, self.preamble_pool_size)
    }

    pub fn pathloss(&self) -> Result<PathLossParams<f64>> {
        PathLossParams::new(
            self.ref_distance_m,
            self.ref_loss_db,
            self.pathloss_exponent,
            self.shadow_sigma_db,
        )
    }

    pub fn radio(&self) -> Result<RadioParams<f64>> {
        RadioParams::new(
            self.tx_power_dbm,
            self.noise_psd_dbm_hz,
            self.bandwidth_hz,
            self.noise_figure_db,
        )
    }

    pub fn pool(&self) -> Result<crate::airlink::PreamblePool<f64>> {
        crate::airlink::PreamblePool::new(self.preamble_pool_size, self.zc_root)
    }

    /// Hidden layer widths after applying the auto rule.
    pub fn hidden(&self) -> Vec<usize> {
        if !self.hidden_layers.is_empty() {
            return self.hidden_layers.clone();
        }
        if self.ap_rows * self.ap_cols >= 100 {
            vec![128, 128, 64, 32]
        } else {
            vec![64, 128, 64, 32]
        }
    }

    pub fn train_config(&self) -> TrainConfig<f64> {
        TrainConfig {
            max_epochs: self.max_epochs,
            min_gradient: self.min_gradient,
            max_val_checks: self.max_val_checks,
            scg_sigma: self.scg_sigma,
            scg_lambda_init: self.scg_lambda_init,
            train_frac: self.train_frac,
            val_frac: self.val_frac,
            test_frac: self.test_frac,
        }
    }

    pub fn scheme_list(&self) -> Result<Vec<Scheme>> {
        self.schemes.iter().map(|s| Scheme::from_str(s)).collect()
    }

    /// The fixed co-preamble geometry of the asymptotic check; the first
    /// point is the target device.
    pub fn asym_points(&self) -> Vec<Point2<f64>> {
        self.asym_positions
            .chunks_exact(2)
            .map(|p| Point2::new(p[0], p[1]))
            .collect()
    }
}

/// Invalid-argument errors raised while validating a config file are
/// config errors from the caller's point of view.
fn reclass(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_reference_setup() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.ap_rows * cfg.ap_cols, 100);
        assert_eq!(cfg.antennas_per_ap, 2);
        assert_eq!(cfg.num_ues, 2000);
        assert_eq!(cfg.activation_prob, 0.01);
        assert_eq!(cfg.preamble_pool_size, 20);
        assert_eq!(cfg.tx_power_dbm, 17.0);
        assert_eq!(cfg.ref_loss_db, 30.0);
        assert_eq!(cfg.pathloss_exponent, 3.8);
        assert_eq!(cfg.shadow_sigma_db, 8.0);
        assert_eq!(cfg.hidden(), vec![128, 128, 64, 32]);
    }

    #[test]
    fn partial_file_overrides_only_named_keys() {
        let cfg = ExperimentConfig::from_toml_str("shadow_sigma_db = 0.0\nseed = 42\n").unwrap();
        assert_eq!(cfg.shadow_sigma_db, 0.0);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.num_ues, 2000);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = ExperimentConfig::from_toml_str("shadow_sgima_db = 0.0\n").unwrap_err();
        assert_eq!(err.category(), "config-error");
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in [
            "t_max = 0\n",
            "mc_list = []\n",
            "mc_list = [0]\n",
            "schemes = [\"bogus\"]\n",
            "asym_grid_sizes = [30]\n",
            "asym_positions = [1.0]\n",
            "asym_positions = []\n",
            "asym_fading_draws = 0\n",
            "area_side_m = -5.0\n",
            "zc_root = 5\n",
            "pathloss_exponent = 0.5\n",
        ] {
            let err = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert_eq!(err.category(), "config-error", "text: {text}");
        }
    }

    #[test]
    fn canonical_toml_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.shadow_sigma_db = 0.0;
        cfg.hidden_layers = vec![8, 8];
        cfg.normalizer = NormalizerKind::MinMax;
        cfg.genie_gain = GenieGain::Instantaneous;
        let text = cfg.to_canonical_toml();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn hash_tracks_content_not_formatting() {
        let a = ExperimentConfig::from_toml_str("seed = 7\n").unwrap();
        let b = ExperimentConfig::from_toml_str("# comment\nseed    =    7\n").unwrap();
        let c = ExperimentConfig::from_toml_str("seed = 8\n").unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn auto_architecture_follows_ap_count() {
        let mut cfg = ExperimentConfig::default();
        cfg.ap_rows = 7;
        cfg.ap_cols = 7;
        assert_eq!(cfg.hidden(), vec![64, 128, 64, 32]);
        cfg.hidden_layers = vec![16];
        assert_eq!(cfg.hidden(), vec![16]);
    }

    #[test]
    fn asym_points_pair_up() {
        let cfg = ExperimentConfig::default();
        let pts = cfg.asym_points();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].x, 250.0);
        assert_eq!(pts[1].y, 750.0);
    }
}

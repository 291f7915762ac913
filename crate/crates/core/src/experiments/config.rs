use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dos::{DosBackend, DosMethod};
use crate::error::{Error, Result};
use crate::hamiltonian::PotentialSpec;
use crate::lattice::MesoWindow;

/// Everything that determines the numbers an experiment produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub window: MesoWindow,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub dos: DosConfig,
    #[serde(default)]
    pub tests: TestConfig,
    #[serde(default)]
    pub box_variation: BoxVariation,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub localization: LocalizationConfig,
    #[serde(default)]
    pub minami: MinamiConfig,
    #[serde(default)]
    pub green: GreenConfig,
    #[serde(default)]
    pub synthetic_null: SyntheticConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "defaults::dimension")]
    pub dimension: usize,
    pub potential: PotentialSpec,
    #[serde(default = "defaults::one")]
    pub hopping: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub half_widths: Vec<u64>,
    /// Realizations per `L`.
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DosConfig {
    #[serde(default = "defaults::dos_realizations")]
    pub n_realizations: usize,
    /// Box for the estimate; defaults to the largest `L` of the schedule.
    #[serde(default)]
    pub half_width: Option<u64>,
    /// Bin centred on `E`. Without it the bin is the window `I_L` itself at
    /// the DOS box, so `λ̂` sees the same curvature as the counts it centres.
    #[serde(default)]
    pub bin_width: Option<f64>,
    #[serde(default)]
    pub backend: DosBackend,
    /// Used by the `dos` command only.
    #[serde(default = "defaults::dos_method")]
    pub method: DosMethod,
    /// Stieltjes broadening; defaults to ten bin widths.
    #[serde(default)]
    pub im_z: Option<f64>,
}

impl Default for DosConfig {
    fn default() -> Self {
        Self {
            n_realizations: defaults::dos_realizations(),
            half_width: None,
            bin_width: None,
            backend: DosBackend::Auto,
            method: DosMethod::Histogram,
            im_z: None,
        }
    }
}

/// Pass/fail thresholds fed to the reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestConfig {
    pub tv_threshold: f64,
    /// Defaults to `1.358/√n`.
    pub ks_threshold: Option<f64>,
    pub mean_sigmas: f64,
    pub skew_sigmas: f64,
    pub deviation_delta: f64,
    pub deviation_max: f64,
    pub discrepancy_ratio: f64,
    pub minami_ratio: [f64; 2],
    pub min_r2: f64,
    pub lindeberg_eps: f64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            tv_threshold: 0.05,
            ks_threshold: None,
            mean_sigmas: 3.0,
            skew_sigmas: 3.0,
            deviation_delta: 0.2,
            deviation_max: 0.1,
            discrepancy_ratio: 0.5,
            minami_ratio: [2.5, 6.0],
            min_r2: 0.95,
            lindeberg_eps: 0.5,
        }
    }
}

/// Random offsets `a_L ∈ [0,1)^d` and trims `c_L = trim_scale·u/√L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoxVariation {
    pub randomize_offset: bool,
    pub trim_scale: f64,
}

impl Default for BoxVariation {
    fn default() -> Self {
        Self {
            randomize_offset: true,
            trim_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Also compare `Im tr G` at `z = E + i/|Λ|²`.
    pub trace: bool,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            beta: 0.5,
            trace: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizationConfig {
    pub s_values: Vec<f64>,
    pub im_z: f64,
    pub distances: Vec<usize>,
    pub samples: usize,
    pub half_width: u64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            s_values: vec![0.5],
            im_z: 1e-3,
            distances: (2..=12).collect(),
            samples: 10_000,
            half_width: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinamiConfig {
    pub halvings: usize,
    /// Defaults to the largest `L` of the schedule.
    pub half_width: Option<u64>,
}

impl Default for MinamiConfig {
    fn default() -> Self {
        Self {
            halvings: 2,
            half_width: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreenConfig {
    pub inner_half_width: u64,
    pub outer_half_width: u64,
    pub distances: Vec<usize>,
    pub samples: usize,
    pub im_z: f64,
}

impl Default for GreenConfig {
    fn default() -> Self {
        Self {
            inner_half_width: 10,
            outer_half_width: 20,
            distances: (1..=8).collect(),
            samples: 10_000,
            im_z: 1e-2,
        }
    }
}

/// Replace spectral counts by Poisson draws with the target intensity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub enabled: bool,
}

mod defaults {
    pub fn dimension() -> usize {
        1
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn dos_realizations() -> usize {
        20_000
    }
    pub fn dos_method() -> crate::dos::DosMethod {
        crate::dos::DosMethod::Histogram
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| config_err(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| config_err(e.to_string()))
    }

    /// TOML unless the extension says `.json`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let cfg = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)?
        } else {
            Self::from_toml_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn largest_half_width(&self) -> u64 {
        self.schedule.half_widths.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.dimension == 0 {
            return Err(config_err("model.dimension must be at least 1"));
        }
        if !self.model.hopping.is_finite() {
            return Err(config_err("model.hopping must be finite"));
        }
        self.model.potential.validate()?;
        self.window.validate()?;
        let hw = &self.schedule.half_widths;
        if hw.is_empty() {
            return Err(config_err("schedule.half_widths must not be empty"));
        }
        if hw[0] == 0 || hw.windows(2).any(|p| p[0] >= p[1]) {
            return Err(config_err("schedule.half_widths must be positive and strictly increasing"));
        }
        if self.schedule.n < 2 {
            return Err(config_err("schedule.n must be at least 2"));
        }
        if self.dos.n_realizations < 2 {
            return Err(config_err("dos.n_realizations must be at least 2"));
        }
        for (name, v) in [("dos.bin_width", self.dos.bin_width), ("dos.im_z", self.dos.im_z)] {
            if v.is_some_and(|w| !(w > 0.0)) {
                return Err(config_err(format!("{name} must be positive")));
            }
        }
        let t = &self.tests;
        let tolerances = [
            ("tests.tv_threshold", t.tv_threshold),
            ("tests.ks_threshold", t.ks_threshold.unwrap_or(0.0)),
            ("tests.mean_sigmas", t.mean_sigmas),
            ("tests.skew_sigmas", t.skew_sigmas),
            ("tests.deviation_delta", t.deviation_delta),
            ("tests.deviation_max", t.deviation_max),
            ("tests.discrepancy_ratio", t.discrepancy_ratio),
            ("tests.minami_ratio", t.minami_ratio[0]),
            ("tests.min_r2", t.min_r2),
            ("tests.lindeberg_eps", t.lindeberg_eps),
        ];
        for (name, v) in tolerances {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(config_err(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        if t.minami_ratio[0] > t.minami_ratio[1] {
            return Err(config_err("tests.minami_ratio must be [low, high] with low ≤ high"));
        }
        if !(self.box_variation.trim_scale >= 0.0) {
            return Err(config_err("box_variation.trim_scale must be non-negative"));
        }
        Ok(())
    }

    /// SHA-256 over the experiment name and the canonical JSON of the config.
    pub fn hash(&self, experiment: &str) -> String {
        let mut h = Sha256::new();
        h.update(experiment.as_bytes());
        h.update([0u8]);
        h.update(serde_json::to_vec(self).expect("config serializes"));
        hex::encode(h.finalize())
    }
}

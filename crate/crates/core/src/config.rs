//! Run configuration, read from a TOML file.
//!
//! ```toml
//! seed = 2024
//!
//! [scenario]
//! area_side = 400.0        # meters
//! ap_grid = 4              # APs per side of the square grid
//! num_uts = 8
//! antennas = 2             # N
//! pilot_length = 6         # P
//! data_length = 10         # T
//! constellation = "4qam"   # "4qam" | "qpsk" | "16qam" | "64qam"
//! noise_dbm = -96.0
//! realizations = 100
//! redraw_positions = true  # new UT drop per realization
//! # link_distance = 133.3 # AP link radius, defaults to the grid spacing
//!
//! [algorithm]
//! mode = "simplified"      # "simplified" | "exact"
//! max_iterations = 20
//! tolerance = 1e-6
//! damping = 1.0            # 1.0 = undamped
//! precision_floor = 1e-8   # relative to sigma_x^2 / sigma_v^2
//! schedule = "sequential"  # "sequential" | "parallel"
//! graph = "grid"           # "grid" | "tree"
//!
//! [sweep]
//! tx_power_dbm = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]
//!
//! [output]
//! csv = "results.csv"
//! plot = "fig.svg"
//! message_trace = "messages.jsonl"
//! envelope_trace = "envelopes.jsonl"
//! ```
//!
//! Every table and key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Constellation, DEFAULT_PRECISION_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub algorithm: AlgorithmConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            scenario: ScenarioConfig::default(),
            algorithm: AlgorithmConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub area_side: f64,
    pub ap_grid: usize,
    pub num_uts: usize,
    pub antennas: usize,
    pub pilot_length: usize,
    pub data_length: usize,
    pub constellation: String,
    pub noise_dbm: f64,
    pub realizations: usize,
    pub redraw_positions: bool,
    pub link_distance: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_side: 400.0,
            ap_grid: 4,
            num_uts: 8,
            antennas: 2,
            pilot_length: 6,
            data_length: 10,
            constellation: "4qam".into(),
            noise_dbm: -96.0,
            realizations: 100,
            redraw_positions: true,
            link_distance: None,
        }
    }
}

impl ScenarioConfig {
    pub fn num_aps(&self) -> usize {
        self.ap_grid * self.ap_grid
    }

    /// AP link radius: explicit value or the grid spacing.
    pub fn link_distance(&self) -> f64 {
        self.link_distance.unwrap_or(if self.ap_grid > 1 {
            self.area_side / (self.ap_grid - 1) as f64
        } else {
            0.0
        })
    }

    /// The constellation scaled to average power `power`.
    pub fn constellation(&self, power: f64) -> Result<Constellation> {
        let order = match self.constellation.to_ascii_lowercase().as_str() {
            "4qam" | "qpsk" => 4,
            "16qam" => 16,
            "64qam" => 64,
            other => {
                return Err(Error::Config(format!("unknown constellation '{other}'")));
            }
        };
        Constellation::square_qam(order, power)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    /// Leave-one-out extrinsics.
    Exact,
    /// Full beliefs used in place of extrinsics.
    Simplified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// APs update one after another within an iteration.
    Sequential,
    /// All APs update from the previous iteration's envelopes.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Grid,
    /// BFS spanning tree of the grid graph rooted at AP 0.
    Tree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmConfig {
    pub mode: UpdateMode,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub damping: f64,
    pub precision_floor: f64,
    pub schedule: Schedule,
    pub graph: GraphKind,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            mode: UpdateMode::Simplified,
            max_iterations: 20,
            tolerance: 1e-6,
            damping: 1.0,
            precision_floor: DEFAULT_PRECISION_FLOOR,
            schedule: Schedule::Sequential,
            graph: GraphKind::Grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub tx_power_dbm: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            tx_power_dbm: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub message_trace: Option<PathBuf>,
    pub envelope_trace: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        let a = &self.algorithm;
        let bad = |msg: String| Err(Error::Config(msg));
        if !(s.area_side > 0.0) {
            return bad(format!("scenario.area_side must be positive, got {}", s.area_side));
        }
        if s.ap_grid == 0 || s.num_uts == 0 || s.antennas == 0 {
            return bad("scenario.ap_grid, num_uts and antennas must be at least 1".into());
        }
        if s.pilot_length == 0 || s.data_length == 0 {
            return bad("scenario.pilot_length and data_length must be at least 1".into());
        }
        if s.realizations == 0 {
            return bad("scenario.realizations must be at least 1".into());
        }
        if !s.noise_dbm.is_finite() {
            return bad("scenario.noise_dbm must be finite".into());
        }
        if let Some(d) = s.link_distance {
            if !(d >= 0.0) {
                return bad(format!("scenario.link_distance must be nonnegative, got {d}"));
            }
        }
        s.constellation(1.0)?;
        if a.max_iterations == 0 {
            return bad("algorithm.max_iterations must be at least 1".into());
        }
        if !(a.damping > 0.0 && a.damping <= 1.0) {
            return bad(format!("algorithm.damping must lie in (0, 1], got {}", a.damping));
        }
        if !(a.precision_floor > 0.0) {
            return bad("algorithm.precision_floor must be positive".into());
        }
        if !(a.tolerance >= 0.0) {
            return bad("algorithm.tolerance must be nonnegative".into());
        }
        if self.sweep.tx_power_dbm.is_empty() {
            return bad("sweep.tx_power_dbm must not be empty".into());
        }
        if self.sweep.tx_power_dbm.iter().any(|p| !p.is_finite()) {
            return bad("sweep.tx_power_dbm entries must be finite".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::from_toml_str("[scenario]\nfoo = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(RunConfig::from_toml_str("bar = 2\n").is_err());
    }

    #[test]
    fn parses_full_block() {
        let cfg = RunConfig::from_toml_str(
            r#"
seed = 7
[scenario]
num_uts = 4
pilot_length = 2
constellation = "16qam"
[algorithm]
mode = "exact"
graph = "tree"
damping = 0.5
[sweep]
tx_power_dbm = [0.0, 10.0]
[output]
csv = "out.csv"
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.scenario.num_uts, 4);
        assert_eq!(cfg.algorithm.mode, UpdateMode::Exact);
        assert_eq!(cfg.algorithm.graph, GraphKind::Tree);
        assert_eq!(cfg.sweep.tx_power_dbm, vec![0.0, 10.0]);
        assert_eq!(cfg.output.csv, Some(PathBuf::from("out.csv")));
        assert_eq!(cfg.scenario.antennas, 2);
    }

    #[test]
    fn validation_errors() {
        for text in [
            "[algorithm]\ndamping = 0.0",
            "[algorithm]\ndamping = 1.5",
            "[scenario]\nconstellation = \"8psk\"",
            "[scenario]\nrealizations = 0",
            "[sweep]\ntx_power_dbm = []",
            "[algorithm]\nmode = \"fast\"",
        ] {
            assert!(RunConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn default_link_distance_is_grid_spacing() {
        let s = ScenarioConfig::default();
        assert!((s.link_distance() - 400.0 / 3.0).abs() < 1e-12);
    }
}

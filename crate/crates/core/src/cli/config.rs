//! Declarative run configuration (TOML) with command-line overrides.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::DatasetLayout;
use crate::error::{Error, Result};
use crate::protocol::{ProtocolKind, Scenario, SyncMode};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraitSelection {
    #[serde(rename = "iris")]
    Iris,
    #[serde(rename = "perioc")]
    Periocular,
    #[serde(rename = "fusion")]
    Fusion,
}

impl fmt::Display for TraitSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraitSelection::Iris => "iris",
            TraitSelection::Periocular => "perioc",
            TraitSelection::Fusion => "fusion",
        })
    }
}

impl FromStr for TraitSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "iris" => Ok(TraitSelection::Iris),
            "perioc" | "periocular" => Ok(TraitSelection::Periocular),
            "fusion" => Ok(TraitSelection::Fusion),
            other => Err(format!(
                "unknown trait '{other}' (expected iris, perioc or fusion)"
            )),
        }
    }
}

/// Embedding files of one trial. Each list is merged into one set, so NIR
/// and VIS may live in separate files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialFiles {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iris: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub periocular: Vec<PathBuf>,
}

fn default_database() -> String {
    "custom".to_string()
}
fn default_protocol() -> ProtocolKind {
    ProtocolKind::ClosedWorld
}
fn default_scenario() -> Scenario {
    Scenario::CrossSpectral
}
fn default_sync() -> SyncMode {
    SyncMode::Synchronous
}
fn default_trait() -> TraitSelection {
    TraitSelection::Fusion
}
fn default_wp() -> f64 {
    0.6
}
fn default_sweep_step() -> f64 {
    crate::fusion::DEFAULT_SWEEP_STEP
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_database")]
    pub database: String,
    #[serde(default = "default_protocol")]
    pub protocol: ProtocolKind,
    #[serde(default = "default_scenario")]
    pub scenario: Scenario,
    #[serde(default = "default_sync")]
    pub sync: SyncMode,
    #[serde(default = "default_trait", rename = "trait")]
    pub trait_selection: TraitSelection,
    /// Periocular weight in trait fusion.
    #[serde(default = "default_wp")]
    pub wp: f64,
    #[serde(default)]
    pub spectral_fusion: bool,
    /// NIR weight in spectral fusion; defaults from the database label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nir_weight: Option<f64>,
    /// Closed-world training samples per class; defaults from the database label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_samples: Option<u32>,
    #[serde(default = "default_sweep_step")]
    pub sweep_step: f64,
    /// Worker threads, 0 = hardware parallelism.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub export_scores: bool,
    #[serde(default)]
    pub trials: Vec<TrialFiles>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            database: default_database(),
            protocol: default_protocol(),
            scenario: default_scenario(),
            sync: default_sync(),
            trait_selection: default_trait(),
            wp: default_wp(),
            spectral_fusion: false,
            nir_weight: None,
            train_samples: None,
            sweep_step: default_sweep_step(),
            threads: 0,
            out: default_out(),
            export_scores: false,
            trials: Vec::new(),
        }
    }
}

/// Normalized database label: `polyu`, `cross-eyed` or the label as given.
pub fn database_key(label: &str) -> String {
    let l = label.to_ascii_lowercase().replace(['_', ' '], "-");
    match l.as_str() {
        "polyu" | "polyu-bi-spectral" => "polyu".to_string(),
        "cross-eyed" | "crosseyed" => "cross-eyed".to_string(),
        _ => l,
    }
}

/// Parses `polyu`, `cross-eyed` or `CLASSESxSAMPLES[xSPECTRA]`.
pub fn parse_layout(s: &str) -> Result<DatasetLayout> {
    match database_key(s).as_str() {
        "polyu" => return Ok(DatasetLayout::polyu()),
        "cross-eyed" => return Ok(DatasetLayout::cross_eyed()),
        _ => {}
    }
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("invalid layout '{s}' (polyu, cross-eyed or CxM[x2])")))?;
    use crate::embedding::Spectrum;
    match parts.as_slice() {
        [c, m] | [c, m, 2] => Ok(DatasetLayout::new(*c, *m, &Spectrum::ALL)),
        [c, m, 1] => Ok(DatasetLayout::new(*c, *m, &[Spectrum::Nir])),
        _ => Err(Error::Config(format!(
            "invalid layout '{s}' (polyu, cross-eyed or CxM[x2])"
        ))),
    }
}

/// Closed-world training samples used for a database when none is given.
pub fn default_train_samples(database: &str, samples_per_class: usize) -> u32 {
    match database_key(database).as_str() {
        "polyu" => 10,
        "cross-eyed" => 5,
        _ => (samples_per_class as u32 / 2).max(1),
    }
}

impl RunConfig {
    /// Reads a TOML config; relative trial paths resolve against the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for trial in &mut cfg.trials {
            for p in trial.iris.iter_mut().chain(trial.periocular.iter_mut()) {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn nir_weight(&self) -> f64 {
        self.nir_weight
            .unwrap_or(match database_key(&self.database).as_str() {
                "cross-eyed" => 0.4,
                _ => 0.6,
            })
    }

    pub fn train_samples(&self, samples_per_class: usize) -> u32 {
        self.train_samples
            .unwrap_or_else(|| default_train_samples(&self.database, samples_per_class))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("wp", self.wp), ("nir_weight", self.nir_weight())] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {w}")));
            }
        }
        if self.spectral_fusion && self.scenario.is_cross() {
            return Err(Error::Config(
                "spectral fusion combines the two intra-spectral scenarios; use --scenario nir or vis"
                    .to_string(),
            ));
        }
        if self.trials.is_empty() {
            return Err(Error::Config("trial list is empty".to_string()));
        }
        for (k, t) in self.trials.iter().enumerate() {
            let need_iris = self.trait_selection != TraitSelection::Periocular;
            let need_perioc = self.trait_selection != TraitSelection::Iris;
            if (need_iris && t.iris.is_empty()) || (need_perioc && t.periocular.is_empty()) {
                return Err(Error::Config(format!(
                    "trial {k} lacks embedding files for trait '{}'",
                    self.trait_selection
                )));
            }
        }
        Ok(())
    }
}

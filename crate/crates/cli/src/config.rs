//! Run configuration: TOML file plus command-line overrides.
//!
//! ```toml
//! sigma_v = 3.0          # noise std, m
//! bias_b = 1.0e5         # receiver clock bias, m
//! bias_inflation = 0.0   # artificial extra bias, m
//! seed = 1               # Monte Carlo master seed
//! n_trials = 10000
//! p_fa = 0.01
//! ordering = "magnitude" # or "algebraic"
//! out = "out"
//!
//! # scenario: one of `scenario_file`, inline `receiver` + `satellites`,
//! # or a generated `[constellation]` (the default)
//! [constellation]
//! n_sats = 12
//! elevation_mask_deg = 10.0
//! orbit_radius = 2.656e7
//! seed = 1
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use edm_raim::geometry::{generate_constellation, ConstellationParams, GeometryError, NoiseModel, ScenarioGeometry};
use edm_raim::perturbation::PredictionConfig;
use edm_raim::EigenOrdering;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_TRIALS: u64 = 10_000;
pub const DEFAULT_PFA: f64 = 0.01;
pub const DEFAULT_FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub sigma_v: f64,
    pub bias_b: f64,
    pub bias_inflation: f64,
    pub seed: u64,
    pub n_trials: u64,
    pub p_fa: f64,
    pub ordering: EigenOrdering,
    /// Step for the finite-difference audit, m.
    pub fd_step: f64,
    pub track_all: bool,
    /// Output directory. Left out of provenance headers so that runs
    /// differing only in destination produce identical files.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub receiver: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub satellites: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constellation: Option<ConstellationParams>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let nm = NoiseModel::default();
        Self {
            sigma_v: nm.sigma_v,
            bias_b: nm.bias_b,
            bias_inflation: nm.bias_inflation,
            seed: 1,
            n_trials: DEFAULT_TRIALS,
            p_fa: DEFAULT_PFA,
            ordering: EigenOrdering::default(),
            fd_step: DEFAULT_FD_STEP,
            track_all: false,
            out: PathBuf::from("out"),
            scenario_file: None,
            receiver: None,
            satellites: None,
            constellation: None,
        }
    }
}

/// Explicit scenario stored in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub receiver: [f64; 3],
    pub satellites: Vec<[f64; 3]>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub n_trials: Option<u64>,
    pub seed: Option<u64>,
    pub sigma_v: Option<f64>,
    pub bias_b: Option<f64>,
    pub bias_inflation: Option<f64>,
    pub p_fa: Option<f64>,
    pub ordering: Option<EigenOrdering>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file. A relative `scenario_file` is taken relative to
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let (Some(f), Some(dir)) = (cfg.scenario_file.as_mut(), path.parent()) {
            if f.is_relative() {
                *f = dir.join(&*f);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:ident <- $src:ident),*) => {
                $(if let Some(v) = o.$src.clone() { self.$field = v; })*
            };
        }
        set!(n_trials <- n_trials, seed <- seed, sigma_v <- sigma_v, bias_b <- bias_b,
             bias_inflation <- bias_inflation, p_fa <- p_fa, ordering <- ordering, out <- out);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_trials == 0 {
            return Err(CliError::Config("n_trials must be at least 1".into()));
        }
        if !(self.p_fa > 0.0 && self.p_fa < 0.5) {
            return Err(CliError::Config(format!("p_fa {} outside (0, 0.5)", self.p_fa)));
        }
        if !(self.fd_step > 0.0) {
            return Err(CliError::Config(format!("fd_step {} must be positive", self.fd_step)));
        }
        self.noise_model()?;
        let sources = [
            self.scenario_file.is_some(),
            self.receiver.is_some() || self.satellites.is_some(),
            self.constellation.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() > 1 {
            return Err(CliError::Config(
                "give only one of scenario_file, receiver/satellites, [constellation]".into(),
            ));
        }
        if self.receiver.is_some() != self.satellites.is_some() {
            return Err(CliError::Config("receiver and satellites must be given together".into()));
        }
        if let Some(f) = &self.scenario_file {
            if !f.is_file() {
                return Err(CliError::Config(format!("scenario file {} not found", f.display())));
            }
        }
        Ok(())
    }

    pub fn noise_model(&self) -> Result<NoiseModel, CliError> {
        NoiseModel::new(self.sigma_v, self.bias_b, self.bias_inflation).map_err(geometry_error)
    }

    pub fn prediction_config(&self) -> PredictionConfig {
        PredictionConfig {
            ordering: self.ordering,
            track_all: self.track_all,
        }
    }

    pub fn geometry(&self) -> Result<ScenarioGeometry, CliError> {
        let explicit = |receiver: &[f64; 3], sats: &[[f64; 3]]| {
            ScenarioGeometry::new(
                Vector3::from(*receiver),
                sats.iter().map(|s| Vector3::from(*s)).collect(),
            )
            .map_err(geometry_error)
        };
        if let Some(path) = &self.scenario_file {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let file: ScenarioFile =
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            return explicit(&file.receiver, &file.satellites);
        }
        if let (Some(r), Some(s)) = (&self.receiver, &self.satellites) {
            return explicit(r, s);
        }
        generate_constellation(&self.constellation.unwrap_or_default()).map_err(geometry_error)
    }

    /// Resolved config as TOML, for provenance headers.
    pub fn provenance(&self) -> String {
        let mut resolved = self.clone();
        if resolved.scenario_file.is_none() && resolved.receiver.is_none() {
            resolved.constellation.get_or_insert_with(ConstellationParams::default);
        }
        toml::to_string(&resolved).expect("config serializes")
    }
}

fn geometry_error(e: GeometryError) -> CliError {
    CliError::Config(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("sigma = 3.0"), Err(CliError::Config(_))));
    }

    #[test]
    fn flags_override_file() {
        let mut cfg = RunConfig::from_toml("sigma_v = 2.0\nseed = 4\nordering = \"algebraic\"").unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            out: Some("x".into()),
            ..Default::default()
        });
        assert_eq!(cfg.sigma_v, 2.0);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.ordering, EigenOrdering::Algebraic);
        assert_eq!(cfg.out, PathBuf::from("x"));
    }

    #[test]
    fn validation() {
        let bad = |t: &str| RunConfig::from_toml(t).unwrap().validate().is_err();
        assert!(bad("n_trials = 0"));
        assert!(bad("p_fa = 0.5"));
        assert!(bad("sigma_v = 0.0"));
        assert!(bad("receiver = [0.0, 0.0, 0.0]"));
        assert!(bad("scenario_file = \"/nonexistent/scenario.toml\""));
        assert!(bad("receiver = [0.0, 0.0, 0.0]\nsatellites = []\n[constellation]\nn_sats = 5\nelevation_mask_deg = 10.0\norbit_radius = 2.656e7\nseed = 1"));
        assert!(!bad(""));
    }

    #[test]
    fn provenance_round_trips_without_out() {
        let mut cfg = RunConfig::default();
        cfg.out = "/tmp/somewhere".into();
        let text = cfg.provenance();
        assert!(!text.contains("somewhere"));
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back.constellation, Some(ConstellationParams::default()));
        assert_eq!(back.seed, cfg.seed);
    }
}

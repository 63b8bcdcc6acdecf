//! Run configuration document.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{DecoherenceSpec, EnsembleSpec};
use crate::echo::PumpModel;
use crate::error::{Error, Result};
use crate::levels::{FourLevelSystem, LevelScheme, LevelSchemeDoc};
use crate::pulses::{PulsePreset, PulseShape};
use crate::sequences::{InitPumps, NlpePulses};

/// The configuration shipped with the crate.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub zefoz_pair: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_ions: usize,
    pub optical_fwhm_hz: f64,
    pub spin_fwhm_hz: f64,
    pub ee_fwhm_hz: f64,
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default)]
    pub stratified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingsConfig {
    /// `t0..t4` of the plain storage sequence (s).
    pub nlpe: [f64; 5],
    /// `t0..t4` skeleton around which the decoupling block is inserted (s).
    pub nlpe_dd: [f64; 5],
    pub tau: f64,
    pub n_pulses: usize,
    pub delta: f64,
    pub readout_splitting: f64,
    #[serde(default)]
    pub clock_jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub d: f64,
    pub eta_control: f64,
    pub heating_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonConfig {
    pub mu_q: f64,
    pub eta: f64,
    /// Expected noise counts per detection window per trial.
    pub noise_per_window: f64,
    pub n_trials: u64,
    pub collection_efficiency: f64,
    /// Histogram bin width (s).
    pub bin_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub reps: [usize; 3],
    pub wide_bandwidth_hz: f64,
    pub narrow_bandwidth_hz: f64,
    pub pulse_duration: f64,
    pub rabi_hz: f64,
    /// Pump rate per unit branching ratio (1/s).
    pub pump_rate: f64,
    pub excited_lifetime: f64,
    pub class_step_hz: f64,
    pub probe_half_width_hz: f64,
}

impl InitConfig {
    pub fn pumps(&self) -> InitPumps {
        InitPumps {
            wide_bandwidth_hz: self.wide_bandwidth_hz,
            narrow_bandwidth_hz: self.narrow_bandwidth_hz,
            pulse_duration: self.pulse_duration,
            rabi_hz: self.rabi_hz,
        }
    }

    pub fn pump_model(&self) -> PumpModel {
        PumpModel {
            pump_rate: self.pump_rate,
            excited_lifetime: self.excited_lifetime,
            class_step_hz: self.class_step_hz,
            probe_half_width_hz: self.probe_half_width_hz,
        }
    }
}

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub levels: LevelSchemeDoc,
    pub protocol: ProtocolConfig,
    pub pulses: BTreeMap<String, PulsePreset>,
    pub ensemble: EnsembleConfig,
    pub decoherence: DecoherenceSpec,
    pub timings: TimingsConfig,
    pub budget: BudgetConfig,
    pub photon: PhotonConfig,
    pub init: InitConfig,
}

fn config_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Config(e.to_string())
}

impl Config {
    pub fn shipped() -> Config {
        Config::from_toml(DEFAULT_CONFIG).expect("shipped config is valid")
    }

    pub fn from_toml(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme()?;
        self.four_level()?;
        for name in ["pi43", "pi32", "rf_pi", "input"] {
            self.shape(name)?;
        }
        self.decoherence.validate()?;
        self.ensemble_spec(self.seed).validate()?;
        let b = &self.budget;
        if !(b.d >= 0.0 && (0.0..=1.0).contains(&b.eta_control) && b.heating_penalty > 0.0 && b.heating_penalty <= 1.0) {
            return Err(Error::Config(format!("invalid efficiency budget {b:?}")));
        }
        let p = &self.photon;
        if !(p.mu_q >= 0.0 && (0.0..=1.0).contains(&p.eta) && p.noise_per_window >= 0.0 && p.bin_width > 0.0) {
            return Err(Error::Config(format!("invalid photon settings {p:?}")));
        }
        let t = &self.timings;
        if !(t.tau > 0.0 && t.clock_jitter >= 0.0 && t.readout_splitting >= 0.0) {
            return Err(Error::Config(format!("invalid timings {t:?}")));
        }
        let i = &self.init;
        if !(i.pump_rate >= 0.0 && i.excited_lifetime > 0.0 && i.class_step_hz > 0.0 && i.probe_half_width_hz > 0.0) {
            return Err(Error::Config(format!("invalid initialization settings {i:?}")));
        }
        Ok(())
    }

    pub fn scheme(&self) -> Result<LevelScheme> {
        LevelScheme::from_doc(&self.levels).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn four_level(&self) -> Result<FourLevelSystem> {
        self.scheme()?.select_nlpe_levels(self.protocol.zefoz_pair)
    }

    pub fn preset(&self, name: &str) -> Result<&PulsePreset> {
        self.pulses
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown pulse preset '{name}'")))
    }

    pub fn shape(&self, name: &str) -> Result<PulseShape> {
        self.preset(name)?.to_shape().map_err(|e| Error::Config(format!("preset '{name}': {e}")))
    }

    pub fn nlpe_pulses(&self) -> Result<NlpePulses> {
        Ok(NlpePulses {
            input: self.shape("input")?,
            pi43: self.shape("pi43")?,
            pi32: self.shape("pi32")?,
        })
    }

    pub fn ensemble_spec(&self, seed: u64) -> EnsembleSpec {
        EnsembleSpec {
            n_ions: self.ensemble.n_ions,
            optical_fwhm: self.ensemble.optical_fwhm_hz,
            spin_fwhm: self.ensemble.spin_fwhm_hz,
            ee_fwhm: self.ensemble.ee_fwhm_hz,
            seed,
            antithetic: self.ensemble.antithetic,
            stratified: self.ensemble.stratified,
        }
    }

    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_config_parses() {
        let c = Config::shipped();
        assert_eq!(c.protocol.zefoz_pair, (3, 4));
        assert_eq!(c.levels.branching[0][0], 0.57);
        assert_eq!(c.pulses.len(), 4);
    }

    #[test]
    fn unknown_field_is_config_error() {
        let text = DEFAULT_CONFIG.replace("seed = ", "sede = ");
        let e = Config::from_toml(&text).unwrap_err();
        assert!(e.is_config());
    }

    #[test]
    fn bad_branching_is_config_error() {
        let text = DEFAULT_CONFIG.replace("[0.57, 0.18, 0.12", "[0.37, 0.18, 0.12");
        let e = Config::from_toml(&text).unwrap_err();
        assert!(e.is_config(), "{e}");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = Config::shipped();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}

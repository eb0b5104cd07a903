//! Campaign configuration file. Frequencies are in Hz; fields in tesla,
//! lengths in metres and times in seconds.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ionmag::bayes::PosteriorGrid;
use ionmag::physics::{angular_to_hz, hz_to_angular, Manifold, ManifoldSpec, PhysicsConstants};
use ionmag::protocols::AdaptiveSettings;
use ionmag::sim::{ContrastModel, CycleConfig, FieldModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    Hz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub units: Units,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Field model file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldModel>,
    #[serde(default)]
    pub constants: ConstantsConfig,
    /// Ion positions (m).
    pub positions: [f64; 2],
    /// S1/2 Zeeman splitting (Hz).
    #[serde(default = "default_splitting_s")]
    pub splitting_s_hz: f64,
    /// D5/2 splitting (Hz); defaults to the one set by the same field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splitting_d_hz: Option<f64>,
    #[serde(default)]
    pub cycle: CycleSettings,
    pub protocol: Protocol,
}

fn default_splitting_s() -> f64 {
    10.4e6
}

/// Physical constants with frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    pub g_s: f64,
    pub g_d: f64,
    /// μ_B / h in Hz/T.
    pub mu_b_over_h_hz_per_tesla: f64,
    pub tau_d: f64,
    pub rf_drive_hz: f64,
    pub resonance_tol: f64,
    pub denominator_tol: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        let c = PhysicsConstants::default();
        Self {
            g_s: c.g_s,
            g_d: c.g_d,
            mu_b_over_h_hz_per_tesla: angular_to_hz(c.mu_b_over_hbar),
            tau_d: c.tau_d,
            rf_drive_hz: angular_to_hz(c.omega_rf),
            resonance_tol: c.resonance_tol,
            denominator_tol: c.denominator_tol,
        }
    }
}

impl ConstantsConfig {
    pub fn to_constants(self) -> Result<PhysicsConstants> {
        let c = PhysicsConstants {
            g_s: self.g_s,
            g_d: self.g_d,
            mu_b_over_hbar: hz_to_angular(self.mu_b_over_h_hz_per_tesla),
            tau_d: self.tau_d,
            omega_rf: hz_to_angular(self.rf_drive_hz),
            resonance_tol: self.resonance_tol,
            denominator_tol: self.denominator_tol,
        };
        c.validate()?;
        Ok(c)
    }
}

/// Per-cycle settings shared by every protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CycleSettings {
    pub shots_xx: u32,
    pub shots_xy: u32,
    /// Dead time per repetition (s).
    pub overhead: f64,
    pub contrast: ContrastModel,
    /// Fixed φ0 (rad); drawn from the seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_offset: Option<f64>,
}

impl Default for CycleSettings {
    fn default() -> Self {
        Self {
            shots_xx: 50,
            shots_xy: 50,
            overhead: 0.3,
            contrast: ContrastModel::default(),
            phase_offset: None,
        }
    }
}

/// Uniform prior over Δω (Hz) and φ0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub omega_min_hz: f64,
    pub omega_max_hz: f64,
    pub n_omega: usize,
    pub n_phi0: usize,
}

impl PriorConfig {
    pub fn grid(&self) -> Result<PosteriorGrid> {
        Ok(PosteriorGrid::uniform_prior(
            (hz_to_angular(self.omega_min_hz), hz_to_angular(self.omega_max_hz)),
            self.n_omega,
            self.n_phi0,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// 0, step, 2 step, ... up to and including t_max (s).
    Linear { t_max: f64, step: f64 },
    /// Explicit interrogation times (s).
    Times(Vec<f64>),
}

impl Schedule {
    pub fn times(&self) -> Vec<f64> {
        match self {
            Schedule::Linear { t_max, step } => ionmag::protocols::incremental_schedule(*t_max, *step),
            Schedule::Times(times) => times.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Protocol {
    Incremental {
        manifold: Manifold,
        schedule: Schedule,
    },
    Adaptive {
        manifold: Manifold,
        prior: PriorConfig,
        #[serde(default)]
        settings: AdaptiveSettings,
    },
    /// `settings.n_cycles` counts S/D cycle pairs.
    Dual {
        prior_s: PriorConfig,
        prior_d: PriorConfig,
        #[serde(default)]
        settings: AdaptiveSettings,
    },
    UtilityProfile {
        manifold: Manifold,
        prior: PriorConfig,
        #[serde(default)]
        settings: AdaptiveSettings,
        /// Contrast assumed by the designer; `settings.default_contrast`
        /// when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        contrast: Option<f64>,
    },
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Incremental { .. } => "incremental",
            Protocol::Adaptive { .. } => "adaptive",
            Protocol::Dual { .. } => "dual",
            Protocol::UtilityProfile { .. } => "utility-profile",
        }
    }
}

impl CampaignConfig {
    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: CampaignConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(field_path) = &config.field_path {
            let base = path.parent().unwrap_or(Path::new("."));
            config.field_path = Some(base.join(field_path));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.field.is_some() && self.field_path.is_some() {
            bail!("give either `field` or `field_path`, not both");
        }
        let constants = self.constants.to_constants()?;
        for manifold in [Manifold::S, Manifold::D] {
            self.cycle_config(manifold, &constants)?.validate(&constants)?;
        }
        if let Some(field) = &self.field {
            field.validate()?;
        }
        match &self.protocol {
            Protocol::Incremental { .. } => {}
            Protocol::Adaptive { settings, .. } | Protocol::UtilityProfile { settings, .. } => settings.validate()?,
            Protocol::Dual { settings, .. } => settings.validate()?,
        }
        Ok(())
    }

    pub fn constants(&self) -> Result<PhysicsConstants> {
        self.constants.to_constants()
    }

    pub fn field(&self) -> Result<FieldModel> {
        match (&self.field, &self.field_path) {
            (Some(field), None) => Ok(field.clone()),
            (None, Some(path)) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading field {}", path.display()))?;
                FieldModel::from_json(&text).with_context(|| format!("parsing field {}", path.display()))
            }
            (None, None) => bail!("config has neither `field` nor `field_path`"),
            (Some(_), Some(_)) => bail!("give either `field` or `field_path`, not both"),
        }
    }

    pub fn manifold_spec(&self, manifold: Manifold, constants: &PhysicsConstants) -> Result<ManifoldSpec> {
        let nu_s = hz_to_angular(self.splitting_s_hz);
        Ok(match (manifold, self.splitting_d_hz) {
            (Manifold::S, _) => ManifoldSpec::s(constants, nu_s)?,
            (Manifold::D, Some(nu_d)) => ManifoldSpec::d(constants, hz_to_angular(nu_d))?,
            (Manifold::D, None) => ManifoldSpec::d_from_shared_field(constants, nu_s)?,
        })
    }

    pub fn cycle_config(&self, manifold: Manifold, constants: &PhysicsConstants) -> Result<CycleConfig> {
        let c = &self.cycle;
        Ok(CycleConfig {
            shots_xx: c.shots_xx,
            shots_xy: c.shots_xy,
            overhead: c.overhead,
            contrast: c.contrast,
            phase_offset: c.phase_offset,
            ..CycleConfig::new(self.positions, self.manifold_spec(manifold, constants)?)
        })
    }
}

//! Run configuration, loaded from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{DamageKind, DamageScenario, PanelConfig, CRACK_REFERENCE_MM, N_RIVETS};
use crate::pca::PcaLayout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Panel description; the built-in panel when absent. Relative paths
    /// resolve against the run config's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panel: Option<PathBuf>,
    #[serde(default)]
    pub scenarios: ScenarioGrid,
    #[serde(default)]
    pub signal: SignalParams,
    #[serde(default)]
    pub pca: PcaParams,
    #[serde(default = "NetworkParams::localization")]
    pub localize: NetworkParams,
    #[serde(default = "NetworkParams::severity")]
    pub severity: NetworkParams,
    #[serde(default)]
    pub checks: CheckParams,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 20_240_617,
            out_dir: default_out_dir(),
            panel: None,
            scenarios: ScenarioGrid::default(),
            signal: SignalParams::default(),
            pca: PcaParams::default(),
            localize: NetworkParams::localization(),
            severity: NetworkParams::severity(),
            checks: CheckParams::default(),
        }
    }
}

/// Damage cases to simulate. Every damaged entry is applied at each of the
/// 34 rivets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioGrid {
    pub crack_mm: Vec<f64>,
    pub hole_fraction: Vec<f64>,
    pub added_mass_kg: Vec<f64>,
    pub healthy_replicates: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        Self {
            crack_mm: (1..=10).map(|k| 2.25 * k as f64).collect(),
            hole_fraction: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            added_mass_kg: vec![0.01, 0.02, 0.03, 0.04, 0.05],
            healthy_replicates: 30,
            train_fraction: 0.70,
            val_fraction: 0.15,
        }
    }
}

impl ScenarioGrid {
    /// Cracks, hole expansions and added masses rivet by rivet, then the
    /// healthy replicates.
    pub fn scenarios(&self) -> Vec<DamageScenario> {
        let mut out = Vec::new();
        for (kind, levels) in [
            (DamageKind::Crack, &self.crack_mm),
            (DamageKind::HoleExpansion, &self.hole_fraction),
            (DamageKind::AddedMass, &self.added_mass_kg),
        ] {
            for rivet in 0..N_RIVETS {
                for &s in levels {
                    out.push(DamageScenario::single(kind, rivet, s));
                }
            }
        }
        out.extend((0..self.healthy_replicates).map(|_| DamageScenario::healthy()));
        out
    }

    pub fn levels(&self, kind: DamageKind) -> &[f64] {
        match kind {
            DamageKind::Crack => &self.crack_mm,
            DamageKind::HoleExpansion => &self.hole_fraction,
            DamageKind::AddedMass => &self.added_mass_kg,
            DamageKind::Healthy => &[],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        if !frac_ok(self.train_fraction)
            || !frac_ok(self.val_fraction)
            || self.train_fraction + self.val_fraction >= 1.0
        {
            return Err(Error::Config(format!(
                "split fractions {} + {} must leave a test share",
                self.train_fraction, self.val_fraction
            )));
        }
        for (kind, levels, ok) in [
            (DamageKind::Crack, &self.crack_mm, (|s: f64| s > 0.0 && s < CRACK_REFERENCE_MM) as fn(f64) -> bool),
            (DamageKind::HoleExpansion, &self.hole_fraction, |s: f64| s > 0.0 && s < 1.0),
            (DamageKind::AddedMass, &self.added_mass_kg, |s: f64| s > 0.0 && s.is_finite()),
        ] {
            if let Some(bad) = levels.iter().find(|&&s| !ok(s)) {
                return Err(Error::Config(format!("{kind} level {bad} out of range")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalParams {
    /// One-sided bins including DC; a power of two.
    pub n_bins: usize,
    pub f_max_hz: f64,
    /// `inf` disables measurement noise.
    pub snr_db: f64,
    pub n_records: usize,
    /// Standard deviation of the white-noise force.
    pub sigma: f64,
}

impl Default for SignalParams {
    fn default() -> Self {
        Self {
            n_bins: 2048,
            f_max_hz: 1000.0,
            snr_db: 20.0,
            n_records: 10,
            sigma: 1.0,
        }
    }
}

impl SignalParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 4 || !self.n_bins.is_power_of_two() {
            return Err(Error::Config(format!(
                "signal.n_bins must be a power of two >= 4, got {}",
                self.n_bins
            )));
        }
        if !(self.f_max_hz > 0.0) || !(self.sigma > 0.0) || self.n_records == 0 {
            return Err(Error::Config(
                "signal.f_max_hz, signal.sigma and signal.n_records must be positive".into(),
            ));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config("signal.snr_db must be a number or +inf".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaParams {
    pub accel_components: usize,
    pub strain_components: usize,
    pub layout: PcaLayout,
}

impl Default for PcaParams {
    fn default() -> Self {
        Self {
            accel_components: 7,
            strain_components: 4,
            layout: PcaLayout::PerChannel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkParams {
    pub hidden: Vec<usize>,
    pub alpha: f64,
    pub max_epochs: usize,
    #[serde(default)]
    pub target_mse: f64,
    /// Candidate weight-decay strengths, chosen on the validation split.
    pub lambda_grid: Vec<f64>,
    /// Independent initializations per candidate strength.
    pub restarts: usize,
    /// Decision threshold on localization scores.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.5
}

impl NetworkParams {
    pub fn localization() -> Self {
        Self {
            hidden: vec![30],
            alpha: 0.05,
            max_epochs: 300,
            target_mse: 0.0,
            lambda_grid: vec![1e-4, 1e-3, 1e-2],
            restarts: 2,
            threshold: 0.5,
        }
    }

    pub fn severity() -> Self {
        Self {
            hidden: vec![30],
            alpha: 0.01,
            max_epochs: 500,
            target_mse: 0.0,
            lambda_grid: vec![1e-4, 1e-3, 1e-2],
            restarts: 1,
            threshold: 0.5,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Config(format!("{name}.hidden has an empty layer")));
        }
        if !(self.alpha > 0.0) || self.max_epochs == 0 || self.restarts == 0 {
            return Err(Error::Config(format!(
                "{name}.alpha, {name}.max_epochs and {name}.restarts must be positive"
            )));
        }
        if self.lambda_grid.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::Config(format!("{name}.lambda_grid must be non-negative")));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("{name}.threshold must lie in [0, 1]")));
        }
        Ok(())
    }
}

/// Extra held-out probes run by `reproduce`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckParams {
    pub sweep_rivet: usize,
    pub sweep_crack_mm: Vec<f64>,
    pub example_rivet: usize,
    pub example_crack_mm: f64,
}

impl Default for CheckParams {
    fn default() -> Self {
        Self {
            sweep_rivet: 8,
            sweep_crack_mm: vec![3.0, 6.5, 10.0, 13.5, 17.0, 20.5],
            example_rivet: 1,
            example_crack_mm: 10.88,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file, resolving a relative panel path against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(p) = &cfg.panel {
            if p.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                cfg.panel = Some(base.join(p));
            }
        }
        if let Some(p) = &cfg.panel {
            if !p.is_file() {
                return Err(Error::Config(format!("panel config {} not found", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenarios.validate()?;
        self.signal.validate()?;
        if self.pca.accel_components == 0 || self.pca.strain_components == 0 {
            return Err(Error::Config("pca component counts must be positive".into()));
        }
        self.localize.validate("localize")?;
        self.severity.validate("severity")?;
        if self.checks.sweep_rivet >= N_RIVETS || self.checks.example_rivet >= N_RIVETS {
            return Err(Error::Config("check rivet index out of range".into()));
        }
        if self
            .checks
            .sweep_crack_mm
            .iter()
            .chain(std::iter::once(&self.checks.example_crack_mm))
            .any(|&s| !(s > 0.0 && s < CRACK_REFERENCE_MM))
        {
            return Err(Error::Config("check crack lengths out of range".into()));
        }
        Ok(())
    }

    pub fn panel_config(&self) -> Result<PanelConfig> {
        match &self.panel {
            Some(p) => PanelConfig::load(p),
            None => Ok(PanelConfig::default()),
        }
    }
}

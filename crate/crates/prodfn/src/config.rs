//! Run configuration: a JSON config file with flag overrides layered on top.
//!
//! Unknown keys are rejected, and a parsed configuration round-trips through
//! serialization losslessly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RentPolicy, ScenarioSpec, TechnologyParams, VisibilityMask};
use crate::montecarlo::{scenario_grid, StudyCell};
use crate::proposed::EstimatorOptions;
use crate::report::Method;

/// Scenario fields that a config file or flags may override.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioOverrides {
    /// "cd" or "ces".
    pub tech: Option<String>,
    /// "crs" or "drs".
    pub returns: Option<String>,
    pub productivity: Option<bool>,
    pub n_builders: Option<usize>,
    pub n_cities: Option<usize>,
    pub n_periods: Option<usize>,
    pub price_range: Option<(f64, f64)>,
    pub land_range: Option<(f64, f64)>,
    pub eps_sd: Option<f64>,
    pub eta_sd: Option<f64>,
    pub omega0_range: Option<(f64, f64)>,
    pub ar_coef: Option<f64>,
    pub beta_k: Option<f64>,
    pub beta_l: Option<f64>,
    pub rho: Option<f64>,
    pub alpha_scale: Option<f64>,
    pub strict_rent: Option<bool>,
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioOverrides,
    /// Study table to reproduce (1..=5); None runs a custom scenario.
    pub table: Option<u8>,
    /// Methods to run: "ols", "egs", "cdg", "proposed", or "all".
    pub methods: Vec<String>,
    /// "none", "hide-capital", or "hide-value".
    pub mask: String,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub workers: usize,
    pub out_dir: Option<String>,
    /// Two-step estimator degrees.
    pub share_degree: usize,
    pub land_degree: usize,
    pub transition_degree: usize,
    pub share_correction: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: ScenarioOverrides::default(),
            table: None,
            methods: vec!["proposed".into()],
            mask: "none".into(),
            replications: None,
            seed: None,
            workers: 0,
            out_dir: None,
            share_degree: 2,
            land_degree: 2,
            transition_degree: 3,
            share_correction: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Seed precedence: explicit config/flag, then the PRODFN_SEED
    /// environment variable, then 42.
    pub fn resolved_seed(&self) -> Result<u64> {
        if let Some(seed) = self.seed {
            return Ok(seed);
        }
        match std::env::var("PRODFN_SEED") {
            Ok(text) => text
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("PRODFN_SEED is not a u64: {text:?}"))),
            Err(_) => Ok(42),
        }
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for name in &self.methods {
            if name.eq_ignore_ascii_case("all") {
                for m in Method::ALL {
                    if !out.contains(&m) {
                        out.push(m);
                    }
                }
            } else {
                let m = Method::parse(name)
                    .ok_or_else(|| Error::Config(format!("unknown method {name:?}")))?;
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        Ok(out)
    }

    pub fn mask(&self) -> Result<VisibilityMask> {
        match self.mask.as_str() {
            "none" => Ok(VisibilityMask::ALL),
            "hide-capital" => Ok(VisibilityMask::HIDE_CAPITAL),
            "hide-value" => Ok(VisibilityMask::HIDE_VALUE),
            other => Err(Error::Config(format!(
                "unknown mask {other:?}; expected none, hide-capital, or hide-value"
            ))),
        }
    }

    pub fn estimator_options(&self) -> EstimatorOptions {
        EstimatorOptions {
            share_degree: self.share_degree,
            land_degree: self.land_degree,
            transition_degree: self.transition_degree,
            share_correction: self.share_correction,
            ..EstimatorOptions::default()
        }
    }

    /// Builds the custom scenario from presets plus overrides.
    pub fn scenario(&self) -> Result<ScenarioSpec> {
        let o = &self.scenario;
        let family_cd = match o.tech.as_deref() {
            None | Some("cd") => true,
            Some("ces") => false,
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown technology {other:?}; expected cd or ces"
                )))
            }
        };
        let constant_returns = match o.returns.as_deref() {
            None | Some("crs") => true,
            Some("drs") => false,
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown returns {other:?}; expected crs or drs"
                )))
            }
        };
        let mut tech = crate::montecarlo::preset_technology(family_cd, constant_returns);
        if let Some(beta_k) = o.beta_k {
            tech.beta_k = beta_k;
        }
        if let Some(beta_l) = o.beta_l {
            tech.beta_l = beta_l;
        }
        if let Some(rho) = o.rho {
            tech.rho = rho;
        }
        if let Some(alpha) = o.alpha_scale {
            tech.alpha_scale = alpha;
        }
        let mut spec = ScenarioSpec::baseline(tech, o.productivity.unwrap_or(true));
        if let Some(v) = o.n_builders {
            spec.n_builders = v;
        }
        if let Some(v) = o.n_cities {
            spec.n_cities = v;
        }
        if let Some(v) = o.n_periods {
            spec.n_periods = v;
        }
        if let Some(v) = o.price_range {
            spec.price_range = v;
        }
        if let Some(v) = o.land_range {
            spec.land_range = v;
        }
        if let Some(v) = o.eps_sd {
            spec.eps_sd = v;
        }
        if let Some(v) = o.eta_sd {
            spec.eta_sd = v;
        }
        if let Some(v) = o.omega0_range {
            spec.omega0_range = v;
        }
        if let Some(v) = o.ar_coef {
            spec.ar_coef = v;
        }
        if o.strict_rent.unwrap_or(false) {
            spec.rent_policy = RentPolicy::Error;
        }
        if let Some(v) = self.replications {
            spec.replications = v;
        }
        spec.seed = self.resolved_seed()?;
        spec.validate()?;
        Ok(spec)
    }

    /// Builds the study cells: a table grid when `table` is set, otherwise a
    /// single custom cell.
    pub fn study_cells(&self) -> Result<Vec<StudyCell>> {
        match self.table {
            Some(table_id) => {
                let seed = self.resolved_seed()?;
                let replications = self.replications.unwrap_or(100);
                let mut cells = scenario_grid(table_id, seed, replications)?;
                // Scenario overrides that make sense on a grid (dims, shocks)
                // are applied cell-wise.
                for cell in &mut cells {
                    if let Some(v) = self.scenario.n_builders {
                        cell.spec.n_builders = v;
                    }
                    if let Some(v) = self.scenario.n_cities {
                        cell.spec.n_cities = v;
                    }
                    if let Some(v) = self.scenario.n_periods {
                        cell.spec.n_periods = v;
                    }
                    if let Some(v) = self.scenario.eps_sd {
                        cell.spec.eps_sd = v;
                    }
                    if let Some(v) = self.scenario.eta_sd {
                        cell.spec.eta_sd = v;
                    }
                    cell.spec.validate()?;
                }
                Ok(cells)
            }
            None => {
                let spec = self.scenario()?;
                Ok(vec![StudyCell {
                    id: "custom".into(),
                    label: "Custom scenario".into(),
                    spec,
                    mask: self.mask()?,
                    methods: self.methods()?,
                }])
            }
        }
    }
}

/// Scenario presets addressable from the CLI, mirroring the study tables.
pub fn preset_scenario(tech: &str, returns: &str, productivity: bool) -> Result<ScenarioSpec> {
    let family_cd = match tech {
        "cd" => true,
        "ces" => false,
        other => return Err(Error::Config(format!("unknown technology {other:?}"))),
    };
    let constant_returns = match returns {
        "crs" => true,
        "drs" => false,
        other => return Err(Error::Config(format!("unknown returns {other:?}"))),
    };
    let tech: TechnologyParams = crate::montecarlo::preset_technology(family_cd, constant_returns);
    Ok(ScenarioSpec::baseline(tech, productivity))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_is_lossless() {
        let mut config = RunConfig::default();
        config.table = Some(3);
        config.methods = vec!["egs".into(), "proposed".into()];
        config.scenario.n_builders = Some(10);
        config.scenario.price_range = Some((0.9, 1.1));
        config.seed = Some(7);
        let text = config.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json(r#"{"tabel": 1}"#).unwrap_err();
        assert!(format!("{err}").contains("bad config file"));
        let err = RunConfig::from_json(r#"{"scenario": {"builders": 3}}"#).unwrap_err();
        assert!(format!("{err}").contains("bad config file"));
    }

    #[test]
    fn methods_expand_all() {
        let mut config = RunConfig::default();
        config.methods = vec!["all".into()];
        assert_eq!(config.methods().unwrap().len(), 4);
        config.methods = vec!["nope".into()];
        assert!(config.methods().is_err());
    }

    #[test]
    fn seed_fallback_env() {
        let mut config = RunConfig::default();
        config.seed = Some(9);
        assert_eq!(config.resolved_seed().unwrap(), 9);
        config.seed = None;
        std::env::remove_var("PRODFN_SEED");
        assert_eq!(config.resolved_seed().unwrap(), 42);
        std::env::set_var("PRODFN_SEED", "123");
        assert_eq!(config.resolved_seed().unwrap(), 123);
        std::env::set_var("PRODFN_SEED", "abc");
        assert!(config.resolved_seed().is_err());
        std::env::remove_var("PRODFN_SEED");
    }

    #[test]
    fn custom_scenario_applies_overrides() {
        let mut config = RunConfig::default();
        config.scenario.tech = Some("ces".into());
        config.scenario.returns = Some("drs".into());
        config.scenario.n_builders = Some(17);
        config.scenario.eps_sd = Some(0.0);
        config.seed = Some(3);
        let spec = config.scenario().unwrap();
        assert_eq!(spec.n_builders, 17);
        assert_eq!(spec.eps_sd, 0.0);
        assert_eq!(spec.seed, 3);
        assert_eq!(spec.tech.family, crate::model::TechnologyFamily::Ces);
        assert_eq!(spec.tech.alpha_scale, 0.9);
    }
}

//! Flat TOML configuration. Every key is optional and overrides the chosen
//! preset; unknown keys are rejected by name.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::Interval;
use crate::decision::{ProviderConfig, ProviderKind};
use crate::sim::{DayStructure, SimConfig};
use crate::single_turn::{ScenarioConfig, ScenarioKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("override `{0}` is not of the form key=value")]
    BadOverride(String),
    #[error("unknown preset `{0}` (expected `desk` or `full`)")]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn set<T: Clone>(target: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *target = v.clone();
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<String>,
    pub seed: Option<u64>,

    pub n_agents: Option<usize>,
    pub n_fcl: Option<usize>,
    pub days: Option<u64>,
    pub day_structure: Option<[u64; 4]>,
    pub initial_price: Option<f64>,
    pub tick_size: Option<f64>,
    pub fundamental_volatility: Option<f64>,

    pub lambda_f: Option<f64>,
    pub lambda_c: Option<f64>,
    pub lambda_n: Option<f64>,
    pub sigma_n: Option<f64>,
    pub alpha_ref: Option<f64>,
    pub tau_ref: Option<f64>,
    pub alpha_diff: Option<f64>,
    pub tau_diff: Option<f64>,
    pub tau_fundamental: Option<u64>,
    pub cash_min: Option<f64>,
    pub cash_max: Option<f64>,
    pub position_min: Option<f64>,
    pub position_max: Option<f64>,
    pub margin_min: Option<f64>,
    pub margin_max: Option<f64>,

    pub fcl_cash_min: Option<f64>,
    pub fcl_cash_max: Option<f64>,
    pub fcl_position_min: Option<f64>,
    pub fcl_position_max: Option<f64>,
    pub fcl_margin_min: Option<f64>,
    pub fcl_margin_max: Option<f64>,
    pub fcl_fixed_volume: Option<i64>,

    pub price_spread: Option<f64>,
    pub max_order_volume: Option<i64>,
    pub variance_scale: Option<f64>,
    pub variance_tau_exponent: Option<f64>,
    pub order_lifetime: Option<u64>,

    pub provider_kind: Option<ProviderKind>,
    pub provider_endpoint: Option<String>,
    pub provider_model: Option<String>,
    pub provider_max_retries: Option<u32>,
    pub provider_timeout_ms: Option<u64>,
    pub provider_temperature: Option<f64>,
    pub provider_api_key_env: Option<String>,
    pub provider_retry_backoff_ms: Option<u64>,
    pub sell_bias_at_ath: Option<f64>,
    pub buy_bias_at_loss: Option<f64>,

    pub single_turn_providers: Option<Vec<ProviderKind>>,
    pub single_turn_trials: Option<usize>,
    pub single_turn_seed: Option<u64>,
    pub single_turn_p1: Option<f64>,
    pub single_turn_cash: Option<f64>,
    pub single_turn_v1: Option<i64>,
    pub single_turn_t: Option<u64>,
    pub single_turn_total_time: Option<u64>,
    pub single_turn_max_in_flight: Option<usize>,
}

/// Turns `key=value` into a TOML table entry; a value that is not valid
/// TOML is taken as a bare string.
fn override_table(assignment: &str) -> Result<toml::Table, ConfigError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(assignment.into()))?;
    let (key, value) = (key.trim(), value.trim());
    if key.is_empty() {
        return Err(ConfigError::BadOverride(assignment.into()));
    }
    toml::from_str(&format!("{key} = {value}"))
        .or_else(|_| toml::from_str(&format!("{key} = {}", toml::Value::String(value.into()))))
        .map_err(|e| ConfigError::Parse(e.to_string()))
}

impl FileConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            table.extend(override_table(o)?);
        }
        Self::deserialize(toml::Value::Table(table)).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, overrides)
    }

    pub fn base(&self) -> Result<SimConfig, ConfigError> {
        match self.preset.as_deref() {
            None | Some("desk") => Ok(SimConfig::desk()),
            Some("full") => Ok(SimConfig::full()),
            Some(other) => Err(ConfigError::UnknownPreset(other.into())),
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let mut c = self.base()?;
        set(&mut c.seed, &self.seed);
        set(&mut c.n_agents, &self.n_agents);
        set(&mut c.n_fcl, &self.n_fcl);
        set(&mut c.days, &self.days);
        if let Some(d) = self.day_structure {
            c.day_structure = DayStructure::from_array(d);
        }
        set(&mut c.initial_price, &self.initial_price);
        set(&mut c.tick_size, &self.tick_size);
        set(&mut c.fundamental_volatility, &self.fundamental_volatility);

        for pop in [&mut c.population, &mut c.fcl_population] {
            set(&mut pop.lambda_f, &self.lambda_f);
            set(&mut pop.lambda_c, &self.lambda_c);
            set(&mut pop.lambda_n, &self.lambda_n);
            set(&mut pop.sigma_n, &self.sigma_n);
            set(&mut pop.alpha_ref, &self.alpha_ref);
            set(&mut pop.tau_ref, &self.tau_ref);
            set(&mut pop.alpha_diff, &self.alpha_diff);
            set(&mut pop.tau_diff, &self.tau_diff);
            set(&mut pop.tau_fundamental, &self.tau_fundamental);
        }
        let ranges = |iv: &mut Interval, lo: &Option<f64>, hi: &Option<f64>| {
            set(&mut iv.min, lo);
            set(&mut iv.max, hi);
        };
        let p = &mut c.population;
        ranges(&mut p.cash_range, &self.cash_min, &self.cash_max);
        ranges(&mut p.position_range, &self.position_min, &self.position_max);
        ranges(&mut p.margin_range, &self.margin_min, &self.margin_max);
        let f = &mut c.fcl_population;
        ranges(&mut f.cash_range, &self.fcl_cash_min, &self.fcl_cash_max);
        ranges(&mut f.position_range, &self.fcl_position_min, &self.fcl_position_max);
        ranges(&mut f.margin_range, &self.fcl_margin_min, &self.fcl_margin_max);
        set(&mut c.fcl_fixed_volume, &self.fcl_fixed_volume);

        set(&mut c.order_rule.price_spread, &self.price_spread);
        set(&mut c.order_rule.max_volume, &self.max_order_volume);
        set(&mut c.order_rule.variance_scale, &self.variance_scale);
        set(&mut c.order_rule.variance_tau_exponent, &self.variance_tau_exponent);
        if self.order_lifetime.is_some() {
            c.order_lifetime = self.order_lifetime;
        }
        c.provider = self.provider_config(self.provider_kind.unwrap_or(c.provider.kind));
        c.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(c)
    }

    /// Provider settings from the `provider_*` keys with the given kind.
    pub fn provider_config(&self, kind: ProviderKind) -> ProviderConfig {
        let mut p = ProviderConfig::scripted(kind);
        if self.provider_endpoint.is_some() {
            p.endpoint = self.provider_endpoint.clone();
        }
        set(&mut p.model_name, &self.provider_model);
        set(&mut p.max_retries, &self.provider_max_retries);
        set(&mut p.timeout_ms, &self.provider_timeout_ms);
        set(&mut p.temperature, &self.provider_temperature);
        if self.provider_api_key_env.is_some() {
            p.api_key_env = self.provider_api_key_env.clone();
        }
        set(&mut p.retry_backoff_ms, &self.provider_retry_backoff_ms);
        set(&mut p.bias.sell_bias_at_ath, &self.sell_bias_at_ath);
        set(&mut p.bias.buy_bias_at_loss, &self.buy_bias_at_loss);
        p
    }

    /// Providers compared by the single-turn command.
    pub fn single_turn_providers(&self) -> Vec<ProviderConfig> {
        let kinds = match &self.single_turn_providers {
            Some(k) => k.clone(),
            None => vec![self.provider_kind.unwrap_or(ProviderKind::ScriptedLossAverse)],
        };
        kinds.into_iter().map(|k| self.provider_config(k)).collect()
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig, ConfigError> {
        let mut s = ScenarioConfig::new(ScenarioKind::GainAtHigh);
        set(&mut s.trials, &self.single_turn_trials);
        s.seed = self.single_turn_seed.or(self.seed).unwrap_or(0);
        set(&mut s.p1, &self.single_turn_p1);
        set(&mut s.cash, &self.single_turn_cash);
        set(&mut s.v1, &self.single_turn_v1);
        set(&mut s.t, &self.single_turn_t);
        set(&mut s.total_time, &self.single_turn_total_time);
        set(&mut s.max_in_flight, &self.single_turn_max_in_flight);
        s.validate().map_err(ConfigError::Invalid)?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_desk_preset() {
        let f = FileConfig::from_toml("", &[]).unwrap();
        assert_eq!(f.sim_config().unwrap(), SimConfig::desk());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = FileConfig::from_toml("n_agnets = 10\n", &[]).unwrap_err();
        assert!(err.to_string().contains("n_agnets"), "{err}");
    }

    #[test]
    fn keys_and_overrides_apply() {
        let text = "preset = \"full\"\nn_fcl = 5\ndays = 3\nprovider_kind = \"scripted-always-sell\"\nsell_bias_at_ath = 0.7\nfcl_cash_max = 5.0\n";
        let f = FileConfig::from_toml(text, &["days=7".into(), "seed = 42".into()]).unwrap();
        let c = f.sim_config().unwrap();
        assert_eq!((c.n_agents, c.n_fcl, c.days, c.seed), (1000, 5, 7, 42));
        assert_eq!(c.provider.kind, ProviderKind::ScriptedAlwaysSell);
        assert_eq!(c.provider.bias.sell_bias_at_ath, 0.7);
        assert_eq!(c.fcl_population.cash_range.max, 5.0);
        assert_eq!(c.population.cash_range.max, 3e4);
    }

    #[test]
    fn string_override_without_quotes() {
        let f = FileConfig::from_toml("", &["provider_endpoint=http://127.0.0.1:9/v1".into()]).unwrap();
        assert_eq!(f.provider_endpoint.as_deref(), Some("http://127.0.0.1:9/v1"));
        assert!(FileConfig::from_toml("", &["novalue".into()]).is_err());
        assert!(FileConfig::from_toml("", &["bogus=1".into()]).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let f = FileConfig::from_toml("n_fcl = 500\n", &[]).unwrap();
        assert!(f.sim_config().is_err());
        let f = FileConfig::from_toml("preset = \"huge\"\n", &[]).unwrap();
        assert!(matches!(f.sim_config(), Err(ConfigError::UnknownPreset(_))));
        let f = FileConfig::from_toml("n_fcl = 2\nprovider_kind = \"remote\"\n", &[]).unwrap();
        assert!(f.sim_config().is_err());
    }

    #[test]
    fn single_turn_settings() {
        let text = "single_turn_providers = [\"scripted-always-buy\", \"scripted-loss-averse\"]\nsingle_turn_trials = 10\nseed = 3\n";
        let f = FileConfig::from_toml(text, &[]).unwrap();
        assert_eq!(f.single_turn_providers().len(), 2);
        let s = f.scenario_config().unwrap();
        assert_eq!((s.trials, s.seed, s.p1), (10, 3, 300.0));
    }
}

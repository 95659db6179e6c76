use serde::{Deserialize, Serialize};

use crate::agents::{FcnOrderRule, PopulationConfig};
use crate::decision::ProviderConfig;
use crate::lob::TickScale;

use super::SimError;

/// Step counts of the four intraday phases: opening collection, morning
/// session, midday collection, afternoon session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayStructure {
    pub collect_open: u64,
    pub continuous_morning: u64,
    pub collect_mid: u64,
    pub continuous_afternoon: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Collecting,
    Continuous,
}

impl DayStructure {
    pub const fn new(collect_open: u64, continuous_morning: u64, collect_mid: u64, continuous_afternoon: u64) -> Self {
        Self {
            collect_open,
            continuous_morning,
            collect_mid,
            continuous_afternoon,
        }
    }

    pub fn from_array(v: [u64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn as_array(&self) -> [u64; 4] {
        [
            self.collect_open,
            self.continuous_morning,
            self.collect_mid,
            self.continuous_afternoon,
        ]
    }

    pub fn steps_per_day(&self) -> u64 {
        self.as_array().iter().sum()
    }

    pub fn continuous_steps_per_day(&self) -> u64 {
        self.continuous_morning + self.continuous_afternoon
    }

    /// Phase of the 1-based step `s` within a day.
    pub fn phase(&self, s: u64) -> Phase {
        let a = self.collect_open;
        let b = a + self.continuous_morning;
        let c = b + self.collect_mid;
        if s <= a || (s > b && s <= c) {
            Phase::Collecting
        } else {
            Phase::Continuous
        }
    }

    /// True when `s` is the last step of a collection phase, after which the
    /// call auction runs.
    pub fn ends_collection(&self, s: u64) -> bool {
        let open_end = self.collect_open;
        let mid_end = self.collect_open + self.continuous_morning + self.collect_mid;
        (self.collect_open > 0 && s == open_end) || (self.collect_mid > 0 && s == mid_end)
    }

    /// `(day, 1-based step within the day)` for a 1-based global step.
    pub fn locate(&self, step: u64) -> (u64, u64) {
        let spd = self.steps_per_day();
        ((step - 1) / spd, (step - 1) % spd + 1)
    }
}

impl Default for DayStructure {
    fn default() -> Self {
        Self::new(100, 750, 10, 750)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_agents: usize,
    pub n_fcl: usize,
    pub days: u64,
    pub day_structure: DayStructure,
    pub initial_price: f64,
    pub tick_size: f64,
    pub fundamental_volatility: f64,
    pub population: PopulationConfig,
    pub fcl_population: PopulationConfig,
    pub fcl_fixed_volume: i64,
    pub order_rule: FcnOrderRule,
    /// Resting-order lifetime in steps; `None` uses each agent's time window.
    pub order_lifetime: Option<u64>,
    pub provider: ProviderConfig,
    pub seed: u64,
}

impl SimConfig {
    /// Full-scale market: 1,000 agents over 500 days.
    pub fn full() -> Self {
        Self {
            n_agents: 1000,
            n_fcl: 0,
            days: 500,
            day_structure: DayStructure::default(),
            initial_price: 300.0,
            tick_size: 0.01,
            fundamental_volatility: 1e-4,
            population: PopulationConfig::fcn_default(),
            fcl_population: PopulationConfig::fcl_default(),
            fcl_fixed_volume: 100,
            order_rule: FcnOrderRule::default(),
            order_lifetime: None,
            provider: ProviderConfig::default(),
            seed: 0,
        }
    }

    /// Desk-scale market: 200 agents over 50 days.
    pub fn desk() -> Self {
        Self {
            n_agents: 200,
            days: 50,
            ..Self::full()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::full()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    pub fn total_steps(&self) -> u64 {
        self.day_structure.steps_per_day() * self.days
    }

    pub fn tick_scale(&self) -> Result<TickScale, SimError> {
        TickScale::from_tick_size(self.tick_size).map_err(|e| SimError::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.validate_market()?;
        if self.n_fcl > 0 {
            self.provider.validate()?;
        }
        Ok(())
    }

    /// Checks everything except the provider settings.
    pub fn validate_market(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.n_agents == 0 {
            return bad("n_agents must be positive".into());
        }
        if self.n_fcl > self.n_agents {
            return bad(format!("n_fcl ({}) exceeds n_agents ({})", self.n_fcl, self.n_agents));
        }
        if self.days == 0 || self.day_structure.steps_per_day() == 0 {
            return bad("days and day_structure must be positive".into());
        }
        if !(self.initial_price > 0.0) {
            return bad("initial_price must be positive".into());
        }
        if !(self.fundamental_volatility >= 0.0) {
            return bad("fundamental_volatility must be non-negative".into());
        }
        if self.fcl_fixed_volume <= 0 {
            return bad("fcl_fixed_volume must be positive".into());
        }
        if self.order_rule.max_volume <= 0 || !(self.order_rule.price_spread >= 0.0) {
            return bad("max_order_volume must be positive and price_spread non-negative".into());
        }
        if !(self.order_rule.variance_scale > 0.0) {
            return bad("variance_scale must be positive".into());
        }
        if self.order_lifetime == Some(0) {
            return bad("order_lifetime must be at least 1".into());
        }
        self.tick_scale()?;
        self.population
            .validate()
            .and_then(|_| self.fcl_population.validate())
            .map_err(|e| SimError::InvalidConfig(e.to_string()))
    }
}

//! One-shot decision elicitation under four reference-point scenarios.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::{DecisionContext, DecisionProvider, HistoryItem, ProviderConfig, ProviderConfigError};
use crate::lob::Side;
use crate::parallel::map_trials;
use crate::sim::provider_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Gain, price at a fresh high.
    GainAtHigh,
    /// Gain, price below an earlier high.
    GainBelowHigh,
    /// Loss, price at a fresh low.
    LossAtLow,
    /// Loss, price above an earlier low.
    LossAboveLow,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [Self::GainAtHigh, Self::GainBelowHigh, Self::LossAtLow, Self::LossAboveLow];

    pub fn label(self) -> &'static str {
        match self {
            Self::GainAtHigh => "G+",
            Self::GainBelowHigh => "G-",
            Self::LossAtLow => "L-",
            Self::LossAboveLow => "L+",
        }
    }

    /// Return range `[r_min, r_max]`.
    pub fn return_range(self) -> (f64, f64) {
        match self {
            Self::GainAtHigh | Self::GainBelowHigh => (0.0, 0.5),
            Self::LossAtLow | Self::LossAboveLow => (-0.5, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub r_min: f64,
    pub r_max: f64,
    pub p1: f64,
    pub v1: i64,
    pub cash: f64,
    pub t: u64,
    pub total_time: u64,
    pub trials: usize,
    pub seed: u64,
    /// Upper bound on concurrently running trials.
    pub max_in_flight: usize,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind) -> Self {
        let (r_min, r_max) = kind.return_range();
        Self {
            kind,
            r_min,
            r_max,
            p1: 300.0,
            v1: 10,
            cash: 30_000.0,
            t: 50,
            total_time: 100,
            trials: 100,
            seed: 0,
            max_in_flight: 8,
        }
    }

    pub fn with_kind(&self, kind: ScenarioKind) -> Self {
        let (r_min, r_max) = kind.return_range();
        Self {
            kind,
            r_min,
            r_max,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.r_min <= self.r_max) {
            return Err(format!("r_min ({}) exceeds r_max ({})", self.r_min, self.r_max));
        }
        if !(self.p1 > 0.0) {
            return Err("p1 must be positive".into());
        }
        if self.t > self.total_time {
            return Err("t exceeds total_time".into());
        }
        Ok(())
    }
}

/// Builds the decision context for one trial.
pub fn setup_scenario<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> DecisionContext {
    let r = if cfg.r_max > cfg.r_min {
        rng.random_range(cfg.r_min..=cfg.r_max)
    } else {
        cfg.r_min
    };
    context_for_return(cfg, r)
}

/// Context for a given sampled return `r`.
pub fn context_for_return(cfg: &ScenarioConfig, r: f64) -> DecisionContext {
    let p1 = cfg.p1;
    let p = p1 * r.exp();
    let (high, low) = match cfg.kind {
        ScenarioKind::GainAtHigh => (p, p1.min(p)),
        ScenarioKind::GainBelowHigh => (p1 * (2.0 * r).exp(), p1.min(p)),
        ScenarioKind::LossAtLow => (p1.max(p), p),
        ScenarioKind::LossAboveLow => (p1.max(p), p1 * (2.0 * r).exp()),
    };
    DecisionContext {
        market_id: 0,
        cash: cfg.cash,
        position: cfg.v1,
        unrealized_gain: cfg.v1 as f64 * (p - p1),
        market_price: p,
        all_time_high: high,
        all_time_low: low,
        remaining_time: cfg.total_time - cfg.t,
        total_time: cfg.total_time,
        history: vec![HistoryItem {
            market_id: 0,
            price: p1,
            signed_volume: cfg.v1,
        }],
        ofi: 0.0,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub buys: usize,
    pub sells: usize,
    pub failures: usize,
}

impl Tally {
    pub fn net(&self) -> i64 {
        self.buys as i64 - self.sells as i64
    }

    pub fn trials(&self) -> usize {
        self.buys + self.sells + self.failures
    }

    pub fn failure_rate(&self) -> f64 {
        match self.trials() {
            0 => 0.0,
            n => self.failures as f64 / n as f64,
        }
    }

    /// `net (buys, sells)`, e.g. `-94 (3, 97)`.
    pub fn cell(&self) -> String {
        format!("{:+} ({}, {})", self.net(), self.buys, self.sells)
    }
}

/// Runs every trial of one scenario. `make_provider(seed)` returns a fresh
/// provider for each trial.
pub fn run_scenario<P, F>(cfg: &ScenarioConfig, make_provider: F) -> Tally
where
    P: DecisionProvider,
    F: Fn(u64) -> P + Sync + Send,
{
    let seeds: Vec<u64> = (0..cfg.trials as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let outcomes = map_trials(&seeds, Some(cfg.max_in_flight.max(1)), |&seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ctx = setup_scenario(cfg, &mut rng);
        make_provider(seed).decide(&ctx).ok()
    });
    let mut tally = Tally::default();
    for o in outcomes {
        match o {
            Some(Side::Buy) => tally.buys += 1,
            Some(Side::Sell) => tally.sells += 1,
            None => tally.failures += 1,
        }
    }
    tally
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub provider: String,
    pub tallies: Vec<(ScenarioKind, Tally)>,
}

impl ScenarioRow {
    pub fn get(&self, kind: ScenarioKind) -> Option<Tally> {
        self.tallies.iter().find(|(k, _)| *k == kind).map(|(_, t)| *t)
    }

    pub fn failure_rate(&self) -> f64 {
        let (f, n) = self
            .tallies
            .iter()
            .fold((0, 0), |(f, n), (_, t)| (f + t.failures, n + t.trials()));
        if n == 0 {
            0.0
        } else {
            f as f64 / n as f64
        }
    }
}

/// All four scenarios for a configured provider.
pub fn run_scenarios(base: &ScenarioConfig, provider: &ProviderConfig) -> Result<ScenarioRow, ProviderConfigError> {
    provider.validate()?;
    let mut tallies = Vec::new();
    for kind in ScenarioKind::ALL {
        let cfg = base.with_kind(kind);
        let tally = run_scenario(&cfg, |seed| {
            provider
                .build(provider_seed(seed))
                .expect("provider config validated above")
        });
        tallies.push((kind, tally));
    }
    Ok(ScenarioRow {
        provider: provider.label(),
        tallies,
    })
}

/// Rows = providers, columns = scenarios, cells = `net (buys, sells)`.
pub fn render_table(rows: &[ScenarioRow]) -> String {
    let mut header = vec!["provider".to_string()];
    header.extend(ScenarioKind::ALL.iter().map(|k| k.label().to_string()));
    header.push("failures".into());
    let mut table = vec![header];
    for row in rows {
        let mut line = vec![row.provider.clone()];
        let mut failures = 0;
        for kind in ScenarioKind::ALL {
            let t = row.get(kind).unwrap_or_default();
            failures += t.failures;
            line.push(t.cell());
        }
        line.push(failures.to_string());
        table.push(line);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", cells.join(" | ").trim_end());
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "{}", rule.join("-|-"));
        }
    }
    out
}

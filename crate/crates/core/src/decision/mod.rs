//! Buy/sell intention providers for FCL agents.
//!
//! A provider maps a [`DecisionContext`] to a [`Side`]. The remote provider
//! renders the context as a prompt and asks a chat-completions endpoint;
//! the scripted providers are deterministic stand-ins used offline and in
//! tests.

mod parse;
mod prompt;
mod remote;
mod scripted;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_response, render_decision, ParseError};
pub use prompt::{build_prompt, format_cash, format_real, information_block};
pub use remote::{ChatRequest, RemoteProvider, RETRY_NOTE};
pub use scripted::{decide_scripted_loss_averse, LossAversionBias};

use crate::lob::Side;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryItem {
    pub market_id: u32,
    pub price: f64,
    pub signed_volume: i64,
}

/// Everything an FCL agent is told before it decides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionContext {
    pub market_id: u32,
    pub cash: f64,
    pub position: i64,
    pub unrealized_gain: f64,
    pub market_price: f64,
    pub all_time_high: f64,
    pub all_time_low: f64,
    pub remaining_time: u64,
    pub total_time: u64,
    pub history: Vec<HistoryItem>,
    pub ofi: f64,
}

impl DecisionContext {
    /// Current price relative to the all-time high.
    pub fn nearness(&self) -> f64 {
        self.market_price / self.all_time_high
    }
}

/// A parsed answer. Only `is_buy` is acted upon; price and volume are kept
/// for logging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub is_buy: bool,
    pub order_price: Option<f64>,
    pub order_volume: Option<i64>,
    pub reason: String,
}

impl Decision {
    pub fn side(&self) -> Side {
        if self.is_buy {
            Side::Buy
        } else {
            Side::Sell
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("decision provider unavailable after {attempts} attempt(s): {reason}")]
pub struct ProviderUnavailable {
    pub attempts: u32,
    pub reason: String,
}

pub trait DecisionProvider: Send {
    fn decide(&mut self, ctx: &DecisionContext) -> Result<Side, ProviderUnavailable>;

    fn name(&self) -> String;
}

impl<P: DecisionProvider + ?Sized> DecisionProvider for Box<P> {
    fn decide(&mut self, ctx: &DecisionContext) -> Result<Side, ProviderUnavailable> {
        (**self).decide(ctx)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    ScriptedAlwaysBuy,
    ScriptedAlwaysSell,
    ScriptedLossAverse,
    Remote,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::ScriptedAlwaysBuy => "scripted-always-buy",
            ProviderKind::ScriptedAlwaysSell => "scripted-always-sell",
            ProviderKind::ScriptedLossAverse => "scripted-loss-averse",
            ProviderKind::Remote => "remote",
        }
    }
}

impl std::str::FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            ProviderKind::ScriptedAlwaysBuy,
            ProviderKind::ScriptedAlwaysSell,
            ProviderKind::ScriptedLossAverse,
            ProviderKind::Remote,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| format!("unknown provider kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub max_retries: u32,
    pub timeout_ms: u64,
    pub temperature: f64,
    /// Environment variable holding a bearer token, if any.
    pub api_key_env: Option<String>,
    pub retry_backoff_ms: u64,
    pub bias: LossAversionBias,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::ScriptedLossAverse,
            endpoint: None,
            model_name: "llama-3.1-8b-instruct".into(),
            max_retries: 2,
            timeout_ms: 30_000,
            temperature: 1.0,
            api_key_env: Some("OPENAI_API_KEY".into()),
            retry_backoff_ms: 250,
            bias: LossAversionBias::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderConfigError {
    #[error("remote provider requires an endpoint")]
    MissingEndpoint,
    #[error("bias probabilities must lie in [0, 1]")]
    BadBias,
}

impl ProviderConfig {
    pub fn scripted(kind: ProviderKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        Self {
            kind: ProviderKind::Remote,
            endpoint: Some(endpoint.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ProviderConfigError> {
        if self.kind == ProviderKind::Remote && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(ProviderConfigError::MissingEndpoint);
        }
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(self.bias.sell_bias_at_ath) || !ok(self.bias.buy_bias_at_loss) {
            return Err(ProviderConfigError::BadBias);
        }
        Ok(())
    }

    /// Display name: the kind, or `remote:<model>`.
    pub fn label(&self) -> String {
        match self.kind {
            ProviderKind::Remote => format!("remote:{}", self.model_name),
            k => k.as_str().into(),
        }
    }

    /// Builds a provider; `seed` drives the scripted loss-averse draws.
    pub fn build(&self, seed: u64) -> Result<Provider, ProviderConfigError> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::ScriptedAlwaysBuy => Provider::AlwaysBuy,
            ProviderKind::ScriptedAlwaysSell => Provider::AlwaysSell,
            ProviderKind::ScriptedLossAverse => Provider::LossAverse {
                bias: self.bias,
                rng: ChaCha8Rng::seed_from_u64(seed),
            },
            ProviderKind::Remote => Provider::Remote(RemoteProvider::new(self.clone())),
        })
    }
}

#[derive(Debug)]
pub enum Provider {
    AlwaysBuy,
    AlwaysSell,
    LossAverse { bias: LossAversionBias, rng: ChaCha8Rng },
    Remote(RemoteProvider),
}

impl DecisionProvider for Provider {
    fn decide(&mut self, ctx: &DecisionContext) -> Result<Side, ProviderUnavailable> {
        match self {
            Provider::AlwaysBuy => Ok(Side::Buy),
            Provider::AlwaysSell => Ok(Side::Sell),
            Provider::LossAverse { bias, rng } => Ok(decide_scripted_loss_averse(ctx, rng, *bias)),
            Provider::Remote(remote) => remote.decide(ctx),
        }
    }

    fn name(&self) -> String {
        match self {
            Provider::AlwaysBuy => ProviderKind::ScriptedAlwaysBuy.as_str().into(),
            Provider::AlwaysSell => ProviderKind::ScriptedAlwaysSell.as_str().into(),
            Provider::LossAverse { .. } => ProviderKind::ScriptedLossAverse.as_str().into(),
            Provider::Remote(remote) => remote.name(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remote_requires_endpoint() {
        let cfg = ProviderConfig::scripted(ProviderKind::Remote);
        assert_eq!(cfg.validate(), Err(ProviderConfigError::MissingEndpoint));
        assert!(ProviderConfig::remote("http://127.0.0.1:1").validate().is_ok());
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in [
            ProviderKind::ScriptedAlwaysBuy,
            ProviderKind::ScriptedAlwaysSell,
            ProviderKind::ScriptedLossAverse,
            ProviderKind::Remote,
        ] {
            assert_eq!(kind.as_str().parse::<ProviderKind>().unwrap(), kind);
        }
        assert!("llm".parse::<ProviderKind>().is_err());
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DecisionContext;
use crate::lob::Side;

/// Parameters of the scripted loss-averse provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossAversionBias {
    /// Sell probability at a fresh all-time high while in gain.
    pub sell_bias_at_ath: f64,
    /// Buy probability while in loss.
    pub buy_bias_at_loss: f64,
}

impl Default for LossAversionBias {
    fn default() -> Self {
        Self {
            sell_bias_at_ath: 0.9,
            buy_bias_at_loss: 0.8,
        }
    }
}

impl LossAversionBias {
    /// Probability of selling in `ctx`.
    pub fn sell_probability(&self, ctx: &DecisionContext) -> f64 {
        if ctx.unrealized_gain >= 0.0 {
            let nearness = ctx.nearness().clamp(0.0, 1.0);
            0.5 + (self.sell_bias_at_ath - 0.5) * nearness
        } else {
            1.0 - self.buy_bias_at_loss
        }
    }
}

/// Sells in gain with a probability rising towards the all-time high, buys in
/// loss with a fixed probability.
pub fn decide_scripted_loss_averse<R: Rng + ?Sized>(
    ctx: &DecisionContext,
    rng: &mut R,
    bias: LossAversionBias,
) -> Side {
    let u: f64 = rng.random();
    if u < bias.sell_probability(ctx) {
        Side::Sell
    } else {
        Side::Buy
    }
}

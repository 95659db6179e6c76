//! Rebuilds the order book from a recorded tick stream.

use thiserror::Error;

use super::{EventKind, Phase, SimConfig, TickRecord};
use crate::lob::{MatchMode, Order, OrderBook, Price, Trade};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("order row at step {0} has no agent id")]
    MissingAgent(u64),
    #[error("agent {0} has no known order lifetime")]
    UnknownAgent(usize),
    #[error("recorded order at step {step} was rejected: {source}")]
    Rejected {
        step: u64,
        source: crate::lob::LobError,
    },
    #[error("tick size: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub book: OrderBook,
    pub trades: Vec<Trade>,
}

/// Re-submits every recorded order under the same phase schedule, expiry
/// rule and auctions. `lifetimes[agent]` is each agent's resting-order
/// lifetime (ignored when the config fixes one).
pub fn replay(cfg: &SimConfig, records: &[TickRecord], lifetimes: &[u64]) -> Result<ReplayOutcome, ReplayError> {
    let scale = cfg.tick_scale().map_err(|e| ReplayError::Config(e.to_string()))?;
    let days = cfg.day_structure;
    let mut book = OrderBook::new();
    let mut trades = Vec::new();
    let mut last = scale.round_nearest(cfg.initial_price);
    let mut next_id = 1;
    let mut idx = 0;
    for step in 1..=cfg.total_steps() {
        let (_, s) = days.locate(step);
        let mode = match days.phase(s) {
            Phase::Collecting => MatchMode::Collecting,
            Phase::Continuous => MatchMode::Continuous,
        };
        book.expire(step);
        while idx < records.len() && records[idx].step == step {
            let r = &records[idx];
            idx += 1;
            if r.event != EventKind::Order {
                continue;
            }
            let agent = r.agent_id.ok_or(ReplayError::MissingAgent(step))?;
            let lifetime = match cfg.order_lifetime {
                Some(l) => l,
                None => *lifetimes.get(agent).ok_or(ReplayError::UnknownAgent(agent))?,
            };
            let order = Order {
                order_id: next_id,
                agent_id: agent,
                time: step,
                price: Price(scale.amount_from_real(r.price)),
                signed_volume: r.signed_volume,
                expiry: step + lifetime,
            };
            next_id += 1;
            let fills = book
                .submit(order, mode)
                .map_err(|source| ReplayError::Rejected { step, source })?;
            if let Some(t) = fills.last() {
                last = t.price;
            }
            trades.extend(fills);
        }
        if days.ends_collection(s) {
            let result = book.call_auction(last, step);
            if let Some(p) = result.clearing_price {
                last = p;
            }
            trades.extend(result.trades);
        }
        if s == days.steps_per_day() {
            book.clear();
        }
    }
    Ok(ReplayOutcome { book, trades })
}

//! Single-asset limit order book.
//!
//! Prices live on an integer tick grid so that price-time priority is exact.
//! Two regimes are supported: continuous matching, where an incoming order
//! trades immediately against crossing resting orders at the resting price,
//! and collection, where orders only accumulate until a single-price call
//! auction clears the book.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type OrderId = u64;
pub type AgentId = usize;
pub type Step = u64;

/// A price expressed as an integer number of ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Price(pub i64);

impl Price {
    pub fn ticks(self) -> i64 {
        self.0
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}t", self.0)
    }
}

/// Conversion between real currency units and the tick grid.
///
/// The tick size must be the reciprocal of an integer (0.01, 0.5, 1.0, ...),
/// which makes `price × volume` an integer number of ticks and keeps cash
/// accounting exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickScale {
    ticks_per_unit: i64,
}

impl TickScale {
    pub fn from_tick_size(tick_size: f64) -> Result<Self, LobError> {
        if !(tick_size > 0.0) || !tick_size.is_finite() {
            return Err(LobError::InvalidTickSize(tick_size));
        }
        let inv = 1.0 / tick_size;
        let k = inv.round();
        if k < 1.0 || (inv - k).abs() > 1e-9 * k {
            return Err(LobError::InvalidTickSize(tick_size));
        }
        Ok(Self {
            ticks_per_unit: k as i64,
        })
    }

    pub fn ticks_per_unit(self) -> i64 {
        self.ticks_per_unit
    }

    pub fn tick_size(self) -> f64 {
        1.0 / self.ticks_per_unit as f64
    }

    pub fn to_real(self, price: Price) -> f64 {
        self.amount_to_real(price.0)
    }

    /// Converts an amount held in tick units (cash, notional) to currency.
    pub fn amount_to_real(self, ticks: i64) -> f64 {
        ticks as f64 / self.ticks_per_unit as f64
    }

    pub fn amount_from_real(self, value: f64) -> i64 {
        (value * self.ticks_per_unit as f64).round() as i64
    }

    pub fn round_nearest(self, value: f64) -> Price {
        Price((value * self.ticks_per_unit as f64).round() as i64)
    }

    pub fn round_down(self, value: f64) -> Price {
        Price(snap(value * self.ticks_per_unit as f64).floor() as i64)
    }

    pub fn round_up(self, value: f64) -> Price {
        Price(snap(value * self.ticks_per_unit as f64).ceil() as i64)
    }
}

impl Default for TickScale {
    fn default() -> Self {
        Self {
            ticks_per_unit: 100,
        }
    }
}

// 300.0 * 100 lands on 29999.999999999996 and friends; treat values within a
// few ulps of an integer as that integer before directional rounding.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }

    pub fn sign(self) -> i64 {
        match self {
            Side::Buy => 1,
            Side::Sell => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    Continuous,
    Collecting,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub order_id: OrderId,
    pub agent_id: AgentId,
    pub time: Step,
    pub price: Price,
    /// Positive for buys, negative for sells.
    pub signed_volume: i64,
    pub expiry: Step,
}

impl Order {
    pub fn side(&self) -> Side {
        if self.signed_volume > 0 {
            Side::Buy
        } else {
            Side::Sell
        }
    }

    pub fn volume(&self) -> i64 {
        self.signed_volume.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub buy_order_id: OrderId,
    pub sell_order_id: OrderId,
    pub buy_agent: AgentId,
    pub sell_agent: AgentId,
    pub price: Price,
    pub volume: i64,
    pub time: Step,
    /// Side of the incoming order under continuous matching; `None` for
    /// call-auction executions.
    pub aggressor: Option<Side>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LobError {
    #[error("order {0} already submitted")]
    DuplicateOrderId(OrderId),
    #[error("order {0} has zero volume")]
    ZeroVolume(OrderId),
    #[error("order {id} has non-positive price {price}")]
    NonPositivePrice { id: OrderId, price: Price },
    #[error("order {id} expires at {expiry} before its submission time {time}")]
    ExpiresBeforeSubmission { id: OrderId, expiry: Step, time: Step },
    #[error("tick size {0} is not the reciprocal of a positive integer")]
    InvalidTickSize(f64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Resting {
    order: Order,
    remaining: i64,
}

/// Outcome of a call auction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuctionResult {
    pub clearing_price: Option<Price>,
    pub trades: Vec<Trade>,
}

impl AuctionResult {
    pub fn volume(&self) -> i64 {
        self.trades.iter().map(|t| t.volume).sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct OrderBook {
    bids: BTreeMap<Price, VecDeque<Resting>>,
    asks: BTreeMap<Price, VecDeque<Resting>>,
    seen: HashSet<OrderId>,
    last_price: Option<Price>,
    bid_volume: i64,
    ask_volume: i64,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_price(&self) -> Option<Price> {
        self.last_price
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().copied()
    }

    /// Total resting buy volume.
    pub fn bid_volume(&self) -> i64 {
        self.bid_volume
    }

    /// Total resting sell volume.
    pub fn ask_volume(&self) -> i64 {
        self.ask_volume
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty() && self.asks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bids.values().chain(self.asks.values()).map(VecDeque::len).sum()
    }

    /// `(n_buy - n_sell) / (n_buy + n_sell)` over resting volume, 0 when empty.
    pub fn order_flow_imbalance(&self) -> f64 {
        let total = self.bid_volume + self.ask_volume;
        if total == 0 {
            return 0.0;
        }
        (self.bid_volume - self.ask_volume) as f64 / total as f64
    }

    /// Resting orders as `(order, remaining volume)`, bids best-first then
    /// asks best-first.
    pub fn resting_orders(&self) -> Vec<(Order, i64)> {
        let bids = self.bids.values().rev().flatten();
        let asks = self.asks.values().flatten();
        bids.chain(asks)
            .map(|r| (r.order.clone(), r.remaining))
            .collect()
    }

    pub fn submit(&mut self, order: Order, mode: MatchMode) -> Result<Vec<Trade>, LobError> {
        validate(&order)?;
        if !self.seen.insert(order.order_id) {
            return Err(LobError::DuplicateOrderId(order.order_id));
        }
        let mut remaining = order.volume();
        let mut trades = Vec::new();
        if mode == MatchMode::Continuous {
            let side = order.side();
            while remaining > 0 {
                let Some(level) = self.best_opposite(side) else {
                    break;
                };
                let crosses = match side {
                    Side::Buy => level <= order.price,
                    Side::Sell => level >= order.price,
                };
                if !crosses {
                    break;
                }
                let queue = self.queue_mut(side.opposite(), level);
                let head = queue.front_mut().expect("price levels are never empty");
                let volume = remaining.min(head.remaining);
                head.remaining -= volume;
                remaining -= volume;
                let resting = head.order.clone();
                if head.remaining == 0 {
                    queue.pop_front();
                }
                if queue.is_empty() {
                    self.side_mut(side.opposite()).remove(&level);
                }
                *self.volume_mut(side.opposite()) -= volume;
                trades.push(make_trade(&order, &resting, level, volume, order.time, Some(side)));
                self.last_price = Some(level);
            }
        }
        if remaining > 0 {
            self.rest(order, remaining);
        }
        Ok(trades)
    }

    pub fn call_auction(&mut self, reference: Price, time: Step) -> AuctionResult {
        let Some((price, volume)) = self.clearing_price(reference) else {
            return AuctionResult {
                clearing_price: None,
                trades: Vec::new(),
            };
        };
        let mut trades = Vec::new();
        let mut left = volume;
        while left > 0 {
            let bid_level = self.best_bid().expect("clearing volume implies bids");
            let ask_level = self.best_ask().expect("clearing volume implies asks");
            debug_assert!(bid_level >= price && ask_level <= price);
            let bid = self.bids.get_mut(&bid_level).unwrap().front().unwrap().clone();
            let ask = self.asks.get_mut(&ask_level).unwrap().front().unwrap().clone();
            let fill = left.min(bid.remaining).min(ask.remaining);
            self.consume(Side::Buy, bid_level, fill);
            self.consume(Side::Sell, ask_level, fill);
            left -= fill;
            trades.push(Trade {
                buy_order_id: bid.order.order_id,
                sell_order_id: ask.order.order_id,
                buy_agent: bid.order.agent_id,
                sell_agent: ask.order.agent_id,
                price,
                volume: fill,
                time,
                aggressor: None,
            });
        }
        self.last_price = Some(price);
        AuctionResult {
            clearing_price: Some(price),
            trades,
        }
    }

    /// Price maximizing executable volume, with ties broken by distance to
    /// `reference` and then by the lower price. `None` when nothing crosses.
    pub fn clearing_price(&self, reference: Price) -> Option<(Price, i64)> {
        let mut candidates: Vec<Price> = self.bids.keys().chain(self.asks.keys()).copied().collect();
        candidates.push(reference);
        candidates.sort_unstable();
        candidates.dedup();
        let mut best: Option<(Price, i64)> = None;
        for p in candidates {
            let volume = self.executable_volume(p);
            if volume == 0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bp, bv)) => {
                    volume > bv
                        || (volume == bv && {
                            let d = (p.0 - reference.0).abs();
                            let bd = (bp.0 - reference.0).abs();
                            d < bd || (d == bd && p < bp)
                        })
                }
            };
            if better {
                best = Some((p, volume));
            }
        }
        best
    }

    /// Volume that would execute in a call auction at `price`.
    pub fn executable_volume(&self, price: Price) -> i64 {
        let demand: i64 = self
            .bids
            .range(price..)
            .flat_map(|(_, q)| q.iter())
            .map(|r| r.remaining)
            .sum();
        let supply: i64 = self
            .asks
            .range(..=price)
            .flat_map(|(_, q)| q.iter())
            .map(|r| r.remaining)
            .sum();
        demand.min(supply)
    }

    /// Removes every order with `expiry < now`; returns how many were removed.
    pub fn expire(&mut self, now: Step) -> usize {
        let mut removed = 0;
        for side in [Side::Buy, Side::Sell] {
            let mut freed = 0;
            let book = self.side_mut(side);
            book.retain(|_, queue| {
                queue.retain(|r| {
                    let keep = r.order.expiry >= now;
                    if !keep {
                        removed += 1;
                        freed += r.remaining;
                    }
                    keep
                });
                !queue.is_empty()
            });
            *self.volume_mut(side) -= freed;
        }
        removed
    }

    /// Removes every resting order.
    pub fn clear(&mut self) -> usize {
        let n = self.len();
        self.bids.clear();
        self.asks.clear();
        self.bid_volume = 0;
        self.ask_volume = 0;
        n
    }

    fn rest(&mut self, order: Order, remaining: i64) {
        let side = order.side();
        *self.volume_mut(side) += remaining;
        self.side_mut(side)
            .entry(order.price)
            .or_default()
            .push_back(Resting { order, remaining });
    }

    fn consume(&mut self, side: Side, level: Price, volume: i64) {
        let queue = self.queue_mut(side, level);
        let head = queue.front_mut().unwrap();
        head.remaining -= volume;
        if head.remaining == 0 {
            queue.pop_front();
        }
        if queue.is_empty() {
            self.side_mut(side).remove(&level);
        }
        *self.volume_mut(side) -= volume;
    }

    fn best_opposite(&self, side: Side) -> Option<Price> {
        match side {
            Side::Buy => self.best_ask(),
            Side::Sell => self.best_bid(),
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut BTreeMap<Price, VecDeque<Resting>> {
        match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        }
    }

    fn queue_mut(&mut self, side: Side, level: Price) -> &mut VecDeque<Resting> {
        self.side_mut(side).get_mut(&level).expect("level exists")
    }

    fn volume_mut(&mut self, side: Side) -> &mut i64 {
        match side {
            Side::Buy => &mut self.bid_volume,
            Side::Sell => &mut self.ask_volume,
        }
    }
}

fn validate(order: &Order) -> Result<(), LobError> {
    if order.signed_volume == 0 {
        return Err(LobError::ZeroVolume(order.order_id));
    }
    if order.price.0 <= 0 {
        return Err(LobError::NonPositivePrice {
            id: order.order_id,
            price: order.price,
        });
    }
    if order.expiry < order.time {
        return Err(LobError::ExpiresBeforeSubmission {
            id: order.order_id,
            expiry: order.expiry,
            time: order.time,
        });
    }
    Ok(())
}

fn make_trade(
    incoming: &Order,
    resting: &Order,
    price: Price,
    volume: i64,
    time: Step,
    aggressor: Option<Side>,
) -> Trade {
    let (buy, sell) = match incoming.side() {
        Side::Buy => (incoming, resting),
        Side::Sell => (resting, incoming),
    };
    Trade {
        buy_order_id: buy.order_id,
        sell_order_id: sell.order_id,
        buy_agent: buy.agent_id,
        sell_agent: sell.agent_id,
        price,
        volume,
        time,
        aggressor,
    }
}

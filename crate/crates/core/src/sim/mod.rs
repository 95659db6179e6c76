//! Discrete-time market scheduler.
//!
//! Each step one uniformly chosen agent observes the market and may submit a
//! single limit order. Days are split into two continuous sessions, each
//! preceded by an order-collection phase that ends in a call auction. Every
//! order, execution, auction and end-of-step state is appended to the tick
//! stream.

mod config;
mod record;
mod replay;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{DayStructure, Phase, SimConfig};
pub use record::{read_csv, read_jsonl, write_csv, write_jsonl, EventKind, RecordError, TickRecord, CSV_HEADER};
pub use replay::{replay, ReplayError, ReplayOutcome};

use crate::agents::{
    fcl_decide_order, fcn_decide_order, fcn_predict, sample_endowment, sample_params, Agent, AgentKind,
    OrderIntent, PriceInputs,
};
use crate::decision::{
    DecisionContext, DecisionProvider, HistoryItem, ProviderConfigError,
};
use crate::lob::{AgentId, MatchMode, Order, OrderBook, Price, Side, TickScale, Trade};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Provider(#[from] ProviderConfigError),
}

/// What an agent sees when it is selected.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSnapshot {
    pub step: u64,
    pub total_steps: u64,
    /// Last execution price, or the initial price before any trade.
    pub market_price: Price,
    pub fundamental: f64,
    pub best_bid: Option<Price>,
    pub best_ask: Option<Price>,
    pub ofi: f64,
    pub all_time_high: Price,
    pub all_time_low: Price,
    pub scale: TickScale,
}

impl MarketSnapshot {
    pub fn observe(book: &OrderBook, fundamental: f64, step: u64, total_steps: u64, tracker: &PriceTracker) -> Self {
        Self {
            step,
            total_steps,
            market_price: tracker.last,
            fundamental,
            best_bid: book.best_bid(),
            best_ask: book.best_ask(),
            ofi: book.order_flow_imbalance(),
            all_time_high: tracker.high,
            all_time_low: tracker.low,
            scale: tracker.scale,
        }
    }

    pub fn market_real(&self) -> f64 {
        self.scale.to_real(self.market_price)
    }

    /// Midpoint of the touch, or the market price when a side is empty.
    pub fn mid_price(&self) -> f64 {
        match (self.best_bid, self.best_ask) {
            (Some(b), Some(a)) => self.scale.to_real(Price(b.0 + a.0)) / 2.0,
            _ => self.market_real(),
        }
    }

    pub fn nearness(&self) -> f64 {
        self.market_price.0 as f64 / self.all_time_high.0 as f64
    }

    pub fn remaining_steps(&self) -> u64 {
        self.total_steps.saturating_sub(self.step)
    }

    pub fn price_inputs(&self, lagged: f64) -> PriceInputs {
        PriceInputs {
            market: self.market_real(),
            fundamental: self.fundamental,
            lagged,
        }
    }
}

/// Last price and running extrema over executed prices plus the initial
/// price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceTracker {
    pub initial: Price,
    pub last: Price,
    pub high: Price,
    pub low: Price,
    pub scale: TickScale,
}

impl PriceTracker {
    pub fn new(initial: Price, scale: TickScale) -> Self {
        Self {
            initial,
            last: initial,
            high: initial,
            low: initial,
            scale,
        }
    }

    pub fn record(&mut self, price: Price) {
        self.last = price;
        self.high = self.high.max(price);
        self.low = self.low.min(price);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalPath {
    pub values: Vec<f64>,
}

/// Zero-drift geometric Brownian motion starting at `initial`, one value per
/// step.
pub fn generate_fundamental<R: Rng + ?Sized>(initial: f64, volatility: f64, steps: usize, rng: &mut R) -> FundamentalPath {
    let mut values = Vec::with_capacity(steps);
    let mut p = initial;
    for i in 0..steps {
        if i > 0 {
            let z: f64 = StandardNormal.sample(rng);
            p *= (volatility * z).exp();
        }
        values.push(p);
    }
    FundamentalPath { values }
}

/// Decision made by an FCL agent, kept for behavioural analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FclObservation {
    pub step: u64,
    pub agent_id: AgentId,
    pub side: Side,
    pub nearness: f64,
    pub asset_proportion: Option<f64>,
    pub unrealized_gain: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub orders: u64,
    pub trades: u64,
    pub auctions: u64,
    pub skips: u64,
    pub traded_volume: i64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<TickRecord>,
    pub agents: Vec<Agent>,
    pub book: OrderBook,
    pub fundamental: FundamentalPath,
    pub fcl_observations: Vec<FclObservation>,
    pub stats: RunStats,
}

const STREAM_POPULATION: u64 = 1;
const STREAM_FUNDAMENTAL: u64 = 2;
const STREAM_SCHEDULE: u64 = 3;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed handed to the provider so scripted draws do not share a stream with
/// the scheduler.
pub fn provider_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

pub fn spawn_agents(cfg: &SimConfig, scale: TickScale) -> Vec<Agent> {
    let mut rng = rng_for(cfg.seed, STREAM_POPULATION);
    (0..cfg.n_agents)
        .map(|id| {
            let (kind, pop) = if id < cfg.n_fcl {
                (AgentKind::Fcl, &cfg.fcl_population)
            } else {
                (AgentKind::Fcn, &cfg.population)
            };
            let params = sample_params(pop, &mut rng);
            let (cash, position) = sample_endowment(pop, &mut rng);
            Agent {
                id,
                kind,
                params,
                state: crate::agents::AgentState::new(scale.amount_from_real(cash), position),
                fixed_volume: cfg.fcl_fixed_volume,
            }
        })
        .collect()
}

/// Runs a simulation with the provider described in the config.
pub fn run(cfg: &SimConfig) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    if cfg.n_fcl == 0 {
        return run_with_provider(cfg, crate::decision::Provider::AlwaysBuy);
    }
    let provider = cfg.provider.build(provider_seed(cfg.seed))?;
    run_with_provider(cfg, provider)
}

pub fn run_with_provider<P: DecisionProvider>(cfg: &SimConfig, mut provider: P) -> Result<RunOutput, SimError> {
    cfg.validate_market()?;
    let scale = cfg.tick_scale()?;
    let total = cfg.total_steps();
    let days = cfg.day_structure;
    let p0 = scale.round_nearest(cfg.initial_price);
    let mut agents = spawn_agents(cfg, scale);
    let fundamental = generate_fundamental(
        cfg.initial_price,
        cfg.fundamental_volatility,
        total as usize,
        &mut rng_for(cfg.seed, STREAM_FUNDAMENTAL),
    );
    let mut rng = rng_for(cfg.seed, STREAM_SCHEDULE);
    let mut book = OrderBook::new();
    let mut tracker = PriceTracker::new(p0, scale);
    // observed[t] is the market price seen at step t; observed[0] = p0.
    let mut observed: Vec<Price> = Vec::with_capacity(total as usize + 1);
    observed.push(p0);
    let mut records = Vec::with_capacity(total as usize * 3);
    let mut observations = Vec::new();
    let mut stats = RunStats::default();
    let mut next_order_id = 1u64;

    for step in 1..=total {
        let (day, s) = days.locate(step);
        let mode = match days.phase(s) {
            Phase::Collecting => MatchMode::Collecting,
            Phase::Continuous => MatchMode::Continuous,
        };
        observed.push(tracker.last);
        book.expire(step);

        let j = rng.random_range(0..agents.len());
        let snap = MarketSnapshot::observe(&book, fundamental.values[step as usize - 1], step, total, &tracker);
        let intent = {
            let agent = &agents[j];
            let tau = agent.params.tau;
            let lagged = if step > tau {
                scale.to_real(observed[(step - tau) as usize])
            } else {
                scale.to_real(p0)
            };
            match agent.kind {
                AgentKind::Fcn => fcn_decide_order(
                    &agent.params,
                    &agent.state,
                    &snap,
                    lagged,
                    &cfg.population,
                    &cfg.order_rule,
                    &mut rng,
                ),
                AgentKind::Fcl => {
                    let ctx = decision_context(agent, &snap);
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    match provider.decide(&ctx) {
                        Ok(side) => {
                            observations.push(FclObservation {
                                step,
                                agent_id: j,
                                side,
                                nearness: snap.nearness(),
                                asset_proportion: asset_proportion(
                                    ctx.cash,
                                    agent.state.position,
                                    ctx.market_price,
                                ),
                                unrealized_gain: ctx.unrealized_gain,
                            });
                            fcn_predict(&agent.params, snap.price_inputs(lagged), eps, &cfg.fcl_population)
                                .ok()
                                .map(|pred| {
                                    fcl_decide_order(
                                        &agent.params,
                                        agent.fixed_volume,
                                        pred.p_hat,
                                        snap.best_bid,
                                        snap.best_ask,
                                        side,
                                        scale,
                                    )
                                })
                        }
                        Err(_) => {
                            stats.skips += 1;
                            records.push(row(&snap, day, EventKind::Skip, Some(j), snap.market_real(), 0));
                            None
                        }
                    }
                }
            }
        };

        if let Some(OrderIntent { price, signed_volume }) = intent {
            let order = Order {
                order_id: next_order_id,
                agent_id: j,
                time: step,
                price,
                signed_volume,
                expiry: step + cfg.order_lifetime.unwrap_or(agents[j].order_lifetime()),
            };
            next_order_id += 1;
            stats.orders += 1;
            records.push(row(&snap, day, EventKind::Order, Some(j), scale.to_real(price), signed_volume));
            let trades = book.submit(order, mode).expect("scheduler emits valid orders");
            settle(&trades, &mut agents, &mut tracker, &mut stats);
            for t in &trades {
                let sign = t.aggressor.map_or(1, Side::sign);
                let aggressor = if sign > 0 { t.buy_agent } else { t.sell_agent };
                records.push(trade_row(t, &book, &tracker, day, Some(aggressor), sign * t.volume));
            }
        }

        if days.ends_collection(s) {
            let result = book.call_auction(tracker.last, step);
            if let Some(price) = result.clearing_price {
                stats.auctions += 1;
                settle(&result.trades, &mut agents, &mut tracker, &mut stats);
                debug_assert_eq!(tracker.last, price);
                let snap = MarketSnapshot::observe(&book, snap.fundamental, step, total, &tracker);
                records.push(row(&snap, day, EventKind::Auction, None, scale.to_real(price), result.volume()));
                for t in &result.trades {
                    records.push(trade_row(t, &book, &tracker, day, None, t.volume));
                }
            }
        }

        let end = MarketSnapshot::observe(&book, snap.fundamental, step, total, &tracker);
        records.push(row(&end, day, EventKind::Snapshot, None, end.market_real(), 0));

        if s == days.steps_per_day() {
            book.clear();
        }
    }

    Ok(RunOutput {
        records,
        agents,
        book,
        fundamental,
        fcl_observations: observations,
        stats,
    })
}

/// `p * w / (c + p * w)`; `None` when the denominator is zero.
pub fn asset_proportion(cash: f64, position: i64, price: f64) -> Option<f64> {
    let stock = price * position as f64;
    let total = cash + stock;
    (total != 0.0).then(|| stock / total)
}

/// Context an FCL agent is prompted with.
pub fn decision_context(agent: &Agent, snap: &MarketSnapshot) -> DecisionContext {
    let scale = snap.scale;
    DecisionContext {
        market_id: 0,
        cash: agent.state.cash_real(scale),
        position: agent.state.position,
        unrealized_gain: agent.state.unrealized_gain(snap.market_price, scale),
        market_price: snap.market_real(),
        all_time_high: scale.to_real(snap.all_time_high),
        all_time_low: scale.to_real(snap.all_time_low),
        remaining_time: snap.remaining_steps(),
        total_time: snap.total_steps,
        history: agent
            .state
            .history
            .iter()
            .map(|f| HistoryItem {
                market_id: 0,
                price: f.average_price() / scale.ticks_per_unit() as f64,
                signed_volume: f.signed_volume,
            })
            .collect(),
        ofi: snap.ofi,
    }
}

fn settle(trades: &[Trade], agents: &mut [Agent], tracker: &mut PriceTracker, stats: &mut RunStats) {
    for t in trades {
        agents[t.buy_agent].state.apply_fill(t.time, t.price, t.volume);
        agents[t.sell_agent].state.apply_fill(t.time, t.price, -t.volume);
        tracker.record(t.price);
        stats.trades += 1;
        stats.traded_volume += t.volume;
    }
}

fn row(
    snap: &MarketSnapshot,
    day: u64,
    event: EventKind,
    agent_id: Option<AgentId>,
    price: f64,
    signed_volume: i64,
) -> TickRecord {
    TickRecord {
        step: snap.step,
        day,
        event,
        agent_id,
        price,
        signed_volume,
        market_price: snap.market_real(),
        mid_price: snap.mid_price(),
        ofi: snap.ofi,
    }
}

fn trade_row(
    t: &Trade,
    book: &OrderBook,
    tracker: &PriceTracker,
    day: u64,
    agent_id: Option<AgentId>,
    signed_volume: i64,
) -> TickRecord {
    let scale = tracker.scale;
    let snap = MarketSnapshot::observe(book, 0.0, t.time, 0, tracker);
    TickRecord {
        step: t.time,
        day,
        event: EventKind::Trade,
        agent_id,
        price: scale.to_real(t.price),
        signed_volume,
        market_price: scale.to_real(t.price),
        mid_price: snap.mid_price(),
        ofi: snap.ofi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::{Provider, ProviderKind, ProviderConfig};

    #[test]
    fn fundamental_constant_without_volatility() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let path = generate_fundamental(300.0, 0.0, 100, &mut rng);
        assert!(path.values.iter().all(|&v| v == 300.0));
        assert_eq!(path.values.len(), 100);
    }

    #[test]
    fn fundamental_increment_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let path = generate_fundamental(300.0, 1e-4, 1_000_000, &mut rng);
        let incs: Vec<f64> = path.values.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        let n = incs.len() as f64;
        let mean = incs.iter().sum::<f64>() / n;
        let sd = (incs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd / 1e-4 - 1.0).abs() < 0.02, "sd {sd}");
        assert_eq!(path.values[0], 300.0);
    }

    #[test]
    fn fundamental_deterministic() {
        let a = generate_fundamental(300.0, 1e-4, 1000, &mut ChaCha8Rng::seed_from_u64(3));
        let b = generate_fundamental(300.0, 1e-4, 1000, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn cold_start_snapshot() {
        let scale = TickScale::default();
        let tracker = PriceTracker::new(Price(30000), scale);
        let snap = MarketSnapshot::observe(&OrderBook::new(), 300.0, 1, 10, &tracker);
        assert_eq!(snap.market_real(), 300.0);
        assert_eq!(snap.all_time_high, Price(30000));
        assert_eq!(snap.all_time_low, Price(30000));
        assert_eq!(snap.ofi, 0.0);
    }

    #[test]
    fn running_extrema() {
        let mut tracker = PriceTracker::new(Price(30000), TickScale::default());
        for p in [30000, 31000, 29500] {
            tracker.record(Price(p));
        }
        assert_eq!((tracker.high, tracker.low, tracker.last), (Price(31000), Price(29500), Price(29500)));
    }

    #[test]
    fn asset_proportion_formula() {
        assert!((asset_proportion(30000.0, 10, 300.0).unwrap() - 3000.0 / 33000.0).abs() < 1e-15);
        assert_eq!(asset_proportion(100.0, 0, 300.0), Some(0.0));
        assert_eq!(asset_proportion(-300.0, 1, 300.0), None);
    }

    fn small_cfg() -> SimConfig {
        SimConfig {
            n_agents: 1,
            n_fcl: 1,
            days: 1,
            day_structure: DayStructure::new(2, 3, 1, 3),
            provider: ProviderConfig::scripted(ProviderKind::ScriptedAlwaysBuy),
            ..SimConfig::desk()
        }
    }

    #[test]
    fn single_buyer_orders_every_step() {
        let out = run(&small_cfg()).unwrap();
        let orders: Vec<_> = out.records.iter().filter(|r| r.event == EventKind::Order).collect();
        assert_eq!(orders.len(), 9);
        assert!(orders.iter().all(|r| r.signed_volume == 100 && r.agent_id == Some(0)));
        let continuous: Vec<u64> = orders
            .iter()
            .map(|r| r.step)
            .filter(|&s| small_cfg().day_structure.phase(s) == Phase::Continuous)
            .collect();
        assert_eq!(continuous, [3, 4, 5, 7, 8, 9]);
    }

    #[test]
    fn step_count_and_auction_steps() {
        let cfg = SimConfig {
            n_agents: 20,
            n_fcl: 0,
            days: 2,
            day_structure: DayStructure::new(2, 3, 1, 3),
            ..SimConfig::desk()
        };
        let out = run(&cfg).unwrap();
        let snaps: Vec<u64> = out.records.iter().filter(|r| r.event == EventKind::Snapshot).map(|r| r.step).collect();
        assert_eq!(snaps, (1..=18).collect::<Vec<_>>());
        assert!(out
            .records
            .iter()
            .filter(|r| r.event == EventKind::Auction)
            .all(|r| [2, 6, 11, 15].contains(&r.step)));
    }

    #[test]
    fn provider_from_config_matches_explicit_provider() {
        let cfg = SimConfig {
            n_agents: 30,
            n_fcl: 3,
            days: 2,
            ..SimConfig::desk()
        };
        let a = run(&cfg).unwrap();
        let p = cfg.provider.build(provider_seed(cfg.seed)).unwrap();
        assert!(matches!(p, Provider::LossAverse { .. }));
        let b = run_with_provider(&cfg, p).unwrap();
        assert_eq!(a.records, b.records);
    }
}

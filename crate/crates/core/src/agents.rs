//! FCN and FCL trading agents.
//!
//! Both agent types share the same return forecast (a weighted blend of a
//! fundamentalist, a chartist and a noise component) and the same portfolio
//! accounting. They differ in how an order is formed: FCN agents size a limit
//! order from a CARA demand curve, FCL agents take a buy/sell intention from a
//! decision provider and price it with a fixed margin around the forecast.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lob::{AgentId, Price, Side, Step, TickScale};
use crate::sim::MarketSnapshot;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("prices must be positive (market {market}, fundamental {fundamental}, lagged {lagged})")]
    NonPositivePrice {
        market: f64,
        fundamental: f64,
        lagged: f64,
    },
    #[error("invalid population config: {0}")]
    InvalidConfig(String),
}

/// Closed interval used for uniform draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    /// Mean of the exponential fundamental weight.
    pub lambda_f: f64,
    pub lambda_c: f64,
    pub lambda_n: f64,
    /// Standard deviation of the noise component.
    pub sigma_n: f64,
    pub alpha_ref: f64,
    pub tau_ref: f64,
    pub alpha_diff: f64,
    pub tau_diff: f64,
    /// Mean-reversion time of the fundamental component, in steps.
    pub tau_fundamental: u64,
    pub cash_range: Interval,
    pub position_range: Interval,
    pub margin_range: Interval,
}

impl PopulationConfig {
    /// FCN population used for the market experiments.
    pub fn fcn_default() -> Self {
        Self {
            lambda_f: 10.0,
            lambda_c: 1.5,
            lambda_n: 1.0,
            sigma_n: 1e-2,
            alpha_ref: 0.1,
            tau_ref: 100.0,
            alpha_diff: 20.0,
            tau_diff: 30.0,
            tau_fundamental: 200,
            cash_range: Interval::new(0.0, 3e4),
            position_range: Interval::new(0.0, 100.0),
            margin_range: Interval::new(0.0, 0.01),
        }
    }

    /// FCL population: same forecast parameters, larger endowments.
    pub fn fcl_default() -> Self {
        Self {
            cash_range: Interval::new(0.0, 1e5),
            position_range: Interval::new(0.0, 300.0),
            margin_range: Interval::new(0.0, 0.01),
            ..Self::fcn_default()
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let positive = [
            ("lambda_f", self.lambda_f),
            ("lambda_c", self.lambda_c),
            ("lambda_n", self.lambda_n),
            ("sigma_n", self.sigma_n),
            ("alpha_ref", self.alpha_ref),
            ("tau_ref", self.tau_ref),
            ("alpha_diff", self.alpha_diff),
            ("tau_diff", self.tau_diff),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AgentError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.tau_fundamental == 0 {
            return Err(AgentError::InvalidConfig("tau_fundamental must be >= 1".into()));
        }
        for (name, r) in [
            ("cash", self.cash_range),
            ("position", self.position_range),
            ("margin", self.margin_range),
        ] {
            if !(r.min <= r.max) {
                return Err(AgentError::InvalidConfig(format!("{name} range is empty")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcnParams {
    pub w_f: f64,
    pub w_c: f64,
    pub w_n: f64,
    /// Time window, in steps.
    pub tau: u64,
    /// Risk aversion.
    pub alpha: f64,
    /// Order margin; only used by FCL agents.
    pub margin: f64,
}

impl FcnParams {
    /// Derives risk aversion and time window from the component weights.
    pub fn from_weights(cfg: &PopulationConfig, w_f: f64, w_c: f64, w_n: f64, margin: f64) -> Self {
        let alpha = cfg.alpha_ref * ((cfg.alpha_diff + w_f) / (cfg.alpha_diff + w_c));
        let tau_raw = cfg.tau_ref * ((cfg.tau_diff + w_f) / (cfg.tau_diff + w_c));
        let tau = (snap(tau_raw).ceil() as u64).max(1);
        Self {
            w_f,
            w_c,
            w_n,
            tau,
            alpha,
            margin,
        }
    }
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x
    }
}

pub fn sample_params<R: Rng + ?Sized>(cfg: &PopulationConfig, rng: &mut R) -> FcnParams {
    let exp = |mean: f64, rng: &mut R| Exp::new(1.0 / mean).expect("positive mean").sample(rng);
    loop {
        let w_f = exp(cfg.lambda_f, rng);
        let w_c = exp(cfg.lambda_c, rng);
        let w_n = exp(cfg.lambda_n, rng);
        if w_f + w_c + w_n > 0.0 {
            let margin = cfg.margin_range.sample(rng);
            return FcnParams::from_weights(cfg, w_f, w_c, w_n, margin);
        }
    }
}

/// Initial `(cash, position)`: cash uniform, position the ceiling of a
/// uniform draw.
pub fn sample_endowment<R: Rng + ?Sized>(cfg: &PopulationConfig, rng: &mut R) -> (f64, i64) {
    let cash = cfg.cash_range.sample(rng);
    let position = snap(cfg.position_range.sample(rng)).ceil() as i64;
    (cash, position)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Expected per-step log return over the agent's window.
    pub r_hat: f64,
    /// Expected price at the end of the window.
    pub p_hat: f64,
}

/// Prices observed by the forecast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceInputs {
    pub market: f64,
    pub fundamental: f64,
    /// Market price `tau` steps ago.
    pub lagged: f64,
}

/// Return and price forecast. `eps` is a standard normal draw; the noise
/// component is `w_n * sigma_n * eps`.
pub fn fcn_predict(
    params: &FcnParams,
    prices: PriceInputs,
    eps: f64,
    cfg: &PopulationConfig,
) -> Result<Prediction, AgentError> {
    let PriceInputs {
        market,
        fundamental,
        lagged,
    } = prices;
    if !(market > 0.0 && fundamental > 0.0 && lagged > 0.0) {
        return Err(AgentError::NonPositivePrice {
            market,
            fundamental,
            lagged,
        });
    }
    let fundamental_term = params.w_f / cfg.tau_fundamental as f64 * (fundamental / market).ln();
    let chart_term = params.w_c / params.tau as f64 * (market / lagged).ln();
    let noise_term = params.w_n * cfg.sigma_n * eps;
    let r_hat = (fundamental_term + chart_term + noise_term) / (params.w_f + params.w_c + params.w_n);
    let p_hat = market * (params.tau as f64 * r_hat).exp();
    Ok(Prediction { r_hat, p_hat })
}

/// Knobs of the FCN order rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcnOrderRule {
    /// Half-width of the uniform order-price draw around the forecast,
    /// relative to the forecast.
    pub price_spread: f64,
    /// Largest absolute order volume.
    pub max_volume: i64,
    /// Forecast variance is `variance_scale * sigma_n^2 * tau^variance_tau_exponent`.
    pub variance_scale: f64,
    pub variance_tau_exponent: f64,
}

impl Default for FcnOrderRule {
    fn default() -> Self {
        Self {
            price_spread: 0.01,
            max_volume: 100,
            variance_scale: 1.0,
            variance_tau_exponent: -2.0,
        }
    }
}

impl FcnOrderRule {
    pub fn forecast_variance(&self, params: &FcnParams, cfg: &PopulationConfig) -> f64 {
        self.variance_scale * cfg.sigma_n.powi(2) * (params.tau as f64).powf(self.variance_tau_exponent)
    }
}

/// Limit order before it receives an id and timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderIntent {
    pub price: Price,
    pub signed_volume: i64,
}

/// CARA-optimal holding at order price `p_o` for log-normal beliefs centred
/// on `p_hat`: `ln(p_hat / p_o) / (alpha * variance * p_o)`.
pub fn cara_demand(p_hat: f64, p_o: f64, alpha: f64, variance: f64) -> f64 {
    (p_hat / p_o).ln() / (alpha * variance * p_o)
}

/// Order volume moving the position towards the desired holding, clamped to
/// `±max_volume`.
pub fn order_volume(desired: f64, position: i64, max_volume: i64) -> i64 {
    if !desired.is_finite() {
        return if desired > 0.0 { max_volume } else { -max_volume };
    }
    let target = desired.round().clamp(i64::MIN as f64 / 4.0, i64::MAX as f64 / 4.0) as i64;
    (target - position).clamp(-max_volume, max_volume)
}

pub fn fcn_decide_order<R: Rng + ?Sized>(
    params: &FcnParams,
    state: &AgentState,
    snapshot: &MarketSnapshot,
    lagged: f64,
    cfg: &PopulationConfig,
    rule: &FcnOrderRule,
    rng: &mut R,
) -> Option<OrderIntent> {
    let eps: f64 = StandardNormal.sample(rng);
    let prediction = fcn_predict(params, snapshot.price_inputs(lagged), eps, cfg).ok()?;
    let p_hat = prediction.p_hat;
    let low = p_hat * (1.0 - rule.price_spread);
    let high = p_hat * (1.0 + rule.price_spread);
    let p_o = if high > low { rng.random_range(low..=high) } else { p_hat };
    if !(p_o > 0.0) {
        return None;
    }
    let variance = rule.forecast_variance(params, cfg);
    let desired = cara_demand(p_hat, p_o, params.alpha, variance);
    let volume = order_volume(desired, state.position, rule.max_volume);
    if volume == 0 {
        return None;
    }
    let scale = snapshot.scale;
    let price = if volume > 0 { scale.round_down(p_o) } else { scale.round_up(p_o) };
    Some(OrderIntent {
        price: Price(price.0.max(1)),
        signed_volume: volume,
    })
}

/// FCL order: fixed volume in the direction of `intention`, priced at the
/// margin-adjusted forecast but never more aggressive than the touch.
pub fn fcl_decide_order(
    params: &FcnParams,
    fixed_volume: i64,
    p_hat: f64,
    best_bid: Option<Price>,
    best_ask: Option<Price>,
    intention: Side,
    scale: TickScale,
) -> OrderIntent {
    let price = match intention {
        Side::Buy => {
            let limit = scale.round_down(p_hat * (1.0 - params.margin));
            best_ask.map_or(limit, |ask| limit.min(ask))
        }
        Side::Sell => {
            let limit = scale.round_up(p_hat * (1.0 + params.margin));
            best_bid.map_or(limit, |bid| limit.max(bid))
        }
    };
    OrderIntent {
        price: Price(price.0.max(1)),
        signed_volume: intention.sign() * fixed_volume,
    }
}

/// Executions of one agent within one step, merged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fill {
    pub time: Step,
    pub signed_volume: i64,
    /// `sum(price * signed volume)` in tick units.
    pub notional: i64,
}

impl Fill {
    pub fn new(time: Step, price: Price, signed_volume: i64) -> Self {
        Self {
            time,
            signed_volume,
            notional: price.0 * signed_volume,
        }
    }

    /// Volume-weighted execution price, in ticks.
    pub fn average_price(&self) -> f64 {
        if self.signed_volume == 0 {
            0.0
        } else {
            self.notional as f64 / self.signed_volume as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    /// Cash in tick units.
    pub cash: i64,
    pub position: i64,
    pub initial_cash: i64,
    pub initial_position: i64,
    pub history: Vec<Fill>,
}

impl AgentState {
    pub fn new(cash: i64, position: i64) -> Self {
        Self {
            cash,
            position,
            initial_cash: cash,
            initial_position: position,
            history: Vec::new(),
        }
    }

    pub fn cash_real(&self, scale: TickScale) -> f64 {
        scale.amount_to_real(self.cash)
    }

    /// Books an execution. Fills sharing a timestamp merge into one history
    /// entry.
    pub fn apply_fill(&mut self, time: Step, price: Price, signed_volume: i64) {
        self.cash -= price.0 * signed_volume;
        self.position += signed_volume;
        match self.history.last_mut() {
            Some(last) if last.time == time => {
                last.signed_volume += signed_volume;
                last.notional += price.0 * signed_volume;
            }
            _ => self.history.push(Fill::new(time, price, signed_volume)),
        }
    }

    pub fn traded_volume(&self) -> i64 {
        self.history.iter().map(|f| f.signed_volume).sum()
    }

    /// Current value of the traded volume minus what was paid for it.
    pub fn unrealized_gain(&self, price: Price, scale: TickScale) -> f64 {
        unrealized_gain(&self.history, price, scale)
    }
}

pub fn unrealized_gain(history: &[Fill], price: Price, scale: TickScale) -> f64 {
    let volume: i64 = history.iter().map(|f| f.signed_volume).sum();
    let cost: i64 = history.iter().map(|f| f.notional).sum();
    scale.amount_to_real(volume * price.0 - cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Fcn,
    Fcl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: AgentId,
    pub kind: AgentKind,
    pub params: FcnParams,
    pub state: AgentState,
    /// Order size of FCL agents.
    pub fixed_volume: i64,
}

impl Agent {
    /// Order lifetime in steps.
    pub fn order_lifetime(&self) -> u64 {
        self.params.tau
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> PopulationConfig {
        PopulationConfig::fcn_default()
    }

    fn prices(market: f64, fundamental: f64, lagged: f64) -> PriceInputs {
        PriceInputs {
            market,
            fundamental,
            lagged,
        }
    }

    #[test]
    fn equal_weights_give_reference_levels() {
        let p = FcnParams::from_weights(&cfg(), 3.7, 3.7, 1.0, 0.0);
        assert_eq!(p.alpha, 0.1);
        assert_eq!(p.tau, 100);
    }

    #[test]
    fn risk_aversion_arithmetic() {
        let p = FcnParams::from_weights(&cfg(), 20.0, 0.0, 1.0, 0.0);
        assert!((p.alpha - 0.2).abs() < 1e-15);
        // tau = ceil(100 * 50 / 30)
        assert_eq!(p.tau, 167);
    }

    #[test]
    fn fundamental_weight_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_params(&cfg(), &mut rng).w_f).sum::<f64>() / n as f64;
        assert!((mean - 10.0).abs() < 0.2, "mean {mean}");
    }

    #[test]
    fn sampled_margin_within_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = PopulationConfig::fcl_default();
        for _ in 0..1000 {
            let p = sample_params(&c, &mut rng);
            assert!((0.0..=0.01).contains(&p.margin));
            assert!(p.tau >= 1 && p.alpha > 0.0);
        }
    }

    #[test]
    fn endowment_position_is_ceiling() {
        let mut c = cfg();
        c.position_range = Interval::new(2.2, 2.2);
        c.cash_range = Interval::new(5.0, 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_endowment(&c, &mut rng), (5.0, 3));
    }

    #[test]
    fn predict_at_fundamental_is_flat() {
        let p = FcnParams {
            w_f: 1.0,
            w_c: 0.0,
            w_n: 0.0,
            tau: 127,
            alpha: 0.1,
            margin: 0.0,
        };
        let pred = fcn_predict(&p, prices(300.0, 300.0, 280.0), 1.3, &cfg()).unwrap();
        assert_eq!(pred.r_hat, 0.0);
        assert_eq!(pred.p_hat, 300.0);
    }

    #[test]
    fn chartist_prediction() {
        let p = FcnParams {
            w_f: 0.0,
            w_c: 1.0,
            w_n: 0.0,
            tau: 10,
            alpha: 0.1,
            margin: 0.0,
        };
        let pred = fcn_predict(&p, prices(330.0, 300.0, 300.0), 0.0, &cfg()).unwrap();
        assert!((pred.r_hat - 1.1f64.ln() / 10.0).abs() < 1e-15);
        assert!((pred.r_hat - 0.0095310).abs() < 1e-7);
        assert!((pred.p_hat - 363.0).abs() < 1e-9);
    }

    #[test]
    fn zero_noise_draw() {
        let p = FcnParams {
            w_f: 0.0,
            w_c: 0.0,
            w_n: 1.0,
            tau: 10,
            alpha: 0.1,
            margin: 0.0,
        };
        let pred = fcn_predict(&p, prices(300.0, 310.0, 290.0), 0.0, &cfg()).unwrap();
        assert_eq!(pred.r_hat, 0.0);
    }

    #[test]
    fn predict_rejects_nonpositive_prices() {
        let p = FcnParams::from_weights(&cfg(), 1.0, 1.0, 1.0, 0.0);
        assert!(fcn_predict(&p, prices(0.0, 300.0, 300.0), 0.0, &cfg()).is_err());
        assert!(fcn_predict(&p, prices(300.0, -1.0, 300.0), 0.0, &cfg()).is_err());
    }

    #[test]
    fn demand_at_forecast_flattens() {
        let desired = cara_demand(300.0, 300.0, 0.1, 0.01);
        assert_eq!(desired, 0.0);
        assert_eq!(order_volume(desired, 7, 100), -7);
        assert_eq!(order_volume(desired, 0, 100), 0);
    }

    #[test]
    fn demand_arithmetic() {
        // ln(1.01) / (0.1 * 0.01 * 300)
        let desired = cara_demand(303.0, 300.0, 0.1, 0.01);
        assert!((desired - 0.033_167_1).abs() < 1e-6, "{desired}");
        assert_eq!(order_volume(desired, 0, 100), 0);
        let desired = cara_demand(303.0, 300.0, 0.1, 1e-5);
        assert!((desired - 33.167_1).abs() < 1e-3, "{desired}");
        assert_eq!(order_volume(desired, 0, 100), 33);
    }

    #[test]
    fn demand_above_forecast_sells() {
        let desired = cara_demand(300.0, 303.0, 0.1, 1e-5);
        assert!(order_volume(desired, 0, 100) < 0);
        assert_eq!(order_volume(-1e9, 0, 100), -100);
        assert_eq!(order_volume(f64::INFINITY, 0, 100), 100);
    }

    fn fcl_params(margin: f64) -> FcnParams {
        FcnParams {
            margin,
            ..FcnParams::from_weights(&cfg(), 1.0, 1.0, 1.0, margin)
        }
    }

    #[test]
    fn fcl_buy_capped_at_best_ask() {
        let s = TickScale::default();
        let o = fcl_decide_order(&fcl_params(0.01), 100, 300.0, None, Some(Price(29500)), Side::Buy, s);
        assert_eq!(o.price, Price(29500));
        assert_eq!(o.signed_volume, 100);
        let o = fcl_decide_order(&fcl_params(0.01), 100, 300.0, None, Some(Price(29900)), Side::Buy, s);
        assert_eq!(o.price, Price(29700));
    }

    #[test]
    fn fcl_sell_floored_at_best_bid() {
        let s = TickScale::default();
        let o = fcl_decide_order(&fcl_params(0.0), 100, 300.0, Some(Price(30500)), None, Side::Sell, s);
        assert_eq!(o.price, Price(30500));
        assert_eq!(o.signed_volume, -100);
    }

    #[test]
    fn fcl_empty_side_uses_forecast() {
        let s = TickScale::default();
        let o = fcl_decide_order(&fcl_params(0.0), 100, 300.0, Some(Price(29000)), None, Side::Buy, s);
        assert_eq!(o.price, Price(30000));
    }

    #[test]
    fn unrealized_gain_cases() {
        let s = TickScale::default();
        let p = |x: f64| s.round_nearest(x);
        let one = [Fill::new(1, p(300.0), 10)];
        assert_eq!(unrealized_gain(&one, p(293.7), s), -63.0);
        assert_eq!(unrealized_gain(&[], p(293.7), s), 0.0);
        let two = [Fill::new(1, p(300.0), 10), Fill::new(2, p(310.0), -10)];
        assert_eq!(unrealized_gain(&two, p(320.0), s), 100.0);
    }

    #[test]
    fn fills_merge_within_step() {
        let mut st = AgentState::new(1_000_000, 5);
        st.apply_fill(3, Price(100), 2);
        st.apply_fill(3, Price(102), 1);
        st.apply_fill(4, Price(101), -3);
        assert_eq!(st.history.len(), 2);
        assert_eq!(st.history[0].notional, 302);
        assert_eq!(st.position, 5);
        assert_eq!(st.cash, 1_000_000 - 302 + 303);
    }
}

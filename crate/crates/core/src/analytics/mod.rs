//! Bars, stylized facts, the all-time-high regression and behavioural
//! statistics computed from recorded tick streams.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{DayStructure, EventKind, Phase, TickRecord};

pub mod stats;

pub use stats::{ks_two_sample, mann_whitney_u, percentile, Percentiles, TestResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("degenerate regressor: nearness is constant")]
    DegenerateRegressor,
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
}

fn too_few(needed: usize, got: usize) -> AnalyticsError {
    AnalyticsError::TooFew { needed, got }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: i64,
}

impl Bar {
    fn flat(price: f64) -> Self {
        Self {
            open: price,
            high: price,
            low: price,
            close: price,
            volume: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarSeries {
    pub bars: Vec<Bar>,
    pub bars_per_day: usize,
}

impl BarSeries {
    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn days(&self) -> usize {
        self.bars.len().checked_div(self.bars_per_day).unwrap_or(0)
    }

    /// Intraday log returns with the volume of the bar that ends each return.
    /// The first bar of every day starts a fresh return sequence.
    pub fn returns_with_volume(&self) -> (Vec<f64>, Vec<f64>) {
        let mut rets = Vec::new();
        let mut vols = Vec::new();
        for day in self.bars.chunks(self.bars_per_day.max(1)) {
            for w in day.windows(2) {
                rets.push((w[1].close / w[0].close).ln());
                vols.push(w[1].volume as f64);
            }
        }
        (rets, vols)
    }

    pub fn returns(&self) -> Vec<f64> {
        self.returns_with_volume().0
    }

    /// Close of the last bar of each day.
    pub fn daily_closes(&self) -> Vec<f64> {
        self.bars
            .chunks(self.bars_per_day.max(1))
            .filter_map(|d| d.last().map(|b| b.close))
            .collect()
    }
}

/// Groups continuous-session steps into bars of `steps_per_bar` steps.
/// Collection steps are skipped; a bar without trades repeats the last known
/// price with zero volume.
pub fn build_bars(ticks: &[TickRecord], days: &DayStructure, steps_per_bar: u64) -> BarSeries {
    let steps_per_bar = steps_per_bar.max(1);
    let per_session = |n: u64| n.div_ceil(steps_per_bar) as usize;
    let bars_per_day = per_session(days.continuous_morning) + per_session(days.continuous_afternoon);
    let Some(last) = ticks.last() else {
        return BarSeries {
            bars: Vec::new(),
            bars_per_day,
        };
    };
    let n_days = days.locate(last.step).0 as usize + 1;
    let mut slots: Vec<Option<Bar>> = vec![None; n_days * bars_per_day];
    // Price to carry into an empty bar, per bar index.
    let mut carry: Vec<Option<f64>> = vec![None; n_days * bars_per_day];
    let mut last_price = ticks[0].market_price;
    for t in ticks {
        let (day, s) = days.locate(t.step);
        let Some(slot) = bar_index(days, s, steps_per_bar) else {
            last_price = t.market_price;
            continue;
        };
        let idx = day as usize * bars_per_day + slot;
        if carry[idx].is_none() {
            carry[idx] = Some(last_price);
        }
        last_price = t.market_price;
        if t.event != EventKind::Trade {
            continue;
        }
        let v = t.signed_volume.abs();
        match &mut slots[idx] {
            Some(b) => {
                b.high = b.high.max(t.price);
                b.low = b.low.min(t.price);
                b.close = t.price;
                b.volume += v;
            }
            s @ None => {
                *s = Some(Bar {
                    open: t.price,
                    high: t.price,
                    low: t.price,
                    close: t.price,
                    volume: v,
                })
            }
        }
    }
    let mut bars = Vec::with_capacity(slots.len());
    let mut prev: Option<f64> = None;
    for (slot, c) in slots.into_iter().zip(carry) {
        let bar = match slot {
            Some(b) => b,
            None => Bar::flat(prev.or(c).unwrap_or(last_price)),
        };
        prev = Some(bar.close);
        bars.push(bar);
    }
    BarSeries { bars, bars_per_day }
}

fn bar_index(days: &DayStructure, s: u64, steps_per_bar: u64) -> Option<usize> {
    if days.phase(s) != Phase::Continuous {
        return None;
    }
    let morning_start = days.collect_open;
    let afternoon_start = days.collect_open + days.continuous_morning + days.collect_mid;
    if s <= afternoon_start {
        Some(((s - morning_start - 1) / steps_per_bar) as usize)
    } else {
        let morning_bars = days.continuous_morning.div_ceil(steps_per_bar);
        Some((morning_bars + (s - afternoon_start - 1) / steps_per_bar) as usize)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Excess kurtosis from central sample moments.
pub fn excess_kurtosis(x: &[f64]) -> Result<f64, AnalyticsError> {
    if x.len() < 4 {
        return Err(too_few(4, x.len()));
    }
    let m = mean(x);
    let (mut m2, mut m4) = (0.0, 0.0);
    for &v in x {
        let d = (v - m) * (v - m);
        m2 += d;
        m4 += d * d;
    }
    let n = x.len() as f64;
    m2 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return Err(AnalyticsError::Degenerate("zero variance".into()));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Pearson correlation of two equal-length series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    assert_eq!(x.len(), y.len(), "pearson: length mismatch");
    if x.len() < 2 {
        return Err(too_few(2, x.len()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalyticsError::Degenerate("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Autocorrelation of `|r_t|` at `lag`, as the Pearson correlation of the
/// series with its lagged copy.
pub fn acf_abs_returns(returns: &[f64], lag: usize) -> Result<f64, AnalyticsError> {
    if lag == 0 || lag >= returns.len() {
        return Err(AnalyticsError::Degenerate(format!("lag {lag} for {} returns", returns.len())));
    }
    let abs: Vec<f64> = returns.iter().map(|r| r.abs()).collect();
    pearson(&abs[..abs.len() - lag], &abs[lag..])
}

/// Correlation between absolute bar return and bar volume.
pub fn return_volume_correlation(bars: &BarSeries) -> Result<f64, AnalyticsError> {
    let (r, v) = bars.returns_with_volume();
    if r.len() < 2 {
        return Err(too_few(3, bars.len()));
    }
    let abs: Vec<f64> = r.iter().map(|x| x.abs()).collect();
    pearson(&abs, &v)
}

pub const ACF_LAGS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylizedFactsReport {
    pub kurtosis: f64,
    pub acf_abs: BTreeMap<usize, f64>,
    pub ret_vol_corr: f64,
}

impl StylizedFactsReport {
    /// Fat tails, positive |return| autocorrelation at every lag, and a
    /// positive return-volume correlation.
    pub fn all_hold(&self) -> bool {
        self.kurtosis > 0.0 && self.acf_abs.values().all(|&g| g > 0.0) && self.ret_vol_corr > 0.0
    }
}

pub fn stylized_facts(bars: &BarSeries) -> Result<StylizedFactsReport, AnalyticsError> {
    let returns = bars.returns();
    let kurtosis = excess_kurtosis(&returns)?;
    let mut acf_abs = BTreeMap::new();
    for lag in ACF_LAGS {
        acf_abs.insert(lag, acf_abs_returns(&returns, lag)?);
    }
    Ok(StylizedFactsReport {
        kurtosis,
        acf_abs,
        ret_vol_corr: return_volume_correlation(bars)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub n_obs: usize,
}

/// Simple least squares of `y` on `x` with an intercept.
pub fn ols(x: &[f64], y: &[f64]) -> Result<OlsFit, AnalyticsError> {
    assert_eq!(x.len(), y.len(), "ols: length mismatch");
    let n = x.len();
    if n < 3 {
        return Err(too_few(3, n));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return Err(AnalyticsError::DegenerateRegressor);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - intercept - slope * a;
            e * e
        })
        .sum();
    let slope_se = (sse / (n as f64 - 2.0) / sxx).sqrt();
    Ok(OlsFit {
        slope,
        intercept,
        slope_se,
        n_obs: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub beta_h: f64,
    pub intercept: f64,
    pub beta_se: f64,
    pub n_obs: usize,
    pub horizon_days: usize,
}

/// Running nearness `p_t / max(p_1..p_t)`.
pub fn nearness_series(prices: &[f64]) -> Vec<f64> {
    let mut high = f64::NEG_INFINITY;
    prices
        .iter()
        .map(|&p| {
            high = high.max(p);
            p / high
        })
        .collect()
}

/// Regresses the forward `horizon`-day gross return on all-time-high
/// nearness, using every overlapping day.
pub fn ath_regression(daily_closes: &[f64], horizon: usize) -> Result<RegressionResult, AnalyticsError> {
    let n = daily_closes.len();
    if horizon == 0 || n < horizon + 3 {
        return Err(too_few(horizon + 3, n));
    }
    let near = nearness_series(daily_closes);
    let m = n - horizon;
    let x = &near[..m];
    let y: Vec<f64> = (0..m).map(|t| daily_closes[t + horizon] / daily_closes[t]).collect();
    let fit = ols(x, &y)?;
    Ok(RegressionResult {
        beta_h: fit.slope,
        intercept: fit.intercept,
        beta_se: fit.slope_se,
        n_obs: fit.n_obs,
        horizon_days: horizon,
    })
}

/// `p·w / (c + p·w)`.
pub fn asset_proportion(cash: f64, position: i64, price: f64) -> Result<f64, AnalyticsError> {
    let held = price * position as f64;
    let total = cash + held;
    if total == 0.0 {
        return Err(AnalyticsError::Degenerate("zero portfolio value".into()));
    }
    Ok(held / total)
}

/// Nearness at submission for each order placed by one of `agent_ids`,
/// split into (buys, sells). The running high covers every recorded market
/// price up to the order.
pub fn nearness_at_actions(ticks: &[TickRecord], agent_ids: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let mut buys = Vec::new();
    let mut sells = Vec::new();
    let mut high = f64::NEG_INFINITY;
    for t in ticks {
        high = high.max(t.market_price);
        if t.event != EventKind::Order {
            continue;
        }
        let Some(a) = t.agent_id else { continue };
        if !agent_ids.contains(&a) {
            continue;
        }
        let near = t.market_price / high;
        if t.signed_volume > 0 {
            buys.push(near);
        } else {
            sells.push(near);
        }
    }
    (buys, sells)
}

pub const DEFAULT_HORIZONS: [usize; 3] = [10, 15, 30];

/// Behavioural statistics over the FCL agents' orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviourReport {
    pub buy_nearness_mean: Option<f64>,
    pub sell_nearness_mean: Option<f64>,
    pub n_buys: usize,
    pub n_sells: usize,
    pub ks: Option<TestResult>,
    pub mann_whitney: Option<TestResult>,
    pub asset_proportion: Option<Percentiles>,
}

/// Everything computed for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub n_bars: usize,
    pub n_days: usize,
    pub stylized_facts: Option<StylizedFactsReport>,
    pub stylized_facts_error: Option<String>,
    pub regressions: Vec<RegressionResult>,
    pub regression_errors: BTreeMap<usize, String>,
    pub behaviour: Option<BehaviourReport>,
}

/// Builds the per-trial report. `fcl_agents` selects whose orders feed the
/// nearness tests; `asset_proportions` are the sampled portfolio shares.
pub fn analyze_trial(
    ticks: &[TickRecord],
    days: &DayStructure,
    steps_per_bar: u64,
    horizons: &[usize],
    fcl_agents: &[usize],
    asset_proportions: &[f64],
) -> AnalyticsReport {
    let bars = build_bars(ticks, days, steps_per_bar);
    let (stylized_facts, stylized_facts_error) = match stylized_facts(&bars) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let closes = bars.daily_closes();
    let mut regressions = Vec::new();
    let mut regression_errors = BTreeMap::new();
    for &h in horizons {
        match ath_regression(&closes, h) {
            Ok(r) => regressions.push(r),
            Err(e) => {
                regression_errors.insert(h, e.to_string());
            }
        }
    }
    let behaviour = (!fcl_agents.is_empty()).then(|| {
        let (b, s) = nearness_at_actions(ticks, fcl_agents);
        let avg = |v: &[f64]| (!v.is_empty()).then(|| mean(v));
        BehaviourReport {
            buy_nearness_mean: avg(&b),
            sell_nearness_mean: avg(&s),
            n_buys: b.len(),
            n_sells: s.len(),
            ks: ks_two_sample(&b, &s).ok(),
            mann_whitney: mann_whitney_u(&b, &s).ok(),
            asset_proportion: Percentiles::of(asset_proportions),
        }
    });
    AnalyticsReport {
        n_bars: bars.len(),
        n_days: bars.days(),
        stylized_facts,
        stylized_facts_error,
        regressions,
        regression_errors,
        behaviour,
    }
}

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn nonempty(a: &[f64], b: &[f64]) -> Result<(), AnalyticsError> {
    if a.is_empty() || b.is_empty() {
        Err(AnalyticsError::Degenerate("empty sample".into()))
    } else {
        Ok(())
    }
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic two-sided p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult, AnalyticsError> {
    nonempty(a, b)?;
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    let p = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    Ok(TestResult {
        statistic: d,
        p_value: p,
    })
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = sign * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Mann-Whitney U of `a` against `b` (midranks for ties) with a
/// tie-corrected, continuity-corrected normal two-sided p-value.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult, AnalyticsError> {
    nonempty(a, b)?;
    let mut all: Vec<(f64, bool)> = a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_a += midrank * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let u = rank_sum_a - na * (na + 1.0) / 2.0;
    let nt = na + nb;
    let var = na * nb / 12.0 * ((nt + 1.0) - tie_term / (nt * (nt - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - na * nb / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(TestResult { statistic: u, p_value: p })
}

/// Linear-interpolation percentile, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p01: f64,
    pub p50: f64,
    pub p99: f64,
    pub n: usize,
}

impl Percentiles {
    pub fn of(sample: &[f64]) -> Option<Self> {
        let s = sorted(sample);
        Some(Self {
            p01: percentile(&s, 0.01)?,
            p50: percentile(&s, 0.50)?,
            p99: percentile(&s, 0.99)?,
            n: s.len(),
        })
    }
}

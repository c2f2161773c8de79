//! Per-day ratios and rule triggers computed from a [`MarketSeries`]:
//! the short-interest change ratio R, the volume ratio Q, the
//! short-interest level ratio, dividend-adjusted price changes, and the
//! 10%-drop trigger of the alternative uptick rule.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::market_data::{MarketSeries, Price};

/// Trading days in the trailing average window (three months).
pub const DEFAULT_WINDOW: usize = 63;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Trailing-mean window in trading days.
    pub window: usize,
    /// Lag applied to the volume used in R: `R(t) = dS(t) / V(t - lag)`.
    /// Zero by default; reporting-date alignment makes same-day the
    /// right pairing, the knob exists for sensitivity runs.
    pub r_lag: usize,
    /// Whether a drop of exactly 10% counts as triggering the
    /// alternative uptick rule. Default is the strict reading.
    pub uptick_inclusive: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            window: DEFAULT_WINDOW,
            r_lag: 0,
            uptick_inclusive: false,
        }
    }
}

/// Ratios and triggers for one trading day. `None` marks undefined
/// values (warm-up, missing delta, zero denominators).
#[derive(Clone, Debug, PartialEq)]
pub struct DayMetrics {
    pub date: NaiveDate,
    /// Change in short interest over daily volume.
    pub r: Option<f64>,
    /// Daily volume over its trailing mean.
    pub q: Option<f64>,
    /// Short-interest level over its trailing mean.
    pub si_level_ratio: Option<f64>,
    /// Day-over-day change in adjusted close.
    pub adj_change: Option<Price>,
    /// The same change as a fraction of the prior adjusted close.
    pub adj_change_pct: Option<f64>,
    /// Alternative-uptick trigger; `None` on the first day.
    pub alt_uptick_triggered: Option<bool>,
}

/// Mean of `values[t-window .. t]`, strictly prior to `t`.
/// Undefined until `window` prior values exist.
pub fn trailing_mean(values: &[i64], t: usize, window: usize) -> Option<f64> {
    if window == 0 || t < window || t > values.len() {
        return None;
    }
    let sum: i128 = values[t - window..t].iter().map(|&v| v as i128).sum();
    Some(sum as f64 / window as f64)
}

/// R for a single day: delta short interest over volume.
pub fn short_change_ratio(delta_short: Option<i64>, volume: i64) -> Option<f64> {
    match delta_short {
        Some(d) if volume > 0 => Some(d as f64 / volume as f64),
        _ => None,
    }
}

/// Q at index `t`: volume over its trailing mean.
pub fn volume_ratio(series: &MarketSeries, t: usize, window: usize) -> Option<f64> {
    let volumes: Vec<i64> = series.days.iter().map(|d| d.volume).collect();
    ratio_to_trailing_mean(&volumes, t, window)
}

/// Short-interest level over its trailing mean at index `t`.
pub fn level_ratio(series: &MarketSeries, t: usize, window: usize) -> Option<f64> {
    let levels: Vec<i64> = series.days.iter().map(|d| d.short_interest).collect();
    ratio_to_trailing_mean(&levels, t, window)
}

fn ratio_to_trailing_mean(values: &[i64], t: usize, window: usize) -> Option<f64> {
    let mean = trailing_mean(values, t, window)?;
    if mean > 0.0 && t < values.len() {
        Some(values[t] as f64 / mean)
    } else {
        None
    }
}

/// Adjusted close change from the previous day, absolute and fractional.
/// Undefined at `t = 0`; the fraction alone is undefined when the prior
/// adjusted close is zero.
pub fn adjusted_price_change(
    series: &MarketSeries,
    t: usize,
) -> (Option<Price>, Option<f64>) {
    if t == 0 || t >= series.len() {
        return (None, None);
    }
    let prev = series.days[t - 1].adjusted_close;
    let change = series.days[t].adjusted_close - prev;
    let pct = if prev.units() != 0 {
        Some(change.units() as f64 / prev.units() as f64)
    } else {
        None
    };
    (Some(change), pct)
}

/// True when the day's low breaches 10% below the previous raw close.
/// Exact integer arithmetic: `low < 0.9 * prev` is `10*low < 9*prev`.
pub fn alt_uptick_triggered(low: Price, prev_close: Price, inclusive: bool) -> Option<bool> {
    if prev_close.units() <= 0 {
        return None;
    }
    let lhs = 10 * low.units();
    let rhs = 9 * prev_close.units();
    Some(if inclusive { lhs <= rhs } else { lhs < rhs })
}

/// Computes the full metric set for every day in the series.
pub fn compute_metrics(series: &MarketSeries, config: &MetricsConfig) -> Vec<DayMetrics> {
    let volumes: Vec<i64> = series.days.iter().map(|d| d.volume).collect();
    let levels: Vec<i64> = series.days.iter().map(|d| d.short_interest).collect();
    series
        .days
        .iter()
        .enumerate()
        .map(|(t, day)| {
            let r = if t >= config.r_lag {
                short_change_ratio(day.delta_short, volumes[t - config.r_lag])
            } else {
                None
            };
            let (adj_change, adj_change_pct) = adjusted_price_change(series, t);
            let alt_uptick_triggered = if t > 0 {
                alt_uptick_triggered(day.low, series.days[t - 1].close, config.uptick_inclusive)
            } else {
                None
            };
            DayMetrics {
                date: day.date,
                r,
                q: ratio_to_trailing_mean(&volumes, t, config.window),
                si_level_ratio: ratio_to_trailing_mean(&levels, t, config.window),
                adj_change,
                adj_change_pct,
                alt_uptick_triggered,
            }
        })
        .collect()
}

/// Metrics CSV with empty fields for undefined values:
/// `date,R,Q,si_level_ratio,adj_change,adj_change_pct,alt_uptick`.
pub fn metrics_to_csv(metrics: &[DayMetrics]) -> String {
    fn opt_f64(v: Option<f64>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }
    let mut out = String::from("date,R,Q,si_level_ratio,adj_change,adj_change_pct,alt_uptick\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            m.date,
            opt_f64(m.r),
            opt_f64(m.q),
            opt_f64(m.si_level_ratio),
            m.adj_change.map(|p| p.to_string()).unwrap_or_default(),
            opt_f64(m.adj_change_pct),
            m.alt_uptick_triggered.map(|b| b.to_string()).unwrap_or_default(),
        ));
    }
    out
}

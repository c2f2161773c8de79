//! Anomaly scanning and raid-candidate pairing: flags days whose R and Q
//! ratios clear configured thresholds, pairs opening spikes with the
//! covering spike that best restores the prior short-interest baseline,
//! and attaches probabilities, profit estimates, and falsification
//! screens to each pair.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{MarketSeries, Money, ShortRecord};
use crate::metrics::{self, DayMetrics};
use crate::tail_fit::{FitBundle, LaplaceFit, PowerLawFit};

/// Thresholds and windows for scanning and pairing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Minimum R for an opening spike (and, negated, a covering spike).
    pub r_open_min: f64,
    /// Minimum Q for an opening spike.
    pub q_min: f64,
    /// How many trading days after an open a cover may follow.
    pub pairing_window: usize,
    /// Largest acceptable |S(cover) - S(pre-open)| / S(pre-open).
    pub baseline_tolerance: f64,
    /// Day-separation factor in the joint-probability estimate.
    pub joint_window: usize,
    pub trading_days_per_year: u32,
    /// Dates removed from tail fits (not from scanning).
    pub exclude_dates: BTreeSet<NaiveDate>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            r_open_min: 0.5,
            q_min: 3.0,
            pairing_window: 10,
            baseline_tolerance: 0.10,
            joint_window: 6,
            trading_days_per_year: 250,
            exclude_dates: BTreeSet::new(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.r_open_min <= 0.0 || self.q_min <= 0.0 {
            return Err(DetectorError::InvalidConfig("thresholds must be positive"));
        }
        if self.pairing_window < 1 {
            return Err(DetectorError::InvalidConfig("pairing_window must be >= 1"));
        }
        if !(self.baseline_tolerance > 0.0 && self.baseline_tolerance < 1.0) {
            return Err(DetectorError::InvalidConfig(
                "baseline_tolerance must lie in (0, 1)",
            ));
        }
        if self.joint_window < 1 || self.trading_days_per_year == 0 {
            return Err(DetectorError::InvalidConfig(
                "joint_window and trading_days_per_year must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("invalid detector config: {0}")]
    InvalidConfig(&'static str),
    #[error("probability must be positive, got {0}")]
    NonPositiveProbability(f64),
    #[error("date {0} not present in the series")]
    UnknownDate(NaiveDate),
    #[error("ban window {start}..={end} outside the series range")]
    WindowOutsideRange { start: NaiveDate, end: NaiveDate },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    OpenSpike,
    CoverSpike,
}

/// A flagged trading day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub date: NaiveDate,
    pub kind: AnomalyKind,
    pub r: f64,
    pub q: f64,
    pub si_level_ratio: Option<f64>,
    /// Tail probability of the day's R; `None` when no fit covers it.
    pub p_r: Option<f64>,
    /// Tail probability of the day's Q.
    pub p_q: Option<f64>,
}

/// Dividend-arbitrage screen outcome for an opening date.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DividendScreen {
    /// Opened on or after the nearest ex-date: borrowed shares earn no
    /// dividend, so dividend arbitrage cannot explain the borrow.
    Excluded,
    /// Opened strictly before a nearby ex-date: the borrow could have
    /// captured the dividend.
    Possible,
    NoDividendNearby,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenResults {
    pub dividend: DividendScreen,
    pub alt_uptick_open: Option<bool>,
    pub alt_uptick_cover: Option<bool>,
}

/// A paired open/cover anomaly with everything the report needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaidCandidate {
    pub open: Anomaly,
    pub cover: Anomaly,
    /// Trading days between open and cover.
    pub separation: usize,
    /// |S(cover) - S(pre-open)| / S(pre-open).
    pub baseline_gap: f64,
    pub p_joint: Option<f64>,
    pub waiting_time_years: Option<f64>,
    #[serde(with = "money_cents")]
    pub profit_estimate: Money,
    pub off_market_residual: i64,
    pub screens: ScreenResults,
}

mod money_cents {
    use super::Money;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        cents: String,
        usd: f64,
    }

    pub fn serialize<S: Serializer>(m: &Money, s: S) -> Result<S::Ok, S::Error> {
        Repr { cents: m.cents().to_string(), usd: m.to_f64_dollars() }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Money, D::Error> {
        let repr = Repr::deserialize(d)?;
        let cents = repr.cents.parse::<i128>().map_err(serde::de::Error::custom)?;
        Ok(Money::from_cents(cents))
    }
}

/// Flags opening spikes (R and Q both past their thresholds) and
/// covering spikes (R at or below the negated threshold). Days with an
/// undefined R or Q are never flagged.
pub fn scan_anomalies(metrics: &[DayMetrics], config: &DetectorConfig) -> Vec<Anomaly> {
    let mut out = Vec::new();
    for m in metrics {
        let (r, q) = match (m.r, m.q) {
            (Some(r), Some(q)) => (r, q),
            _ => continue,
        };
        let kind = if r >= config.r_open_min && q >= config.q_min {
            AnomalyKind::OpenSpike
        } else if r <= -config.r_open_min {
            AnomalyKind::CoverSpike
        } else {
            continue;
        };
        out.push(Anomaly {
            date: m.date,
            kind,
            r,
            q,
            si_level_ratio: m.si_level_ratio,
            p_r: None,
            p_q: None,
        });
    }
    out
}

/// The fitted models the scanner evaluates probabilities against.
#[derive(Clone, Debug, Default)]
pub struct TailFits {
    pub r_positive: Option<PowerLawFit>,
    pub r_laplace: Option<LaplaceFit>,
    pub q: Option<PowerLawFit>,
}

impl TailFits {
    pub fn from_bundle(bundle: &FitBundle) -> Self {
        TailFits {
            r_positive: bundle.r_positive.as_ref().ok().map(|f| f.fit.clone()),
            r_laplace: bundle.r_laplace.as_ref().ok().map(|f| f.fit.clone()),
            q: bundle.q.as_ref().ok().map(|f| f.fit.clone()),
        }
    }
}

/// Tail probabilities for one anomaly: the R probability from the power
/// law (opens) or the Laplace lower tail in its raw exponential form
/// (covers), and the Q probability from the Q power law. `None` where a
/// fit is missing or the value falls outside its domain.
pub fn event_probability(anomaly: &Anomaly, fits: &TailFits) -> (Option<f64>, Option<f64>) {
    let p_r = match anomaly.kind {
        AnomalyKind::OpenSpike => fits
            .r_positive
            .as_ref()
            .and_then(|f| f.tail_probability(anomaly.r).ok()),
        AnomalyKind::CoverSpike => fits
            .r_laplace
            .as_ref()
            .map(|f| f.lower_tail_unnormalized(anomaly.r)),
    };
    let p_q = fits
        .q
        .as_ref()
        .and_then(|f| f.tail_probability(anomaly.q).ok());
    (p_r, p_q)
}

/// Attaches event probabilities to every anomaly in place.
pub fn attach_probabilities(anomalies: &mut [Anomaly], fits: &TailFits) {
    for anomaly in anomalies.iter_mut() {
        let (p_r, p_q) = event_probability(anomaly, fits);
        anomaly.p_r = p_r;
        anomaly.p_q = p_q;
    }
}

/// Probability of two events of the given probabilities landing within
/// `window` trading days of each other: `min(1, p1 * p2 * window)`.
pub fn joint_probability(p1: f64, p2: f64, window: usize) -> f64 {
    (p1 * p2 * window as f64).min(1.0)
}

/// Mean years between events of daily probability `p`.
pub fn waiting_time_years(p: f64, trading_days_per_year: u32) -> Result<f64, DetectorError> {
    if p <= 0.0 {
        return Err(DetectorError::NonPositiveProbability(p));
    }
    Ok(1.0 / (p * trading_days_per_year as f64))
}

/// Exact-rational form of [`waiting_time_years`] for probabilities known
/// as exact fractions: `1 / (p * days)` with no rounding anywhere.
pub fn waiting_time_years_exact(
    p: Ratio<i128>,
    trading_days_per_year: u32,
) -> Result<Ratio<i128>, DetectorError> {
    if p <= Ratio::from_integer(0) {
        return Err(DetectorError::NonPositiveProbability(0.0));
    }
    Ok((p * Ratio::from_integer(trading_days_per_year as i128)).recip())
}

/// Short-sale gain implied by a candidate: the shares opened times the
/// adjusted-close difference between the open and cover dates.
pub fn estimate_profit(
    series: &MarketSeries,
    open_date: NaiveDate,
    cover_date: NaiveDate,
) -> Result<Money, DetectorError> {
    let open = series
        .index_of(open_date)
        .ok_or(DetectorError::UnknownDate(open_date))?;
    let cover = series
        .index_of(cover_date)
        .ok_or(DetectorError::UnknownDate(cover_date))?;
    let opened = series.days[open].delta_short.unwrap_or(0) as i128;
    let diff = (series.days[open].adjusted_close.units()
        - series.days[cover].adjusted_close.units()) as i128;
    Ok(Money::from_price_units(opened * diff))
}

/// Shares of a covering day's short-interest decrease that recorded
/// trading volume cannot account for: `max(0, |dS| - V)`.
pub fn off_market_residual(
    series: &MarketSeries,
    cover_date: NaiveDate,
) -> Result<i64, DetectorError> {
    let idx = series
        .index_of(cover_date)
        .ok_or(DetectorError::UnknownDate(cover_date))?;
    let day = &series.days[idx];
    let delta = day.delta_short.unwrap_or(0);
    Ok((delta.abs() - day.volume).max(0))
}

/// Trading days scanned ahead of an open for an ex-dividend date.
pub const DIVIDEND_LOOKAHEAD_DAYS: usize = 5;

/// Classifies whether a borrow opened on `open_date` could have been
/// dividend arbitrage. The lookahead window runs from the open date
/// through the next [`DIVIDEND_LOOKAHEAD_DAYS`] trading days.
pub fn dividend_arbitrage_screen(
    open_date: NaiveDate,
    ex_dividend_dates: &BTreeSet<NaiveDate>,
    trading_days: &[NaiveDate],
) -> DividendScreen {
    let idx = match trading_days.binary_search(&open_date) {
        Ok(i) => i,
        Err(i) => i,
    };
    let end = (idx + DIVIDEND_LOOKAHEAD_DAYS).min(trading_days.len().saturating_sub(1));
    let nearest = trading_days
        .get(idx..=end)
        .into_iter()
        .flatten()
        .find(|d| ex_dividend_dates.contains(d));
    match nearest {
        Some(&ex) if open_date >= ex => DividendScreen::Excluded,
        Some(_) => DividendScreen::Possible,
        None => DividendScreen::NoDividendNearby,
    }
}

/// Offsets tried when aligning borrowing activity against a ban window.
pub const MAX_REPORTING_LAG: usize = 10;
/// Minimum alignment correlation for a conclusive lag estimate.
pub const LAG_SCORE_FLOOR: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagCheck {
    /// Offset (trading days) at which suppression best aligns with the window.
    pub lag: usize,
    /// Pearson correlation at that offset.
    pub score: f64,
    /// False when no offset scores above the floor.
    pub conclusive: bool,
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Estimates the delay between real borrowing activity and its reported
/// dates by sliding the "no new borrowing" indicator against a known
/// short-sale-ban window and keeping the best-correlated offset.
pub fn reporting_lag_check(
    records: &[ShortRecord],
    ban_start: NaiveDate,
    ban_end: NaiveDate,
) -> Result<LagCheck, DetectorError> {
    let first = records.first().map(|r| r.date);
    let last = records.last().map(|r| r.date);
    match (first, last) {
        (Some(f), Some(l)) if ban_start >= f && ban_end <= l && ban_start <= ban_end => {}
        _ => return Err(DetectorError::WindowOutsideRange { start: ban_start, end: ban_end }),
    }

    let ban: Vec<f64> = records
        .iter()
        .map(|r| {
            if r.date >= ban_start && r.date <= ban_end {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let suppressed: Vec<f64> = records
        .iter()
        .map(|r| match r.delta {
            Some(d) if d > 0 => 0.0,
            _ => 1.0,
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for lag in 0..=MAX_REPORTING_LAG {
        if records.len() <= lag + 1 {
            break;
        }
        let overlap = records.len() - lag;
        let score = match pearson(&ban[..overlap], &suppressed[lag..]) {
            Some(s) => s,
            None => continue,
        };
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((lag, score));
        }
    }
    let (lag, score) = best.unwrap_or((0, 0.0));
    Ok(LagCheck { lag, score, conclusive: score >= LAG_SCORE_FLOOR })
}

/// Pairs each opening spike with the covering spike in its window that
/// best restores the pre-open short-interest baseline. Opens are
/// processed in date order and each cover is used at most once; a pair
/// is kept only when the baseline gap is within tolerance.
pub fn pair_candidates(
    anomalies: &[Anomaly],
    series: &MarketSeries,
    config: &DetectorConfig,
) -> Vec<RaidCandidate> {
    let trading_days = series.trading_days();
    let ex_dates = series.ex_dividend_dates();
    let covers: Vec<(usize, &Anomaly)> = anomalies
        .iter()
        .filter(|a| a.kind == AnomalyKind::CoverSpike)
        .filter_map(|a| series.index_of(a.date).map(|i| (i, a)))
        .collect();
    let mut cover_used = vec![false; covers.len()];
    let mut out = Vec::new();

    for open in anomalies.iter().filter(|a| a.kind == AnomalyKind::OpenSpike) {
        let open_idx = match series.index_of(open.date) {
            Some(i) if i > 0 => i,
            _ => continue,
        };
        let baseline = series.days[open_idx - 1].short_interest;

        // argmin of |S(cover) - baseline| over unused covers in the
        // window; equal gaps resolve to the earlier cover.
        let mut chosen: Option<(usize, i64)> = None;
        for (ci, &(cover_idx, _)) in covers.iter().enumerate() {
            if cover_used[ci]
                || cover_idx <= open_idx
                || cover_idx - open_idx > config.pairing_window
            {
                continue;
            }
            let gap = (series.days[cover_idx].short_interest - baseline).abs();
            match chosen {
                Some((_, best)) if gap >= best => {}
                _ => chosen = Some((ci, gap)),
            }
        }
        let (ci, gap_shares) = match chosen {
            Some(c) => c,
            None => continue,
        };
        let gap_fraction = if baseline > 0 {
            gap_shares as f64 / baseline as f64
        } else if gap_shares == 0 {
            0.0
        } else {
            f64::INFINITY
        };
        if gap_fraction > config.baseline_tolerance {
            continue;
        }
        cover_used[ci] = true;

        let (cover_idx, cover) = covers[ci];
        let p_joint = match (open.p_r, cover.p_r) {
            (Some(a), Some(b)) => Some(joint_probability(a, b, config.joint_window)),
            _ => None,
        };
        let waiting = p_joint
            .and_then(|p| waiting_time_years(p, config.trading_days_per_year).ok());
        let profit = estimate_profit(series, open.date, cover.date)
            .unwrap_or(Money::from_cents(0));
        let residual = off_market_residual(series, cover.date).unwrap_or(0);
        let screens = ScreenResults {
            dividend: dividend_arbitrage_screen(open.date, &ex_dates, &trading_days),
            alt_uptick_open: alt_uptick_at(series, open_idx),
            alt_uptick_cover: alt_uptick_at(series, cover_idx),
        };
        out.push(RaidCandidate {
            open: open.clone(),
            cover: cover.clone(),
            separation: cover_idx - open_idx,
            baseline_gap: gap_fraction,
            p_joint,
            waiting_time_years: waiting,
            profit_estimate: profit,
            off_market_residual: residual,
            screens,
        });
    }
    out
}

fn alt_uptick_at(series: &MarketSeries, idx: usize) -> Option<bool> {
    if idx == 0 {
        return None;
    }
    metrics::alt_uptick_triggered(series.days[idx].low, series.days[idx - 1].close, false)
}

/// Scan, attach probabilities, and pair in one pass.
pub fn run_detector(
    series: &MarketSeries,
    metrics: &[DayMetrics],
    fits: &TailFits,
    config: &DetectorConfig,
) -> (Vec<Anomaly>, Vec<RaidCandidate>) {
    let mut anomalies = scan_anomalies(metrics, config);
    attach_probabilities(&mut anomalies, fits);
    let candidates = pair_candidates(&anomalies, series, config);
    (anomalies, candidates)
}

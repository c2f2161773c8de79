//! Shared fixtures and independent oracles for the integration suites.
//!
//! The pairing oracle recomputes everything from raw series data with
//! direct loops; it shares no code with the library's scan/pair path.

use chrono::{Datelike, NaiveDate, Weekday};
use raidscan_core::detector::DetectorConfig;
use raidscan_core::market_data::{
    build_series, reconcile_deltas, DeltaSource, MarketSeries, Price, PriceBar, ShortRecord,
};

/// `n` consecutive weekdays starting at `start`.
pub fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if d.weekday() != Weekday::Sat && d.weekday() != Weekday::Sun {
            out.push(d);
        }
        d = d.succ_opt().unwrap();
    }
    out
}

/// A hand-built series shaped like the widely reported Citigroup
/// episode of November 2007: 63 quiet warm-up days, an opening spike on
/// an ex-dividend day (volume jumping to 171M with +130M shares
/// borrowed), five drifting days, then a covering spike (-202M on 121M
/// volume) that restores the prior short-interest baseline.
///
/// Index 63 is the open (2007-11-01); index 69 is the cover.
pub fn citi_fixture() -> MarketSeries {
    let n = 73;
    let dates = weekdays(NaiveDate::from_ymd_opt(2007, 8, 6).unwrap(), n);
    assert_eq!(dates[63], NaiveDate::from_ymd_opt(2007, 11, 1).unwrap());

    let mut volumes = vec![46_216_216i64; n];
    volumes[63] = 171_000_000;
    volumes[69] = 121_000_000;

    // Warm-up short interest ramps to 115M with a 63-day mean of
    // 64,473,689, putting the open-day level at 3.8x the mean.
    let mut shorts = Vec::with_capacity(n);
    for i in 0..63 {
        shorts.push(13_947_378 + i as i64 * 1_629_881);
    }
    shorts.push(245_000_000); // open: +130M
    for i in 1..=5 {
        shorts.push(245_000_000 + 14_000_000 * i); // drifts to 315M
    }
    shorts.push(113_000_000); // cover: -202M
    shorts.extend([114_000_000, 115_000_000, 116_000_000]);
    assert_eq!(shorts.len(), n);

    let p = |s: &str| Price::parse(s).unwrap();
    let mut closes = vec![p("41.85"); n];
    let mut highs = vec![p("42.20"); n];
    let mut lows = vec![p("41.50"); n];
    let mid_closes = ["37.50", "36.50", "35.50", "34.50", "33.80"];
    closes[63] = p("38.46");
    highs[63] = p("41.90");
    lows[63] = p("38.09"); // 9% below the prior close: no uptick trigger
    for (k, c) in mid_closes.iter().enumerate() {
        closes[64 + k] = p(c);
        highs[64 + k] = closes[64 + k] + p("0.30");
        lows[64 + k] = closes[64 + k] - p("0.30");
    }
    closes[69] = p("33.64");
    highs[69] = p("34.20");
    lows[69] = p("33.30");
    for i in 70..n {
        closes[i] = p("33.70");
        highs[i] = p("34.00");
        lows[i] = p("33.40");
    }

    let bars: Vec<PriceBar> = (0..n)
        .map(|i| PriceBar {
            date: dates[i],
            high: highs[i],
            low: lows[i],
            close: closes[i],
            volume: volumes[i],
            dividend: if i == 63 { p("0.54") } else { Price::from_units(0) },
        })
        .collect();
    let records: Vec<ShortRecord> = (0..n)
        .map(|i| ShortRecord {
            date: dates[i],
            total_short_interest: shorts[i],
            delta: None,
            delta_source: DeltaSource::Differenced,
            reconciliation_gap: 0,
        })
        .collect();
    build_series(&bars, &reconcile_deltas(&records), "C").unwrap().0
}

/// Exhaustive pairing oracle. Flags anomalies by recomputing R and Q
/// with direct summation, then matches each open (in date order) to the
/// unused in-window cover with the smallest baseline gap, keeping pairs
/// within tolerance. Returns `(open_date, cover_date)` pairs in order.
pub fn brute_force_pairs(
    series: &MarketSeries,
    config: &DetectorConfig,
) -> Vec<(NaiveDate, NaiveDate)> {
    const WINDOW: usize = 63;
    let days = &series.days;
    let n = days.len();

    #[derive(PartialEq)]
    enum Kind {
        Open,
        Cover,
    }
    let mut flagged: Vec<(usize, Kind)> = Vec::new();
    for t in 0..n {
        if t < WINDOW {
            continue;
        }
        let mut vol_sum = 0.0f64;
        for day in &days[t - WINDOW..t] {
            vol_sum += day.volume as f64;
        }
        let vbar = vol_sum / WINDOW as f64;
        if vbar <= 0.0 || days[t].volume <= 0 {
            continue;
        }
        let q = days[t].volume as f64 / vbar;
        let delta = match days[t].delta_short {
            Some(d) => d,
            None => continue,
        };
        let r = delta as f64 / days[t].volume as f64;
        if r >= config.r_open_min && q >= config.q_min {
            flagged.push((t, Kind::Open));
        } else if r <= -config.r_open_min {
            flagged.push((t, Kind::Cover));
        }
    }

    let cover_indices: Vec<usize> = flagged
        .iter()
        .filter(|(_, k)| *k == Kind::Cover)
        .map(|&(t, _)| t)
        .collect();
    let mut used = vec![false; cover_indices.len()];
    let mut pairs = Vec::new();
    for &(open_t, ref kind) in &flagged {
        if *kind != Kind::Open || open_t == 0 {
            continue;
        }
        let baseline = days[open_t - 1].short_interest;
        let mut best: Option<(usize, i64)> = None;
        for (ci, &cover_t) in cover_indices.iter().enumerate() {
            if used[ci] || cover_t <= open_t || cover_t - open_t > config.pairing_window {
                continue;
            }
            let gap = (days[cover_t].short_interest - baseline).abs();
            let better = match best {
                None => true,
                Some((_, b)) => gap < b,
            };
            if better {
                best = Some((ci, gap));
            }
        }
        if let Some((ci, gap)) = best {
            let ok = if baseline > 0 {
                gap as f64 / baseline as f64 <= config.baseline_tolerance
            } else {
                gap == 0
            };
            if ok {
                used[ci] = true;
                pairs.push((days[open_t].date, days[cover_indices[ci]].date));
            }
        }
    }
    pairs
}

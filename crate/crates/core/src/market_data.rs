//! Ingestion, validation, and alignment of daily price/volume and
//! securities-lending data into an immutable per-ticker series.
//!
//! Money is held as integer ten-thousandths of a dollar per share
//! (hundredths of a cent) so that every downstream comparison is exact;
//! aggregate amounts use 128-bit integer cents.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scale factor between [`Price`] units and dollars.
pub const PRICE_SCALE: i64 = 10_000;

/// Per-share money amount in ten-thousandths of a dollar.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Price(i64);

impl Price {
    pub fn from_units(units: i64) -> Self {
        Price(units)
    }

    /// Exact construction from whole dollars.
    pub fn from_dollars(dollars: i64) -> Self {
        Price(dollars * PRICE_SCALE)
    }

    pub fn units(self) -> i64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn to_f64_dollars(self) -> f64 {
        self.0 as f64 / PRICE_SCALE as f64
    }

    /// Nearest-unit conversion from a floating dollar amount.
    /// Used by the synthetic generator; parsing never goes through f64.
    pub fn from_f64_dollars(dollars: f64) -> Self {
        Price((dollars * PRICE_SCALE as f64).round() as i64)
    }

    /// Parses a decimal dollar amount exactly. At most four fractional
    /// digits are representable; more is an error, never a silent rounding.
    pub fn parse(s: &str) -> Result<Self, PriceParseError> {
        let s = s.trim();
        if s.is_empty() {
            return Err(PriceParseError::Empty);
        }
        let (sign, digits) = match s.strip_prefix('-') {
            Some(rest) => (-1i64, rest),
            None => (1i64, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int_part, frac_part) = match digits.split_once('.') {
            Some((i, f)) => (i, f),
            None => (digits, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(PriceParseError::Malformed(s.to_string()));
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(PriceParseError::Malformed(s.to_string()));
        }
        if frac_part.len() > 4 {
            return Err(PriceParseError::TooManyDecimals(s.to_string()));
        }
        let int_units = int_part
            .parse::<i64>()
            .unwrap_or(0)
            .checked_mul(PRICE_SCALE)
            .ok_or_else(|| PriceParseError::Overflow(s.to_string()))?;
        let mut frac_units = frac_part.parse::<i64>().unwrap_or(0);
        for _ in frac_part.len()..4 {
            frac_units *= 10;
        }
        int_units
            .checked_add(frac_units)
            .and_then(|u| u.checked_mul(sign))
            .map(Price)
            .ok_or_else(|| PriceParseError::Overflow(s.to_string()))
    }
}

impl fmt::Display for Price {
    /// Shortest exact decimal form: `42.31`, `0.54`, `38`, `-2.85`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / PRICE_SCALE as u64;
        let mut frac = abs % PRICE_SCALE as u64;
        if frac == 0 {
            return write!(f, "{sign}{whole}");
        }
        let mut width = 4;
        while frac.is_multiple_of(10) {
            frac /= 10;
            width -= 1;
        }
        write!(f, "{sign}{whole}.{frac:0width$}")
    }
}

impl std::ops::Sub for Price {
    type Output = Price;
    fn sub(self, rhs: Price) -> Price {
        Price(self.0 - rhs.0)
    }
}

impl std::ops::Add for Price {
    type Output = Price;
    fn add(self, rhs: Price) -> Price {
        Price(self.0 + rhs.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PriceParseError {
    #[error("empty money field")]
    Empty,
    #[error("malformed money value `{0}`")]
    Malformed(String),
    #[error("money value `{0}` has more than four decimal places")]
    TooManyDecimals(String),
    #[error("money value `{0}` out of range")]
    Overflow(String),
}

/// Aggregate money in integer cents (128-bit).
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Money(i128);

impl Money {
    pub fn from_cents(cents: i128) -> Self {
        Money(cents)
    }

    /// Converts an amount in ten-thousandths of a dollar to cents,
    /// rounding half away from zero so negation stays exact.
    pub fn from_price_units(units: i128) -> Self {
        let q = units / 100;
        let r = units % 100;
        let adj = if r.abs() * 2 >= 100 { r.signum() } else { 0 };
        Money(q + adj)
    }

    pub fn cents(self) -> i128 {
        self.0
    }

    pub fn to_f64_dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl std::ops::Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

/// One day of price/volume data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub high: Price,
    pub low: Price,
    pub close: Price,
    pub volume: i64,
    /// Zero when no dividend; nonzero marks an ex-dividend date.
    pub dividend: Price,
}

impl PriceBar {
    fn validate(&self) -> Result<(), String> {
        if self.low > self.high {
            return Err(format!("low {} exceeds high {}", self.low, self.high));
        }
        if self.close < self.low || self.close > self.high {
            return Err(format!(
                "close {} outside [{}, {}]",
                self.close, self.low, self.high
            ));
        }
        if self.volume < 0 {
            return Err(format!("negative volume {}", self.volume));
        }
        if self.low.units() < 0 {
            return Err(format!("negative price {}", self.low));
        }
        if self.dividend.units() < 0 {
            return Err(format!("negative dividend {}", self.dividend));
        }
        Ok(())
    }
}

/// Where a day's short-interest delta came from.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSource {
    /// The vendor supplied an incremental-change figure.
    Reported,
    /// Derived as the day-over-day difference of the level series.
    Differenced,
}

/// One day of securities-lending data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShortRecord {
    pub date: NaiveDate,
    pub total_short_interest: i64,
    /// Change in short interest. `None` until reconciled; stays `None`
    /// on the first record, where no difference is computable.
    pub delta: Option<i64>,
    pub delta_source: DeltaSource,
    /// `reported delta − (S(t) − S(t−1))`; nonzero only for reported
    /// deltas, where vendor corrections can disagree with the levels.
    pub reconciliation_gap: i64,
}

/// Merged price + lending record for one trading day.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarketDay {
    pub date: NaiveDate,
    pub high: Price,
    pub low: Price,
    pub close: Price,
    pub volume: i64,
    pub dividend: Price,
    pub short_interest: i64,
    pub delta_short: Option<i64>,
    pub delta_source: DeltaSource,
    pub reconciliation_gap: i64,
    /// Close with later dividends subtracted (subtractive back-adjustment).
    pub adjusted_close: Price,
}

/// Immutable per-ticker daily series with strictly increasing dates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarketSeries {
    pub ticker: String,
    pub days: Vec<MarketDay>,
}

impl MarketSeries {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.days.binary_search_by_key(&date, |d| d.date).ok()
    }

    /// Dates carrying a nonzero dividend.
    pub fn ex_dividend_dates(&self) -> BTreeSet<NaiveDate> {
        self.days
            .iter()
            .filter(|d| !d.dividend.is_zero())
            .map(|d| d.date)
            .collect()
    }

    pub fn trading_days(&self) -> Vec<NaiveDate> {
        self.days.iter().map(|d| d.date).collect()
    }

    pub fn to_price_bars(&self) -> Vec<PriceBar> {
        self.days
            .iter()
            .map(|d| PriceBar {
                date: d.date,
                high: d.high,
                low: d.low,
                close: d.close,
                volume: d.volume,
                dividend: d.dividend,
            })
            .collect()
    }

    pub fn to_short_records(&self) -> Vec<ShortRecord> {
        self.days
            .iter()
            .map(|d| ShortRecord {
                date: d.date,
                total_short_interest: d.short_interest,
                delta: d.delta_short,
                delta_source: d.delta_source,
                reconciliation_gap: d.reconciliation_gap,
            })
            .collect()
    }

    /// Serializes back to the price CSV schema.
    pub fn to_price_csv(&self) -> String {
        let mut out = String::from("date,high,low,close,volume,dividend\n");
        for d in &self.days {
            let dividend = if d.dividend.is_zero() {
                "0".to_string()
            } else {
                d.dividend.to_string()
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                d.date, d.high, d.low, d.close, d.volume, dividend
            ));
        }
        out
    }

    /// Serializes back to the short-interest CSV schema. Only reported
    /// deltas are written; differenced ones re-derive on ingestion.
    pub fn to_short_csv(&self) -> String {
        let mut out = String::from("date,total_short_interest,delta_short_interest\n");
        for d in &self.days {
            let delta = match (d.delta_source, d.delta_short) {
                (DeltaSource::Reported, Some(v)) => v.to_string(),
                _ => String::new(),
            };
            out.push_str(&format!("{},{},{}\n", d.date, d.short_interest, delta));
        }
        out
    }
}

/// Days dropped and reconciliation totals from [`build_series`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub aligned_days: usize,
    pub dropped_price_days: usize,
    pub dropped_short_days: usize,
    pub reconciliation_gap_signed: i64,
    pub reconciliation_gap_abs: i64,
    pub days_with_gap: usize,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("line {line}: {message}")]
    InvalidRow { line: u64, message: String },
    #[error("line {line}: duplicate date {date}")]
    DuplicateDate { line: u64, date: NaiveDate },
    #[error("csv read error: {0}")]
    Csv(#[from] csv::Error),
    #[error("price and short-interest dates have no days in common")]
    EmptyIntersection,
    #[error("{side} records are not sorted by date at {date}")]
    NotSorted { side: &'static str, date: NaiveDate },
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_date(s: &str, line: u64) -> Result<NaiveDate, DataError> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|_| DataError::MalformedRow {
        line,
        message: format!("unparseable date `{s}`"),
    })
}

fn parse_shares(s: &str, line: u64, field: &str) -> Result<i64, DataError> {
    let t = s.trim();
    let cleaned = t.strip_prefix('+').unwrap_or(t);
    cleaned.parse::<i64>().map_err(|_| DataError::MalformedRow {
        line,
        message: format!("unparseable {field} `{s}`"),
    })
}

fn parse_money(s: &str, line: u64, field: &str) -> Result<Price, DataError> {
    Price::parse(s).map_err(|e| DataError::MalformedRow {
        line,
        message: format!("{field}: {e}"),
    })
}

/// Parses the price CSV (`date,high,low,close,volume,dividend`).
/// Rows come back in file order, each validated against the bar invariants.
pub fn parse_price_csv(raw: impl Read) -> Result<Vec<PriceBar>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(raw);
    let mut bars = Vec::new();
    let mut seen = BTreeSet::new();
    for result in reader.records() {
        let record = result?;
        let line = record_line(&record);
        if record.len() != 6 {
            return Err(DataError::MalformedRow {
                line,
                message: format!("expected 6 fields, found {}", record.len()),
            });
        }
        let date = parse_date(&record[0], line)?;
        if !seen.insert(date) {
            return Err(DataError::DuplicateDate { line, date });
        }
        let dividend_field = record[5].trim();
        let bar = PriceBar {
            date,
            high: parse_money(&record[1], line, "high")?,
            low: parse_money(&record[2], line, "low")?,
            close: parse_money(&record[3], line, "close")?,
            volume: parse_shares(&record[4], line, "volume")?,
            dividend: if dividend_field.is_empty() {
                Price::from_units(0)
            } else {
                parse_money(dividend_field, line, "dividend")?
            },
        };
        bar.validate()
            .map_err(|message| DataError::InvalidRow { line, message })?;
        bars.push(bar);
    }
    Ok(bars)
}

/// Parses the short-interest CSV
/// (`date,total_short_interest,delta_short_interest`, third column optional).
pub fn parse_short_csv(raw: impl Read) -> Result<Vec<ShortRecord>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(raw);
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for result in reader.records() {
        let record = result?;
        let line = record_line(&record);
        if record.len() < 2 || record.len() > 3 {
            return Err(DataError::MalformedRow {
                line,
                message: format!("expected 2 or 3 fields, found {}", record.len()),
            });
        }
        let date = parse_date(&record[0], line)?;
        if !seen.insert(date) {
            return Err(DataError::DuplicateDate { line, date });
        }
        let total = parse_shares(&record[1], line, "total_short_interest")?;
        if total < 0 {
            return Err(DataError::InvalidRow {
                line,
                message: format!("negative total_short_interest {total}"),
            });
        }
        let delta_field = record.get(2).unwrap_or("").trim();
        let (delta, delta_source) = if delta_field.is_empty() {
            (None, DeltaSource::Differenced)
        } else {
            (
                Some(parse_shares(delta_field, line, "delta_short_interest")?),
                DeltaSource::Reported,
            )
        };
        records.push(ShortRecord {
            date,
            total_short_interest: total,
            delta,
            delta_source,
            reconciliation_gap: 0,
        });
    }
    Ok(records)
}

/// Fills in missing deltas by differencing the level series and records
/// the gap between reported deltas and the level differences.
///
/// The first record's delta is always left undefined: there is no prior
/// level to difference against and no way to verify a reported value.
pub fn reconcile_deltas(records: &[ShortRecord]) -> Vec<ShortRecord> {
    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let mut rec = rec.clone();
        if i == 0 {
            rec.delta = None;
            rec.delta_source = DeltaSource::Differenced;
            rec.reconciliation_gap = 0;
        } else {
            let diff = rec.total_short_interest - records[i - 1].total_short_interest;
            match (rec.delta_source, rec.delta) {
                (DeltaSource::Reported, Some(reported)) => {
                    rec.reconciliation_gap = reported - diff;
                }
                _ => {
                    rec.delta = Some(diff);
                    rec.delta_source = DeltaSource::Differenced;
                    rec.reconciliation_gap = 0;
                }
            }
        }
        out.push(rec);
    }
    out
}

fn check_sorted<T, F: Fn(&T) -> NaiveDate>(
    items: &[T],
    key: F,
    side: &'static str,
) -> Result<(), DataError> {
    for pair in items.windows(2) {
        if key(&pair[1]) <= key(&pair[0]) {
            return Err(DataError::NotSorted {
                side,
                date: key(&pair[1]),
            });
        }
    }
    Ok(())
}

/// Merges price bars and short records over their date intersection.
/// Days present on only one side are dropped and counted in the report;
/// adjusted closes are computed by subtracting each dividend from every
/// close strictly before its ex-date, cumulatively.
pub fn build_series(
    bars: &[PriceBar],
    shorts: &[ShortRecord],
    ticker: &str,
) -> Result<(MarketSeries, AlignmentReport), DataError> {
    check_sorted(bars, |b| b.date, "price")?;
    check_sorted(shorts, |s| s.date, "short-interest")?;

    let short_dates: BTreeSet<NaiveDate> = shorts.iter().map(|s| s.date).collect();
    let price_dates: BTreeSet<NaiveDate> = bars.iter().map(|b| b.date).collect();

    let mut report = AlignmentReport::default();
    let mut days = Vec::new();
    let mut short_iter = shorts.iter().filter(|s| price_dates.contains(&s.date));
    for bar in bars {
        if !short_dates.contains(&bar.date) {
            report.dropped_price_days += 1;
            continue;
        }
        let short = short_iter.next().expect("intersection iterators aligned");
        debug_assert_eq!(short.date, bar.date);
        if short.reconciliation_gap != 0 {
            report.days_with_gap += 1;
        }
        report.reconciliation_gap_signed += short.reconciliation_gap;
        report.reconciliation_gap_abs += short.reconciliation_gap.abs();
        days.push(MarketDay {
            date: bar.date,
            high: bar.high,
            low: bar.low,
            close: bar.close,
            volume: bar.volume,
            dividend: bar.dividend,
            short_interest: short.total_short_interest,
            delta_short: short.delta,
            delta_source: short.delta_source,
            reconciliation_gap: short.reconciliation_gap,
            adjusted_close: bar.close,
        });
    }
    report.dropped_short_days = shorts.len() - days.len();
    report.aligned_days = days.len();
    if days.is_empty() {
        return Err(DataError::EmptyIntersection);
    }

    // Subtractive back-adjustment: walking backward, every dividend at a
    // later date is subtracted from the current close.
    let mut cumulative = 0i64;
    for day in days.iter_mut().rev() {
        day.adjusted_close = Price::from_units(day.close.units() - cumulative);
        cumulative += day.dividend.units();
    }

    Ok((MarketSeries { ticker: ticker.to_string(), days }, report))
}

/// Parse + reconcile + align in one step.
pub fn load_series(
    price_csv: impl Read,
    short_csv: impl Read,
    ticker: &str,
) -> Result<(MarketSeries, AlignmentReport), DataError> {
    let bars = parse_price_csv(price_csv)?;
    let shorts = reconcile_deltas(&parse_short_csv(short_csv)?);
    build_series(&bars, &shorts, ticker)
}

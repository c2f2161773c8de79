//! Seeded synthetic market series with configurable background
//! statistics and planted raid events. The generator emits the same
//! CSV schemas the ingester reads, so an end-to-end run is: generate,
//! serialize, re-ingest, scan, compare against the ground truth.
//!
//! Background R values come from a two-regime distribution: a Laplace
//! body whose upper tail is replaced by a power law above the value
//! where the two tail masses cross, keeping the CDF continuous.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{
    build_series, reconcile_deltas, DeltaSource, MarketSeries, Price, PriceBar, ShortRecord,
};
use crate::metrics::{trailing_mean, DEFAULT_WINDOW};

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2007, 1, 2).unwrap()
}

/// Background statistics for a generated series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub n_days: usize,
    pub mean_volume: i64,
    /// Exponent of the volume-ratio upper tail (negative).
    pub volume_tail_alpha: f64,
    /// `(beta, gamma)` of the R body.
    pub r_laplace: (f64, f64),
    /// `(c, alpha)` of the R upper tail.
    pub r_positive_tail: (f64, f64),
    pub base_short_interest: i64,
    /// Starting close, dollars per share.
    pub price_start: f64,
    pub daily_volatility: f64,
    pub seed: u64,
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        // The base short-interest level is kept an order of magnitude
        // above the accumulated delta noise so the zero floor stays out
        // of reach over multi-year horizons.
        BackgroundSpec {
            n_days: 504,
            mean_volume: 46_000_000,
            volume_tail_alpha: -3.34,
            r_laplace: (0.0, 0.03),
            r_positive_tail: (1.4e-5, -1.35),
            base_short_interest: 460_000_000,
            price_start: 42.0,
            daily_volatility: 0.02,
            seed: 42,
            start_date: default_start_date(),
        }
    }
}

impl BackgroundSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_days < DEFAULT_WINDOW + 1 {
            return Err(SynthError::InvalidSpec(format!(
                "n_days must be at least {} (warm-up plus one scannable day)",
                DEFAULT_WINDOW + 1
            )));
        }
        if self.mean_volume <= 0 || self.base_short_interest < 0 {
            return Err(SynthError::InvalidSpec(
                "volume and short-interest scales must be positive".into(),
            ));
        }
        if self.volume_tail_alpha >= -1.0 {
            return Err(SynthError::InvalidSpec(
                "volume_tail_alpha must be below -1 for a finite mean".into(),
            ));
        }
        let (_, gamma) = self.r_laplace;
        let (c, alpha) = self.r_positive_tail;
        if gamma <= 0.0 || c <= 0.0 || alpha >= 0.0 {
            return Err(SynthError::InvalidSpec(
                "r_laplace gamma and r_positive_tail (c, alpha) must be positive scale / negative exponent".into(),
            ));
        }
        if self.price_start <= 0.0 || self.daily_volatility < 0.0 {
            return Err(SynthError::InvalidSpec(
                "price_start must be positive and daily_volatility non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One planted raid: an opening spike and a covering spike
/// `separation` trading days later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaidSpec {
    pub open_day: usize,
    pub separation: usize,
    pub open_r: f64,
    pub open_q: f64,
    pub price_drop_pct: f64,
    pub restore_baseline: bool,
}

impl RaidSpec {
    pub fn validate(&self, n_days: usize) -> Result<(), SynthError> {
        if self.open_day < DEFAULT_WINDOW {
            return Err(SynthError::RaidInWarmUp { open_day: self.open_day });
        }
        if self.separation == 0 || self.open_day + self.separation >= n_days {
            return Err(SynthError::InvalidSpec(format!(
                "raid at {} with separation {} does not fit in {} days",
                self.open_day, self.separation, n_days
            )));
        }
        if !(0.0..1.0).contains(&self.price_drop_pct) {
            return Err(SynthError::InvalidSpec(
                "price_drop_pct must lie in [0, 1)".into(),
            ));
        }
        if self.open_r <= 0.0 || self.open_q <= 0.0 {
            return Err(SynthError::InvalidSpec(
                "open_r and open_q must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// What a raid actually did to the series, for ground-truth comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedRaid {
    pub open_index: usize,
    pub cover_index: usize,
    pub open_date: NaiveDate,
    pub cover_date: NaiveDate,
    pub open_volume: i64,
    pub cover_volume: i64,
    pub open_delta: i64,
    pub cover_delta: i64,
    /// Realized ratios after integer rounding.
    pub open_r: f64,
    pub open_q: f64,
    pub baseline_restored: bool,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("raid open day {open_day} falls inside the warm-up window")]
    RaidInWarmUp { open_day: usize },
    #[error("generated series failed validation: {0}")]
    Data(#[from] crate::market_data::DataError),
}

/// Tail distributions the generator samples from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailDistribution {
    PowerLaw { c: f64, alpha: f64, x_min: f64 },
    Laplace { beta: f64, gamma: f64 },
}

impl TailDistribution {
    fn validate(&self) -> Result<(), SynthError> {
        match *self {
            TailDistribution::PowerLaw { c, alpha, x_min } => {
                if c <= 0.0 || alpha >= 0.0 || x_min <= 0.0 {
                    return Err(SynthError::InvalidSpec(
                        "power law needs c > 0, alpha < 0, x_min > 0".into(),
                    ));
                }
            }
            TailDistribution::Laplace { gamma, .. } => {
                if gamma <= 0.0 {
                    return Err(SynthError::InvalidSpec("laplace needs gamma > 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Inverse CDF at `u` in (0, 1).
    fn inverse_cdf(&self, u: f64) -> f64 {
        match *self {
            // Conditional tail draw: CCDF(x) proportional to x^alpha.
            TailDistribution::PowerLaw { alpha, x_min, .. } => x_min * u.powf(1.0 / alpha),
            TailDistribution::Laplace { beta, gamma } => laplace_inverse(beta, gamma, u),
        }
    }
}

pub fn laplace_inverse(beta: f64, gamma: f64, u: f64) -> f64 {
    if u < 0.5 {
        beta + gamma * (2.0 * u).ln()
    } else {
        beta - gamma * (2.0 * (1.0 - u)).ln()
    }
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    // [0,1) from the generator, rejecting the measure-zero 0.0.
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Draws `n` i.i.d. samples by inverse-CDF transform from a seeded
/// deterministic stream. Same seed, same output.
pub fn sample_tail(
    distribution: &TailDistribution,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, SynthError> {
    if n == 0 {
        return Err(SynthError::InvalidSpec("sample count must be positive".into()));
    }
    distribution.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| distribution.inverse_cdf(open_unit(&mut rng))).collect())
}

/// Splice point for the two-regime R distribution: the value where the
/// Laplace upper-tail mass drops to the power-law tail mass
/// `c * x^alpha`. Their log difference is unimodal above the location
/// with its peak at `|alpha| * gamma` (the power CCDF diverges toward
/// zero, so the lower crossing is spurious); the splice is the upper
/// crossing, found by bisection from the peak.
fn splice_point(beta: f64, gamma: f64, c: f64, alpha: f64) -> f64 {
    let diff =
        |x: f64| (0.5f64).ln() - (x - beta) / gamma - (c.ln() + alpha * x.ln());
    let mut lo = (-alpha * gamma).max(beta + 1e-9 * gamma).max(1e-12);
    if diff(lo) <= 0.0 {
        // Power tail dominates everywhere past the peak.
        return lo;
    }
    let mut hi = lo * 2.0;
    while diff(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return hi;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if diff(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Next `n` weekdays starting at `start`.
fn trading_dates(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut dates = Vec::with_capacity(n);
    let mut d = start;
    while dates.len() < n {
        if d.weekday() != Weekday::Sat && d.weekday() != Weekday::Sun {
            dates.push(d);
        }
        d = d.succ_opt().expect("date range exhausted");
    }
    dates
}

/// Generates the background series: Pareto-tailed volumes with unit-mean
/// scale, R from the spliced Laplace/power-law mixture, short interest
/// accumulated from the base and floored at zero, and closes following
/// a seeded lognormal walk.
pub fn generate_background(spec: &BackgroundSpec) -> Result<MarketSeries, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_days;
    let dates = trading_dates(spec.start_date, n);

    // Unit-mean Pareto for the volume scale: CCDF (x/x_min)^alpha with
    // x_min chosen so the mean is 1.
    let a = -spec.volume_tail_alpha;
    let pareto_x_min = (a - 1.0) / a;

    let (beta, gamma) = spec.r_laplace;
    let (c, alpha) = spec.r_positive_tail;
    let x_splice = splice_point(beta, gamma, c, alpha);
    let p_tail = (c * x_splice.powf(alpha)).min(0.5);

    let walk = Normal::new(0.0, 1.0).expect("unit normal");
    let sigma = spec.daily_volatility;

    let mut bars: Vec<PriceBar> = Vec::with_capacity(n);
    let mut shorts: Vec<ShortRecord> = Vec::with_capacity(n);
    let mut close = spec.price_start;
    let mut short_level = spec.base_short_interest;

    for (i, &date) in dates.iter().enumerate() {
        let u_vol = open_unit(&mut rng);
        let volume = ((spec.mean_volume as f64) * pareto_x_min * u_vol.powf(-1.0 / a))
            .round()
            .max(1.0) as i64;

        let u_r = open_unit(&mut rng);
        let r = if 1.0 - u_r < p_tail {
            ((1.0 - u_r) / c).powf(1.0 / alpha)
        } else {
            laplace_inverse(beta, gamma, u_r)
        };

        let z: f64 = walk.sample(&mut rng);
        let range_hi: f64 = walk.sample(&mut rng);
        let range_lo: f64 = walk.sample(&mut rng);
        if i > 0 {
            close *= (sigma * z - 0.5 * sigma * sigma).exp();
            close = close.max(0.01);
        }
        let high = close * (1.0 + sigma * 0.5 * range_hi.abs());
        let low = (close * (1.0 - sigma * 0.5 * range_lo.abs())).max(0.005);

        let delta = if i == 0 { None } else { Some((r * volume as f64).round() as i64) };
        if let Some(d) = delta {
            short_level = (short_level + d).max(0);
        }

        bars.push(PriceBar {
            date,
            high: Price::from_f64_dollars(high.max(close)),
            low: Price::from_f64_dollars(low.min(close)),
            close: Price::from_f64_dollars(close),
            volume,
            dividend: Price::from_units(0),
        });
        shorts.push(ShortRecord {
            date,
            total_short_interest: short_level,
            // The stored delta is the realized level difference, so the
            // emitted CSV reconciles with gap zero even when the floor
            // at zero bound.
            delta: if i == 0 {
                None
            } else {
                Some(short_level - shorts[i - 1].total_short_interest)
            },
            delta_source: if i == 0 { DeltaSource::Differenced } else { DeltaSource::Reported },
            reconciliation_gap: 0,
        });
    }

    let (series, _) = build_series(&bars, &reconcile_deltas(&shorts), "SYNTH")?;
    Ok(series)
}

/// Plants one raid into a series: the open day's volume is raised to
/// `open_q` times the trailing mean and its delta to `open_r` times that
/// volume; the cover day gets a matching volume spike and a delta that
/// restores the pre-open baseline (or returns half the opened shares when
/// `restore_baseline` is off); closes from the open onward are scaled
/// down by the drop. Other days keep their volumes and deltas.
pub fn inject_raid(
    series: &MarketSeries,
    raid: &RaidSpec,
) -> Result<(MarketSeries, PlantedRaid), SynthError> {
    raid.validate(series.len())?;
    let open = raid.open_day;
    let cover = open + raid.separation;

    let mut bars = series.to_price_bars();
    let mut shorts = series.to_short_records();

    let volumes: Vec<i64> = bars.iter().map(|b| b.volume).collect();
    let open_mean = trailing_mean(&volumes, open, DEFAULT_WINDOW)
        .ok_or(SynthError::RaidInWarmUp { open_day: open })?;
    let open_volume = (raid.open_q * open_mean).round().max(1.0) as i64;
    let open_delta = (raid.open_r * open_volume as f64).round() as i64;
    bars[open].volume = open_volume;

    let cover_volumes: Vec<i64> = bars.iter().map(|b| b.volume).collect();
    let cover_mean = trailing_mean(&cover_volumes, cover, DEFAULT_WINDOW)
        .ok_or(SynthError::RaidInWarmUp { open_day: cover })?;
    let cover_volume = (raid.open_q * cover_mean).round().max(1.0) as i64;
    bars[cover].volume = cover_volume;

    // Replay the short-interest accumulation with the two edited deltas.
    let baseline = shorts[open - 1].total_short_interest;
    let mut level = baseline;
    let mut cover_delta = 0i64;
    for (t, rec) in shorts.iter_mut().enumerate().skip(open) {
        let delta = if t == open {
            open_delta
        } else if t == cover {
            cover_delta = if raid.restore_baseline {
                baseline - level
            } else {
                -(open_delta / 2)
            };
            cover_delta
        } else {
            rec.delta.unwrap_or(0)
        };
        level = (level + delta).max(0);
        rec.total_short_interest = level;
        rec.delta = Some(delta);
        rec.delta_source = DeltaSource::Reported;
    }

    // Anchor the forward price walk at the drop.
    let factor = 1.0 - raid.price_drop_pct;
    for bar in bars.iter_mut().skip(open) {
        bar.close = scale_price(bar.close, factor);
        bar.high = scale_price(bar.high, factor);
        bar.low = scale_price(bar.low, factor);
    }

    let (out, _) = build_series(&bars, &reconcile_deltas(&shorts), &series.ticker)?;
    let record = PlantedRaid {
        open_index: open,
        cover_index: cover,
        open_date: out.days[open].date,
        cover_date: out.days[cover].date,
        open_volume,
        cover_volume,
        open_delta,
        cover_delta,
        open_r: open_delta as f64 / open_volume as f64,
        open_q: open_volume as f64 / open_mean,
        baseline_restored: raid.restore_baseline,
    };
    Ok((out, record))
}

fn scale_price(p: Price, factor: f64) -> Price {
    Price::from_units(((p.units() as f64) * factor).round() as i64)
}

/// Full generator spec: one background plus any number of raids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_ticker")]
    pub ticker: String,
    pub background: BackgroundSpec,
    #[serde(default)]
    pub raids: Vec<RaidSpec>,
}

fn default_ticker() -> String {
    "SYNTH".to_string()
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            ticker: default_ticker(),
            background: BackgroundSpec::default(),
            raids: vec![RaidSpec {
                open_day: 200,
                separation: 6,
                open_r: 0.77,
                open_q: 3.7,
                price_drop_pct: 0.069,
                restore_baseline: true,
            }],
        }
    }
}

/// Generates the background and injects every raid in order.
pub fn generate(spec: &SynthSpec) -> Result<(MarketSeries, Vec<PlantedRaid>), SynthError> {
    let mut series = generate_background(&spec.background)?;
    series.ticker = spec.ticker.clone();
    let mut planted = Vec::with_capacity(spec.raids.len());
    for raid in &spec.raids {
        let (next, record) = inject_raid(&series, raid)?;
        series = next;
        planted.push(record);
    }
    Ok((series, planted))
}

//! Versioned report payloads and plot-data exports. Every payload
//! serializes deterministically (ordered fields, no timestamps) so that
//! identical inputs produce byte-identical files.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::detector::{Anomaly, DetectorConfig, LagCheck, RaidCandidate, TailFits};
use crate::market_data::{AlignmentReport, MarketSeries};
use crate::metrics::DayMetrics;
use crate::synthetic::PlantedRaid;
use crate::tail_fit::{ExclusionFit, FitBundle, FitError, LaplaceFit, PowerLawFit};

pub const FIT_SCHEMA: &str = "fit.v1";
pub const SCAN_SCHEMA: &str = "scan.v1";
pub const BAN_SCHEMA: &str = "ban-lag.v1";
pub const GROUND_TRUTH_SCHEMA: &str = "ground-truth.v1";
pub const ALIGNMENT_SCHEMA: &str = "alignment.v1";

/// One fitted model (or the reason it failed), with sample accounting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema: String,
    /// Which distribution this fit describes.
    pub target: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_law: Option<PowerLawFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub laplace: Option<LaplaceFit>,
    pub samples_included: Option<usize>,
    pub samples_excluded: Option<usize>,
    pub excluded_dates: Vec<NaiveDate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FitReport {
    fn base(target: &str, excluded_dates: Vec<NaiveDate>) -> Self {
        FitReport {
            schema: FIT_SCHEMA.to_string(),
            target: target.to_string(),
            power_law: None,
            laplace: None,
            samples_included: None,
            samples_excluded: None,
            excluded_dates,
            error: None,
        }
    }

    pub fn from_power(
        target: &str,
        result: &Result<ExclusionFit<PowerLawFit>, FitError>,
        excluded_dates: Vec<NaiveDate>,
    ) -> Self {
        let mut report = Self::base(target, excluded_dates);
        match result {
            Ok(fit) => {
                report.power_law = Some(fit.fit.clone());
                report.samples_included = Some(fit.included);
                report.samples_excluded = Some(fit.excluded);
            }
            Err(e) => report.error = Some(e.to_string()),
        }
        report
    }

    pub fn from_laplace(
        target: &str,
        result: &Result<ExclusionFit<LaplaceFit>, FitError>,
        excluded_dates: Vec<NaiveDate>,
    ) -> Self {
        let mut report = Self::base(target, excluded_dates);
        match result {
            Ok(fit) => {
                report.laplace = Some(fit.fit.clone());
                report.samples_included = Some(fit.included);
                report.samples_excluded = Some(fit.excluded);
            }
            Err(e) => report.error = Some(e.to_string()),
        }
        report
    }
}

/// The three fit reports a `fit` run writes.
pub fn fit_reports(bundle: &FitBundle) -> [FitReport; 3] {
    let excluded: Vec<NaiveDate> = bundle.excluded_dates.iter().copied().collect();
    [
        FitReport::from_power("r_positive_tail", &bundle.r_positive, excluded.clone()),
        FitReport::from_laplace("r_laplace", &bundle.r_laplace, excluded.clone()),
        FitReport::from_power("q_tail", &bundle.q, excluded),
    ]
}

/// Fit parameters the scanner actually used (absent where a fit failed).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitsUsed {
    pub r_positive: Option<PowerLawFit>,
    pub r_laplace: Option<LaplaceFit>,
    pub q: Option<PowerLawFit>,
}

impl From<&TailFits> for FitsUsed {
    fn from(fits: &TailFits) -> Self {
        FitsUsed {
            r_positive: fits.r_positive.clone(),
            r_laplace: fits.r_laplace.clone(),
            q: fits.q.clone(),
        }
    }
}

/// Candidate report for one ticker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema: String,
    pub ticker: String,
    pub config: DetectorConfig,
    pub fits: FitsUsed,
    pub scannable_days: usize,
    pub anomaly_count: usize,
    pub candidate_count: usize,
    pub anomalies: Vec<Anomaly>,
    pub candidates: Vec<RaidCandidate>,
}

impl ScanReport {
    pub fn new(
        ticker: &str,
        config: &DetectorConfig,
        fits: &TailFits,
        metrics: &[DayMetrics],
        anomalies: Vec<Anomaly>,
        candidates: Vec<RaidCandidate>,
    ) -> Self {
        ScanReport {
            schema: SCAN_SCHEMA.to_string(),
            ticker: ticker.to_string(),
            config: config.clone(),
            fits: fits.into(),
            scannable_days: metrics
                .iter()
                .filter(|m| m.r.is_some() && m.q.is_some())
                .count(),
            anomaly_count: anomalies.len(),
            candidate_count: candidates.len(),
            anomalies,
            candidates,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanReport {
    pub schema: String,
    pub ban_start: NaiveDate,
    pub ban_end: NaiveDate,
    pub result: LagCheck,
}

impl BanReport {
    pub fn new(ban_start: NaiveDate, ban_end: NaiveDate, result: LagCheck) -> Self {
        BanReport {
            schema: BAN_SCHEMA.to_string(),
            ban_start,
            ban_end,
            result,
        }
    }
}

/// Planted events emitted alongside generated CSVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema: String,
    pub ticker: String,
    pub seed: u64,
    pub n_days: usize,
    pub raids: Vec<PlantedRaid>,
}

impl GroundTruth {
    pub fn new(ticker: &str, seed: u64, n_days: usize, raids: Vec<PlantedRaid>) -> Self {
        GroundTruth {
            schema: GROUND_TRUTH_SCHEMA.to_string(),
            ticker: ticker.to_string(),
            seed,
            n_days,
            raids,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEnvelope {
    pub schema: String,
    #[serde(flatten)]
    pub report: AlignmentReport,
}

impl AlignmentEnvelope {
    pub fn new(report: AlignmentReport) -> Self {
        AlignmentEnvelope {
            schema: ALIGNMENT_SCHEMA.to_string(),
            report,
        }
    }
}

/// CDF overlay CSVs for the three fits, keyed by output stem:
/// `cdf_r_positive`, `cdf_r_laplace`, `cdf_q`. Empirical columns come
/// from the post-exclusion samples; fitted columns are empty where the
/// fit failed.
pub fn fit_overlays(
    metrics: &[DayMetrics],
    bundle: &FitBundle,
) -> Vec<(&'static str, String)> {
    use crate::tail_fit::{cdf_overlay_csv, ecdf_tail, fit_samples, TailModel, TailSide};

    let (r_samples, q_samples) = fit_samples(metrics);
    let keep = |samples: &[(NaiveDate, f64)]| -> Vec<f64> {
        samples
            .iter()
            .filter(|(d, _)| !bundle.excluded_dates.contains(d))
            .map(|&(_, v)| v)
            .collect()
    };
    let r_kept = keep(&r_samples);
    let r_positive: Vec<f64> = r_kept.iter().copied().filter(|&v| v > 0.0).collect();
    let q_kept = keep(&q_samples);

    let mut out = Vec::new();
    let mut push = |name: &'static str, samples: &[f64], side: TailSide, model: Option<TailModel>| {
        let csv = match ecdf_tail(samples, side) {
            Ok(points) => cdf_overlay_csv(&points, model.as_ref()),
            Err(_) => String::from("x,empirical_p,fitted_p\n"),
        };
        out.push((name, csv));
    };
    push(
        "cdf_r_positive",
        &r_positive,
        TailSide::UpperTail,
        bundle.r_positive.as_ref().ok().map(|f| TailModel::PowerLaw(f.fit.clone())),
    );
    push(
        "cdf_r_laplace",
        &r_kept,
        TailSide::LowerTail,
        bundle.r_laplace.as_ref().ok().map(|f| TailModel::Laplace(f.fit.clone())),
    );
    push(
        "cdf_q",
        &q_kept,
        TailSide::UpperTail,
        bundle.q.as_ref().ok().map(|f| TailModel::PowerLaw(f.fit.clone())),
    );
    out
}

/// `date,Q,R` for every scannable day: the scatter-plot surface.
pub fn scatter_csv(metrics: &[DayMetrics]) -> String {
    let mut out = String::from("date,Q,R\n");
    for m in metrics {
        if let (Some(q), Some(r)) = (m.q, m.r) {
            out.push_str(&format!("{},{},{}\n", m.date, q, r));
        }
    }
    out
}

/// Daily bars, volume, and short-interest series: the price/activity
/// plot surface.
pub fn series_csv(series: &MarketSeries) -> String {
    let mut out = String::from(
        "date,high,low,close,adjusted_close,volume,short_interest,delta_short_interest,dividend\n",
    );
    for d in &series.days {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            d.date,
            d.high,
            d.low,
            d.close,
            d.adjusted_close,
            d.volume,
            d.short_interest,
            d.delta_short.map(|v| v.to_string()).unwrap_or_default(),
            d.dividend,
        ));
    }
    out
}

/// Deterministic pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization");
    s.push('\n');
    s
}

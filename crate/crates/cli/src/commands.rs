//! The four subcommands: fit, scan, screen-ban, synth.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chrono::NaiveDate;

use raidscan_core::detector::{reporting_lag_check, run_detector, TailFits};
use raidscan_core::market_data::{
    load_series, parse_short_csv, reconcile_deltas, AlignmentReport, MarketSeries, ShortRecord,
};
use raidscan_core::metrics::{compute_metrics, metrics_to_csv, DayMetrics};
use raidscan_core::report::{
    fit_overlays, fit_reports, scatter_csv, series_csv, to_json, AlignmentEnvelope, BanReport,
    GroundTruth, ScanReport,
};
use raidscan_core::synthetic::generate;
use raidscan_core::tail_fit::fit_metrics;

use crate::config::{InputMode, RunConfig};
use crate::output::{write_atomic, write_run_meta};
use crate::{input_error, CliError};

struct Ingested {
    series: MarketSeries,
    alignment: Option<AlignmentReport>,
}

fn ingest(config: &RunConfig, seed_override: Option<u64>) -> Result<Ingested, CliError> {
    match InputMode::resolve(config, seed_override).map_err(CliError::Input)? {
        InputMode::Files { price, short } => {
            let price_file = open(&price)?;
            let short_file = open(&short)?;
            let (series, alignment) =
                load_series(BufReader::new(price_file), BufReader::new(short_file), &ticker_for(config, &price))
                    .map_err(|e| input_error(format!("ingesting CSVs: {e}")))?;
            Ok(Ingested { series, alignment: Some(alignment) })
        }
        InputMode::Synth { spec } => {
            let (series, _) =
                generate(&spec).map_err(|e| input_error(format!("generating series: {e}")))?;
            Ok(Ingested { series, alignment: None })
        }
    }
}

fn ticker_for(config: &RunConfig, price_path: &Path) -> String {
    config.ticker.clone().unwrap_or_else(|| {
        price_path
            .file_stem()
            .map(|s| s.to_string_lossy().to_uppercase())
            .unwrap_or_else(|| "UNKNOWN".to_string())
    })
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| input_error(format!("opening {}: {e}", path.display())))
}

fn metrics_for(config: &RunConfig, series: &MarketSeries) -> Vec<DayMetrics> {
    compute_metrics(series, &config.metrics)
}

fn write_alignment(dir: &Path, alignment: Option<AlignmentReport>) -> anyhow::Result<()> {
    if let Some(report) = alignment {
        write_atomic(dir, "alignment.json", &to_json(&AlignmentEnvelope::new(report)))?;
    }
    Ok(())
}

/// Fits the three tail models and writes per-fit reports plus CDF
/// overlay CSVs.
pub fn cmd_fit(config: &RunConfig, seed: Option<u64>) -> Result<(), CliError> {
    config.detector.validate().map_err(|e| input_error(e.to_string()))?;
    let ingested = ingest(config, seed)?;
    let metrics = metrics_for(config, &ingested.series);
    if metrics.iter().all(|m| m.q.is_none()) {
        return Err(input_error(format!(
            "insufficient data: no day clears the {}-day warm-up window",
            config.metrics.window
        )));
    }
    let bundle = fit_metrics(&metrics, &config.fit, &config.detector.exclude_dates);

    let dir = config.out_dir();
    let [r_pos, r_lap, q] = fit_reports(&bundle);
    write_atomic(&dir, "fit_r_positive.json", &to_json(&r_pos)).map_err(CliError::Internal)?;
    write_atomic(&dir, "fit_r_laplace.json", &to_json(&r_lap)).map_err(CliError::Internal)?;
    write_atomic(&dir, "fit_q.json", &to_json(&q)).map_err(CliError::Internal)?;
    for (name, csv) in fit_overlays(&metrics, &bundle) {
        write_atomic(&dir, &format!("{name}.csv"), &csv).map_err(CliError::Internal)?;
    }
    write_alignment(&dir, ingested.alignment).map_err(CliError::Internal)?;
    write_run_meta(&dir, "fit").map_err(CliError::Internal)?;
    println!("fit: wrote 3 fit reports and overlays to {}", dir.display());
    Ok(())
}

/// Scans for anomalies, pairs candidates, and writes the candidate
/// report plus the scatter/metrics/series plot surfaces.
pub fn cmd_scan(config: &RunConfig, seed: Option<u64>) -> Result<(), CliError> {
    config.detector.validate().map_err(|e| input_error(e.to_string()))?;
    let ingested = ingest(config, seed)?;
    let series = &ingested.series;
    let metrics = metrics_for(config, series);
    let bundle = fit_metrics(&metrics, &config.fit, &config.detector.exclude_dates);
    let fits = TailFits::from_bundle(&bundle);
    let (anomalies, candidates) = run_detector(series, &metrics, &fits, &config.detector);

    let report = ScanReport::new(
        &series.ticker,
        &config.detector,
        &fits,
        &metrics,
        anomalies,
        candidates,
    );
    let dir = config.out_dir();
    write_atomic(&dir, "candidates.json", &to_json(&report)).map_err(CliError::Internal)?;
    write_atomic(&dir, "scatter.csv", &scatter_csv(&metrics)).map_err(CliError::Internal)?;
    write_atomic(&dir, "metrics.csv", &metrics_to_csv(&metrics)).map_err(CliError::Internal)?;
    write_atomic(&dir, "series.csv", &series_csv(series)).map_err(CliError::Internal)?;
    write_alignment(&dir, ingested.alignment).map_err(CliError::Internal)?;
    write_run_meta(&dir, "scan").map_err(CliError::Internal)?;
    println!(
        "scan: {} candidates from {} anomalies; report in {}",
        report.candidate_count,
        report.anomaly_count,
        dir.display()
    );
    Ok(())
}

/// Runs the reporting-lag alignment against a short-sale-ban window.
pub fn cmd_screen_ban(
    config: &RunConfig,
    seed: Option<u64>,
    ban_start: NaiveDate,
    ban_end: NaiveDate,
) -> Result<(), CliError> {
    let records: Vec<ShortRecord> = match (&config.synth_spec, &config.short_csv) {
        (None, Some(short)) => {
            let file = open(short)?;
            reconcile_deltas(
                &parse_short_csv(BufReader::new(file))
                    .map_err(|e| input_error(format!("ingesting short CSV: {e}")))?,
            )
        }
        _ => ingest(config, seed)?.series.to_short_records(),
    };
    let check = reporting_lag_check(&records, ban_start, ban_end)
        .map_err(|e| input_error(e.to_string()))?;
    let dir = config.out_dir();
    write_atomic(&dir, "ban_lag.json", &to_json(&BanReport::new(ban_start, ban_end, check.clone())))
        .map_err(CliError::Internal)?;
    write_run_meta(&dir, "screen-ban").map_err(CliError::Internal)?;
    if check.conclusive {
        println!("screen-ban: lag {} (score {:.3})", check.lag, check.score);
    } else {
        println!(
            "screen-ban: inconclusive (best lag {}, score {:.3})",
            check.lag, check.score
        );
    }
    Ok(())
}

/// Generates the ingestion CSV pair plus the ground-truth record.
pub fn cmd_synth(config: &RunConfig, seed: Option<u64>) -> Result<(), CliError> {
    let spec = match InputMode::resolve(config, seed).map_err(CliError::Input)? {
        InputMode::Synth { spec } => spec,
        InputMode::Files { .. } => {
            return Err(input_error(
                "synth needs a generator spec (config synth_spec), not CSV inputs".to_string(),
            ))
        }
    };
    let (series, planted) =
        generate(&spec).map_err(|e| input_error(format!("generating series: {e}")))?;
    let truth = GroundTruth::new(
        &spec.ticker,
        spec.background.seed,
        spec.background.n_days,
        planted,
    );
    let dir = config.out_dir();
    write_atomic(&dir, "price.csv", &series.to_price_csv()).map_err(CliError::Internal)?;
    write_atomic(&dir, "short.csv", &series.to_short_csv()).map_err(CliError::Internal)?;
    write_atomic(&dir, "ground_truth.json", &to_json(&truth)).map_err(CliError::Internal)?;
    write_run_meta(&dir, "synth").map_err(CliError::Internal)?;
    println!(
        "synth: {} days, {} planted raids; files in {}",
        series.len(),
        truth.raids.len(),
        dir.display()
    );
    Ok(())
}

//! Run configuration: a JSON file merged with command-line overrides.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use raidscan_core::detector::DetectorConfig;
use raidscan_core::metrics::MetricsConfig;
use raidscan_core::synthetic::SynthSpec;
use raidscan_core::tail_fit::FitConfig;

use crate::CommonArgs;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub price_csv: Option<PathBuf>,
    pub short_csv: Option<PathBuf>,
    /// Path to a generator spec; mutually exclusive with the CSV pair.
    pub synth_spec: Option<PathBuf>,
    pub ticker: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub detector: DetectorConfig,
    pub fit: FitConfig,
    pub metrics: MetricsConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let raw = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Config-file values overridden by whatever flags were given.
    pub fn merged(mut self, args: &CommonArgs) -> Self {
        if let Some(p) = &args.price {
            self.price_csv = Some(p.clone());
        }
        if let Some(p) = &args.short {
            self.short_csv = Some(p.clone());
        }
        if let Some(p) = &args.out {
            self.out_dir = Some(p.clone());
        }
        if let Some(v) = args.r_open_min {
            self.detector.r_open_min = v;
        }
        if let Some(v) = args.q_min {
            self.detector.q_min = v;
        }
        if let Some(v) = args.pairing_window {
            self.detector.pairing_window = v;
        }
        if let Some(v) = args.x_min_quantile {
            self.fit.x_min_quantile = v;
        }
        if let Some(dates) = &args.exclude_dates {
            self.detector.exclude_dates = dates.iter().copied().collect::<BTreeSet<NaiveDate>>();
        }
        self
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Where the series comes from: exactly one of the two.
pub enum InputMode {
    Files { price: PathBuf, short: PathBuf },
    Synth { spec: SynthSpec },
}

impl InputMode {
    pub fn resolve(config: &RunConfig, seed_override: Option<u64>) -> anyhow::Result<Self> {
        let files = config.price_csv.is_some() || config.short_csv.is_some();
        match (&config.synth_spec, files) {
            (Some(_), true) => {
                bail!("config names both CSV inputs and a synth spec; pick one input mode")
            }
            (Some(spec_path), false) => {
                let raw = fs::read_to_string(spec_path)
                    .with_context(|| format!("reading synth spec {}", spec_path.display()))?;
                let mut spec: SynthSpec = serde_json::from_str(&raw)
                    .with_context(|| format!("parsing synth spec {}", spec_path.display()))?;
                if let Some(seed) = seed_override {
                    spec.background.seed = seed;
                }
                Ok(InputMode::Synth { spec })
            }
            (None, _) => {
                let price = config
                    .price_csv
                    .clone()
                    .ok_or_else(|| anyhow!("no price CSV given (config price_csv or --price)"))?;
                let short = config
                    .short_csv
                    .clone()
                    .ok_or_else(|| anyhow!("no short CSV given (config short_csv or --short)"))?;
                Ok(InputMode::Files { price, short })
            }
        }
    }
}

//! Helpers for driving the compiled binary in tests.
#![allow(dead_code)] // each test binary uses a subset

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

pub fn raidscan<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raidscan"))
        .args(args)
        .output()
        .expect("spawning raidscan")
}

pub fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "exit code mismatch\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
}

/// Every regular file in `dir` except the run-metadata sidecar.
pub fn comparison_surface(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).expect("reading output dir") {
        let entry = entry.unwrap();
        let name = entry.file_name().to_string_lossy().to_string();
        if name == "run_meta.json" || !entry.file_type().unwrap().is_file() {
            continue;
        }
        out.insert(name, fs::read(entry.path()).unwrap());
    }
    out
}

/// Generator spec JSON, optionally with one headline-magnitude raid.
pub fn spec_json(seed: u64, n_days: usize, raids: bool) -> String {
    let raid = r#"{ "open_day": 200, "separation": 6, "open_r": 0.77, "open_q": 3.7,
                    "price_drop_pct": 0.069, "restore_baseline": true }"#;
    format!(
        r#"{{
  "ticker": "SYNTH",
  "background": {{
    "n_days": {n_days},
    "mean_volume": 46000000,
    "volume_tail_alpha": -3.34,
    "r_laplace": [0.0, 0.03],
    "r_positive_tail": [1.4e-5, -1.35],
    "base_short_interest": 460000000,
    "price_start": 42.0,
    "daily_volatility": 0.02,
    "seed": {seed}
  }},
  "raids": [{}]
}}
"#,
        if raids { raid } else { "" }
    )
}

//! Atomic file output and the run-metadata sidecar.
//!
//! Every report is written to a temp file in the target directory and
//! renamed into place. Report contents carry no timestamps; the one
//! exception, `run_meta.json`, exists precisely to hold them and is not
//! part of the comparison surface.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = dir.join(format!(".{name}.tmp"));
    let target = dir.join(name);
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, &target).with_context(|| format!("renaming into {}", target.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct RunMeta {
    command: String,
    argv: Vec<String>,
    finished_at: String,
    version: &'static str,
}

pub fn write_run_meta(dir: &Path, command: &str) -> anyhow::Result<()> {
    let meta = RunMeta {
        command: command.to_string(),
        argv: std::env::args().collect(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        version: env!("CARGO_PKG_VERSION"),
    };
    let mut body = serde_json::to_string_pretty(&meta)?;
    body.push('\n');
    write_atomic(dir, "run_meta.json", &body)
}

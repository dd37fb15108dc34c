//! Independent experiments run concurrently, summarized in one table.

use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::output::{num, write_csv};
use crate::pipeline::{run_experiment, Outcome, RunReport};

pub const SUMMARY_HEADER: [&str; 8] = [
    "name",
    "mode",
    "converged",
    "outer_iters",
    "hjb_fp_solves",
    "meas_rel_err",
    "q_rel_err",
    "seconds",
];

/// Result of one batch entry; failures are kept alongside successes.
#[derive(Debug)]
pub struct BatchEntry {
    pub config: PathBuf,
    pub result: Result<RunReport, String>,
}

/// Config files matching `pattern`, sorted.
pub fn expand(pattern: &str) -> anyhow::Result<Vec<PathBuf>> {
    let mut paths = glob::glob(pattern)
        .with_context(|| format!("bad glob {pattern:?}"))?
        .collect::<Result<Vec<_>, _>>()?;
    paths.sort();
    Ok(paths)
}

/// Run every config; each writes into `root/<name>` when `root` is given and
/// into its own resolved directory otherwise.
pub fn run_batch(configs: &[PathBuf], root: Option<&Path>) -> Vec<BatchEntry> {
    configs
        .par_iter()
        .map(|path| {
            let result = ExperimentConfig::from_file(path)
                .and_then(|cfg| {
                    let out = cfg.resolve_output(root.map(|r| r.join(&cfg.name)).as_deref());
                    run_experiment(&cfg, &out)
                })
                .map_err(|e| format!("{e:#}"));
            BatchEntry {
                config: path.clone(),
                result,
            }
        })
        .collect()
}

pub fn write_summary(path: &Path, entries: &[BatchEntry]) -> anyhow::Result<()> {
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let rows = entries.iter().map(|e| match &e.result {
        Ok(r) => vec![
            r.name.clone(),
            r.mode.to_string(),
            (r.outcome == Outcome::Converged).to_string(),
            r.outer_iters.to_string(),
            r.hjb_fp_solves.to_string(),
            opt(r.meas_rel_err),
            opt(r.q_rel_err),
            format!("{:.3}", r.seconds),
        ],
        Err(_) => {
            let stem = e.config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            vec![stem, "error".into(), "false".into(), String::new(), String::new(), String::new(), String::new(), String::new()]
        }
    });
    write_csv(path, &SUMMARY_HEADER, rows)
}

/// 0 when every run converged, 2 when some did not, 1 when any failed.
pub fn exit_code(entries: &[BatchEntry]) -> i32 {
    if entries.iter().any(|e| e.result.is_err()) {
        1
    } else if entries.iter().any(|e| matches!(&e.result, Ok(r) if r.outcome != Outcome::Converged)) {
        2
    } else {
        0
    }
}

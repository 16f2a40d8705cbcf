//! CSV and metadata output for sweeps.
//!
//! Four CSV files are written, one row per SNR point:
//!
//! | file              | columns                                   |
//! |-------------------|-------------------------------------------|
//! | `mse_cfo.csv`     | `snr_db, <estimators…>, crlb, trials`     |
//! | `mse_sfo.csv`     | `snr_db, <estimators…>, crlb, trials`     |
//! | `mse_channel.csv` | `snr_db, <estimators…>, crlb, trials`     |
//! | `ptf.csv`         | `snr_db, <estimators…>, trials`           |
//!
//! Estimator columns appear in the order `mlsp, mlls`, and only for the
//! estimators that were run. The channel `crlb` column is the trace bound.
//! Cells are empty when no value exists (no completed trial, noiseless run
//! or singular Fisher information). Output is UTF-8 with LF line endings and
//! depends only on the summary, so reruns are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::estimator::Method;
use crate::evaluation::{Crlb, MethodSummary, SweepSummary};
use crate::Result;

pub const CSV_FILES: [&str; 4] = ["mse_cfo.csv", "mse_sfo.csv", "mse_channel.csv", "ptf.csv"];
pub const META_FILE: &str = "meta.txt";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn ordered(summary: &SweepSummary) -> Vec<Method> {
    [Method::Mlsp, Method::Mlls]
        .into_iter()
        .filter(|m| summary.estimators.contains(m))
        .collect()
}

fn table(
    summary: &SweepSummary,
    value: impl Fn(&MethodSummary) -> Option<f64>,
    bound: Option<&dyn Fn(&Crlb) -> f64>,
) -> String {
    let methods = ordered(summary);
    let mut out = String::from("snr_db");
    for m in &methods {
        out.push(',');
        out.push_str(m.name());
    }
    if bound.is_some() {
        out.push_str(",crlb");
    }
    out.push_str(",trials\n");
    for row in &summary.rows {
        let _ = write!(out, "{}", row.snr_db);
        for m in &methods {
            out.push(',');
            out.push_str(&cell(row.method(*m).and_then(&value)));
        }
        if let Some(f) = bound {
            out.push(',');
            out.push_str(&cell(row.crlb.as_ref().map(f)));
        }
        let _ = writeln!(out, ",{}", row.trials);
    }
    out
}

/// The four CSV documents, in [`CSV_FILES`] order.
pub fn render_csvs(summary: &SweepSummary) -> [String; 4] {
    [
        table(summary, |m| m.mse_epsilon, Some(&|c: &Crlb| c.epsilon)),
        table(summary, |m| m.mse_eta, Some(&|c: &Crlb| c.eta)),
        table(summary, |m| m.mse_channel, Some(&|c: &Crlb| c.trace_h)),
        table(summary, |m| m.ptf, None),
    ]
}

/// Plain-text record of everything needed to reproduce the sweep.
pub fn render_meta(config: &ExperimentConfig, summary: &SweepSummary) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "mlsync {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "master_seed = {}", config.master_seed);
    let _ = writeln!(
        out,
        "theta_shift = {} (model timing = configured timing + shift)",
        config.theta_shift()
    );
    let _ = writeln!(out, "timing_p = {}", summary.timing_p);
    let _ = writeln!(
        out,
        "channel_mse = squared error of the timing-embedded channel"
    );
    let _ = writeln!(
        out,
        "crlb = support-aware bound on the kept samples, averaged over trials"
    );
    out.push_str("\n[per-snr counts]\n");
    for row in &summary.rows {
        let _ = write!(
            out,
            "snr_db = {}: trials {}, crlb trials {}",
            row.snr_db, row.trials, row.crlb_trials
        );
        for m in &row.methods {
            let _ = write!(
                out,
                ", {} completed {} failed {}",
                m.method, m.completed, m.failed
            );
        }
        out.push('\n');
    }
    out.push_str("\n[config]\n");
    out.push_str(&config.to_toml()?);
    Ok(out)
}

/// Writes the CSVs and `meta.txt` into `dir`, creating it if needed.
pub fn write_report(
    dir: &Path,
    config: &ExperimentConfig,
    summary: &SweepSummary,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(5);
    for (name, body) in CSV_FILES.iter().zip(render_csvs(summary)) {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    let path = dir.join(META_FILE);
    std::fs::write(&path, render_meta(config, summary)?)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::SnrSummary;

    fn stats(method: Method, base: f64) -> MethodSummary {
        MethodSummary {
            method,
            mse_epsilon: Some(base),
            mse_eta: Some(base * 1e-4),
            mse_theta: Some(0.0),
            mse_channel: None,
            se_epsilon: None,
            se_eta: None,
            se_channel: None,
            ptf: Some(0.25),
            completed: 4,
            failed: 0,
        }
    }

    #[test]
    fn empty_cells_and_column_order() {
        let summary = SweepSummary {
            timing_p: 2,
            estimators: vec![Method::Mlls, Method::Mlsp],
            rows: vec![SnrSummary {
                snr_db: 10.0,
                trials: 4,
                methods: vec![stats(Method::Mlls, 0.5), stats(Method::Mlsp, 0.125)],
                crlb: None,
                crlb_trials: 0,
            }],
        };
        let [cfo, sfo, chan, ptf] = render_csvs(&summary);
        assert_eq!(cfo, "snr_db,mlsp,mlls,crlb,trials\n10,1.25e-1,5e-1,,4\n");
        assert_eq!(sfo, "snr_db,mlsp,mlls,crlb,trials\n10,1.25e-5,5e-5,,4\n");
        assert_eq!(chan, "snr_db,mlsp,mlls,crlb,trials\n10,,,,4\n");
        assert_eq!(ptf, "snr_db,mlsp,mlls,trials\n10,2.5e-1,2.5e-1,4\n");
    }
}

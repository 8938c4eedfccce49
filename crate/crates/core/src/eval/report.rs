use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{MetricSummary, RocPoint};

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn roc_csv(curve: &[RocPoint]) -> String {
    let mut out = String::from("threshold,far,tar\n");
    for p in curve {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.far, p.tar);
    }
    out
}

pub fn cmc_csv(curve: &[f64]) -> String {
    let mut out = String::from("rank,accuracy\n");
    for (i, a) in curve.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, a);
    }
    out
}

pub fn summary_csv(summary: &[MetricSummary]) -> String {
    let mut out = String::from("metric,mean,std\n");
    for s in summary {
        let _ = writeln!(out, "{},{},{}", s.metric, s.mean, s.std);
    }
    out
}

pub fn write_roc(path: &Path, curve: &[RocPoint]) -> Result<()> {
    write_text(path, &roc_csv(curve))
}

pub fn write_cmc(path: &Path, curve: &[f64]) -> Result<()> {
    write_text(path, &cmc_csv(curve))
}

pub fn write_summary(path: &Path, summary: &[MetricSummary]) -> Result<()> {
    write_text(path, &summary_csv(summary))
}

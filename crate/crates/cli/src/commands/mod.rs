pub mod analyze;
pub mod couple;
pub mod sample;
pub mod sweep;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use specdiff_core::metrics::{ks_two_sample, sliced_wasserstein2, wasserstein2_1d, DEFAULT_PROJECTIONS};
use specdiff_core::rng::substream;
use specdiff_core::{RngStream, RunStats, SampleSet, StreamKey};

use crate::error::{CliError, CliResult};

/// Chain id reserved for report-level draws such as projection directions.
pub(crate) const REPORT_CHAIN: u64 = u64::MAX;

#[derive(Debug, Clone, Serialize)]
pub struct KsEntry {
    pub coordinate: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// Distance between two runs' final samples.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    /// `"w2"` in one dimension, `"sliced_w2"` otherwise.
    pub metric: &'static str,
    pub distance: f64,
    pub ks: Vec<KsEntry>,
}

pub fn sample_set(stats: &RunStats, label: &str) -> CliResult<SampleSet> {
    Ok(SampleSet::from_rows(&stats.samples, label)?)
}

pub fn distance(a: &SampleSet, b: &SampleSet, seed: u64) -> CliResult<(&'static str, f64)> {
    if a.dim() == 1 {
        return Ok(("w2", wasserstein2_1d(&a.column(0), &b.column(0))?));
    }
    let mut rng = RngStream::new(StreamKey::new(seed, REPORT_CHAIN, 0, substream::AUX));
    Ok(("sliced_w2", sliced_wasserstein2(a, b, DEFAULT_PROJECTIONS, &mut rng)?))
}

pub fn compare(a: &RunStats, b: &RunStats, seed: u64) -> CliResult<Comparison> {
    let (sa, sb) = (sample_set(a, "a")?, sample_set(b, "b")?);
    let (metric, distance) = distance(&sa, &sb, seed)?;
    let ks = (0..sa.dim())
        .map(|j| {
            let r = ks_two_sample(&sa.column(j), &sb.column(j))?;
            Ok(KsEntry { coordinate: j, statistic: r.statistic, p_value: r.p_value })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Comparison { metric, distance, ks })
}

pub(crate) fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.into(), source })
}

pub(crate) fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).map_err(|source| CliError::Write { path: path.clone(), source })?;
    Ok(path)
}

pub(crate) fn csv_writer(dir: &Path, name: &str) -> CliResult<(PathBuf, csv::Writer<BufWriter<File>>)> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|source| CliError::Write { path: path.clone(), source })?;
    Ok((path, csv::Writer::from_writer(BufWriter::new(file))))
}

pub(crate) fn finish_csv(path: &Path, w: csv::Writer<BufWriter<File>>) -> CliResult<()> {
    let mut inner = w.into_inner().map_err(|e| CliError::Write { path: path.into(), source: e.into_error() })?;
    inner.flush().map_err(|source| CliError::Write { path: path.into(), source })
}

//! Multi-trial experiments, hidden-unit sweeps, stride selection, and CSV
//! reports.
//!
//! Trial `t` of a row uses seed `base_seed + t` for the primary weights.
//! When the data is a random split, the same seed (on a separate RNG stream)
//! also draws that trial's partition, so rows of one config evaluated at the
//! same trial index share a partition.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use crate::costing::{baseline_macs, efficient_macs};
use crate::data::{load_delimited, split, Dataset, Delimiter, LabelColumn, Normalization};
use crate::error::{Error, Result};
use crate::model::{DesignTag, Distribution};
use crate::pairing::{fit_p_for_target, pair_count, select_tau};
use crate::solver::{train, DesignSpec, ModelConfig, SolveMethod, SolverSpec};

pub const REPORT_HEADER: &str =
    "dataset,design,P,tau,M,trial,accuracy,train_seconds,efficient_macs,baseline_macs";

/// Where a config's samples come from.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSpec {
    /// Fixed train and test files.
    Files {
        train: PathBuf,
        test: PathBuf,
        label_col: LabelColumn,
        delim: Delimiter,
    },
    /// One file, randomly re-split for every trial.
    Split {
        path: PathBuf,
        train_fraction: f64,
        label_col: LabelColumn,
        delim: Delimiter,
    },
}

impl DataSpec {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DataSpec::Files { train, test, .. } => {
                fix(train);
                fix(test);
            }
            DataSpec::Split { path, .. } => fix(path),
        }
    }
}

/// A sweep definition. Every key is required except `solver.lambda`
/// (defaults to 0.01).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub trials: usize,
    pub base_seed: u64,
    pub normalization: Normalization,
    pub distribution: Distribution,
    pub solver: SolverSpec,
    pub data: DataSpec,
    pub grid: Vec<DesignSpec>,
}

impl ExperimentConfig {
    /// Parses a TOML config; relative data paths are taken relative to `base_dir`.
    pub fn from_toml(text: &str, base_dir: impl AsRef<Path>) -> Result<Self> {
        let mut config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.data.resolve(base_dir.as_ref());
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        ExperimentConfig::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("grid must contain at least one entry".into()));
        }
        self.distribution.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.solver.method == SolveMethod::Ridge && !(self.solver.lambda > 0.0 && self.solver.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "ridge lambda must be positive, got {}",
                self.solver.lambda
            )));
        }
        for entry in &self.grid {
            match *entry {
                DesignSpec::Baseline { m: 0 } => {
                    return Err(Error::Config("baseline m must be at least 1".into()))
                }
                DesignSpec::Efficient { p, tau } => {
                    pair_count(p, tau).map_err(|e| Error::Config(format!("grid entry P={p} tau={tau}: {e}")))?;
                }
                _ => {}
            }
        }
        if let DataSpec::Split { train_fraction, .. } = self.data {
            if !(train_fraction > 0.0 && train_fraction < 1.0) {
                return Err(Error::Config(format!(
                    "train_fraction must lie in (0, 1), got {train_fraction}"
                )));
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> TrialSettings {
        TrialSettings {
            normalization: self.normalization,
            distribution: self.distribution,
            solver: self.solver,
        }
    }
}

/// Model settings shared by every grid entry of a config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSettings {
    pub normalization: Normalization,
    pub distribution: Distribution,
    pub solver: SolverSpec,
}

impl TrialSettings {
    pub fn model_config(&self, design: DesignSpec, seed: u64) -> ModelConfig {
        ModelConfig {
            seed,
            normalization: self.normalization,
            design,
            distribution: self.distribution,
            solver: self.solver,
        }
    }
}

/// Loaded samples for a config.
#[derive(Debug, Clone)]
pub enum DataSource {
    Fixed { train: Dataset, test: Dataset },
    Resplit { full: Dataset, train_fraction: f64 },
}

impl DataSource {
    pub fn load(spec: &DataSpec) -> Result<Self> {
        match spec {
            DataSpec::Files {
                train,
                test,
                label_col,
                delim,
            } => {
                let train = load_delimited(train, *label_col, *delim)?;
                let test = load_delimited(test, *label_col, *delim)?;
                DataSource::fixed(train, test)
            }
            DataSpec::Split {
                path,
                train_fraction,
                label_col,
                delim,
            } => DataSource::resplit(load_delimited(path, *label_col, *delim)?, *train_fraction),
        }
    }

    pub fn fixed(train: Dataset, test: Dataset) -> Result<Self> {
        if train.n_features() != test.n_features() {
            return Err(Error::Shape {
                what: "test set features",
                expected: train.n_features(),
                actual: test.n_features(),
            });
        }
        Ok(DataSource::Fixed { train, test })
    }

    pub fn resplit(full: Dataset, train_fraction: f64) -> Result<Self> {
        // rejects fractions that leave either side empty
        split(&full, train_fraction, 0)?;
        Ok(DataSource::Resplit { full, train_fraction })
    }

    pub fn name(&self) -> &str {
        match self {
            DataSource::Fixed { train, .. } => train.name(),
            DataSource::Resplit { full, .. } => full.name(),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            DataSource::Fixed { train, .. } => train.n_features(),
            DataSource::Resplit { full, .. } => full.n_features(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            DataSource::Fixed { train, .. } => train.n_classes(),
            DataSource::Resplit { full, .. } => full.n_classes(),
        }
    }

    /// Train and test sets for the trial seeded with `seed`.
    pub fn trial(&self, seed: u64) -> Result<(Cow<'_, Dataset>, Cow<'_, Dataset>)> {
        match self {
            DataSource::Fixed { train, test } => Ok((Cow::Borrowed(train), Cow::Borrowed(test))),
            DataSource::Resplit { full, train_fraction } => {
                let (a, b) = split(full, *train_fraction, seed)?;
                Ok((Cow::Owned(a), Cow::Owned(b)))
            }
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregated trials of one grid entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub design: DesignTag,
    pub p_units: usize,
    pub tau: Option<usize>,
    pub hidden_width: usize,
    /// Test accuracy in percent, by trial index.
    pub accuracies: Vec<f64>,
    pub train_seconds: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub efficient_macs: u64,
    pub baseline_macs: u64,
}

impl ReportRow {
    pub fn new(
        dataset: impl Into<String>,
        design: DesignSpec,
        n_features: usize,
        n_classes: usize,
        accuracies: Vec<f64>,
        train_seconds: Vec<f64>,
    ) -> Result<Self> {
        let (tag, p, tau, m) = match design {
            DesignSpec::Baseline { m } => (DesignTag::Baseline, m, None, m),
            DesignSpec::Efficient { p, tau } => (DesignTag::Efficient, p, Some(tau), pair_count(p, tau)? as usize),
        };
        let (n, q) = (n_features as u64, n_classes as u64);
        let (mean, std) = mean_std(&accuracies);
        Ok(ReportRow {
            dataset: dataset.into(),
            design: tag,
            p_units: p,
            tau,
            hidden_width: m,
            accuracies,
            train_seconds,
            mean,
            std,
            efficient_macs: efficient_macs(n, p as u64, m as u64, q),
            baseline_macs: baseline_macs(n, m as u64, q),
        })
    }

    pub fn trials(&self) -> usize {
        self.accuracies.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Print one line per finished trial on stderr.
    pub progress: bool,
}

/// Trains and scores `trials` networks for one grid entry. Trials may run
/// concurrently; results are ordered by trial index.
pub fn run_trials(
    entry: DesignSpec,
    source: &DataSource,
    settings: &TrialSettings,
    trials: usize,
    base_seed: u64,
    options: RunOptions,
) -> Result<ReportRow> {
    if trials < 1 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let results: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            run_one(entry, source, settings, base_seed.wrapping_add(t as u64), t, trials, options)
                .map_err(|e| Error::Trial {
                    trial: t,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let (accuracies, seconds) = results.into_iter().unzip();
    ReportRow::new(
        source.name(),
        entry,
        source.n_features(),
        source.n_classes(),
        accuracies,
        seconds,
    )
}

fn run_one(
    entry: DesignSpec,
    source: &DataSource,
    settings: &TrialSettings,
    seed: u64,
    trial: usize,
    trials: usize,
    options: RunOptions,
) -> Result<(f64, f64)> {
    let (train_set, test_set) = source.trial(seed)?;
    let started = Instant::now();
    let network = train(&settings.model_config(entry, seed), &train_set)?;
    let seconds = started.elapsed().as_secs_f64();
    let accuracy = network.accuracy(test_set.features(), test_set.labels())?;
    if options.progress {
        eprintln!(
            "[{}] {} trial {}/{} accuracy={:.4} train_seconds={:.3}",
            source.name(),
            describe(entry),
            trial + 1,
            trials,
            accuracy,
            seconds
        );
    }
    Ok((accuracy, seconds))
}

fn describe(entry: DesignSpec) -> String {
    match entry {
        DesignSpec::Baseline { m } => format!("baseline M={m}"),
        DesignSpec::Efficient { p, tau } => format!("efficient P={p} tau={tau}"),
    }
}

/// One row per grid entry, in configured order.
pub fn sweep(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentReport> {
    config.validate()?;
    let source = DataSource::load(&config.data)?;
    sweep_with(config, &source, options)
}

/// [`sweep`] over already loaded data.
pub fn sweep_with(config: &ExperimentConfig, source: &DataSource, options: RunOptions) -> Result<ExperimentReport> {
    let settings = config.settings();
    let mut rows = Vec::with_capacity(config.grid.len());
    for &entry in &config.grid {
        let mut row = run_trials(entry, source, &settings, config.trials, config.base_seed, options)?;
        row.dataset = config.name.clone();
        rows.push(row);
    }
    Ok(ExperimentReport { rows })
}

/// Hidden width with the best mean accuracy; ties go to the smaller width.
pub fn select_peak(candidates: &[(usize, f64)]) -> Option<usize> {
    candidates
        .iter()
        .copied()
        .fold(None, |best: Option<(usize, f64)>, (m, acc)| match best {
            Some((bm, bacc)) if acc < bacc || (acc == bacc && m >= bm) => Some((bm, bacc)),
            _ => Some((m, acc)),
        })
        .map(|(m, _)| m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauSelection {
    pub m_star: usize,
    pub tau: usize,
    pub p_units: usize,
    /// Baseline rows the peak was chosen from.
    pub rows: Vec<ReportRow>,
}

impl TauSelection {
    pub fn from_rows(rows: Vec<ReportRow>) -> Result<Self> {
        let candidates: Vec<(usize, f64)> = rows.iter().map(|r| (r.hidden_width, r.mean)).collect();
        let m_star = select_peak(&candidates).ok_or_else(|| Error::invalid("baseline grid is empty"))?;
        let tau = select_tau(m_star);
        Ok(TauSelection {
            m_star,
            tau,
            p_units: fit_p_for_target(m_star, tau)?,
            rows,
        })
    }
}

/// Trains the baseline over `baseline_grid`, takes the width with the best
/// mean test accuracy as the target `M`, and derives `tau` and `P` from it.
pub fn tau_procedure(
    source: &DataSource,
    baseline_grid: &[usize],
    settings: &TrialSettings,
    trials: usize,
    base_seed: u64,
    options: RunOptions,
) -> Result<TauSelection> {
    if baseline_grid.is_empty() {
        return Err(Error::invalid("baseline grid is empty"));
    }
    let rows = baseline_grid
        .iter()
        .map(|&m| run_trials(DesignSpec::Baseline { m }, source, settings, trials, base_seed, options))
        .collect::<Result<Vec<_>>>()?;
    TauSelection::from_rows(rows)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EmitOptions {
    /// Write measured training times. Off by default so that reports are
    /// byte-for-byte reproducible; the column is then left empty.
    pub timings: bool,
}

fn row_prefix(row: &ReportRow) -> String {
    format!(
        "{},{},{},{},{}",
        row.dataset,
        row.design.as_str(),
        row.p_units,
        row.tau.map(|t| t.to_string()).unwrap_or_default(),
        row.hidden_width
    )
}

pub fn render_report(report: &ExperimentReport, options: EmitOptions) -> String {
    let mut out = String::new();
    out.push_str(REPORT_HEADER);
    out.push('\n');
    let secs = |v: f64| if options.timings { format!("{v:.6}") } else { String::new() };
    for row in &report.rows {
        let prefix = row_prefix(row);
        let macs = format!("{},{}", row.efficient_macs, row.baseline_macs);
        for (t, (acc, s)) in row.accuracies.iter().zip(&row.train_seconds).enumerate() {
            let _ = writeln!(out, "{prefix},{t},{acc:.4},{},{macs}", secs(*s));
        }
        let (mean_secs, std_secs) = mean_std(&row.train_seconds);
        let _ = writeln!(out, "{prefix},mean,{:.4},{},{macs}", row.mean, secs(mean_secs));
        let _ = writeln!(out, "{prefix},std,{:.4},{},{macs}", row.std, secs(std_secs));
    }
    out
}

pub fn write_report<W: Write>(report: &ExperimentReport, mut writer: W, options: EmitOptions) -> std::io::Result<()> {
    writer.write_all(render_report(report, options).as_bytes())
}

pub fn emit_report(report: &ExperimentReport, path: impl AsRef<Path>, options: EmitOptions) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    write_report(report, &mut writer, options).map_err(|e| Error::io(path, e))?;
    writer.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialField {
    Index(usize),
    Mean,
    Std,
}

/// One parsed report line.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportLine {
    pub dataset: String,
    pub design: DesignTag,
    pub p_units: usize,
    pub tau: Option<usize>,
    pub hidden_width: usize,
    pub trial: TrialField,
    pub accuracy: f64,
    pub train_seconds: Option<f64>,
    pub efficient_macs: u64,
    pub baseline_macs: u64,
}

pub fn parse_report(text: &str) -> Result<Vec<ReportLine>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(REPORT_HEADER) => {}
        _ => return Err(Error::data(Some(1), "missing report header")),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| parse_line(line).map_err(|msg| Error::data(Some(i + 2), msg)))
        .collect()
}

fn parse_line(line: &str) -> std::result::Result<ReportLine, String> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 10 {
        return Err(format!("expected 10 fields, found {}", f.len()));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad integer `{s}`"));
    let design = match f[1] {
        "baseline" => DesignTag::Baseline,
        "efficient" => DesignTag::Efficient,
        other => return Err(format!("unknown design `{other}`")),
    };
    let trial = match f[5] {
        "mean" => TrialField::Mean,
        "std" => TrialField::Std,
        s => TrialField::Index(num(s)?),
    };
    Ok(ReportLine {
        dataset: f[0].to_string(),
        design,
        p_units: num(f[2])?,
        tau: if f[3].is_empty() { None } else { Some(num(f[3])?) },
        hidden_width: num(f[4])?,
        trial,
        accuracy: f[6].parse().map_err(|_| format!("bad accuracy `{}`", f[6]))?,
        train_seconds: if f[7].is_empty() {
            None
        } else {
            Some(f[7].parse().map_err(|_| format!("bad seconds `{}`", f[7]))?)
        },
        efficient_macs: f[8].parse().map_err(|_| format!("bad count `{}`", f[8]))?,
        baseline_macs: f[9].parse().map_err(|_| format!("bad count `{}`", f[9]))?,
    })
}

//! Real-data path: CSV ingestion, daily median aggregation, and a
//! detector-suite analysis with checkpoint/resume.

use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::config::{DetectorKind, MonitorConfig, ScaleMode};
use crate::error::{Error, Result};
use crate::monitor::{MonitorSession, SessionSnapshot, TracePoint};
use crate::table::TableStore;

/// Column mapping for input files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub date_col: String,
    pub value_col: String,
    /// chrono format string, e.g. `%Y-%m-%d`.
    pub date_format: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            date_col: "date".into(),
            value_col: "value".into(),
            date_format: "%Y-%m-%d".into(),
        }
    }
}

/// One raw measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub date: NaiveDate,
    pub value: f64,
}

/// Parsed records plus an account of everything that was skipped.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub records: Vec<SeriesRecord>,
    pub skipped: usize,
    /// One message per skipped row.
    pub skip_log: Vec<String>,
}

/// Reads records from CSV. Invalid rows are counted and logged, never
/// silently dropped; a file with no valid rows is an error.
pub fn ingest_csv(reader: impl Read, schema: &CsvSchema) -> Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::DataError(format!("unreadable CSV header: {e}")))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::DataError(format!("missing column {name:?} in CSV header")))
    };
    let date_idx = find(&schema.date_col)?;
    let value_idx = find(&schema.value_col)?;

    let mut records = Vec::new();
    let mut skip_log = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let rowno = line + 2; // header is line 1
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                skip_log.push(format!("row {rowno}: unparseable ({e})"));
                continue;
            }
        };
        let (Some(date_raw), Some(value_raw)) = (row.get(date_idx), row.get(value_idx)) else {
            skip_log.push(format!("row {rowno}: too few columns"));
            continue;
        };
        let date = match NaiveDate::parse_from_str(date_raw.trim(), &schema.date_format) {
            Ok(d) => d,
            Err(e) => {
                skip_log.push(format!("row {rowno}: bad date {date_raw:?} ({e})"));
                continue;
            }
        };
        let value = match value_raw.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                skip_log.push(format!("row {rowno}: non-finite value {v}"));
                continue;
            }
            Err(_) => {
                skip_log.push(format!("row {rowno}: non-numeric value {value_raw:?}"));
                continue;
            }
        };
        records.push(SeriesRecord { date, value });
    }
    if records.is_empty() {
        return Err(Error::DataError(
            "no valid rows in input (empty file or all rows skipped)".into(),
        ));
    }
    Ok(IngestReport {
        skipped: skip_log.len(),
        skip_log,
        records,
    })
}

/// Per-day medians on strictly increasing dates. Days without data are
/// simply absent; indices run over present days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl DailySeries {
    pub fn from_parts(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::DataError("dates/values length mismatch".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::DataError("dates must be strictly increasing".into()));
        }
        Ok(Self { dates, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Date of the 1-based absolute observation index.
    pub fn date_of_index(&self, index: usize) -> Option<NaiveDate> {
        self.dates.get(index.checked_sub(1)?).copied()
    }
}

/// Collapses records into one median per calendar date (duplicate dates
/// merge). Even day counts use the mid-median, the average of the two
/// central order statistics.
pub fn aggregate_daily(records: &[SeriesRecord]) -> Result<DailySeries> {
    if records.is_empty() {
        return Err(Error::DataError("no records to aggregate".into()));
    }
    let mut sorted: Vec<&SeriesRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.date);
    let mut dates = Vec::new();
    let mut values = Vec::new();
    let mut day: Vec<f64> = Vec::new();
    let mut current = sorted[0].date;
    let flush = |date: NaiveDate, day: &mut Vec<f64>, dates: &mut Vec<_>, values: &mut Vec<_>| {
        day.sort_unstable_by(|a: &f64, b: &f64| a.partial_cmp(b).unwrap());
        let m = day.len();
        let median = if m % 2 == 1 {
            day[m / 2]
        } else {
            (day[m / 2 - 1] + day[m / 2]) / 2.0
        };
        dates.push(date);
        values.push(median);
        day.clear();
    };
    for r in sorted {
        if r.date != current {
            flush(current, &mut day, &mut dates, &mut values);
            current = r.date;
        }
        day.push(r.value);
    }
    flush(current, &mut day, &mut dates, &mut values);
    DailySeries::from_parts(dates, values)
}

// ---------------------------------------------------------------------------
// Analysis
// ---------------------------------------------------------------------------

/// Where the variance of sigma-scaled detectors comes from on the
/// application path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PipelineScale {
    /// Empirical variance over the monitoring period (the application
    /// convention; unusual, so the report always discloses it).
    MonitoringVariance,
    /// Unbiased variance of the training window.
    TrainVariance,
}

impl PipelineScale {
    pub fn label(&self) -> &'static str {
        match self {
            PipelineScale::MonitoringVariance => "monitoring-period empirical variance",
            PipelineScale::TrainVariance => "training-sample variance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub training_len: usize,
    pub alpha: f64,
    pub detectors: Vec<DetectorKind>,
    pub scale: PipelineScale,
    /// Trace stride for the per-detector traces (0 disables).
    pub trace_stride: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            training_len: 31,
            alpha: MonitorConfig::DEFAULT_ALPHA,
            detectors: DetectorKind::ALL.to_vec(),
            scale: PipelineScale::MonitoringVariance,
            trace_stride: 1,
        }
    }
}

/// Per-detector analysis outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorAnalysis {
    pub detector: DetectorKind,
    pub detected: bool,
    pub detection_date: Option<NaiveDate>,
    pub detection_k: Option<usize>,
    pub statistic: Option<f64>,
    pub threshold: Option<f64>,
    pub change_estimate_date: Option<NaiveDate>,
    pub change_estimate_index: Option<usize>,
    /// Human-readable description of the scale actually divided out.
    pub scale_used: String,
    pub sigma_used: Option<f64>,
    pub v_n_used: Option<f64>,
    pub trace: Vec<TracePoint>,
}

/// Full report of one analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n_train: usize,
    pub alpha: f64,
    pub series_len: usize,
    pub first_date: NaiveDate,
    pub training_end_date: NaiveDate,
    pub last_date: NaiveDate,
    pub scale: PipelineScale,
    /// The monitoring-period variance, when that mode is active.
    pub monitoring_variance: Option<f64>,
    pub detectors: Vec<DetectorAnalysis>,
}

/// An analysis in flight: one session per detector over a shared series.
pub struct AnalysisRun {
    opts: AnalyzeOptions,
    series: DailySeries,
    monitoring_variance: Option<f64>,
    sessions: Vec<(DetectorKind, MonitorSession)>,
    fed: usize,
}

fn detector_config(
    kind: DetectorKind,
    opts: &AnalyzeOptions,
    monitoring_variance: Option<f64>,
) -> Result<MonitorConfig> {
    let mut cfg = MonitorConfig::new(kind, opts.training_len).with_alpha(opts.alpha);
    if kind.uses_sigma() {
        cfg.scale = match opts.scale {
            PipelineScale::TrainVariance => ScaleMode::TrainVariance,
            PipelineScale::MonitoringVariance => {
                let sigma2 = monitoring_variance.expect("resolved before configs");
                if sigma2 <= 0.0 {
                    return Err(Error::ZeroVariance(
                        "monitoring period has zero variance".into(),
                    ));
                }
                ScaleMode::Known { sigma2 }
            }
        };
    }
    if kind == DetectorKind::Rc {
        // Orlicz proxy assuming normal noise at the resolved scale.
        let sigma2 = monitoring_variance.unwrap_or(1.0);
        cfg.orlicz_norm = Some((8.0f64 / 3.0).sqrt() * sigma2.sqrt());
    }
    Ok(cfg)
}

impl AnalysisRun {
    pub fn new(series: DailySeries, opts: AnalyzeOptions, store: &TableStore) -> Result<Self> {
        if series.len() <= opts.training_len {
            return Err(Error::DataError(format!(
                "series has {} days, training needs more than {}",
                series.len(),
                opts.training_len
            )));
        }
        if opts.detectors.is_empty() {
            return Err(Error::InvalidConfig("no detectors requested".into()));
        }
        let monitoring_variance = match opts.scale {
            PipelineScale::MonitoringVariance => Some(
                crate::calibration::estimate_variance(&series.values()[opts.training_len..])
                    .map(|v| v.sigma2)
                    .unwrap_or(0.0),
            ),
            PipelineScale::TrainVariance => None,
        };
        let mut sessions = Vec::new();
        for &kind in &opts.detectors {
            let cfg = detector_config(kind, &opts, monitoring_variance)?;
            let table = if kind == DetectorKind::Rc {
                None
            } else {
                Some(store.for_config(&cfg)?)
            };
            sessions.push((
                kind,
                MonitorSession::new(&cfg, table)?.with_trace_stride(opts.trace_stride),
            ));
        }
        Ok(Self {
            opts,
            series,
            monitoring_variance,
            sessions,
            fed: 0,
        })
    }

    /// Feeds up to `count` further observations into every session.
    pub fn advance(&mut self, count: usize) -> Result<()> {
        let end = (self.fed + count).min(self.series.len());
        for i in self.fed..end {
            let x = self.series.values()[i];
            for (_, session) in &mut self.sessions {
                session.ingest(x)?;
            }
        }
        self.fed = end;
        Ok(())
    }

    pub fn remaining(&self) -> usize {
        self.series.len() - self.fed
    }

    /// Serializable checkpoint of every session.
    pub fn checkpoint(&self) -> Result<String> {
        let snaps: Vec<SessionSnapshot> =
            self.sessions.iter().map(|(_, s)| s.snapshot()).collect();
        Ok(serde_json::to_string(&serde_json::json!({
            "fed": self.fed,
            "sessions": snaps,
        }))?)
    }

    /// Restores a checkpointed run against the same series and options.
    pub fn resume(
        series: DailySeries,
        opts: AnalyzeOptions,
        store: &TableStore,
        checkpoint: &str,
    ) -> Result<Self> {
        let mut run = Self::new(series, opts, store)?;
        let doc: serde_json::Value = serde_json::from_str(checkpoint)?;
        let fed = doc["fed"]
            .as_u64()
            .ok_or_else(|| Error::DataError("checkpoint missing fed count".into()))?
            as usize;
        let snaps: Vec<SessionSnapshot> = serde_json::from_value(doc["sessions"].clone())?;
        if snaps.len() != run.sessions.len() {
            return Err(Error::DataError(
                "checkpoint detector set does not match options".into(),
            ));
        }
        for ((kind, slot), snap) in run.sessions.iter_mut().zip(snaps) {
            let cfg = detector_config(*kind, &run.opts, run.monitoring_variance)?;
            *slot = snap.restore(&cfg)?;
        }
        run.fed = fed;
        Ok(run)
    }

    /// Consumes the rest of the series and produces the report.
    pub fn finish(mut self) -> Result<AnalysisReport> {
        self.advance(self.remaining())?;
        let n = self.opts.training_len;
        let series = &self.series;
        let detectors = self
            .sessions
            .iter()
            .map(|(kind, session)| {
                let report = session.report();
                let v = report.verdict;
                DetectorAnalysis {
                    detector: *kind,
                    detected: v.detected,
                    detection_date: v.k_hat.and_then(|k| series.date_of_index(n + k)),
                    detection_k: v.k_hat,
                    statistic: v.statistic,
                    threshold: v.threshold,
                    change_estimate_date: v
                        .change_estimate
                        .and_then(|i| series.date_of_index(i)),
                    change_estimate_index: v.change_estimate,
                    scale_used: match (kind, self.opts.scale) {
                        (DetectorKind::Sntc, _) => "self-normalized (V_N)".into(),
                        (DetectorKind::Nptc, _) => "none (rank statistic)".into(),
                        (DetectorKind::Rc, _) => "Orlicz proxy (normal)".into(),
                        (_, mode) => mode.label().into(),
                    },
                    sigma_used: report.sigma_used,
                    v_n_used: report.v_n_used,
                    trace: report.trace,
                }
            })
            .collect();
        Ok(AnalysisReport {
            n_train: n,
            alpha: self.opts.alpha,
            series_len: series.len(),
            first_date: series.dates()[0],
            training_end_date: series.dates()[n - 1],
            last_date: *series.dates().last().unwrap(),
            scale: self.opts.scale,
            monitoring_variance: self.monitoring_variance,
            detectors,
        })
    }
}

/// Runs every configured detector over the series and reports detection
/// and change-estimate dates.
pub fn analyze(
    series: &DailySeries,
    opts: &AnalyzeOptions,
    store: &TableStore,
) -> Result<AnalysisReport> {
    AnalysisRun::new(series.clone(), opts.clone(), store)?.finish()
}

/// Synthetic demonstration series: a level shift of `delta` after
/// `shift_day` (1-based), several measurements per day so the daily
/// median aggregation has something to do. Deterministic in `seed`.
pub fn synthetic_demo_records(
    days: usize,
    shift_day: usize,
    delta: f64,
    noise_sd: f64,
    seed: u64,
) -> Vec<SeriesRecord> {
    use rand::prelude::*;
    use rand_distr::StandardNormal;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2020, 5, 1).unwrap();
    let mut out = Vec::new();
    for d in 0..days {
        let date = start + chrono::Days::new(d as u64);
        let level = 30.0 + if d + 1 >= shift_day { delta } else { 0.0 };
        let day_noise: f64 = StandardNormal.sample(&mut rng);
        let m = 3 + (rng.random::<u32>() % 4) as usize;
        for _ in 0..m {
            let jitter: f64 = StandardNormal.sample(&mut rng);
            out.push(SeriesRecord {
                date,
                value: level + noise_sd * day_noise + 0.3 * noise_sd * jitter,
            });
        }
    }
    out
}

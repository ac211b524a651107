//! Sequential monitoring sessions: consume a training sample, then test
//! each incoming observation against a calibrated critical value.

use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_detector, rc_statistic, rc_threshold};
use crate::config::{DetectorKind, MonitorConfig, ScaleMode};
use crate::detectors::{np_detector, resolve_sigma, sn_detector, twin_scan};
use crate::error::{Error, Result};
use crate::state::{config_fingerprint, StreamState};
use crate::table::QuantileTable;

/// When a monitoring session stops if no change is declared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Monitor at most this many steps past training.
    Horizon(usize),
    /// Monitor until the stream ends.
    OpenEnded,
}

/// Outcome of a session's decision rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorVerdict {
    pub detected: bool,
    /// Monitoring index of the first threshold crossing.
    pub k_hat: Option<usize>,
    /// Detector value at the crossing.
    pub statistic: Option<f64>,
    /// Critical value used at the crossing (for RC, at that step).
    pub threshold: Option<f64>,
    /// Maximizing comparison-window length at detection, for detectors
    /// that scan one.
    pub ell_hat: Option<usize>,
    /// Estimated first post-change observation on the absolute sample
    /// timeline: `n_train + k_hat - ell_hat + 1`.
    pub change_estimate: Option<usize>,
}

impl DetectorVerdict {
    fn none() -> Self {
        Self {
            detected: false,
            k_hat: None,
            statistic: None,
            threshold: None,
            ell_hat: None,
            change_estimate: None,
        }
    }
}

/// Detection delay relative to a known change location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayResult {
    pub k_star: usize,
    pub k_hat: Option<usize>,
    /// `max(k_hat - k_star, 0)`; absent when nothing was detected.
    pub delay: Option<usize>,
    /// Detection strictly before the change.
    pub false_alarm: bool,
}

impl DelayResult {
    pub fn new(k_star: usize, k_hat: Option<usize>) -> Self {
        match k_hat {
            Some(k) => Self {
                k_star,
                k_hat,
                delay: Some(k.saturating_sub(k_star)),
                false_alarm: k < k_star,
            },
            None => Self {
                k_star,
                k_hat: None,
                delay: None,
                false_alarm: false,
            },
        }
    }
}

/// One recorded point of the statistic trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub k: usize,
    pub statistic: f64,
    pub threshold: f64,
}

/// Everything a monitoring run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub verdict: DetectorVerdict,
    /// Recorded statistic trace (stride-subsampled when requested; the
    /// detection step is always kept).
    pub trace: Vec<TracePoint>,
    /// Monitoring steps consumed.
    pub steps: usize,
    /// Standard deviation divided out, for sigma-scaled detectors.
    pub sigma_used: Option<f64>,
    /// Self-normalizer, for the self-normalized detector.
    pub v_n_used: Option<f64>,
    pub config: MonitorConfig,
}

/// An in-flight monitoring session. Feed observations one at a time; the
/// session trains itself on the first `n_train` of them and then starts
/// testing. Single-writer by construction.
#[derive(Debug, Clone)]
pub struct MonitorSession {
    cfg: MonitorConfig,
    /// Fixed critical value (absent for RC, whose threshold moves with k).
    threshold: Option<f64>,
    state: StreamState,
    sigma_used: Option<f64>,
    v_n_used: Option<f64>,
    trace_stride: usize,
    trace: Vec<TracePoint>,
    steps: usize,
    verdict: DetectorVerdict,
}

impl MonitorSession {
    /// Opens a session. `table` must calibrate `cfg`; RC runs on its
    /// analytic threshold and takes no table.
    pub fn new(cfg: &MonitorConfig, table: Option<&QuantileTable>) -> Result<Self> {
        cfg.validate()?;
        let threshold = match (cfg.detector, table) {
            (DetectorKind::Rc, None) => None,
            (DetectorKind::Rc, Some(_)) => {
                return Err(Error::TableMismatch(
                    "RC uses its analytic threshold; do not pass a table".into(),
                ))
            }
            (_, Some(t)) => {
                t.check_config(cfg)?;
                Some(t.critical_value(cfg.alpha)?)
            }
            (_, None) => {
                return Err(Error::TableMismatch(format!(
                    "{} needs a calibrated quantile table",
                    cfg.detector
                )))
            }
        };
        Ok(Self {
            cfg: cfg.clone(),
            threshold,
            state: StreamState::for_config(cfg),
            sigma_used: None,
            v_n_used: None,
            trace_stride: 1,
            trace: Vec::new(),
            steps: 0,
            verdict: DetectorVerdict::none(),
        })
    }

    /// Record every `stride`-th trace point (0 disables the trace; the
    /// detection step is always recorded).
    pub fn with_trace_stride(mut self, stride: usize) -> Self {
        self.trace_stride = stride;
        self
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.cfg
    }

    pub fn verdict(&self) -> &DetectorVerdict {
        &self.verdict
    }

    pub fn detected(&self) -> bool {
        self.verdict.detected
    }

    pub fn training_complete(&self) -> bool {
        self.state.training_complete()
    }

    /// Monitoring steps consumed so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Feeds one observation. Returns the evaluated trace point once the
    /// session is monitoring; `None` during training and after an alarm
    /// (post-alarm input is ignored).
    pub fn ingest(&mut self, x: f64) -> Result<Option<TracePoint>> {
        if self.verdict.detected {
            return Ok(None);
        }
        self.state.ingest(x)?;
        if !self.state.training_complete() {
            return Ok(None);
        }
        if self.state.monitoring_index() == 0 {
            self.finish_training()?;
            return Ok(None);
        }
        let k = self.state.monitoring_index();
        self.steps = k;

        let (value, window_len, thr) = match self.cfg.detector {
            DetectorKind::Tc => {
                let scan = twin_scan(&self.state, k, &self.cfg)?;
                (
                    scan.value / self.sigma_used.expect("sigma resolved at training end"),
                    Some(scan.argmax_ell),
                    self.threshold.unwrap(),
                )
            }
            DetectorKind::Sntc => {
                let scan = sn_detector(&self.state, k, &self.cfg)?;
                (scan.value, Some(scan.argmax_ell), self.threshold.unwrap())
            }
            DetectorKind::Nptc => {
                let scan = np_detector(&self.state, k, &self.cfg)?;
                (scan.value, Some(scan.argmax_ell), self.threshold.unwrap())
            }
            DetectorKind::Rc => {
                let stat = rc_statistic(&self.state, k)?;
                (stat.value, stat.window_len, rc_threshold(k, &self.cfg)?)
            }
            kind => {
                let v = baseline_detector(&self.state, k, kind, &self.cfg)?;
                (v.value, v.window_len, self.threshold.unwrap())
            }
        };

        let point = TracePoint {
            k,
            statistic: value,
            threshold: thr,
        };
        let crossed = value > thr;
        if self.trace_stride > 0 && (k % self.trace_stride == 0 || crossed) {
            self.trace.push(point);
        }
        if crossed {
            self.verdict = DetectorVerdict {
                detected: true,
                k_hat: Some(k),
                statistic: Some(value),
                threshold: Some(thr),
                ell_hat: window_len,
                change_estimate: window_len.map(|len| self.cfg.n_train + k - len + 1),
            };
        }
        Ok(Some(point))
    }

    /// Training just completed: freeze the scale factors the decision
    /// rule divides by.
    fn finish_training(&mut self) -> Result<()> {
        if crate::table::is_sigma_scaled(self.cfg.scale) {
            self.sigma_used = Some(resolve_sigma(&self.state, &self.cfg)?);
        }
        if self.cfg.scale == ScaleMode::SelfNormalized {
            let v = self.state.v_n().expect("training complete");
            if v == 0.0 {
                return Err(Error::DegenerateNormalizer);
            }
            self.v_n_used = Some(v);
        }
        Ok(())
    }

    pub fn report(&self) -> MonitorReport {
        let mut verdict = self.verdict.clone();
        if !verdict.detected {
            verdict.threshold = self.threshold;
        }
        MonitorReport {
            verdict,
            trace: self.trace.clone(),
            steps: self.steps,
            sigma_used: self.sigma_used,
            v_n_used: self.v_n_used,
            config: self.cfg.clone(),
        }
    }

    /// Serializable checkpoint; restoring requires the same configuration.
    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            version: crate::state::SNAPSHOT_VERSION,
            config_fingerprint: config_fingerprint(&self.cfg),
            threshold: self.threshold,
            state: self.state.clone(),
            sigma_used: self.sigma_used,
            v_n_used: self.v_n_used,
            trace_stride: self.trace_stride,
            trace: self.trace.clone(),
            steps: self.steps,
            verdict: self.verdict.clone(),
        }
    }
}

/// Versioned checkpoint of a whole monitoring session.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub version: u32,
    pub config_fingerprint: String,
    threshold: Option<f64>,
    state: StreamState,
    sigma_used: Option<f64>,
    v_n_used: Option<f64>,
    trace_stride: usize,
    trace: Vec<TracePoint>,
    steps: usize,
    verdict: DetectorVerdict,
}

impl SessionSnapshot {
    pub fn restore(self, cfg: &MonitorConfig) -> Result<MonitorSession> {
        if self.version != crate::state::SNAPSHOT_VERSION {
            return Err(Error::DataError(format!(
                "unsupported snapshot version {}",
                self.version
            )));
        }
        let expect = config_fingerprint(cfg);
        if self.config_fingerprint != expect {
            return Err(Error::TableMismatch(format!(
                "snapshot was taken under config {}, requested {}",
                self.config_fingerprint, expect
            )));
        }
        Ok(MonitorSession {
            cfg: cfg.clone(),
            threshold: self.threshold,
            state: self.state,
            sigma_used: self.sigma_used,
            v_n_used: self.v_n_used,
            trace_stride: self.trace_stride,
            trace: self.trace,
            steps: self.steps,
            verdict: self.verdict,
        })
    }
}

/// Runs a full monitoring session over `stream`: training sample first,
/// then sequential testing until the first crossing, the stop rule, or
/// stream end.
pub fn monitor(
    stream: impl IntoIterator<Item = f64>,
    cfg: &MonitorConfig,
    table: Option<&QuantileTable>,
    stop: StopRule,
) -> Result<MonitorReport> {
    monitor_traced(stream, cfg, table, stop, 1)
}

/// As [`monitor`], with a trace stride (0 disables the trace).
pub fn monitor_traced(
    stream: impl IntoIterator<Item = f64>,
    cfg: &MonitorConfig,
    table: Option<&QuantileTable>,
    stop: StopRule,
    trace_stride: usize,
) -> Result<MonitorReport> {
    let mut session = MonitorSession::new(cfg, table)?.with_trace_stride(trace_stride);
    let mut it = stream.into_iter();
    while !session.training_complete() {
        match it.next() {
            Some(x) => {
                session.ingest(x)?;
            }
            None => {
                return Err(Error::StreamExhausted {
                    needed: cfg.n_train,
                    got: session.state.count(),
                })
            }
        }
    }
    loop {
        if let StopRule::Horizon(t) = stop {
            if session.steps() >= t {
                break;
            }
        }
        let Some(x) = it.next() else { break };
        session.ingest(x)?;
        if session.detected() {
            break;
        }
    }
    Ok(session.report())
}

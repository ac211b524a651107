//! Scenario generation and experiment runners: noise families, permanent
//! and epidemic mean changes, and level/power/delay metrics with common
//! random numbers across detectors.

use std::io::Write;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DetectorKind, MonitorConfig, ScaleMode};
use crate::engine::run_stream;
use crate::error::{Error, Result};
use crate::monitor::DelayResult;
use crate::table::TableStore;
use crate::util::{quantile, split_seed};

/// Truncation point of the centered-exponential noise; the root of
/// `(c+1)^2 = e^c`, which makes the truncated second moment equal one.
pub const TRUNC_EXP_CUT: f64 = 2.513;

/// Mean of an Exp(1) variable conditioned on being at most `TRUNC_EXP_CUT`.
pub fn trunc_exp_mean() -> f64 {
    let c = TRUNC_EXP_CUT;
    (1.0 - (1.0 + c) * (-c).exp()) / (1.0 - (-c).exp())
}

/// Noise families of the simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum NoiseModel {
    /// Standard normal.
    Normal,
    /// Uniform on `[-sqrt(3), sqrt(3)]` (unit variance).
    Uniform,
    /// Exponential conditioned on `E <= 2.513`, minus its mean. The
    /// truncation keeps the noise subgaussian; the centered variable has
    /// unit *second moment before centering*, not unit variance.
    TruncExp,
    /// Standard Cauchy (no mean or variance; median zero).
    Cauchy,
    /// AR(1) with the given coefficient over an i.i.d. innovation family.
    Ar1 { phi: f64, innovation: Box<NoiseModel> },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if let NoiseModel::Ar1 { phi, innovation } = self {
            if !(phi.abs() < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "AR(1) coefficient must satisfy |phi| < 1, got {phi}"
                )));
            }
            if matches!(**innovation, NoiseModel::Ar1 { .. }) {
                return Err(Error::InvalidConfig(
                    "AR(1) innovations must be an i.i.d. family".into(),
                ));
            }
            innovation.validate()?;
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            NoiseModel::Normal => "normal".into(),
            NoiseModel::Uniform => "uniform".into(),
            NoiseModel::TruncExp => "truncexp".into(),
            NoiseModel::Cauchy => "cauchy".into(),
            NoiseModel::Ar1 { phi, innovation } => format!("ar1({phi},{})", innovation.label()),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(NoiseModel::Normal),
            "uniform" => Ok(NoiseModel::Uniform),
            "truncexp" | "exponential" => Ok(NoiseModel::TruncExp),
            "cauchy" => Ok(NoiseModel::Cauchy),
            other => {
                if let Some(phi) = other.strip_prefix("ar1:") {
                    let phi: f64 = phi
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("bad AR(1) phi {phi:?}")))?;
                    Ok(NoiseModel::Ar1 {
                        phi,
                        innovation: Box::new(NoiseModel::Normal),
                    })
                } else {
                    Err(Error::InvalidConfig(format!("unknown noise family {s:?}")))
                }
            }
        }
    }

    fn sample_iid(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            NoiseModel::Normal => StandardNormal.sample(rng),
            NoiseModel::Uniform => (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt(),
            NoiseModel::TruncExp => {
                // Rejection sampling: accept E <= cut, then center.
                loop {
                    let e: f64 = Exp1.sample(rng);
                    if e <= TRUNC_EXP_CUT {
                        return e - trunc_exp_mean();
                    }
                }
            }
            NoiseModel::Cauchy => Cauchy::new(0.0, 1.0).unwrap().sample(rng),
            NoiseModel::Ar1 { .. } => unreachable!("AR(1) is sampled as a path"),
        }
    }

    /// Subgaussian Orlicz-norm input for the RC detector. Exact for the
    /// bounded families, the standard value for the normal, and a
    /// normal-based proxy otherwise (Cauchy is not subgaussian; the proxy
    /// mirrors how RC is forced onto such data).
    pub fn orlicz_norm_hint(&self) -> f64 {
        let ln2 = std::f64::consts::LN_2;
        match self {
            NoiseModel::Normal => (8.0 / 3.0f64).sqrt(),
            NoiseModel::Uniform => 3f64.sqrt() / ln2.sqrt(),
            NoiseModel::TruncExp => {
                let m = trunc_exp_mean();
                (TRUNC_EXP_CUT - m).max(m) / ln2.sqrt()
            }
            NoiseModel::Cauchy => (8.0 / 3.0f64).sqrt(),
            NoiseModel::Ar1 { phi, innovation } => {
                innovation.orlicz_norm_hint() / (1.0 - phi * phi).sqrt()
            }
        }
    }
}

/// A mean shift within the monitoring period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeSpec {
    /// Monitoring index of the first shifted observation.
    pub k_star: usize,
    /// Jump size.
    pub delta: f64,
    /// Epidemic duration relative to the training length (the shift spans
    /// `floor(duration * N) + 1` observations); `None` is permanent.
    pub duration: Option<f64>,
}

impl ChangeSpec {
    pub fn permanent(k_star: usize, delta: f64) -> Self {
        Self {
            k_star,
            delta,
            duration: None,
        }
    }

    pub fn epidemic(k_star: usize, delta: f64, duration: f64) -> Self {
        Self {
            k_star,
            delta,
            duration: Some(duration),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_star < 1 {
            return Err(Error::InvalidConfig("change index must be >= 1".into()));
        }
        if let Some(d) = self.duration {
            if !(d > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "epidemic duration must be positive, got {d}"
                )));
            }
        }
        Ok(())
    }
}

/// Draws one stream of length `n_train + t_horizon`: noise plus the
/// configured shift. Deterministic in `seed`.
pub fn generate_stream(
    noise: &NoiseModel,
    change: Option<&ChangeSpec>,
    n_train: usize,
    t_horizon: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    noise.validate()?;
    if let Some(c) = change {
        c.validate()?;
    }
    let total = n_train + t_horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<f64> = match noise {
        NoiseModel::Ar1 { phi, innovation } => {
            // Warm up the recursion so the path is near-stationary.
            let mut prev = 0.0;
            for _ in 0..100 {
                prev = phi * prev + innovation.sample_iid(&mut rng);
            }
            (0..total)
                .map(|_| {
                    prev = phi * prev + innovation.sample_iid(&mut rng);
                    prev
                })
                .collect()
        }
        iid => (0..total).map(|_| iid.sample_iid(&mut rng)).collect(),
    };
    if let Some(c) = change {
        // Shift spans absolute positions N + k* ..= N + k* + floor(D*N)
        // (inclusive), or everything from N + k* on when permanent.
        let first = n_train + c.k_star;
        let last = match c.duration {
            Some(d) => first + (d * n_train as f64).floor() as usize,
            None => total,
        };
        for i in first..=last.min(total) {
            data[i - 1] += c.delta;
        }
    }
    Ok(data)
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// A fully specified simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: String,
    pub n_train: usize,
    pub t_horizon: usize,
    pub noise: NoiseModel,
    pub change: Option<ChangeSpec>,
    pub detectors: Vec<DetectorKind>,
    pub replications: usize,
    pub seed: u64,
    pub alpha: f64,
}

/// Per-detector aggregate over the replications of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSummary {
    pub detector: DetectorKind,
    /// Fraction of replications with any detection within the horizon.
    pub rejection_rate: f64,
    /// Delay quartiles over post-change detections (change cells only).
    pub delay_p25: Option<f64>,
    pub delay_p50: Option<f64>,
    pub delay_p75: Option<f64>,
    /// Replications detecting strictly before the change.
    pub false_alarms: usize,
    /// Replications excluded from the delay distribution (false alarms
    /// plus non-detections).
    pub discarded: usize,
}

/// Result of one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub per_detector: Vec<DetectorSummary>,
    pub runtime_secs: f64,
}

fn detector_config(kind: DetectorKind, spec: &ExperimentSpec) -> MonitorConfig {
    let mut cfg = MonitorConfig::new(kind, spec.n_train).with_alpha(spec.alpha);
    // The study convention: sigma-scaled detectors assume unit variance.
    if kind.uses_sigma() {
        cfg.scale = ScaleMode::Known { sigma2: 1.0 };
    }
    if kind == DetectorKind::Rc {
        cfg.orlicz_norm = Some(spec.noise.orlicz_norm_hint());
    }
    cfg
}

/// Runs one cell: every detector sees the same streams (common random
/// numbers), thresholds come from `store` at the cell's nominal level.
pub fn run_experiment(spec: &ExperimentSpec, store: &TableStore) -> Result<ExperimentResult> {
    if spec.replications == 0 || spec.detectors.is_empty() {
        return Err(Error::InvalidConfig(
            "experiment needs detectors and replications".into(),
        ));
    }
    spec.noise.validate()?;
    if let Some(c) = &spec.change {
        c.validate()?;
    }
    let started = Instant::now();

    // Resolve configs and thresholds up front so table errors surface
    // before any simulation work.
    let mut setups = Vec::new();
    for &kind in &spec.detectors {
        let cfg = detector_config(kind, spec);
        cfg.validate()?;
        let threshold = crate::table::threshold_for(&cfg, store)?;
        setups.push((cfg, threshold.unwrap_or(f64::NAN)));
    }

    let detections: Vec<Vec<Option<usize>>> = (0..spec.replications as u64)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Option<usize>>> {
            let data = generate_stream(
                &spec.noise,
                spec.change.as_ref(),
                spec.n_train,
                spec.t_horizon,
                split_seed(spec.seed, rep),
            )?;
            setups
                .iter()
                .map(|(cfg, thr)| {
                    Ok(run_stream(&data, cfg, *thr, spec.t_horizon)?
                        .crossing
                        .map(|c| c.k))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let per_detector = spec
        .detectors
        .iter()
        .enumerate()
        .map(|(i, &detector)| {
            let k_hats: Vec<Option<usize>> = detections.iter().map(|row| row[i]).collect();
            summarize(detector, &k_hats, spec.change.as_ref())
        })
        .collect();

    Ok(ExperimentResult {
        spec: spec.clone(),
        per_detector,
        runtime_secs: started.elapsed().as_secs_f64(),
    })
}

fn summarize(
    detector: DetectorKind,
    k_hats: &[Option<usize>],
    change: Option<&ChangeSpec>,
) -> DetectorSummary {
    let reps = k_hats.len();
    let detections = k_hats.iter().filter(|k| k.is_some()).count();
    let rejection_rate = detections as f64 / reps as f64;
    match change {
        None => DetectorSummary {
            detector,
            rejection_rate,
            delay_p25: None,
            delay_p50: None,
            delay_p75: None,
            false_alarms: detections,
            discarded: 0,
        },
        Some(c) => {
            let results: Vec<DelayResult> = k_hats
                .iter()
                .map(|&k| DelayResult::new(c.k_star, k))
                .collect();
            let false_alarms = results.iter().filter(|r| r.false_alarm).count();
            let delays: Vec<f64> = results
                .iter()
                .filter(|r| !r.false_alarm)
                .filter_map(|r| r.delay.map(|d| d as f64))
                .collect();
            let q = |p: f64| {
                if delays.is_empty() {
                    None
                } else {
                    Some(quantile(&delays, p))
                }
            };
            DetectorSummary {
                detector,
                rejection_rate,
                delay_p25: q(0.25),
                delay_p50: q(0.50),
                delay_p75: q(0.75),
                false_alarms,
                discarded: reps - delays.len(),
            }
        }
    }
}

/// Size under no change: `spec.change` must be empty.
pub fn run_level_experiment(spec: &ExperimentSpec, store: &TableStore) -> Result<ExperimentResult> {
    if spec.change.is_some() {
        return Err(Error::InvalidConfig(
            "level experiments must not contain a change".into(),
        ));
    }
    run_experiment(spec, store)
}

/// Power under a change: `spec.change` must be present.
pub fn run_power_experiment(spec: &ExperimentSpec, store: &TableStore) -> Result<ExperimentResult> {
    if spec.change.is_none() {
        return Err(Error::InvalidConfig(
            "power experiments need a change".into(),
        ));
    }
    run_experiment(spec, store)
}

/// Delay distribution under a (large) change; identical machinery to the
/// power run, read through the delay quartiles.
pub fn run_delay_experiment(spec: &ExperimentSpec, store: &TableStore) -> Result<ExperimentResult> {
    run_power_experiment(spec, store)
}

/// Power as a function of the epidemic duration `D`.
pub fn run_epidemic_experiment(
    spec: &ExperimentSpec,
    durations: &[f64],
    store: &TableStore,
) -> Result<Vec<ExperimentResult>> {
    let base = spec.change.ok_or_else(|| {
        Error::InvalidConfig("epidemic experiments need a change".into())
    })?;
    durations
        .iter()
        .map(|&d| {
            let mut cell = spec.clone();
            cell.id = format!("{}_d{:.2}", spec.id, d);
            cell.change = Some(ChangeSpec::epidemic(base.k_star, base.delta, d));
            run_experiment(&cell, store)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Result emission
// ---------------------------------------------------------------------------

pub const RESULT_CSV_HEADER: [&str; 16] = [
    "experiment_id",
    "detector",
    "noise",
    "n_train",
    "t_horizon",
    "k_star",
    "delta",
    "duration",
    "replications",
    "rejection_rate",
    "delay_p25",
    "delay_p50",
    "delay_p75",
    "false_alarms",
    "discarded",
    "seed",
];

/// Writes one CSV row per (experiment, detector), deterministic column
/// order per [`RESULT_CSV_HEADER`].
pub fn emit_csv(results: &[ExperimentResult], mut out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(RESULT_CSV_HEADER)?;
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in results {
        for d in &r.per_detector {
            let s = &r.spec;
            w.write_record([
                s.id.clone(),
                d.detector.name().into(),
                s.noise.label(),
                s.n_train.to_string(),
                s.t_horizon.to_string(),
                s.change.map(|c| c.k_star.to_string()).unwrap_or_default(),
                s.change.map(|c| c.delta.to_string()).unwrap_or_default(),
                s.change
                    .and_then(|c| c.duration)
                    .map(|d| d.to_string())
                    .unwrap_or_default(),
                s.replications.to_string(),
                d.rejection_rate.to_string(),
                fmt_opt(d.delay_p25),
                fmt_opt(d.delay_p50),
                fmt_opt(d.delay_p75),
                d.false_alarms.to_string(),
                d.discarded.to_string(),
                s.seed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// JSON mirror of the CSV with a metadata envelope.
pub fn emit_json(results: &[ExperimentResult], out: impl Write) -> Result<()> {
    let doc = serde_json::json!({
        "version": 1,
        "results": results,
    });
    serde_json::to_writer_pretty(out, &doc)?;
    Ok(())
}

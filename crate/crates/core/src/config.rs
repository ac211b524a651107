//! Monitoring configuration: detector selection, weight parameters, and
//! scale handling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which detector statistic a monitoring session computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorKind {
    /// Two-window inspection CUSUM (mean changes).
    Tc,
    /// Self-normalized two-window CUSUM (mean changes, dependence-robust).
    Sntc,
    /// Nonparametric two-window detector on empirical distribution
    /// functions (distributional changes, heavy-tail robust).
    Nptc,
    /// Ordinary CUSUM against the training mean.
    C,
    /// Page CUSUM (maximized over discard offsets).
    Pc,
    /// Full CUSUM (re-estimated baseline mean).
    Fc,
    /// Full CUSUM with the polynomial Hölder weight.
    Wc,
    /// Modified MOSUM with window start `floor(k*b)`.
    Mm,
    /// Repeated retrospective CUSUM scan with a subgaussian union-bound
    /// threshold. Requires the noise Orlicz norm as an oracle input.
    Rc,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 9] = [
        DetectorKind::Tc,
        DetectorKind::Sntc,
        DetectorKind::Nptc,
        DetectorKind::C,
        DetectorKind::Pc,
        DetectorKind::Fc,
        DetectorKind::Wc,
        DetectorKind::Mm,
        DetectorKind::Rc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Tc => "TC",
            DetectorKind::Sntc => "SNTC",
            DetectorKind::Nptc => "NPTC",
            DetectorKind::C => "C",
            DetectorKind::Pc => "PC",
            DetectorKind::Fc => "FC",
            DetectorKind::Wc => "WC",
            DetectorKind::Mm => "MM",
            DetectorKind::Rc => "RC",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TC" => Ok(DetectorKind::Tc),
            "SNTC" => Ok(DetectorKind::Sntc),
            "NPTC" => Ok(DetectorKind::Nptc),
            "C" => Ok(DetectorKind::C),
            "PC" => Ok(DetectorKind::Pc),
            "FC" => Ok(DetectorKind::Fc),
            "WC" => Ok(DetectorKind::Wc),
            "MM" => Ok(DetectorKind::Mm),
            "RC" => Ok(DetectorKind::Rc),
            other => Err(Error::InvalidConfig(format!("unknown detector {other:?}"))),
        }
    }

    /// Detectors whose statistic is divided by an estimated standard
    /// deviation (everything except NPTC, SNTC, and RC).
    pub fn uses_sigma(&self) -> bool {
        matches!(
            self,
            DetectorKind::Tc
                | DetectorKind::C
                | DetectorKind::Pc
                | DetectorKind::Fc
                | DetectorKind::Wc
                | DetectorKind::Mm
        )
    }

    /// Detectors that need every raw observation retained (rank or
    /// retrospective scans), not just prefix sums.
    pub fn retains_observations(&self) -> bool {
        matches!(self, DetectorKind::Nptc | DetectorKind::Rc)
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the scale of the noise enters the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScaleMode {
    /// Variance known a priori (e.g. simulation settings).
    Known { sigma2: f64 },
    /// Unbiased sample variance of the training sample.
    TrainVariance,
    /// Bartlett long-run variance estimated from the training sample.
    /// `bandwidth: None` selects the automatic plug-in rule.
    Lrv { bandwidth: Option<usize> },
    /// Self-normalization by the training functional `V_N`; no variance
    /// estimate is formed.
    SelfNormalized,
    /// No scaling at all (nonparametric detector, or raw statistics).
    None,
}

/// Window-length scan policy for the two-window detectors.
///
/// `Exact` evaluates every admissible window length. `Geometric` walks a
/// ladder with the given ratio (always including length 1 and the largest
/// admissible length); it is a lower bound on the exact scan and is meant
/// for long-horizon Monte Carlo only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScanGrid {
    Exact,
    Geometric { ratio: f64 },
}

impl Default for ScanGrid {
    fn default() -> Self {
        ScanGrid::Exact
    }
}

impl ScanGrid {
    pub const DEFAULT_RATIO: f64 = 1.1;

    /// Window lengths to visit for a scan capped at `ell_max`, ascending.
    pub fn lengths(&self, ell_max: usize) -> Vec<usize> {
        match self {
            ScanGrid::Exact => (1..=ell_max).collect(),
            ScanGrid::Geometric { ratio } => {
                let mut out = Vec::new();
                let mut ell = 1usize;
                while ell < ell_max {
                    out.push(ell);
                    let next = ((ell as f64) * ratio).ceil() as usize;
                    ell = next.max(ell + 1);
                }
                if ell_max >= 1 {
                    out.push(ell_max);
                }
                out
            }
        }
    }
}

/// All tuning parameters of a monitoring session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    /// Length of the training sample (`N`).
    pub n_train: usize,
    /// Two-window weight exponent, `beta > 1/2`.
    pub beta: f64,
    /// Two-window weight offset, `c0 > 1`.
    pub c0: f64,
    /// Baseline weight exponent, `0 <= eta < 1/2`.
    pub eta: f64,
    /// Modified-MOSUM window fraction, `0 < b < 1`.
    pub b_mosum: f64,
    /// Nominal level of the sequential test.
    pub alpha: f64,
    /// Detector statistic to monitor.
    pub detector: DetectorKind,
    /// Scale handling for the chosen detector.
    pub scale: ScaleMode,
    /// Window-length scan policy.
    pub grid: ScanGrid,
    /// Orlicz norm of the noise, required by the RC detector only.
    pub orlicz_norm: Option<f64>,
    /// Multiplicative constant of the RC threshold (reconstruction knob).
    pub rc_constant: f64,
}

impl MonitorConfig {
    pub const DEFAULT_BETA: f64 = 0.6;
    pub const DEFAULT_C0: f64 = 20.0;
    pub const DEFAULT_ETA: f64 = 0.4;
    pub const DEFAULT_B: f64 = 0.4;
    pub const DEFAULT_ALPHA: f64 = 0.05;
    pub const DEFAULT_RC_CONSTANT: f64 = 1.0;

    /// A configuration with the recommended defaults for the given
    /// detector and training length. Scale defaults to the training
    /// variance for scaled detectors and to the mode the detector
    /// requires otherwise.
    pub fn new(detector: DetectorKind, n_train: usize) -> Self {
        let scale = match detector {
            DetectorKind::Sntc => ScaleMode::SelfNormalized,
            DetectorKind::Nptc | DetectorKind::Rc => ScaleMode::None,
            _ => ScaleMode::TrainVariance,
        };
        Self {
            n_train,
            beta: Self::DEFAULT_BETA,
            c0: Self::DEFAULT_C0,
            eta: Self::DEFAULT_ETA,
            b_mosum: Self::DEFAULT_B,
            alpha: Self::DEFAULT_ALPHA,
            detector,
            scale,
            grid: ScanGrid::Exact,
            orlicz_norm: None,
            rc_constant: Self::DEFAULT_RC_CONSTANT,
        }
    }

    pub fn with_scale(mut self, scale: ScaleMode) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_grid(mut self, grid: ScanGrid) -> Self {
        self.grid = grid;
        self
    }

    /// Checks every parameter range and the detector/scale coupling.
    pub fn validate(&self) -> Result<()> {
        if self.n_train < 2 {
            return Err(Error::InvalidConfig("n_train must be at least 2".into()));
        }
        if !(self.beta > 0.5) {
            return Err(Error::InvalidConfig(format!(
                "beta must exceed 0.5, got {}",
                self.beta
            )));
        }
        if !(self.c0 > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "c0 must exceed 1, got {}",
                self.c0
            )));
        }
        if !(0.0..0.5).contains(&self.eta) {
            return Err(Error::InvalidConfig(format!(
                "eta must lie in [0, 1/2), got {}",
                self.eta
            )));
        }
        if !(self.b_mosum > 0.0 && self.b_mosum < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "b must lie in (0,1), got {}",
                self.b_mosum
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if let ScanGrid::Geometric { ratio } = self.grid {
            if !(ratio > 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "geometric scan ratio must exceed 1, got {ratio}"
                )));
            }
        }
        match (self.detector, self.scale) {
            (DetectorKind::Nptc, ScaleMode::None) => {}
            (DetectorKind::Nptc, _) => {
                return Err(Error::InvalidConfig(
                    "NPTC is scale-free; use ScaleMode::None".into(),
                ))
            }
            (DetectorKind::Sntc, ScaleMode::SelfNormalized) => {}
            (DetectorKind::Sntc, _) => {
                return Err(Error::InvalidConfig(
                    "SNTC requires ScaleMode::SelfNormalized".into(),
                ))
            }
            (DetectorKind::Rc, _) => {
                match self.orlicz_norm {
                    Some(v) if v > 0.0 => {}
                    Some(v) => {
                        return Err(Error::InvalidConfig(format!(
                            "RC Orlicz norm must be positive, got {v}"
                        )))
                    }
                    None => {
                        return Err(Error::InvalidConfig(
                            "RC requires an Orlicz norm for the noise".into(),
                        ))
                    }
                }
                if !(self.rc_constant > 0.0) {
                    return Err(Error::InvalidConfig(
                        "RC threshold constant must be positive".into(),
                    ));
                }
            }
            (_, ScaleMode::SelfNormalized) => {
                return Err(Error::InvalidConfig(
                    "self-normalization applies to SNTC only".into(),
                ))
            }
            (_, ScaleMode::Known { sigma2 }) => {
                if !(sigma2 > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "known variance must be positive, got {sigma2}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Largest admissible window length at monitoring index `k`:
    /// `min(k, (N + k) / 2)`.
    pub fn ell_max(&self, k: usize) -> usize {
        k.min((self.n_train + k) / 2)
    }
}

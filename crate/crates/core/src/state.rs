//! Streaming state: prefix sums, training-sample statistics, and the
//! frozen self-normalizer.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::MonitorConfig;
use crate::error::{Error, Result};
use crate::util::CompensatedSum;

/// What a session keeps besides prefix sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Retention {
    /// Prefix sums only; raw values are dropped after updating them.
    PrefixOnly,
    /// Keep the training sample (needed by long-run variance estimation).
    Training,
    /// Keep every observation (rank scans, retrospective scans).
    All,
}

impl Retention {
    /// The retention a configuration needs.
    pub fn for_config(cfg: &MonitorConfig) -> Retention {
        if cfg.detector.retains_observations() {
            Retention::All
        } else if matches!(cfg.scale, crate::config::ScaleMode::Lrv { .. }) {
            Retention::Training
        } else {
            Retention::PrefixOnly
        }
    }
}

/// The single mutable object a monitoring session owns.
///
/// Observations are indexed from 1; `prefix_sum(j)` is the sum of the
/// first `j` of them. The first `n_train` observations form the training
/// sample; everything after is the monitoring period, indexed by
/// `k = count - n_train`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamState {
    n_train: usize,
    retention: Retention,
    count: usize,
    prefix: Vec<f64>,
    running: CompensatedSum,
    observations: Vec<f64>,
    /// Training values in ascending order, frozen when training completes.
    train_sorted: Vec<f64>,
    /// Self-normalizer `V_N`, frozen when training completes.
    v_n: Option<f64>,
    train_mean: f64,
    /// Welford accumulator for the training-sample variance.
    train_m2: f64,
}

impl StreamState {
    pub fn new(n_train: usize, retention: Retention) -> Self {
        Self {
            n_train,
            retention,
            count: 0,
            prefix: vec![0.0],
            running: CompensatedSum::new(),
            observations: Vec::new(),
            train_sorted: Vec::new(),
            v_n: None,
            train_mean: 0.0,
            train_m2: 0.0,
        }
    }

    pub fn for_config(cfg: &MonitorConfig) -> Self {
        Self::new(cfg.n_train, Retention::for_config(cfg))
    }

    /// Appends one observation. O(1) except for the one-time freeze of
    /// training statistics when the training sample completes.
    pub fn ingest(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::NonFiniteObservation {
                position: self.count + 1,
            });
        }
        self.count += 1;
        self.running.add(x);
        self.prefix.push(self.running.value());
        match self.retention {
            Retention::All => self.observations.push(x),
            Retention::Training if self.count <= self.n_train => self.observations.push(x),
            _ => {}
        }
        if self.count <= self.n_train {
            // Welford update for the training moments.
            let delta = x - self.train_mean;
            self.train_mean += delta / self.count as f64;
            self.train_m2 += delta * (x - self.train_mean);
            if self.retention == Retention::PrefixOnly {
                self.train_sorted.push(x);
            }
            if self.count == self.n_train {
                self.freeze_training();
            }
        }
        Ok(())
    }

    pub fn ingest_all(&mut self, xs: impl IntoIterator<Item = f64>) -> Result<()> {
        for x in xs {
            self.ingest(x)?;
        }
        Ok(())
    }

    fn freeze_training(&mut self) {
        let n = self.n_train;
        // V_N = N^{-3/2} * sum_{i=1..N} |S_i - (i/N) S_N|
        let s_n = self.prefix[n];
        let mut acc = CompensatedSum::new();
        for i in 1..=n {
            acc.add((self.prefix[i] - (i as f64 / n as f64) * s_n).abs());
        }
        self.v_n = Some(acc.value() / (n as f64).powf(1.5));
        if self.retention != Retention::PrefixOnly {
            self.train_sorted = self.observations[..n].to_vec();
        }
        self.train_sorted
            .sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn retention(&self) -> Retention {
        self.retention
    }

    /// Total observations seen (training plus monitoring).
    pub fn count(&self) -> usize {
        self.count
    }

    /// Monitoring index of the newest observation (0 during training).
    pub fn monitoring_index(&self) -> usize {
        self.count.saturating_sub(self.n_train)
    }

    pub fn training_complete(&self) -> bool {
        self.count >= self.n_train
    }

    /// `S_j`, the sum of observations 1..=j. `S_0 = 0`.
    #[inline]
    pub fn prefix_sum(&self, j: usize) -> f64 {
        self.prefix[j]
    }

    /// Retained raw observations (empty under `Retention::PrefixOnly`).
    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// Observation at 1-based position `j`; requires retention.
    pub fn observation(&self, j: usize) -> f64 {
        self.observations[j - 1]
    }

    /// Training values in ascending order (available once training is
    /// complete). Rank queries against the training sample are binary
    /// searches on this slice.
    pub fn train_sorted(&self) -> &[f64] {
        &self.train_sorted
    }

    /// Number of training values `<= x` (strict version for `< x`).
    pub fn train_rank_le(&self, x: f64) -> usize {
        self.train_sorted.partition_point(|&v| v <= x)
    }

    pub fn train_rank_lt(&self, x: f64) -> usize {
        self.train_sorted.partition_point(|&v| v < x)
    }

    /// Self-normalizer `V_N`, available once training is complete.
    pub fn v_n(&self) -> Option<f64> {
        self.v_n
    }

    pub fn train_mean(&self) -> f64 {
        self.train_mean
    }

    /// Unbiased sample variance of the training sample.
    pub fn train_var(&self) -> f64 {
        if self.count.min(self.n_train) < 2 {
            0.0
        } else {
            self.train_m2 / (self.count.min(self.n_train) - 1) as f64
        }
    }

    /// Serializes the state plus the owning config's fingerprint.
    pub fn snapshot(&self, cfg: &MonitorConfig) -> Snapshot {
        Snapshot {
            version: SNAPSHOT_VERSION,
            config_fingerprint: config_fingerprint(cfg),
            state: self.clone(),
        }
    }
}

pub const SNAPSHOT_VERSION: u32 = 1;

/// Versioned checkpoint of a monitoring session's stream state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub config_fingerprint: String,
    state: StreamState,
}

impl Snapshot {
    /// Recovers the state, refusing snapshots from a different
    /// configuration or format version.
    pub fn restore(self, cfg: &MonitorConfig) -> Result<StreamState> {
        if self.version != SNAPSHOT_VERSION {
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
        Ok(self.state)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Stable short hash of the parameters that determine a session's
/// statistics (detector, weights, scale, training length).
pub fn config_fingerprint(cfg: &MonitorConfig) -> String {
    let canon = serde_json::json!({
        "detector": cfg.detector.name(),
        "n_train": cfg.n_train,
        "beta": cfg.beta,
        "c0": cfg.c0,
        "eta": cfg.eta,
        "b": cfg.b_mosum,
        "scale": format!("{:?}", cfg.scale),
        "grid": format!("{:?}", cfg.grid),
    });
    let digest = Sha256::digest(canon.to_string().as_bytes());
    hex16(&digest)
}

pub(crate) fn hex16(digest: &[u8]) -> String {
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

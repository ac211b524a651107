//! Simulated critical-value tables: structure, fingerprinting, and file
//! round-trip.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DetectorKind, MonitorConfig, ScaleMode};
use crate::error::{Error, Result};
use crate::state::hex16;

/// Levels stored in shipped tables.
pub const STANDARD_LEVELS: [f64; 10] = [0.90, 0.91, 0.92, 0.93, 0.94, 0.95, 0.96, 0.97, 0.98, 0.99];

pub const TABLE_VERSION: u32 = 1;

/// Seed-splitting scheme identifier, part of the fingerprint so tables
/// from a different draw-derivation are not silently interchangeable.
const SEED_POLICY: &str = "counter-splitmix64-v1";

/// Which limiting (or null) distribution a table approximates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law")]
pub enum LimitLaw {
    /// Weighted two-window functional of a standard Brownian motion.
    #[serde(rename = "L_TC")]
    LTc { beta: f64, c0: f64 },
    /// Same functional divided by the Brownian-bridge area `V`.
    #[serde(rename = "L_SN")]
    LSn { beta: f64, c0: f64 },
    /// Nonparametric two-window functional (distribution-free).
    #[serde(rename = "L_F")]
    LF { beta: f64, c0: f64 },
    /// Finite-sample null simulation of a baseline detector.
    #[serde(rename = "NULL_SIM")]
    NullSim {
        kind: DetectorKind,
        eta: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        b: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        c0: Option<f64>,
    },
}

impl LimitLaw {
    pub fn name(&self) -> String {
        match self {
            LimitLaw::LTc { .. } => "L_TC".into(),
            LimitLaw::LSn { .. } => "L_SN".into(),
            LimitLaw::LF { .. } => "L_F".into(),
            LimitLaw::NullSim { kind, .. } => format!("NULL_SIM({kind})"),
        }
    }

    /// The law a configuration's decision rule is calibrated against.
    /// RC carries its own analytic threshold and has no table.
    pub fn for_config(cfg: &MonitorConfig) -> Option<LimitLaw> {
        match cfg.detector {
            DetectorKind::Tc => Some(LimitLaw::LTc {
                beta: cfg.beta,
                c0: cfg.c0,
            }),
            DetectorKind::Sntc => Some(LimitLaw::LSn {
                beta: cfg.beta,
                c0: cfg.c0,
            }),
            DetectorKind::Nptc => Some(LimitLaw::LF {
                beta: cfg.beta,
                c0: cfg.c0,
            }),
            DetectorKind::Rc => None,
            kind => Some(LimitLaw::NullSim {
                kind,
                eta: cfg.eta,
                b: (kind == DetectorKind::Mm).then_some(cfg.b_mosum),
                c0: (kind == DetectorKind::Wc).then_some(cfg.c0),
            }),
        }
    }
}

/// Discretization that produced a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum GridSpec {
    /// Graded time grid for Brownian-motion functionals.
    Brownian {
        fine_step: f64,
        fine_until: f64,
        mid_step: f64,
        mid_until: f64,
        coarse_step: f64,
        t_max: f64,
    },
    /// Finite-sample simulation at calibration size `n_cal` over
    /// `n_cal * t_horizon` monitoring steps.
    FiniteSample { n_cal: usize, t_horizon: usize },
}

impl GridSpec {
    pub fn brownian_default() -> Self {
        GridSpec::Brownian {
            fine_step: 0.01,
            fine_until: 10.0,
            mid_step: 0.1,
            mid_until: 100.0,
            coarse_step: 1.0,
            t_max: 1000.0,
        }
    }

    pub fn finite_default() -> Self {
        GridSpec::FiniteSample {
            n_cal: 200,
            t_horizon: 50,
        }
    }
}

/// Simulated critical values for one limit law, keyed by a fingerprint of
/// everything that determines the distribution being approximated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub version: u32,
    #[serde(flatten)]
    pub law: LimitLaw,
    pub grid_spec: GridSpec,
    pub draws: usize,
    pub seed: u64,
    /// `[level, value]` pairs, ascending in level.
    pub quantiles: Vec<(f64, f64)>,
    pub fingerprint: String,
}

impl QuantileTable {
    /// Builds a table from raw Monte Carlo samples of the law.
    pub fn from_samples(
        law: LimitLaw,
        grid_spec: GridSpec,
        seed: u64,
        levels: &[f64],
        samples: &[f64],
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig("no Monte Carlo samples".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let quantiles = levels
            .iter()
            .map(|&p| (p, crate::util::quantile_sorted(&sorted, p)))
            .collect();
        let fingerprint = fingerprint(&law, &grid_spec);
        let t = Self {
            version: TABLE_VERSION,
            law,
            grid_spec,
            draws: samples.len(),
            seed,
            quantiles,
            fingerprint,
        };
        t.validate()?;
        Ok(t)
    }

    /// Monotonicity and integrity checks.
    pub fn validate(&self) -> Result<()> {
        if self.version > TABLE_VERSION {
            return Err(Error::MalformedTable(format!(
                "table version {} is newer than supported {}",
                self.version, TABLE_VERSION
            )));
        }
        if self.quantiles.is_empty() {
            return Err(Error::MalformedTable("no quantiles".into()));
        }
        for w in self.quantiles.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::MalformedTable("levels not ascending".into()));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::MalformedTable(
                    "quantiles not monotone in level".into(),
                ));
            }
        }
        if self.fingerprint != fingerprint(&self.law, &self.grid_spec) {
            return Err(Error::MalformedTable(
                "fingerprint does not match law and grid".into(),
            ));
        }
        Ok(())
    }

    /// Critical value at probability level `level` (exact match).
    pub fn quantile(&self, level: f64) -> Result<f64> {
        self.quantiles
            .iter()
            .find(|(p, _)| (p - level).abs() < 1e-9)
            .map(|&(_, q)| q)
            .ok_or_else(|| {
                Error::TableMismatch(format!(
                    "level {level} not present in table (has {:?})",
                    self.quantiles.iter().map(|&(p, _)| p).collect::<Vec<_>>()
                ))
            })
    }

    /// Threshold for a nominal level `alpha` test.
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        self.quantile(1.0 - alpha)
    }

    /// Verifies that this table calibrates the given configuration.
    pub fn check_config(&self, cfg: &MonitorConfig) -> Result<()> {
        let expect = LimitLaw::for_config(cfg).ok_or_else(|| {
            Error::TableMismatch("RC uses its analytic threshold, not a table".into())
        })?;
        if self.law != expect {
            return Err(Error::TableMismatch(format!(
                "table holds {:?}, config requires {:?}",
                self.law, expect
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        if self.draws < 1000 {
            log::warn!(
                "storing a {}-draw table; shipped tables use at least 1000 draws",
                self.draws
            );
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let table: QuantileTable =
            serde_json::from_str(&text).map_err(|e| Error::MalformedTable(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    /// Loads a table and refuses it unless it calibrates `cfg`.
    pub fn load_for_config(path: impl AsRef<Path>, cfg: &MonitorConfig) -> Result<Self> {
        let table = Self::load(path)?;
        table.check_config(cfg)?;
        Ok(table)
    }
}

/// Stable hash over the canonical serialization of (law, grid spec, seed
/// policy). Deliberately excludes draws and seed: tables of the same law
/// at different Monte Carlo effort are interchangeable.
pub fn fingerprint(law: &LimitLaw, grid: &GridSpec) -> String {
    let canon = serde_json::json!({
        "law": law,
        "grid_spec": grid,
        "seed_policy": SEED_POLICY,
    });
    hex16(&Sha256::digest(canon.to_string().as_bytes()))
}

/// A directory of quantile tables, searched by law.
pub struct TableStore {
    tables: Vec<QuantileTable>,
}

impl TableStore {
    /// Loads every `*.json` table in `dir`. Unparseable files are
    /// reported, not skipped silently.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let mut tables = Vec::new();
        for entry in std::fs::read_dir(dir.as_ref())? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let table = QuantileTable::load(&path).map_err(|e| {
                    Error::MalformedTable(format!("{}: {e}", path.display()))
                })?;
                tables.push(table);
            }
        }
        Ok(Self { tables })
    }

    pub fn from_tables(tables: Vec<QuantileTable>) -> Self {
        Self { tables }
    }

    pub fn find(&self, law: &LimitLaw) -> Option<&QuantileTable> {
        self.tables.iter().find(|t| &t.law == law)
    }

    /// The table calibrating `cfg`, or a mismatch error naming the law.
    pub fn for_config(&self, cfg: &MonitorConfig) -> Result<&QuantileTable> {
        let law = LimitLaw::for_config(cfg).ok_or_else(|| {
            Error::TableMismatch("RC uses its analytic threshold, not a table".into())
        })?;
        self.find(&law).ok_or_else(|| {
            Error::TableMismatch(format!("no table for {} in store", law.name()))
        })
    }

    pub fn tables(&self) -> &[QuantileTable] {
        &self.tables
    }
}

/// Critical value for a configuration: the table quantile for detectors
/// with a simulated law, `None` for RC (analytic, step-dependent).
pub fn threshold_for(cfg: &MonitorConfig, store: &TableStore) -> Result<Option<f64>> {
    if cfg.detector == DetectorKind::Rc {
        return Ok(None);
    }
    let table = store.for_config(cfg)?;
    Ok(Some(table.critical_value(cfg.alpha)?))
}

/// Convenience: whether the scale mode belongs to the `L_TC`-calibrated
/// family (the pivotal table assumes the statistic is divided by sigma).
pub fn is_sigma_scaled(scale: ScaleMode) -> bool {
    matches!(
        scale,
        ScaleMode::Known { .. } | ScaleMode::TrainVariance | ScaleMode::Lrv { .. }
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_table() -> QuantileTable {
        let samples: Vec<f64> = (1..=2000).map(|i| i as f64 / 100.0).collect();
        QuantileTable::from_samples(
            LimitLaw::LSn {
                beta: 0.6,
                c0: 20.0,
            },
            GridSpec::brownian_default(),
            1729,
            &STANDARD_LEVELS,
            &samples,
        )
        .unwrap()
    }

    #[test]
    fn quantiles_monotone_and_lookup_works() {
        let t = sample_table();
        t.validate().unwrap();
        let q95 = t.quantile(0.95).unwrap();
        let q99 = t.quantile(0.99).unwrap();
        assert!(q99 > q95);
        assert_eq!(t.critical_value(0.05).unwrap(), q95);
        assert!(t.quantile(0.555).is_err());
    }

    #[test]
    fn round_trip_is_identical() {
        let t = sample_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        t.save(&path).unwrap();
        let back = QuantileTable::load(&path).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn mismatched_beta_is_refused() {
        let t = sample_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        t.save(&path).unwrap();

        let mut cfg = MonitorConfig::new(DetectorKind::Sntc, 100);
        cfg.beta = 0.8;
        assert!(matches!(
            QuantileTable::load_for_config(&path, &cfg),
            Err(Error::TableMismatch(_))
        ));
        cfg.beta = 0.6;
        QuantileTable::load_for_config(&path, &cfg).unwrap();
    }

    #[test]
    fn tampered_file_fails_fingerprint() {
        let t = sample_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        t.save(&path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"beta\": 0.6", "\"beta\": 0.7");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            QuantileTable::load(&path),
            Err(Error::MalformedTable(_))
        ));
    }

    #[test]
    fn newer_version_is_refused() {
        let mut t = sample_table();
        t.version = TABLE_VERSION + 1;
        assert!(matches!(t.validate(), Err(Error::MalformedTable(_))));
    }

    #[test]
    fn store_finds_by_law_and_flags_rc() {
        let store = TableStore::from_tables(vec![sample_table()]);
        let cfg = MonitorConfig::new(DetectorKind::Sntc, 50);
        assert!(store.for_config(&cfg).is_ok());
        let cfg_tc = MonitorConfig::new(DetectorKind::Tc, 50);
        assert!(store.for_config(&cfg_tc).is_err());
        let mut cfg_rc = MonitorConfig::new(DetectorKind::Rc, 50);
        cfg_rc.orlicz_norm = Some(1.0);
        assert!(matches!(
            threshold_for(&cfg_rc, &store),
            Ok(None)
        ));
    }

    #[test]
    fn null_sim_law_carries_only_relevant_params() {
        let cfg_c = MonitorConfig::new(DetectorKind::C, 100);
        let law = LimitLaw::for_config(&cfg_c).unwrap();
        assert_eq!(
            law,
            LimitLaw::NullSim {
                kind: DetectorKind::C,
                eta: 0.4,
                b: None,
                c0: None
            }
        );
        let cfg_mm = MonitorConfig::new(DetectorKind::Mm, 100);
        let law = LimitLaw::for_config(&cfg_mm).unwrap();
        assert!(matches!(law, LimitLaw::NullSim { b: Some(_), .. }));
    }
}

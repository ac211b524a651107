//! TOML experiment-spec files for the `simulate` subcommand.

use serde::Deserialize;
use twinspect::config::DetectorKind;
use twinspect::error::{Error, Result};
use twinspect::simlab::{ChangeSpec, ExperimentSpec, NoiseModel};

/// On-disk description of a simulation study: a grid of cells sharing
/// detectors, level, and replication counts.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub id: String,
    /// level | power | delay | epidemic
    pub kind: String,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub replications: usize,
    /// Replications in `--fast` mode.
    pub fast_replications: Option<usize>,
    pub detectors: Vec<String>,
    /// Monitoring horizon, absolute or in multiples of the training length.
    pub horizon: Option<usize>,
    pub horizon_times_n: Option<usize>,
    pub n_train: Vec<usize>,
    pub noise: Vec<String>,
    /// Change grid (power/delay/epidemic).
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub k_star: Vec<usize>,
    #[serde(default)]
    pub k_star_times_n: Vec<usize>,
    /// Epidemic durations relative to the training length.
    #[serde(default)]
    pub durations: Vec<f64>,
}

fn default_alpha() -> f64 {
    0.05
}

/// One expanded simulation cell plus the duration grid for epidemic runs.
#[derive(Debug, Clone)]
pub struct CellPlan {
    pub spec: ExperimentSpec,
    pub durations: Option<Vec<f64>>,
}

impl SpecFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::DataError(format!("bad spec file: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Expands the grid into runnable cells.
    pub fn cells(&self, fast: bool, seed_override: Option<u64>) -> Result<Vec<CellPlan>> {
        let detectors: Vec<DetectorKind> = self
            .detectors
            .iter()
            .map(|s| DetectorKind::parse(s))
            .collect::<Result<_>>()?;
        let noises: Vec<NoiseModel> = self
            .noise
            .iter()
            .map(|s| NoiseModel::parse(s))
            .collect::<Result<_>>()?;
        let replications = if fast {
            self.fast_replications.unwrap_or(self.replications.min(200))
        } else {
            self.replications
        };
        let seed = seed_override.unwrap_or(self.seed);

        let is_change = match self.kind.as_str() {
            "level" => false,
            "power" | "delay" | "epidemic" => true,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown experiment kind {other:?}"
                )))
            }
        };
        if is_change && self.delta.is_empty() {
            return Err(Error::InvalidConfig(
                "change experiments need a delta grid".into(),
            ));
        }
        if self.kind == "epidemic" && self.durations.is_empty() {
            return Err(Error::InvalidConfig(
                "epidemic experiments need a durations grid".into(),
            ));
        }

        let mut cells = Vec::new();
        for &n in &self.n_train {
            let horizon = match (self.horizon, self.horizon_times_n) {
                (Some(t), None) => t,
                (None, Some(m)) => m * n,
                _ => {
                    return Err(Error::InvalidConfig(
                        "specify exactly one of horizon, horizon_times_n".into(),
                    ))
                }
            };
            let k_stars: Vec<usize> = if !is_change {
                vec![0]
            } else {
                let mut ks: Vec<usize> = self.k_star.clone();
                ks.extend(self.k_star_times_n.iter().map(|m| m * n));
                if ks.is_empty() {
                    return Err(Error::InvalidConfig(
                        "change experiments need k_star or k_star_times_n".into(),
                    ));
                }
                ks
            };
            let deltas: &[f64] = if is_change { &self.delta } else { &[0.0] };
            for noise in &noises {
                for &k_star in &k_stars {
                    for &delta in deltas {
                        let change = is_change.then(|| {
                            if self.kind == "epidemic" {
                                // duration filled in per grid point
                                ChangeSpec::epidemic(k_star, delta, 1.0)
                            } else {
                                ChangeSpec::permanent(k_star, delta)
                            }
                        });
                        let mut id = format!("{}_n{}_{}", self.id, n, noise.label());
                        if is_change {
                            id += &format!("_k{k_star}_d{delta}");
                        }
                        cells.push(CellPlan {
                            spec: ExperimentSpec {
                                id,
                                n_train: n,
                                t_horizon: horizon,
                                noise: noise.clone(),
                                change,
                                detectors: detectors.clone(),
                                replications,
                                seed,
                                alpha: self.alpha,
                            },
                            durations: (self.kind == "epidemic")
                                .then(|| self.durations.clone()),
                        });
                    }
                }
            }
        }
        Ok(cells)
    }
}

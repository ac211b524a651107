//! Monte Carlo calibration: simulation of the limiting laws of the
//! two-window detectors, finite-sample null simulation for the baseline
//! detectors, and (long-run) variance estimation.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DetectorKind, MonitorConfig, ScaleMode};
use crate::engine::run_stream;
use crate::error::{Error, Result};
use crate::table::{GridSpec, LimitLaw, QuantileTable, STANDARD_LEVELS};
use crate::util::split_seed;

// ---------------------------------------------------------------------------
// Variance estimation
// ---------------------------------------------------------------------------

/// Point estimates of the noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    /// Marginal variance `E eps^2` (unbiased sample version).
    pub sigma2: f64,
    /// Long-run variance, the sum of all autocovariances.
    pub sigma2_lr: f64,
    /// Number of autocovariance lags used (0 = marginal variance only).
    pub bandwidth: usize,
}

/// Unbiased sample variance of a training window.
pub fn estimate_variance(train: &[f64]) -> Result<VarianceEstimate> {
    if train.len() < 2 {
        return Err(Error::InvalidConfig(
            "variance estimation needs at least 2 observations".into(),
        ));
    }
    let n = train.len() as f64;
    let mean = train.iter().sum::<f64>() / n;
    let var = train.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return Err(Error::ZeroVariance(
            "training sample has zero variance".into(),
        ));
    }
    Ok(VarianceEstimate {
        sigma2: var,
        sigma2_lr: var,
        bandwidth: 0,
    })
}

/// Bartlett lag-window estimator of the long-run variance on demeaned
/// training data. `bandwidth: None` selects the AR(1) plug-in rule
/// `floor(1.1447 (a1 N)^{1/3})`, capped at `N^{1/3}`.
pub fn estimate_lrv(train: &[f64], bandwidth: Option<usize>) -> Result<VarianceEstimate> {
    let n = train.len();
    if let Some(bw) = bandwidth {
        if n < 4 * bw.max(1) {
            return Err(Error::InvalidConfig(format!(
                "long-run variance with bandwidth {bw} needs at least {} observations",
                4 * bw.max(1)
            )));
        }
    } else if n < 4 {
        return Err(Error::InvalidConfig(
            "long-run variance estimation needs at least 4 observations".into(),
        ));
    }
    let nf = n as f64;
    let mean = train.iter().sum::<f64>() / nf;
    let gamma = |h: usize| -> f64 {
        train[h..]
            .iter()
            .zip(train)
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / nf
    };
    let g0 = gamma(0);
    if g0 <= 0.0 {
        return Err(Error::ZeroVariance(
            "training sample has zero variance".into(),
        ));
    }
    let q = match bandwidth {
        Some(bw) => bw,
        None => {
            let rho = (gamma(1) / g0).clamp(-0.97, 0.97);
            let a1 = 4.0 * rho * rho / ((1.0 - rho * rho) * (1.0 - rho * rho));
            let plug = (1.1447 * (a1 * nf).powf(1.0 / 3.0)).floor() as usize;
            plug.min(nf.powf(1.0 / 3.0).floor() as usize).min(n / 4)
        }
    };
    let mut lr = g0;
    for h in 1..=q {
        lr += 2.0 * (1.0 - h as f64 / (q as f64 + 1.0)) * gamma(h);
    }
    let sigma2 = estimate_variance(train)?.sigma2;
    if lr <= 0.0 {
        log::warn!(
            "Bartlett long-run variance came out nonpositive ({lr:.3e}); flooring at sample variance / 10"
        );
        lr = sigma2 / 10.0;
    }
    Ok(VarianceEstimate {
        sigma2,
        sigma2_lr: lr,
        bandwidth: q,
    })
}

// ---------------------------------------------------------------------------
// Brownian-motion limit laws (L_TC, L_SN)
// ---------------------------------------------------------------------------

/// Which Brownian functional to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrownianLaw {
    /// Weighted two-window supremum of a standard Brownian motion.
    Tc,
    /// The same supremum divided by the bridge area `V` on `[0,1]`.
    Sn,
}

/// Precomputed evaluation plan for one graded grid: time indices are in
/// units of the generated path step.
struct ScanPlan {
    /// Path-unit index of t = 1.
    i_one: usize,
    /// Path-unit step of this plan's fine region (trapezoid step for V).
    stride: usize,
    /// Ascending t-grid (t > 1), path units.
    t_idx: Vec<u32>,
    inv_logt: Vec<f64>,
    /// Ascending s-grid (all graded points), path units.
    s_idx: Vec<u32>,
    s_val: Vec<f64>,
    inv_rho: Vec<f64>,
    /// Path length needed, in path units.
    path_len: usize,
}

fn graded_indices(grid: &GridSpec, path_h: f64) -> Result<(Vec<u32>, usize)> {
    let GridSpec::Brownian {
        fine_step,
        fine_until,
        mid_step,
        mid_until,
        coarse_step,
        t_max,
    } = *grid
    else {
        return Err(Error::InvalidConfig(
            "Brownian simulation needs a Brownian grid spec".into(),
        ));
    };
    let to_units = |x: f64| -> Result<usize> {
        let u = x / path_h;
        let r = u.round();
        if (u - r).abs() > 1e-9 || r < 0.5 {
            return Err(Error::InvalidConfig(format!(
                "grid value {x} is not a positive multiple of the path step {path_h}"
            )));
        }
        Ok(r as usize)
    };
    if !(fine_step > 0.0 && fine_until > 1.0 && mid_until > fine_until && t_max > mid_until) {
        return Err(Error::InvalidConfig(
            "graded grid regions must be positive and nested".into(),
        ));
    }
    let (fs, fu) = (to_units(fine_step)?, to_units(fine_until)?);
    let (ms, mu) = (to_units(mid_step)?, to_units(mid_until)?);
    let (cs, tm) = (to_units(coarse_step)?, to_units(t_max)?);
    let mut idx = Vec::new();
    let mut i = fs;
    while i <= fu {
        idx.push(i as u32);
        i += fs;
    }
    i = fu + ms;
    while i <= mu {
        idx.push(i as u32);
        i += ms;
    }
    i = mu + cs;
    while i <= tm {
        idx.push(i as u32);
        i += cs;
    }
    Ok((idx, fs))
}

fn build_plan(grid: &GridSpec, beta: f64, c0: f64, path_h: f64) -> Result<ScanPlan> {
    let (graded, stride) = graded_indices(grid, path_h)?;
    let i_one = (1.0 / path_h).round() as usize;
    let t_idx: Vec<u32> = graded.iter().copied().filter(|&i| i as usize > i_one).collect();
    let inv_logt = t_idx
        .iter()
        .map(|&i| (c0 + i as f64 * path_h).ln().powf(-beta))
        .collect::<Vec<_>>();
    let s_val: Vec<f64> = graded.iter().map(|&i| i as f64 * path_h).collect();
    let inv_rho = s_val
        .iter()
        .map(|&s| 1.0 / (s.sqrt() * (c0 + 1.0 / s).ln().powf(beta)))
        .collect();
    let path_len = graded.last().copied().unwrap_or(0) as usize;
    Ok(ScanPlan {
        i_one,
        stride,
        t_idx,
        inv_logt,
        s_idx: graded,
        s_val,
        inv_rho,
        path_len,
    })
}

impl ScanPlan {
    /// Supremum of the weighted two-window functional over the plan's
    /// (t, s) pairs, plus the bridge area V on [0,1].
    fn evaluate(&self, path: &[f64]) -> (f64, f64) {
        let b1 = path[self.i_one];
        let min1sb: Vec<f64> = self
            .s_idx
            .iter()
            .zip(&self.s_val)
            .map(|(&i, &s)| if s <= 1.0 { s * b1 } else { path[i as usize] })
            .collect();

        let mut sup = 0.0f64;
        for (&it, &invlt) in self.t_idx.iter().zip(&self.inv_logt) {
            let it = it as usize;
            // s <= t/2 and t - s >= 1, s ascending so a single cutoff.
            let s_cap = (it / 2).min(it - self.i_one) as u32;
            let cut = self.s_idx.partition_point(|&i| i <= s_cap);
            let bt = path[it];
            let mut m = 0.0f64;
            for ((&is, &msb), &ir) in self.s_idx[..cut]
                .iter()
                .zip(&min1sb[..cut])
                .zip(&self.inv_rho[..cut])
            {
                let num = (msb - bt + path[it - is as usize]).abs();
                let v = num * ir;
                if v > m {
                    m = v;
                }
            }
            let v = m * invlt;
            if v > sup {
                sup = v;
            }
        }

        // V = int_0^1 |B(x) - x B(1)| dx, trapezoid on the plan's fine grid.
        let h = self.stride as f64 / self.i_one as f64;
        let mut acc = 0.0f64;
        let mut i = self.stride;
        while i < self.i_one {
            acc += (path[i] - (i as f64 / self.i_one as f64) * b1).abs();
            i += self.stride;
        }
        (sup, acc * h)
    }
}

/// Draws the Brownian functional under every grid in `grids` on a shared
/// path per draw (the finest grid sets the path resolution, so coarser
/// grids see the restriction of the same path). Returns one sample vector
/// per grid. `increment_scale` multiplies the Brownian increments and
/// exists to exercise pivotality.
pub fn brownian_limit_samples(
    law: BrownianLaw,
    beta: f64,
    c0: f64,
    grids: &[GridSpec],
    draws: usize,
    seed: u64,
    increment_scale: f64,
) -> Result<Vec<Vec<f64>>> {
    if grids.is_empty() || draws == 0 {
        return Err(Error::InvalidConfig("empty calibration request".into()));
    }
    if !(beta > 0.5 && c0 > 1.0) {
        return Err(Error::InvalidConfig(
            "limit simulation needs beta > 1/2 and c0 > 1".into(),
        ));
    }
    let path_h = grids
        .iter()
        .map(|g| match g {
            GridSpec::Brownian { fine_step, .. } => Ok(*fine_step),
            _ => Err(Error::InvalidConfig(
                "Brownian simulation needs Brownian grid specs".into(),
            )),
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let plans = grids
        .iter()
        .map(|g| build_plan(g, beta, c0, path_h))
        .collect::<Result<Vec<_>>>()?;
    let path_len = plans.iter().map(|p| p.path_len).max().unwrap();
    let sd = path_h.sqrt() * increment_scale;

    let per_draw: Vec<Vec<f64>> = (0..draws as u64)
        .into_par_iter()
        .map(|draw| {
            let mut attempt = 0u64;
            loop {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(split_seed(seed, draw | (attempt << 48)));
                let mut path = Vec::with_capacity(path_len + 1);
                path.push(0.0f64);
                let mut acc = 0.0f64;
                for _ in 0..path_len {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    acc += z * sd;
                    path.push(acc);
                }
                let evals: Vec<(f64, f64)> = plans.iter().map(|p| p.evaluate(&path)).collect();
                if law == BrownianLaw::Sn && evals.iter().any(|&(_, v)| v == 0.0) {
                    // Probability-zero event; redraw with a derived seed.
                    log::warn!("degenerate bridge area in draw {draw}; redrawing");
                    attempt += 1;
                    continue;
                }
                return evals
                    .into_iter()
                    .map(|(sup, v)| match law {
                        BrownianLaw::Tc => sup,
                        BrownianLaw::Sn => sup / v,
                    })
                    .collect();
            }
        })
        .collect();

    let mut out = vec![Vec::with_capacity(draws); grids.len()];
    for draw in per_draw {
        for (i, v) in draw.into_iter().enumerate() {
            out[i].push(v);
        }
    }
    Ok(out)
}

/// Quantile table of the mean-detector limit law at unit variance.
pub fn simulate_l_tc(
    beta: f64,
    c0: f64,
    grid: &GridSpec,
    draws: usize,
    seed: u64,
) -> Result<QuantileTable> {
    let samples =
        brownian_limit_samples(BrownianLaw::Tc, beta, c0, std::slice::from_ref(grid), draws, seed, 1.0)?;
    QuantileTable::from_samples(
        LimitLaw::LTc { beta, c0 },
        grid.clone(),
        seed,
        &STANDARD_LEVELS,
        &samples[0],
    )
}

/// Quantile table of the pivotal self-normalized limit law.
pub fn simulate_l_sn(
    beta: f64,
    c0: f64,
    grid: &GridSpec,
    draws: usize,
    seed: u64,
) -> Result<QuantileTable> {
    let samples =
        brownian_limit_samples(BrownianLaw::Sn, beta, c0, std::slice::from_ref(grid), draws, seed, 1.0)?;
    QuantileTable::from_samples(
        LimitLaw::LSn { beta, c0 },
        grid.clone(),
        seed,
        &STANDARD_LEVELS,
        &samples[0],
    )
}

// ---------------------------------------------------------------------------
// Finite-sample calibration (L_F and baseline null simulation)
// ---------------------------------------------------------------------------

/// Input family for the distribution-free simulation. The nonparametric
/// detector is a rank statistic, so any continuous family yields the same
/// law; the choice is exposed to let tests verify exactly that.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationInput {
    Uniform,
    Normal,
}

/// Supremum of the nonparametric detector over `n_cal * t_horizon`
/// monitoring steps on i.i.d. continuous data, one sample per draw.
pub fn l_f_samples(
    beta: f64,
    c0: f64,
    n_cal: usize,
    t_horizon: usize,
    draws: usize,
    seed: u64,
    input: CalibrationInput,
) -> Result<Vec<f64>> {
    if n_cal < 100 {
        return Err(Error::InvalidConfig(
            "distribution-free calibration needs n_cal >= 100".into(),
        ));
    }
    let mut cfg = MonitorConfig::new(DetectorKind::Nptc, n_cal);
    cfg.beta = beta;
    cfg.c0 = c0;
    cfg.validate()?;
    let total = n_cal * (1 + t_horizon);
    let horizon = n_cal * t_horizon;
    (0..draws as u64)
        .into_par_iter()
        .map(|draw| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, draw));
            let data: Vec<f64> = match input {
                CalibrationInput::Uniform => (0..total).map(|_| rng.random::<f64>()).collect(),
                CalibrationInput::Normal => (0..total)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect(),
            };
            Ok(run_stream(&data, &cfg, f64::INFINITY, horizon)?.sup)
        })
        .collect()
}

/// Quantile table for the nonparametric limit, via exact finite-sample
/// simulation on uniforms.
pub fn simulate_l_f(
    beta: f64,
    c0: f64,
    n_cal: usize,
    t_horizon: usize,
    draws: usize,
    seed: u64,
) -> Result<QuantileTable> {
    let samples = l_f_samples(
        beta,
        c0,
        n_cal,
        t_horizon,
        draws,
        seed,
        CalibrationInput::Uniform,
    )?;
    QuantileTable::from_samples(
        LimitLaw::LF { beta, c0 },
        GridSpec::FiniteSample { n_cal, t_horizon },
        seed,
        &STANDARD_LEVELS,
        &samples,
    )
}

fn null_sim_config(
    kind: DetectorKind,
    eta: f64,
    b: f64,
    c0: f64,
    n_cal: usize,
) -> Result<MonitorConfig> {
    match kind {
        DetectorKind::C | DetectorKind::Pc | DetectorKind::Fc | DetectorKind::Wc
        | DetectorKind::Mm => {}
        other => {
            return Err(Error::InvalidConfig(format!(
                "null simulation covers the weighted-CUSUM baselines, not {other}"
            )))
        }
    }
    let mut cfg =
        MonitorConfig::new(kind, n_cal).with_scale(ScaleMode::Known { sigma2: 1.0 });
    cfg.eta = eta;
    cfg.b_mosum = b;
    cfg.c0 = c0;
    cfg.validate()?;
    Ok(cfg)
}

fn null_sim_samples_scaled(
    cfg: &MonitorConfig,
    t_horizon: usize,
    draws: usize,
    seed: u64,
    noise_scale: f64,
) -> Result<Vec<f64>> {
    let n_cal = cfg.n_train;
    let total = n_cal * (1 + t_horizon);
    let horizon = n_cal * t_horizon;
    let mut cfg = cfg.clone();
    cfg.scale = ScaleMode::Known {
        sigma2: noise_scale * noise_scale,
    };
    (0..draws as u64)
        .into_par_iter()
        .map(|draw| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, draw));
            let data: Vec<f64> = (0..total)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * noise_scale
                })
                .collect();
            Ok(run_stream(&data, &cfg, f64::INFINITY, horizon)?.sup)
        })
        .collect()
}

/// Null-distribution samples of a baseline detector on i.i.d. standard
/// normal data at calibration size `n_cal`.
pub fn null_sim_samples(
    kind: DetectorKind,
    eta: f64,
    b: f64,
    c0: f64,
    n_cal: usize,
    t_horizon: usize,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let cfg = null_sim_config(kind, eta, b, c0, n_cal)?;
    null_sim_samples_scaled(&cfg, t_horizon, draws, seed, 1.0)
}

/// Quantile table for a baseline detector, via null simulation.
#[allow(clippy::too_many_arguments)]
pub fn null_sim_quantiles(
    kind: DetectorKind,
    eta: f64,
    b: f64,
    c0: f64,
    n_cal: usize,
    t_horizon: usize,
    draws: usize,
    seed: u64,
) -> Result<QuantileTable> {
    let samples = null_sim_samples(kind, eta, b, c0, n_cal, t_horizon, draws, seed)?;
    QuantileTable::from_samples(
        LimitLaw::NullSim {
            kind,
            eta,
            b: (kind == DetectorKind::Mm).then_some(b),
            c0: (kind == DetectorKind::Wc).then_some(c0),
        },
        GridSpec::FiniteSample { n_cal, t_horizon },
        seed,
        &STANDARD_LEVELS,
        &samples,
    )
}

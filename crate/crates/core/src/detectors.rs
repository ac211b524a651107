//! The two-window inspection detectors: mean (TC), self-normalized
//! (SNTC), and nonparametric (NPTC).
//!
//! All three compare an early block with the most recent block of
//! (near-)equal length `ell` and maximize a weighted contrast over the
//! admissible window lengths `1 <= ell <= min(k, (N+k)/2)` at monitoring
//! index `k`. The mean detectors work on prefix sums only; the
//! nonparametric detector contrasts unscaled empirical distribution
//! functions and needs the raw observations.

use crate::config::{MonitorConfig, ScaleMode, ScanGrid};
use crate::error::{Error, Result};
use crate::state::StreamState;

/// Value and maximizing window length of a detector scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOutcome {
    pub value: f64,
    pub argmax_ell: usize,
}

fn check_window(state: &StreamState, ell: usize, k: usize) -> Result<()> {
    let n = state.n_train();
    if k < 1 || ell < 1 || ell > k.min((n + k) / 2) {
        return Err(Error::IndexOutOfRange(format!(
            "window ell={ell} inadmissible at k={k} (N={n})"
        )));
    }
    if state.count() < n + k {
        return Err(Error::IndexOutOfRange(format!(
            "state holds {} observations, need {}",
            state.count(),
            n + k
        )));
    }
    Ok(())
}

/// Two-window CUSUM contrast
/// `|min(1, ell/N) * S_{max(ell,N)} - (S_{N+k} - S_{N+k-ell})|`,
/// computed from prefix sums in O(1).
pub fn twin_gamma(state: &StreamState, ell: usize, k: usize) -> Result<f64> {
    check_window(state, ell, k)?;
    Ok(twin_gamma_unchecked(state, ell, k))
}

#[inline]
pub(crate) fn twin_gamma_unchecked(state: &StreamState, ell: usize, k: usize) -> f64 {
    let n = state.n_train();
    let front = if ell <= n {
        (ell as f64 / n as f64) * state.prefix_sum(n)
    } else {
        state.prefix_sum(ell)
    };
    let back = state.prefix_sum(n + k) - state.prefix_sum(n + k - ell);
    (front - back).abs()
}

/// Temporal-discounting weight
/// `ell^{-1/2} * ln(C0 + N/ell)^{-beta} * ln(C0 + (N+k)/N)^{-beta}`.
///
/// Strictly positive and strictly decreasing in `k` for fixed `ell`.
pub fn twin_weight(ell: usize, k: usize, cfg: &MonitorConfig) -> f64 {
    let n = cfg.n_train as f64;
    let ell = ell as f64;
    let scale_part = (cfg.c0 + n / ell).ln().powf(-cfg.beta) / ell.sqrt();
    let time_part = (cfg.c0 + (n + k as f64) / n).ln().powf(-cfg.beta);
    scale_part * time_part
}

/// Unweighted-by-scale scan: `max_ell twin_weight * twin_gamma` over the
/// configured grid, with ties broken toward the smallest `ell`.
pub(crate) fn twin_scan(state: &StreamState, k: usize, cfg: &MonitorConfig) -> Result<ScanOutcome> {
    check_window(state, 1, k)?;
    let ell_max = cfg.ell_max(k);
    let n = cfg.n_train as f64;
    let time_part = (cfg.c0 + (n + k as f64) / n).ln().powf(-cfg.beta);
    let mut best = ScanOutcome {
        value: f64::NEG_INFINITY,
        argmax_ell: 0,
    };
    for ell in cfg.grid.lengths(ell_max) {
        let w = (cfg.c0 + n / ell as f64).ln().powf(-cfg.beta) / (ell as f64).sqrt();
        let v = w * time_part * twin_gamma_unchecked(state, ell, k);
        if v > best.value {
            best = ScanOutcome {
                value: v,
                argmax_ell: ell,
            };
        }
    }
    Ok(best)
}

/// Resolves the standard deviation a scaled detector divides by.
pub fn resolve_sigma(state: &StreamState, cfg: &MonitorConfig) -> Result<f64> {
    let sigma2 = match cfg.scale {
        ScaleMode::Known { sigma2 } => sigma2,
        ScaleMode::TrainVariance => state.train_var(),
        ScaleMode::Lrv { bandwidth } => {
            let train = state
                .observations()
                .get(..cfg.n_train)
                .ok_or_else(|| {
                    Error::InvalidConfig(
                        "long-run variance scaling needs retained training data".into(),
                    )
                })?;
            crate::calibration::estimate_lrv(train, bandwidth)?.sigma2_lr
        }
        ScaleMode::SelfNormalized | ScaleMode::None => return Ok(1.0),
    };
    if sigma2 <= 0.0 {
        return Err(Error::ZeroVariance(
            "estimated variance is zero; scaled detectors cannot run".into(),
        ));
    }
    Ok(sigma2.sqrt())
}

/// TC detector at monitoring index `k`: the two-window scan divided by
/// the standard deviation of the configured scale mode.
pub fn twin_detector(state: &StreamState, k: usize, cfg: &MonitorConfig) -> Result<ScanOutcome> {
    let sigma = resolve_sigma(state, cfg)?;
    let scan = twin_scan(state, k, cfg)?;
    Ok(ScanOutcome {
        value: scan.value / sigma,
        argmax_ell: scan.argmax_ell,
    })
}

/// Self-normalizer `V_N = N^{-3/2} sum_{i<=N} |S_i - (i/N) S_N|`,
/// frozen once the training sample is complete.
pub fn self_normalizer(state: &StreamState) -> Result<f64> {
    state.v_n().ok_or_else(|| Error::StreamExhausted {
        needed: state.n_train(),
        got: state.count(),
    })
}

/// Batch evaluation of the self-normalizer on a raw sample.
pub fn v_n_from_sample(sample: &[f64]) -> f64 {
    let n = sample.len();
    let mut prefix = 0.0;
    let total: f64 = sample.iter().sum();
    let mut acc = 0.0;
    for (i, x) in sample.iter().enumerate() {
        prefix += x;
        acc += (prefix - ((i + 1) as f64 / n as f64) * total).abs();
    }
    acc / (n as f64).powf(1.5)
}

/// SNTC detector: the unscaled two-window scan divided by `V_N`.
///
/// Refuses to run when the training sample is constant (`V_N = 0`).
pub fn sn_detector(state: &StreamState, k: usize, cfg: &MonitorConfig) -> Result<ScanOutcome> {
    let v_n = self_normalizer(state)?;
    if v_n == 0.0 {
        return Err(Error::DegenerateNormalizer);
    }
    let scan = twin_scan(state, k, cfg)?;
    Ok(ScanOutcome {
        value: scan.value / v_n,
        argmax_ell: scan.argmax_ell,
    })
}

// ---------------------------------------------------------------------------
// Nonparametric (rank) variant
// ---------------------------------------------------------------------------

/// Exact supremum over `x` of the scaled ECDF contrast
/// `|coef * #{ref <= x} - scale * #{win <= x}|`.
///
/// Both inputs must be sorted ascending. The contrast is a step function
/// that vanishes at both ends, so its supremum (including left limits) is
/// attained on the set of distinct pooled values; integer arithmetic makes
/// the result exact.
pub(crate) fn ecdf_contrast_scaled(refs: &[f64], win: &[f64], coef: i64, scale: i64) -> i64 {
    let (mut i, mut j) = (0usize, 0usize);
    let (mut hi, mut lo) = (0i64, 0i64);
    while i < refs.len() || j < win.len() {
        let v = match (refs.get(i), win.get(j)) {
            (Some(&a), Some(&b)) => {
                if a <= b {
                    a
                } else {
                    b
                }
            }
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < refs.len() && refs[i] == v {
            i += 1;
        }
        while j < win.len() && win[j] == v {
            j += 1;
        }
        let d = coef * i as i64 - scale * j as i64;
        if d > hi {
            hi = d;
        }
        if d < lo {
            lo = d;
        }
    }
    hi.max(-lo)
}

/// Nonparametric two-window contrast
/// `sup_x |min(1, ell/N) G_{max(ell,N)}(x) - (G_{N+k}(x) - G_{N+k-ell}(x))|`
/// with `G_j` the unscaled ECDF of the first `j` observations.
///
/// Requires full observation retention. Evaluation is exact; ties are
/// handled by evaluating at every distinct value and its left limit.
pub fn np_gamma(state: &StreamState, ell: usize, k: usize) -> Result<f64> {
    check_window(state, ell, k)?;
    let n = state.n_train();
    let obs = state.observations();
    if obs.len() < n + k {
        return Err(Error::InvalidConfig(
            "nonparametric detector needs retained observations".into(),
        ));
    }
    let mut win: Vec<f64> = obs[n + k - ell..n + k].to_vec();
    win.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let scaled = if ell <= n {
        ecdf_contrast_scaled(state.train_sorted(), &win, ell as i64, n as i64)
    } else {
        let mut front: Vec<f64> = obs[..ell].to_vec();
        front.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        ecdf_contrast_scaled(&front, &win, n as i64, n as i64)
    };
    Ok(scaled as f64 / n as f64)
}

fn sorted_insert(v: &mut Vec<f64>, x: f64) {
    let pos = v.partition_point(|&y| y < x);
    v.insert(pos, x);
}

/// NPTC detector at monitoring index `k`: `max_ell twin_weight * np_gamma`
/// over the configured grid, no variance scaling.
pub fn np_detector(state: &StreamState, k: usize, cfg: &MonitorConfig) -> Result<ScanOutcome> {
    check_window(state, 1, k)?;
    let n = cfg.n_train;
    let obs = state.observations();
    if obs.len() < n + k {
        return Err(Error::InvalidConfig(
            "nonparametric detector needs retained observations".into(),
        ));
    }
    let ell_max = cfg.ell_max(k);
    let time_part = (cfg.c0 + (n as f64 + k as f64) / n as f64)
        .ln()
        .powf(-cfg.beta);
    let mut best = ScanOutcome {
        value: f64::NEG_INFINITY,
        argmax_ell: 0,
    };

    match cfg.grid {
        ScanGrid::Exact => {
            // Incremental scan: the window gains one point on the left per
            // unit of ell; past ell = N the reference prefix grows too.
            let mut win: Vec<f64> = Vec::with_capacity(ell_max);
            let mut front_ext: Vec<f64> = Vec::new();
            for ell in 1..=ell_max {
                sorted_insert(&mut win, obs[n + k - ell]);
                let scaled = if ell <= n {
                    ecdf_contrast_scaled(state.train_sorted(), &win, ell as i64, n as i64)
                } else {
                    if ell == n + 1 {
                        front_ext = state.train_sorted().to_vec();
                    }
                    sorted_insert(&mut front_ext, obs[ell - 1]);
                    ecdf_contrast_scaled(&front_ext, &win, n as i64, n as i64)
                };
                let w = (cfg.c0 + n as f64 / ell as f64).ln().powf(-cfg.beta)
                    / (ell as f64).sqrt();
                let v = w * time_part * (scaled as f64 / n as f64);
                if v > best.value {
                    best = ScanOutcome {
                        value: v,
                        argmax_ell: ell,
                    };
                }
            }
        }
        ScanGrid::Geometric { .. } => {
            for ell in cfg.grid.lengths(ell_max) {
                let gamma = np_gamma(state, ell, k)?;
                let w = (cfg.c0 + n as f64 / ell as f64).ln().powf(-cfg.beta)
                    / (ell as f64).sqrt();
                let v = w * time_part * gamma;
                if v > best.value {
                    best = ScanOutcome {
                        value: v,
                        argmax_ell: ell,
                    };
                }
            }
        }
    }
    Ok(best)
}

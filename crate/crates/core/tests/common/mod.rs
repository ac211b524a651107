//! Shared test oracles. Everything here recomputes statistics from raw
//! data by naive summation or enumeration, independent of the library's
//! prefix-sum and incremental paths.

#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use twinspect::config::MonitorConfig;

pub fn normal_stream(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| rand_distr::StandardNormal.sample(&mut rng))
        .collect()
}

pub fn uniform_stream(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random::<f64>()).collect()
}

/// Naive re-summation of the two-window contrast.
pub fn twin_gamma_brute(data: &[f64], n: usize, ell: usize, k: usize) -> f64 {
    let m = ell.max(n);
    let front: f64 = data[..m].iter().sum::<f64>() * 1f64.min(ell as f64 / n as f64);
    let back: f64 = data[n + k - ell..n + k].iter().sum();
    (front - back).abs()
}

/// Brute-force mean detector: max over every admissible window length.
pub fn twin_detector_brute(data: &[f64], cfg: &MonitorConfig, k: usize) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0usize);
    for ell in 1..=cfg.ell_max(k) {
        let v = twinspect::detectors::twin_weight(ell, k, cfg)
            * twin_gamma_brute(data, cfg.n_train, ell, k);
        if v > best.0 {
            best = (v, ell);
        }
    }
    best
}

/// Exact nonparametric contrast by brute force: evaluates the scaled
/// integer ECDF difference at every pooled data point (covering left
/// limits through the previous point) and returns `N * gamma`.
pub fn np_gamma_brute_scaled(data: &[f64], n: usize, ell: usize, k: usize) -> i64 {
    let m = ell.max(n);
    let coef = if ell <= n { ell as i64 } else { n as i64 };
    let mut candidates: Vec<f64> = data[..n + k].to_vec();
    candidates.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    let count_le = |xs: &[f64], v: f64| xs.iter().filter(|&&x| x <= v).count() as i64;
    let mut best = 0i64;
    for &v in &candidates {
        let d = coef * count_le(&data[..m], v) - n as i64 * count_le(&data[n + k - ell..n + k], v);
        best = best.max(d.abs());
    }
    best
}

/// First monitoring index whose enumerated detector value exceeds `q`,
/// by full (k, window) enumeration on raw data.
pub fn first_crossing_oracle(
    data: &[f64],
    cfg: &MonitorConfig,
    q: f64,
    horizon: usize,
    divisor: f64,
) -> Option<usize> {
    for k in 1..=horizon {
        let (v, _) = twin_detector_brute(data, cfg, k);
        if v / divisor > q {
            return Some(k);
        }
    }
    None
}

/// Asymptotic two-sample Kolmogorov-Smirnov p-value.
pub fn ks_two_sample_p(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let lambda = ne.sqrt() * d;
    // Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2)
    let mut p = 0.0;
    for jj in 1..=100 {
        let term = 2.0 * (-2.0 * (jj as f64).powi(2) * lambda * lambda).exp();
        p += if jj % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

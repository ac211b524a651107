//! Batch evaluation of detector runs over a full stream.
//!
//! The streaming operations in [`crate::detectors`] and
//! [`crate::baselines`] recompute each statistic from the live state and
//! are the reference path. This module evaluates the same statistics over
//! a complete stream at Monte Carlo scale: mean detectors run on
//! precomputed prefix sums, and the nonparametric detector maintains the
//! scaled ECDF contrast in a prefix-sum segment tree that slides along
//! the monitoring index for each window length. Equality with the
//! streaming path is covered by integration tests.

use crate::config::{DetectorKind, MonitorConfig, ScaleMode, ScanGrid};
use crate::detectors::v_n_from_sample;
use crate::error::{Error, Result};
use crate::util::CompensatedSum;

/// First threshold crossing of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    /// Monitoring index of the first crossing.
    pub k: usize,
    /// Detector value at the crossing.
    pub value: f64,
    /// Maximizing comparison-window length, where the detector scans one.
    pub window_len: Option<usize>,
}

/// Outcome of one batch run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOutcome {
    pub crossing: Option<Crossing>,
    /// Supremum of the detector value over the scanned horizon (for RC:
    /// supremum of statistic minus its step-dependent threshold).
    pub sup: f64,
}

/// Compensated prefix sums `S_0..S_len`.
pub(crate) fn prefix_sums(data: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len() + 1);
    out.push(0.0);
    let mut acc = CompensatedSum::new();
    for &x in data {
        acc.add(x);
        out.push(acc.value());
    }
    out
}

fn resolve_divisor(data: &[f64], cfg: &MonitorConfig) -> Result<f64> {
    let n = cfg.n_train;
    let sigma2 = match cfg.scale {
        ScaleMode::Known { sigma2 } => sigma2,
        ScaleMode::TrainVariance => {
            let train = &data[..n];
            let mean = train.iter().sum::<f64>() / n as f64;
            train.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        }
        ScaleMode::Lrv { bandwidth } => {
            crate::calibration::estimate_lrv(&data[..n], bandwidth)?.sigma2_lr
        }
        ScaleMode::SelfNormalized => {
            let v = v_n_from_sample(&data[..n]);
            if v == 0.0 {
                return Err(Error::DegenerateNormalizer);
            }
            return Ok(v);
        }
        ScaleMode::None => return Ok(1.0),
    };
    if sigma2 <= 0.0 {
        return Err(Error::ZeroVariance(
            "estimated variance is zero; scaled detectors cannot run".into(),
        ));
    }
    Ok(sigma2.sqrt())
}

/// Evaluates `cfg.detector` on `data` (training sample followed by
/// `horizon` monitoring steps) and reports the first index whose value
/// exceeds `threshold`, stopping there. Pass `f64::INFINITY` to scan the
/// whole horizon and collect the supremum.
pub fn run_stream(
    data: &[f64],
    cfg: &MonitorConfig,
    threshold: f64,
    horizon: usize,
) -> Result<EngineOutcome> {
    cfg.validate()?;
    let n = cfg.n_train;
    if data.len() < n + horizon {
        return Err(Error::StreamExhausted {
            needed: n + horizon,
            got: data.len(),
        });
    }
    if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteObservation { position: pos + 1 });
    }
    match cfg.detector {
        DetectorKind::Tc | DetectorKind::Sntc => {
            let divisor = resolve_divisor(data, cfg)?;
            run_twin(data, cfg, divisor, threshold, horizon)
        }
        DetectorKind::Nptc => run_np(data, cfg, threshold, horizon),
        DetectorKind::C | DetectorKind::Mm => {
            let divisor = resolve_divisor(data, cfg)?;
            run_c_mm(data, cfg, divisor, threshold, horizon)
        }
        DetectorKind::Pc | DetectorKind::Fc | DetectorKind::Wc => {
            let divisor = resolve_divisor(data, cfg)?;
            run_pc_fc_wc(data, cfg, divisor, threshold, horizon)
        }
        DetectorKind::Rc => run_rc(data, cfg, horizon),
    }
}

/// Per-window-length weight factors `ell^{-1/2} ln(C0 + N/ell)^{-beta}`.
fn ell_weights(cfg: &MonitorConfig, ell_cap: usize) -> Vec<f64> {
    let n = cfg.n_train as f64;
    let mut w = vec![0.0; ell_cap + 1];
    for (ell, slot) in w.iter_mut().enumerate().skip(1) {
        *slot = (cfg.c0 + n / ell as f64).ln().powf(-cfg.beta) / (ell as f64).sqrt();
    }
    w
}

#[inline]
fn time_discount(cfg: &MonitorConfig, k: usize) -> f64 {
    let n = cfg.n_train as f64;
    (cfg.c0 + (n + k as f64) / n).ln().powf(-cfg.beta)
}

fn run_twin(
    data: &[f64],
    cfg: &MonitorConfig,
    divisor: f64,
    threshold: f64,
    horizon: usize,
) -> Result<EngineOutcome> {
    let n = cfg.n_train;
    let prefix = prefix_sums(&data[..n + horizon]);
    let ell_cap = cfg.ell_max(horizon);
    let wl = ell_weights(cfg, ell_cap);
    // Front block per window length: (ell/N) S_N for ell <= N, S_ell after.
    let s_n = prefix[n];
    let mut front = vec![0.0; ell_cap + 1];
    for (ell, slot) in front.iter_mut().enumerate().skip(1) {
        *slot = if ell <= n {
            ell as f64 / n as f64 * s_n
        } else {
            prefix[ell]
        };
    }
    let ladder = match cfg.grid {
        ScanGrid::Exact => None,
        ScanGrid::Geometric { .. } => Some(cfg.grid.lengths(ell_cap)),
    };

    let mut sup = f64::NEG_INFINITY;
    for k in 1..=horizon {
        let ell_max = cfg.ell_max(k);
        let s_nk = prefix[n + k];
        let mut best = f64::NEG_INFINITY;
        let mut best_ell = 0usize;
        let mut eval = |ell: usize| {
            let g = (front[ell] - (s_nk - prefix[n + k - ell])).abs();
            let v = wl[ell] * g;
            if v > best {
                best = v;
                best_ell = ell;
            }
        };
        match &ladder {
            None => (1..=ell_max).for_each(&mut eval),
            Some(ls) => {
                for &ell in ls.iter().take_while(|&&ell| ell < ell_max) {
                    eval(ell);
                }
                eval(ell_max);
            }
        }
        let value = time_discount(cfg, k) * best / divisor;
        if value > sup {
            sup = value;
        }
        if value > threshold {
            return Ok(EngineOutcome {
                crossing: Some(Crossing {
                    k,
                    value,
                    window_len: Some(best_ell),
                }),
                sup,
            });
        }
    }
    Ok(EngineOutcome {
        crossing: None,
        sup,
    })
}

fn run_c_mm(
    data: &[f64],
    cfg: &MonitorConfig,
    divisor: f64,
    threshold: f64,
    horizon: usize,
) -> Result<EngineOutcome> {
    let n = cfg.n_train;
    let prefix = prefix_sums(&data[..n + horizon]);
    let s_n = prefix[n];
    let is_mm = cfg.detector == DetectorKind::Mm;
    let mut sup = f64::NEG_INFINITY;
    for k in 1..=horizon {
        let start = if is_mm {
            (k as f64 * cfg.b_mosum).floor() as usize
        } else {
            0
        };
        let g = (((k - start) as f64 / n as f64) * s_n - (prefix[n + k] - prefix[n + start])).abs();
        let value = crate::baselines::weight_w1(k, n, cfg.eta) * g / divisor;
        if value > sup {
            sup = value;
        }
        if value > threshold {
            return Ok(EngineOutcome {
                crossing: Some(Crossing {
                    k,
                    value,
                    window_len: None,
                }),
                sup,
            });
        }
    }
    Ok(EngineOutcome {
        crossing: None,
        sup,
    })
}

fn run_pc_fc_wc(
    data: &[f64],
    cfg: &MonitorConfig,
    divisor: f64,
    threshold: f64,
    horizon: usize,
) -> Result<EngineOutcome> {
    let n = cfg.n_train;
    let prefix = prefix_sums(&data[..n + horizon]);
    let s_n = prefix[n];
    let kind = cfg.detector;
    // Per-length/per-position factors hoisted out of the scan loops.
    let front_pc: Vec<f64> = (0..=horizon)
        .map(|len| len as f64 * (s_n / n as f64))
        .collect();
    // g[j] = S_j / j, so the Full CUSUM contrast at discard offset
    // j - N is |len * g[j] + S_j - S_{N+k}| with len = N + k - j.
    let g_fc: Vec<f64> = prefix
        .iter()
        .enumerate()
        .map(|(j, &s)| if j == 0 { 0.0 } else { s / j as f64 })
        .collect();
    // len^{-eta} lookup for the Hölder weight.
    let pow_len: Vec<f64> = if kind == DetectorKind::Wc {
        (0..=horizon)
            .map(|d| if d == 0 { 0.0 } else { (d as f64).powf(-cfg.eta) })
            .collect()
    } else {
        Vec::new()
    };
    let mut sup = f64::NEG_INFINITY;
    for k in 1..=horizon {
        let s_nk = prefix[n + k];
        let mut best = f64::NEG_INFINITY;
        let mut best_len = 0usize;
        match kind {
            DetectorKind::Pc => {
                for len in 1..=k {
                    let g = (front_pc[len] - (s_nk - prefix[n + k - len])).abs();
                    if g > best {
                        best = g;
                        best_len = len;
                    }
                }
                best *= crate::baselines::weight_w1(k, n, cfg.eta);
            }
            DetectorKind::Fc => {
                for len in 1..=k {
                    let j = n + k - len;
                    let g = (len as f64 * g_fc[j] - (s_nk - prefix[j])).abs();
                    if g > best {
                        best = g;
                        best_len = len;
                    }
                }
                best *= crate::baselines::weight_w1(k, n, cfg.eta);
            }
            DetectorKind::Wc => {
                let nf = n as f64;
                let kf = k as f64;
                let wk = nf.sqrt() * (nf + kf).powf(cfg.eta - 1.0)
                    / (cfg.c0 + (nf + kf) / nf).ln();
                for len in 1..=k {
                    let j = n + k - len;
                    let g = (len as f64 * g_fc[j] - (s_nk - prefix[j])).abs();
                    let v = pow_len[len] * g;
                    if v > best {
                        best = v;
                        best_len = len;
                    }
                }
                best *= wk;
            }
            _ => unreachable!(),
        }
        let value = best / divisor;
        if value > sup {
            sup = value;
        }
        if value > threshold {
            return Ok(EngineOutcome {
                crossing: Some(Crossing {
                    k,
                    value,
                    window_len: Some(best_len),
                }),
                sup,
            });
        }
    }
    Ok(EngineOutcome {
        crossing: None,
        sup,
    })
}

fn run_rc(data: &[f64], cfg: &MonitorConfig, horizon: usize) -> Result<EngineOutcome> {
    let n = cfg.n_train;
    let prefix = prefix_sums(&data[..n + horizon]);
    let mut sup = f64::NEG_INFINITY;
    for k in 1..=horizon {
        let total = n + k;
        let s_total = prefix[total];
        let nf = total as f64;
        let mut best = f64::NEG_INFINITY;
        let mut best_split = 0usize;
        for j in 1..total {
            let jf = j as f64;
            let v = (prefix[j] - jf / nf * s_total).abs() / (jf * (nf - jf) / nf).sqrt();
            if v > best {
                best = v;
                best_split = j;
            }
        }
        let thr = crate::baselines::rc_threshold(k, cfg)?;
        if best - thr > sup {
            sup = best - thr;
        }
        if best > thr {
            return Ok(EngineOutcome {
                crossing: Some(Crossing {
                    k,
                    value: best,
                    window_len: Some(total - best_split),
                }),
                sup,
            });
        }
    }
    Ok(EngineOutcome {
        crossing: None,
        sup,
    })
}

// ---------------------------------------------------------------------------
// Nonparametric engine
// ---------------------------------------------------------------------------

/// Segment tree over per-slot increments whose prefix sums are the scaled
/// ECDF contrast. Point updates, O(1) queries for the extreme prefix sums.
///
/// Nodes pack (sum, max prefix, min prefix) together so one update walk
/// touches one cache line per level instead of three.
#[derive(Clone, Copy, Default, PartialEq, Eq)]
struct Node {
    sum: i32,
    mxp: i32,
    mnp: i32,
}

#[inline]
fn combine(l: Node, r: Node) -> Node {
    Node {
        sum: l.sum + r.sum,
        mxp: l.mxp.max(l.sum + r.mxp),
        mnp: l.mnp.min(l.sum + r.mnp),
    }
}

struct PrefixTree {
    size: usize,
    nodes: Vec<Node>,
}

impl PrefixTree {
    fn new(n_slots: usize) -> Self {
        let size = n_slots.next_power_of_two().max(2);
        Self {
            size,
            nodes: vec![Node::default(); 2 * size],
        }
    }

    fn build(&mut self, leaves: &[i32]) {
        let size = self.size;
        for (node, &d) in self.nodes[size..size + leaves.len()].iter_mut().zip(leaves) {
            *node = Node {
                sum: d,
                mxp: d,
                mnp: d,
            };
        }
        self.nodes[size + leaves.len()..].fill(Node::default());
        for i in (1..size).rev() {
            self.nodes[i] = combine(self.nodes[2 * i], self.nodes[2 * i + 1]);
        }
    }

    #[inline]
    fn add(&mut self, pos: usize, delta: i32) {
        let mut i = self.size + pos;
        let s = self.nodes[i].sum + delta;
        self.nodes[i] = Node {
            sum: s,
            mxp: s,
            mnp: s,
        };
        i >>= 1;
        while i >= 1 {
            let next = combine(self.nodes[2 * i], self.nodes[2 * i + 1]);
            if next == self.nodes[i] {
                return;
            }
            self.nodes[i] = next;
            if i == 1 {
                break;
            }
            i >>= 1;
        }
    }

    /// One window slide: `+delta` at the slot leaving the window and
    /// `-delta` at the slot entering it, walking both update paths in
    /// lockstep so their latencies overlap.
    #[inline]
    fn slide(&mut self, out_pos: usize, in_pos: usize, delta: i32) {
        let mut a = self.size + out_pos;
        let mut b = self.size + in_pos;
        if a == b {
            return; // same slot: net zero
        }
        let sa = self.nodes[a].sum + delta;
        self.nodes[a] = Node {
            sum: sa,
            mxp: sa,
            mnp: sa,
        };
        let sb = self.nodes[b].sum - delta;
        self.nodes[b] = Node {
            sum: sb,
            mxp: sb,
            mnp: sb,
        };
        a >>= 1;
        b >>= 1;
        let (mut live_a, mut live_b) = (true, true);
        while a != b {
            if live_a {
                let next = combine(self.nodes[2 * a], self.nodes[2 * a + 1]);
                live_a = next != self.nodes[a];
                self.nodes[a] = next;
            }
            if live_b {
                let next = combine(self.nodes[2 * b], self.nodes[2 * b + 1]);
                live_b = next != self.nodes[b];
                self.nodes[b] = next;
            }
            if !(live_a || live_b) {
                return;
            }
            a >>= 1;
            b >>= 1;
        }
        while a >= 1 {
            let next = combine(self.nodes[2 * a], self.nodes[2 * a + 1]);
            if next == self.nodes[a] {
                return;
            }
            self.nodes[a] = next;
            if a == 1 {
                break;
            }
            a >>= 1;
        }
    }

    /// Largest absolute prefix sum over all slots.
    #[inline]
    fn max_abs(&self) -> i32 {
        self.nodes[1].mxp.max(-self.nodes[1].mnp).max(0)
    }
}

fn run_np(
    data: &[f64],
    cfg: &MonitorConfig,
    threshold: f64,
    horizon: usize,
) -> Result<EngineOutcome> {
    let n = cfg.n_train;
    let total = n + horizon;
    let values = &data[..total];

    // Rank-compress all values once; every ECDF jump lives on a slot.
    let mut order: Vec<u32> = (0..total as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        values[a as usize]
            .partial_cmp(&values[b as usize])
            .unwrap()
    });
    let mut slot_of = vec![0u32; total];
    let mut n_slots = 0usize;
    for (rank, &pos) in order.iter().enumerate() {
        if rank > 0 && values[order[rank - 1] as usize] < values[pos as usize] {
            n_slots += 1;
        }
        slot_of[pos as usize] = n_slots as u32;
    }
    n_slots += 1;

    let mut train_hist = vec![0i32; n_slots];
    for &s in &slot_of[..n] {
        train_hist[s as usize] += 1;
    }

    let ell_cap = cfg.ell_max(horizon);
    let wl = ell_weights(cfg, ell_cap);
    let ladder: Option<Vec<usize>> = match cfg.grid {
        ScanGrid::Exact => None,
        ScanGrid::Geometric { .. } => Some(cfg.grid.lengths(ell_cap)),
    };

    let block = if threshold.is_finite() {
        512.min(horizon.max(1))
    } else {
        horizon.max(1)
    };
    let n_i32 = n as i32;

    let mut tree = PrefixTree::new(n_slots);
    let mut leaves = vec![0i32; n_slots];
    let mut best_val = vec![f64::NEG_INFINITY; block];
    let mut best_len = vec![0u32; block];
    let mut sup = f64::NEG_INFINITY;

    let mut kb = 1usize;
    while kb <= horizon {
        let ke = (kb + block - 1).min(horizon);
        let span = ke - kb + 1;
        best_val[..span].fill(f64::NEG_INFINITY);
        best_len[..span].fill(0);

        let ell_iter: Box<dyn Iterator<Item = usize>> = match &ladder {
            None => Box::new(1..=cfg.ell_max(ke)),
            Some(ls) => {
                // The ladder is computed for the full run; per block we
                // also force the largest admissible length of each k by
                // adding the per-k caps.
                let cap = cfg.ell_max(ke);
                let mut set: Vec<usize> =
                    ls.iter().copied().filter(|&l| l <= cap).collect();
                for k in kb..=ke {
                    set.push(cfg.ell_max(k));
                }
                set.sort_unstable();
                set.dedup();
                Box::new(set.into_iter())
            }
        };

        // Serpentine scan: consecutive window lengths reuse the tree by
        // alternating the slide direction, so only lengths up to N (or
        // ladder jumps) pay for a rebuild.
        let mut prev_ell = 0usize;
        let mut tree_k = 0usize;
        for ell in ell_iter {
            // Admissible k for this window length: k >= ell and k >= 2*ell - N.
            let k0 = kb.max(ell).max((2 * ell).saturating_sub(n));
            if k0 > ke {
                break;
            }
            let weight = wl[ell];
            macro_rules! record {
                ($k:expr) => {{
                    let v = weight * tree.max_abs() as f64;
                    let i = $k - kb;
                    if v > best_val[i] {
                        best_val[i] = v;
                        best_len[i] = ell as u32;
                    }
                }};
            }
            // Ascending slide: window at k-1 advances to k.
            macro_rules! fwd {
                ($k:expr) => {
                    tree.slide(
                        slot_of[n + $k - 1 - ell] as usize,
                        slot_of[n + $k - 1] as usize,
                        n_i32,
                    )
                };
            }

            let incremental = ell > n && prev_ell + 1 == ell;
            if !incremental {
                // Rebuild anchored at k0: leaves hold the per-slot
                // increments coef * #ref - N * #window.
                let m = ell.max(n);
                let coef = if ell <= n { ell as i32 } else { n_i32 };
                leaves.fill(0);
                for &s in &slot_of[..m] {
                    leaves[s as usize] += coef;
                }
                for &s in &slot_of[n + k0 - ell..n + k0] {
                    leaves[s as usize] -= n_i32;
                }
                tree.build(&leaves);
                record!(k0);
                for k in k0 + 1..=ke {
                    fwd!(k);
                    record!(k);
                }
                tree_k = ke;
            } else {
                // Reference prefix gains position ell (1-based); the
                // window gains its left neighbor at the same k.
                tree.add(slot_of[ell - 1] as usize, n_i32);
                tree.add(slot_of[n + tree_k - ell] as usize, -n_i32);
                if tree_k == ke {
                    record!(ke);
                    for k in (k0..ke).rev() {
                        // Descending slide: window at k+1 retreats to k.
                        tree.slide(
                            slot_of[n + k] as usize,
                            slot_of[n + k - ell] as usize,
                            n_i32,
                        );
                        record!(k);
                    }
                    tree_k = k0;
                } else {
                    // Catch up silently to the first admissible k.
                    while tree_k < k0 {
                        tree_k += 1;
                        fwd!(tree_k);
                    }
                    record!(k0);
                    for k in k0 + 1..=ke {
                        fwd!(k);
                        record!(k);
                    }
                    tree_k = ke;
                }
            }
            prev_ell = ell;
        }

        for k in kb..=ke {
            let value = best_val[k - kb] * time_discount(cfg, k) / n as f64;
            if value > sup {
                sup = value;
            }
            if value > threshold {
                return Ok(EngineOutcome {
                    crossing: Some(Crossing {
                        k,
                        value,
                        window_len: Some(best_len[k - kb] as usize),
                    }),
                    sup,
                });
            }
        }
        kb = ke + 1;
    }
    Ok(EngineOutcome {
        crossing: None,
        sup,
    })
}

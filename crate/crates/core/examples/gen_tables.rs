//! Generates the shipped quantile tables into tables/ (same code paths
//! and defaults as `twinspect calibrate`).

use std::time::Instant;
use twinspect::calibration::*;
use twinspect::config::DetectorKind;
use twinspect::table::GridSpec;

const SEED: u64 = 1729;
const DRAWS: usize = 10_000;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "tables".into());
    let (beta, c0, eta, b) = (0.6, 20.0, 0.4, 0.4);
    let grid = GridSpec::brownian_default();

    let t0 = Instant::now();
    let t = simulate_l_sn(beta, c0, &grid, DRAWS, SEED).unwrap();
    t.save(format!("{dir}/l_sn.json")).unwrap();
    eprintln!("l_sn done {:?} q95={:.4}", t0.elapsed(), t.quantile(0.95).unwrap());

    let t0 = Instant::now();
    let t = simulate_l_tc(beta, c0, &grid, DRAWS, SEED).unwrap();
    t.save(format!("{dir}/l_tc.json")).unwrap();
    eprintln!("l_tc done {:?} q95={:.4}", t0.elapsed(), t.quantile(0.95).unwrap());

    for (kind, name) in [
        (DetectorKind::C, "null_c"),
        (DetectorKind::Mm, "null_mm"),
        (DetectorKind::Pc, "null_pc"),
        (DetectorKind::Fc, "null_fc"),
        (DetectorKind::Wc, "null_wc"),
    ] {
        let t0 = Instant::now();
        let t = null_sim_quantiles(kind, eta, b, c0, 200, 50, DRAWS, SEED).unwrap();
        t.save(format!("{dir}/{name}.json")).unwrap();
        eprintln!("{name} done {:?} q95={:.4}", t0.elapsed(), t.quantile(0.95).unwrap());
    }

    let t0 = Instant::now();
    let t = simulate_l_f(beta, c0, 200, 50, DRAWS, SEED).unwrap();
    t.save(format!("{dir}/l_f.json")).unwrap();
    eprintln!("l_f done {:?} q95={:.4}", t0.elapsed(), t.quantile(0.95).unwrap());
}

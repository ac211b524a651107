//! Quick sanity check of empirical sizes for the sigma-scaled detectors
//! against the shipped tables (NPTC waits for l_f.json).
use twinspect::config::DetectorKind;
use twinspect::simlab::*;
use twinspect::table::TableStore;

fn main() {
    let store = TableStore::open("tables").unwrap();
    let spec = ExperimentSpec {
        id: "sanity".into(),
        n_train: 100,
        t_horizon: 2000,
        noise: NoiseModel::Normal,
        change: None,
        detectors: vec![DetectorKind::Tc, DetectorKind::C, DetectorKind::Mm],
        replications: 400,
        seed: 424242,
        alpha: 0.05,
    };
    let r = run_level_experiment(&spec, &store).unwrap();
    for d in &r.per_detector {
        println!("{}: size {:.1}% (expect ~4-5%)", d.detector, 100.0 * d.rejection_rate);
    }
    println!("runtime {:.1}s", r.runtime_secs);
}

use rand::seq::SliceRandom;

use seqread::calibration::{
    calibrate, ingest_trajectories, labeled_error_curve, model_error_curve, preparation_error_fit, CalibrationOptions,
    DataSplit,
};
use seqread::io::write_trajectory;
use seqread::montecarlo::generate_trajectory;
use seqread::rng::{stream, Domain};
use seqread::{RateSet, State, StateVector, UpdateMatrixSet};

fn nv_matrices() -> UpdateMatrixSet {
    UpdateMatrixSet::build(RateSet::nv_charge(), 5).unwrap()
}

#[test]
fn rates_survive_files_and_fit() {
    let m = nv_matrices();
    let p = 0.98 / (3.6 + 0.98);
    let start = StateVector::new(p, 1.0 - p).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for i in 0..30u64 {
        let mut rng = stream(77, Domain::Calibration, i);
        let t = generate_trajectory(&m, &start, 300_000, &mut rng);
        write_trajectory(&t, dir.path().join(format!("run{i:03}.counts"))).unwrap();
    }
    let trajs = ingest_trajectories(dir.path()).unwrap();
    assert_eq!(trajs.len(), 30);
    let opts = CalibrationOptions {
        split: DataSplit::All,
        rebin: 100,
        subtraj_bins: 10_000,
    };
    let r = calibrate(&trajs, opts).unwrap();
    let rel = |a: f64, b: f64| (a / b - 1.0).abs();
    assert!(rel(r.gamma_plus, 720.0) < 0.03, "{}", r.gamma_plus);
    assert!(rel(r.gamma_minus, 50.0) < 0.03, "{}", r.gamma_minus);
    assert!(rel(r.big_gamma_plus, 3.6) < 0.25, "{}", r.big_gamma_plus);
    assert!(rel(r.big_gamma_minus, 0.98) < 0.25, "{}", r.big_gamma_minus);
    assert!(rel(r.prior_plus, p) < 0.15, "{}", r.prior_plus);
    assert_eq!(r.threshold.rule, 2);
    assert!(r.regime_valid);
}

#[test]
fn injected_preparation_error_is_recovered() {
    let m = nv_matrices();
    let (per_state, bins, eta) = (20_000usize, 250usize, 0.0222);
    let mut readouts: Vec<(State, Vec<u32>)> = Vec::new();
    for (state, init, domain) in [
        (State::Plus, StateVector::plus(), Domain::ChargePlus),
        (State::Minus, StateVector::minus(), Domain::ChargeMinus),
    ] {
        let mut batch: Vec<(State, Vec<u32>)> = (0..per_state as u64)
            .map(|i| {
                let mut rng = stream(8, domain, i);
                (state, generate_trajectory(&m, &init, bins, &mut rng).counts)
            })
            .collect();
        let mut order: Vec<usize> = (0..per_state).collect();
        order.shuffle(&mut stream(8, Domain::Labels, state as u64));
        for &i in &order[..(eta * per_state as f64).round() as usize] {
            batch[i].0 = state.flipped();
        }
        readouts.extend(batch);
    }
    let labeled: Vec<(State, &[u32])> = readouts.iter().map(|(s, c)| (*s, c.as_slice())).collect();
    let measured = labeled_error_curve(&labeled, &m, 1e-4).unwrap();
    let model = model_error_curve(&m, bins, 100_000, 9).unwrap();
    let fit = preparation_error_fit(&measured, &model, None).unwrap();
    assert!((fit.eta - eta).abs() < 0.003, "eta {}", fit.eta);
}

use seqread::gaussian::{simulate_first_passage, FirstPassageOptions};
use seqread::montecarlo::{run_sweep, DecisionMode};
use seqread::{GaussianModel, Priors, RateSet, StoppingRule, SweepConfig, UpdateMatrixSet};

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn sweep_is_independent_of_thread_count() {
    let m = UpdateMatrixSet::build(RateSet::nv_charge(), 5).unwrap();
    let mut c = SweepConfig::new(5_000, 10e-3, Priors::new(0.3).unwrap(), DecisionMode::Map, 42);
    c.plus_gaps.truncate(12);
    c.minus_gaps.truncate(12);
    let one = in_pool(1, || run_sweep(&c, &m).unwrap());
    let four = in_pool(4, || run_sweep(&c, &m).unwrap());
    assert_eq!(one, four);
    for (a, b) in one.adaptive.points.iter().zip(&four.adaptive.points) {
        assert_eq!(a.err_rate.to_bits(), b.err_rate.to_bits());
        assert_eq!(a.avg_time.to_bits(), b.avg_time.to_bits());
    }
    c.master_seed = 43;
    assert_ne!(in_pool(2, || run_sweep(&c, &m).unwrap()), one);
}

#[test]
fn first_passage_is_independent_of_thread_count() {
    let model = GaussianModel::new(1.0).unwrap();
    let rule = StoppingRule::symmetric(2.0, 1.0).unwrap();
    let opts = FirstPassageOptions::for_model(&model, 20_000, 9);
    let a = in_pool(1, || simulate_first_passage(&model, &rule, &opts).unwrap());
    let b = in_pool(3, || simulate_first_passage(&model, &rule, &opts).unwrap());
    assert_eq!(a, b);
}

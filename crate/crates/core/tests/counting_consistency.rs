use seqread::counting::{count_pmf, CountDistributionParams};
use seqread::{RateSet, State, UpdateMatrixSet};

#[test]
fn single_window_count_distribution_matches_charge_model() {
    for t_f in [5e-3, 10e-3, 25e-3] {
        let rates = RateSet::nv_charge().with_dt(t_f).unwrap();
        let m = UpdateMatrixSet::build_auto(rates, 1e-13).unwrap();
        let params = CountDistributionParams::new(rates, t_f).unwrap();
        for (col, state) in [(0usize, State::Plus), (1, State::Minus)] {
            let mut tv = 0.0;
            let mut mass = 0.0;
            for (n, mat) in m.matrices().iter().enumerate() {
                let p_chain = mat[0][col] + mat[1][col];
                let p_int = count_pmf(&params, n as u64, state).unwrap();
                tv += 0.5 * (p_chain - p_int).abs();
                mass += p_int;
            }
            // mass beyond the cutoff counts fully toward the distance
            tv += 0.5 * ((1.0 - mass).max(0.0) + m.tail_mass());
            assert!(tv < 1e-7, "t_f={t_f} {state:?}: tv {tv:e}");
        }
    }
}

//! End-to-end acceptance checks. Each criterion prints one line per check
//! and a final PASS/FAIL line; run with `--nocapture` to see them.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value;

use seqread::counting::{count_pmf, CountDistributionParams};
use seqread::decay::{simulate_decay, ChannelMode, DecayReadout};
use seqread::gaussian::{simulate_first_passage_horizons, FirstPassageOptions, SeriesPolicy};
use seqread::io::{write_labeled_readouts, write_trajectory, LabeledReadouts};
use seqread::montecarlo::generate_trajectory;
use seqread::rng::{stream, Domain};
use seqread::{DecayModel, GaussianModel, RateSet, State, StateVector, StoppingRule, UpdateMatrixSet};

static SERIAL: Mutex<()> = Mutex::new(());

/// Criteria run one at a time so runtimes are measured without contention.
fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

struct Report {
    criterion: u32,
    checks: Vec<(String, bool)>,
}

impl Report {
    fn new(criterion: u32) -> Self {
        Self {
            criterion,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        println!("  [{}] {what}", if ok { "ok" } else { "FAIL" });
        self.checks.push((what, ok));
    }

    fn runtime(&mut self, start: Instant, budget: Duration) {
        let el = start.elapsed();
        self.check(el < budget, format!("runtime {:.1} s < {} s", el.as_secs_f64(), budget.as_secs()));
    }

    fn finish(self) {
        let failed: Vec<&String> = self.checks.iter().filter(|c| !c.1).map(|c| &c.0).collect();
        println!(
            "criterion {}: {}",
            self.criterion,
            if failed.is_empty() { "PASS" } else { "FAIL" }
        );
        assert!(failed.is_empty(), "criterion {} failed: {failed:?}", self.criterion);
    }
}

fn scratch(name: &str) -> PathBuf {
    let p = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&p);
    std::fs::create_dir_all(&p).unwrap();
    p
}

fn seqread(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_seqread"))
        .args(args)
        .env_remove("SEQREAD_THREADS")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "seqread {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn num(v: &Value, path: &[&str]) -> f64 {
    let mut cur = v;
    for k in path {
        cur = &cur[*k];
    }
    cur.as_f64().unwrap_or_else(|| panic!("{path:?} missing in summary"))
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_1_gaussian_asymptotic_speedup() {
    let _g = serial();
    let mut r = Report::new(1);
    let m = GaussianModel::new(1.0).unwrap();
    let eps: Vec<f64> = (2..=12).map(|k| 10f64.powi(-k)).collect();
    let s: Vec<f64> = eps.iter().map(|&e| m.speedup_at_error(e).unwrap()).collect();
    for (e, v) in eps.iter().zip(&s) {
        println!("  eps {e:.0e}: t_f/T = {v:.4}");
    }
    r.check(s.windows(2).all(|w| w[1] > w[0]), "t_f/T strictly increasing as eps decreases");
    r.check(s.iter().all(|&v| v > 1.0 && v < 4.0), "t_f/T within (1, 4)");
    let at8 = s[6];
    r.check((3.0..=4.0).contains(&at8), format!("t_f/T at 1e-8 = {at8:.4} in [3, 4]"));
    r.finish();
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_finite_horizon_series() {
    let _g = serial();
    let start = Instant::now();
    let mut r = Report::new(2);
    let m = GaussianModel::new(1.0).unwrap();
    let horizons = [0.5, 1.0, 2.0, 8.0];
    for (i, lb) in [1.0, 2.0, 4.0].into_iter().enumerate() {
        // one set of paths per threshold, read off at each horizon
        let rule = StoppingRule::symmetric(lb, 8.0).unwrap();
        let mut opts = FirstPassageOptions::for_model(&m, 1_000_000, 100 + i as u64);
        opts.dt_sim = 1e-3;
        let sims = simulate_first_passage_horizons(&m, &rule, &horizons, &opts).unwrap();
        for (t_max, mc) in horizons.into_iter().zip(sims) {
            let a = m.adaptive_error_time_bounded(lb, t_max, SeriesPolicy::default()).unwrap();
            let ze = (mc.error - a.error) / mc.error_se;
            let zt = (mc.time - a.time) / mc.time_se;
            r.check(
                ze.abs() < 3.0 && zt.abs() < 3.0,
                format!(
                    "lambda {lb}, t_M {t_max}: eps {:.5} vs mc {:.5} (z {ze:+.2}); T {:.5} vs mc {:.5} (z {zt:+.2})",
                    a.error, mc.error, a.time, mc.time
                ),
            );
        }
        let b = m.adaptive_error_time_bounded(lb, 1e3, SeriesPolicy::default()).unwrap();
        let u = m.adaptive_error_time_unbounded(lb).unwrap();
        let d = (b.error - u.error).abs().max((b.time - u.time).abs());
        r.check(d < 1e-10, format!("lambda {lb}: r t_M = 1e3 matches unbounded, diff {d:.1e}"));
    }
    r.runtime(start, Duration::from_secs(120));
    r.finish();
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_decay_speedups() {
    let _g = serial();
    let start = Instant::now();
    let mut r = Report::new(3);
    let single = DecayModel::new(1.0, ChannelMode::SingleChannel).unwrap();
    for (k, t_f) in [0.5f64, 1.0, 3.0, 10.0].into_iter().enumerate() {
        let formula = 2.0 * t_f / (t_f + (1.0 - (-t_f).exp()));
        let s = single.speedup(t_f).unwrap();
        let mc = simulate_decay(&single, DecayReadout::Adaptive { t_max: t_f }, 1_000_000, 30 + k as u64).unwrap();
        let want_t = t_f / formula;
        let zt = (mc.time - want_t) / mc.time_se;
        let ze = (mc.error - 0.5 * (-t_f).exp()) / mc.error_se.max(1e-300);
        r.check(
            (s - formula).abs() < 1e-12 && zt.abs() < 3.0 && ze.abs() < 3.0,
            format!(
                "single t_f {t_f}: speedup {formula:.5}, simulated t_f/T {:.5} (z_T {zt:+.2}, z_eps {ze:+.2})",
                t_f / mc.time
            ),
        );
    }
    for t_f in [40.0, 60.0, 100.0, 1000.0] {
        let s = single.speedup(t_f).unwrap();
        r.check(s > 1.9, format!("single t_f {t_f}: speedup {s:.4} > 1.9"));
    }
    let two = DecayModel::new(1.0, ChannelMode::TwoChannel).unwrap();
    for k in 3..=12 {
        let eps = 10f64.powi(-k);
        let t_f = (1.0 / (2.0 * eps)).ln();
        let s = two.speedup(t_f).unwrap();
        let rel = s / (1.0 / (2.0 * eps)).ln() - 1.0;
        r.check(rel.abs() < 0.01, format!("two-channel eps {eps:.0e}: speedup {s:.4}, off ln(1/2eps) by {rel:.2e}"));
    }
    r.runtime(start, Duration::from_secs(60));
    r.finish();
}

// ---------------------------------------------------------------- 4

fn poisson(n: usize, mu: f64) -> f64 {
    let mut p = (-mu).exp();
    for k in 1..=n {
        p *= mu / k as f64;
    }
    p
}

#[test]
fn criterion_4_update_matrices() {
    let _g = serial();
    let mut r = Report::new(4);
    let mut rng = stream(4, Domain::Misc, 0);
    let dn_max = 20;
    let (mut worst_cons, mut worst_fourier, mut tail_ok) = (0.0f64, 0.0f64, true);
    for _ in 0..100 {
        let gp: f64 = rng.random_range(0.0..2.0);
        let gm: f64 = rng.random_range(0.0..2.0);
        let kp: f64 = rng.random_range(0.0..0.5);
        let km: f64 = rng.random_range(0.0..0.5);
        let rates = RateSet::new(gp, gm, kp, km, 1.0).unwrap();
        let m = UpdateMatrixSet::build(rates, dn_max).unwrap();
        let prop = rates.lindbladian().propagator(1.0);
        let sum = m.sum();
        for c in 0..2 {
            // the propagator conserves probability; the matrices miss only the tail
            let missing = (prop[0][c] + prop[1][c]) - (sum[0][c] + sum[1][c]);
            worst_cons = worst_cons.max((prop[0][c] + prop[1][c] - 1.0).abs());
            worst_cons = worst_cons.max((missing - missing.clamp(0.0, m.tail_mass())).abs());
        }
        // counts never outpace a Poisson process at the larger rate
        let mu = gp.max(gm);
        let bound: f64 = 1.0 - (0..=dn_max).map(|n| poisson(n, mu)).sum::<f64>();
        tail_ok &= m.tail_mass() <= bound + 1e-12;
        let f = UpdateMatrixSet::fourier_check(rates, dn_max, 128).unwrap();
        for (a, b) in m.matrices().iter().zip(f.matrices()) {
            for i in 0..2 {
                for j in 0..2 {
                    worst_fourier = worst_fourier.max((a[i][j] - b[i][j]).abs());
                }
            }
        }
    }
    r.check(worst_cons < 1e-12, format!("conservation plus tail, worst {worst_cons:.1e} < 1e-12"));
    r.check(tail_ok, "tail mass within the Poisson bound");
    r.check(worst_fourier < 1e-10, format!("augmented vs Fourier, worst {worst_fourier:.1e} < 1e-10"));
    let mut worst_poisson = 0.0f64;
    for (gp, gm) in [(0.072, 0.005), (1.5, 0.3), (3.0, 0.0)] {
        let m = UpdateMatrixSet::build(RateSet::new(gp, gm, 0.0, 0.0, 1.0).unwrap(), dn_max).unwrap();
        for (n, mat) in m.matrices().iter().enumerate() {
            worst_poisson = worst_poisson
                .max((mat[0][0] - poisson(n, gp)).abs())
                .max((mat[1][1] - poisson(n, gm)).abs())
                .max(mat[0][1].abs())
                .max(mat[1][0].abs());
        }
    }
    r.check(worst_poisson < 1e-12, format!("no switching gives Poisson diagonals, worst {worst_poisson:.1e}"));
    r.finish();
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_counting_matches_charge_model() {
    let _g = serial();
    let mut r = Report::new(5);
    for t_f in [5e-3, 10e-3, 25e-3] {
        let rates = RateSet::nv_charge().with_dt(t_f).unwrap();
        let m = UpdateMatrixSet::build_auto(rates, 1e-13).unwrap();
        let params = CountDistributionParams::new(rates, t_f).unwrap();
        for (col, state) in [(0usize, State::Plus), (1, State::Minus)] {
            let mut tv = 0.0;
            let mut mass = 0.0;
            for (n, mat) in m.matrices().iter().enumerate() {
                let p = count_pmf(&params, n as u64, state).unwrap();
                tv += 0.5 * (mat[0][col] + mat[1][col] - p).abs();
                mass += p;
            }
            tv += 0.5 * ((1.0 - mass).max(0.0) + m.tail_mass());
            r.check(tv < 1e-7, format!("t_f {} ms, {state}: TV {tv:.1e} < 1e-7", t_f * 1e3));
        }
    }
    r.finish();
}

// ---------------------------------------------------------------- 6, 7, 9

const N_TRAJ: u64 = 200_000;

fn frontier_config(prior_plus: f64, mode: &str) -> String {
    format!(
        r#"{{
  "model": {{"gamma_plus": 720.0, "gamma_minus": 50.0, "big_gamma_plus": 3.6,
             "big_gamma_minus": 0.98, "dt": 1e-4, "dn_max": 5}},
  "sweep": {{"n_traj": {N_TRAJ}, "t_max": 0.025, "prior_plus": {prior_plus}, "mode": "{mode}"}},
  "output": {{"prefix": "run"}},
  "seed": 2024
}}"#
    )
}

/// Output directories of completed runs, keyed by (scenario, threads).
fn runs() -> &'static Mutex<HashMap<(String, usize), PathBuf>> {
    static RUNS: OnceLock<Mutex<HashMap<(String, usize), PathBuf>>> = OnceLock::new();
    RUNS.get_or_init(Default::default)
}

fn frontier_run(name: &str, prior_plus: f64, mode: &str, threads: usize) -> PathBuf {
    let key = (name.to_string(), threads);
    if let Some(p) = runs().lock().unwrap().get(&key) {
        return p.clone();
    }
    let dir = scratch(&format!("{name}_t{threads}"));
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, frontier_config(prior_plus, mode)).unwrap();
    let out = dir.join("out");
    seqread(&[
        "--threads",
        &threads.to_string(),
        "frontier",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    runs().lock().unwrap().insert(key, out.clone());
    out
}

fn within(r: &mut Report, what: &str, got: f64, want: f64, tol: f64) {
    r.check((got - want).abs() <= tol, format!("{what} {got:.4} vs {want} +- {tol}"));
}

#[test]
fn criterion_6_equal_prior_frontier() {
    let _g = serial();
    let start = Instant::now();
    let mut r = Report::new(6);
    let s = read_json(&frontier_run("equal", 0.5, "mle", 1).join("run_summary.json"));
    within(&mut r, "counting floor (%)", 100.0 * num(&s, &["minima", "counting", "eps"]), 1.9, 0.3);
    within(&mut r, "MLE floor (%)", 100.0 * num(&s, &["minima", "nonadaptive", "eps"]), 1.5, 0.3);
    within(&mut r, "speedup at counting floor", num(&s, &["speedup_at_target"]), 1.9, 0.3);
    r.runtime(start, Duration::from_secs(900));
    r.finish();
}

#[test]
fn criterion_7_unequal_prior_frontiers() {
    let _g = serial();
    let start = Instant::now();
    let mut r = Report::new(7);
    let s = read_json(&frontier_run("unequal_mle", 0.25, "mle", 1).join("run_summary.json"));
    within(&mut r, "MLE-mode counting floor (%)", 100.0 * num(&s, &["minima", "counting", "eps"]), 1.6, 0.3);
    within(&mut r, "MLE floor (%)", 100.0 * num(&s, &["minima", "nonadaptive", "eps"]), 1.4, 0.3);
    within(&mut r, "MLE speedup", num(&s, &["speedup_at_target"]), 1.6, 0.3);
    let s = read_json(&frontier_run("unequal_map", 0.25, "map", 1).join("run_summary.json"));
    within(&mut r, "MAP floor (%)", 100.0 * num(&s, &["minima", "nonadaptive", "eps"]), 1.3, 0.3);
    within(&mut r, "MAP speedup", num(&s, &["speedup_at_target"]), 1.8, 0.3);
    r.runtime(start, Duration::from_secs(900));
    r.finish();
}

// ---------------------------------------------------------------- 8, 9

const ETA: f64 = 0.0222;

/// 125 stationary-start trajectories of 30 s and labeled 25 ms readouts with
/// a fraction `ETA` of labels flipped in each class.
fn calibration_data() -> &'static (PathBuf, PathBuf) {
    static DATA: OnceLock<(PathBuf, PathBuf)> = OnceLock::new();
    DATA.get_or_init(|| {
        let dir = scratch("calibration_data");
        let traj_dir = dir.join("trajectories");
        std::fs::create_dir_all(&traj_dir).unwrap();
        let m = UpdateMatrixSet::build(RateSet::nv_charge(), 5).unwrap();
        let p = 0.98 / (3.6 + 0.98);
        let start = StateVector::new(p, 1.0 - p).unwrap();
        for i in 0..125u64 {
            let t = generate_trajectory(&m, &start, 300_000, &mut stream(808, Domain::Calibration, i));
            write_trajectory(&t, traj_dir.join(format!("traj{i:03}.counts"))).unwrap();
        }
        let per_state = 40_000usize;
        let mut readouts = Vec::with_capacity(2 * per_state);
        for (state, init, domain) in [
            (State::Plus, StateVector::plus(), Domain::ChargePlus),
            (State::Minus, StateVector::minus(), Domain::ChargeMinus),
        ] {
            let mut batch: Vec<(State, Vec<u32>)> = (0..per_state as u64)
                .map(|i| (state, generate_trajectory(&m, &init, 250, &mut stream(809, domain, i)).counts))
                .collect();
            let mut order: Vec<usize> = (0..per_state).collect();
            order.shuffle(&mut stream(809, Domain::Labels, state as u64));
            for &i in &order[..(ETA * per_state as f64).round() as usize] {
                batch[i].0 = state.flipped();
            }
            readouts.extend(batch);
        }
        let labeled = dir.join("readouts.labeled");
        write_labeled_readouts(&LabeledReadouts { dt: 1e-4, readouts }, &labeled).unwrap();
        (traj_dir, labeled)
    })
}

fn calibrate_run(threads: usize) -> PathBuf {
    let key = ("calibrate".to_string(), threads);
    if let Some(p) = runs().lock().unwrap().get(&key) {
        return p.clone();
    }
    let (traj_dir, labeled) = calibration_data();
    let out = scratch(&format!("calibrate_t{threads}"));
    seqread(&[
        "--threads",
        &threads.to_string(),
        "calibrate",
        traj_dir.to_str().unwrap(),
        "--split",
        "all",
        "--fit-eta",
        "--labeled",
        labeled.to_str().unwrap(),
        "--model-runs",
        "2e5",
        "--seed",
        "5",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    runs().lock().unwrap().insert(key, out.clone());
    out
}

#[test]
fn criterion_8_calibration_round_trip() {
    let _g = serial();
    let start = Instant::now();
    let mut r = Report::new(8);
    let rep = read_json(&calibrate_run(1).join("calibration.json"));
    let c = &rep["calibration"];
    let rel = |got: f64, want: f64| (got / want - 1.0).abs();
    for (key, want, tol) in [
        ("gamma_plus", 720.0, 0.02),
        ("gamma_minus", 50.0, 0.02),
        ("big_gamma_plus", 3.6, 0.10),
        ("big_gamma_minus", 0.98, 0.10),
    ] {
        let got = num(c, &[key]);
        r.check(
            rel(got, want) <= tol,
            format!("{key} {got:.4} vs {want} within {:.0}%", tol * 100.0),
        );
    }
    let nu = num(c, &["threshold", "nu"]);
    let rule = c["threshold"]["rule"].as_u64().unwrap();
    r.check((nu - 2.5).abs() < 0.1 && rule == 2, format!("nu {nu:.3}, rule dn > {rule}"));
    let p_true = 0.98 / (3.6 + 0.98);
    let p = num(c, &["prior_plus"]);
    r.check(rel(p, p_true) <= 0.10, format!("stationary p+ {p:.4} vs {p_true:.4} within 10%"));
    let eta = num(&rep, &["preparation", "eta"]);
    r.check(
        (eta - ETA).abs() <= 0.003,
        format!("fitted eta {:.3}% vs injected {:.2}% +- 0.3 pp", eta * 100.0, ETA * 100.0),
    );
    r.runtime(start, Duration::from_secs(300));
    r.finish();
}

fn same_files(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for n in &names {
        let x = std::fs::read(a.join(n)).unwrap();
        let y = std::fs::read(b.join(n)).map_err(|e| format!("{n:?}: {e}"))?;
        if x != y {
            return Err(format!("{n:?} differs"));
        }
    }
    Ok(names.len())
}

#[test]
fn criterion_9_thread_count_determinism() {
    let _g = serial();
    let mut r = Report::new(9);
    let pairs = [
        ("equal", frontier_run("equal", 0.5, "mle", 1), frontier_run("equal", 0.5, "mle", 3)),
        (
            "unequal_mle",
            frontier_run("unequal_mle", 0.25, "mle", 1),
            frontier_run("unequal_mle", 0.25, "mle", 3),
        ),
        (
            "unequal_map",
            frontier_run("unequal_map", 0.25, "map", 1),
            frontier_run("unequal_map", 0.25, "map", 3),
        ),
        ("calibrate", calibrate_run(1), calibrate_run(4)),
    ];
    for (name, a, b) in pairs {
        match same_files(&a, &b) {
            Ok(n) => r.check(n > 0, format!("{name}: {n} files byte-identical across thread counts")),
            Err(e) => r.check(false, format!("{name}: {e}")),
        }
    }
    r.finish();
}

use dtem::empirical::{Interp, Quantile, TabulatedQuantile};
use dtem::experiments::{
    curvature_spike, error_curve, estimate_reference_quantile, load_reference,
    monotonicity_agreement, psi_curve, run_curve, save_reference, ErrorCurve, ExperimentConfig,
};
use dtem::geometry::{AxisBox, NoiseModel, Shape};

fn segment_cfg(noise: NoiseModel, x: f64, n: usize, trials: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(
        Shape::segment(0.0, 1.0).unwrap(),
        noise,
        vec![x],
        1.0,
        n,
        trials,
        seed,
    )
    .unwrap()
}

#[test]
fn reference_for_uniform_segment_is_within_dkw_band() {
    let mut cfg = segment_cfg(NoiseModel::Noiseless, 0.0, 1000, 1, 3);
    cfg.n_ref = 1_000_000;
    let q = estimate_reference_quantile(&cfg).unwrap();
    let eps = ((2.0f64 / 0.001).ln() / (2.0 * cfg.n_ref as f64)).sqrt();
    let worst = (0..=2000)
        .map(|i| i as f64 / 2000.0)
        .map(|u| (q.eval(u) - u).abs())
        .fold(0.0, f64::max);
    assert!(worst < eps, "sup distance {worst} vs band {eps}");
}

#[test]
fn clutter_reference_has_a_kink_where_the_signal_starts() {
    let region = AxisBox::new(vec![-0.5], vec![1.5]).unwrap();
    let mut cfg = segment_cfg(NoiseModel::Clutter { pi: 0.1, region }, -0.5, 1000, 1, 11);
    cfg.n_ref = 1_000_000;
    let q = estimate_reference_quantile(&cfg).unwrap();
    // clutter mass of the ball reaching the segment: 0.1 * 0.5 / 2
    let (loc, size) = curvature_spike(&q, 0.002, 0.2, 200).unwrap();
    assert!((loc - 0.025).abs() < 0.003, "kink at {loc}, size {size}");
}

#[test]
fn psi_of_uniform_segment_is_square_root() {
    let mut cfg = segment_cfg(NoiseModel::Noiseless, 0.0, 1000, 1, 5);
    cfg.n_ref = 1_000_000;
    let q = estimate_reference_quantile(&cfg).unwrap();
    for (m, p) in psi_curve(&q, &[0.01, 0.1, 0.25, 0.5, 1.0]).unwrap() {
        assert!((p - m.sqrt()).abs() < 0.03, "m = {m}: {p}");
    }
}

#[test]
fn psi_of_point_mass_vanishes() {
    let q = TabulatedQuantile::new(vec![0.0, 1.0], vec![0.7, 0.7], Interp::Linear).unwrap();
    assert!(psi_curve(&q, &[0.01, 0.5, 1.0])
        .unwrap()
        .iter()
        .all(|(_, p)| *p == 0.0));
}

#[test]
fn psi_under_clutter_is_not_monotone() {
    let region = AxisBox::new(vec![-0.5], vec![1.5]).unwrap();
    let cfg = segment_cfg(NoiseModel::Clutter { pi: 0.1, region }, -0.5, 1000, 1, 13);
    let q = estimate_reference_quantile(&cfg).unwrap();
    let psi: Vec<f64> = psi_curve(&q, &cfg.m_grid)
        .unwrap()
        .iter()
        .map(|p| p.1)
        .collect();
    let up = psi.windows(2).any(|w| w[1] > w[0] * 1.05);
    let down = psi.windows(2).any(|w| w[1] < w[0] * 0.95);
    assert!(up && down, "{psi:?}");
}

#[test]
fn error_at_small_mass_matches_holder_rate() {
    let mut cfg = segment_cfg(NoiseModel::Noiseless, 0.0, 1000, 200, 17);
    cfg.m_grid = vec![0.01];
    let run = run_curve(&cfg, false).unwrap();
    let row = &run.curve.rows[0];
    assert_eq!(row.k, 10);
    let rate = (1.0 / 1000f64.sqrt()) * (0.01f64).sqrt();
    let ratio = row.mean_abs_delta / rate;
    assert!((0.125..=8.0).contains(&ratio), "ratio {ratio}");
}

fn mean_std_error(curve: &ErrorCurve) -> f64 {
    curve.rows.iter().map(|r| r.std_error).sum::<f64>() / curve.rows.len() as f64
}

#[test]
fn quadrupling_trials_halves_standard_error() {
    for seed in [1u64, 2, 3] {
        let mut small = segment_cfg(NoiseModel::Noiseless, 0.0, 200, 100, seed);
        small.m_grid = vec![0.05, 0.1, 0.2, 0.4, 0.8];
        let reference = estimate_reference_quantile(&small).unwrap();
        let mut large = small.clone();
        large.trials = 400;
        large.master_seed = seed + 100;
        let a = mean_std_error(&error_curve(&small, &reference).unwrap());
        let b = mean_std_error(&error_curve(&large, &reference).unwrap());
        let ratio = a / b;
        assert!((1.6..=2.4).contains(&ratio), "seed {seed}: ratio {ratio}");
    }
}

#[test]
fn noiseless_segment_error_follows_psi() {
    let mut cfg = segment_cfg(NoiseModel::Noiseless, 0.5, 500, 100, 23);
    cfg.m_grid.retain(|m| *m >= 0.05);
    let run = run_curve(&cfg, false).unwrap();
    assert!(monotonicity_agreement(&run.curve).unwrap() >= 0.8);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut cfg = segment_cfg(NoiseModel::Gaussian { sigma: 0.2 }, 0.3, 300, 40, 29);
    cfg.m_grid = vec![0.02, 0.1, 0.5, 1.0];
    let run_in = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run_curve(&cfg, false).unwrap())
    };
    let a = run_in(1);
    let b = run_in(3);
    assert_eq!(a.reference, b.reference);
    assert_eq!(a.curve.to_csv_string(), b.curve.to_csv_string());
}

#[test]
fn curve_csv_round_trips() {
    let mut cfg = segment_cfg(NoiseModel::Noiseless, 0.5, 100, 10, 31);
    cfg.m_grid = vec![0.1, 0.5, 1.0];
    let run = run_curve(&cfg, false).unwrap();
    let back = ErrorCurve::parse_csv(&run.curve.to_csv_string(), Some(&cfg.digest())).unwrap();
    assert_eq!(back, run.curve);
}

#[test]
fn small_reference_is_rejected() {
    let mut cfg = segment_cfg(NoiseModel::Noiseless, 0.5, 100, 10, 1);
    cfg.n_ref = 500;
    assert!(estimate_reference_quantile(&cfg).is_err());
}

#[test]
fn saved_reference_and_curve_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = segment_cfg(NoiseModel::Noiseless, 0.5, 100, 10, 37);
    cfg.m_grid = vec![0.2, 1.0];
    let run = run_curve(&cfg, false).unwrap();
    let digest = cfg.digest();
    let rpath = dir.path().join("reference.csv");
    save_reference(&run.reference, &digest, &rpath).unwrap();
    assert_eq!(
        load_reference(&rpath, Some(&digest)).unwrap(),
        run.reference
    );
    let cpath = dir.path().join("curve.csv");
    run.curve.save(&cpath).unwrap();
    assert_eq!(ErrorCurve::load(&cpath, None).unwrap(), run.curve);
}

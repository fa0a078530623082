use proptest::prelude::*;

use dtem::config::KeyValues;
use dtem::dtm::{delta, dtem, dtem_mass};
use dtem::empirical::{push_forward, Interp, PowerLawQuantile, Quantile, TabulatedQuantile};
use dtem::experiments::{pairwise_sum, ExperimentConfig};
use dtem::geometry::{NoiseModel, PointCloud, Shape};
use dtem::kdtree::{brute_k_smallest_squared, KdTree};
use dtem::regularity::{least_concave_majorant, ModulusFunction};

fn cloud_strategy(max_n: usize) -> impl Strategy<Value = (PointCloud, Vec<f64>, Vec<f64>)> {
    (1usize..=3, 1usize..=max_n).prop_flat_map(|(d, n)| {
        (
            prop::collection::vec(-2.0f64..2.0, n * d),
            prop::collection::vec(-3.0f64..3.0, d),
            prop::collection::vec(-3.0f64..3.0, d),
        )
            .prop_map(move |(coords, x, y)| (PointCloud::new(d, coords).unwrap(), x, y))
    })
}

fn power() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), Just(2.0), Just(3.0), 1.0f64..4.0]
}

proptest! {
    #[test]
    fn dtm_root_is_one_lipschitz((cloud, x, y) in cloud_strategy(40), r in power(), frac in 0.01f64..1.0) {
        let k = ((frac * cloud.len() as f64).ceil() as usize).clamp(1, cloud.len());
        let a = dtem(&cloud, &x, k, r).unwrap().root;
        let b = dtem(&cloud, &y, k, r).unwrap().root;
        let dist: f64 = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        prop_assert!((a - b).abs() <= dist * (1.0 + 1e-9) + 1e-9, "{a} {b} {dist}");
    }

    #[test]
    fn integrated_dtem_is_convex_and_nondecreasing((cloud, x, _) in cloud_strategy(30), r in power()) {
        let ms: Vec<f64> = (1..=60).map(|i| i as f64 / 60.0).collect();
        let g: Vec<f64> = ms.iter().map(|m| m * dtem_mass(&cloud, &x, *m, r).unwrap().powered).collect();
        let scale = g.last().unwrap().abs().max(1.0);
        for w in g.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12 * scale);
        }
        for w in g.windows(3) {
            prop_assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-10 * scale);
        }
    }

    #[test]
    fn dtem_lies_between_nearest_and_mean((cloud, x, _) in cloud_strategy(40), r in power()) {
        let pf = push_forward(&cloud, &x, r).unwrap();
        let n = cloud.len();
        let mut prev = 0.0;
        for k in 1..=n {
            let v = dtem(&cloud, &x, k, r).unwrap().powered;
            prop_assert!(v >= pf.values()[0] * (1.0 - 1e-12));
            prop_assert!(v >= prev * (1.0 - 1e-12));
            prev = v;
        }
        let mean = pf.values().iter().sum::<f64>() / n as f64;
        prop_assert!((prev - mean).abs() <= 1e-12 * mean.max(1.0));
    }

    #[test]
    fn root_error_is_controlled_by_powered_error(values in prop::collection::vec(0.0f64..1.0, 1..60), r in power(), frac in 0.01f64..1.0) {
        let cloud = PointCloud::from_scalars(&values).unwrap();
        let k = ((frac * values.len() as f64).ceil() as usize).clamp(1, values.len());
        let q = PowerLawQuantile::new(0.0, 1.0, r);
        let d = delta(&cloud, &q, &[0.0], k, r).unwrap();
        prop_assert!(d.delta_tilde.abs() <= d.delta.abs().powf(1.0 / r) + 1e-12);
    }

    #[test]
    fn kd_tree_matches_linear_scan((cloud, x, _) in cloud_strategy(300), frac in 0.0f64..1.0) {
        let k = (frac * cloud.len() as f64) as usize + 1;
        let tree = KdTree::build(&cloud);
        prop_assert_eq!(tree.k_smallest_squared(&x, k), brute_k_smallest_squared(&cloud, &x, k));
    }

    #[test]
    fn majorant_dominates_and_is_idempotent(incs in prop::collection::vec(0.0f64..1.0, 2..80), z in 0.0f64..0.5) {
        let n = incs.len();
        let grid: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
        let mut acc = z;
        let values: Vec<f64> = incs.iter().map(|d| { acc += d; acc }).collect();
        let m = ModulusFunction::new(grid, values, z).unwrap();
        let maj = least_concave_majorant(&m);
        for (a, b) in m.values().iter().zip(maj.values()) {
            prop_assert!(*b >= *a - 1e-12);
        }
        prop_assert!(maj.has_nonincreasing_ratio());
        let again = least_concave_majorant(&maj);
        for (a, b) in maj.values().iter().zip(again.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn tabulated_csv_round_trip_is_exact(incs in prop::collection::vec(0.0f64..10.0, 1..50), linear in any::<bool>()) {
        let n = incs.len();
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let mut acc = 0.0;
        let values: Vec<f64> = std::iter::once(0.0).chain(incs.iter().map(|d| { acc += d; acc })).collect();
        let interp = if linear { Interp::Linear } else { Interp::Step };
        let q = TabulatedQuantile::new(grid, values, interp).unwrap().with_meta(vec![0.25, -1.0], 2.0);
        let (back, _) = TabulatedQuantile::parse_csv(&q.to_csv_string(&[])).unwrap();
        prop_assert_eq!(back, q);
    }

    #[test]
    fn cdf_is_a_generalised_inverse(incs in prop::collection::vec(0.0f64..1.0, 1..40), u in 0.0f64..1.0) {
        let n = incs.len();
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let mut acc = 0.0;
        let values: Vec<f64> = std::iter::once(0.0).chain(incs.iter().map(|d| { acc += d; acc })).collect();
        for interp in [Interp::Linear, Interp::Step] {
            let q = TabulatedQuantile::new(grid.clone(), values.clone(), interp).unwrap();
            prop_assert!(q.cdf(q.eval(u)) >= u - 1e-12);
        }
    }

    #[test]
    fn pairwise_sum_is_accurate(v in prop::collection::vec(-1e3f64..1e3, 0..500)) {
        let exact: f64 = v.iter().sum();
        let scale: f64 = v.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        prop_assert!((pairwise_sum(&v) - exact).abs() <= 1e-12 * scale);
    }

    #[test]
    fn config_text_round_trips(a in -5.0f64..5.0, len in 0.1f64..5.0, x in -10.0f64..10.0, r in 1.0f64..4.0,
                               n in 1usize..5000, trials in 1usize..500, seed in any::<u64>(), sigma in 0.01f64..2.0) {
        let shape = Shape::segment(a, a + len).unwrap();
        let cfg = ExperimentConfig::new(shape, NoiseModel::Gaussian { sigma }, vec![x], r, n, trials, seed).unwrap();
        let kv = KeyValues::parse(&cfg.canonical_text()).unwrap();
        let back = ExperimentConfig::from_key_values(&kv, None).unwrap();
        prop_assert_eq!(back.digest(), cfg.digest());
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn quantile_trait_objects_agree_with_tabulation() {
    let q = PowerLawQuantile::new(0.5, 2.0, 1.0);
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let t = q.tabulate(grid).unwrap();
    for m in [0.05, 0.3, 1.0] {
        assert!((q.integral(m) - t.integral(m)).abs() < 1e-15);
    }
}

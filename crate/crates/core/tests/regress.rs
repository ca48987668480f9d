use physq::regress::{grad_check, mlp_fit, trees_fit, Mlp, TrainConfig, TreeParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gradients_match_finite_differences_on_20_models() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_in = rng.gen_range(1..6);
        let hidden = rng.gen_range(2..10);
        let n_out = rng.gen_range(1..3);
        let m = Mlp::new(&[n_in, hidden, hidden, n_out], &mut rng).unwrap();
        let x: Vec<f64> = (0..n_in).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n_out).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let err = grad_check(&m, &x, &y);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

fn dataset(seed: u64, n: usize, width: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * width).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let y = x
        .chunks(width)
        .map(|r| r.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v.sin()).sum::<f64>())
        .collect();
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tree_predictions_stay_in_target_range(seed in any::<u64>(), n in 1usize..60, probe in prop::array::uniform3(-10.0f64..10.0)) {
        let (x, y) = dataset(seed, n, 3);
        let params = TreeParams { n_estimators: 10, ..TreeParams::default() };
        let t = trees_fit(&x, 3, &y, &params, seed).unwrap();
        let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let p = t.predict(&probe);
        prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
    }

    #[test]
    fn trees_repeat_with_the_same_seed(seed in any::<u64>(), n in 2usize..40) {
        let (x, y) = dataset(seed, n, 2);
        let params = TreeParams { n_estimators: 5, ..TreeParams::default() };
        prop_assert_eq!(trees_fit(&x, 2, &y, &params, seed).unwrap(), trees_fit(&x, 2, &y, &params, seed).unwrap());
    }

    #[test]
    fn networks_repeat_with_the_same_seed(seed in any::<u64>()) {
        let (x, y) = dataset(seed, 30, 2);
        let cfg = TrainConfig { max_epochs: 5, batch_size: 8, seed, ..TrainConfig::default() };
        let fit = || {
            let mut m = Mlp::new(&[2, 6, 1], &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let h = mlp_fit(&mut m, &x, &y, None, &cfg).unwrap();
            (m, h)
        };
        prop_assert_eq!(fit(), fit());
    }
}

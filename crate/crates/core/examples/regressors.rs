//! Fits the network and the extra-trees regressor to a noisy 1-D function
//! and checks the network gradient against finite differences.
//!
//! `cargo run --release --example regressors`

use physq::regress::{grad_check, mlp_fit, trees_fit, Mlp, TrainConfig, TreeParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> physq::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..400).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| v.sin() + 0.05 * rng.gen_range(-1.0..1.0)).collect();

    let mut net = Mlp::new(&[1, 32, 32, 1], &mut rng)?;
    println!("gradient check: max relative error {:.2e}", grad_check(&net, &[0.3], &[0.1]));
    let cfg = TrainConfig {
        learning_rate: 0.01,
        batch_size: 64,
        max_epochs: 300,
        ..TrainConfig::default()
    };
    let hist = mlp_fit(&mut net, &x, &y, None, &cfg)?;
    println!("network: {} epochs, final mse {:.4}", hist.len(), hist.last().copied().unwrap_or(f64::NAN));

    let trees = trees_fit(&x, 1, &y, &TreeParams::default(), 1)?;
    let mse = x.iter().zip(&y).map(|(a, b)| (trees.predict(&[*a]) - b).powi(2)).sum::<f64>() / x.len() as f64;
    println!("extra trees: {} trees, train mse {mse:.4}", trees.trees.len());

    for v in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        println!(
            "x {v:5.1}  sin {:6.3}  net {:6.3}  trees {:6.3}",
            f64::sin(v),
            net.forward(&[v])?[0],
            trees.predict(&[v])
        );
    }
    Ok(())
}

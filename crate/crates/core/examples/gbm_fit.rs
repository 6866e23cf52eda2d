//! Fit the boosted regressor to a noisy 2D function and report the
//! training loss curve and a held-out error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use solver_select::gbm::{BoostedModel, GbmParams, Matrix, Mode};

fn target(x: &[f64]) -> f64 {
    (3.0 * x[0]).sin() + x[1] * x[1]
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sample = |n: usize| {
        let mut m = Matrix::new(2);
        let mut y = Vec::new();
        for _ in 0..n {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            y.push(target(&x) + rng.gen_range(-0.05..0.05));
            m.push_row(&x).unwrap();
        }
        (m, y)
    };
    let (x, y) = sample(2000);
    let (xt, yt) = sample(500);
    let params = GbmParams {
        n_rounds: 200,
        ..Default::default()
    };
    let model = BoostedModel::fit(&x, &y, Mode::Regression, &params).unwrap();
    for (k, l) in model.train_loss.iter().enumerate().step_by(25) {
        println!("round {k:>3}  train loss {l:.5}");
    }
    let mse = (0..xt.rows())
        .map(|i| (model.predict(xt.row(i)).unwrap() - yt[i]).powi(2))
        .sum::<f64>()
        / xt.rows() as f64;
    println!("held-out rmse {:.4}", mse.sqrt());
}

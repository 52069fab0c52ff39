//! The three regressors on a held-out split, configured from TOML.

use deeprep::supervised::{rmse, LearnerConfig};
use deeprep::synthetic::{latent_factor, LatentFactorSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = latent_factor(&LatentFactorSpec { n: 600, p: 30, ..Default::default() })?;
    let (train, test): (Vec<usize>, Vec<usize>) = (0..600).partition(|i| i % 5 != 0);
    let xt = data.x.select_rows(&train);
    let xs = data.x.select_rows(&test);
    let yt: Vec<f64> = train.iter().map(|&i| data.y[i]).collect();
    let ys: Vec<f64> = test.iter().map(|&i| data.y[i]).collect();

    for text in [
        "learner = \"rf\"\nn_trees = 100",
        "learner = \"lasso\"\nlambda = 0.01",
        "learner = \"svm\"\nc = 1.0\nepsilon = 0.1",
    ] {
        let cfg: LearnerConfig = toml::from_str(text)?;
        let model = cfg.fit(&xt, &yt)?;
        println!("{:<6} test RMSE {:.4}", cfg.kind().to_string(), rmse(&ys, &model.predict(&xs)?)?);
    }
    Ok(())
}

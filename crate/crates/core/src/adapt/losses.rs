use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{mlp_forward, penalty_gradients, MlpParams};

fn check_pair(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::validation(format!(
            "batch shapes differ: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::validation("empty batch"));
    }
    Ok(())
}

/// Row-wise `eps_n * x_t + (1 - eps_n) * g_xs` with the given weights.
pub fn interpolate_with(g_xs: ArrayView2<f64>, xt: ArrayView2<f64>, eps: &[f64]) -> Result<Array2<f64>> {
    check_pair(&g_xs, &xt)?;
    if eps.len() != g_xs.nrows() {
        return Err(Error::validation("one interpolation weight per row required"));
    }
    let mut out = g_xs.to_owned();
    for ((mut row, t), &e) in out.outer_iter_mut().zip(xt.outer_iter()).zip(eps) {
        Zip::from(&mut row).and(&t).for_each(|g, &t| *g = e * t + (1.0 - e) * *g);
    }
    Ok(out)
}

/// Interpolates with one uniform `[0, 1]` weight per row.
pub fn interpolate<R: Rng>(g_xs: ArrayView2<f64>, xt: ArrayView2<f64>, rng: &mut R) -> Result<Array2<f64>> {
    let eps: Vec<f64> = (0..g_xs.nrows()).map(|_| rng.random_range(0.0..=1.0)).collect();
    interpolate_with(g_xs, xt, &eps)
}

fn mean_score(critic: &MlpParams, x: ArrayView2<f64>) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::validation("empty batch"));
    }
    if critic.spec.output_dim() != 1 {
        return Err(Error::contract("critic must have a scalar output"));
    }
    let scores = mlp_forward(critic, x)?;
    Ok(scores.iter().sum::<f64>() / x.nrows() as f64)
}

/// Adaptor objective `-E[D(G(x_s))]` on an already adapted batch.
pub fn adaptor_loss(critic: &MlpParams, g_xs: ArrayView2<f64>) -> Result<f64> {
    Ok(-mean_score(critic, g_xs)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticLoss {
    /// Full critic objective including the penalty.
    pub total: f64,
    pub penalty: f64,
    /// Wasserstein estimate `E[D(x_t)] - E[D(G(x_s))]`.
    pub wasserstein: f64,
}

/// Critic objective `E[D(G(x_s))] - E[D(x_t)] + penalty`, or with the first
/// two terms swapped when `paper_sign` is set.
pub fn critic_loss<R: Rng>(
    critic: &MlpParams,
    xt: ArrayView2<f64>,
    g_xs: ArrayView2<f64>,
    lambda_gp: f64,
    paper_sign: bool,
    rng: &mut R,
) -> Result<CriticLoss> {
    check_pair(&g_xs, &xt)?;
    if lambda_gp < 0.0 {
        return Err(Error::validation("lambda_gp must be non-negative"));
    }
    let real = mean_score(critic, xt)?;
    let fake = mean_score(critic, g_xs)?;
    let xhat = interpolate(g_xs, xt, rng)?;
    let penalty = penalty_gradients(critic, xhat.view(), lambda_gp)?.value;
    let wasserstein = real - fake;
    let adversarial = if paper_sign { wasserstein } else { -wasserstein };
    Ok(CriticLoss {
        total: adversarial + penalty,
        penalty,
        wasserstein,
    })
}

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::losses::interpolate;
use super::{AdaptationHyper, Adaptor};
use crate::error::{Error, Result};
use crate::nn::{
    init_mlp, input_gradients, mlp_forward, param_gradients, penalty_gradients, AdamState, InitMode,
    MlpParams,
};
use crate::rng;
use crate::store::EventClass;

/// Per-iteration training record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    /// Wasserstein estimate `E[D(x_t)] - E[D(G(x_s))]` at the last critic step.
    pub critic_objective: Vec<f64>,
    pub penalty: Vec<f64>,
    pub adaptor_loss: Vec<f64>,
}

impl History {
    pub fn len(&self) -> usize {
        self.adaptor_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adaptor_loss.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.critic_objective
            .iter()
            .chain(&self.penalty)
            .chain(&self.adaptor_loss)
            .all(|v| v.is_finite())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,critic_objective,penalty,adaptor_loss\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{i},{},{},{}\n",
                self.critic_objective[i], self.penalty[i], self.adaptor_loss[i]
            ));
        }
        out
    }
}

/// Outcome of adapting one source class onto one target class.
#[derive(Debug, Clone)]
pub struct ClassAdaptation {
    pub source_class: EventClass,
    pub target_class: EventClass,
    pub adaptor: Adaptor,
    pub critic: MlpParams,
    pub history: History,
    pub seed: u64,
    /// Squared distance between the source and target pool means before and
    /// after adaptation.
    pub initial_mean_sq_distance: f64,
    pub final_mean_sq_distance: f64,
    /// Wasserstein estimate of the trained critic over the full pools.
    pub final_objective: f64,
}

fn row_mean(x: ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).expect("non-empty pool")
}

/// Squared Euclidean distance between the row means of two pools.
pub fn class_mean_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let diff = row_mean(a) - row_mean(b);
    diff.dot(&diff)
}

fn sample_rows<R: Rng>(pool: ArrayView2<f64>, n: usize, rng: &mut R) -> Array2<f64> {
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..pool.nrows())).collect();
    pool.select(Axis(0), &idx)
}

fn mean_score(critic: &MlpParams, x: ArrayView2<f64>) -> Result<f64> {
    Ok(mlp_forward(critic, x)?.mean().expect("non-empty batch"))
}

/// Alternating critic/adaptor training for one class pair. Batches are drawn
/// with replacement from the two snippet pools; all randomness derives from
/// `seed` and the class pair.
pub fn train_class_adaptation(
    source: ArrayView2<f64>,
    target: ArrayView2<f64>,
    classes: (EventClass, EventClass),
    hyper: &AdaptationHyper,
    seed: u64,
) -> Result<ClassAdaptation> {
    hyper.validate()?;
    let (sc, tc) = classes;
    if source.nrows() == 0 {
        return Err(Error::validation(format!("source pool for class {sc} is empty")));
    }
    if target.nrows() == 0 {
        return Err(Error::validation(format!("target pool for class {tc} is empty")));
    }
    if source.ncols() != target.ncols() {
        return Err(Error::validation(format!(
            "feature dimensions differ for {sc}->{tc}: {} vs {}",
            source.ncols(),
            target.ncols()
        )));
    }
    let d = source.ncols();
    let label = format!("{sc}->{tc}");
    let mut adaptor = Adaptor::identity(
        &hyper.adaptor_spec(d),
        rng::derive_u64(seed, &["adaptor-init", &label]),
    )?;
    let mut critic = init_mlp(
        &hyper.critic_spec(d),
        InitMode::HeUniform,
        rng::derive_u64(seed, &["critic-init", &label]),
    )?;
    let mut adaptor_opt = AdamState::new(&adaptor.net, hyper.adaptor_adam);
    let mut critic_opt = AdamState::new(&critic, hyper.critic_adam);
    let mut r = rng::stream(seed, &["adapt", &label]);

    let b = hyper.batch_size;
    let sign = if hyper.paper_sign { -1.0 } else { 1.0 };
    let fake_up = Array2::from_elem((b, 1), sign / b as f64);
    let real_up = Array2::from_elem((b, 1), -sign / b as f64);
    let mut history = History::default();

    for _ in 0..hyper.iterations {
        let mut objective = 0.0;
        let mut penalty = 0.0;
        for _ in 0..hyper.critic_steps {
            let xs = sample_rows(source, b, &mut r);
            let xt = sample_rows(target, b, &mut r);
            let gxs = adaptor.apply(xs.view())?;
            objective = mean_score(&critic, xt.view())? - mean_score(&critic, gxs.view())?;
            let xhat = interpolate(gxs.view(), xt.view(), &mut r)?;
            let pen = penalty_gradients(&critic, xhat.view(), hyper.lambda_gp)?;
            let mut grads = param_gradients(&critic, gxs.view(), fake_up.view())?;
            grads.add_assign(&param_gradients(&critic, xt.view(), real_up.view())?);
            grads.add_assign(&pen.grads);
            critic_opt.step(&mut critic, &grads)?;
            penalty = pen.value;
        }

        let xs = sample_rows(source, b, &mut r);
        let gxs = adaptor.apply(xs.view())?;
        let loss = -mean_score(&critic, gxs.view())?;
        // d(-mean D(G(x)))/d(net output) = -grad_x D(G(x)) / b
        let upstream = input_gradients(&critic, gxs.view())? * (-1.0 / b as f64);
        let grads = param_gradients(&adaptor.net, xs.view(), upstream.view())?;
        adaptor_opt.step(&mut adaptor.net, &grads)?;

        history.critic_objective.push(objective);
        history.penalty.push(penalty);
        history.adaptor_loss.push(loss);
    }

    let adapted = adaptor.apply(source)?;
    Ok(ClassAdaptation {
        source_class: sc,
        target_class: tc,
        initial_mean_sq_distance: class_mean_distance(source, target),
        final_mean_sq_distance: class_mean_distance(adapted.view(), target),
        final_objective: mean_score(&critic, target)? - mean_score(&critic, adapted.view())?,
        adaptor,
        critic,
        history,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn pool(n: usize, d: usize, offset: f64, sigma: f64, seed: u64) -> Array2<f64> {
        let mut r = rng::stream(seed, &["pool"]);
        Array2::from_shape_fn((n, d), |(_, j)| {
            let base = if j == 0 { offset } else { 0.0 };
            base + sigma * r.sample::<f64, _>(StandardNormal)
        })
    }

    const PAIR: (EventClass, EventClass) = (EventClass::Shooting, EventClass::Shooting);

    fn hyper(iterations: usize) -> AdaptationHyper {
        AdaptationHyper {
            iterations,
            ..AdaptationHyper::default()
        }
    }

    #[test]
    fn empty_pool_names_the_class() {
        let t = pool(10, 2, 0.0, 1.0, 0);
        let err = train_class_adaptation(Array2::zeros((0, 2)).view(), t.view(), (EventClass::Stabbing, EventClass::Fighting), &AdaptationHyper::default(), 0)
            .unwrap_err();
        assert!(err.to_string().contains("stabbing"), "{err}");
    }

    #[test]
    fn translated_toy_pool_is_pulled_onto_target() {
        // One informative coordinate embedded in d = 4; source = target + 5.
        let target = pool(512, 4, 0.0, 0.1, 1);
        let source = pool(512, 4, 5.0, 0.1, 2);
        let hyper = hyper(6000);
        let out = train_class_adaptation(source.view(), target.view(), PAIR, &hyper, 3).unwrap();
        let adapted = out.adaptor.apply(source.view()).unwrap();
        let gap = (row_mean(adapted.view())[0] - row_mean(target.view())[0]).abs();
        assert!(gap < 0.5, "mean gap after adaptation {gap}");
        assert!(out.history.is_finite());
        assert_eq!(out.history.len(), 6000);
    }

    #[test]
    fn identical_pools_stay_put() {
        let mut r = rng::stream(4, &["pool"]);
        let target = Array2::from_shape_fn((512, 4), |_| 2.0 + 0.25 * r.sample::<f64, _>(StandardNormal));
        let hyper = hyper(2000);
        let out = train_class_adaptation(target.view(), target.view(), PAIR, &hyper, 5).unwrap();
        assert!(out.final_objective.abs() < 0.1, "objective {}", out.final_objective);
        let adapted = out.adaptor.apply(target.view()).unwrap();
        let moved: f64 = (&adapted - &target).outer_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>() / 512.0;
        let scale: f64 = target.outer_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>() / 512.0;
        assert!(moved < 0.2 * scale, "moved {moved} vs scale {scale}");
    }

    #[test]
    fn training_is_deterministic() {
        let s = pool(64, 3, 2.0, 0.5, 6);
        let t = pool(64, 3, 0.0, 0.5, 7);
        let hyper = AdaptationHyper {
            iterations: 20,
            batch_size: 16,
            ..AdaptationHyper::default()
        };
        let a = train_class_adaptation(s.view(), t.view(), PAIR, &hyper, 9).unwrap();
        let b = train_class_adaptation(s.view(), t.view(), PAIR, &hyper, 9).unwrap();
        assert_eq!(a.adaptor, b.adaptor);
        assert_eq!(a.history, b.history);
    }
}



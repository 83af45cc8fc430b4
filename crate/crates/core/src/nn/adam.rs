use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::MlpParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// Settings for the adversarial players at learning rate `lr`.
    pub fn adversarial(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.0,
            beta2: 0.9,
            eps: 1e-8,
        }
    }

    pub fn detector() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: MlpParams,
    pub v: MlpParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// Bias-corrected Adam update applied in place.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.m) {
            return Err(Error::validation("Adam: parameter, gradient and state shapes differ"));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((p, g), m), v) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            Zip::from(&mut p.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(update);
            Zip::from(&mut p.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(update);
        }
        Ok(())
    }
}

/// Pure form of [`AdamState::step`].
pub fn adam_step(params: &MlpParams, grads: &MlpParams, state: &AdamState) -> Result<(MlpParams, AdamState)> {
    let mut p = params.clone();
    let mut s = state.clone();
    s.step(&mut p, grads)?;
    Ok((p, s))
}

#[cfg(test)]
mod tests {
    use super::super::{Activation, MlpSpec};
    use super::*;
    use ndarray::array;

    fn tiny() -> MlpParams {
        // 1 -> 1 linear layer: two parameters (w, b)
        let spec = MlpSpec::new(vec![1, 1], Activation::Relu, Activation::Identity);
        let mut p = MlpParams::zeros(&spec).unwrap();
        p.layers[0].weight = array![[0.5]];
        p.layers[0].bias = array![-0.25];
        p
    }

    fn grads(gw: f64, gb: f64) -> MlpParams {
        let mut g = tiny().zeros_like();
        g.layers[0].weight = array![[gw]];
        g.layers[0].bias = array![gb];
        g
    }

    #[test]
    fn first_step_is_signed_lr() {
        let p = tiny();
        let cfg = AdamConfig::detector();
        let (q, s) = adam_step(&p, &grads(0.3, -2.0), &AdamState::new(&p, cfg)).unwrap();
        let dw = -cfg.lr * 0.3 / (0.3 + cfg.eps);
        let db = -cfg.lr * -2.0 / (2.0 + cfg.eps);
        assert!((q.layers[0].weight[[0, 0]] - (0.5 + dw)).abs() < 1e-15);
        assert!((q.layers[0].bias[0] - (-0.25 + db)).abs() < 1e-15);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let p = tiny();
        let (q, _) = adam_step(&p, &grads(0.0, 0.0), &AdamState::new(&p, AdamConfig::adversarial(1e-4))).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn two_steps_without_momentum_hand_trace() {
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.0,
            beta2: 0.9,
            eps: 0.0,
        };
        let p = tiny();
        let s = AdamState::new(&p, cfg);
        let (p1, s1) = adam_step(&p, &grads(1.0, 2.0), &s).unwrap();
        let (p2, _) = adam_step(&p1, &grads(3.0, -1.0), &s1).unwrap();
        // step 1: update = -0.1 * sign(g)
        // step 2 (w): v = 0.9*0.1*1 + 0.1*9 = 0.99, v_hat = 0.99/0.19, update = -0.1*3/sqrt(v_hat)
        // step 2 (b): v = 0.9*0.1*4 + 0.1*1 = 0.46,  v_hat = 0.46/0.19, update = +0.1*1/sqrt(v_hat)
        let w = 0.5 - 0.1 - 0.1 * 3.0 / (0.99f64 / 0.19).sqrt();
        let b = -0.25 - 0.1 + 0.1 * 1.0 / (0.46f64 / 0.19).sqrt();
        assert!((p2.layers[0].weight[[0, 0]] - w).abs() < 1e-12);
        assert!((p2.layers[0].bias[0] - b).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = tiny();
        let spec = MlpSpec::new(vec![2, 1], Activation::Relu, Activation::Identity);
        let other = MlpParams::zeros(&spec).unwrap();
        assert!(adam_step(&p, &other, &AdamState::new(&p, AdamConfig::detector())).is_err());
    }
}

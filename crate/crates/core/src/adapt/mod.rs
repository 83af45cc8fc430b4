//! Class-wise Wasserstein feature adaptation with gradient penalty.
//!
//! For every (source class, target class) pair a residual adaptor `G` is
//! trained against its own critic `D`. The critic minimizes
//! `E[D(G(x_s))] - E[D(x_t)] + lambda * E[(||grad D(x_hat)|| - 1)^2]` and the
//! adaptor minimizes `-E[D(G(x_s))]`, where `x_hat` interpolates between
//! adapted source and target snippets.

mod dataset;
mod losses;
mod train;

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use dataset::{adapt_dataset, adapt_videos, AdaptedDataset, ADAPTOR_DIR};
pub use losses::{adaptor_loss, critic_loss, interpolate, interpolate_with, CriticLoss};
pub use train::{class_mean_distance, train_class_adaptation, ClassAdaptation, History};

use crate::error::{Error, Result};
use crate::nn::{init_mlp, mlp_forward, Activation, AdamConfig, InitMode, MlpParams, MlpSpec};
use crate::store::EventClass;

/// Source-to-target class pairing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassMap(pub BTreeMap<EventClass, EventClass>);

impl Default for ClassMap {
    fn default() -> Self {
        ClassMap(BTreeMap::from([
            (EventClass::Stabbing, EventClass::Fighting),
            (EventClass::Shooting, EventClass::Shooting),
            (EventClass::Normal, EventClass::Normal),
        ]))
    }
}

impl ClassMap {
    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::validation("class map is empty"));
        }
        let mut targets: Vec<_> = self.0.values().collect();
        targets.sort();
        targets.dedup();
        if targets.len() != self.0.len() {
            return Err(Error::validation("class map must be injective"));
        }
        Ok(())
    }

    pub fn get(&self, source: EventClass) -> Option<EventClass> {
        self.0.get(&source).copied()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (EventClass, EventClass)> + '_ {
        self.0.iter().map(|(s, t)| (*s, *t))
    }
}

impl fmt::Display for ClassMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.pairs().map(|(s, t)| format!("{s}->{t}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptationHyper {
    pub lambda_gp: f64,
    pub critic_steps: usize,
    pub batch_size: usize,
    pub iterations: usize,
    /// Hidden width of the adaptor; `None` means the feature dimension.
    pub adaptor_hidden: Option<usize>,
    pub adaptor_activation: Activation,
    /// Hidden widths of the critic; `None` means `[d, d / 2]`.
    pub critic_hidden: Option<Vec<usize>>,
    pub critic_slope: f64,
    pub adaptor_adam: AdamConfig,
    pub critic_adam: AdamConfig,
    /// Use the discriminator loss with the printed orientation
    /// `E[D(x_t)] - E[D(G(x_s))] + GP` instead of the conventional one.
    pub paper_sign: bool,
}

impl Default for AdaptationHyper {
    fn default() -> Self {
        AdaptationHyper {
            lambda_gp: 10.0,
            critic_steps: 5,
            batch_size: 64,
            iterations: 2000,
            adaptor_hidden: None,
            adaptor_activation: Activation::Relu,
            critic_hidden: None,
            critic_slope: 0.2,
            adaptor_adam: AdamConfig::adversarial(1e-4),
            critic_adam: AdamConfig::adversarial(3e-3),
            paper_sign: false,
        }
    }
}

impl AdaptationHyper {
    pub fn validate(&self) -> Result<()> {
        if self.critic_steps == 0 || self.batch_size == 0 {
            return Err(Error::validation("critic_steps and batch_size must be positive"));
        }
        if !(self.lambda_gp >= 0.0 && self.lambda_gp.is_finite()) {
            return Err(Error::validation("lambda_gp must be finite and non-negative"));
        }
        for cfg in [self.adaptor_adam, self.critic_adam] {
            if !(cfg.lr > 0.0 && (0.0..1.0).contains(&cfg.beta1) && (0.0..1.0).contains(&cfg.beta2)) {
                return Err(Error::validation("invalid Adam settings"));
            }
        }
        Ok(())
    }

    pub fn adaptor_spec(&self, dim: usize) -> MlpSpec {
        let hidden = self.adaptor_hidden.unwrap_or(dim);
        MlpSpec::new(vec![dim, hidden, dim], self.adaptor_activation, Activation::Identity)
    }

    pub fn critic_spec(&self, dim: usize) -> MlpSpec {
        let hidden = self
            .critic_hidden
            .clone()
            .unwrap_or_else(|| vec![dim, (dim / 2).max(1)]);
        let mut sizes = vec![dim];
        sizes.extend(hidden);
        sizes.push(1);
        MlpSpec::new(
            sizes,
            Activation::LeakyRelu {
                slope: self.critic_slope,
            },
            Activation::Identity,
        )
    }
}

/// Residual feature adaptor `G(x) = x + net(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adaptor {
    pub net: MlpParams,
}

impl Adaptor {
    /// Starts as the identity map (zeroed final layer).
    pub fn identity(spec: &MlpSpec, seed: u64) -> Result<Self> {
        if spec.input_dim() != spec.output_dim() {
            return Err(Error::validation("a residual adaptor needs equal input and output width"));
        }
        Ok(Adaptor {
            net: init_mlp(spec, InitMode::ZeroLastLayerResidual, seed)?,
        })
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(mlp_forward(&self.net, x)? + x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn default_map_pairs_classes() {
        let m = ClassMap::default();
        m.validate().unwrap();
        assert_eq!(m.get(EventClass::Stabbing), Some(EventClass::Fighting));
        assert_eq!(m.to_string(), "normal->normal,shooting->shooting,stabbing->fighting");
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"STABBING\":\"FIGHTING\""), "{json}");
    }

    #[test]
    fn non_injective_map_is_rejected() {
        let m = ClassMap(BTreeMap::from([
            (EventClass::Stabbing, EventClass::Fighting),
            (EventClass::Shooting, EventClass::Fighting),
        ]));
        assert!(m.validate().is_err());
    }

    #[test]
    fn fresh_adaptor_is_identity() {
        let hyper = AdaptationHyper::default();
        let g = Adaptor::identity(&hyper.adaptor_spec(3), 5).unwrap();
        let x = array![[1.5, -2.0, 0.25], [0.0, 3.0, -7.0]];
        assert_eq!(g.apply(x.view()).unwrap(), x);
    }

    #[test]
    fn critic_shape_follows_dimension() {
        let spec = AdaptationHyper::default().critic_spec(32);
        assert_eq!(spec.layer_sizes, vec![32, 32, 16, 1]);
    }
}

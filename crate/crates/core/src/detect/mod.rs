//! Reference snippet scorer trained with a top-k MIL ranking objective over
//! video-level labels or with per-snippet cross-entropy.

mod loss;
mod train;

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use loss::{
    mil_loss, mil_loss_and_grad, supervised_loss, supervised_loss_and_grad, topk_indices, topk_mean, MilTerms,
    BCE_CLAMP,
};
pub use train::{train_detector, TrainingCurve};

use crate::error::{Error, Result};
use crate::nn::{mlp_forward, read_checkpoint, write_checkpoint, Activation, AdamConfig, MlpParams, MlpSpec};
use crate::store::SnippetMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    WeakMil,
    Supervised,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "weak" | "weak_mil" | "mil" => Ok(Mode::WeakMil),
            "supervised" => Ok(Mode::Supervised),
            other => Err(Error::validation(format!("unknown training mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorHyper {
    pub mode: Mode,
    /// Hidden widths of the scorer.
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub k: usize,
    pub margin: f64,
    pub lambda_smooth: f64,
    pub lambda_sparse: f64,
    pub epochs: usize,
    /// Video pairs per step in MIL mode; supervised steps draw twice as many
    /// single videos.
    pub batch_pairs: usize,
    pub adam: AdamConfig,
}

impl Default for DetectorHyper {
    fn default() -> Self {
        DetectorHyper {
            mode: Mode::WeakMil,
            hidden: vec![512, 32],
            hidden_activation: Activation::Relu,
            k: 3,
            margin: 1.0,
            lambda_smooth: 8e-5,
            lambda_sparse: 8e-5,
            epochs: 30,
            batch_pairs: 8,
            adam: AdamConfig::detector(),
        }
    }
}

impl DetectorHyper {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::validation("k must be at least 1"));
        }
        if self.batch_pairs == 0 {
            return Err(Error::validation("batch_pairs must be at least 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::validation("scorer hidden widths must be positive"));
        }
        if !(self.margin > 0.0 && self.lambda_smooth > 0.0 && self.lambda_sparse > 0.0)
            || !(self.margin.is_finite() && self.lambda_smooth.is_finite() && self.lambda_sparse.is_finite())
        {
            return Err(Error::validation("margin and regularizer weights must be positive and finite"));
        }
        let a = self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return Err(Error::validation("invalid Adam settings"));
        }
        Ok(())
    }

    pub fn scorer_spec(&self, dim: usize) -> MlpSpec {
        let mut sizes = vec![dim];
        sizes.extend(&self.hidden);
        sizes.push(1);
        MlpSpec::new(sizes, self.hidden_activation, Activation::Sigmoid)
    }

    pub fn mil_terms(&self) -> MilTerms {
        MilTerms {
            margin: self.margin,
            k: self.k,
            lambda_smooth: self.lambda_smooth,
            lambda_sparse: self.lambda_sparse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorProvenance {
    pub seed: u64,
    pub train_videos: usize,
    /// SHA-256 over the sorted training video ids.
    pub train_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub scorer: MlpParams,
    pub hyper: DetectorHyper,
    pub provenance: DetectorProvenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    role: String,
    hyper: DetectorHyper,
    provenance: DetectorProvenance,
}

impl Detector {
    pub fn dim(&self) -> usize {
        self.scorer.spec.input_dim()
    }

    /// Per-snippet anomaly scores in (0, 1) for a `T x d` feature block.
    pub fn score_features(&self, features: ArrayView2<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.dim() {
            return Err(Error::validation(format!(
                "detector expects {}-dimensional features, got {}",
                self.dim(),
                features.ncols()
            )));
        }
        Ok(mlp_forward(&self.scorer, features)?.column(0).to_vec())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            role: "detector".into(),
            hyper: self.hyper.clone(),
            provenance: self.provenance.clone(),
        };
        let text = serde_json::to_string(&header).map_err(|e| Error::Internal(e.to_string()))?;
        write_checkpoint(&self.scorer, &text, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (scorer, text) = read_checkpoint(path)?;
        let header: CheckpointHeader =
            serde_json::from_str(&text).map_err(|e| Error::format(path, format!("detector header: {e}")))?;
        if header.role != "detector" {
            return Err(Error::format(path, format!("checkpoint holds a {}, not a detector", header.role)));
        }
        if scorer.spec != header.hyper.scorer_spec(scorer.spec.input_dim()) {
            return Err(Error::format(path, "scorer layout disagrees with the recorded hyperparameters"));
        }
        Ok(Detector {
            scorer,
            hyper: header.hyper,
            provenance: header.provenance,
        })
    }
}

pub fn score_video(detector: &Detector, matrix: &SnippetMatrix) -> Result<Vec<f64>> {
    let features: Array2<f64> = matrix.to_f64();
    detector.score_features(features.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_mlp, sigmoid, InitMode};
    use rand::Rng;

    fn detector(seed: u64, dim: usize) -> Detector {
        let hyper = DetectorHyper {
            hidden: vec![8, 4],
            ..DetectorHyper::default()
        };
        Detector {
            scorer: init_mlp(&hyper.scorer_spec(dim), InitMode::HeUniform, seed).unwrap(),
            hyper,
            provenance: DetectorProvenance {
                seed,
                train_videos: 0,
                train_digest: String::new(),
            },
        }
    }

    #[test]
    fn zero_scorer_gives_one_half() {
        let mut d = detector(0, 3);
        d.scorer = MlpParams::zeros(&d.scorer.spec).unwrap();
        let m = SnippetMatrix::from_rows(2, 3, vec![1.0, 2.0, 3.0, -4.0, 0.0, 9.0], 16).unwrap();
        assert_eq!(score_video(&d, &m).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn scores_match_manual_composition() {
        let d = detector(3, 5);
        let mut r = crate::rng::stream(1, &[]);
        let x = Array2::from_shape_fn((6, 5), |_| r.random_range(-2.0..2.0));
        let scores = d.score_features(x.view()).unwrap();
        for (row, s) in x.outer_iter().zip(&scores) {
            let mut a = row.to_owned();
            let n = d.scorer.layers.len();
            for (i, layer) in d.scorer.layers.iter().enumerate() {
                let z = layer.weight.dot(&a) + &layer.bias;
                a = if i + 1 == n { z.mapv(sigmoid) } else { z.mapv(|v| v.max(0.0)) };
            }
            assert!((a[0] - s).abs() < 1e-12);
            assert!(*s > 0.0 && *s < 1.0);
        }
        // Row-wise purity: scoring rows separately matches the batch.
        let single = d.score_features(x.slice(ndarray::s![2..3, ..])).unwrap();
        assert_eq!(single[0], scores[2]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let d = detector(0, 3);
        assert!(d.score_features(Array2::zeros((2, 4)).view()).is_err());
    }

    #[test]
    fn checkpoint_round_trip_keeps_header() {
        let dir = tempfile::tempdir().unwrap();
        let d = detector(4, 6);
        let path = dir.path().join("d.mlpw");
        d.save(&path).unwrap();
        let back = Detector::load(&path).unwrap();
        assert_eq!(back.hyper, d.hyper);
        assert_eq!(back.provenance, d.provenance);
        for (a, b) in back.scorer.values().zip(d.scorer.values()) {
            assert_eq!(a, b as f32 as f64);
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("weak".parse::<Mode>().unwrap(), Mode::WeakMil);
        assert_eq!("supervised".parse::<Mode>().unwrap(), Mode::Supervised);
        assert!("strong".parse::<Mode>().is_err());
    }
}

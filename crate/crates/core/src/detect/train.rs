use std::fmt::Write as _;
use std::sync::Arc;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;
use sha2::{Digest, Sha256};

use super::loss::{mil_loss_and_grad, supervised_loss_and_grad};
use super::{Detector, DetectorHyper, DetectorProvenance, Mode};
use crate::error::{Error, Result};
use crate::nn::{init_mlp, mlp_forward, param_gradients, AdamState, InitMode};
use crate::rng;
use crate::store::Video;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCurve {
    pub loss: Vec<f64>,
}

impl TrainingCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.loss.iter().enumerate() {
            writeln!(out, "{i},{l}").expect("writing to a string");
        }
        out
    }
}

fn digest(videos: &[Arc<Video>]) -> String {
    let mut ids: Vec<&str> = videos.iter().map(|v| v.record.id.as_str()).collect();
    ids.sort_unstable();
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn check_inputs(videos: &[Arc<Video>], hyper: &DetectorHyper) -> Result<(Vec<usize>, Vec<usize>)> {
    if videos.is_empty() {
        return Err(Error::validation("no training videos"));
    }
    let dim = videos[0].features.ncols();
    if videos.iter().any(|v| v.features.ncols() != dim) {
        return Err(Error::validation("training videos have different feature dimensions"));
    }
    if let Some(v) = videos.iter().find(|v| v.snippets() < hyper.k) {
        return Err(Error::validation(format!(
            "video {} has {} snippets, fewer than k = {}",
            v.record.id,
            v.snippets(),
            hyper.k
        )));
    }
    let abnormal: Vec<usize> = (0..videos.len()).filter(|&i| videos[i].record.class.is_abnormal()).collect();
    let normal: Vec<usize> = (0..videos.len()).filter(|&i| !videos[i].record.class.is_abnormal()).collect();
    match hyper.mode {
        Mode::WeakMil => {
            if abnormal.is_empty() || normal.is_empty() {
                return Err(Error::validation(format!(
                    "weak MIL training needs abnormal and normal videos, got {} abnormal and {} normal",
                    abnormal.len(),
                    normal.len()
                )));
            }
        }
        Mode::Supervised => {
            if let Some(&i) = abnormal.iter().find(|&&i| videos[i].record.abnormal_ranges.is_empty()) {
                return Err(Error::validation(format!(
                    "supervised training needs frame labels, abnormal video {} has none",
                    videos[i].record.id
                )));
            }
        }
    }
    Ok((abnormal, normal))
}

/// Trains a scorer on in-memory training videos. Every random draw derives
/// from `seed`, so equal inputs give bit-identical detectors.
pub fn train_detector(videos: &[Arc<Video>], hyper: &DetectorHyper, seed: u64) -> Result<(Detector, TrainingCurve)> {
    hyper.validate()?;
    let (abnormal, normal) = check_inputs(videos, hyper)?;
    let dim = videos[0].features.ncols();
    let mut scorer = init_mlp(
        &hyper.scorer_spec(dim),
        InitMode::HeUniform,
        rng::derive_u64(seed, &["detector-init"]),
    )?;
    let mut opt = AdamState::new(&scorer, hyper.adam);
    let mode_tag = format!("{:?}", hyper.mode);
    let mut r = rng::stream(seed, &["detector-train", &mode_tag]);
    let b = hyper.batch_pairs;
    let steps_per_epoch = match hyper.mode {
        Mode::WeakMil => abnormal.len().div_ceil(b),
        Mode::Supervised => videos.len().div_ceil(2 * b),
    };
    let terms = hyper.mil_terms();
    let mut curve = TrainingCurve::default();

    for _ in 0..hyper.epochs * steps_per_epoch {
        let batch: Vec<usize> = match hyper.mode {
            Mode::WeakMil => (0..b)
                .flat_map(|_| {
                    let a = abnormal[r.random_range(0..abnormal.len())];
                    let n = normal[r.random_range(0..normal.len())];
                    [a, n]
                })
                .collect(),
            Mode::Supervised => (0..2 * b).map(|_| r.random_range(0..videos.len())).collect(),
        };
        let blocks: Vec<ArrayView2<f64>> = batch.iter().map(|&i| videos[i].features.view()).collect();
        let x = concatenate(Axis(0), &blocks).expect("equal widths");
        let scores = mlp_forward(&scorer, x.view())?.column(0).to_vec();
        let mut upstream = Array2::zeros((x.nrows(), 1));
        let mut offsets = Vec::with_capacity(batch.len() + 1);
        offsets.push(0);
        for &i in &batch {
            offsets.push(offsets.last().unwrap() + videos[i].snippets());
        }
        let span = |j: usize| offsets[j]..offsets[j + 1];
        let mut total = 0.0;
        match hyper.mode {
            Mode::WeakMil => {
                for p in 0..b {
                    let (ra, rn) = (span(2 * p), span(2 * p + 1));
                    let (l, ga, gn) = mil_loss_and_grad(&scores[ra.clone()], &scores[rn.clone()], &terms)?;
                    total += l;
                    for (row, g) in ra.zip(ga).chain(rn.zip(gn)) {
                        upstream[[row, 0]] += g / b as f64;
                    }
                }
                total /= b as f64;
            }
            Mode::Supervised => {
                for (j, &i) in batch.iter().enumerate() {
                    let rows = span(j);
                    let (l, g) = supervised_loss_and_grad(&scores[rows.clone()], &videos[i].labels)?;
                    total += l;
                    for (row, g) in rows.zip(g) {
                        upstream[[row, 0]] += g / batch.len() as f64;
                    }
                }
                total /= batch.len() as f64;
            }
        }
        let grads = param_gradients(&scorer, x.view(), upstream.view())?;
        opt.step(&mut scorer, &grads)?;
        curve.loss.push(total);
    }

    let detector = Detector {
        scorer,
        hyper: hyper.clone(),
        provenance: DetectorProvenance {
            seed,
            train_videos: videos.len(),
            train_digest: digest(videos),
        },
    };
    Ok((detector, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{EventClass, FrameRange, SnippetMatrix, Split};

    fn toy_video(id: &str, class: EventClass, shift: f64, sigma: f64, seed: u64) -> Arc<Video> {
        use rand_distr::StandardNormal;
        let abnormal = class.is_abnormal();
        let ranges = if abnormal { vec![FrameRange::new(64, 127)] } else { vec![] };
        let mut record = crate::store::fixtures::record(id, class, 0, Split::Train);
        record.abnormal_ranges = ranges;
        record.frame_count = 192;
        let mut r = rng::stream(seed, &[id]);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|t| {
                let hot = abnormal && (4..8).contains(&t);
                (0..4)
                    .map(|j| {
                        let base = if hot && j == 0 { shift } else { 0.0 };
                        base + sigma * r.sample::<f64, _>(StandardNormal)
                    })
                    .collect()
            })
            .collect();
        let flat: Vec<f64> = rows.concat();
        let m = SnippetMatrix::from_f64(&ndarray::Array2::from_shape_vec((12, 4), flat).unwrap(), 16).unwrap();
        Arc::new(Video::new(record, &m).unwrap())
    }

    fn toy_set(sigma: f64) -> Vec<Arc<Video>> {
        let mut v = Vec::new();
        for i in 0..6 {
            v.push(toy_video(&format!("a{i}"), EventClass::Shooting, 3.0, sigma, i));
            v.push(toy_video(&format!("n{i}"), EventClass::Normal, 0.0, sigma, 100 + i));
        }
        v
    }

    fn small(mode: Mode) -> DetectorHyper {
        DetectorHyper {
            mode,
            hidden: vec![16, 8],
            epochs: 40,
            batch_pairs: 2,
            ..DetectorHyper::default()
        }
    }

    fn training_auc(videos: &[Arc<Video>], hyper: &DetectorHyper, seed: u64) -> f64 {
        let (d, curve) = train_detector(videos, hyper, seed).unwrap();
        assert!(curve.loss.iter().all(|l| l.is_finite()));
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for v in videos {
            scores.extend(d.score_features(v.features.view()).unwrap());
            labels.extend(&v.labels);
        }
        crate::eval::roc_auc(&scores, &labels).unwrap()
    }

    #[test]
    fn supervised_separates_noiseless_toy_data() {
        let videos = toy_set(0.0);
        for seed in 0..3 {
            assert_eq!(training_auc(&videos, &small(Mode::Supervised), seed), 1.0);
        }
    }

    #[test]
    fn weak_mil_separates_noisy_toy_data() {
        assert_eq!(training_auc(&toy_set(0.5), &small(Mode::WeakMil), 0), 1.0);
    }

    #[test]
    fn weak_training_needs_both_classes() {
        let only_abnormal: Vec<_> = toy_set(0.1).into_iter().filter(|v| v.record.class.is_abnormal()).collect();
        let err = train_detector(&only_abnormal, &small(Mode::WeakMil), 0).unwrap_err();
        assert!(err.to_string().contains("normal"), "{err}");
    }

    #[test]
    fn supervised_training_needs_frame_labels() {
        let mut videos = toy_set(0.1);
        let mut stripped = (*videos[0]).clone();
        stripped.record.abnormal_ranges.clear();
        videos[0] = Arc::new(stripped);
        assert!(train_detector(&videos, &small(Mode::Supervised), 0).is_err());
    }

    #[test]
    fn equal_seeds_give_identical_checkpoints() {
        let videos = toy_set(0.2);
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = Vec::new();
        for name in ["a", "b"] {
            let (d, _) = train_detector(&videos, &small(Mode::WeakMil), 5).unwrap();
            let p = dir.path().join(name);
            d.save(&p).unwrap();
            bytes.push(std::fs::read(p).unwrap());
        }
        assert_eq!(bytes[0], bytes[1]);
    }
}

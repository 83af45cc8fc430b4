use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::auc::roc_auc;
use crate::detect::Detector;
use crate::error::{Error, Result};
use crate::store::{broadcast_to_frames, frame_labels, Dataset, EventClass, Split, Video};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    #[default]
    Max,
    Mean,
}

impl std::str::FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Fusion::Max),
            "mean" => Ok(Fusion::Mean),
            other => Err(Error::validation(format!("fusion must be max or mean, got '{other}'"))),
        }
    }
}

impl Fusion {
    fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            Fusion::Max => a.max(b),
            Fusion::Mean => 0.5 * (a + b),
        }
    }
}

/// Which views make up the headline number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSelect {
    #[default]
    Fused,
    View0,
    View1,
}

impl std::str::FromStr for ViewSelect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(ViewSelect::Fused),
            "0" | "view0" => Ok(ViewSelect::View0),
            "1" | "view1" => Ok(ViewSelect::View1),
            other => Err(Error::validation(format!("view must be 0, 1 or fused, got '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub view: ViewSelect,
    pub fusion: Fusion,
    /// Score both views as independent test videos instead of fusing them.
    pub concatenate_views: bool,
    /// Keep only abnormal videos of this class (normal videos always stay).
    pub category: Option<EventClass>,
}

/// AUCs of one detector on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub overall: f64,
    pub per_view: [f64; 2],
    /// Average of the two per-view AUCs.
    pub single_view: f64,
    pub per_category: BTreeMap<EventClass, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<AucSummary>,
    pub mean: AucSummary,
}

struct Scored {
    video: Arc<Video>,
    frames: Vec<f64>,
    labels: Vec<u8>,
}

fn score_all(detector: &Detector, videos: &[Arc<Video>]) -> Result<Vec<Scored>> {
    videos
        .par_iter()
        .map(|v| {
            let snippets = detector.score_features(v.features.view())?;
            let n = v.evaluated_frames();
            Ok(Scored {
                video: Arc::clone(v),
                frames: broadcast_to_frames(&snippets, v.snippet_len, n),
                labels: frame_labels(&v.record.abnormal_ranges, n),
            })
        })
        .collect()
}

fn pooled_auc<'a>(units: impl Iterator<Item = (Vec<f64>, &'a [u8])>) -> Result<f64> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (s, l) in units {
        scores.extend(s);
        labels.extend_from_slice(l);
    }
    if scores.is_empty() {
        return Err(Error::validation("no test videos left after filtering"));
    }
    roc_auc(&scores, &labels)
}

fn view_auc(scored: &[&Scored], view: u8) -> Result<f64> {
    pooled_auc(
        scored
            .iter()
            .filter(|s| s.video.record.view == view)
            .map(|s| (s.frames.clone(), s.labels.as_slice())),
    )
}

fn fused_auc(scored: &[&Scored], fusion: Fusion) -> Result<f64> {
    let mut incidents: BTreeMap<&str, [Option<&Scored>; 2]> = BTreeMap::new();
    for s in scored {
        let slot = incidents.entry(s.video.record.incident_id.as_str()).or_default();
        slot[s.video.record.view as usize] = Some(s);
    }
    let mut units = Vec::with_capacity(incidents.len());
    for (id, pair) in &incidents {
        let (Some(a), Some(b)) = (pair[0], pair[1]) else {
            return Err(Error::validation(format!("incident {id} is missing a view, cannot fuse")));
        };
        if a.frames.len() != b.frames.len() || a.labels != b.labels {
            return Err(Error::validation(format!("views of incident {id} disagree on frames or labels")));
        }
        let fused: Vec<f64> = a.frames.iter().zip(&b.frames).map(|(x, y)| fusion.combine(*x, *y)).collect();
        units.push((fused, a.labels.as_slice()));
    }
    pooled_auc(units.into_iter())
}

fn headline(scored: &[&Scored], opts: &EvalOptions) -> Result<f64> {
    if opts.concatenate_views {
        return pooled_auc(scored.iter().map(|s| (s.frames.clone(), s.labels.as_slice())));
    }
    match opts.view {
        ViewSelect::Fused => fused_auc(scored, opts.fusion),
        ViewSelect::View0 => view_auc(scored, 0),
        ViewSelect::View1 => view_auc(scored, 1),
    }
}

/// Frame-level AUCs of `detector` on in-memory test videos.
pub fn evaluate_videos(detector: &Detector, videos: &[Arc<Video>], opts: &EvalOptions) -> Result<AucSummary> {
    let kept: Vec<Arc<Video>> = videos
        .iter()
        .filter(|v| match opts.category {
            Some(c) => !v.record.class.is_abnormal() || v.record.class == c,
            None => true,
        })
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::validation("no test videos left after filtering"));
    }
    let scored = score_all(detector, &kept)?;
    let all: Vec<&Scored> = scored.iter().collect();
    let per_view = [view_auc(&all, 0)?, view_auc(&all, 1)?];
    let mut per_category = BTreeMap::new();
    let categories: std::collections::BTreeSet<EventClass> = kept
        .iter()
        .map(|v| v.record.class)
        .filter(|c| c.is_abnormal())
        .collect();
    for c in categories {
        let subset: Vec<&Scored> = scored
            .iter()
            .filter(|s| !s.video.record.class.is_abnormal() || s.video.record.class == c)
            .collect();
        per_category.insert(c, headline(&subset, opts)?);
    }
    Ok(AucSummary {
        overall: headline(&all, opts)?,
        per_view,
        single_view: 0.5 * (per_view[0] + per_view[1]),
        per_category,
    })
}

/// Evaluates on the TEST split of `test`; the report carries the detector's
/// training seed as its single entry.
pub fn evaluate(detector: &Detector, test: &Dataset, opts: &EvalOptions) -> Result<AucReport> {
    let videos = test.load_split(Split::Test)?;
    let summary = evaluate_videos(detector, &videos, opts)?;
    Ok(AucReport {
        seeds: vec![detector.provenance.seed],
        per_seed: vec![summary.clone()],
        mean: summary,
    })
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pools the per-seed entries of several reports and recomputes the mean.
/// Values are summed in sorted order, so the mean does not depend on the
/// order of the reports.
pub fn multi_seed_average(reports: &[AucReport]) -> Result<AucReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::validation("cannot average zero reports"))?;
    let mut seeds = Vec::new();
    let mut per_seed: Vec<AucSummary> = Vec::new();
    for r in reports {
        if r.seeds.len() != r.per_seed.len() {
            return Err(Error::validation("report has mismatched seeds and entries"));
        }
        seeds.extend(&r.seeds);
        per_seed.extend(r.per_seed.iter().cloned());
    }
    let keys: Vec<EventClass> = first.mean.per_category.keys().copied().collect();
    if per_seed
        .iter()
        .any(|s| !s.per_category.keys().copied().eq(keys.iter().copied()))
    {
        return Err(Error::validation("reports cover different categories"));
    }
    let per_view = [
        mean_of(per_seed.iter().map(|s| s.per_view[0])),
        mean_of(per_seed.iter().map(|s| s.per_view[1])),
    ];
    let mean = AucSummary {
        overall: mean_of(per_seed.iter().map(|s| s.overall)),
        per_view,
        single_view: mean_of(per_seed.iter().map(|s| s.single_view)),
        per_category: keys
            .iter()
            .map(|k| (*k, mean_of(per_seed.iter().map(|s| s.per_category[k]))))
            .collect(),
    };
    Ok(AucReport { seeds, per_seed, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{DetectorHyper, DetectorProvenance};
    use crate::nn::{MlpParams, MlpSpec};
    use crate::store::fixtures::record;
    use crate::store::SnippetMatrix;

    /// Identity-like scorer on one feature: output = sigmoid(x0).
    fn passthrough(dim: usize) -> Detector {
        let hyper = DetectorHyper {
            hidden: vec![],
            ..DetectorHyper::default()
        };
        let spec: MlpSpec = hyper.scorer_spec(dim);
        let mut p = MlpParams::zeros(&spec).unwrap();
        p.layers[0].weight[[0, 0]] = 1.0;
        Detector {
            scorer: p,
            hyper,
            provenance: DetectorProvenance {
                seed: 3,
                train_videos: 0,
                train_digest: String::new(),
            },
        }
    }

    fn video(id: &str, class: EventClass, view: u8, values: &[f64]) -> Arc<Video> {
        let mut r = record(id, class, view, Split::Test);
        r.incident_id = id[..id.len() - 1].to_string();
        r.frame_count = (values.len() * 16) as u32;
        if class.is_abnormal() {
            r.abnormal_ranges = vec![crate::store::FrameRange::new(16, (16 * values.len() as u32 - 1).min(47))];
        }
        let data: Vec<f32> = values.iter().flat_map(|&v| [v as f32, 0.0]).collect();
        Arc::new(Video::new(r, &SnippetMatrix::from_rows(values.len(), 2, data, 16).unwrap()).unwrap())
    }

    #[test]
    fn constant_detector_scores_one_half_everywhere() {
        let mut d = passthrough(2);
        d.scorer.layers[0].weight.fill(0.0);
        let vids = vec![
            video("s1a", EventClass::Shooting, 0, &[0.0, 1.0, 1.0, 0.0]),
            video("s1b", EventClass::Shooting, 1, &[0.0, 1.0, 1.0, 0.0]),
            video("n1a", EventClass::Normal, 0, &[0.0; 4]),
            video("n1b", EventClass::Normal, 1, &[0.0; 4]),
        ];
        let s = evaluate_videos(&d, &vids, &EvalOptions::default()).unwrap();
        assert_eq!(s.overall, 0.5);
        assert_eq!(s.per_view, [0.5, 0.5]);
        assert!(s.per_category.values().all(|&v| v == 0.5));
    }

    #[test]
    fn overall_is_not_the_average_of_categories() {
        let d = passthrough(2);
        let vids = vec![
            video("s1a", EventClass::Shooting, 0, &[0.0, 3.0, 3.0, 0.0]),
            video("s1b", EventClass::Shooting, 1, &[0.0, 3.0, 3.0, 0.0]),
            video("t1a", EventClass::Stabbing, 0, &[0.0, 0.5, 0.2, 0.0]),
            video("t1b", EventClass::Stabbing, 1, &[0.0, 0.5, 0.2, 0.0]),
            video("n1a", EventClass::Normal, 0, &[0.1, 0.4, 1.0, 0.3]),
            video("n1b", EventClass::Normal, 1, &[0.1, 0.4, 1.0, 0.3]),
        ];
        let s = evaluate_videos(&d, &vids, &EvalOptions::default()).unwrap();
        let avg = s.per_category.values().sum::<f64>() / s.per_category.len() as f64;
        assert_eq!(s.per_category.len(), 2);
        assert_ne!(s.overall, avg);
    }

    #[test]
    fn fusion_beats_views_with_complementary_corruption() {
        let d = passthrough(2);
        // Abnormal snippets 1 and 2; each view loses one of them.
        let vids = vec![
            video("s1a", EventClass::Shooting, 0, &[0.0, 2.0, -1.0, 0.0]),
            video("s1b", EventClass::Shooting, 1, &[0.0, -1.0, 2.0, 0.0]),
            video("s2a", EventClass::Shooting, 0, &[0.0, -1.0, 2.0, 0.0]),
            video("s2b", EventClass::Shooting, 1, &[0.0, 2.0, -1.0, 0.0]),
            video("n1a", EventClass::Normal, 0, &[0.0, 0.5, 0.0, 0.0]),
            video("n1b", EventClass::Normal, 1, &[0.0, 0.0, 0.5, 0.0]),
        ];
        let s = evaluate_videos(&d, &vids, &EvalOptions::default()).unwrap();
        assert!(s.overall >= s.per_view[0] && s.overall >= s.per_view[1]);
        assert!(s.overall > s.single_view);
        assert_eq!(s.overall, 1.0);
    }

    #[test]
    fn missing_view_blocks_fusion_but_not_single_view() {
        let d = passthrough(2);
        let vids = vec![
            video("s1a", EventClass::Shooting, 0, &[0.0, 2.0]),
            video("n1a", EventClass::Normal, 0, &[0.0, 0.5]),
            video("n1b", EventClass::Normal, 1, &[0.0, 0.5]),
        ];
        let err = evaluate_videos(&d, &vids, &EvalOptions::default()).unwrap_err();
        assert!(err.to_string().contains("missing a view") || err.to_string().contains("both classes"), "{err}");
        let opts = EvalOptions {
            view: ViewSelect::View0,
            ..EvalOptions::default()
        };
        let scored = score_all(&d, &vids).unwrap();
        let refs: Vec<&Scored> = scored.iter().collect();
        assert!(headline(&refs, &opts).is_ok());
        assert!(fused_auc(&refs, Fusion::Max).is_err());
    }

    #[test]
    fn category_filter_and_empty_set() {
        let d = passthrough(2);
        let vids = vec![
            video("s1a", EventClass::Shooting, 0, &[0.0, 2.0]),
            video("s1b", EventClass::Shooting, 1, &[0.0, 2.0]),
        ];
        let opts = EvalOptions {
            category: Some(EventClass::Stabbing),
            ..EvalOptions::default()
        };
        assert!(evaluate_videos(&d, &vids, &opts).is_err());
        assert!(evaluate_videos(&d, &[], &EvalOptions::default()).is_err());
    }

    fn summary(v: f64) -> AucSummary {
        AucSummary {
            overall: v,
            per_view: [v, v],
            single_view: v,
            per_category: [(EventClass::Shooting, v)].into_iter().collect(),
        }
    }

    fn report(seed: u64, v: f64) -> AucReport {
        AucReport {
            seeds: vec![seed],
            per_seed: vec![summary(v)],
            mean: summary(v),
        }
    }

    #[test]
    fn averaging_examples() {
        let one = multi_seed_average(&[report(1, 0.7)]).unwrap();
        assert_eq!(one.mean, summary(0.7));
        let two = multi_seed_average(&[report(1, 0.8), report(2, 0.9)]).unwrap();
        assert!((two.mean.overall - 0.85).abs() < 1e-15);
        assert_eq!(two.seeds, vec![1, 2]);
        assert!(multi_seed_average(&[]).is_err());
        let mut odd = report(3, 0.5);
        odd.per_seed[0].per_category.insert(EventClass::Fighting, 0.5);
        assert!(multi_seed_average(&[report(1, 0.8), odd]).is_err());
    }

    #[test]
    fn averaging_ignores_order() {
        let rs = [report(1, 0.61), report(2, 0.73), report(3, 0.97), report(4, 0.1)];
        let a = multi_seed_average(&rs).unwrap();
        let b = multi_seed_average(&[rs[3].clone(), rs[1].clone(), rs[0].clone(), rs[2].clone()]).unwrap();
        assert_eq!(a.mean, b.mean);
        let direct: f64 = a.per_seed.iter().map(|s| s.overall).sum::<f64>() / 4.0;
        assert!((a.mean.overall - direct).abs() < 1e-15);
    }
}

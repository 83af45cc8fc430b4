use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::train::{train_class_adaptation, ClassAdaptation};
use super::{AdaptationHyper, ClassMap};
use crate::error::{Error, Result, ResultExt};
use crate::nn::write_checkpoint;
use crate::store::{write_feature_file, Dataset, EventClass, Manifest, SnippetMatrix, Split, Video, MANIFEST_FILE};

pub const ADAPTOR_DIR: &str = "adaptors";

fn stack(videos: &[&Arc<Video>]) -> Array2<f64> {
    let views: Vec<ArrayView2<f64>> = videos.iter().map(|v| v.features.view()).collect();
    concatenate(Axis(0), &views).expect("equal widths")
}

fn by_class(videos: &[Arc<Video>]) -> BTreeMap<EventClass, Vec<&Arc<Video>>> {
    let mut map: BTreeMap<EventClass, Vec<&Arc<Video>>> = BTreeMap::new();
    for v in videos {
        map.entry(v.record.class).or_default().push(v);
    }
    map
}

/// Trains one adaptor per class pair on the given TRAIN videos and returns
/// the adapted source videos (at storage precision) with the per-class
/// results. Source videos from other splits are ignored.
pub fn adapt_videos(
    source: &[Arc<Video>],
    target: &[Arc<Video>],
    class_map: &ClassMap,
    hyper: &AdaptationHyper,
    seed: u64,
) -> Result<(Vec<Arc<Video>>, Vec<ClassAdaptation>)> {
    class_map.validate()?;
    hyper.validate()?;
    let source: Vec<Arc<Video>> = source.iter().filter(|v| v.record.split == Split::Train).cloned().collect();
    let target: Vec<Arc<Video>> = target.iter().filter(|v| v.record.split == Split::Train).cloned().collect();
    let src_classes = by_class(&source);
    let tgt_classes = by_class(&target);
    for class in src_classes.keys() {
        if class_map.get(*class).is_none() {
            return Err(Error::validation(format!("source class {class} is not covered by the class map")));
        }
    }
    let dims: Vec<usize> = source.iter().chain(&target).map(|v| v.features.ncols()).collect();
    if dims.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::validation("source and target feature dimensions differ"));
    }

    let mut jobs = Vec::new();
    for (sc, tc) in class_map.pairs() {
        let s = src_classes
            .get(&sc)
            .ok_or_else(|| Error::validation(format!("mapped source class {sc} has no TRAIN videos")))?;
        let t = tgt_classes
            .get(&tc)
            .ok_or_else(|| Error::validation(format!("mapped target class {tc} has no TRAIN videos")))?;
        jobs.push((sc, tc, stack(s), stack(t)));
    }
    let results: Vec<ClassAdaptation> = jobs
        .par_iter()
        .map(|(sc, tc, s, t)| {
            train_class_adaptation(s.view(), t.view(), (*sc, *tc), hyper, seed)
                .with_context(|| format!("adapting {sc} -> {tc}"))
        })
        .collect::<Result<_>>()?;

    let adapted = source
        .par_iter()
        .map(|v| {
            let cls = results
                .iter()
                .find(|c| c.source_class == v.record.class)
                .expect("every source class is mapped");
            let out = cls.adaptor.apply(v.features.view())?;
            let matrix = SnippetMatrix::from_f64(&out, v.snippet_len)?;
            Ok(Arc::new(Video::new(v.record.clone(), &matrix)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((adapted, results))
}

#[derive(Debug)]
pub struct AdaptedDataset {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    pub videos: Vec<Arc<Video>>,
    pub classes: Vec<ClassAdaptation>,
}

/// Adapts every source TRAIN video and writes the result as a new dataset
/// under `out`: features, a manifest holding only the TRAIN records, one
/// adaptor checkpoint and one training-history CSV per class pair.
pub fn adapt_dataset(
    source: &Dataset,
    target: &Dataset,
    class_map: &ClassMap,
    hyper: &AdaptationHyper,
    seed: u64,
    out: &Path,
) -> Result<AdaptedDataset> {
    let (sm, tm) = (source.manifest(), target.manifest());
    if sm.dim != tm.dim {
        return Err(Error::validation(format!(
            "source dimension {} differs from target dimension {}",
            sm.dim, tm.dim
        )));
    }
    let src_train = source.load_split(Split::Train)?;
    let tgt_train = target.load_split(Split::Train)?;
    let (videos, classes) = adapt_videos(&src_train, &tgt_train, class_map, hyper, seed)?;

    let ckpt_dir = out.join(ADAPTOR_DIR);
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    let mut records = Vec::with_capacity(videos.len());
    for v in &videos {
        let path = out.join(&v.record.feature_path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_feature_file(&SnippetMatrix::from_f64(&v.features, v.snippet_len)?, &path)?;
        records.push(v.record.clone());
    }
    let hyper_json = serde_json::to_value(hyper).map_err(|e| Error::Internal(e.to_string()))?;
    for c in &classes {
        let stem = format!("{}-to-{}", c.source_class, c.target_class);
        let prov = serde_json::json!({
            "role": "adaptor",
            "source_class": c.source_class,
            "target_class": c.target_class,
            "seed": seed,
        });
        write_checkpoint(&c.adaptor.net, &prov.to_string(), &ckpt_dir.join(format!("{stem}.mlpw")))?;
        let hist = ckpt_dir.join(format!("{stem}.history.csv"));
        fs::write(&hist, c.history.to_csv()).map_err(|e| Error::io(&hist, e))?;
    }

    let mut manifest = Manifest::new(sm.dim, sm.snippet_len, records);
    manifest.provenance = Some(serde_json::json!({
        "stage": "adapt",
        "seed": seed,
        "hyper": hyper_json,
        "class_map": class_map,
        "source_provenance": sm.provenance,
        "per_class": classes.iter().map(|c| serde_json::json!({
            "source_class": c.source_class,
            "target_class": c.target_class,
            "initial_mean_sq_distance": c.initial_mean_sq_distance,
            "final_mean_sq_distance": c.final_mean_sq_distance,
            "final_objective": c.final_objective,
        })).collect::<Vec<_>>(),
    }));
    let manifest_path = out.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;
    Ok(AdaptedDataset {
        manifest_path,
        manifest,
        videos,
        classes,
    })
}

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{assign_location, sample_config, GenerationSpec, LocationAssignment, SceneConfig, SceneWorld, ShiftSpec, SnippetState};
use crate::error::{Error, Result};
use crate::rng;
use crate::store::{
    snippet_labels, write_feature_file, Domain, EventClass, Manifest, SnippetMatrix, Split, VideoRecord,
    MANIFEST_FILE,
};

pub const SOURCE_DIR: &str = "source";
pub const TARGET_DIR: &str = "target";
pub const SHIFT_FILE: &str = "shift.json";
const FEATURE_DIR: &str = "features";

/// Identity of one filmed scene.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidentMeta {
    pub incident_id: String,
    pub domain: Domain,
    pub split: Split,
}

impl IncidentMeta {
    pub fn video_id(&self, view: u8) -> String {
        format!("{}-v{view}", self.incident_id)
    }
}

/// Step 3: synthesizes both camera views of one scene.
///
/// Snippet `t` of view `v` has mean `prototype(class, state_t) + roi +
/// conditions + view_offset_v`; when `shift` is given that mean is mapped
/// through it, then `noise_sigma` Gaussian noise is added. Both views share
/// configuration, timing and labels.
#[allow(clippy::too_many_arguments)]
pub fn generate_video<R: Rng>(
    world: &SceneWorld,
    config: &SceneConfig,
    assignment: &LocationAssignment,
    meta: &IncidentMeta,
    shift: Option<&ShiftSpec>,
    snippet_len: usize,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<[(VideoRecord, SnippetMatrix); 2]> {
    let d = world.dim;
    let dims_ok = assignment.roi_offset.len() == d
        && assignment.view_offsets.iter().all(|v| v.len() == d)
        && shift.is_none_or(|s| s.dim == d);
    if !dims_ok {
        return Err(Error::validation(format!(
            "feature dimension mismatch: world has d={d}"
        )));
    }
    let window = config.effective_window();
    let ranges: Vec<_> = window.into_iter().collect();
    let labels = snippet_labels(&ranges, config.frame_count, snippet_len)?;

    let mut base = Array2::<f64>::zeros((labels.len(), d));
    let shared = &assignment.roi_offset + &world.condition_offset(config.weather, config.time_of_day);
    for (t, mut row) in base.outer_iter_mut().enumerate() {
        let state = match (labels[t], window) {
            (1, _) => SnippetState::Event,
            (_, Some(w)) if (t * snippet_len) as u32 > w.end => SnippetState::Aftermath,
            _ => SnippetState::Calm,
        };
        row.assign(&(world.prototype(config.class, state) + &shared));
    }

    let mut out = Vec::with_capacity(2);
    for view in 0..2u8 {
        let mut mean = &base + &assignment.view_offsets[view as usize].view().insert_axis(Axis(0));
        if let Some(s) = shift {
            mean = s.apply_rows(&mean);
        }
        if noise_sigma > 0.0 {
            mean.mapv_inplace(|m| m + noise_sigma * rng.sample::<f64, _>(StandardNormal));
        }
        let matrix = SnippetMatrix::from_f64(&mean, snippet_len)?;
        let id = meta.video_id(view);
        let record = VideoRecord {
            feature_path: PathBuf::from(FEATURE_DIR).join(format!("{id}.snpf")),
            id,
            domain: meta.domain,
            class: config.class,
            view,
            incident_id: meta.incident_id.clone(),
            location_id: assignment.location_id,
            weather: config.weather,
            time_of_day: config.time_of_day,
            frame_count: config.frame_count,
            fps: config.fps,
            abnormal_ranges: ranges.clone(),
            split: meta.split,
        };
        out.push((record, matrix));
    }
    Ok(out.try_into().expect("two views"))
}

fn incident_plan(spec: &GenerationSpec) -> Vec<(IncidentMeta, EventClass)> {
    let mut plan = Vec::new();
    for domain in [Domain::Source, Domain::Target] {
        let prefix = match domain {
            Domain::Source => "src",
            Domain::Target => "tgt",
        };
        for count in spec.counts(domain) {
            for (split, videos) in [(Split::Train, count.train), (Split::Test, count.test)] {
                for k in 0..videos.div_ceil(2) {
                    let meta = IncidentMeta {
                        incident_id: format!("{prefix}-{}-{}-{k:04}", count.class, split.name()),
                        domain,
                        split,
                    };
                    plan.push((meta, count.class));
                }
            }
        }
    }
    plan
}

pub type GeneratedVideo = (VideoRecord, SnippetMatrix);

/// Generates every scene of `spec` in memory, in a fixed order. Scenes are
/// produced in parallel; each draws from its own stream keyed by the
/// dataset seed and the scene id.
pub fn generate_incidents(spec: &GenerationSpec, world: &SceneWorld) -> Result<Vec<GeneratedVideo>> {
    let plan = incident_plan(spec);
    let scenes: Vec<[GeneratedVideo; 2]> = plan
        .par_iter()
        .map(|(meta, class)| {
            let mut r = rng::stream(spec.seed, &["incident", &meta.incident_id]);
            let config = sample_config(spec, meta.domain, *class, &mut r)?;
            let location = assign_location(world, &mut r);
            let shift = (meta.domain == Domain::Source).then_some(&world.shift);
            let mut noise = rng::stream(spec.seed, &["video", &meta.incident_id]);
            generate_video(world, &config, &location, meta, shift, spec.snippet_len, spec.noise_sigma, &mut noise)
        })
        .collect::<Result<_>>()?;
    Ok(scenes.into_iter().flatten().collect())
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub root: PathBuf,
    pub source: Option<Manifest>,
    pub target: Option<Manifest>,
    pub shift: ShiftSpec,
}

impl GeneratedDataset {
    pub fn manifest_path(&self, domain: Domain) -> PathBuf {
        let dir = match domain {
            Domain::Source => SOURCE_DIR,
            Domain::Target => TARGET_DIR,
        };
        self.root.join(dir).join(MANIFEST_FILE)
    }

    pub fn shift_path(&self) -> PathBuf {
        self.root.join(SHIFT_FILE)
    }
}

/// Writes `out/{source,target}/manifest.json` with their feature files, the
/// domain shift as `out/shift.json` and the spec as `out/generation.json`.
pub fn generate_dataset(spec: &GenerationSpec, out: &Path) -> Result<GeneratedDataset> {
    let world = SceneWorld::new(spec)?;
    let videos = generate_incidents(spec, &world)?;
    let spec_json = serde_json::to_value(spec).map_err(|e| Error::Internal(e.to_string()))?;

    let mut manifests = [None, None];
    for (slot, domain, dir) in [(0, Domain::Source, SOURCE_DIR), (1, Domain::Target, TARGET_DIR)] {
        let mine: Vec<&GeneratedVideo> = videos.iter().filter(|(r, _)| r.domain == domain).collect();
        if mine.is_empty() {
            continue;
        }
        let root = out.join(dir);
        let features = root.join(FEATURE_DIR);
        fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;
        mine.par_iter()
            .try_for_each(|(r, m)| write_feature_file(m, &root.join(&r.feature_path)))?;
        let mut manifest = Manifest::new(spec.dim, spec.snippet_len, mine.iter().map(|(r, _)| r.clone()).collect());
        manifest.provenance = Some(serde_json::json!({
            "stage": "generate",
            "domain": domain,
            "seed": spec.seed,
            "generation": spec_json,
        }));
        manifest.save(&root.join(MANIFEST_FILE))?;
        manifests[slot] = Some(manifest);
    }
    world.shift.save(&out.join(SHIFT_FILE))?;
    let spec_path = out.join("generation.json");
    let text = serde_json::to_string_pretty(&spec_json).map_err(|e| Error::Internal(e.to_string()))?;
    fs::write(&spec_path, text + "\n").map_err(|e| Error::io(&spec_path, e))?;

    let [source, target] = manifests;
    Ok(GeneratedDataset {
        root: out.to_path_buf(),
        source,
        target,
        shift: world.shift,
    })
}

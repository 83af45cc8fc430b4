use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{evaluate_videos, multi_seed_average, AucReport, AucSummary, EvalOptions};
use crate::adapt::{adapt_videos, AdaptationHyper, ClassMap};
use crate::detect::{train_detector, DetectorHyper};
use crate::error::{Error, Result, ResultExt};
use crate::rng;
use crate::scenegen::{OracleAligner, ShiftSpec};
use crate::store::{balanced_merge, Dataset, EventClass, SnippetMatrix, Split, Video};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    TargetOnly,
    WithoutDa,
    WithDa,
    OracleAligned,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::TargetOnly => "target_only",
            Setting::WithoutDa => "without_da",
            Setting::WithDa => "with_da",
            Setting::OracleAligned => "oracle_aligned",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source_manifest: Option<PathBuf>,
    pub target_manifest: Option<PathBuf>,
    /// Known shift; required for the oracle-aligned setting.
    pub shift: Option<PathBuf>,
    pub oracle: bool,
    pub seeds: Vec<u64>,
    pub class_map: ClassMap,
    pub adaptation: AdaptationHyper,
    pub detector: DetectorHyper,
    pub evaluation: EvalOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source_manifest: None,
            target_manifest: None,
            shift: None,
            oracle: false,
            seeds: vec![0, 1, 2],
            class_map: ClassMap::default(),
            adaptation: AdaptationHyper::default(),
            detector: DetectorHyper::default(),
            evaluation: EvalOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.source_manifest.is_none() {
            return Err(Error::validation("experiment needs a source manifest"));
        }
        if self.target_manifest.is_none() {
            return Err(Error::validation("experiment needs a target manifest"));
        }
        if self.oracle && self.shift.is_none() {
            return Err(Error::validation("the oracle setting needs the shift file"));
        }
        self.validate_common()
    }

    fn validate_common(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::validation("experiment needs at least one seed"));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::validation("experiment seeds must be distinct"));
        }
        self.class_map.validate()?;
        self.adaptation.validate()?;
        self.detector.validate()
    }

    pub fn settings(&self) -> Vec<Setting> {
        let mut s = vec![Setting::TargetOnly, Setting::WithoutDa, Setting::WithDa];
        if self.oracle {
            s.push(Setting::OracleAligned);
        }
        s
    }
}

/// Everything the matrix reads. Source TEST videos are never part of it.
#[derive(Debug, Clone)]
pub struct ExperimentInputs {
    pub source_train: Vec<Arc<Video>>,
    pub target_train: Vec<Arc<Video>>,
    pub target_test: Vec<Arc<Video>>,
    pub shift: Option<ShiftSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub setting: Setting,
    pub seed: u64,
    pub auc: AucSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationRow {
    pub seed: u64,
    pub source_class: EventClass,
    pub target_class: EventClass,
    pub initial_mean_sq_distance: f64,
    pub final_mean_sq_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    pub settings: BTreeMap<Setting, AucReport>,
    pub adaptation: Vec<AdaptationRow>,
}

fn round_trip(v: &Video, features: ndarray::Array2<f64>) -> Result<Arc<Video>> {
    let m = SnippetMatrix::from_f64(&features, v.snippet_len)?;
    Ok(Arc::new(Video::new(v.record.clone(), &m)?))
}

/// Runs every (setting, seed) cell on in-memory inputs. Within a seed all
/// settings share the merge selection and the detector seed, so they differ
/// only in the training features.
pub fn run_experiment(inputs: &ExperimentInputs, config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate_common()?;
    if inputs.source_train.iter().chain(&inputs.target_train).any(|v| v.record.split != Split::Train)
        || inputs.target_test.iter().any(|v| v.record.split != Split::Test)
    {
        return Err(Error::validation("experiment inputs mix up TRAIN and TEST splits"));
    }
    let settings = config.settings();
    let oracle = match (config.oracle, &inputs.shift) {
        (true, Some(s)) => Some(OracleAligner::new(s)?),
        (true, None) => return Err(Error::validation("the oracle setting needs the shift")),
        _ => None,
    };

    let adapted: Vec<(Vec<Arc<Video>>, Vec<AdaptationRow>)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let (videos, classes) = adapt_videos(
                &inputs.source_train,
                &inputs.target_train,
                &config.class_map,
                &config.adaptation,
                rng::derive_u64(seed, &["adapt"]),
            )
            .with_context(|| format!("seed {seed}: adaptation"))?;
            let rows = classes
                .iter()
                .map(|c| AdaptationRow {
                    seed,
                    source_class: c.source_class,
                    target_class: c.target_class,
                    initial_mean_sq_distance: c.initial_mean_sq_distance,
                    final_mean_sq_distance: c.final_mean_sq_distance,
                })
                .collect();
            Ok((videos, rows))
        })
        .collect::<Result<_>>()?;

    let aligned: Option<Vec<Arc<Video>>> = match &oracle {
        Some(o) => Some(
            inputs
                .source_train
                .iter()
                .map(|v| round_trip(v, o.align_rows(&v.features)))
                .collect::<Result<_>>()?,
        ),
        None => None,
    };

    let cells: Vec<(usize, Setting)> = (0..config.seeds.len())
        .flat_map(|i| settings.iter().map(move |&s| (i, s)))
        .collect();
    let rows: Vec<ExperimentRow> = cells
        .par_iter()
        .map(|&(i, setting)| {
            let seed = config.seeds[i];
            let source: Option<&[Arc<Video>]> = match setting {
                Setting::TargetOnly => None,
                Setting::WithoutDa => Some(&inputs.source_train),
                Setting::WithDa => Some(&adapted[i].0),
                Setting::OracleAligned => aligned.as_deref(),
            };
            let train = match source {
                None => inputs.target_train.clone(),
                Some(src) => balanced_merge(&inputs.target_train, src, rng::derive_u64(seed, &["merge"]))?,
            };
            let (detector, _) = train_detector(&train, &config.detector, rng::derive_u64(seed, &["detector"]))?;
            let auc = evaluate_videos(&detector, &inputs.target_test, &config.evaluation)?;
            Ok(ExperimentRow { setting, seed, auc })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e: Error| e.context("experiment matrix"))?;

    let mut by_setting = BTreeMap::new();
    for &s in &settings {
        let reports: Vec<AucReport> = rows
            .iter()
            .filter(|r| r.setting == s)
            .map(|r| AucReport {
                seeds: vec![r.seed],
                per_seed: vec![r.auc.clone()],
                mean: r.auc.clone(),
            })
            .collect();
        by_setting.insert(s, multi_seed_average(&reports)?);
    }
    Ok(ExperimentReport {
        rows,
        settings: by_setting,
        adaptation: adapted.into_iter().flat_map(|(_, r)| r).collect(),
    })
}

/// Loads the manifests named in `config` and runs the matrix. Only source
/// TRAIN and target TRAIN/TEST features are read.
pub fn experiment_matrix(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let source = Dataset::open(config.source_manifest.as_deref().expect("validated"))?;
    let target = Dataset::open(config.target_manifest.as_deref().expect("validated"))?;
    let shift = match (&config.shift, config.oracle) {
        (Some(p), true) => Some(ShiftSpec::load(p)?),
        _ => None,
    };
    let inputs = ExperimentInputs {
        source_train: source.load_split(Split::Train)?,
        target_train: target.load_split(Split::Train)?,
        target_test: target.load_split(Split::Test)?,
        shift,
    };
    run_experiment(&inputs, config)
}

impl ExperimentReport {
    pub fn mean(&self, setting: Setting) -> Option<f64> {
        self.settings.get(&setting).map(|r| r.mean.overall)
    }

    fn categories(&self) -> Vec<EventClass> {
        self.rows
            .first()
            .map(|r| r.auc.per_category.keys().copied().collect())
            .unwrap_or_default()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let cats = self.categories();
        let mut header: Vec<String> = ["setting", "seed", "overall", "single_view", "view0", "view1"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(cats.iter().map(|c| c.name().to_string()));
        w.write_record(&header).map_err(|e| Error::Internal(e.to_string()))?;
        let mut push = |setting: String, seed: String, s: &AucSummary| -> Result<()> {
            let mut rec = vec![
                setting,
                seed,
                s.overall.to_string(),
                s.single_view.to_string(),
                s.per_view[0].to_string(),
                s.per_view[1].to_string(),
            ];
            rec.extend(cats.iter().map(|c| s.per_category.get(c).map_or(String::new(), |v| v.to_string())));
            w.write_record(&rec).map_err(|e| Error::Internal(e.to_string()))
        };
        for r in &self.rows {
            push(r.setting.to_string(), r.seed.to_string(), &r.auc)?;
        }
        for (s, rep) in &self.settings {
            push(s.to_string(), "mean".into(), &rep.mean)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let seeds: Vec<u64> = self
            .settings
            .values()
            .next()
            .map(|r| r.seeds.clone())
            .unwrap_or_default();
        write!(out, "{:<16} {:>8}", "setting", "mean").unwrap();
        for s in &seeds {
            write!(out, " {:>8}", format!("seed {s}")).unwrap();
        }
        out.push('\n');
        for (setting, rep) in &self.settings {
            write!(out, "{:<16} {:>8.4}", setting.name(), rep.mean.overall).unwrap();
            for s in &rep.per_seed {
                write!(out, " {:>8.4}", s.overall).unwrap();
            }
            out.push('\n');
        }
        if !self.adaptation.is_empty() {
            out.push_str("\nclass-mean squared distance (before -> after)\n");
            for a in &self.adaptation {
                writeln!(
                    out,
                    "seed {:<4} {:>9} -> {:<9} {:>10.4} -> {:.4}",
                    a.seed, a.source_class, a.target_class, a.initial_mean_sq_distance, a.final_mean_sq_distance
                )
                .unwrap();
            }
        }
        out
    }

    /// Writes `report.csv`, `report.json`, `adaptation.csv` and `summary.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, body: String| -> Result<()> {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        put("report.csv", self.to_csv()?)?;
        put(
            "report.json",
            serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))?,
        )?;
        let mut a = String::from("seed,source_class,target_class,initial_mean_sq_distance,final_mean_sq_distance\n");
        for r in &self.adaptation {
            writeln!(
                a,
                "{},{},{},{},{}",
                r.seed, r.source_class, r.target_class, r.initial_mean_sq_distance, r.final_mean_sq_distance
            )
            .unwrap();
        }
        put("adaptation.csv", a)?;
        put("summary.txt", self.summary_table())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_source_is_a_validation_error() {
        let cfg = ExperimentConfig {
            target_manifest: Some("t.json".into()),
            ..ExperimentConfig::default()
        };
        let err = experiment_matrix(&cfg).unwrap_err();
        assert_eq!(err.category(), crate::ErrorCategory::Validation);
        assert!(err.to_string().contains("source"));
    }

    #[test]
    fn oracle_without_shift_is_rejected() {
        let cfg = ExperimentConfig {
            source_manifest: Some("s.json".into()),
            target_manifest: Some("t.json".into()),
            oracle: true,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!(cfg.settings().len(), 4);
    }

    #[test]
    fn duplicate_seeds_are_rejected() {
        let cfg = ExperimentConfig {
            seeds: vec![1, 1],
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate_common().is_err());
    }
}

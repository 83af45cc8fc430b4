//! Whole-pipeline run configuration, read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptationHyper, ClassMap};
use crate::detect::DetectorHyper;
use crate::error::{Error, Result};
use crate::eval::{EvalOptions, ExperimentConfig};
use crate::scenegen::GenerationSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub source_manifest: Option<PathBuf>,
    pub target_manifest: Option<PathBuf>,
    pub shift: Option<PathBuf>,
    pub oracle: bool,
    pub seeds: Vec<u64>,
    pub class_map: ClassMap,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        ExperimentSection {
            source_manifest: d.source_manifest,
            target_manifest: d.target_manifest,
            shift: d.shift,
            oracle: d.oracle,
            seeds: d.seeds,
            class_map: d.class_map,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overrides `generation.seed` and is the default seed for adaptation
    /// and training.
    pub seed: Option<u64>,
    pub generation: GenerationSpec,
    pub adaptation: AdaptationHyper,
    pub detector: DetectorHyper,
    pub evaluation: EvalOptions,
    pub experiment: ExperimentSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::validation(format!("config: {}", e.message())))?;
        if let Some(s) = cfg.seed {
            cfg.generation.seed = s;
        }
        Ok(cfg)
    }

    /// Parses `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| e.context(path.display().to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let ex = &mut cfg.experiment;
        for p in [&mut ex.source_manifest, &mut ex.target_manifest, &mut ex.shift].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("config serialization: {e}")))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.generation.seed)
    }

    /// Checks every section and that each referenced file exists.
    pub fn validate(&self) -> Result<()> {
        self.generation.validate()?;
        self.adaptation.validate()?;
        self.detector.validate()?;
        self.experiment.class_map.validate()?;
        let ex = &self.experiment;
        for p in [&ex.source_manifest, &ex.target_manifest, &ex.shift].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::validation(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        let ex = &self.experiment;
        ExperimentConfig {
            source_manifest: ex.source_manifest.clone(),
            target_manifest: ex.target_manifest.clone(),
            shift: ex.shift.clone(),
            oracle: ex.oracle,
            seeds: ex.seeds.clone(),
            class_map: ex.class_map.clone(),
            adaptation: self.adaptation.clone(),
            detector: self.detector.clone(),
            evaluation: self.evaluation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::Mode;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig {
            seed: Some(11),
            ..RunConfig::default()
        };
        let back = RunConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back.seed(), 11);
        assert_eq!(back.generation.seed, 11);
        assert_eq!(back.adaptation, cfg.adaptation);
        assert_eq!(back.detector, cfg.detector);
        assert_eq!(back.experiment, cfg.experiment);
    }

    #[test]
    fn sections_override_single_keys() {
        let text = r#"
            seed = 3
            [generation]
            dim = 8
            [adaptation]
            lambda_gp = 5.0
            [detector]
            mode = "SUPERVISED"
            [experiment]
            seeds = [7]
            oracle = false
        "#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.generation.dim, 8);
        assert_eq!(cfg.generation.seed, 3);
        assert_eq!(cfg.generation.frame_count, 384);
        assert_eq!(cfg.adaptation.lambda_gp, 5.0);
        assert_eq!(cfg.adaptation.critic_steps, 5);
        assert_eq!(cfg.detector.mode, Mode::Supervised);
        assert_eq!(cfg.experiment.seeds, vec![7]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["bogus = 1", "[generation]\nbogus = 1", "[detector]\nlr = 1.0", "[telemetry]\n"] {
            let err = RunConfig::from_toml_str(text).unwrap_err();
            assert!(matches!(err, Error::Validation(_)), "{text}: {err}");
        }
    }

    #[test]
    fn missing_referenced_file_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[experiment]\nsource_manifest = \"nowhere/manifest.json\"\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.experiment.source_manifest.as_deref(), Some(dir.path().join("nowhere/manifest.json").as_path()));
        assert!(cfg.validate().unwrap_err().to_string().contains("does not exist"));
    }

    #[test]
    fn invalid_values_fail_validation() {
        let cfg = RunConfig::from_toml_str("[adaptation]\ncritic_steps = 0").unwrap();
        assert!(cfg.validate().is_err());
    }
}

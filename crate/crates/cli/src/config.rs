//! Run configuration: a flat TOML file, overridden by command-line flags
//! and the `EHRTWIN_DEFAULT_TIMESTAMP` environment variable.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use ehrtwin::fhir::assembly::DEFAULT_TIMESTAMP;
use ehrtwin::ner::PatternSet;
use ehrtwin::relations::CueList;
use ehrtwin::synthesizer::split::check_ratios;
use ehrtwin::synthesizer::{TemplateSet, DEFAULT_RATIOS};
use ehrtwin::{Ablation, ExecMode, Pipeline, TerminologyIndex};

pub const TIMESTAMP_ENV: &str = "EHRTWIN_DEFAULT_TIMESTAMP";
pub const DEFAULT_SEED: u64 = 42;

/// Keys accepted in the config file. Relative paths resolve against the
/// file's directory.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Replace the bundled dictionary with these files.
    pub dictionaries: Vec<PathBuf>,
    pub synonyms: Vec<PathBuf>,
    pub patterns: Option<PathBuf>,
    pub cues: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub disable_normalization: bool,
    pub disable_relations: bool,
    pub disable_validation: bool,
    pub naive_mapping: bool,
    pub default_timestamp: Option<String>,
    pub out: Option<PathBuf>,
    pub split: Option<[f64; 3]>,
    pub seed: Option<u64>,
    pub sequential: bool,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.dictionaries.iter_mut().for_each(resolve);
        cfg.synonyms.iter_mut().for_each(resolve);
        for p in [&mut cfg.patterns, &mut cfg.cues, &mut cfg.templates, &mut cfg.out]
            .into_iter()
            .flatten()
        {
            resolve(p);
        }
        Ok(cfg)
    }
}

/// Flag values that override the file when set.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub split: Option<[f64; 3]>,
    pub no_normalize: bool,
    pub no_relations: bool,
    pub no_validate: bool,
    pub naive: bool,
    pub sequential: bool,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dictionaries: Vec<PathBuf>,
    pub synonyms: Vec<PathBuf>,
    pub patterns: Option<PathBuf>,
    pub cues: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub ablation: Ablation,
    pub default_timestamp: String,
    pub out: PathBuf,
    pub split: [f64; 3],
    pub seed: u64,
    pub mode: ExecMode,
}

impl PipelineConfig {
    pub fn resolve(file: FileConfig, flags: Overrides, env_timestamp: Option<String>) -> Result<Self> {
        let cfg = Self {
            dictionaries: file.dictionaries,
            synonyms: file.synonyms,
            patterns: file.patterns,
            cues: file.cues,
            templates: file.templates,
            ablation: Ablation {
                disable_normalization: file.disable_normalization || flags.no_normalize,
                disable_relations: file.disable_relations || flags.no_relations,
                disable_validation: file.disable_validation || flags.no_validate,
                naive_mapping: file.naive_mapping || flags.naive,
            },
            default_timestamp: env_timestamp
                .filter(|t| !t.trim().is_empty())
                .or(file.default_timestamp)
                .unwrap_or_else(|| DEFAULT_TIMESTAMP.to_string()),
            out: flags.out.or(file.out).unwrap_or_else(|| PathBuf::from("ehrtwin-out")),
            split: flags.split.or(file.split).unwrap_or(DEFAULT_RATIOS),
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            mode: if flags.sequential || file.sequential {
                ExecMode::Sequential
            } else {
                ExecMode::default()
            },
        };
        cfg.check_paths()?;
        check_ratios(cfg.split)?;
        Ok(cfg)
    }

    fn check_paths(&self) -> Result<()> {
        let all = self
            .dictionaries
            .iter()
            .chain(&self.synonyms)
            .chain(self.patterns.iter())
            .chain(self.cues.iter())
            .chain(self.templates.iter());
        for p in all {
            if !p.is_file() {
                bail!("configured file {} does not exist", p.display());
            }
        }
        Ok(())
    }

    pub fn index(&self) -> Result<TerminologyIndex> {
        if self.dictionaries.is_empty() && self.synonyms.is_empty() {
            return Ok(TerminologyIndex::bundled());
        }
        let mut index = if self.dictionaries.is_empty() {
            TerminologyIndex::bundled()
        } else {
            TerminologyIndex::new()
        };
        for d in &self.dictionaries {
            index.merge(TerminologyIndex::load_dictionary(d, None)?);
        }
        for s in &self.synonyms {
            index.load_synonyms(s)?;
        }
        Ok(index)
    }

    pub fn pipeline(&self) -> Result<Pipeline> {
        let index = self.index()?;
        let patterns = match &self.patterns {
            Some(p) => PatternSet::load(p, &index)?,
            None => PatternSet::bundled(&index),
        };
        let cues = match &self.cues {
            Some(p) => CueList::load(p).with_context(|| format!("reading cues {}", p.display()))?,
            None => CueList::default(),
        };
        Ok(Pipeline::new(index, patterns, cues)
            .with_ablation(self.ablation)
            .with_default_timestamp(self.default_timestamp.clone()))
    }

    pub fn templates(&self) -> Result<TemplateSet> {
        Ok(match &self.templates {
            Some(p) => TemplateSet::load(p)?,
            None => TemplateSet::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_env_overrides_timestamp() {
        let file = FileConfig {
            seed: Some(1),
            default_timestamp: Some("2020-01-01T00:00:00Z".into()),
            disable_relations: true,
            ..Default::default()
        };
        let flags = Overrides {
            seed: Some(9),
            naive: true,
            ..Default::default()
        };
        let cfg = PipelineConfig::resolve(file.clone(), flags, None).unwrap();
        assert_eq!(cfg.seed, 9);
        assert!(cfg.ablation.disable_relations && cfg.ablation.naive_mapping);
        assert_eq!(cfg.default_timestamp, "2020-01-01T00:00:00Z");
        let cfg = PipelineConfig::resolve(file, Overrides::default(), Some("2030-01-01T00:00:00Z".into())).unwrap();
        assert_eq!(cfg.default_timestamp, "2030-01-01T00:00:00Z");
        assert_eq!(cfg.seed, 1);
    }

    #[test]
    fn bad_ratios_and_missing_paths_are_rejected() {
        let flags = Overrides {
            split: Some([0.6, 0.6, 0.1]),
            ..Default::default()
        };
        assert!(PipelineConfig::resolve(FileConfig::default(), flags, None).is_err());
        let file = FileConfig {
            patterns: Some("/nonexistent/patterns.tsv".into()),
            ..Default::default()
        };
        assert!(PipelineConfig::resolve(file, Overrides::default(), None).is_err());
    }

    #[test]
    fn config_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "patterns = \"p.tsv\"\nseed = 3\nsplit = [0.5, 0.25, 0.25]\n").unwrap();
        let cfg = FileConfig::load(&path).unwrap();
        assert_eq!(cfg.patterns, Some(dir.path().join("p.tsv")));
        assert_eq!(cfg.split, Some([0.5, 0.25, 0.25]));
        fs::write(&path, "bogus = 1\n").unwrap();
        assert!(FileConfig::load(&path).is_err());
    }
}

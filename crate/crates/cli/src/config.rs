use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stae_core::model::ModelConfig;
use stae_core::optim::TrainSettings;
use stae_core::pipeline::{PreprocessConfig, StrideSet, SyntheticSpec};
use stae_core::scoring::ScoringConfig;

pub const RESOLVED_NAME: &str = "config.resolved.toml";

/// Everything a run can be told, in one TOML file. Omitted keys take the
/// library defaults; unknown keys are errors.
///
/// `seed` is the single source of randomness: it overrides `model.seed` and
/// `train.seed` and seeds the synthetic generator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synthetic: SyntheticSpec,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub strides: StrideSet,
    pub train: TrainSettings,
    pub scoring: ScoringConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Applies the seed and checks cross-section consistency.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.model.seed = self.seed;
        self.train.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.model.size_trace()?;
        self.strides.validate()?;
        self.train.validate()?;
        if self.strides.time_steps != self.model.time_steps {
            bail!(
                "strides.time_steps = {} but model.time_steps = {}",
                self.strides.time_steps,
                self.model.time_steps
            );
        }
        if self.preprocess.target_size != self.model.input_size {
            bail!(
                "preprocess.target_size = {} but model.input_size = {}",
                self.preprocess.target_size,
                self.model.input_size
            );
        }
        if self.model.input_channels != 1 {
            bail!("model.input_channels must be 1: preprocessing produces grayscale frames");
        }
        if !(self.scoring.persistence_threshold >= 0.0) || self.scoring.window == 0 {
            bail!("scoring.persistence_threshold must be >= 0 and scoring.window >= 1");
        }
        Ok(())
    }

    pub fn write_resolved(&self, out: &Path) -> Result<()> {
        let text = toml::to_string(self).context("serializing the resolved configuration")?;
        let path = out.join(RESOLVED_NAME);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(RunConfig::default().resolve(None).is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[train]\nbatchsize = 3").is_err());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg: RunConfig = toml::from_str("[model]\ntime_steps = 4\n[strides]\ntime_steps = 4").unwrap();
        assert_eq!(cfg.model.time_steps, 4);
        assert_eq!(cfg.model.input_size, 227);
        assert_eq!(cfg.strides.strides, vec![1, 2, 3]);
    }

    #[test]
    fn resolved_round_trips() {
        let cfg = RunConfig::default().resolve(Some(9)).unwrap();
        assert_eq!((cfg.model.seed, cfg.train.seed), (9, 9));
        let back: RunConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.resolve(None).unwrap(), cfg);
    }

    #[test]
    fn shipped_desk_config_matches_the_preset() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
        let cfg = RunConfig::load(&path).unwrap().resolve(None).unwrap();
        assert_eq!(cfg.model, ModelConfig { seed: 7, ..ModelConfig::desk() });
        assert_eq!(cfg.synthetic, SyntheticSpec::default());
    }

    #[test]
    fn inconsistent_sections_are_rejected() {
        let mut cfg = RunConfig::default();
        cfg.strides.time_steps = 5;
        assert!(cfg.resolve(None).unwrap_err().to_string().contains("time_steps"));
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::audio::FrontendConfig;
use crate::decoding::CascadeConfig;
use crate::lexicon::UnitLevel;
use crate::training::TrainConfig;
use crate::transformer::{InputKind, ModelConfig, Preset};

/// Model size: a preset name (or `custom`) plus optional overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub preset: String,
    pub n_layers: Option<usize>,
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub d_ff: Option<usize>,
    pub warmup_steps: Option<u64>,
    pub dropout_rate: Option<f64>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            preset: Preset::D512H8.name().to_string(),
            n_layers: None,
            d_model: None,
            n_heads: None,
            d_ff: None,
            warmup_steps: None,
            dropout_rate: None,
        }
    }
}

impl ModelSpec {
    pub fn custom(n_layers: usize, d_model: usize, n_heads: usize) -> Self {
        ModelSpec {
            preset: "custom".into(),
            n_layers: Some(n_layers),
            d_model: Some(d_model),
            n_heads: Some(n_heads),
            ..ModelSpec::default()
        }
    }

    pub fn resolve(&self, input_kind: InputKind, input_dim: usize, vocab: usize) -> Result<ModelConfig, PipelineError> {
        let mut cfg = if self.preset == "custom" {
            let need = |v: Option<usize>, name: &str| v.ok_or_else(|| PipelineError::Config(format!("custom model needs {name}")));
            ModelConfig::small(need(self.n_layers, "n_layers")?, need(self.d_model, "d_model")?, need(self.n_heads, "n_heads")?, input_kind, input_dim, vocab)
        } else {
            let preset: Preset = self.preset.parse().map_err(PipelineError::Config)?;
            preset.config(input_kind, input_dim, vocab)
        };
        if let Some(n) = self.n_layers {
            cfg.n_layers = n;
        }
        let (d, h) = (self.d_model.unwrap_or(cfg.d_model), self.n_heads.unwrap_or(cfg.n_heads));
        if (d, h) != (cfg.d_model, cfg.n_heads) {
            cfg.d_model = d;
            cfg.n_heads = h;
            cfg.d_k = d / h.max(1);
            cfg.d_v = d / h.max(1);
            cfg.d_ff = 4 * d;
        }
        if let Some(f) = self.d_ff {
            cfg.d_ff = f;
        }
        if let Some(w) = self.warmup_steps {
            cfg.warmup_steps = w;
        }
        if let Some(p) = self.dropout_rate {
            cfg.dropout_rate = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The same size with every field spelled out.
    pub fn expanded(&self) -> Result<ModelSpec, PipelineError> {
        let c = self.resolve(InputKind::Tokens, 5, 5)?;
        Ok(ModelSpec {
            preset: self.preset.clone(),
            n_layers: Some(c.n_layers),
            d_model: Some(c.d_model),
            n_heads: Some(c.n_heads),
            d_ff: Some(c.d_ff),
            warmup_steps: Some(c.warmup_steps),
            dropout_rate: Some(c.dropout_rate),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub model: ModelSpec,
    /// `train.seed` is derived from the run seed and any given value is
    /// replaced.
    pub train: TrainConfig,
}

/// Everything a run needs. Relative paths are resolved against the
/// directory of the file the configuration was read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_dir: PathBuf,
    pub train_manifest: PathBuf,
    pub lexicon: PathBuf,
    pub syllables: PathBuf,
    #[serde(default)]
    pub unit_level: UnitLevel,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Also extract 0.9× and 1.1× speed-perturbed copies and train on them.
    #[serde(default)]
    pub speed_perturb: bool,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub frontend: FrontendConfig,
    #[serde(default)]
    pub acoustic: StageConfig,
    #[serde(default)]
    pub word: StageConfig,
    #[serde(default)]
    pub decode: CascadeConfig,
}

fn default_seed() -> u64 {
    1
}

fn default_jobs() -> usize {
    1
}

/// Splits one seed into independent per-component seeds.
pub fn derive_seed(seed: u64, component: u64) -> u64 {
    let mut z = seed.wrapping_add(component.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) const ACOUSTIC_INIT: u64 = 1;
pub(crate) const ACOUSTIC_TRAIN: u64 = 2;
pub(crate) const WORD_INIT: u64 = 3;
pub(crate) const WORD_TRAIN: u64 = 4;

impl RunConfig {
    pub fn new(run_dir: impl Into<PathBuf>, train_manifest: impl Into<PathBuf>, lexicon: impl Into<PathBuf>, syllables: impl Into<PathBuf>) -> Self {
        RunConfig {
            run_dir: run_dir.into(),
            train_manifest: train_manifest.into(),
            lexicon: lexicon.into(),
            syllables: syllables.into(),
            unit_level: UnitLevel::default(),
            seed: default_seed(),
            speed_perturb: false,
            jobs: default_jobs(),
            frontend: FrontendConfig::default(),
            acoustic: StageConfig::default(),
            word: StageConfig::default(),
            decode: CascadeConfig::default(),
        }
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        for p in [&mut cfg.run_dir, &mut cfg.train_manifest, &mut cfg.lexicon, &mut cfg.syllables] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.jobs == 0 {
            return Err(PipelineError::Config("jobs must be at least 1".into()));
        }
        self.acoustic.train.validate()?;
        self.word.train.validate()?;
        self.decode.validate()?;
        self.acoustic.model.expanded()?;
        self.word.model.expanded()?;
        Ok(())
    }

    /// Presets expanded, derived seeds filled in. Loading this back and
    /// running again gives the same results.
    pub fn effective(&self) -> Result<RunConfig, PipelineError> {
        let mut e = self.clone();
        e.acoustic.model = self.acoustic.model.expanded()?;
        e.word.model = self.word.model.expanded()?;
        e.acoustic.train.seed = derive_seed(self.seed, ACOUSTIC_TRAIN);
        e.word.train.seed = derive_seed(self.seed, WORD_TRAIN);
        Ok(e)
    }
}

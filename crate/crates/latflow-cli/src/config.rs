//! Run configuration: sections of `key = value` lines (TOML grammar).
//!
//! Every key is validated against the schema below — unknown keys are
//! rejected with an error naming them — and omitted keys take the
//! defaults, which describe the full desk-scale experiment. The fully
//! resolved configuration is echoed into each run directory.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub vae: VaeSection,
    pub flow: FlowSection,
    pub baseline: BaselineSection,
    pub eval: EvalSection,
    pub nav: NavSection,
    pub seeds: SeedsSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub n_train: usize,
    pub n_id: usize,
    pub n_ood: usize,
    pub density_lo: f64,
    pub density_hi: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            n_train: 50_000,
            n_id: 2_000,
            n_ood: 2_000,
            density_lo: 0.05,
            density_hi: 0.30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub latent_dim: usize,
    pub hidden: usize,
    pub vae_hidden: usize,
    pub euler_steps: usize,
    pub diffusion_steps: usize,
    pub diffusion_beta_min: f64,
    pub diffusion_beta_max: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            latent_dim: 32,
            hidden: 256,
            vae_hidden: 256,
            euler_steps: 10,
            diffusion_steps: 10,
            diffusion_beta_min: 1e-4,
            diffusion_beta_max: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeSection {
    pub corpus_size: usize,
    pub pit_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta: f64,
}

impl Default for VaeSection {
    fn default() -> Self {
        VaeSection {
            corpus_size: 4_000,
            pit_fraction: 0.25,
            epochs: 30,
            batch_size: 128,
            learning_rate: 1e-3,
            beta: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        FlowSection {
            epochs: 40,
            batch_size: 512,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            epochs: 40,
            batch_size: 512,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub timing_samples: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            timing_samples: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NavSection {
    pub episodes: usize,
}

impl Default for NavSection {
    fn default() -> Self {
        NavSection { episodes: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedsSection {
    pub data: u64,
    pub vae: u64,
    pub flow: u64,
    pub baseline: u64,
    pub eval: u64,
    pub nav: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub root: String,
    pub artifacts: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            root: "runs".into(),
            artifacts: "artifacts".into(),
        }
    }
}

impl RunConfig {
    /// Loads and validates a config file; `None` means all defaults.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if !(0.02..=0.4).contains(&d.density_lo)
            || !(0.02..=0.4).contains(&d.density_hi)
            || d.density_lo > d.density_hi
        {
            bail!(
                "dataset density range [{}, {}] must lie within [0.02, 0.4]",
                d.density_lo,
                d.density_hi
            );
        }
        if self.model.latent_dim == 0 {
            bail!("model.latent_dim must be positive");
        }
        if self.model.euler_steps == 0 || self.model.diffusion_steps == 0 {
            bail!("integration step counts must be positive");
        }
        if !(0.0..=1.0).contains(&self.vae.pit_fraction) {
            bail!("vae.pit_fraction {} must lie in [0, 1]", self.vae.pit_fraction);
        }
        if self.eval.timing_samples < 1_000 {
            bail!(
                "eval.timing_samples {} is below the documented minimum of 1000",
                self.eval.timing_samples
            );
        }
        if self.nav.episodes == 0 {
            bail!("nav.episodes must be positive");
        }
        Ok(())
    }

    /// The fully resolved configuration as config-file text.
    pub fn resolved(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

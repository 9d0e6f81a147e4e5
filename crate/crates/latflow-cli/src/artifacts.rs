//! Canonical artifact store: one directory holding the latest
//! checkpoints, dataset splits, and metric CSVs under fixed names, so
//! subcommands can hand work to each other and reruns overwrite
//! deterministically. Timestamped run directories (see [`rundir`])
//! keep the per-invocation audit trail.
//!
//! [`rundir`]: crate::rundir

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use latflow_core::baselines::{
    decode_diffusion, decode_mlp, encode_diffusion, encode_mlp, DiffusionPredictor, MlpPredictor,
};
use latflow_core::flow::{decode_flow, encode_flow, VelocityFieldModel};
use latflow_core::vae::{decode_vae, encode_vae, VaeModel};
use latflow_core::world::{decode_dataset, encode_dataset, CropKind, Dataset, Split};

pub struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Artifacts { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn read(&self, name: &str) -> Result<Vec<u8>> {
        std::fs::read(self.path(name))
            .with_context(|| format!("reading artifact {}", self.path(name).display()))
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)
            .with_context(|| format!("creating {}", self.dir.display()))?;
        let path = self.path(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn vae_name(kind: CropKind) -> &'static str {
        match kind {
            CropKind::Local => "local_vae.lfva",
            CropKind::Extended => "extended_vae.lfva",
        }
    }

    pub fn save_vae(&self, model: &VaeModel) -> Result<PathBuf> {
        self.write(Self::vae_name(model.kind), &encode_vae(model))
    }

    pub fn load_vae(&self, kind: CropKind) -> Result<VaeModel> {
        decode_vae(&self.read(Self::vae_name(kind))?)
            .with_context(|| format!("decoding {}", Self::vae_name(kind)))
    }

    pub fn dataset_name(split: Split) -> &'static str {
        match split {
            Split::Train => "train.lfds",
            Split::TestId => "test_id.lfds",
            Split::TestOod => "test_ood.lfds",
        }
    }

    pub fn save_dataset(&self, ds: &Dataset) -> Result<PathBuf> {
        self.write(Self::dataset_name(ds.split), &encode_dataset(ds))
    }

    pub fn load_dataset(&self, split: Split) -> Result<Dataset> {
        decode_dataset(&self.read(Self::dataset_name(split))?)
            .with_context(|| format!("decoding {}", Self::dataset_name(split)))
    }

    pub fn flow_name(conditional: bool) -> &'static str {
        if conditional {
            "flow.lfvf"
        } else {
            "flow_uncond.lfvf"
        }
    }

    pub fn save_flow(&self, model: &VelocityFieldModel) -> Result<PathBuf> {
        self.write(Self::flow_name(model.conditional), &encode_flow(model))
    }

    pub fn load_flow(&self, conditional: bool) -> Result<VelocityFieldModel> {
        decode_flow(&self.read(Self::flow_name(conditional))?)
            .with_context(|| format!("decoding {}", Self::flow_name(conditional)))
    }

    pub fn save_mlp(&self, model: &MlpPredictor) -> Result<PathBuf> {
        self.write("mlp.lfmp", &encode_mlp(model))
    }

    pub fn load_mlp(&self) -> Result<MlpPredictor> {
        decode_mlp(&self.read("mlp.lfmp")?).context("decoding mlp.lfmp")
    }

    pub fn save_diffusion(&self, model: &DiffusionPredictor) -> Result<PathBuf> {
        self.write("diffusion.lfdm", &encode_diffusion(model))
    }

    pub fn load_diffusion(&self) -> Result<DiffusionPredictor> {
        decode_diffusion(&self.read("diffusion.lfdm")?).context("decoding diffusion.lfdm")
    }

    pub fn save_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        self.write(name, text.as_bytes())
    }

    pub fn has(&self, name: &str) -> bool {
        self.path(name).is_file()
    }
}

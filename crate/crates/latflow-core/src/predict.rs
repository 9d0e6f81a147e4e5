//! One prediction interface over every model family, so evaluation
//! code never branches on how a prediction is produced.

use alloc::vec::Vec;

use crate::baselines::{diffusion_sample, BaselineError, DiffusionPredictor, MlpPredictor};
use crate::flow::{integrate, FlowError, IntegrationConfig, VelocityFieldModel};
use crate::world::ConditionVec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// Maps an observed local latent and a condition vector to an
/// extended-map latent. `sample_key` fixes the randomness of
/// stochastic predictors; deterministic ones ignore it.
pub trait LatentPredictor {
    fn latent_dim(&self) -> usize;
    fn predict(
        &self,
        z_local: &[f64],
        cond: &ConditionVec,
        sample_key: u64,
    ) -> Result<Vec<f64>, PredictError>;
}

/// Velocity-field transport, starting from the local latent.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPredictor {
    pub model: VelocityFieldModel,
    pub steps: IntegrationConfig,
}

impl FlowPredictor {
    pub fn new(model: VelocityFieldModel) -> Self {
        let steps = IntegrationConfig::new(model.default_steps).unwrap_or_default();
        FlowPredictor { model, steps }
    }
}

impl LatentPredictor for FlowPredictor {
    fn latent_dim(&self) -> usize {
        self.model.latent_dim
    }

    fn predict(
        &self,
        z_local: &[f64],
        cond: &ConditionVec,
        _sample_key: u64,
    ) -> Result<Vec<f64>, PredictError> {
        Ok(integrate(&self.model, z_local, cond, self.steps)?)
    }
}

impl LatentPredictor for MlpPredictor {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn predict(
        &self,
        z_local: &[f64],
        cond: &ConditionVec,
        _sample_key: u64,
    ) -> Result<Vec<f64>, PredictError> {
        Ok(MlpPredictor::predict(self, z_local, cond)?)
    }
}

impl LatentPredictor for DiffusionPredictor {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn predict(
        &self,
        z_local: &[f64],
        cond: &ConditionVec,
        sample_key: u64,
    ) -> Result<Vec<f64>, PredictError> {
        Ok(diffusion_sample(self, z_local, cond, sample_key)?)
    }
}

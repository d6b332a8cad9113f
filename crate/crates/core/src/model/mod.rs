//! The full model: adapter, tree, and a shared linear classifier, plus the
//! training loop, inference, evaluation, and checkpoints.

pub mod checkpoint;
mod config;
mod eval;
mod forward;
mod optim;
mod params;
mod schedule;
mod train;

use std::sync::Arc;

pub use config::{parse_pairs, TrainConfig, Variant};
pub use eval::{evaluate, summarize, DomainMetrics, EvalLossTerms, EvalSummary, TargetAverage};
pub use forward::{
    classify, classify_value, infer_sample, joint_loss, InferenceView, LossNodes, LossTerms, SampleOutput,
};
pub use optim::sgd_step;
pub use params::{BoundParams, ModelParams};
pub use schedule::LrSchedule;
pub use train::{clip_global_norm, BatchStream, draw_batch, train, train_model, EpochLog, TrainOutcome};

use crate::data::PairedSample;
use crate::dfrft::DfrftPlan;
use crate::error::{dim_err, Error, Result};
use crate::mffa::TrainSample;
use crate::numeric::gradcheck::{check_gradients, GradCheckReport};
use crate::numeric::{Matrix, Tape};
use crate::par::{self, Execution};

#[derive(Clone, Debug)]
pub struct Model {
    pub config: TrainConfig,
    pub params: ModelParams,
    plan: Arc<DfrftPlan>,
}

impl Model {
    /// Fresh seeded initialization.
    pub fn new(config: TrainConfig) -> Result<Self> {
        let params = ModelParams::init(&config)?;
        Self::from_parts(config, params)
    }

    /// Checks that `params` has the shapes `config` implies.
    pub fn from_parts(config: TrainConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let skeleton = ModelParams::init(&TrainConfig { seed: 0, ..config.clone() })?;
        if skeleton.names() != params.names() {
            return dim_err("parameter layout does not match the configuration");
        }
        for ((name, a), b) in skeleton.names().iter().zip(skeleton.tensors()).zip(params.tensors()) {
            if a.shape() != b.shape() {
                return dim_err(format!("{name}: expected {:?}, found {:?}", a.shape(), b.shape()));
            }
        }
        if params.momentum.len() != skeleton.momentum.len()
            || params.momentum.iter().zip(&skeleton.momentum).any(|(a, b)| a.shape() != b.shape())
        {
            return dim_err("momentum buffers do not match the parameters");
        }
        if params.order_trainable != config.order.trainable {
            return Err(Error::Config("order trainability disagrees with the configuration".into()));
        }
        let plan = Arc::new(DfrftPlan::new(config.dim)?);
        Ok(Self { config, params, plan })
    }

    pub fn plan(&self) -> &Arc<DfrftPlan> {
        &self.plan
    }

    pub fn view(&self) -> InferenceView<'_> {
        InferenceView {
            mffa: &self.params.mffa,
            classifier: &self.params.classifier,
            classifier_bias: &self.params.classifier_bias,
            order: self.params.order_value(),
            plan: &self.plan,
            use_mffa: self.config.variant.uses_mffa(),
            scale: self.config.attention_scale(),
        }
    }

    pub fn loss(&self, batch: &[TrainSample<'_>]) -> Result<LossTerms> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let nodes = joint_loss(&mut tape, &bound, batch, &self.config, &self.plan)?;
        Ok(nodes.values(&tape))
    }

    /// Loss and one gradient per tensor, in [`ModelParams::names`] order.
    pub fn loss_and_grads(&self, batch: &[TrainSample<'_>]) -> Result<(LossTerms, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let nodes = joint_loss(&mut tape, &bound, batch, &self.config, &self.plan)?;
        let grads = tape.backward(nodes.total)?;
        let g = bound.all.iter().map(|&v| grads.get_or_zeros(&tape, v)).collect();
        Ok((nodes.values(&tape), g))
    }

    /// Central differences over every trainable scalar of the joint loss.
    pub fn gradient_check(&self, batch: &[TrainSample<'_>], h: f64, exec: Execution) -> Result<GradCheckReport> {
        let (_, grads) = self.loss_and_grads(batch)?;
        let values: Vec<Matrix> = self.params.tensors().into_iter().cloned().collect();
        let skip: Vec<usize> = self
            .params
            .trainable_mask()
            .iter()
            .enumerate()
            .filter(|(_, t)| !**t)
            .map(|(i, _)| i)
            .collect();
        let loss = |v: &[Matrix]| -> f64 {
            let params = self.params.with_values(v).expect("same layout");
            let probe = Model { config: self.config.clone(), params, plan: self.plan.clone() };
            probe.loss(batch).map(|t| t.total).unwrap_or(f64::NAN)
        };
        Ok(check_gradients(&values, &grads, loss, h, &skip, exec))
    }

    /// Inference over independent pairs. Output order follows input order.
    pub fn infer(&self, pairs: &[PairedSample], exec: Execution) -> Result<Vec<SampleOutput>> {
        let view = self.view();
        par::map_indexed(pairs.len(), exec, |i| infer_sample(&view, &pairs[i].vis, &pairs[i].tac))
            .into_iter()
            .collect()
    }
}

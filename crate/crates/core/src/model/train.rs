use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{sgd_step, LrSchedule, Model, TrainConfig};
use crate::data::Domain;
use crate::error::{Error, Result};
use crate::mffa::TrainSample;
use crate::numeric::Matrix;

const DATA_STREAM: u64 = 0xDA7A;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Rate used by the epoch's last update.
    pub lr: f64,
    pub mma: Option<f64>,
    pub nod: Option<f64>,
    pub ce: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
}

/// Pairs `indices` of `domain` with one language embedding each, drawn
/// uniformly from the sample's category.
pub fn draw_batch<'a>(domain: &'a Domain, indices: &[usize], rng: &mut ChaCha8Rng) -> Vec<TrainSample<'a>> {
    indices
        .iter()
        .map(|&i| {
            let pair = &domain.pairs[i];
            let pool = &domain.language[pair.category];
            TrainSample { vis: &pair.vis, tac: &pair.tac, lang: &pool[rng.gen_range(0..pool.len())], label: pair.category }
        })
        .collect()
}

fn check_source(cfg: &TrainConfig, source: &Domain) -> Result<()> {
    if source.dim != cfg.dim {
        return Err(Error::Incompatible(format!("source width {} but model width {}", source.dim, cfg.dim)));
    }
    if source.pairs.is_empty() {
        return Err(Error::IncompleteSample("source domain has no pairs".into()));
    }
    for p in &source.pairs {
        if p.category >= cfg.classes {
            return Err(Error::Incompatible(format!("category {} with {} classes", p.category, cfg.classes)));
        }
        if source.language.get(p.category).is_none_or(Vec::is_empty) {
            return Err(Error::IncompleteSample(format!("no language embeddings for category {}", p.category)));
        }
        if p.vis.len() != cfg.dim || p.tac.len() != cfg.dim {
            return Err(Error::IncompleteSample(format!("pair {} lacks a full VIS/TAC couple", p.pair_id)));
        }
    }
    Ok(())
}

/// Rescales the trainable gradients so their joint norm is at most `max`.
/// `max = 0` disables clipping. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Matrix], frozen: &[bool], max: f64) -> f64 {
    let norm = grads
        .iter()
        .zip(frozen)
        .filter(|(_, f)| !**f)
        .map(|(g, _)| g.as_slice().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if max > 0.0 && norm > max {
        let k = max / norm;
        for g in grads.iter_mut() {
            *g = g.scale(k);
        }
    }
    norm
}

/// Seeded mini-batch order. It depends on the seed, the source size and
/// the batch size only, never on the variant or generator.
#[derive(Clone, Debug)]
pub struct BatchStream {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    batch: usize,
}

impl BatchStream {
    pub fn new(config: &TrainConfig, n: usize) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(config.seed ^ DATA_STREAM), order: (0..n).collect(), batch: config.batch }
    }

    /// Reshuffles and returns the next epoch's index chunks.
    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        self.order.shuffle(&mut self.rng);
        self.order.chunks(self.batch).map(<[usize]>::to_vec).collect()
    }

    /// Attaches language draws to one chunk.
    pub fn draw<'a>(&mut self, source: &'a Domain, indices: &[usize]) -> Vec<TrainSample<'a>> {
        draw_batch(source, indices, &mut self.rng)
    }
}

pub fn train(config: &TrainConfig, source: &Domain) -> Result<TrainOutcome> {
    train_model(Model::new(config.clone())?, source, |_| {})
}

/// Runs `model.config.epochs` epochs from the model's current state.
/// Every epoch reshuffles the source; update `k` (1-based) uses the
/// schedule's rate at step `k`.
pub fn train_model(mut model: Model, source: &Domain, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainOutcome> {
    let cfg = model.config.clone();
    check_source(&cfg, source)?;
    let n = source.pairs.len();
    let per_epoch = n.div_ceil(cfg.batch);
    let schedule = LrSchedule::new(cfg.lr, cfg.warmup_fraction, cfg.epochs * per_epoch);
    let frozen: Vec<bool> = model.params.trainable_mask().iter().map(|t| !t).collect();
    let mut stream = BatchStream::new(&cfg, n);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        let chunks = stream.next_epoch();
        let (mut mma, mut nod, mut ce, mut total) = (0.0, 0.0, 0.0, 0.0);
        let mut lr = 0.0;
        for chunk in &chunks {
            let batch = stream.draw(source, chunk);
            let (terms, mut grads) = model.loss_and_grads(&batch)?;
            clip_global_norm(&mut grads, &frozen, cfg.clip_norm);
            step += 1;
            lr = schedule.at(step);
            let params = &mut model.params;
            let mut buffers = std::mem::take(&mut params.momentum);
            sgd_step(&mut params.tensors_mut(), &grads, &mut buffers, &frozen, lr, cfg.momentum)?;
            params.momentum = buffers;
            if !terms.total.is_finite() || !model.params.is_finite() {
                return Err(Error::Degenerate(format!("non-finite values at epoch {epoch}, step {step}")));
            }
            mma += terms.mma.unwrap_or(0.0);
            nod += terms.nod.unwrap_or(0.0);
            ce += terms.ce;
            total += terms.total;
        }
        let k = per_epoch as f64;
        let entry = EpochLog {
            epoch,
            lr,
            mma: cfg.variant.uses_mffa().then_some(mma / k),
            nod: cfg.variant.uses_dtg().then_some(nod / k),
            ce: ce / k,
            total: total / k,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { model, log })
}

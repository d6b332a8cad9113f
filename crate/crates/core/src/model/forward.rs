use std::sync::Arc;

use serde::Serialize;

use super::{BoundParams, TrainConfig};
use crate::dfrft::DfrftPlan;
use crate::dtg;
use crate::error::{dim_err, Error, Result};
use crate::mffa::{self, AttentionScale, MffaParams, TrainSample};
use crate::numeric::{CVar, ComplexMatrix, Matrix, Tape, Var};

/// `½·(clf([Re v | Im v]) + clf([Re t | Im t]))`, one logit row per sample.
pub fn classify(tape: &mut Tape, vis: &[CVar], tac: &[CVar], weight: Var, bias: Var) -> Result<Var> {
    if vis.len() != tac.len() || vis.is_empty() {
        return dim_err("classifier needs one tactile feature per visual feature");
    }
    let mut branch = |feats: &[CVar]| -> Result<Var> {
        let flat: Vec<Var> = feats.iter().map(|&f| tape.flatten(f)).collect::<Result<_>>()?;
        let x = tape.vstack(&flat)?;
        let z = tape.matmul(x, weight)?;
        tape.add_row(z, bias)
    };
    let zv = branch(vis)?;
    let zt = branch(tac)?;
    let sum = tape.add(zv, zt)?;
    Ok(tape.scale(sum, 0.5))
}

/// [`classify`] for one sample on plain values.
pub fn classify_value(vis: &ComplexMatrix, tac: &ComplexMatrix, weight: &Matrix, bias: &Matrix) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let v = tape.complex_leaf(vis.clone());
    let t = tape.complex_leaf(tac.clone());
    let w = tape.leaf(weight.clone());
    let b = tape.leaf(bias.clone());
    let z = classify(&mut tape, &[v], &[t], w, b)?;
    Ok(tape.value(z).as_slice().to_vec())
}

/// Loss nodes of one training batch. Absent terms belong to switched-off
/// modules.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub mma: Option<Var>,
    pub nod: Option<Var>,
    pub ce: Var,
    pub total: Var,
}

/// Scalar loss values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossTerms {
    pub mma: Option<f64>,
    pub nod: Option<f64>,
    pub ce: f64,
    pub total: f64,
}

impl LossNodes {
    pub fn values(&self, tape: &Tape) -> LossTerms {
        let v = |x: Var| tape.value(x).item();
        LossTerms { mma: self.mma.map(v), nod: self.nod.map(v), ce: v(self.ce), total: v(self.total) }
    }
}

fn raw(tape: &mut Tape, x: &[f64]) -> CVar {
    tape.complex_leaf(ComplexMatrix::from_real(Matrix::row_vector(x)))
}

fn batch_mean(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    let stacked = tape.vstack(terms)?;
    let s = tape.sum(stacked);
    Ok(tape.scale(s, 1.0 / terms.len() as f64))
}

/// Training forward and joint loss `MMA + NOD + CE`.
///
/// MMA and NOD are averaged over the batch like CE. CE reads the
/// tree-enhanced features when the tree is on.
pub fn joint_loss(
    tape: &mut Tape,
    params: &BoundParams,
    batch: &[TrainSample<'_>],
    cfg: &TrainConfig,
    plan: &Arc<DfrftPlan>,
) -> Result<LossNodes> {
    if batch.is_empty() {
        return dim_err("empty batch");
    }
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    let (lang, vis, tac, mma) = if cfg.variant.uses_mffa() {
        let frac = mffa::bind_fractional(tape, plan, params.order)?;
        let feats = mffa::forward_train(tape, batch, &params.mffa, frac, cfg.attention_scale())?;
        let per: Vec<Var> =
            feats.iter().map(|f| mffa::mma_loss(tape, f.lang, f.vis, f.tac, cfg.lambda)).collect::<Result<_>>()?;
        let mma = batch_mean(tape, &per)?;
        (
            feats.iter().map(|f| f.lang).collect::<Vec<_>>(),
            feats.iter().map(|f| f.vis).collect::<Vec<_>>(),
            feats.iter().map(|f| f.tac).collect::<Vec<_>>(),
            Some(mma),
        )
    } else {
        let d = cfg.dim;
        for (i, s) in batch.iter().enumerate() {
            if s.vis.len() != d || s.tac.len() != d || s.lang.len() != d {
                return Err(Error::IncompleteSample(format!("sample {i} lacks a full {d}-dim triple")));
            }
        }
        (
            batch.iter().map(|s| raw(tape, s.lang)).collect(),
            batch.iter().map(|s| raw(tape, s.vis)).collect(),
            batch.iter().map(|s| raw(tape, s.tac)).collect(),
            None,
        )
    };

    let (vis, tac, nod) = if cfg.variant.uses_dtg() {
        let mut nods = Vec::with_capacity(batch.len());
        let mut vh = Vec::with_capacity(batch.len());
        let mut th = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let vt = tape.cadd(vis[i], tac[i])?;
            let root = tape.cadd(vt, lang[i])?;
            let tree = dtg::expand_tree(tape, root, &params.tree)?;
            nods.push(dtg::nod_loss(tape, &tree)?);
            let (v, t) = dtg::enhance(tape, &tree, vis[i], tac[i])?;
            vh.push(v);
            th.push(t);
        }
        (vh, th, Some(batch_mean(tape, &nods)?))
    } else {
        (vis, tac, None)
    };

    let logits = classify(tape, &vis, &tac, params.classifier, params.classifier_bias)?;
    let ce = tape.cross_entropy(logits, &labels)?;
    let mut total = ce;
    for term in [mma, nod].into_iter().flatten() {
        total = tape.add(total, term)?;
    }
    Ok(LossNodes { mma, nod, ce, total })
}

/// Everything inference may read. Tree weights and labels are not part of
/// it.
#[derive(Clone, Copy, Debug)]
pub struct InferenceView<'a> {
    pub mffa: &'a MffaParams,
    pub classifier: &'a Matrix,
    pub classifier_bias: &'a Matrix,
    pub order: f64,
    pub plan: &'a Arc<DfrftPlan>,
    pub use_mffa: bool,
    pub scale: AttentionScale,
}

/// Per-sample inference output.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutput {
    pub logits: Vec<f64>,
    pub vis: ComplexMatrix,
    pub tac: ComplexMatrix,
}

impl SampleOutput {
    /// Lowest index among the maxima.
    pub fn prediction(&self) -> usize {
        let mut best = 0;
        for (i, &z) in self.logits.iter().enumerate() {
            if z > self.logits[best] {
                best = i;
            }
        }
        best
    }

    /// `[Re v | Im v | Re t | Im t]`.
    pub fn feature(&self) -> Vec<f64> {
        let mut out = self.vis.flatten_planes().into_vec();
        out.extend(self.tac.flatten_planes().into_vec());
        out
    }
}

pub fn infer_sample(view: &InferenceView<'_>, vis: &[f64], tac: &[f64]) -> Result<SampleOutput> {
    let d = view.plan.len();
    if vis.len() != d || tac.len() != d {
        return Err(Error::IncompleteSample(format!("pair lacks a full {d}-dim VIS/TAC couple")));
    }
    let mut tape = Tape::new();
    let (v, t) = if view.use_mffa {
        let vars = view.mffa.bind(&mut tape);
        let order = tape.leaf(Matrix::scalar(view.order));
        let frac = mffa::bind_fractional(&mut tape, view.plan, order)?;
        let out = mffa::forward_infer(&mut tape, vis, tac, &vars, frac, view.scale)?;
        (out.vis, out.tac)
    } else {
        (raw(&mut tape, vis), raw(&mut tape, tac))
    };
    let w = tape.leaf(view.classifier.clone());
    let b = tape.leaf(view.classifier_bias.clone());
    let z = classify(&mut tape, &[v], &[t], w, b)?;
    Ok(SampleOutput { logits: tape.value(z).as_slice().to_vec(), vis: tape.cvalue(v), tac: tape.cvalue(t) })
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::TrainConfig;
use crate::dtg::{TreeVars, TreeWeights};
use crate::error::{dim_err, Result};
use crate::mffa::{MffaParams, MffaVars};
use crate::numeric::{Matrix, Tape, Var};

/// Stream offset so initialization and data order draw from unrelated
/// generators under one seed.
const INIT_STREAM: u64 = 0x1A17;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub mffa: MffaParams,
    pub tree: TreeWeights,
    /// `2D × C`.
    pub classifier: Matrix,
    /// `1 × C`.
    pub classifier_bias: Matrix,
    /// `1 × 1` fractional order.
    pub order: Matrix,
    pub order_trainable: bool,
    /// One buffer per tensor, in [`ModelParams::names`] order.
    pub momentum: Vec<Matrix>,
}

/// [`ModelParams`] bound to tape leaves.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub mffa: MffaVars,
    pub tree: TreeVars,
    pub classifier: Var,
    pub classifier_bias: Var,
    pub order: Var,
    /// Every leaf in [`ModelParams::names`] order.
    pub all: Vec<Var>,
}

impl ModelParams {
    pub fn init(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ INIT_STREAM);
        let mffa = MffaParams::init(cfg.dim, cfg.expansion, &mut rng);
        let tree = TreeWeights::init(cfg.generator, cfg.depth, cfg.dim, &mut rng)?;
        let sd = 1.0 / ((2 * cfg.dim) as f64).sqrt();
        let classifier = Matrix::from_fn(2 * cfg.dim, cfg.classes, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
        let mut p = Self {
            mffa,
            tree,
            classifier,
            classifier_bias: Matrix::zeros(1, cfg.classes),
            order: Matrix::scalar(cfg.order.value),
            order_trainable: cfg.order.trainable,
            momentum: Vec::new(),
        };
        p.momentum = p.tensors().iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect();
        Ok(p)
    }

    pub fn order_value(&self) -> f64 {
        self.order.item()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = [
            "mffa/expand_lang",
            "mffa/expand_vis",
            "mffa/expand_tac",
            "mffa/query",
            "mffa/key",
            "mffa/value",
            "mffa/ffn_in",
            "mffa/ffn_in_bias",
            "mffa/ffn_out",
            "mffa/ffn_out_bias",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        names.extend((0..self.tree.matrices.len()).map(|k| format!("tree/w{k}")));
        names.extend(["classifier/weight", "classifier/bias", "order"].iter().map(|s| s.to_string()));
        names
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let m = &self.mffa;
        let mut out = vec![
            &m.expand_lang,
            &m.expand_vis,
            &m.expand_tac,
            &m.query,
            &m.key,
            &m.value,
            &m.ffn_in,
            &m.ffn_in_bias,
            &m.ffn_out,
            &m.ffn_out_bias,
        ];
        out.extend(self.tree.matrices.iter());
        out.extend([&self.classifier, &self.classifier_bias, &self.order]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let m = &mut self.mffa;
        let mut out = vec![
            &mut m.expand_lang,
            &mut m.expand_vis,
            &mut m.expand_tac,
            &mut m.query,
            &mut m.key,
            &mut m.value,
            &mut m.ffn_in,
            &mut m.ffn_in_bias,
            &mut m.ffn_out,
            &mut m.ffn_out_bias,
        ];
        out.extend(self.tree.matrices.iter_mut());
        out.extend([&mut self.classifier, &mut self.classifier_bias, &mut self.order]);
        out
    }

    /// `false` only for a pinned fractional order.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let n = self.tensors().len();
        (0..n).map(|i| i + 1 < n || self.order_trainable).collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Copy with every tensor replaced, in [`Self::names`] order.
    pub fn with_values(&self, values: &[Matrix]) -> Result<Self> {
        let mut out = self.clone();
        let slots = out.tensors_mut();
        if slots.len() != values.len() {
            return dim_err(format!("{} tensors for {} slots", values.len(), slots.len()));
        }
        for (slot, v) in slots.into_iter().zip(values) {
            if slot.shape() != v.shape() {
                return dim_err(format!("tensor {:?} replaced by {:?}", slot.shape(), v.shape()));
            }
            *slot = v.clone();
        }
        Ok(out)
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let mffa = self.mffa.bind(tape);
        let tree = self.tree.bind(tape);
        let classifier = tape.leaf(self.classifier.clone());
        let classifier_bias = tape.leaf(self.classifier_bias.clone());
        let order = tape.leaf(self.order.clone());
        let mut all = vec![
            mffa.expand_lang,
            mffa.expand_vis,
            mffa.expand_tac,
            mffa.query,
            mffa.key,
            mffa.value,
            mffa.ffn_in,
            mffa.ffn_in_bias,
            mffa.ffn_out,
            mffa.ffn_out_bias,
        ];
        all.extend(tree.matrices.iter().copied());
        all.extend([classifier, classifier_bias, order]);
        BoundParams { mffa, tree, classifier, classifier_bias, order, all }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

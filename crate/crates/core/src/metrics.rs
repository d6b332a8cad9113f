//! Classification metrics and the cosine-similarity margin.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

/// How categories with neither support nor predictions enter Macro-F1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbsentClasses {
    /// Count them with F1 = 0.
    #[default]
    Zero,
    /// Leave them out of the average.
    Skip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
}

pub fn top1_accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() || preds.is_empty() {
        return dim_err(format!("{} predictions for {} labels", preds.len(), labels.len()));
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// `confusion[true][pred]`.
pub fn confusion_matrix(preds: &[usize], labels: &[usize], classes: usize) -> Result<Vec<Vec<usize>>> {
    if preds.len() != labels.len() {
        return dim_err(format!("{} predictions for {} labels", preds.len(), labels.len()));
    }
    let mut m = vec![vec![0usize; classes]; classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= classes || l >= classes {
            return Err(Error::Config(format!("label {} out of range for {classes} classes", p.max(l))));
        }
        m[l][p] += 1;
    }
    Ok(m)
}

pub fn per_class_scores(preds: &[usize], labels: &[usize], classes: usize) -> Result<Vec<ClassScores>> {
    let m = confusion_matrix(preds, labels, classes)?;
    Ok((0..classes)
        .map(|c| {
            let tp = m[c][c] as f64;
            let support: usize = m[c].iter().sum();
            let predicted: usize = (0..classes).map(|r| m[r][c]).sum();
            let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let recall = if support > 0 { tp / support as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            ClassScores { precision, recall, f1, support, predicted }
        })
        .collect())
}

pub fn macro_f1(preds: &[usize], labels: &[usize], classes: usize) -> Result<f64> {
    macro_f1_with(preds, labels, classes, AbsentClasses::Zero)
}

pub fn macro_f1_with(preds: &[usize], labels: &[usize], classes: usize, absent: AbsentClasses) -> Result<f64> {
    let scores = per_class_scores(preds, labels, classes)?;
    let kept: Vec<f64> = scores
        .iter()
        .filter(|s| absent == AbsentClasses::Zero || s.support + s.predicted > 0)
        .map(|s| s.f1)
        .collect();
    if kept.is_empty() {
        return Ok(0.0);
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Mean cosine over intra-category pairs minus mean cosine over
/// inter-category pairs. Each group is sampled without replacement down to
/// `max_pairs`; smaller groups are used exhaustively.
pub fn cosine_margin(features: &[Vec<f64>], labels: &[usize], max_pairs: usize, seed: u64) -> Result<f64> {
    if features.len() != labels.len() {
        return dim_err(format!("{} features for {} labels", features.len(), labels.len()));
    }
    let mut intra = Vec::new();
    let mut inter = Vec::new();
    for i in 0..features.len() {
        for j in (i + 1)..features.len() {
            if labels[i] == labels[j] {
                intra.push((i, j));
            } else {
                inter.push((i, j));
            }
        }
    }
    if inter.is_empty() {
        return Err(Error::Degenerate("cosine margin needs at least two categories".into()));
    }
    if intra.is_empty() {
        return Err(Error::Degenerate("cosine margin needs a category with two samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut group_mean = |pairs: &[(usize, usize)]| {
        let chosen: Vec<usize> = if pairs.len() > max_pairs {
            let mut idx = sample(&mut rng, pairs.len(), max_pairs).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..pairs.len()).collect()
        };
        chosen.iter().map(|&k| cosine(&features[pairs[k].0], &features[pairs[k].1])).sum::<f64>() / chosen.len() as f64
    };
    let a = group_mean(&intra);
    let b = group_mean(&inter);
    Ok(a - b)
}

/// Scores for one evaluated domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassScores>,
    pub cosine_margin: Option<f64>,
    pub total: usize,
    pub correct: usize,
}

impl EvalReport {
    pub fn from_predictions(preds: &[usize], labels: &[usize], classes: usize, absent: AbsentClasses) -> Result<Self> {
        let accuracy = top1_accuracy(preds, labels)?;
        Ok(Self {
            accuracy,
            macro_f1: macro_f1_with(preds, labels, classes, absent)?,
            per_class: per_class_scores(preds, labels, classes)?,
            cosine_margin: None,
            total: preds.len(),
            correct: preds.iter().zip(labels).filter(|(p, l)| p == l).count(),
        })
    }

    pub fn per_class_f1(&self) -> Vec<f64> {
        self.per_class.iter().map(|s| s.f1).collect()
    }
}

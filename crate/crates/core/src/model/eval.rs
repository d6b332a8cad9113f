use serde::Serialize;

use super::Model;
use crate::data::Domain;
use crate::error::{Error, Result};
use crate::metrics::{cosine_margin, macro_f1, per_class_scores, top1_accuracy};
use crate::par::Execution;

/// Cap on sampled pairs per group for the cosine margin.
pub const MARGIN_PAIRS: usize = 5000;

/// Loss terms an evaluation can report. Only CE is computable without
/// language; the others stay `null`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EvalLossTerms {
    pub mma: Option<f64>,
    pub nod: Option<f64>,
    pub ce: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DomainMetrics {
    pub domain: String,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
    pub cosine_margin: Option<f64>,
    pub loss_terms: EvalLossTerms,
    #[serde(skip)]
    pub predictions: Vec<usize>,
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn evaluate(model: &Model, domain: &Domain, name: &str, exec: Execution) -> Result<DomainMetrics> {
    let cfg = &model.config;
    if domain.dim != cfg.dim {
        return Err(Error::Incompatible(format!("{name}: width {} but model width {}", domain.dim, cfg.dim)));
    }
    if let Some(p) = domain.pairs.iter().find(|p| p.category >= cfg.classes) {
        return Err(Error::Incompatible(format!("{name}: category {} with {} classes", p.category, cfg.classes)));
    }
    let outputs = model.infer(&domain.pairs, exec)?;
    let labels = domain.labels();
    let predictions: Vec<usize> = outputs.iter().map(|o| o.prediction()).collect();
    let ce = outputs.iter().zip(&labels).map(|(o, &y)| log_sum_exp(&o.logits) - o.logits[y]).sum::<f64>()
        / outputs.len() as f64;
    let features: Vec<Vec<f64>> = outputs.iter().map(|o| o.feature()).collect();
    let margin = match cosine_margin(&features, &labels, MARGIN_PAIRS, cfg.seed) {
        Ok(m) => Some(m),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(DomainMetrics {
        domain: name.to_string(),
        accuracy: top1_accuracy(&predictions, &labels)?,
        macro_f1: macro_f1(&predictions, &labels, cfg.classes)?,
        per_class_f1: per_class_scores(&predictions, &labels, cfg.classes)?.iter().map(|s| s.f1).collect(),
        cosine_margin: margin,
        loss_terms: EvalLossTerms { mma: None, nod: None, ce: Some(ce) },
        predictions,
    })
}

/// Unweighted mean over target domains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TargetAverage {
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub domains: Vec<DomainMetrics>,
    pub average: TargetAverage,
}

pub fn summarize(domains: Vec<DomainMetrics>) -> Result<EvalSummary> {
    if domains.is_empty() {
        return Err(Error::Config("no target domains to average".into()));
    }
    let k = domains.len() as f64;
    let average = TargetAverage {
        accuracy: domains.iter().map(|d| d.accuracy).sum::<f64>() / k,
        macro_f1: domains.iter().map(|d| d.macro_f1).sum::<f64>() / k,
    };
    Ok(EvalSummary { domains, average })
}

//! Variant by generator sweeps behind `omnivat ablate`.

use serde::Serialize;

use crate::data::{Domain, DomainSuite};
use crate::dtg::{node_count, Generator};
use crate::error::Result;
use crate::model::{evaluate, summarize, train, TargetAverage, TrainConfig, Variant};
use crate::par::{self, Execution};

/// Training data for one seed.
#[derive(Clone, Debug)]
pub struct SeedData {
    pub seed: u64,
    pub source: Domain,
    pub targets: Vec<(String, Domain)>,
}

impl SeedData {
    /// Source plus targets named `target_1`, `target_2`, ...
    pub fn from_suite(seed: u64, suite: DomainSuite) -> Self {
        let targets = suite.targets.into_iter().enumerate().map(|(k, t)| (format!("target_{}", k + 1), t)).collect();
        Self { seed, source: suite.source, targets }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationEntry {
    pub variant: String,
    /// `None` for variants without the tree.
    pub generator: Option<String>,
    pub node_count: Option<usize>,
    pub per_seed: Vec<SeedScore>,
    pub mean_accuracy: f64,
    pub mean_macro_f1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeedScore {
    pub seed: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationReport {
    pub entries: Vec<AblationEntry>,
}

impl AblationReport {
    pub fn find(&self, variant: Variant, generator: Option<Generator>) -> Option<&AblationEntry> {
        let g = generator.map(|g| g.to_string());
        self.entries.iter().find(|e| e.variant == variant.to_string() && e.generator == g)
    }
}

/// Variants without the tree run once; the others once per generator.
pub fn ablation_grid(variants: &[Variant], generators: &[Generator]) -> Vec<(Variant, Option<Generator>)> {
    let mut grid = Vec::new();
    for &v in variants {
        if v.uses_dtg() {
            grid.extend(generators.iter().map(|&g| (v, Some(g))));
        } else {
            grid.push((v, None));
        }
    }
    grid
}

/// Trains every grid cell on every seed and averages target scores.
/// Jobs run in parallel; results are gathered in grid order.
pub fn run_ablation(
    base: &TrainConfig,
    data: &[SeedData],
    variants: &[Variant],
    generators: &[Generator],
    exec: Execution,
) -> Result<AblationReport> {
    let grid = ablation_grid(variants, generators);
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..data.len()).map(move |s| (c, s))).collect();
    let scores = par::map_slice(&jobs, exec, |&(c, s)| -> Result<SeedScore> {
        let (variant, generator) = grid[c];
        let d = &data[s];
        let cfg = TrainConfig { variant, generator: generator.unwrap_or(base.generator), seed: d.seed, ..base.clone() };
        let model = train(&cfg, &d.source)?.model;
        let reports = d
            .targets
            .iter()
            .map(|(name, t)| evaluate(&model, t, name, Execution::Sequential))
            .collect::<Result<Vec<_>>>()?;
        let TargetAverage { accuracy, macro_f1 } = summarize(reports)?.average;
        Ok(SeedScore { seed: d.seed, accuracy, macro_f1 })
    });
    let scores: Vec<SeedScore> = scores.into_iter().collect::<Result<_>>()?;
    let entries = grid
        .iter()
        .enumerate()
        .map(|(c, &(variant, generator))| {
            let per_seed: Vec<SeedScore> = scores[c * data.len()..(c + 1) * data.len()].to_vec();
            let k = per_seed.len().max(1) as f64;
            AblationEntry {
                variant: variant.to_string(),
                generator: generator.map(|g| g.to_string()),
                node_count: generator.map(|_| node_count(base.depth)),
                mean_accuracy: per_seed.iter().map(|s| s.accuracy).sum::<f64>() / k,
                mean_macro_f1: per_seed.iter().map(|s| s.macro_f1).sum::<f64>() / k,
                per_seed,
            }
        })
        .collect();
    Ok(AblationReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let grid = ablation_grid(&Variant::ALL, &Generator::ALL);
        assert_eq!(grid.len(), 2 + 2 * 4);
        assert_eq!(grid[0], (Variant::CeOnly, None));
        assert_eq!(ablation_grid(&[Variant::Full], &[Generator::Series]), vec![(Variant::Full, Some(Generator::Series))]);
    }
}

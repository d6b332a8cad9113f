//! Invariant suites behind `omnivat check`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{synth_suite, SynthConfig};
use crate::dfrft::DfrftPlan;
use crate::dtg::{self, Generator, TreeWeights};
use crate::error::Result;
use crate::model::{draw_batch, Model, TrainConfig};
use crate::numeric::{ComplexMatrix, Matrix};
use crate::par::{self, Execution};

pub const DFRFT_SIZES: [usize; 4] = [4, 8, 16, 64];
pub const ORDER_GRID: [f64; 7] = [-1.5, -0.7, 0.0, 0.3, 0.5, 1.0, 2.6];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub suite: &'static str,
    pub invariant: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRow {
    fn below(suite: &'static str, invariant: String, measured: f64, tolerance: f64) -> Self {
        Self { suite, invariant, measured, tolerance, pass: measured < tolerance }
    }
}

/// Knobs for the fault-injection hook.
#[derive(Clone, Copy, Debug, Default)]
pub struct Fault {
    /// Shifts the exponent of one DFrFT eigenvalue by this much.
    pub eigenvalue_shift: f64,
}

fn build_plan(n: usize, fault: Fault) -> Result<DfrftPlan> {
    let mut plan = DfrftPlan::new(n)?;
    if fault.eigenvalue_shift != 0.0 {
        plan.perturb_eigenvalue(1, fault.eigenvalue_shift);
    }
    Ok(plan)
}

fn distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.sub(b).expect("same shape").frobenius_norm()
}

/// Unitarity, additivity, identity, periodicity and the DFT endpoint.
pub fn dfrft_suite(fault: Fault, exec: Execution) -> Result<Vec<CheckRow>> {
    let plans: Vec<DfrftPlan> = DFRFT_SIZES.iter().map(|&n| build_plan(n, fault)).collect::<Result<_>>()?;
    let per_size = par::map_slice(&plans, exec, |plan| {
        let n = plan.len();
        let eye = ComplexMatrix::identity(n);
        let (mut unitary, mut additive, mut periodic) = (0.0f64, 0.0f64, 0.0f64);
        for &p in &ORDER_GRID {
            let f = plan.fractional_matrix(p);
            unitary = unitary.max(distance(&f.conj_transpose().matmul(&f).expect("square"), &eye));
            periodic = periodic.max(distance(&plan.fractional_matrix(p + 4.0), &f));
            for &q in &ORDER_GRID {
                let fq = plan.fractional_matrix(q);
                additive = additive.max(distance(&f.matmul(&fq).expect("square"), &plan.fractional_matrix(p + q)));
            }
        }
        let identity = distance(&plan.fractional_matrix(0.0), &eye);
        let dft = distance(&plan.fractional_matrix(1.0), plan.dft());
        vec![
            CheckRow::below("dfrft", format!("N={n} unitarity"), unitary, 1e-9),
            CheckRow::below("dfrft", format!("N={n} additivity"), additive, 1e-9),
            CheckRow::below("dfrft", format!("N={n} F_0 = I"), identity, 1e-9),
            CheckRow::below("dfrft", format!("N={n} F_(p+4) = F_p"), periodic, 1e-9),
            CheckRow::below("dfrft", format!("N={n} F_1 = DFT"), dft, 1e-9),
        ]
    });
    Ok(per_size.into_iter().flatten().collect())
}

/// Joint-loss gradient against central differences on a small model.
pub fn gradient_suite(exec: Execution) -> Result<Vec<CheckRow>> {
    let cfg = TrainConfig { dim: 8, expansion: 2, depth: 2, batch: 4, ..TrainConfig::default() };
    let suite = synth_suite(&SynthConfig { dim: 8, ..SynthConfig::default() })?;
    let model = Model::new(cfg)?;
    let per = suite.source.pairs.len() / suite.classes;
    let idx: Vec<usize> = (0..4).map(|k| k * per).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = draw_batch(&suite.source, &idx, &mut rng);
    let report = model.gradient_check(&batch, 1e-4, exec)?;
    Ok(vec![CheckRow::below(
        "gradients",
        format!("joint loss, {} scalars, worst relative error", report.checked),
        report.worst_relative,
        1e-4,
    )])
}

/// Closed-form node-diversity values.
pub fn nod_suite() -> Result<Vec<CheckRow>> {
    let node = ComplexMatrix {
        re: Matrix::row_vector(&[0.3, -1.2, 0.5, 2.0]),
        im: Matrix::row_vector(&[0.1, 0.0, -0.4, 0.7]),
    };
    let mut rows = Vec::new();
    for n in [2usize, 4] {
        let layers = vec![vec![node.clone()], vec![node.clone(); n]];
        let got = dtg::nod_loss_value(&layers)?;
        let want = ((n * (n - 1)) as f64).sqrt();
        rows.push(CheckRow::below("nod", format!("{n} identical nodes = sqrt({})", n * (n - 1)), (got - want).abs(), 1e-9));
    }
    let unit = |k: usize| ComplexMatrix::from_real(Matrix::from_fn(1, 8, |_, c| if c == k { 1.0 } else { 0.0 }));
    let orth = vec![vec![unit(0)], vec![unit(1), unit(2)], (3..7).map(unit).collect()];
    rows.push(CheckRow::below("nod", "orthogonal layers = 0".into(), dtg::nod_loss_value(&orth)?.abs(), 1e-9));
    Ok(rows)
}

/// Node counts per layer for every generator and depths 1 to 5.
pub fn tree_suite() -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let root = ComplexMatrix { re: Matrix::filled(1, 4, 0.5), im: Matrix::filled(1, 4, -0.25) };
    for g in Generator::ALL {
        let mut mismatches = 0usize;
        for depth in 1..=5 {
            let w = TreeWeights::init(g, depth, 4, &mut rng)?;
            let tree = dtg::expand_tree_value(&root, &w)?;
            let ok = tree.iter().enumerate().all(|(r, l)| l.len() == 1 << r) && tree.iter().map(Vec::len).sum::<usize>() == dtg::node_count(depth);
            mismatches += usize::from(!ok);
        }
        rows.push(CheckRow::below("tree", format!("{g}: layer sizes 1,2,4,.. for R=1..5"), mismatches as f64, 0.5));
    }
    let w = TreeWeights::identity(Generator::Dtg, 3, 4);
    let count = dtg::expand_tree_value(&root, &w)?.iter().map(Vec::len).sum::<usize>();
    rows.push(CheckRow::below("tree", "R=3 node count is 7".into(), (count as f64 - 7.0).abs(), 0.5));
    Ok(rows)
}

pub fn run_suites(dfrft_only: bool, fault: Fault, exec: Execution) -> Result<Vec<CheckRow>> {
    let mut rows = dfrft_suite(fault, exec)?;
    if !dfrft_only {
        rows.extend(gradient_suite(exec)?);
        rows.extend(nod_suite()?);
        rows.extend(tree_suite()?);
    }
    Ok(rows)
}

pub fn render(rows: &[CheckRow]) -> String {
    let width = rows.iter().map(|r| r.invariant.len()).max().unwrap_or(0);
    let mut out = format!("{:<10} {:<width$} {:>12} {:>10}  result\n", "suite", "invariant", "measured", "tolerance");
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:<width$} {:>12.3e} {:>10.1e}  {}\n",
            r.suite,
            r.invariant,
            r.measured,
            r.tolerance,
            if r.pass { "pass" } else { "FAIL" }
        ));
    }
    out
}

//! Central finite-difference checks of analytic gradients.

use crate::numeric::Matrix;
use crate::par::{map_indexed, Execution};

/// Outcome of comparing analytic gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest `|g − fd| / max(|g|, 1e-8)` seen.
    pub worst_relative: f64,
    /// `(tensor, flat index)` of the worst entry.
    pub worst_at: (usize, usize),
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.worst_relative < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1e-8)
}

/// Central differences `(L(θ+h) − L(θ−h)) / 2h` for every scalar of every
/// tensor not listed in `skip`; skipped tensors come back as zeros.
pub fn numeric_gradients<F>(params: &[Matrix], loss: F, h: f64, skip: &[usize], exec: Execution) -> Vec<Matrix>
where
    F: Fn(&[Matrix]) -> f64 + Sync + Send,
{
    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .filter(|(t, _)| !skip.contains(t))
        .flat_map(|(t, m)| (0..m.len()).map(move |i| (t, i)))
        .collect();
    let numeric = map_indexed(coords.len(), exec, |k| {
        let (t, i) = coords[k];
        let mut p = params.to_vec();
        let x0 = p[t].as_slice()[i];
        p[t].as_mut_slice()[i] = x0 + h;
        let up = loss(&p);
        p[t].as_mut_slice()[i] = x0 - h;
        let down = loss(&p);
        (up - down) / (2.0 * h)
    });
    let mut out: Vec<Matrix> = params.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
    for (&(t, i), fd) in coords.iter().zip(numeric) {
        out[t].as_mut_slice()[i] = fd;
    }
    out
}

/// Perturbs every scalar of every tensor by `±h` and compares the central
/// difference against `analytic`.
///
/// `skip` lists tensors that are intentionally not differentiated.
pub fn check_gradients<F>(
    params: &[Matrix],
    analytic: &[Matrix],
    loss: F,
    h: f64,
    skip: &[usize],
    exec: Execution,
) -> GradCheckReport
where
    F: Fn(&[Matrix]) -> f64 + Sync + Send,
{
    assert_eq!(params.len(), analytic.len());
    let numeric = numeric_gradients(params, loss, h, skip, exec);
    let mut report = GradCheckReport {
        worst_relative: 0.0,
        worst_at: (0, 0),
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        checked: 0,
    };
    for (t, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        if skip.contains(&t) {
            continue;
        }
        for (i, (&g, &fd)) in a.as_slice().iter().zip(n.as_slice()).enumerate() {
            report.checked += 1;
            let rel = relative_error(g, fd);
            if rel > report.worst_relative || rel.is_nan() {
                report.worst_relative = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst_at = (t, i);
                report.analytic_at_worst = g;
                report.numeric_at_worst = fd;
            }
        }
    }
    report
}

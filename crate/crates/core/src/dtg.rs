//! Discrete tree generation.
//!
//! The fused feature `T = v̄ + t̄ + l̄` seeds a binary tree whose children are
//! linear maps of their parent. Layer `r` holds `2^(r−1)` nodes. A diversity
//! loss pushes the nodes of each layer toward mutual orthogonality, and the
//! mean of all nodes is added back onto the visual and tactile features.
//!
//! Nodes are `1 × D` rows and maps act on the right (`child = parent · W`),
//! on both planes with the same real matrix.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{dim_err, Error, Result};
use crate::numeric::{CVar, ComplexMatrix, Matrix, Tape, Var};

/// How the nodes below the root are produced. Every variant yields
/// `2^R − 1` nodes grouped into layers of 1, 2, 4, ….
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Generator {
    /// Binary tree, one matrix per edge.
    #[default]
    Dtg,
    /// Points on the segment from the root to `root · W`, one shared `W`.
    Interp,
    /// A chain: each node is the previous node times its own matrix.
    Series,
    /// Every node is the root times its own matrix.
    Parallel,
}

impl Generator {
    pub const ALL: [Generator; 4] = [Generator::Dtg, Generator::Interp, Generator::Series, Generator::Parallel];

    /// Number of `D × D` matrices needed for depth `depth`.
    pub fn weight_count(self, depth: usize) -> usize {
        let extra = node_count(depth) - 1;
        match self {
            Generator::Interp => usize::from(extra > 0),
            _ => extra,
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::Dtg => "dtg",
            Generator::Interp => "interp",
            Generator::Series => "series",
            Generator::Parallel => "parallel",
        })
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dtg" => Ok(Generator::Dtg),
            "interp" => Ok(Generator::Interp),
            "series" => Ok(Generator::Series),
            "parallel" => Ok(Generator::Parallel),
            other => Err(Error::Config(format!("unknown generator `{other}` (dtg, interp, series, parallel)"))),
        }
    }
}

/// Total node count of a depth-`depth` tree.
pub fn node_count(depth: usize) -> usize {
    (1usize << depth) - 1
}

/// Heap-ordered node indices of layer `r` (1-based).
fn layer_range(r: usize) -> std::ops::Range<usize> {
    ((1usize << (r - 1)) - 1)..((1usize << r) - 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeWeights {
    pub generator: Generator,
    pub depth: usize,
    /// For the binary tree, matrix `k − 1` produces heap node `k`
    /// (children of node `m` are `2m + 1` and `2m + 2`).
    pub matrices: Vec<Matrix>,
}

impl TreeWeights {
    /// Identity plus `N(0, 0.02²)` noise.
    pub fn init(generator: Generator, depth: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("tree depth must be at least 1".into()));
        }
        let matrices = (0..generator.weight_count(depth))
            .map(|_| {
                Matrix::from_fn(dim, dim, |r, c| {
                    let noise: f64 = rng.sample(StandardNormal);
                    let diag = if r == c { 1.0 } else { 0.0 };
                    diag + 0.02 * noise
                })
            })
            .collect();
        Ok(Self { generator, depth, matrices })
    }

    pub fn identity(generator: Generator, depth: usize, dim: usize) -> Self {
        Self { generator, depth, matrices: vec![Matrix::identity(dim); generator.weight_count(depth)] }
    }

    fn check(&self, dim: usize) -> Result<()> {
        if self.depth == 0 {
            return dim_err("tree depth must be at least 1");
        }
        let want = self.generator.weight_count(self.depth);
        if self.matrices.len() != want {
            return dim_err(format!("{} tree matrices, expected {want}", self.matrices.len()));
        }
        if let Some(m) = self.matrices.iter().find(|m| m.shape() != (dim, dim)) {
            return dim_err(format!("tree matrix {}x{} for width {dim}", m.rows(), m.cols()));
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> TreeVars {
        TreeVars {
            generator: self.generator,
            depth: self.depth,
            matrices: self.matrices.iter().map(|m| tape.leaf(m.clone())).collect(),
        }
    }
}

/// [`TreeWeights`] bound to tape leaves.
#[derive(Clone, Debug)]
pub struct TreeVars {
    pub generator: Generator,
    pub depth: usize,
    pub matrices: Vec<Var>,
}

/// Expanded tree as layers of nodes.
#[derive(Clone, Debug)]
pub struct TreeNodes {
    pub layers: Vec<Vec<CVar>>,
}

impl TreeNodes {
    pub fn node_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn all(&self) -> impl Iterator<Item = &CVar> {
        self.layers.iter().flatten()
    }
}

pub fn expand_tree(tape: &mut Tape, root: CVar, w: &TreeVars) -> Result<TreeNodes> {
    let d = tape.value(root.re).cols();
    if tape.value(root.re).rows() != 1 {
        return dim_err("tree root must be a single row");
    }
    if w.depth == 0 || w.matrices.len() != w.generator.weight_count(w.depth) {
        return dim_err("tree weights do not match the depth");
    }
    if w.matrices.iter().any(|&m| tape.value(m).shape() != (d, d)) {
        return dim_err(format!("tree matrices must be {d}x{d}"));
    }
    let n = node_count(w.depth);
    let mut nodes = Vec::with_capacity(n);
    nodes.push(root);
    match w.generator {
        Generator::Dtg => {
            for k in 1..n {
                let parent = nodes[(k - 1) / 2];
                nodes.push(tape.cmatmul_real(parent, w.matrices[k - 1])?);
            }
        }
        Generator::Series => {
            for k in 1..n {
                let prev = nodes[k - 1];
                nodes.push(tape.cmatmul_real(prev, w.matrices[k - 1])?);
            }
        }
        Generator::Parallel => {
            for k in 1..n {
                nodes.push(tape.cmatmul_real(root, w.matrices[k - 1])?);
            }
        }
        Generator::Interp => {
            if n > 1 {
                let end = tape.cmatmul_real(root, w.matrices[0])?;
                let re = tape.sub(end.re, root.re)?;
                let im = tape.sub(end.im, root.im)?;
                for k in 1..n {
                    let t = k as f64 / (n - 1) as f64;
                    let step = CVar { re: tape.scale(re, t), im: tape.scale(im, t) };
                    nodes.push(tape.cadd(root, step)?);
                }
            }
        }
    }
    Ok(TreeNodes { layers: (1..=w.depth).map(|r| nodes[layer_range(r)].to_vec()).collect() })
}

/// Cosine-similarity matrix of the flattened `[Re | Im]` nodes.
pub fn gram(tape: &mut Tape, layer: &[CVar]) -> Result<Var> {
    let flat: Vec<Var> = layer.iter().map(|&n| tape.flatten(n)).collect::<Result<_>>()?;
    let stacked = tape.vstack(&flat)?;
    let unit = tape
        .l2_normalize_rows(stacked)
        .map_err(|_| Error::Degenerate("tree node with near-zero norm".into()))?;
    let t = tape.transpose(unit);
    tape.matmul(unit, t)
}

/// `Σ_r ‖A^(r) − I‖_F`. Single-node layers are exactly zero and skipped.
pub fn nod_loss(tape: &mut Tape, tree: &TreeNodes) -> Result<Var> {
    let mut total: Option<Var> = None;
    for layer in tree.layers.iter().filter(|l| l.len() > 1) {
        let a = gram(tape, layer)?;
        let eye = tape.leaf(Matrix::identity(layer.len()));
        let diff = tape.sub(a, eye)?;
        let norm = tape.frobenius_norm(diff);
        total = Some(match total {
            Some(t) => tape.add(t, norm)?,
            None => norm,
        });
    }
    Ok(total.unwrap_or_else(|| tape.leaf(Matrix::scalar(0.0))))
}

/// Mean of every node in the tree.
pub fn tree_mean(tape: &mut Tape, tree: &TreeNodes) -> Result<CVar> {
    let re: Vec<Var> = tree.all().map(|n| n.re).collect();
    let im: Vec<Var> = tree.all().map(|n| n.im).collect();
    let re = tape.vstack(&re)?;
    let im = tape.vstack(&im)?;
    Ok(CVar { re: tape.mean_rows(re), im: tape.mean_rows(im) })
}

/// `(Mean(T) + v̄, Mean(T) + t̄)`.
pub fn enhance(tape: &mut Tape, tree: &TreeNodes, vis: CVar, tac: CVar) -> Result<(CVar, CVar)> {
    let mean = tree_mean(tape, tree)?;
    Ok((tape.cadd(mean, vis)?, tape.cadd(mean, tac)?))
}

// Value-level conveniences.

pub fn expand_tree_value(root: &ComplexMatrix, w: &TreeWeights) -> Result<Vec<Vec<ComplexMatrix>>> {
    w.check(root.cols())?;
    let mut tape = Tape::new();
    let r = tape.complex_leaf(root.clone());
    let vars = w.bind(&mut tape);
    let tree = expand_tree(&mut tape, r, &vars)?;
    Ok(tree.layers.iter().map(|l| l.iter().map(|&n| tape.cvalue(n)).collect()).collect())
}

fn bind_layers(tape: &mut Tape, layers: &[Vec<ComplexMatrix>]) -> TreeNodes {
    TreeNodes {
        layers: layers.iter().map(|l| l.iter().map(|n| tape.complex_leaf(n.clone())).collect()).collect(),
    }
}

pub fn gram_value(layer: &[ComplexMatrix]) -> Result<Matrix> {
    let mut tape = Tape::new();
    let nodes: Vec<CVar> = layer.iter().map(|n| tape.complex_leaf(n.clone())).collect();
    let a = gram(&mut tape, &nodes)?;
    Ok(tape.value(a).clone())
}

pub fn nod_loss_value(layers: &[Vec<ComplexMatrix>]) -> Result<f64> {
    let mut tape = Tape::new();
    let tree = bind_layers(&mut tape, layers);
    let loss = nod_loss(&mut tape, &tree)?;
    Ok(tape.value(loss).item())
}

pub fn enhance_value(
    layers: &[Vec<ComplexMatrix>],
    vis: &ComplexMatrix,
    tac: &ComplexMatrix,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let mut tape = Tape::new();
    let tree = bind_layers(&mut tape, layers);
    let v = tape.complex_leaf(vis.clone());
    let t = tape.complex_leaf(tac.clone());
    let (v, t) = enhance(&mut tape, &tree, v, t)?;
    Ok((tape.cvalue(v), tape.cvalue(t)))
}

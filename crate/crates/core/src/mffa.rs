//! Multimodal fractional Fourier adapter.
//!
//! Embeddings are expanded to `E` scaled copies, moved into the fractional
//! domain by `F_p`, and rectified per plane. Fractional attention then pools
//! each modality into one `1 × D` complex feature, with language features
//! steering the visual and tactile paths during training. The alignment loss
//! pulls visual and tactile features toward language in KL divergence.
//!
//! Everything operates on a [`Tape`] so gradients reach every parameter and
//! the fractional order. Value-level wrappers at the bottom run a one-off
//! tape for callers that only need outputs.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dfrft::{DfrftPlan, FractionalPlane};
use crate::error::{dim_err, Error, Result};
use crate::numeric::{CVar, ComplexMatrix, Matrix, Tape, Var};

/// Where the `1/√D` factor sits in fractional attention.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AttentionScale {
    /// `softmax(QKᴴ) / √D`.
    #[default]
    AfterSoftmax,
    /// `softmax(QKᴴ / √D)`.
    BeforeSoftmax,
}

/// Trainable adapter weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MffaParams {
    /// `E × 1` expansion scalers per modality.
    pub expand_lang: Matrix,
    pub expand_vis: Matrix,
    pub expand_tac: Matrix,
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
    pub ffn_in: Matrix,
    pub ffn_in_bias: Matrix,
    pub ffn_out: Matrix,
    pub ffn_out_bias: Matrix,
}

impl MffaParams {
    /// Seeded initialization.
    ///
    /// Expansion scalers alternate in sign so that both the positive and the
    /// negative part of each transformed coordinate survive the ReLU.
    /// Value and FFN maps start near the identity, query and key maps at
    /// `N(0, 1/D)`.
    pub fn init(dim: usize, expansion: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut noise = |sd: f64| -> f64 { sd * rng.sample::<f64, _>(StandardNormal) };
        let mut expand = || {
            Matrix::from_vec(
                expansion,
                1,
                (0..expansion).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } + noise(0.1)).collect(),
            )
            .expect("shape")
        };
        let (expand_lang, expand_vis, expand_tac) = (expand(), expand(), expand());
        let mut noise = |sd: f64| -> f64 { sd * rng.sample::<f64, _>(StandardNormal) };
        let sd = 1.0 / (dim as f64).sqrt();
        let query = Matrix::from_fn(dim, dim, |_, _| noise(sd));
        let key = Matrix::from_fn(dim, dim, |_, _| noise(sd));
        let near_identity = |noise: &mut dyn FnMut(f64) -> f64| {
            Matrix::from_fn(dim, dim, |r, c| if r == c { 1.0 } else { 0.0 } + noise(0.02))
        };
        let value = near_identity(&mut noise);
        let ffn_in = near_identity(&mut noise);
        let ffn_out = near_identity(&mut noise);
        Self {
            expand_lang,
            expand_vis,
            expand_tac,
            query,
            key,
            value,
            ffn_in,
            ffn_in_bias: Matrix::zeros(1, dim),
            ffn_out,
            ffn_out_bias: Matrix::zeros(1, dim),
        }
    }

    /// Identity attention maps, identity FFN, unit single-row expansion.
    pub fn identity(dim: usize, expansion: usize) -> Self {
        let ones = Matrix::filled(expansion, 1, 1.0);
        Self {
            expand_lang: ones.clone(),
            expand_vis: ones.clone(),
            expand_tac: ones,
            query: Matrix::identity(dim),
            key: Matrix::identity(dim),
            value: Matrix::identity(dim),
            ffn_in: Matrix::identity(dim),
            ffn_in_bias: Matrix::zeros(1, dim),
            ffn_out: Matrix::identity(dim),
            ffn_out_bias: Matrix::zeros(1, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.query.rows()
    }

    pub fn expansion(&self) -> usize {
        self.expand_vis.rows()
    }

    pub fn bind(&self, tape: &mut Tape) -> MffaVars {
        MffaVars {
            expand_lang: tape.leaf(self.expand_lang.clone()),
            expand_vis: tape.leaf(self.expand_vis.clone()),
            expand_tac: tape.leaf(self.expand_tac.clone()),
            query: tape.leaf(self.query.clone()),
            key: tape.leaf(self.key.clone()),
            value: tape.leaf(self.value.clone()),
            ffn_in: tape.leaf(self.ffn_in.clone()),
            ffn_in_bias: tape.leaf(self.ffn_in_bias.clone()),
            ffn_out: tape.leaf(self.ffn_out.clone()),
            ffn_out_bias: tape.leaf(self.ffn_out_bias.clone()),
        }
    }
}

/// [`MffaParams`] bound to tape leaves.
#[derive(Clone, Copy, Debug)]
pub struct MffaVars {
    pub expand_lang: Var,
    pub expand_vis: Var,
    pub expand_tac: Var,
    pub query: Var,
    pub key: Var,
    pub value: Var,
    pub ffn_in: Var,
    pub ffn_in_bias: Var,
    pub ffn_out: Var,
    pub ffn_out_bias: Var,
}

/// Puts both planes of `F_p` on the tape as functions of the order node.
pub fn bind_fractional(tape: &mut Tape, plan: &Arc<DfrftPlan>, order: Var) -> Result<CVar> {
    Ok(CVar {
        re: tape.path(order, Arc::new(FractionalPlane::real(plan.clone())))?,
        im: tape.path(order, Arc::new(FractionalPlane::imaginary(plan.clone())))?,
    })
}

/// `ReLU(Re(F_p·θ_e e)) + j·ReLU(Im(F_p·θ_e e))`, one row per expansion
/// scaler. Rows are signals, so the transform multiplies on the right
/// (`F_p` is complex symmetric).
pub fn frft_process(tape: &mut Tape, embedding: CVar, expand: Var, frac: CVar) -> Result<CVar> {
    let e = tape.value(embedding.re);
    let d = tape.value(frac.re).rows();
    if e.rows() != 1 || e.cols() != d {
        return dim_err(format!("embedding {}x{} for a length-{d} transform", e.rows(), e.cols()));
    }
    if tape.value(expand).cols() != 1 {
        return dim_err("expansion scalers must be a column");
    }
    let expanded = CVar { re: tape.matmul(expand, embedding.re)?, im: tape.matmul(expand, embedding.im)? };
    let moved = tape.cmatmul(expanded, frac)?;
    Ok(tape.crelu(moved))
}

/// Input to FrFT processing guided by a language feature: `F̄ˡ + E`.
/// `lang` is `None` at inference.
pub fn guided_project(
    tape: &mut Tape,
    lang: Option<CVar>,
    embedding: CVar,
    expand: Var,
    frac: CVar,
) -> Result<CVar> {
    let input = match lang {
        Some(l) => tape.cadd(l, embedding)?,
        None => embedding,
    };
    frft_process(tape, input, expand, frac)
}

/// Mean of the row-averaged features of every sample labelled like
/// `target`. `row_means[i]` is the `1 × D` row average of sample `i`.
pub fn global_class_token(tape: &mut Tape, row_means: &[CVar], labels: &[usize], target: usize) -> Result<CVar> {
    if row_means.len() != labels.len() || target >= labels.len() {
        return dim_err("global token needs one label per sample");
    }
    let same: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == labels[target]).collect();
    if same.is_empty() {
        return Err(Error::Degenerate("no sample shares the target label".into()));
    }
    let re: Vec<Var> = same.iter().map(|&i| row_means[i].re).collect();
    let im: Vec<Var> = same.iter().map(|&i| row_means[i].im).collect();
    let re = tape.vstack(&re)?;
    let im = tape.vstack(&im)?;
    Ok(CVar { re: tape.mean_rows(re), im: tape.mean_rows(im) })
}

/// Fractional attention: queries against `features ⊕ g`, softmax over the
/// real part of `Q Kᴴ`, pooled over query rows, then a shared two-layer FFN
/// on each plane.
pub fn fratt(
    tape: &mut Tape,
    query: CVar,
    features: CVar,
    global: CVar,
    params: &MffaVars,
    scale: AttentionScale,
) -> Result<CVar> {
    let d = tape.value(features.re).cols();
    if tape.value(query.re).cols() != d || tape.value(global.re).shape() != (1, d) {
        return dim_err("query, features and global token disagree on width");
    }
    let kv = tape.cadd_row(features, global)?;
    let q = tape.cmatmul_real(query, params.query)?;
    let k = tape.cmatmul_real(kv, params.key)?;
    let v = tape.cmatmul_real(kv, params.value)?;

    // Re(Q Kᴴ) = Q_re K_reᵀ + Q_im K_imᵀ
    let kt_re = tape.transpose(k.re);
    let kt_im = tape.transpose(k.im);
    let s_re = tape.matmul(q.re, kt_re)?;
    let s_im = tape.matmul(q.im, kt_im)?;
    let scores = tape.add(s_re, s_im)?;

    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let weights = match scale {
        AttentionScale::AfterSoftmax => {
            let w = tape.softmax_rows(scores)?;
            debug_assert!(rows_sum_to_one(tape.value(w)));
            tape.scale(w, inv_sqrt_d)
        }
        AttentionScale::BeforeSoftmax => {
            let s = tape.scale(scores, inv_sqrt_d);
            let w = tape.softmax_rows(s)?;
            debug_assert!(rows_sum_to_one(tape.value(w)));
            w
        }
    };
    let context = CVar { re: tape.matmul(weights, v.re)?, im: tape.matmul(weights, v.im)? };
    let pooled = tape.cmean_rows(context);
    Ok(CVar { re: ffn(tape, pooled.re, params)?, im: ffn(tape, pooled.im, params)? })
}

fn rows_sum_to_one(w: &Matrix) -> bool {
    (0..w.rows()).all(|r| (w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12)
}

fn ffn(tape: &mut Tape, x: Var, params: &MffaVars) -> Result<Var> {
    let h = tape.matmul(x, params.ffn_in)?;
    let h = tape.add_row(h, params.ffn_in_bias)?;
    let h = tape.relu(h);
    let o = tape.matmul(h, params.ffn_out)?;
    tape.add_row(o, params.ffn_out_bias)
}

/// `λ·(KL(σ[l] ‖ σ[v]) + KL(σ[l] ‖ σ[t]))`, where `σ[x]` is the softmax of
/// the flattened `[Re | Im]` feature.
pub fn mma_loss(tape: &mut Tape, lang: CVar, vis: CVar, tac: CVar, lambda: f64) -> Result<Var> {
    let dist = |tape: &mut Tape, x: CVar| -> Result<Var> {
        let flat = tape.flatten(x)?;
        tape.softmax_rows(flat)
    };
    let pl = dist(tape, lang)?;
    let pv = dist(tape, vis)?;
    let pt = dist(tape, tac)?;
    let kv = tape.kl_div(pl, pv)?;
    let kt = tape.kl_div(pl, pt)?;
    let sum = tape.add(kv, kt)?;
    Ok(tape.scale(sum, lambda))
}

/// One training sample as seen by the adapter.
#[derive(Clone, Copy, Debug)]
pub struct TrainSample<'a> {
    pub vis: &'a [f64],
    pub tac: &'a [f64],
    pub lang: &'a [f64],
    pub label: usize,
}

/// Adapter outputs for one training sample.
#[derive(Clone, Copy, Debug)]
pub struct TrainFeatures {
    pub lang: CVar,
    pub vis: CVar,
    pub tac: CVar,
}

/// Adapter outputs for one inference sample.
#[derive(Clone, Copy, Debug)]
pub struct InferFeatures {
    pub vis: CVar,
    pub tac: CVar,
}

fn real_row(tape: &mut Tape, v: &[f64]) -> CVar {
    tape.complex_leaf(ComplexMatrix::from_real(Matrix::row_vector(v)))
}

/// Training forward over a mini-batch. Samples are coupled through the
/// per-class global tokens.
pub fn forward_train(
    tape: &mut Tape,
    batch: &[TrainSample<'_>],
    params: &MffaVars,
    frac: CVar,
    scale: AttentionScale,
) -> Result<Vec<TrainFeatures>> {
    if batch.is_empty() {
        return dim_err("empty batch");
    }
    let d = tape.value(frac.re).rows();
    for (i, s) in batch.iter().enumerate() {
        if s.vis.len() != d || s.tac.len() != d || s.lang.len() != d {
            return Err(Error::IncompleteSample(format!("sample {i} lacks a full {d}-dim VIS/TAC/LANG triple")));
        }
    }
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();

    let lang_feats: Vec<CVar> = batch
        .iter()
        .map(|s| {
            let e = real_row(tape, s.lang);
            frft_process(tape, e, params.expand_lang, frac)
        })
        .collect::<Result<_>>()?;
    let lang_means: Vec<CVar> = lang_feats.iter().map(|f| tape.cmean_rows(*f)).collect();
    let mut lang_bar = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let g = global_class_token(tape, &lang_means, &labels, i)?;
        lang_bar.push(fratt(tape, lang_feats[i], lang_feats[i], g, params, scale)?);
    }

    let guided = |tape: &mut Tape, embeddings: Vec<&[f64]>, expand: Var| -> Result<Vec<CVar>> {
        let feats: Vec<CVar> = embeddings
            .iter()
            .zip(&lang_bar)
            .map(|(x, l)| {
                let e = real_row(tape, x);
                guided_project(tape, Some(*l), e, expand, frac)
            })
            .collect::<Result<_>>()?;
        let means: Vec<CVar> = feats.iter().map(|f| tape.cmean_rows(*f)).collect();
        let mut out = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let g = global_class_token(tape, &means, &labels, i)?;
            out.push(fratt(tape, lang_bar[i], feats[i], g, params, scale)?);
        }
        Ok(out)
    };
    let vis_bar = guided(tape, batch.iter().map(|s| s.vis).collect(), params.expand_vis)?;
    let tac_bar = guided(tape, batch.iter().map(|s| s.tac).collect(), params.expand_tac)?;

    Ok((0..batch.len())
        .map(|i| TrainFeatures { lang: lang_bar[i], vis: vis_bar[i], tac: tac_bar[i] })
        .collect())
}

/// Inference forward for one visual/tactile pair. No language, no labels:
/// each modality attends with its own feature block as the query and uses
/// its own row average as the global token.
pub fn forward_infer(
    tape: &mut Tape,
    vis: &[f64],
    tac: &[f64],
    params: &MffaVars,
    frac: CVar,
    scale: AttentionScale,
) -> Result<InferFeatures> {
    let d = tape.value(frac.re).rows();
    if vis.len() != d || tac.len() != d {
        return Err(Error::IncompleteSample(format!("pair lacks a full {d}-dim VIS/TAC couple")));
    }
    let branch = |tape: &mut Tape, x: &[f64], expand: Var| -> Result<CVar> {
        let e = real_row(tape, x);
        let f = guided_project(tape, None, e, expand, frac)?;
        let g = tape.cmean_rows(f);
        fratt(tape, f, f, g, params, scale)
    };
    let vis = branch(tape, vis, params.expand_vis)?;
    let tac = branch(tape, tac, params.expand_tac)?;
    Ok(InferFeatures { vis, tac })
}

// Value-level conveniences.

fn with_frac(plan: &Arc<DfrftPlan>, p: f64) -> Result<(Tape, CVar)> {
    let mut tape = Tape::new();
    let order = tape.leaf(Matrix::scalar(p));
    let frac = bind_fractional(&mut tape, plan, order)?;
    Ok((tape, frac))
}

/// [`frft_process`] on plain values.
pub fn frft_process_value(embedding: &ComplexMatrix, expand: &Matrix, plan: &Arc<DfrftPlan>, p: f64) -> Result<ComplexMatrix> {
    let (mut tape, frac) = with_frac(plan, p)?;
    let e = tape.complex_leaf(embedding.clone());
    let x = tape.leaf(expand.clone());
    let out = frft_process(&mut tape, e, x, frac)?;
    Ok(tape.cvalue(out))
}

/// [`guided_project`] on plain values.
pub fn guided_project_value(
    lang: Option<&ComplexMatrix>,
    embedding: &[f64],
    expand: &Matrix,
    plan: &Arc<DfrftPlan>,
    p: f64,
) -> Result<ComplexMatrix> {
    let (mut tape, frac) = with_frac(plan, p)?;
    let l = lang.map(|l| tape.complex_leaf(l.clone()));
    let e = real_row(&mut tape, embedding);
    let x = tape.leaf(expand.clone());
    let out = guided_project(&mut tape, l, e, x, frac)?;
    Ok(tape.cvalue(out))
}

/// [`fratt`] on plain values.
pub fn fratt_value(
    query: &ComplexMatrix,
    features: &ComplexMatrix,
    global: &ComplexMatrix,
    params: &MffaParams,
    scale: AttentionScale,
) -> Result<ComplexMatrix> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let q = tape.complex_leaf(query.clone());
    let f = tape.complex_leaf(features.clone());
    let g = tape.complex_leaf(global.clone());
    let out = fratt(&mut tape, q, f, g, &vars, scale)?;
    Ok(tape.cvalue(out))
}

/// [`global_class_token`] on full feature blocks (each `E × D`).
pub fn global_class_token_value(batch: &[ComplexMatrix], labels: &[usize], target: usize) -> Result<ComplexMatrix> {
    let mut tape = Tape::new();
    let means: Vec<CVar> = batch
        .iter()
        .map(|f| {
            let v = tape.complex_leaf(f.clone());
            tape.cmean_rows(v)
        })
        .collect();
    let out = global_class_token(&mut tape, &means, labels, target)?;
    Ok(tape.cvalue(out))
}

/// Inference-mode global token: the sample's own row average.
pub fn self_token_value(features: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix { re: features.re.mean_rows(), im: features.im.mean_rows() }
}

/// [`mma_loss`] on plain values.
pub fn mma_loss_value(lang: &ComplexMatrix, vis: &ComplexMatrix, tac: &ComplexMatrix, lambda: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.complex_leaf(lang.clone());
    let v = tape.complex_leaf(vis.clone());
    let t = tape.complex_leaf(tac.clone());
    let out = mma_loss(&mut tape, l, v, t, lambda)?;
    Ok(tape.value(out).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn plan(n: usize) -> Arc<DfrftPlan> {
        Arc::new(DfrftPlan::new(n).unwrap())
    }

    fn rand_row(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn cm(re: Vec<f64>, im: Vec<f64>) -> ComplexMatrix {
        ComplexMatrix { re: Matrix::row_vector(&re), im: Matrix::row_vector(&im) }
    }

    #[test]
    fn frft_process_identity_order() {
        let e = vec![0.5, 1.0, 0.0, 2.0];
        let out = frft_process_value(&ComplexMatrix::from_real(Matrix::row_vector(&e)), &Matrix::scalar(1.0), &plan(4), 0.0)
            .unwrap();
        for i in 0..4 {
            assert!((out.re[(0, i)] - e[i]).abs() < 1e-12);
            assert!(out.im[(0, i)].abs() < 1e-12);
        }
    }

    #[test]
    fn frft_process_zero_scalers() {
        let e = ComplexMatrix::from_real(Matrix::row_vector(&rand_row(8, 1)));
        let out = frft_process_value(&e, &Matrix::zeros(3, 1), &plan(8), 0.5).unwrap();
        assert_eq!(out.shape(), (3, 8));
        assert!(out.re.max_abs() == 0.0 && out.im.max_abs() == 0.0);
    }

    #[test]
    fn frft_process_matches_clamped_product() {
        let pl = plan(8);
        let e = rand_row(8, 2);
        let theta = Matrix::column_vector(&[1.0, 2.0]);
        let out = frft_process_value(&ComplexMatrix::from_real(Matrix::row_vector(&e)), &theta, &pl, 0.5).unwrap();
        let f = pl.fractional_matrix(0.5);
        for (row, s) in [1.0, 2.0].iter().enumerate() {
            for m in 0..8 {
                let (mut re, mut im) = (0.0, 0.0);
                for n in 0..8 {
                    re += f.re[(m, n)] * s * e[n];
                    im += f.im[(m, n)] * s * e[n];
                }
                assert!((out.re[(row, m)] - re.max(0.0)).abs() < 1e-12);
                assert!((out.im[(row, m)] - im.max(0.0)).abs() < 1e-12);
            }
        }
        assert!(out.re.as_slice().iter().chain(out.im.as_slice()).all(|x| *x >= 0.0));
    }

    #[test]
    fn guided_projection_cases() {
        let pl = plan(8);
        let e = rand_row(8, 3);
        let theta = Matrix::column_vector(&[0.7, -1.1]);
        let unguided = guided_project_value(None, &e, &theta, &pl, 0.5).unwrap();
        let zero = ComplexMatrix::zeros(1, 8);
        assert_eq!(guided_project_value(Some(&zero), &e, &theta, &pl, 0.5).unwrap(), unguided);
        let direct = frft_process_value(&ComplexMatrix::from_real(Matrix::row_vector(&e)), &theta, &pl, 0.5).unwrap();
        assert_eq!(unguided, direct);

        let neg = ComplexMatrix::from_real(Matrix::row_vector(&e).scale(-1.0));
        let cancelled = guided_project_value(Some(&neg), &e, &theta, &pl, 0.5).unwrap();
        assert!(cancelled.frobenius_norm() == 0.0);

        let lang = cm(rand_row(8, 4), rand_row(8, 5));
        let summed = lang.add(&ComplexMatrix::from_real(Matrix::row_vector(&e))).unwrap();
        let guided = guided_project_value(Some(&lang), &e, &theta, &pl, 0.5).unwrap();
        let oracle = frft_process_value(&summed, &theta, &pl, 0.5).unwrap();
        assert!(guided.sub(&oracle).unwrap().frobenius_norm() < 1e-14);
    }

    #[test]
    fn global_token_averages_same_label() {
        let a = cm(vec![1.0, 2.0], vec![0.0, 1.0]);
        assert_eq!(global_class_token_value(&[a.clone()], &[0], 0).unwrap(), a);
        assert_eq!(global_class_token_value(&[a.clone(), a.clone()], &[3, 3], 1).unwrap(), a);

        let blocks = vec![
            ComplexMatrix { re: Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(), im: Matrix::zeros(2, 2) },
            ComplexMatrix { re: Matrix::from_vec(2, 2, vec![9.0, 9.0, 9.0, 9.0]).unwrap(), im: Matrix::zeros(2, 2) },
            ComplexMatrix { re: Matrix::from_vec(2, 2, vec![0.0, 1.0, 2.0, 1.0]).unwrap(), im: Matrix::filled(2, 2, 1.0) },
        ];
        let g = global_class_token_value(&blocks, &[0, 1, 0], 2).unwrap();
        // Row averages: (2,3) and (1,1); mean (1.5, 2); imag (0+1)/2.
        assert_eq!(g.re.as_slice(), &[1.5, 2.0]);
        assert_eq!(g.im.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn single_key_attention_scales_value() {
        let d = 4;
        let f = cm(vec![0.3, 1.2, 0.0, 0.7], vec![0.1, 0.0, 0.4, 0.2]);
        let out = fratt_value(&f, &f, &ComplexMatrix::zeros(1, d), &MffaParams::identity(d, 1), AttentionScale::AfterSoftmax)
            .unwrap();
        let expect = f.scale(0.5);
        assert!(out.sub(&expect).unwrap().frobenius_norm() < 1e-14);
    }

    #[test]
    fn duplicate_keys_match_single_key() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = MffaParams::init(4, 2, &mut rng);
        let row = cm(rand_row(4, 10).iter().map(|x| x.abs()).collect(), rand_row(4, 11).iter().map(|x| x.abs()).collect());
        let doubled = ComplexMatrix {
            re: Matrix::vstack(&[&row.re, &row.re]).unwrap(),
            im: Matrix::vstack(&[&row.im, &row.im]).unwrap(),
        };
        let q = cm(rand_row(4, 12), rand_row(4, 13));
        let g = cm(rand_row(4, 14), rand_row(4, 15));
        let one = fratt_value(&q, &row, &g, &params, AttentionScale::AfterSoftmax).unwrap();
        let two = fratt_value(&q, &doubled, &g, &params, AttentionScale::AfterSoftmax).unwrap();
        assert!(one.sub(&two).unwrap().frobenius_norm() < 1e-12);
    }

    /// Straight-line loops over every index, written without the tape.
    fn fratt_oracle(
        q: &ComplexMatrix,
        f: &ComplexMatrix,
        g: &ComplexMatrix,
        p: &MffaParams,
        scale: AttentionScale,
    ) -> (Vec<f64>, Vec<f64>) {
        let d = f.cols();
        let (nq, nk) = (q.rows(), f.rows());
        let proj = |x: &Matrix, w: &Matrix, r: usize| -> Vec<f64> {
            (0..d).map(|c| (0..d).map(|k| x[(r, k)] * w[(k, c)]).sum()).collect()
        };
        let kv_re = Matrix::from_fn(nk, d, |r, c| f.re[(r, c)] + g.re[(0, c)]);
        let kv_im = Matrix::from_fn(nk, d, |r, c| f.im[(r, c)] + g.im[(0, c)]);
        let mut pooled = (vec![0.0; d], vec![0.0; d]);
        for i in 0..nq {
            let (qr, qi) = (proj(&q.re, &p.query, i), proj(&q.im, &p.query, i));
            let mut s = vec![0.0; nk];
            for j in 0..nk {
                let (kr, ki) = (proj(&kv_re, &p.key, j), proj(&kv_im, &p.key, j));
                s[j] = (0..d).map(|c| qr[c] * kr[c] + qi[c] * ki[c]).sum();
            }
            let pre = if scale == AttentionScale::BeforeSoftmax { (d as f64).sqrt() } else { 1.0 };
            let post = if scale == AttentionScale::AfterSoftmax { (d as f64).sqrt() } else { 1.0 };
            let m = s.iter().map(|x| x / pre).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = s.iter().map(|x| (x / pre - m).exp()).sum();
            for j in 0..nk {
                let w = (s[j] / pre - m).exp() / z / post;
                let (vr, vi) = (proj(&kv_re, &p.value, j), proj(&kv_im, &p.value, j));
                for c in 0..d {
                    pooled.0[c] += w * vr[c] / nq as f64;
                    pooled.1[c] += w * vi[c] / nq as f64;
                }
            }
        }
        let ffn = |x: &[f64]| -> Vec<f64> {
            let h: Vec<f64> = (0..d)
                .map(|c| ((0..d).map(|k| x[k] * p.ffn_in[(k, c)]).sum::<f64>() + p.ffn_in_bias[(0, c)]).max(0.0))
                .collect();
            (0..d).map(|c| (0..d).map(|k| h[k] * p.ffn_out[(k, c)]).sum::<f64>() + p.ffn_out_bias[(0, c)]).collect()
        };
        (ffn(&pooled.0), ffn(&pooled.1))
    }

    #[test]
    fn fratt_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut params = MffaParams::init(4, 3, &mut rng);
        params.ffn_in_bias = Matrix::row_vector(&[0.1, -0.2, 0.05, 0.3]);
        params.ffn_out_bias = Matrix::row_vector(&[-0.1, 0.2, 0.0, 0.4]);
        let feat = ComplexMatrix {
            re: Matrix::from_fn(3, 4, |r, c| ((r * 4 + c) as f64 * 0.37).sin().abs()),
            im: Matrix::from_fn(3, 4, |r, c| ((r * 4 + c) as f64 * 0.91).cos().abs()),
        };
        let g = cm(rand_row(4, 22), rand_row(4, 23));
        for scale in [AttentionScale::AfterSoftmax, AttentionScale::BeforeSoftmax] {
            let out = fratt_value(&feat, &feat, &g, &params, scale).unwrap();
            let (re, im) = fratt_oracle(&feat, &feat, &g, &params, scale);
            for c in 0..4 {
                assert!((out.re[(0, c)] - re[c]).abs() < 1e-12);
                assert!((out.im[(0, c)] - im[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mma_loss_cases() {
        let l = cm(rand_row(6, 31), rand_row(6, 32));
        assert!(mma_loss_value(&l, &l, &l, 10.0).unwrap().abs() < 1e-12);
        let v = cm(rand_row(6, 33), rand_row(6, 34));
        let t = cm(rand_row(6, 35), rand_row(6, 36));
        let one = mma_loss_value(&l, &v, &t, 1.0).unwrap();
        let two = mma_loss_value(&l, &v, &t, 2.0).unwrap();
        assert!(one > 0.0);
        assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn mma_loss_scalar_oracle() {
        // D=1, l=(1,0), v=(0,1), t=(1,0) as [Re, Im].
        let l = cm(vec![1.0], vec![0.0]);
        let v = cm(vec![0.0], vec![1.0]);
        let got = mma_loss_value(&l, &v, &l, 1.0).unwrap();
        // softmax([1,0]) = (e/(1+e), 1/(1+e)); KL against its mirror image.
        let e = std::f64::consts::E;
        let (a, b) = (e / (1.0 + e), 1.0 / (1.0 + e));
        let expect = a * (a / b).ln() + b * (b / a).ln();
        assert!((got - expect).abs() < 1e-15);
        // Closed form: (a − b)·ln(a/b) = tanh(1/2)·1
        assert!((expect - (0.5f64).tanh()).abs() < 1e-15);
    }
}

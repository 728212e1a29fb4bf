//! The four differentiable training terms: symmetrized in-batch InfoNCE,
//! the spherical alignment surrogate, the step-2 InfoNCE on concatenated
//! latents, and the batch orthogonality penalty — plus the step-1 and
//! step-2 composites that training minimizes.

pub mod vmf;

use crate::error::{Error, Result};
use crate::numerics::mlp::forward_from_nodes;
use crate::numerics::{Graph, Mlp, NodeId, Tensor};
use serde::{Deserialize, Serialize};

/// Weights and temperatures shared by the loss composites.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// InfoNCE temperature.
    pub tau: f64,
    /// Weight of the alignment term in the step-1 objective.
    pub beta: f64,
    /// Weight of the orthogonality penalty in the step-2 objective.
    pub lambda: f64,
    /// vMF concentration; only used when `vmf_sampling` is on. Under
    /// deterministic encoding (the default) its effect is absorbed into
    /// `beta`.
    pub kappa: f64,
    /// Sample shared codes from vMF(μ, κ) instead of using μ directly.
    pub vmf_sampling: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { tau: 0.5, beta: 0.0, lambda: 0.0, kappa: 100.0, vmf_sampling: false }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.beta < 0.0 || self.lambda < 0.0 {
            return Err(Error::Config("beta and lambda must be non-negative".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        Ok(())
    }
}

/// Symmetrized in-batch InfoNCE between row-aligned batches. Row i of `za`
/// and row i of `zb` are the positive pair; the other B−1 rows of the
/// opposite side are the negatives. Both retrieval directions are averaged.
/// Callers normalize rows beforehand.
pub fn info_nce_node(g: &mut Graph, za: NodeId, zb: NodeId, tau: f64) -> Result<NodeId> {
    let (ba, da) = g.value(za).shape();
    let (bb, db) = g.value(zb).shape();
    if ba == 0 {
        return Err(Error::Usage("info_nce needs a non-empty batch".into()));
    }
    if ba != bb || da != db {
        return Err(Error::Usage(format!(
            "info_nce shape mismatch: {ba}x{da} vs {bb}x{db}"
        )));
    }
    let sims = g.matmul_nt(za, zb);
    let logits = g.scale(sims, 1.0 / tau);
    let pos = g.diag(logits);
    let lse_rows = g.log_sum_exp_rows(logits);
    let logits_t = g.transpose(logits);
    let lse_cols = g.log_sum_exp_rows(logits_t);
    let lse_both = g.add(lse_rows, lse_cols);
    let pos_both = g.scale(pos, 2.0);
    let per_row = g.sub(lse_both, pos_both);
    let mean = g.mean_all(per_row);
    Ok(g.scale(mean, 0.5))
}

/// Mean over rows of μ₁ᵢᵀμ₂ᵢ; in [−1, 1] for unit rows.
pub fn alignment_node(g: &mut Graph, mu1: NodeId, mu2: NodeId) -> Result<NodeId> {
    if g.value(mu1).shape() != g.value(mu2).shape() {
        return Err(Error::Usage("alignment shape mismatch".into()));
    }
    let d = g.row_dot(mu1, mu2);
    Ok(g.mean_all(d))
}

/// Frobenius norm of the d_s×d_c matrix of cosine similarities between
/// latent dimensions, with each dimension (column) unit-normalized across
/// the batch.
pub fn orthogonal_loss_node(g: &mut Graph, zs: NodeId, zc: NodeId) -> Result<NodeId> {
    let b = g.value(zs).rows();
    if b < 2 {
        return Err(Error::Usage(format!(
            "orthogonal_loss needs a batch of at least 2, got {b}"
        )));
    }
    if g.value(zc).rows() != b {
        return Err(Error::Usage("orthogonal_loss batch size mismatch".into()));
    }
    let zs_n = g.col_normalize(zs);
    let zc_n = g.col_normalize(zc);
    let m = g.matmul_tn(zs_n, zc_n);
    Ok(g.frobenius_norm(m))
}

/// Builds the step-1 objective `info_nce(ẑ¹, ẑ², τ) − β·alignment(μ¹, μ²)`
/// from bare encoder parameter leaves. Encoder outputs are row-normalized
/// to the sphere; with `vmf_sampling` the InfoNCE inputs are vMF draws
/// around μ, passed through with identity gradient.
#[allow(clippy::too_many_arguments)]
pub fn step1_loss_from_nodes(
    g: &mut Graph,
    enc1_w: &[NodeId],
    enc1_b: &[NodeId],
    enc2_w: &[NodeId],
    enc2_b: &[NodeId],
    x1: NodeId,
    x2: NodeId,
    cfg: &LossConfig,
    vmf_rng: Option<&mut rand_chacha::ChaCha8Rng>,
) -> Result<NodeId> {
    cfg.validate()?;
    let h1 = forward_from_nodes(g, enc1_w, enc1_b, x1);
    let h2 = forward_from_nodes(g, enc2_w, enc2_b, x2);
    let mu1 = g.row_normalize(h1);
    let mu2 = g.row_normalize(h2);
    let (z1, z2) = if cfg.vmf_sampling {
        let rng = vmf_rng
            .ok_or_else(|| Error::Usage("vmf_sampling requires a randomness stream".into()))?;
        let s1 = vmf::sample_rows(g.value(mu1), cfg.kappa, rng)?;
        let s2 = vmf::sample_rows(g.value(mu2), cfg.kappa, rng)?;
        // Straight-through: value is the sample, gradient flows as if z = μ.
        let d1 = g.constant(s1.sub(g.value(mu1)));
        let d2 = g.constant(s2.sub(g.value(mu2)));
        (g.add(mu1, d1), g.add(mu2, d2))
    } else {
        (mu1, mu2)
    };
    let nce = info_nce_node(g, z1, z2, cfg.tau)?;
    let align = alignment_node(g, mu1, mu2)?;
    let weighted = g.scale(align, cfg.beta);
    Ok(g.sub(nce, weighted))
}

/// Shared codes for the two views of a step-2 batch, each row-normalized.
/// They are inserted into step-2 graphs as constants, which is the gradient
/// barrier keeping step-1 encoders frozen.
#[derive(Clone, Debug)]
pub struct Step2Codes {
    pub zc1a: Tensor,
    pub zc2a: Tensor,
    pub zc1b: Tensor,
    pub zc2b: Tensor,
}

impl Step2Codes {
    /// Encodes both views of both modalities with the (frozen) shared
    /// encoders.
    pub fn compute(
        shared1: &Mlp,
        shared2: &Mlp,
        x1a: &Tensor,
        x2a: &Tensor,
        x1b: &Tensor,
        x2b: &Tensor,
    ) -> Result<Self> {
        Ok(Step2Codes {
            zc1a: shared1.forward(x1a)?.l2_normalize_rows(),
            zc2a: shared2.forward(x2a)?.l2_normalize_rows(),
            zc1b: shared1.forward(x1b)?.l2_normalize_rows(),
            zc2b: shared2.forward(x2b)?.l2_normalize_rows(),
        })
    }
}

/// Builds the step-2 objective from bare specific-encoder parameter leaves:
///
/// ```text
/// L = infonce([ẑ_s¹|ẑ_c²]_a, [ẑ_s¹|ẑ_c²]_b)
///   + infonce([ẑ_s²|ẑ_c¹]_a, [ẑ_s²|ẑ_c¹]_b)
///   + λ · ½ Σ_{view ∈ {a,b}} Σ_{i ∈ {1,2}} orth(ẑ_s^i, ẑ_c^i)
/// ```
///
/// Each concatenation is normalized as one vector before InfoNCE. Specific
/// encoders see `concat(x_view, ẑ_c_view)` of their own modality.
#[allow(clippy::too_many_arguments)]
pub fn step2_loss_from_nodes(
    g: &mut Graph,
    spec1_w: &[NodeId],
    spec1_b: &[NodeId],
    spec2_w: &[NodeId],
    spec2_b: &[NodeId],
    x1a: &Tensor,
    x2a: &Tensor,
    x1b: &Tensor,
    x2b: &Tensor,
    codes: &Step2Codes,
    cfg: &LossConfig,
) -> Result<NodeId> {
    cfg.validate()?;
    let in1a = g.constant(x1a.concat_cols(&codes.zc1a));
    let in1b = g.constant(x1b.concat_cols(&codes.zc1b));
    let in2a = g.constant(x2a.concat_cols(&codes.zc2a));
    let in2b = g.constant(x2b.concat_cols(&codes.zc2b));
    let zs1a = forward_from_nodes(g, spec1_w, spec1_b, in1a);
    let zs1b = forward_from_nodes(g, spec1_w, spec1_b, in1b);
    let zs2a = forward_from_nodes(g, spec2_w, spec2_b, in2a);
    let zs2b = forward_from_nodes(g, spec2_w, spec2_b, in2b);

    let c1a = g.constant(codes.zc1a.clone());
    let c1b = g.constant(codes.zc1b.clone());
    let c2a = g.constant(codes.zc2a.clone());
    let c2b = g.constant(codes.zc2b.clone());

    // Cross-modal concatenations, normalized jointly.
    let cat1a = g.concat_cols(zs1a, c2a);
    let cat1b = g.concat_cols(zs1b, c2b);
    let cat2a = g.concat_cols(zs2a, c1a);
    let cat2b = g.concat_cols(zs2b, c1b);
    let n1a = g.row_normalize(cat1a);
    let n1b = g.row_normalize(cat1b);
    let n2a = g.row_normalize(cat2a);
    let n2b = g.row_normalize(cat2b);
    let nce1 = info_nce_node(g, n1a, n1b, cfg.tau)?;
    let nce2 = info_nce_node(g, n2a, n2b, cfg.tau)?;
    let nce = g.add(nce1, nce2);
    if cfg.lambda == 0.0 {
        return Ok(nce);
    }

    let o1a = orthogonal_loss_node(g, zs1a, c1a)?;
    let o1b = orthogonal_loss_node(g, zs1b, c1b)?;
    let o2a = orthogonal_loss_node(g, zs2a, c2a)?;
    let o2b = orthogonal_loss_node(g, zs2b, c2b)?;
    let s1 = g.add(o1a, o1b);
    let s2 = g.add(o2a, o2b);
    let osum = g.add(s1, s2);
    let orth = g.scale(osum, 0.5);
    let penalty = g.scale(orth, cfg.lambda);
    Ok(g.add(nce, penalty))
}

// ── Value-level conveniences ─────────────────────────────────────────────

pub fn info_nce(za: &Tensor, zb: &Tensor, tau: f64) -> Result<f64> {
    let mut g = Graph::new();
    let a = g.constant(za.clone());
    let b = g.constant(zb.clone());
    let l = info_nce_node(&mut g, a, b, tau)?;
    Ok(g.value(l).get(0, 0))
}

pub fn alignment(mu1: &Tensor, mu2: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let a = g.constant(mu1.clone());
    let b = g.constant(mu2.clone());
    let l = alignment_node(&mut g, a, b)?;
    Ok(g.value(l).get(0, 0))
}

pub fn orthogonal_loss(zs: &Tensor, zc: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let a = g.constant(zs.clone());
    let b = g.constant(zc.clone());
    let l = orthogonal_loss_node(&mut g, a, b)?;
    Ok(g.value(l).get(0, 0))
}

/// Step-1 loss value for fixed encoders on one batch.
pub fn step1_loss(enc1: &Mlp, enc2: &Mlp, x1: &Tensor, x2: &Tensor, cfg: &LossConfig) -> Result<f64> {
    let mut g = Graph::new();
    let x1n = g.constant(x1.clone());
    let x2n = g.constant(x2.clone());
    let n1 = enc1.insert_frozen(&mut g);
    let n2 = enc2.insert_frozen(&mut g);
    let l = step1_loss_from_nodes(
        &mut g, &n1.weights, &n1.biases, &n2.weights, &n2.biases, x1n, x2n, cfg, None,
    )?;
    Ok(g.value(l).get(0, 0))
}

/// Step-2 loss value for fixed encoders on one pair of views.
#[allow(clippy::too_many_arguments)]
pub fn step2_loss(
    shared1: &Mlp,
    shared2: &Mlp,
    spec1: &Mlp,
    spec2: &Mlp,
    x1a: &Tensor,
    x2a: &Tensor,
    x1b: &Tensor,
    x2b: &Tensor,
    cfg: &LossConfig,
) -> Result<f64> {
    let codes = Step2Codes::compute(shared1, shared2, x1a, x2a, x1b, x2b)?;
    let mut g = Graph::new();
    let n1 = spec1.insert_frozen(&mut g);
    let n2 = spec2.insert_frozen(&mut g);
    let l = step2_loss_from_nodes(
        &mut g, &n1.weights, &n1.biases, &n2.weights, &n2.biases, x1a, x2a, x1b, x2b, &codes, cfg,
    )?;
    Ok(g.value(l).get(0, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn unit_rows(seed: u64, rows: usize, cols: usize) -> Tensor {
        Tensor::gaussian(&mut stream(seed, "losses"), rows, cols, 0.0, 1.0).l2_normalize_rows()
    }

    #[test]
    fn info_nce_single_row_is_zero() {
        let z = unit_rows(1, 1, 4);
        assert!(info_nce(&z, &z, 0.7).unwrap().abs() < 1e-12);
    }

    #[test]
    fn info_nce_collapse_is_ln_b() {
        // All rows identical: every softmax is uniform, so the loss is ln B.
        for b in [2usize, 5, 17] {
            let row = unit_rows(2, 1, 3);
            let mut z = Tensor::zeros(b, 3);
            for i in 0..b {
                z.row_mut(i).copy_from_slice(row.row(0));
            }
            let l = info_nce(&z, &z, 0.5).unwrap();
            assert!((l - (b as f64).ln()).abs() < 1e-12, "B={b}: {l}");
        }
    }

    #[test]
    fn info_nce_two_by_two_hand_case() {
        let za = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let l = info_nce(&za, &za, 1.0).unwrap();
        let expect = (1.0 + (-1.0f64).exp()).ln();
        assert!((l - expect).abs() < 1e-12, "{l} vs {expect}");
        assert!((l - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn info_nce_is_nonnegative() {
        for seed in 0..8 {
            let za = unit_rows(seed, 6, 4);
            let zb = unit_rows(seed + 100, 6, 4);
            assert!(info_nce(&za, &zb, 0.3).unwrap() >= 0.0);
        }
    }

    #[test]
    fn info_nce_rejects_empty_and_mismatched() {
        let z = unit_rows(1, 2, 3);
        let empty = Tensor::zeros(0, 3);
        assert!(matches!(info_nce(&empty, &empty, 0.5), Err(Error::Usage(_))));
        let other = unit_rows(2, 3, 3);
        assert!(matches!(info_nce(&z, &other, 0.5), Err(Error::Usage(_))));
    }

    #[test]
    fn alignment_identities() {
        let mu = unit_rows(3, 5, 4);
        assert!((alignment(&mu, &mu).unwrap() - 1.0).abs() < 1e-12);
        assert!((alignment(&mu, &mu.scale(-1.0)).unwrap() + 1.0).abs() < 1e-12);
        // Orthogonal pairs: e_i vs e_j.
        let a = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(alignment(&a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn orthogonal_loss_identical_single_columns() {
        let z = Tensor::from_rows(&[vec![1.0], vec![2.0], vec![-0.5]]).unwrap();
        let l = orthogonal_loss(&z, &z).unwrap();
        assert!((l - 1.0).abs() < 1e-9, "{l}");
    }

    #[test]
    fn orthogonal_loss_orthogonal_columns_is_zero() {
        let zs = Tensor::from_rows(&[vec![1.0], vec![0.0], vec![0.0]]).unwrap();
        let zc = Tensor::from_rows(&[vec![0.0], vec![1.0], vec![0.0]]).unwrap();
        assert!(orthogonal_loss(&zs, &zc).unwrap().abs() < 1e-9);
    }

    #[test]
    fn orthogonal_loss_bounded_by_sqrt_dsdc() {
        for seed in 0..6 {
            let zs = Tensor::gaussian(&mut stream(seed, "orth"), 7, 3, 0.0, 1.0);
            let zc = Tensor::gaussian(&mut stream(seed, "orth2"), 7, 4, 0.0, 1.0);
            let l = orthogonal_loss(&zs, &zc).unwrap();
            assert!(l >= 0.0 && l <= (12.0f64).sqrt() + 1e-9, "{l}");
        }
    }

    #[test]
    fn orthogonal_loss_needs_two_rows() {
        let z = Tensor::zeros(1, 2);
        assert!(matches!(orthogonal_loss(&z, &z), Err(Error::Usage(_))));
    }

    #[test]
    fn step1_beta_zero_is_plain_info_nce() {
        let mut rng = stream(7, "s1");
        let enc1 = Mlp::new(&[6, 8, 3], &mut rng).unwrap();
        let enc2 = Mlp::new(&[6, 8, 3], &mut rng).unwrap();
        let x1 = Tensor::gaussian(&mut rng, 5, 6, 0.0, 1.0);
        let x2 = Tensor::gaussian(&mut rng, 5, 6, 0.0, 1.0);
        let cfg = LossConfig { tau: 0.5, beta: 0.0, ..LossConfig::default() };
        let composite = step1_loss(&enc1, &enc2, &x1, &x2, &cfg).unwrap();
        let z1 = enc1.forward(&x1).unwrap().l2_normalize_rows();
        let z2 = enc2.forward(&x2).unwrap().l2_normalize_rows();
        let direct = info_nce(&z1, &z2, 0.5).unwrap();
        assert!((composite - direct).abs() < 1e-12);
    }

    #[test]
    fn step1_collapsed_encoders_give_ln_b_minus_beta() {
        // Zero weights with a nonzero bias map every input to the same
        // nonzero row, so after normalization all outputs coincide.
        let mut rng = stream(8, "s1c");
        let mut enc1 = Mlp::new(&[4, 3], &mut rng).unwrap();
        let mut enc2 = Mlp::new(&[4, 3], &mut rng).unwrap();
        for enc in [&mut enc1, &mut enc2] {
            let l = &mut enc.layers[0];
            l.weight = Tensor::zeros(4, 3);
            l.bias = Tensor::from_rows(&[vec![1.0, 2.0, -1.0]]).unwrap();
        }
        let b = 6;
        let x1 = Tensor::gaussian(&mut rng, b, 4, 0.0, 1.0);
        let x2 = Tensor::gaussian(&mut rng, b, 4, 0.0, 1.0);
        let beta = 1.7;
        let cfg = LossConfig { tau: 0.5, beta, ..LossConfig::default() };
        let loss = step1_loss(&enc1, &enc2, &x1, &x2, &cfg).unwrap();
        assert!((loss - ((b as f64).ln() - beta)).abs() < 1e-9, "{loss}");
    }

    #[test]
    fn step1_matches_compositional_oracle() {
        // Independent single-purpose routines coded inline: a plain softmax
        // cross-entropy InfoNCE and a mean row-dot alignment.
        let mut rng = stream(9, "s1o");
        let enc1 = Mlp::new(&[5, 7, 3], &mut rng).unwrap();
        let enc2 = Mlp::new(&[5, 7, 3], &mut rng).unwrap();
        let b = 8;
        let x1 = Tensor::gaussian(&mut rng, b, 5, 0.0, 1.0);
        let x2 = Tensor::gaussian(&mut rng, b, 5, 0.0, 1.0);
        let (tau, beta) = (0.5, 1.0);
        let cfg = LossConfig { tau, beta, ..LossConfig::default() };
        let composite = step1_loss(&enc1, &enc2, &x1, &x2, &cfg).unwrap();

        let z1 = enc1.forward(&x1).unwrap().l2_normalize_rows();
        let z2 = enc2.forward(&x2).unwrap().l2_normalize_rows();
        let mut nce = 0.0;
        for i in 0..b {
            let mut row_terms = vec![0.0; b];
            let mut col_terms = vec![0.0; b];
            for j in 0..b {
                let sij: f64 =
                    z1.row(i).iter().zip(z2.row(j)).map(|(a, c)| a * c).sum::<f64>() / tau;
                let sji: f64 =
                    z1.row(j).iter().zip(z2.row(i)).map(|(a, c)| a * c).sum::<f64>() / tau;
                row_terms[j] = sij;
                col_terms[j] = sji;
            }
            let sii = row_terms[i];
            let lse = |v: &[f64]| {
                let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                m + v.iter().map(|&t| (t - m).exp()).sum::<f64>().ln()
            };
            nce += (lse(&row_terms) - sii) + (lse(&col_terms) - sii);
        }
        nce /= 2.0 * b as f64;
        let mut align = 0.0;
        for i in 0..b {
            align += z1.row(i).iter().zip(z2.row(i)).map(|(a, c)| a * c).sum::<f64>();
        }
        align /= b as f64;
        let oracle = nce - beta * align;
        assert!((composite - oracle).abs() < 1e-12, "{composite} vs {oracle}");
    }

    #[test]
    fn step2_identical_views_single_row_lambda_zero_is_zero() {
        let mut rng = stream(10, "s2");
        let shared1 = Mlp::new(&[4, 6, 3], &mut rng).unwrap();
        let shared2 = Mlp::new(&[4, 6, 3], &mut rng).unwrap();
        let spec1 = Mlp::new(&[7, 6, 2], &mut rng).unwrap(); // 4 + 3 = 7 inputs
        let spec2 = Mlp::new(&[7, 6, 2], &mut rng).unwrap();
        let x1 = Tensor::gaussian(&mut rng, 1, 4, 0.0, 1.0);
        let x2 = Tensor::gaussian(&mut rng, 1, 4, 0.0, 1.0);
        let cfg = LossConfig { lambda: 0.0, ..LossConfig::default() };
        let l = step2_loss(&shared1, &shared2, &spec1, &spec2, &x1, &x2, &x1, &x2, &cfg).unwrap();
        assert!(l.abs() < 1e-12, "{l}");
    }

    #[test]
    fn step2_large_lambda_gradient_is_orthogonality_dominated() {
        // Instrumented decomposition: compare specific-encoder gradient
        // norms of the InfoNCE part against the λ-scaled orthogonality part.
        let mut rng = stream(11, "s2g");
        let shared1 = Mlp::new(&[4, 5, 3], &mut rng).unwrap();
        let shared2 = Mlp::new(&[4, 5, 3], &mut rng).unwrap();
        let spec1 = Mlp::new(&[7, 5, 2], &mut rng).unwrap();
        let spec2 = Mlp::new(&[7, 5, 2], &mut rng).unwrap();
        let b = 6;
        let x1a = Tensor::gaussian(&mut rng, b, 4, 0.0, 1.0);
        let x2a = Tensor::gaussian(&mut rng, b, 4, 0.0, 1.0);
        let x1b = Tensor::gaussian(&mut rng, b, 4, 0.0, 1.0);
        let x2b = Tensor::gaussian(&mut rng, b, 4, 0.0, 1.0);
        let codes = Step2Codes::compute(&shared1, &shared2, &x1a, &x2a, &x1b, &x2b).unwrap();

        let grad_norm = |cfg: &LossConfig, drop_nce: bool| -> f64 {
            let mut g = Graph::new();
            let n1 = spec1.insert_params(&mut g);
            let n2 = spec2.insert_params(&mut g);
            let full = step2_loss_from_nodes(
                &mut g, &n1.weights, &n1.biases, &n2.weights, &n2.biases, &x1a, &x2a, &x1b,
                &x2b, &codes, cfg,
            )
            .unwrap();
            let loss = if drop_nce {
                // Rebuild only the λ-term by subtracting the λ=0 composite.
                let zero = LossConfig { lambda: 0.0, ..*cfg };
                let nce_only = step2_loss_from_nodes(
                    &mut g, &n1.weights, &n1.biases, &n2.weights, &n2.biases, &x1a, &x2a,
                    &x1b, &x2b, &codes, &zero,
                )
                .unwrap();
                g.sub(full, nce_only)
            } else {
                full
            };
            g.backward(loss).unwrap();
            let mut sq = 0.0;
            for nodes in [&n1, &n2] {
                for &id in nodes.weights.iter().chain(&nodes.biases) {
                    sq += g.grad(id).data().iter().map(|v| v * v).sum::<f64>();
                }
            }
            sq.sqrt()
        };

        let lam = 1e3;
        let cfg = LossConfig { lambda: lam, ..LossConfig::default() };
        let nce_cfg = LossConfig { lambda: 0.0, ..LossConfig::default() };
        let orth_norm = grad_norm(&cfg, true);
        let nce_norm = grad_norm(&nce_cfg, false);
        assert!(
            orth_norm > 10.0 * nce_norm,
            "orthogonality gradient {orth_norm} should dominate InfoNCE gradient {nce_norm}"
        );
    }
}

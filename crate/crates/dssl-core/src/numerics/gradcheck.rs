//! Central finite-difference verification of the backward pass.

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;

/// Default step for central differences.
pub const DEFAULT_H: f64 = 1e-5;
/// At most this many coordinates are sampled per parameter block.
pub const MAX_COORDS_PER_BLOCK: usize = 200;

/// Compares analytic gradients against central finite differences for a
/// scalar function of `params` built by `build` (parameter leaves are passed
/// in the same order). Returns the max over sampled coordinates of
/// `|analytic − central| / (|central| + 1e-8)`.
///
/// `build` must be deterministic: it is re-run for every perturbed
/// evaluation.
pub fn finite_diff_check<F, R>(
    params: &[Tensor],
    build: F,
    h: f64,
    rng: &mut R,
) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
    R: Rng,
{
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = ps.iter().map(|p| g.param(p.clone())).collect();
        let loss = build(&mut g, &ids)?;
        let v = g.value(loss);
        if v.shape() != (1, 1) {
            return Err(Error::Usage("finite_diff_check expects a scalar function".into()));
        }
        let out = v.get(0, 0);
        if !out.is_finite() {
            return Err(Error::Numeric("non-finite function value in finite_diff_check".into()));
        }
        Ok(out)
    };

    // Analytic gradients at the base point.
    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = build(&mut g, &ids)?;
    if !g.value(loss).get(0, 0).is_finite() {
        return Err(Error::Numeric("non-finite function value in finite_diff_check".into()));
    }
    g.backward(loss)?;
    let analytic: Vec<Tensor> = ids.iter().map(|&id| g.grad(id)).collect();

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = params.to_vec();
    for (b, p) in params.iter().enumerate() {
        let mut coords: Vec<usize> = (0..p.len()).collect();
        coords.shuffle(rng);
        coords.truncate(MAX_COORDS_PER_BLOCK);
        for &c in &coords {
            let orig = work[b].data()[c];
            work[b].data_mut()[c] = orig + h;
            let fp = eval(&work)?;
            work[b].data_mut()[c] = orig - h;
            let fm = eval(&work)?;
            work[b].data_mut()[c] = orig;
            let central = (fp - fm) / (2.0 * h);
            let rel = (analytic[b].data()[c] - central).abs() / (central.abs() + 1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_up_to_rounding() {
        let mut rng = crate::rng::stream(2024, "fd");
        let theta = Tensor::uniform(&mut rng, 1, 6, -2.0, 2.0);
        // f(θ) = θᵀθ
        let err = finite_diff_check(
            &[theta],
            |g, ids| {
                let d = g.row_dot(ids[0], ids[0]);
                Ok(g.mean_all(d))
            },
            DEFAULT_H,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn non_finite_values_are_reported() {
        let theta = Tensor::scalar(f64::INFINITY);
        let mut rng = crate::rng::stream(1, "fd");
        let res = finite_diff_check(&[theta], |g, ids| Ok(g.mean_all(ids[0])), DEFAULT_H, &mut rng);
        assert!(matches!(res, Err(Error::Numeric(_))));
    }
}

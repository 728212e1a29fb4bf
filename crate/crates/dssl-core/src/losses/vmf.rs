//! Von Mises–Fisher sampling on the unit sphere (Ulrich/Wood rejection
//! scheme). Off by default: the training objectives depend only on the mean
//! direction, so sampling is exposed behind the `vmf_sampling` flag for
//! experimentation.

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

/// Draws one vMF sample per row of `mu` with concentration `kappa`.
/// Rows of `mu` need not be normalized; sampling is around the row
/// direction. Every output row has unit norm.
pub fn sample_rows<R: Rng>(mu: &Tensor, kappa: f64, rng: &mut R) -> Result<Tensor> {
    if kappa <= 0.0 {
        return Err(Error::Config(format!("vMF concentration must be positive, got {kappa}")));
    }
    let d = mu.cols();
    if d == 0 {
        return Err(Error::Usage("vMF sampling needs at least one dimension".into()));
    }
    let mut out = Tensor::zeros(mu.rows(), d);
    for r in 0..mu.rows() {
        let dir = normalize(mu.row(r));
        let sample = if d == 1 {
            // S⁰ = {−1, +1}: p(+μ) = e^κ / (e^κ + e^(−κ)).
            let p_plus = 1.0 / (1.0 + (-2.0 * kappa).exp());
            vec![if rng.gen::<f64>() < p_plus { dir[0] } else { -dir[0] }]
        } else {
            let w = sample_cos_angle(d, kappa, rng);
            let v = tangent_direction(&dir, rng);
            let s = (1.0 - w * w).max(0.0).sqrt();
            dir.iter().zip(&v).map(|(&m, &t)| w * m + s * t).collect()
        };
        out.row_mut(r).copy_from_slice(&sample);
    }
    Ok(out)
}

/// Wood's rejection sampler for w = cos(angle to the mean direction).
fn sample_cos_angle<R: Rng>(d: usize, kappa: f64, rng: &mut R) -> f64 {
    let dm1 = (d - 1) as f64;
    let b = (-2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt()) / dm1;
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(dm1 / 2.0, dm1 / 2.0).expect("valid beta parameters");
    loop {
        let z: f64 = beta.sample(rng);
        let u: f64 = rng.gen();
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        if kappa * w + dm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            return w;
        }
    }
}

/// Uniform direction in the tangent space orthogonal to `dir`.
fn tangent_direction<R: Rng>(dir: &[f64], rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dir.len()).map(|_| StandardNormal.sample(rng)).collect();
        let dot: f64 = v.iter().zip(dir).map(|(a, b)| a * b).sum();
        for (x, &m) in v.iter_mut().zip(dir) {
            *x -= dot * m;
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for x in &mut v {
                *x /= norm;
            }
            return v;
        }
    }
}

fn normalize(row: &[f64]) -> Vec<f64> {
    let norm: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        row.iter().map(|x| x / norm).collect()
    } else {
        // Degenerate mean: fall back to the first axis.
        let mut v = vec![0.0; row.len()];
        v[0] = 1.0;
        v
    }
}

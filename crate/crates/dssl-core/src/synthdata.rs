//! Synthetic two-modality benchmark: 50-dimensional Gaussian true latents,
//! linear mixing into 100-dimensional paired observations, balanced binary
//! labels per latent block, train-time augmentation, and an 80/20 split.
//!
//! Two variants:
//! - `plain`: X¹ = T₁·[Z_s¹, Z_c], X² = T₂·[Z_s², Z_c] with 100×100 mixers.
//! - `mixed`: Z_c is split 35/15; the first 85 observation dimensions mix
//!   [Z_s, Z_c^mix] through an 85×85 transform while the last 15 carry
//!   Z_c^pure verbatim, so part of the shared signal stays cleanly
//!   separable.

use crate::error::{Error, Result};
use crate::numerics::checkpoint::{self, Manifest};
use crate::numerics::Tensor;
use crate::rng::{stream, streams};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const LATENT_DIM: usize = 50;
pub const OBS_DIM: usize = 100;
/// Mixed variant: leading shared dimensions that stay entangled.
pub const MIXED_SHARED_DIM: usize = 35;
/// Mixed variant: trailing shared dimensions copied verbatim.
pub const PURE_SHARED_DIM: usize = 15;
/// Mixed variant: observation dimensions produced by the mixer.
pub const MIXED_OBS_DIM: usize = LATENT_DIM + MIXED_SHARED_DIM;
const LATENT_VARIANCE: f64 = 0.5;
const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Plain,
    Mixed,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Plain => write!(f, "plain"),
            Variant::Mixed => write!(f, "mixed"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Variant::Plain),
            "mixed" => Ok(Variant::Mixed),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

/// The ground-truth factors behind a dataset.
#[derive(Clone, Debug)]
pub struct TrueLatents {
    pub zs1: Tensor,
    pub zs2: Tensor,
    pub zc: Tensor,
}

/// Fixed linear mixers, sampled once per dataset seed.
#[derive(Clone, Debug)]
pub struct Transforms {
    pub t1: Tensor,
    pub t2: Tensor,
}

/// Train-time corruption: Gaussian noise then independent coordinate
/// dropout. Fresh randomness on every call.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub noise_sigma: f64,
    pub dropout_rate: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { noise_sigma: 0.1, dropout_rate: 0.1 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub x1: Tensor,
    pub x2: Tensor,
    pub ys1: Vec<u8>,
    pub ys2: Vec<u8>,
    pub yc: Vec<u8>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
    pub variant: Variant,
}

impl SynthDataset {
    pub fn n(&self) -> usize {
        self.x1.rows()
    }

    pub fn labels(&self, name: &str) -> Result<&[u8]> {
        match name {
            "yc" => Ok(&self.yc),
            "ys1" => Ok(&self.ys1),
            "ys2" => Ok(&self.ys2),
            other => Err(Error::Usage(format!("unknown label '{other}'"))),
        }
    }

    pub fn select_labels(labels: &[u8], idx: &[usize]) -> Vec<u8> {
        idx.iter().map(|&i| labels[i]).collect()
    }
}

/// Samples the three mutually independent latent blocks.
pub fn sample_latents(n: usize, seed: u64) -> TrueLatents {
    let sd = LATENT_VARIANCE.sqrt();
    TrueLatents {
        zs1: Tensor::gaussian(&mut stream(seed, streams::LATENTS_ZS1), n, LATENT_DIM, 0.0, sd),
        zs2: Tensor::gaussian(&mut stream(seed, streams::LATENTS_ZS2), n, LATENT_DIM, 0.0, sd),
        zc: Tensor::gaussian(&mut stream(seed, streams::LATENTS_ZC), n, LATENT_DIM, 0.0, sd),
    }
}

/// Samples the fixed mixing transforms for the given variant.
pub fn sample_transforms(seed: u64, variant: Variant) -> Transforms {
    let dim = match variant {
        Variant::Plain => OBS_DIM,
        Variant::Mixed => MIXED_OBS_DIM,
    };
    Transforms {
        t1: Tensor::uniform(&mut stream(seed, streams::TRANSFORM_T1), dim, dim, -1.0, 1.0),
        t2: Tensor::uniform(&mut stream(seed, streams::TRANSFORM_T2), dim, dim, -1.0, 1.0),
    }
}

/// Applies the mixing transforms to latents: each observation row is
/// x = T·[z_s, z_c] (mixed variant appends Z_c^pure verbatim).
pub fn mix(latents: &TrueLatents, transforms: &Transforms, variant: Variant) -> (Tensor, Tensor) {
    match variant {
        Variant::Plain => {
            let l1 = latents.zs1.concat_cols(&latents.zc);
            let l2 = latents.zs2.concat_cols(&latents.zc);
            (l1.matmul_nt(&transforms.t1), l2.matmul_nt(&transforms.t2))
        }
        Variant::Mixed => {
            let zc_mix = latents.zc.slice_cols(0, MIXED_SHARED_DIM);
            let zc_pure = latents.zc.slice_cols(MIXED_SHARED_DIM, LATENT_DIM);
            let l1 = latents.zs1.concat_cols(&zc_mix);
            let l2 = latents.zs2.concat_cols(&zc_mix);
            let x1 = l1.matmul_nt(&transforms.t1).concat_cols(&zc_pure);
            let x2 = l2.matmul_nt(&transforms.t2).concat_cols(&zc_pure);
            (x1, x2)
        }
    }
}

/// Balanced binary labels: one random hyperplane per latent block,
/// thresholded at the median of its projections, so each label depends only
/// on its designated block and splits the dataset ⌈n/2⌉ / ⌊n/2⌋.
pub fn make_labels(latents: &TrueLatents, seed: u64) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let label_for = |z: &Tensor, stream_name: &str| -> Vec<u8> {
        let mut rng = stream(seed, stream_name);
        let w = Tensor::gaussian(&mut rng, 1, z.cols(), 0.0, 1.0).l2_normalize_rows();
        let scores: Vec<f64> = (0..z.rows())
            .map(|i| z.row(i).iter().zip(w.row(0)).map(|(a, b)| a * b).sum())
            .collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 0 {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        } else {
            sorted[n / 2]
        };
        scores.iter().map(|&s| u8::from(s > median)).collect()
    };
    (
        label_for(&latents.zs1, streams::LABELS_YS1),
        label_for(&latents.zs2, streams::LABELS_YS2),
        label_for(&latents.zc, streams::LABELS_YC),
    )
}

/// Generates a full dataset: latents, observations, labels, 80/20 split.
pub fn generate(n: usize, seed: u64, variant: Variant) -> Result<SynthDataset> {
    if n < 100 {
        return Err(Error::Config(format!("dataset size must be at least 100, got {n}")));
    }
    let latents = sample_latents(n, seed);
    let transforms = sample_transforms(seed, variant);
    let (x1, x2) = mix(&latents, &transforms, variant);
    let (ys1, ys2, yc) = make_labels(&latents, seed);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, streams::SPLIT));
    let n_train = (n as f64 * TRAIN_FRACTION).round() as usize;
    let train_idx = order[..n_train].to_vec();
    let test_idx = order[n_train..].to_vec();

    Ok(SynthDataset { x1, x2, ys1, ys2, yc, train_idx, test_idx, seed, variant })
}

/// Gaussian noise followed by independent zero-masking.
pub fn augment(x: &Tensor, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Tensor {
    let mut out = x.clone();
    if cfg.noise_sigma > 0.0 {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("finite sigma");
        for v in out.data_mut() {
            *v += normal.sample(rng);
        }
    }
    if cfg.dropout_rate > 0.0 {
        for v in out.data_mut() {
            if rng.gen::<f64>() < cfg.dropout_rate {
                *v = 0.0;
            }
        }
    }
    out
}

// ── Persistence ──────────────────────────────────────────────────────────

const DATASET_STEM: &str = "dataset";

fn labels_tensor(labels: &[u8]) -> Tensor {
    Tensor::from_vec(labels.len(), 1, labels.iter().map(|&v| f64::from(v)).collect()).unwrap()
}

fn indices_tensor(idx: &[usize]) -> Tensor {
    Tensor::from_vec(idx.len(), 1, idx.iter().map(|&v| v as f64).collect()).unwrap()
}

/// Writes `<dir>/dataset.json` + `<dir>/dataset.bin`.
pub fn save_dataset(dir: &Path, ds: &SynthDataset) -> Result<Manifest> {
    let ys1 = labels_tensor(&ds.ys1);
    let ys2 = labels_tensor(&ds.ys2);
    let yc = labels_tensor(&ds.yc);
    let train = indices_tensor(&ds.train_idx);
    let test = indices_tensor(&ds.test_idx);
    let meta = serde_json::json!({
        "kind": "synth-dataset",
        "n": ds.n(),
        "seed": ds.seed,
        "variant": ds.variant,
    });
    checkpoint::save_tensors(
        dir,
        DATASET_STEM,
        &[
            ("x1", &ds.x1),
            ("x2", &ds.x2),
            ("ys1", &ys1),
            ("ys2", &ys2),
            ("yc", &yc),
            ("train_idx", &train),
            ("test_idx", &test),
        ],
        meta,
    )
}

pub fn dataset_manifest_path(dir: &Path) -> std::path::PathBuf {
    dir.join(format!("{DATASET_STEM}.json"))
}

pub fn load_dataset(dir: &Path) -> Result<SynthDataset> {
    let (manifest, tensors) = checkpoint::load_tensors(&dataset_manifest_path(dir))?;
    let mut map: std::collections::HashMap<String, Tensor> = tensors.into_iter().collect();
    let mut take = |name: &str| -> Result<Tensor> {
        map.remove(name)
            .ok_or_else(|| Error::Format(format!("dataset manifest missing tensor '{name}'")))
    };
    let x1 = take("x1")?;
    let x2 = take("x2")?;
    let to_labels = |t: Tensor| -> Vec<u8> { t.data().iter().map(|&v| (v != 0.0) as u8).collect() };
    let to_idx = |t: Tensor| -> Vec<usize> { t.data().iter().map(|&v| v as usize).collect() };
    let ys1 = to_labels(take("ys1")?);
    let ys2 = to_labels(take("ys2")?);
    let yc = to_labels(take("yc")?);
    let train_idx = to_idx(take("train_idx")?);
    let test_idx = to_idx(take("test_idx")?);
    let seed = manifest.meta["seed"]
        .as_u64()
        .ok_or_else(|| Error::Format("dataset manifest missing seed".into()))?;
    let variant: Variant = serde_json::from_value(manifest.meta["variant"].clone())
        .map_err(|e| Error::Format(format!("dataset manifest has bad variant: {e}")))?;
    Ok(SynthDataset { x1, x2, ys1, ys2, yc, train_idx, test_idx, seed, variant })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_datasets() {
        assert!(matches!(generate(99, 0, Variant::Plain), Err(Error::Config(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(200, 42, Variant::Plain).unwrap();
        let b = generate(200, 42, Variant::Plain).unwrap();
        assert_eq!(a.x1, b.x1);
        assert_eq!(a.x2, b.x2);
        assert_eq!(a.ys1, b.ys1);
        assert_eq!(a.train_idx, b.train_idx);
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let ds = generate(500, 7, Variant::Plain).unwrap();
        assert_eq!(ds.train_idx.len(), 400);
        assert_eq!(ds.test_idx.len(), 100);
        let mut all: Vec<usize> = ds.train_idx.iter().chain(&ds.test_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..500).collect::<Vec<_>>());
    }

    #[test]
    fn labels_are_median_balanced() {
        for n in [200usize, 201] {
            let ds = generate(n, 3, Variant::Plain).unwrap();
            for labels in [&ds.ys1, &ds.ys2, &ds.yc] {
                let ones: usize = labels.iter().map(|&v| v as usize).sum();
                assert_eq!(ones, n / 2, "n={n}");
            }
        }
    }

    #[test]
    fn mixed_variant_copies_pure_dims_to_both_modalities() {
        let ds = generate(150, 5, Variant::Mixed).unwrap();
        let a = ds.x1.slice_cols(MIXED_OBS_DIM, OBS_DIM);
        let b = ds.x2.slice_cols(MIXED_OBS_DIM, OBS_DIM);
        assert_eq!(a, b);
        assert_eq!(a.cols(), PURE_SHARED_DIM);
    }

    #[test]
    fn mixing_is_linear_in_latents() {
        let seed = 11;
        let t = sample_transforms(seed, Variant::Plain);
        let la = sample_latents(60, seed);
        let lb = sample_latents(60, seed + 1);
        let sum = TrueLatents {
            zs1: la.zs1.add(&lb.zs1),
            zs2: la.zs2.add(&lb.zs2),
            zc: la.zc.add(&lb.zc),
        };
        let (xa1, xa2) = mix(&la, &t, Variant::Plain);
        let (xb1, xb2) = mix(&lb, &t, Variant::Plain);
        let (xs1, xs2) = mix(&sum, &t, Variant::Plain);
        for (s, (a, b)) in xs1.data().iter().zip(xa1.data().iter().zip(xb1.data())) {
            assert!((s - (a + b)).abs() < 1e-9);
        }
        for (s, (a, b)) in xs2.data().iter().zip(xa2.data().iter().zip(xb2.data())) {
            assert!((s - (a + b)).abs() < 1e-9);
        }
    }

    #[test]
    fn latent_moments_match_construction() {
        let l = sample_latents(10_000, 9);
        for z in [&l.zs1, &l.zs2, &l.zc] {
            for j in 0..LATENT_DIM {
                let col: Vec<f64> = (0..z.rows()).map(|i| z.get(i, j)).collect();
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let var =
                    col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
                // 4σ bound on the mean of 10k samples with variance 0.5.
                assert!(mean.abs() < 4.0 * (LATENT_VARIANCE / 10_000.0).sqrt(), "mean {mean}");
                assert!((0.4..0.6).contains(&var), "var {var}");
            }
        }
    }

    #[test]
    fn augment_identity_and_full_dropout() {
        let mut rng = stream(1, streams::AUGMENT_A);
        let x = Tensor::gaussian(&mut rng, 10, 8, 0.0, 1.0);
        let id = augment(&x, &AugmentConfig { noise_sigma: 0.0, dropout_rate: 0.0 }, &mut rng);
        assert_eq!(id, x);
        let zero = augment(&x, &AugmentConfig { noise_sigma: 0.0, dropout_rate: 1.0 }, &mut rng);
        assert_eq!(zero, Tensor::zeros(10, 8));
    }

    #[test]
    fn augment_dropout_fraction_concentrates() {
        let mut rng = stream(2, streams::AUGMENT_A);
        let x = Tensor::full(1000, 100, 1.0);
        let out = augment(&x, &AugmentConfig { noise_sigma: 0.0, dropout_rate: 0.3 }, &mut rng);
        let zeroed = out.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
        assert!((0.29..=0.31).contains(&zeroed), "zeroed fraction {zeroed}");
    }

    #[test]
    fn dataset_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(120, 13, Variant::Mixed).unwrap();
        save_dataset(dir.path(), &ds).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.x1, back.x1);
        assert_eq!(ds.x2, back.x2);
        assert_eq!(ds.yc, back.yc);
        assert_eq!(ds.train_idx, back.train_idx);
        assert_eq!(ds.seed, back.seed);
        assert_eq!(ds.variant, back.variant);
    }
}

//! Two-step training of shared and modality-specific encoders, the
//! joint-optimization baseline, and checkpoint/run bookkeeping.
//!
//! Step 1 trains one shared encoder per modality against the InfoNCE +
//! alignment objective. Step 2 freezes them and trains specific encoders on
//! two augmented views per batch; gradients never reach step-1 parameters
//! (their values enter step-2 graphs as constants, and a checksum is
//! asserted every epoch). The baseline optimizes everything jointly with
//! the same estimators.

use crate::error::{Error, Result};
use crate::losses::{
    self, alignment_node, info_nce_node, orthogonal_loss_node, LossConfig, Step2Codes,
};
use crate::numerics::checkpoint::{self, Manifest};
use crate::numerics::mlp::forward_from_nodes;
use crate::numerics::{AdamParams, AdamState, Graph, Mlp, Tensor};
use crate::rng::{derive_seed, stream, streams};
use crate::synthdata::{augment, AugmentConfig, SynthDataset};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    One,
    Two,
}

// ── Configs ──────────────────────────────────────────────────────────────

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Step1Config {
    pub beta: f64,
    pub tau: f64,
    /// Shared latent dimension d_c.
    pub d_c: usize,
    pub hidden: usize,
    /// Number of affine layers in each encoder.
    pub depth: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Train-time corruption applied to each sampled batch.
    pub augment: AugmentConfig,
    pub vmf_sampling: bool,
    pub kappa: f64,
}

impl Default for Step1Config {
    fn default() -> Self {
        Step1Config {
            beta: 0.0,
            tau: 0.5,
            d_c: 32,
            hidden: 512,
            depth: 3,
            epochs: 30,
            batch_size: 256,
            lr: 1e-3,
            seed: 0,
            augment: AugmentConfig::default(),
            vmf_sampling: false,
            kappa: 100.0,
        }
    }
}

impl Step1Config {
    pub fn validate(&self) -> Result<()> {
        if self.d_c == 0 || self.hidden == 0 || self.depth == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if self.beta < 0.0 {
            return Err(Error::Config("beta must be non-negative".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        self.augment.validate()?;
        self.loss_config().validate()
    }

    fn loss_config(&self) -> LossConfig {
        LossConfig {
            tau: self.tau,
            beta: self.beta,
            lambda: 0.0,
            kappa: self.kappa,
            vmf_sampling: self.vmf_sampling,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Step2Config {
    pub lambda: f64,
    pub tau: f64,
    /// Specific latent dimension d_s.
    pub d_s: usize,
    pub hidden: usize,
    pub depth: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
}

impl Default for Step2Config {
    fn default() -> Self {
        Step2Config {
            lambda: 0.0,
            tau: 0.5,
            d_s: 32,
            hidden: 512,
            depth: 3,
            epochs: 30,
            batch_size: 256,
            lr: 1e-3,
            seed: 0,
            augment: AugmentConfig::default(),
        }
    }
}

impl Step2Config {
    pub fn validate(&self) -> Result<()> {
        if self.d_s == 0 || self.hidden == 0 || self.depth == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        self.augment.validate()?;
        self.loss_config().validate()
    }

    fn loss_config(&self) -> LossConfig {
        LossConfig { tau: self.tau, lambda: self.lambda, ..LossConfig::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct JointOptConfig {
    /// Weight of the joint mutual-information terms.
    pub a: f64,
    pub lambda: f64,
    pub tau: f64,
    pub d_c: usize,
    pub d_s: usize,
    pub hidden: usize,
    pub depth: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
}

impl Default for JointOptConfig {
    fn default() -> Self {
        JointOptConfig {
            a: 1.0,
            lambda: 0.0,
            tau: 0.5,
            d_c: 32,
            d_s: 32,
            hidden: 512,
            depth: 3,
            epochs: 30,
            batch_size: 256,
            lr: 1e-3,
            seed: 0,
            augment: AugmentConfig::default(),
        }
    }
}

impl JointOptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(Error::Config(format!("a must be positive, got {}", self.a)));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if self.d_c == 0 || self.d_s == 0 || self.hidden == 0 || self.depth == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        self.augment.validate()
    }
}

/// Layer widths for an encoder with `depth` affine layers.
fn encoder_dims(d_in: usize, hidden: usize, depth: usize, d_out: usize) -> Vec<usize> {
    let mut dims = Vec::with_capacity(depth + 1);
    dims.push(d_in);
    for _ in 0..depth.saturating_sub(1) {
        dims.push(hidden);
    }
    dims.push(d_out);
    dims
}

// ── Models ───────────────────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct Step1Model {
    pub enc_c1: Mlp,
    pub enc_c2: Mlp,
    pub config: Step1Config,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

impl Step1Model {
    /// Shared code for a batch of clean observations: MLP forward followed
    /// by row normalization; deterministic.
    pub fn encode_shared(&self, x: &Tensor, modality: Modality) -> Result<Tensor> {
        let enc = match modality {
            Modality::One => &self.enc_c1,
            Modality::Two => &self.enc_c2,
        };
        Ok(enc.forward(x)?.l2_normalize_rows())
    }

    pub fn d_c(&self) -> usize {
        self.enc_c1.output_dim()
    }
}

#[derive(Clone, Debug)]
pub struct Step2Model {
    pub enc_s1: Mlp,
    pub enc_s2: Mlp,
    /// The frozen step-1 model the specific encoders condition on.
    pub step1: Step1Model,
    pub config: Step2Config,
    pub loss_trace: Vec<f64>,
}

impl Step2Model {
    /// Specific code for clean observations: the encoder sees the
    /// observation concatenated with its own modality's shared code.
    pub fn encode_specific(&self, x: &Tensor, modality: Modality) -> Result<Tensor> {
        let zc = self.step1.encode_shared(x, modality)?;
        let enc = match modality {
            Modality::One => &self.enc_s1,
            Modality::Two => &self.enc_s2,
        };
        enc.forward(&x.concat_cols(&zc))
    }
}

#[derive(Clone, Debug)]
pub struct JointOptModel {
    pub enc_c1: Mlp,
    pub enc_c2: Mlp,
    pub enc_s1: Mlp,
    pub enc_s2: Mlp,
    pub config: JointOptConfig,
    pub loss_trace: Vec<f64>,
}

impl JointOptModel {
    pub fn encode_shared(&self, x: &Tensor, modality: Modality) -> Result<Tensor> {
        let enc = match modality {
            Modality::One => &self.enc_c1,
            Modality::Two => &self.enc_c2,
        };
        Ok(enc.forward(x)?.l2_normalize_rows())
    }

    pub fn encode_specific(&self, x: &Tensor, modality: Modality) -> Result<Tensor> {
        let zc = self.encode_shared(x, modality)?;
        let enc = match modality {
            Modality::One => &self.enc_s1,
            Modality::Two => &self.enc_s2,
        };
        enc.forward(&x.concat_cols(&zc))
    }
}

/// SHA-256 over the exact parameter bytes of the given networks.
pub fn params_checksum(mlps: &[&Mlp]) -> String {
    let mut hasher = Sha256::new();
    for m in mlps {
        for p in m.params() {
            for v in p.data() {
                hasher.update(v.to_le_bytes());
            }
        }
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Shuffled minibatches for one epoch; batches with fewer than 2 rows are
/// dropped (degenerate for the contrastive losses).
fn epoch_batches(train_idx: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx = train_idx.to_vec();
    idx.shuffle(rng);
    idx.chunks(batch_size).filter(|c| c.len() >= 2).map(<[usize]>::to_vec).collect()
}

fn check_divergence(loss: f64, kind: &str, epoch: usize, batch: usize) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Numeric(format!(
            "{kind} training diverged: non-finite loss at epoch {epoch}, batch {batch}"
        )))
    }
}

// ── Step 1 ───────────────────────────────────────────────────────────────

/// Minibatch Adam on the step-1 objective over the train split.
pub fn train_step1(ds: &SynthDataset, cfg: &Step1Config) -> Result<Step1Model> {
    cfg.validate()?;
    let d_in = ds.x1.cols();
    let dims = encoder_dims(d_in, cfg.hidden, cfg.depth, cfg.d_c);
    let mut init_rng = stream(cfg.seed, streams::INIT);
    let mut enc1 = Mlp::new(&dims, &mut init_rng)?;
    let mut enc2 = Mlp::new(&dims, &mut init_rng)?;

    let mut batch_rng = stream(cfg.seed, streams::BATCHES);
    let mut aug_rng = stream(cfg.seed, streams::AUGMENT_A);
    let mut vmf_rng = stream(cfg.seed, streams::VMF);
    let loss_cfg = cfg.loss_config();

    let n_params = enc1.params().len() + enc2.params().len();
    let mut adam = {
        let refs: Vec<&Tensor> =
            enc1.params().into_iter().chain(enc2.params()).collect();
        debug_assert_eq!(refs.len(), n_params);
        AdamState::new(AdamParams::with_lr(cfg.lr), &refs)
    };

    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(&ds.train_idx, cfg.batch_size, &mut batch_rng);
        let mut epoch_loss = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let x1 = augment(&ds.x1.select_rows(batch), &cfg.augment, &mut aug_rng);
            let x2 = augment(&ds.x2.select_rows(batch), &cfg.augment, &mut aug_rng);

            let mut g = Graph::new();
            let x1n = g.constant(x1);
            let x2n = g.constant(x2);
            let n1 = enc1.insert_params(&mut g);
            let n2 = enc2.insert_params(&mut g);
            let loss = losses::step1_loss_from_nodes(
                &mut g,
                &n1.weights,
                &n1.biases,
                &n2.weights,
                &n2.biases,
                x1n,
                x2n,
                &loss_cfg,
                cfg.vmf_sampling.then_some(&mut vmf_rng),
            )?;
            epoch_loss += check_divergence(g.value(loss).get(0, 0), "step1", epoch, bi)?;
            g.backward(loss)?;
            let grads: Vec<Tensor> =
                enc1.grads(&g, &n1).into_iter().chain(enc2.grads(&g, &n2)).collect();
            let mut params: Vec<&mut Tensor> =
                enc1.params_mut().into_iter().chain(enc2.params_mut()).collect();
            adam.step(&mut params, &grads);
        }
        trace.push(epoch_loss / batches.len().max(1) as f64);
    }

    Ok(Step1Model { enc_c1: enc1, enc_c2: enc2, config: cfg.clone(), loss_trace: trace })
}

// ── Step 2 ───────────────────────────────────────────────────────────────

/// Trains the specific encoders on two augmented views per batch; step-1
/// parameters stay bit-identical (checked by checksum every epoch).
pub fn train_step2(ds: &SynthDataset, step1: &Step1Model, cfg: &Step2Config) -> Result<Step2Model> {
    cfg.validate()?;
    let frozen_checksum = params_checksum(&[&step1.enc_c1, &step1.enc_c2]);
    let d_in = ds.x1.cols() + step1.d_c();
    let dims = encoder_dims(d_in, cfg.hidden, cfg.depth, cfg.d_s);
    let mut init_rng = stream(cfg.seed, streams::INIT);
    let mut s1 = Mlp::new(&dims, &mut init_rng)?;
    let mut s2 = Mlp::new(&dims, &mut init_rng)?;

    let mut batch_rng = stream(cfg.seed, streams::BATCHES);
    let mut aug_a = stream(cfg.seed, streams::AUGMENT_A);
    let mut aug_b = stream(cfg.seed, streams::AUGMENT_B);
    let loss_cfg = cfg.loss_config();

    let mut adam = {
        let refs: Vec<&Tensor> = s1.params().into_iter().chain(s2.params()).collect();
        AdamState::new(AdamParams::with_lr(cfg.lr), &refs)
    };

    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(&ds.train_idx, cfg.batch_size, &mut batch_rng);
        let mut epoch_loss = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let b1 = ds.x1.select_rows(batch);
            let b2 = ds.x2.select_rows(batch);
            let x1a = augment(&b1, &cfg.augment, &mut aug_a);
            let x2a = augment(&b2, &cfg.augment, &mut aug_a);
            let x1b = augment(&b1, &cfg.augment, &mut aug_b);
            let x2b = augment(&b2, &cfg.augment, &mut aug_b);
            let codes = Step2Codes::compute(&step1.enc_c1, &step1.enc_c2, &x1a, &x2a, &x1b, &x2b)?;

            let mut g = Graph::new();
            let n1 = s1.insert_params(&mut g);
            let n2 = s2.insert_params(&mut g);
            let loss = losses::step2_loss_from_nodes(
                &mut g, &n1.weights, &n1.biases, &n2.weights, &n2.biases, &x1a, &x2a, &x1b,
                &x2b, &codes, &loss_cfg,
            )?;
            epoch_loss += check_divergence(g.value(loss).get(0, 0), "step2", epoch, bi)?;
            g.backward(loss)?;
            let grads: Vec<Tensor> =
                s1.grads(&g, &n1).into_iter().chain(s2.grads(&g, &n2)).collect();
            let mut params: Vec<&mut Tensor> =
                s1.params_mut().into_iter().chain(s2.params_mut()).collect();
            adam.step(&mut params, &grads);
        }
        trace.push(epoch_loss / batches.len().max(1) as f64);
        assert_eq!(
            params_checksum(&[&step1.enc_c1, &step1.enc_c2]),
            frozen_checksum,
            "step-1 parameters changed during step-2 training"
        );
    }

    Ok(Step2Model {
        enc_s1: s1,
        enc_s2: s2,
        step1: step1.clone(),
        config: cfg.clone(),
        loss_trace: trace,
    })
}

// ── Joint optimization baseline ──────────────────────────────────────────

/// Optimizes shared and specific encoders together:
/// `infonce(ẑc¹, ẑc²) + a·(joint InfoNCE terms) + λ·orthogonal penalties`,
/// with the same estimators as the two-step method.
pub fn train_jointopt(ds: &SynthDataset, cfg: &JointOptConfig) -> Result<JointOptModel> {
    cfg.validate()?;
    let d_obs = ds.x1.cols();
    let shared_dims = encoder_dims(d_obs, cfg.hidden, cfg.depth, cfg.d_c);
    let spec_dims = encoder_dims(d_obs + cfg.d_c, cfg.hidden, cfg.depth, cfg.d_s);
    // Same init-stream prefix as train_step1: shared encoders first.
    let mut init_rng = stream(cfg.seed, streams::INIT);
    let mut c1 = Mlp::new(&shared_dims, &mut init_rng)?;
    let mut c2 = Mlp::new(&shared_dims, &mut init_rng)?;
    let mut s1 = Mlp::new(&spec_dims, &mut init_rng)?;
    let mut s2 = Mlp::new(&spec_dims, &mut init_rng)?;

    let mut batch_rng = stream(cfg.seed, streams::BATCHES);
    let mut aug_a = stream(cfg.seed, streams::AUGMENT_A);
    let mut aug_b = stream(cfg.seed, streams::AUGMENT_B);

    let mut adam = {
        let refs: Vec<&Tensor> = c1
            .params()
            .into_iter()
            .chain(c2.params())
            .chain(s1.params())
            .chain(s2.params())
            .collect();
        AdamState::new(AdamParams::with_lr(cfg.lr), &refs)
    };

    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(&ds.train_idx, cfg.batch_size, &mut batch_rng);
        let mut epoch_loss = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let b1 = ds.x1.select_rows(batch);
            let b2 = ds.x2.select_rows(batch);
            let x1a = augment(&b1, &cfg.augment, &mut aug_a);
            let x2a = augment(&b2, &cfg.augment, &mut aug_a);
            let x1b = augment(&b1, &cfg.augment, &mut aug_b);
            let x2b = augment(&b2, &cfg.augment, &mut aug_b);

            let mut g = Graph::new();
            let nc1 = c1.insert_params(&mut g);
            let nc2 = c2.insert_params(&mut g);
            let ns1 = s1.insert_params(&mut g);
            let ns2 = s2.insert_params(&mut g);
            let x1a_n = g.constant(x1a);
            let x2a_n = g.constant(x2a);
            let x1b_n = g.constant(x1b);
            let x2b_n = g.constant(x2b);

            // Shared codes for both views; gradients flow everywhere.
            let h1a = forward_from_nodes(&mut g, &nc1.weights, &nc1.biases, x1a_n);
            let h2a = forward_from_nodes(&mut g, &nc2.weights, &nc2.biases, x2a_n);
            let h1b = forward_from_nodes(&mut g, &nc1.weights, &nc1.biases, x1b_n);
            let h2b = forward_from_nodes(&mut g, &nc2.weights, &nc2.biases, x2b_n);
            let zc1a = g.row_normalize(h1a);
            let zc2a = g.row_normalize(h2a);
            let zc1b = g.row_normalize(h1b);
            let zc2b = g.row_normalize(h2b);

            let nce_shared = info_nce_node(&mut g, zc1a, zc2a, cfg.tau)?;

            // Specific encoders conditioned on their own modality's code.
            let in1a = g.concat_cols(x1a_n, zc1a);
            let in2a = g.concat_cols(x2a_n, zc2a);
            let in1b = g.concat_cols(x1b_n, zc1b);
            let in2b = g.concat_cols(x2b_n, zc2b);
            let zs1a = forward_from_nodes(&mut g, &ns1.weights, &ns1.biases, in1a);
            let zs2a = forward_from_nodes(&mut g, &ns2.weights, &ns2.biases, in2a);
            let zs1b = forward_from_nodes(&mut g, &ns1.weights, &ns1.biases, in1b);
            let zs2b = forward_from_nodes(&mut g, &ns2.weights, &ns2.biases, in2b);

            let cat1a = g.concat_cols(zs1a, zc2a);
            let cat1b = g.concat_cols(zs1b, zc2b);
            let cat2a = g.concat_cols(zs2a, zc1a);
            let cat2b = g.concat_cols(zs2b, zc1b);
            let j1a = g.row_normalize(cat1a);
            let j1b = g.row_normalize(cat1b);
            let j2a = g.row_normalize(cat2a);
            let j2b = g.row_normalize(cat2b);
            let nce1 = info_nce_node(&mut g, j1a, j1b, cfg.tau)?;
            let nce2 = info_nce_node(&mut g, j2a, j2b, cfg.tau)?;
            let nce_joint = g.add(nce1, nce2);
            let joint_term = g.scale(nce_joint, cfg.a);

            let mut loss = g.add(nce_shared, joint_term);
            if cfg.lambda > 0.0 {
                let o1a = orthogonal_loss_node(&mut g, zs1a, zc1a)?;
                let o1b = orthogonal_loss_node(&mut g, zs1b, zc1b)?;
                let o2a = orthogonal_loss_node(&mut g, zs2a, zc2a)?;
                let o2b = orthogonal_loss_node(&mut g, zs2b, zc2b)?;
                let p1 = g.add(o1a, o1b);
                let p2 = g.add(o2a, o2b);
                let ps = g.add(p1, p2);
                let orth = g.scale(ps, 0.5);
                let penalty = g.scale(orth, cfg.lambda);
                loss = g.add(loss, penalty);
            }

            epoch_loss += check_divergence(g.value(loss).get(0, 0), "jointopt", epoch, bi)?;
            g.backward(loss)?;
            let grads: Vec<Tensor> = c1
                .grads(&g, &nc1)
                .into_iter()
                .chain(c2.grads(&g, &nc2))
                .chain(s1.grads(&g, &ns1))
                .chain(s2.grads(&g, &ns2))
                .collect();
            let mut params: Vec<&mut Tensor> = c1
                .params_mut()
                .into_iter()
                .chain(c2.params_mut())
                .chain(s1.params_mut())
                .chain(s2.params_mut())
                .collect();
            adam.step(&mut params, &grads);
        }
        trace.push(epoch_loss / batches.len().max(1) as f64);
    }

    Ok(JointOptModel {
        enc_c1: c1,
        enc_c2: c2,
        enc_s1: s1,
        enc_s2: s2,
        config: cfg.clone(),
        loss_trace: trace,
    })
}

// ── Persistence ──────────────────────────────────────────────────────────

fn named_mlp_entries<'a>(prefix: &str, m: &'a Mlp) -> Vec<(String, &'a Tensor)> {
    let mut out = Vec::with_capacity(2 * m.layers.len());
    for (i, layer) in m.layers.iter().enumerate() {
        out.push((format!("{prefix}.layer{i}.weight"), &layer.weight));
        out.push((format!("{prefix}.layer{i}.bias"), &layer.bias));
    }
    out
}

fn mlp_from_named(prefix: &str, tensors: &mut Vec<(String, Tensor)>) -> Result<Mlp> {
    let mut layers = Vec::new();
    for i in 0.. {
        let wname = format!("{prefix}.layer{i}.weight");
        let bname = format!("{prefix}.layer{i}.bias");
        let wpos = tensors.iter().position(|(n, _)| n == &wname);
        let Some(wpos) = wpos else { break };
        let weight = tensors.remove(wpos).1;
        let bpos = tensors
            .iter()
            .position(|(n, _)| n == &bname)
            .ok_or_else(|| Error::Format(format!("checkpoint missing '{bname}'")))?;
        let bias = tensors.remove(bpos).1;
        layers.push(crate::numerics::Layer { weight, bias });
    }
    if layers.is_empty() {
        return Err(Error::Format(format!("checkpoint has no layers under '{prefix}'")));
    }
    Ok(Mlp { layers })
}

pub const STEP1_STEM: &str = "step1";
pub const STEP2_STEM: &str = "step2";
pub const JOINTOPT_STEM: &str = "jointopt";

pub fn save_step1(dir: &Path, model: &Step1Model) -> Result<Manifest> {
    let mut entries = named_mlp_entries("enc_c1", &model.enc_c1);
    entries.extend(named_mlp_entries("enc_c2", &model.enc_c2));
    let refs: Vec<(&str, &Tensor)> = entries.iter().map(|(n, t)| (n.as_str(), *t)).collect();
    let meta = serde_json::json!({
        "kind": "step1-model",
        "config": model.config,
        "loss_trace": model.loss_trace,
    });
    checkpoint::save_tensors(dir, STEP1_STEM, &refs, meta)
}

pub fn load_step1(dir: &Path) -> Result<Step1Model> {
    let (manifest, mut tensors) = checkpoint::load_tensors(&dir.join(format!("{STEP1_STEM}.json")))?;
    let config: Step1Config = serde_json::from_value(manifest.meta["config"].clone())
        .map_err(|e| Error::Format(format!("bad step1 config in checkpoint: {e}")))?;
    let loss_trace: Vec<f64> =
        serde_json::from_value(manifest.meta["loss_trace"].clone()).unwrap_or_default();
    let enc_c1 = mlp_from_named("enc_c1", &mut tensors)?;
    let enc_c2 = mlp_from_named("enc_c2", &mut tensors)?;
    Ok(Step1Model { enc_c1, enc_c2, config, loss_trace })
}

pub fn save_step2(dir: &Path, model: &Step2Model) -> Result<Manifest> {
    let mut entries = named_mlp_entries("enc_s1", &model.enc_s1);
    entries.extend(named_mlp_entries("enc_s2", &model.enc_s2));
    entries.extend(named_mlp_entries("step1.enc_c1", &model.step1.enc_c1));
    entries.extend(named_mlp_entries("step1.enc_c2", &model.step1.enc_c2));
    let refs: Vec<(&str, &Tensor)> = entries.iter().map(|(n, t)| (n.as_str(), *t)).collect();
    let meta = serde_json::json!({
        "kind": "step2-model",
        "config": model.config,
        "step1_config": model.step1.config,
        "loss_trace": model.loss_trace,
        "step1_loss_trace": model.step1.loss_trace,
    });
    checkpoint::save_tensors(dir, STEP2_STEM, &refs, meta)
}

pub fn load_step2(dir: &Path) -> Result<Step2Model> {
    let (manifest, mut tensors) = checkpoint::load_tensors(&dir.join(format!("{STEP2_STEM}.json")))?;
    let config: Step2Config = serde_json::from_value(manifest.meta["config"].clone())
        .map_err(|e| Error::Format(format!("bad step2 config in checkpoint: {e}")))?;
    let step1_config: Step1Config = serde_json::from_value(manifest.meta["step1_config"].clone())
        .map_err(|e| Error::Format(format!("bad step1 config in checkpoint: {e}")))?;
    let loss_trace: Vec<f64> =
        serde_json::from_value(manifest.meta["loss_trace"].clone()).unwrap_or_default();
    let step1_loss_trace: Vec<f64> =
        serde_json::from_value(manifest.meta["step1_loss_trace"].clone()).unwrap_or_default();
    let enc_s1 = mlp_from_named("enc_s1", &mut tensors)?;
    let enc_s2 = mlp_from_named("enc_s2", &mut tensors)?;
    let enc_c1 = mlp_from_named("step1.enc_c1", &mut tensors)?;
    let enc_c2 = mlp_from_named("step1.enc_c2", &mut tensors)?;
    Ok(Step2Model {
        enc_s1,
        enc_s2,
        step1: Step1Model {
            enc_c1,
            enc_c2,
            config: step1_config,
            loss_trace: step1_loss_trace,
        },
        config,
        loss_trace,
    })
}

pub fn save_jointopt(dir: &Path, model: &JointOptModel) -> Result<Manifest> {
    let mut entries = named_mlp_entries("enc_c1", &model.enc_c1);
    entries.extend(named_mlp_entries("enc_c2", &model.enc_c2));
    entries.extend(named_mlp_entries("enc_s1", &model.enc_s1));
    entries.extend(named_mlp_entries("enc_s2", &model.enc_s2));
    let refs: Vec<(&str, &Tensor)> = entries.iter().map(|(n, t)| (n.as_str(), *t)).collect();
    let meta = serde_json::json!({
        "kind": "jointopt-model",
        "config": model.config,
        "loss_trace": model.loss_trace,
    });
    checkpoint::save_tensors(dir, JOINTOPT_STEM, &refs, meta)
}

pub fn load_jointopt(dir: &Path) -> Result<JointOptModel> {
    let (manifest, mut tensors) =
        checkpoint::load_tensors(&dir.join(format!("{JOINTOPT_STEM}.json")))?;
    let config: JointOptConfig = serde_json::from_value(manifest.meta["config"].clone())
        .map_err(|e| Error::Format(format!("bad jointopt config in checkpoint: {e}")))?;
    let loss_trace: Vec<f64> =
        serde_json::from_value(manifest.meta["loss_trace"].clone()).unwrap_or_default();
    Ok(JointOptModel {
        enc_c1: mlp_from_named("enc_c1", &mut tensors)?,
        enc_c2: mlp_from_named("enc_c2", &mut tensors)?,
        enc_s1: mlp_from_named("enc_s1", &mut tensors)?,
        enc_s2: mlp_from_named("enc_s2", &mut tensors)?,
        config,
        loss_trace,
    })
}

/// Per-run bookkeeping written next to checkpoints.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub kind: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub loss_trace: Vec<f64>,
    pub wall_time_s: f64,
    /// SHA-256 of the dataset manifest the run consumed.
    pub dataset_hash: Option<String>,
}

impl TrainReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("report serialization failed: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad report: {e}")))
    }
}

/// `derive_seed` wrapper fixing the naming scheme sweeps use for per-seed
/// grid points, so a standalone run can reproduce any sweep cell.
pub fn sweep_cell_seed(base_seed: u64, salt: &str) -> u64 {
    derive_seed(base_seed, salt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate, Variant};

    fn small_dataset() -> SynthDataset {
        generate(400, 77, Variant::Plain).unwrap()
    }

    fn tiny_step1_cfg() -> Step1Config {
        Step1Config {
            beta: 0.1,
            d_c: 8,
            hidden: 16,
            depth: 2,
            epochs: 2,
            batch_size: 64,
            lr: 1e-3,
            seed: 3,
            ..Step1Config::default()
        }
    }

    #[test]
    fn step1_is_seed_deterministic() {
        let ds = small_dataset();
        let cfg = tiny_step1_cfg();
        let a = train_step1(&ds, &cfg).unwrap();
        let b = train_step1(&ds, &cfg).unwrap();
        assert_eq!(
            params_checksum(&[&a.enc_c1, &a.enc_c2]),
            params_checksum(&[&b.enc_c1, &b.enc_c2])
        );
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn step1_zero_lr_keeps_parameters() {
        let ds = small_dataset();
        let cfg = Step1Config { lr: 0.0, epochs: 1, ..tiny_step1_cfg() };
        let trained = train_step1(&ds, &cfg).unwrap();
        let mut init_rng = stream(cfg.seed, streams::INIT);
        let dims = encoder_dims(ds.x1.cols(), cfg.hidden, cfg.depth, cfg.d_c);
        let fresh1 = Mlp::new(&dims, &mut init_rng).unwrap();
        let fresh2 = Mlp::new(&dims, &mut init_rng).unwrap();
        assert_eq!(
            params_checksum(&[&trained.enc_c1, &trained.enc_c2]),
            params_checksum(&[&fresh1, &fresh2])
        );
    }

    #[test]
    fn encode_shared_has_unit_rows_and_is_permutation_equivariant() {
        let ds = small_dataset();
        let model = train_step1(&ds, &tiny_step1_cfg()).unwrap();
        let x = ds.x1.select_rows(&ds.test_idx[..10].to_vec());
        let z = model.encode_shared(&x, Modality::One).unwrap();
        for i in 0..z.rows() {
            let n: f64 = z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
        // Permuting input rows permutes output rows identically.
        let perm: Vec<usize> = (0..10).rev().collect();
        let zp = model.encode_shared(&x.select_rows(&perm), Modality::One).unwrap();
        assert_eq!(zp, z.select_rows(&perm));
        // Matches the plain forward + normalize composition bit-for-bit.
        let direct = model.enc_c1.forward(&x).unwrap().l2_normalize_rows();
        assert_eq!(z, direct);
    }

    #[test]
    fn step2_leaves_step1_frozen_and_is_deterministic() {
        let ds = small_dataset();
        let step1 = train_step1(&ds, &tiny_step1_cfg()).unwrap();
        let before = params_checksum(&[&step1.enc_c1, &step1.enc_c2]);
        let cfg = Step2Config {
            lambda: 0.5,
            d_s: 8,
            hidden: 16,
            depth: 2,
            epochs: 2,
            batch_size: 64,
            seed: 5,
            ..Step2Config::default()
        };
        let a = train_step2(&ds, &step1, &cfg).unwrap();
        assert_eq!(params_checksum(&[&step1.enc_c1, &step1.enc_c2]), before);
        assert_eq!(params_checksum(&[&a.step1.enc_c1, &a.step1.enc_c2]), before);
        let b = train_step2(&ds, &step1, &cfg).unwrap();
        assert_eq!(
            params_checksum(&[&a.enc_s1, &a.enc_s2]),
            params_checksum(&[&b.enc_s1, &b.enc_s2])
        );
    }

    #[test]
    fn jointopt_with_vanishing_a_matches_step1_beta_zero() {
        let ds = small_dataset();
        let seed = 9;
        let s1cfg = Step1Config {
            beta: 0.0,
            d_c: 8,
            hidden: 16,
            depth: 2,
            epochs: 3,
            batch_size: 64,
            seed,
            ..Step1Config::default()
        };
        let jcfg = JointOptConfig {
            a: 1e-300,
            lambda: 0.0,
            d_c: 8,
            d_s: 8,
            hidden: 16,
            depth: 2,
            epochs: 3,
            batch_size: 64,
            seed,
            ..JointOptConfig::default()
        };
        let s1 = train_step1(&ds, &s1cfg).unwrap();
        let j = train_jointopt(&ds, &jcfg).unwrap();
        assert_eq!(s1.loss_trace.len(), j.loss_trace.len());
        for (a, b) in s1.loss_trace.iter().zip(&j.loss_trace) {
            assert!((a - b).abs() < 1e-9, "traces diverged: {a} vs {b}");
        }
    }

    #[test]
    fn jointopt_is_seed_deterministic() {
        let ds = small_dataset();
        let cfg = JointOptConfig {
            a: 1.0,
            lambda: 0.1,
            d_c: 8,
            d_s: 8,
            hidden: 16,
            depth: 2,
            epochs: 2,
            batch_size: 64,
            seed: 4,
            ..JointOptConfig::default()
        };
        let a = train_jointopt(&ds, &cfg).unwrap();
        let b = train_jointopt(&ds, &cfg).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(
            params_checksum(&[&a.enc_c1, &a.enc_c2, &a.enc_s1, &a.enc_s2]),
            params_checksum(&[&b.enc_c1, &b.enc_c2, &b.enc_s1, &b.enc_s2])
        );
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small_dataset();
        let step1 = train_step1(&ds, &tiny_step1_cfg()).unwrap();
        save_step1(dir.path(), &step1).unwrap();
        let loaded = load_step1(dir.path()).unwrap();
        assert_eq!(
            params_checksum(&[&step1.enc_c1, &step1.enc_c2]),
            params_checksum(&[&loaded.enc_c1, &loaded.enc_c2])
        );
        assert_eq!(step1.config, loaded.config);
        // Re-encoding with the loaded model is identical.
        let x = ds.x1.select_rows(&ds.test_idx[..5].to_vec());
        assert_eq!(
            step1.encode_shared(&x, Modality::One).unwrap(),
            loaded.encode_shared(&x, Modality::One).unwrap()
        );

        let s2cfg = Step2Config {
            d_s: 8,
            hidden: 16,
            depth: 2,
            epochs: 1,
            batch_size: 64,
            seed: 6,
            ..Step2Config::default()
        };
        let step2 = train_step2(&ds, &step1, &s2cfg).unwrap();
        save_step2(dir.path(), &step2).unwrap();
        let loaded2 = load_step2(dir.path()).unwrap();
        assert_eq!(
            params_checksum(&[&step2.enc_s1, &step2.enc_s2, &step2.step1.enc_c1]),
            params_checksum(&[&loaded2.enc_s1, &loaded2.enc_s2, &loaded2.step1.enc_c1])
        );
        assert_eq!(
            step2.encode_specific(&x, Modality::One).unwrap(),
            loaded2.encode_specific(&x, Modality::One).unwrap()
        );
    }

    #[test]
    fn jointopt_requires_positive_a() {
        let cfg = JointOptConfig { a: 0.0, ..JointOptConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}

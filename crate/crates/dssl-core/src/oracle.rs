//! Exact discrete-distribution laboratory: mutual information on finite
//! joints, bottleneck optimization over stochastic encoders, trade-off
//! curve tracing, and attainability classification for the minimum
//! necessary information (MNI) point `I(Z;X¹) = I(Z;X²) = I(X¹;X²)`.
//!
//! The step-1 objective `max I(Z;X²) − β·I(Z;X¹|X²)` is, by the Markov
//! identity `I(Z;X¹|X²) = I(Z;X¹) − I(Z;X²)`, a standard bottleneck
//! Lagrangian `max I(Z;X²) − [β/(1+β)]·I(Z;X¹)`. [`ceb_optimize`] solves it
//! with self-consistent Blahut–Arimoto-style updates
//! `q(z|x¹) ∝ q(z)·exp(−(1+β)/β · KL[p(x²|x¹) ‖ q(x²|z)])`,
//! which makes every fixed-point claim about the neural objective checkable
//! by enumeration here.

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::{derive_seed, stream, streams};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Slack used by invariant checks on information coordinates (nats).
pub const COORD_TOL: f64 = 1e-9;
/// Tolerance of the rank-1 (independence) test inside [`mni_check`].
pub const RANK1_TOL: f64 = 1e-10;

// ── Joint distributions and encoders ─────────────────────────────────────

/// A finite joint distribution p(x¹, x²) over alphabets of sizes
/// `nx × ny`. Construction normalizes the mass to 1 and drops all-zero
/// rows and columns (support cleanup).
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    p: Tensor,
}

impl DiscreteJoint {
    pub fn new(matrix: Tensor) -> Result<Self> {
        if matrix.rows() == 0 || matrix.cols() == 0 {
            return Err(Error::Config("joint distribution must be non-empty".into()));
        }
        if matrix.data().iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Config("joint entries must be finite and non-negative".into()));
        }
        let total: f64 = matrix.data().iter().sum();
        if total <= 0.0 {
            return Err(Error::Config("joint distribution has zero total mass".into()));
        }
        let scaled = matrix.scale(1.0 / total);
        // Drop empty rows/columns so marginals are strictly positive.
        let keep_rows: Vec<usize> =
            (0..scaled.rows()).filter(|&i| scaled.row(i).iter().any(|&v| v > 0.0)).collect();
        let mut p = scaled.select_rows(&keep_rows);
        let keep_cols: Vec<usize> = (0..p.cols())
            .filter(|&j| (0..p.rows()).any(|i| p.get(i, j) > 0.0))
            .collect();
        if keep_cols.len() != p.cols() {
            p = p.transpose().select_rows(&keep_cols).transpose();
        }
        Ok(DiscreteJoint { p })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        DiscreteJoint::new(Tensor::from_rows(rows)?)
    }

    /// The OR-gate fixture: three fair coins Z_c, Z_s¹, Z_s² with
    /// X¹ = Z_c ∨ Z_s¹ and X² = Z_c ∨ Z_s², giving cells
    /// (⅛, ⅛; ⅛, ⅝). Full support, so MNI is unattainable.
    pub fn or_gate() -> Self {
        DiscreteJoint::from_rows(&[vec![0.125, 0.125], vec![0.125, 0.625]]).unwrap()
    }

    pub fn nx(&self) -> usize {
        self.p.rows()
    }

    pub fn ny(&self) -> usize {
        self.p.cols()
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.p.get(x, y)
    }

    pub fn matrix(&self) -> &Tensor {
        &self.p
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        (0..self.nx()).map(|i| self.p.row(i).iter().sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        let mut py = vec![0.0; self.ny()];
        for i in 0..self.nx() {
            for (j, v) in self.p.row(i).iter().enumerate() {
                py[j] += v;
            }
        }
        py
    }

    /// The joint with the roles of the two variables swapped.
    pub fn transposed(&self) -> DiscreteJoint {
        DiscreteJoint { p: self.p.transpose() }
    }
}

/// A stochastic map q(z|x): rows indexed by x, columns by z, each row a
/// probability vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    q: Tensor,
}

impl Encoder {
    pub fn new(q: Tensor) -> Result<Self> {
        if q.data().iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Config("encoder entries must be finite and non-negative".into()));
        }
        for i in 0..q.rows() {
            let s: f64 = q.row(i).iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("encoder row {i} sums to {s}, expected 1")));
            }
        }
        Ok(Encoder { q })
    }

    /// Rows drawn uniformly from the simplex (normalized unit-rate
    /// exponentials).
    pub fn random<R: Rng>(nx: usize, nz: usize, rng: &mut R) -> Self {
        let mut q = Tensor::zeros(nx, nz);
        for i in 0..nx {
            let row = q.row_mut(i);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        Encoder { q }
    }

    /// Deterministic encoder z = assignment[x].
    pub fn deterministic(assignment: &[usize], nz: usize) -> Self {
        let mut q = Tensor::zeros(assignment.len(), nz);
        for (x, &z) in assignment.iter().enumerate() {
            q.set(x, z, 1.0);
        }
        Encoder { q }
    }

    /// Constant encoder: every x maps to symbol 0.
    pub fn constant(nx: usize, nz: usize) -> Self {
        Encoder::deterministic(&vec![0; nx], nz.max(1))
    }

    pub fn nz(&self) -> usize {
        self.q.cols()
    }

    pub fn prob(&self, x: usize, z: usize) -> f64 {
        self.q.get(x, z)
    }

    pub fn matrix(&self) -> &Tensor {
        &self.q
    }
}

// ── Information quantities ───────────────────────────────────────────────

/// I(X¹;X²) in nats, with the 0·ln 0 = 0 convention.
pub fn mutual_info(joint: &DiscreteJoint) -> f64 {
    let px = joint.marginal_x();
    let py = joint.marginal_y();
    let mut mi = 0.0;
    for x in 0..joint.nx() {
        for y in 0..joint.ny() {
            let p = joint.prob(x, y);
            if p > 0.0 {
                mi += p * (p / (px[x] * py[y])).ln();
            }
        }
    }
    mi
}

/// Position of an encoder on the information plane, together with the
/// trade-off weight that produced it. `delta_c = I(X¹;X²) − I(Z;X²)` is the
/// residual shared information the encoder fails to carry.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct InfoCoords {
    pub i_z_x1: f64,
    pub i_z_x2: f64,
    pub i_x1_x2: f64,
    pub i_z_x1_given_x2: f64,
    pub beta: f64,
    pub delta_c: f64,
}

impl InfoCoords {
    /// Data-processing bounds, the Markov identity and δ_c ≥ 0, all within
    /// [`COORD_TOL`].
    pub fn validate(&self) -> Result<()> {
        let tol = COORD_TOL;
        if self.i_z_x2 < -tol
            || self.i_z_x2 > self.i_z_x1 + tol
            || self.i_z_x2 > self.i_x1_x2 + tol
        {
            return Err(Error::Numeric(format!(
                "data-processing violation: I(Z;X2)={} vs I(Z;X1)={}, I(X1;X2)={}",
                self.i_z_x2, self.i_z_x1, self.i_x1_x2
            )));
        }
        let markov = self.i_z_x1 - self.i_z_x2;
        if (self.i_z_x1_given_x2 - markov).abs() > tol {
            return Err(Error::Numeric(format!(
                "Markov identity violation: I(Z;X1|X2)={} vs I(Z;X1)-I(Z;X2)={}",
                self.i_z_x1_given_x2, markov
            )));
        }
        if self.delta_c < -tol {
            return Err(Error::Numeric(format!("negative delta_c: {}", self.delta_c)));
        }
        Ok(())
    }

    /// The step-1 objective value I(Z;X²) − β·I(Z;X¹|X²).
    pub fn lagrangian(&self) -> f64 {
        self.i_z_x2 - self.beta * self.i_z_x1_given_x2
    }
}

/// Exact information coordinates of `enc` under `joint`. The conditional
/// term is computed directly from the extended joint p(x,y)·q(z|x), not via
/// the Markov identity, so the identity stays checkable.
pub fn info_coords(joint: &DiscreteJoint, enc: &Encoder, beta: f64) -> InfoCoords {
    let (nx, ny, nz) = (joint.nx(), joint.ny(), enc.nz());
    assert_eq!(enc.matrix().rows(), nx, "encoder row count must match |X1|");
    let px = joint.marginal_x();
    let py = joint.marginal_y();

    let mut qz = vec![0.0; nz];
    for x in 0..nx {
        for z in 0..nz {
            qz[z] += px[x] * enc.prob(x, z);
        }
    }
    // Joint of (z, y).
    let mut qzy = vec![0.0; nz * ny];
    for x in 0..nx {
        for y in 0..ny {
            let pxy = joint.prob(x, y);
            if pxy == 0.0 {
                continue;
            }
            for z in 0..nz {
                qzy[z * ny + y] += pxy * enc.prob(x, z);
            }
        }
    }

    let mut i_z_x1 = 0.0;
    for x in 0..nx {
        for z in 0..nz {
            let q = enc.prob(x, z);
            if q > 0.0 && px[x] > 0.0 {
                i_z_x1 += px[x] * q * (q / qz[z]).ln();
            }
        }
    }

    let mut i_z_x2 = 0.0;
    for z in 0..nz {
        for y in 0..ny {
            let p = qzy[z * ny + y];
            if p > 0.0 {
                i_z_x2 += p * (p / (qz[z] * py[y])).ln();
            }
        }
    }

    let mut i_cond = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            let pxy = joint.prob(x, y);
            if pxy == 0.0 {
                continue;
            }
            for z in 0..nz {
                let q = enc.prob(x, z);
                if q > 0.0 {
                    // ln[q(z|x) / q(z|y)] with q(z|y) = qzy/p(y).
                    i_cond += pxy * q * (q * py[y] / qzy[z * ny + y]).ln();
                }
            }
        }
    }

    let i_x1_x2 = mutual_info(joint);
    InfoCoords {
        i_z_x1,
        i_z_x2,
        i_x1_x2,
        i_z_x1_given_x2: i_cond,
        beta,
        delta_c: i_x1_x2 - i_z_x2,
    }
}

// ── Bottleneck optimization ──────────────────────────────────────────────

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct CebOptions {
    pub iters: usize,
    pub restarts: usize,
    /// Stop when the max entry change of q(z|x) falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for CebOptions {
    fn default() -> Self {
        CebOptions { iters: 2000, restarts: 20, tol: 1e-10, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct CebResult {
    pub encoder: Encoder,
    pub coords: InfoCoords,
    pub converged: bool,
    pub iterations: usize,
}

/// Maximizes I(Z;X²) − β·I(Z;X¹|X²) over stochastic encoders q(z|x¹) with
/// `z_size` symbols. Runs `opts.restarts` random initializations and keeps
/// the best final objective; non-convergence within `opts.iters` is
/// reported on the result, not an error.
pub fn ceb_optimize(
    joint: &DiscreteJoint,
    beta: f64,
    z_size: usize,
    opts: &CebOptions,
) -> Result<CebResult> {
    if beta <= 0.0 {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    if z_size == 0 {
        return Err(Error::Config("z_size must be at least 1".into()));
    }
    if opts.restarts == 0 || opts.iters == 0 {
        return Err(Error::Config("iters and restarts must be positive".into()));
    }

    let mut best: Option<CebResult> = None;
    for r in 0..opts.restarts {
        let mut rng = stream(derive_seed(opts.seed, &format!("restart-{r}")), streams::ORACLE_RESTARTS);
        let init = Encoder::random(joint.nx(), z_size, &mut rng);
        let run = ceb_fixed_point(joint, beta, init, opts);
        let better = match &best {
            None => true,
            Some(b) => run.coords.lagrangian() > b.coords.lagrangian(),
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// One fixed-point run from a given initialization.
fn ceb_fixed_point(
    joint: &DiscreteJoint,
    beta: f64,
    init: Encoder,
    opts: &CebOptions,
) -> CebResult {
    let (nx, ny) = (joint.nx(), joint.ny());
    let nz = init.nz();
    let px = joint.marginal_x();
    // p(y|x) rows.
    let mut pyx = vec![0.0; nx * ny];
    for x in 0..nx {
        for y in 0..ny {
            pyx[x * ny + y] = joint.prob(x, y) / px[x];
        }
    }
    // Inverse temperature of the equivalent plain-bottleneck problem:
    // maximize I(Z;X²) − [β/(1+β)]·I(Z;X¹) ⇔ KL weight (1+β)/β.
    let kl_weight = (1.0 + beta) / beta;

    let mut q = init;
    let mut prev_lagrangian = info_coords(joint, &q, beta).lagrangian();
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.iters {
        iterations = it + 1;
        // Induced marginal and decoder.
        let mut qz = vec![0.0; nz];
        for x in 0..nx {
            for z in 0..nz {
                qz[z] += px[x] * q.prob(x, z);
            }
        }
        let mut qyz = vec![0.0; nz * ny]; // q(y|z)
        for z in 0..nz {
            if qz[z] > 0.0 {
                for x in 0..nx {
                    let w = q.prob(x, z) * px[x] / qz[z];
                    if w > 0.0 {
                        for y in 0..ny {
                            qyz[z * ny + y] += w * pyx[x * ny + y];
                        }
                    }
                }
            } else {
                // Dead symbol: keep a uniform decoder so its score stays
                // finite-ish; ln q(z) = −∞ excludes it anyway.
                for y in 0..ny {
                    qyz[z * ny + y] = 1.0 / ny as f64;
                }
            }
        }

        // Self-consistent encoder update.
        let mut next = Tensor::zeros(nx, nz);
        let mut max_change: f64 = 0.0;
        for x in 0..nx {
            let mut scores = vec![f64::NEG_INFINITY; nz];
            for z in 0..nz {
                if qz[z] <= 0.0 {
                    continue;
                }
                let mut kl = 0.0;
                let mut finite = true;
                for y in 0..ny {
                    let p = pyx[x * ny + y];
                    if p > 0.0 {
                        let d = qyz[z * ny + y];
                        if d > 0.0 {
                            kl += p * (p / d).ln();
                        } else {
                            finite = false;
                            break;
                        }
                    }
                }
                if finite {
                    scores[z] = qz[z].ln() - kl_weight * kl;
                }
            }
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let row = next.row_mut(x);
            if m == f64::NEG_INFINITY {
                // No symbol can describe this x; restart the row uniform.
                for v in row.iter_mut() {
                    *v = 1.0 / nz as f64;
                }
            } else {
                let mut total = 0.0;
                for z in 0..nz {
                    let e = (scores[z] - m).exp();
                    row[z] = e;
                    total += e;
                }
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
            for (z, v) in row.iter().enumerate() {
                max_change = max_change.max((v - q.prob(x, z)).abs());
            }
        }
        q = Encoder { q: next };

        // Fixed-point ascent property of the objective, asserted per run.
        let lagrangian = info_coords(joint, &q, beta).lagrangian();
        assert!(
            lagrangian >= prev_lagrangian - 1e-9 * (1.0 + prev_lagrangian.abs()),
            "bottleneck objective decreased: {prev_lagrangian} -> {lagrangian}"
        );
        prev_lagrangian = lagrangian;

        if max_change < opts.tol {
            converged = true;
            break;
        }
    }

    let coords = info_coords(joint, &q, beta);
    CebResult { encoder: q, coords, converged, iterations }
}

// ── Trade-off curve ──────────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct IbCurve {
    /// One optimized point per grid β, sorted by I(Z;X¹) ascending.
    pub points: Vec<CebResult>,
    /// Indices into `points` forming the upper hull of the frontier.
    pub hull: Vec<usize>,
}

/// Optimizes one encoder per β in `beta_grid` (must be sorted ascending)
/// and reports the information-plane frontier with its upper hull.
pub fn ib_curve(
    joint: &DiscreteJoint,
    beta_grid: &[f64],
    z_size: usize,
    opts: &CebOptions,
) -> Result<IbCurve> {
    if beta_grid.is_empty() {
        return Err(Error::Config("beta grid must be non-empty".into()));
    }
    if beta_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("beta grid must be sorted ascending".into()));
    }
    let mut points: Vec<CebResult> = beta_grid
        .par_iter()
        .enumerate()
        .map(|(i, &beta)| {
            let point_opts =
                CebOptions { seed: derive_seed(opts.seed, &format!("curve-{i}")), ..*opts };
            ceb_optimize(joint, beta, z_size, &point_opts)
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.coords.i_z_x1.total_cmp(&b.coords.i_z_x1));
    let hull = upper_hull(&points);
    Ok(IbCurve { points, hull })
}

/// Andrew-style upper hull over (I(Z;X¹), I(Z;X²)) points sorted by x.
fn upper_hull(points: &[CebResult]) -> Vec<usize> {
    let xy: Vec<(f64, f64)> =
        points.iter().map(|p| (p.coords.i_z_x1, p.coords.i_z_x2)).collect();
    let mut hull: Vec<usize> = Vec::new();
    for i in 0..xy.len() {
        while hull.len() >= 2 {
            let a = xy[hull[hull.len() - 2]];
            let b = xy[hull[hull.len() - 1]];
            let c = xy[i];
            // Keep b only if it lies strictly above segment a-c.
            let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

// ── MNI attainability classification ─────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MniTag {
    AttainableDeterministicForward,
    AttainableDeterministicBackward,
    AttainableSubdomainIndependence,
    UnattainableFullSupport,
    Unknown,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MniVerdict {
    pub tag: MniTag,
    pub witness: String,
}

/// Classifies MNI attainability of a joint by checking, in order:
/// forward determinism (one nonzero per row), backward determinism (one
/// nonzero per column), full support (every cell positive ⇒ unattainable),
/// and per-component sub-domain independence (every connected component of
/// the support bipartite graph is rank-1 ⇒ attainable). The classifier is
/// sound but incomplete: anything else is `Unknown`.
pub fn mni_check(joint: &DiscreteJoint) -> MniVerdict {
    let (nx, ny) = (joint.nx(), joint.ny());

    if (0..nx).all(|x| (0..ny).filter(|&y| joint.prob(x, y) > 0.0).count() == 1) {
        return MniVerdict {
            tag: MniTag::AttainableDeterministicForward,
            witness: "every x maps to a single x2 symbol".into(),
        };
    }
    if (0..ny).all(|y| (0..nx).filter(|&x| joint.prob(x, y) > 0.0).count() == 1) {
        return MniVerdict {
            tag: MniTag::AttainableDeterministicBackward,
            witness: "every x2 symbol arises from a single x".into(),
        };
    }
    if (0..nx).all(|x| (0..ny).all(|y| joint.prob(x, y) > 0.0)) {
        return MniVerdict {
            tag: MniTag::UnattainableFullSupport,
            witness: "p(x1,x2) > 0 on the whole domain".into(),
        };
    }

    // Connected components of the support bipartite graph are the maximal
    // candidate rectangles for the sub-domain independence condition.
    let components = support_components(joint);
    for (rows, cols) in &components {
        if !component_is_rank1(joint, rows, cols) {
            return MniVerdict {
                tag: MniTag::Unknown,
                witness: format!(
                    "support component with rows {rows:?} is not an independent block"
                ),
            };
        }
    }
    MniVerdict {
        tag: MniTag::AttainableSubdomainIndependence,
        witness: format!(
            "{} support component(s), each an outer product of positive marginals",
            components.len()
        ),
    }
}

/// Connected components over the bipartite support graph; each returned as
/// (row indices, column indices), both sorted.
fn support_components(joint: &DiscreteJoint) -> Vec<(Vec<usize>, Vec<usize>)> {
    let (nx, ny) = (joint.nx(), joint.ny());
    let mut row_seen = vec![false; nx];
    let mut col_seen = vec![false; ny];
    let mut out = Vec::new();
    for start in 0..nx {
        if row_seen[start] {
            continue;
        }
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut stack = vec![(true, start)];
        row_seen[start] = true;
        while let Some((is_row, i)) = stack.pop() {
            if is_row {
                rows.push(i);
                for y in 0..ny {
                    if joint.prob(i, y) > 0.0 && !col_seen[y] {
                        col_seen[y] = true;
                        stack.push((false, y));
                    }
                }
            } else {
                cols.push(i);
                for x in 0..nx {
                    if joint.prob(x, i) > 0.0 && !row_seen[x] {
                        row_seen[x] = true;
                        stack.push((true, x));
                    }
                }
            }
        }
        rows.sort_unstable();
        cols.sort_unstable();
        out.push((rows, cols));
    }
    out
}

/// True when the restriction of the joint to `rows × cols` factorizes as an
/// outer product (conditional independence on the sub-domain) within
/// [`RANK1_TOL`]. A positive rank-1 block is automatically fully supported.
fn component_is_rank1(joint: &DiscreteJoint, rows: &[usize], cols: &[usize]) -> bool {
    let mass: f64 =
        rows.iter().flat_map(|&x| cols.iter().map(move |&y| joint.prob(x, y))).sum();
    if mass <= 0.0 {
        return false;
    }
    for &x in rows {
        let rx: f64 = cols.iter().map(|&y| joint.prob(x, y)).sum();
        for &y in cols {
            let cy: f64 = rows.iter().map(|&r| joint.prob(r, y)).sum();
            if (joint.prob(x, y) - rx * cy / mass).abs() > RANK1_TOL {
                return false;
            }
        }
    }
    true
}

// ── Joint-variable bounds (step-2 optimality gap) ────────────────────────

/// Result of the numerical check of the step-2 substitution bound
/// `0 ≤ I(Z¹,X²;X¹) − I(Z¹,Ẑ_c²*;X¹) ≤ δ_c` over random encoders Z¹.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Prop4Report {
    pub beta: f64,
    pub delta_c: f64,
    pub n_encoders: usize,
    pub min_gap: f64,
    pub max_gap: f64,
    pub tol: f64,
    pub passes: bool,
    /// True when the optimized Ẑ_c²* run converged.
    pub reference_converged: bool,
}

/// `I(Z¹,Ẑ²;X¹)` where the pair (Z¹,Ẑ²) is treated as one variable, under
/// the extended joint p(x¹,x²)·q₁(z¹|x¹)·q₂(ẑ²|x²). Pass `None` for `enc2`
/// to compute `I(Z¹,X²;X¹)` (i.e. Ẑ² replaced by X² itself).
pub fn joint_pair_information(
    joint: &DiscreteJoint,
    enc1: &Encoder,
    enc2: Option<&Encoder>,
) -> f64 {
    let (nx, ny) = (joint.nx(), joint.ny());
    let nz = enc1.nz();
    let nw = enc2.map_or(ny, Encoder::nz);
    let px = joint.marginal_x();

    // s(z, w, x) = Σ_y p(x,y) q1(z|x) q2(w|y); with enc2 = None, w = y.
    let mut s = vec![0.0; nz * nw * nx];
    for x in 0..nx {
        for y in 0..ny {
            let pxy = joint.prob(x, y);
            if pxy == 0.0 {
                continue;
            }
            for z in 0..nz {
                let qz = enc1.prob(x, z);
                if qz == 0.0 {
                    continue;
                }
                match enc2 {
                    None => s[(z * nw + y) * nx + x] += pxy * qz,
                    Some(e2) => {
                        for w in 0..nw {
                            let qw = e2.prob(y, w);
                            if qw > 0.0 {
                                s[(z * nw + w) * nx + x] += pxy * qz * qw;
                            }
                        }
                    }
                }
            }
        }
    }

    let mut info = 0.0;
    for zw in 0..nz * nw {
        let pair_mass: f64 = (0..nx).map(|x| s[zw * nx + x]).sum();
        if pair_mass == 0.0 {
            continue;
        }
        for x in 0..nx {
            let v = s[zw * nx + x];
            if v > 0.0 {
                info += v * (v / (pair_mass * px[x])).ln();
            }
        }
    }
    info
}

/// Optimizes Ẑ_c²* on the transposed joint at `beta`, then verifies the
/// substitution bound for `n_encoders` random encoders Z¹. Restricted to
/// small alphabets so the extended joint stays exactly enumerable.
pub fn verify_prop4(
    joint: &DiscreteJoint,
    beta: f64,
    z_size: usize,
    n_encoders: usize,
    opts: &CebOptions,
) -> Result<Prop4Report> {
    if joint.nx() > 6 || joint.ny() > 6 {
        return Err(Error::Config(
            "verify_prop4 requires alphabets of size at most 6".into(),
        ));
    }
    if z_size > 4 || z_size == 0 {
        return Err(Error::Config("verify_prop4 requires 1 <= z_size <= 4".into()));
    }

    // Optimal shared representation of X² with relevance target X¹.
    let reference = ceb_optimize(&joint.transposed(), beta, z_size, opts)?;
    // On the transposed joint the "X²" slot is the original X¹.
    let delta_c = mutual_info(joint) - reference.coords.i_z_x2;

    let tol = 1e-6;
    let mut rng = stream(opts.seed, streams::PROP4_ENCODERS);
    let mut min_gap = f64::INFINITY;
    let mut max_gap = f64::NEG_INFINITY;
    for _ in 0..n_encoders {
        let enc1 = Encoder::random(joint.nx(), z_size, &mut rng);
        let with_x2 = joint_pair_information(joint, &enc1, None);
        let with_ref = joint_pair_information(joint, &enc1, Some(&reference.encoder));
        let gap = with_x2 - with_ref;
        min_gap = min_gap.min(gap);
        max_gap = max_gap.max(gap);
    }
    let passes = min_gap >= -tol && max_gap <= delta_c + tol;
    Ok(Prop4Report {
        beta,
        delta_c,
        n_encoders,
        min_gap,
        max_gap,
        tol,
        passes,
        reference_converged: reference.converged,
    })
}

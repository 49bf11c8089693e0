//! The two-layer soft-selection model.
//!
//! For each precomputed hop-feature matrix `X_j` the first layer computes a
//! private affine map `T_j = X_j W0_j + b0_j`, projects every row onto the
//! unit sphere (`N_j`), and scales the branch by `γ·α_j` where `α` is the
//! softmax of a learnable score vector. The scaled branches are concatenated
//! into `H¹`, passed through ReLU and (in training) inverted dropout, and a
//! second affine layer produces class logits.
//!
//! Gradients are derived by hand; `backward` mirrors `forward` step by step.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Rows whose L2 norm falls below this are mapped to zero by hop-normalization.
pub const HOP_NORM_EPS: f64 = 1e-12;

/// Ablation mode of the first layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Softmax-constrained scalars, a private `W0` per hop, hop-normalization.
    Full,
    /// Learnable scalars used as-is, without the softmax.
    NoSoftselect,
    /// A single `W0`/`b0` shared by every hop branch.
    SharedW0,
    /// No row-wise L2 normalization after the first layer.
    NoHopnorm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoSoftselect,
        Variant::SharedW0,
        Variant::NoHopnorm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSoftselect => "no-softselect",
            Variant::SharedW0 => "shared-w0",
            Variant::NoHopnorm => "no-hopnorm",
        }
    }

    fn uses_softmax(self) -> bool {
        self != Variant::NoSoftselect
    }

    fn uses_hopnorm(self) -> bool {
        self != Variant::NoHopnorm
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant {s:?} (expected full, no-softselect, shared-w0 or no-hopnorm)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Propagation depth `K`; the model sees `2K+1` feature matrices.
    pub hops: usize,
    /// Embedding width of each hop branch.
    pub hidden: usize,
    pub classes: usize,
    pub gamma: f64,
    pub dropout: f64,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hops: 3,
            hidden: 64,
            classes: 0,
            gamma: 1.0,
            dropout: 0.5,
            variant: Variant::Full,
        }
    }
}

impl ModelConfig {
    /// Number of input matrices, `2K+1`.
    pub fn num_inputs(&self) -> usize {
        2 * self.hops + 1
    }

    fn num_first_layers(&self) -> usize {
        match self.variant {
            Variant::SharedW0 => 1,
            _ => self.num_inputs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden must be at least 1".into()));
        }
        if self.classes == 0 {
            return Err(Error::Config("classes must be at least 1".into()));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Which optimizer group a tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    /// Hop-selection scores.
    Sca,
    /// First-layer weights and biases.
    Fc1,
    /// Second-layer weight and bias.
    Fc2,
}

/// All learnable state. The same struct also carries gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsgnnParams {
    /// `d × hidden` per hop branch, or a single shared matrix.
    pub w0: Vec<DenseMatrix>,
    pub b0: Vec<Vec<f64>>,
    /// Pre-softmax selection scores, one per input matrix.
    pub raw_alpha: Vec<f64>,
    /// `(L·hidden) × classes`.
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
}

pub type Grads = FsgnnParams;

impl FsgnnParams {
    /// Uniform `±1/√fan_in` weights and biases, selection scores all one.
    pub fn init(cfg: &ModelConfig, feature_dim: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            (0..rows * cols)
                .map(|_| rng.random_range(-bound..bound))
                .collect()
        };
        let h = cfg.hidden;
        let mut w0 = Vec::new();
        let mut b0 = Vec::new();
        for _ in 0..cfg.num_first_layers() {
            w0.push(DenseMatrix::from_raw(
                feature_dim,
                h,
                uniform(feature_dim, h, feature_dim),
            ));
            b0.push(uniform(1, h, feature_dim));
        }
        let concat = cfg.num_inputs() * h;
        let w2 = DenseMatrix::from_raw(concat, cfg.classes, uniform(concat, cfg.classes, concat));
        let b2 = uniform(1, cfg.classes, concat);
        Ok(Self {
            w0,
            b0,
            raw_alpha: vec![1.0; cfg.num_inputs()],
            w2,
            b2,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w0: self
                .w0
                .iter()
                .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
                .collect(),
            b0: self.b0.iter().map(|b| vec![0.0; b.len()]).collect(),
            raw_alpha: vec![0.0; self.raw_alpha.len()],
            w2: DenseMatrix::zeros(self.w2.rows(), self.w2.cols()),
            b2: vec![0.0; self.b2.len()],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.w0.first().map_or(0, DenseMatrix::rows)
    }

    /// Checks every tensor shape against `cfg` and input width `feature_dim`.
    pub fn check_shapes(&self, cfg: &ModelConfig, feature_dim: usize) -> Result<()> {
        let h = cfg.hidden;
        let mismatch = |what: String| Err(Error::DimensionMismatch(what));
        if self.w0.len() != cfg.num_first_layers() || self.b0.len() != self.w0.len() {
            return mismatch(format!(
                "{} first-layer weights for variant {} with {} inputs",
                self.w0.len(),
                cfg.variant,
                cfg.num_inputs()
            ));
        }
        for (w, b) in self.w0.iter().zip(&self.b0) {
            if w.shape() != (feature_dim, h) || b.len() != h {
                return mismatch(format!(
                    "first-layer weight {:?}, bias {}; expected ({feature_dim}, {h})",
                    w.shape(),
                    b.len()
                ));
            }
        }
        if self.raw_alpha.len() != cfg.num_inputs() {
            return mismatch(format!(
                "{} selection scores for {} inputs",
                self.raw_alpha.len(),
                cfg.num_inputs()
            ));
        }
        if self.w2.shape() != (cfg.num_inputs() * h, cfg.classes) || self.b2.len() != cfg.classes {
            return mismatch(format!(
                "second-layer weight {:?}, bias {}",
                self.w2.shape(),
                self.b2.len()
            ));
        }
        Ok(())
    }

    /// Effective branch weights: softmax of the scores, or the raw scores
    /// under [`Variant::NoSoftselect`].
    pub fn alpha(&self, cfg: &ModelConfig) -> Vec<f64> {
        if cfg.variant.uses_softmax() {
            softmax_alpha(&self.raw_alpha)
        } else {
            self.raw_alpha.clone()
        }
    }

    /// Flat views of every tensor, grouped for the optimizer. The order is
    /// fixed and shared with [`FsgnnParams::tensors_mut`].
    pub fn tensors(&self) -> Vec<(ParamGroup, &[f64])> {
        let mut out = vec![(ParamGroup::Sca, self.raw_alpha.as_slice())];
        for (w, b) in self.w0.iter().zip(&self.b0) {
            out.push((ParamGroup::Fc1, w.as_slice()));
            out.push((ParamGroup::Fc1, b.as_slice()));
        }
        out.push((ParamGroup::Fc2, self.w2.as_slice()));
        out.push((ParamGroup::Fc2, self.b2.as_slice()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        let mut out = vec![(ParamGroup::Sca, self.raw_alpha.as_mut_slice())];
        for (w, b) in self.w0.iter_mut().zip(self.b0.iter_mut()) {
            out.push((ParamGroup::Fc1, w.as_mut_slice()));
            out.push((ParamGroup::Fc1, b.as_mut_slice()));
        }
        out.push((ParamGroup::Fc2, self.w2.as_mut_slice()));
        out.push((ParamGroup::Fc2, self.b2.as_mut_slice()));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    fn first_layer(&self, branch: usize) -> (&DenseMatrix, &[f64]) {
        let k = branch.min(self.w0.len() - 1);
        (&self.w0[k], &self.b0[k])
    }
}

/// Numerically stable softmax.
pub fn softmax_alpha(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|r| (r - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Row-wise L2 normalization; rows with norm below [`HOP_NORM_EPS`] become zero.
pub fn hop_normalize(h: &DenseMatrix) -> DenseMatrix {
    hop_normalize_with_norms(h).0
}

fn hop_normalize_with_norms(h: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    let mut out = h.clone();
    let mut norms = Vec::with_capacity(h.rows());
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < HOP_NORM_EPS {
            row.fill(0.0);
        } else {
            row.iter_mut().for_each(|v| *v /= norm);
        }
        norms.push(norm);
    }
    (out, norms)
}

/// Forward-pass mode. Training draws dropout masks from the given generator.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

/// Intermediate values retained by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `N_j` per branch (equal to `T_j` without hop-normalization).
    normalized: Vec<DenseMatrix>,
    /// Row L2 norms of `T_j` per branch.
    norms: Vec<Vec<f64>>,
    /// Effective `α` (post-softmax unless disabled).
    alpha: Vec<f64>,
    /// Concatenated scaled branches `H¹`.
    h1: DenseMatrix,
    /// Per-unit dropout scale: 0 or `1/(1-p)`; `None` when `p = 0`.
    mask: Option<Vec<f64>>,
    /// `dropout(ReLU(H¹))`, the second layer's input.
    activated: DenseMatrix,
    logits: DenseMatrix,
}

impl ForwardCache {
    pub fn logits(&self) -> &DenseMatrix {
        &self.logits
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn hidden(&self) -> &DenseMatrix {
        &self.h1
    }
}

struct FirstLayer {
    normalized: Vec<DenseMatrix>,
    norms: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    h1: DenseMatrix,
}

fn check_inputs(params: &FsgnnParams, cfg: &ModelConfig, inputs: &[DenseMatrix]) -> Result<usize> {
    if inputs.len() != cfg.num_inputs() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} input matrices, got {}",
            cfg.num_inputs(),
            inputs.len()
        )));
    }
    let rows = inputs[0].rows();
    let d = params.feature_dim();
    if let Some(bad) = inputs.iter().position(|x| x.shape() != (rows, d)) {
        return Err(Error::DimensionMismatch(format!(
            "input {bad} has shape {:?}, expected ({rows}, {d})",
            inputs[bad].shape()
        )));
    }
    params.check_shapes(cfg, d)?;
    Ok(rows)
}

fn first_layer(
    params: &FsgnnParams,
    cfg: &ModelConfig,
    inputs: &[DenseMatrix],
) -> Result<FirstLayer> {
    let rows = check_inputs(params, cfg, inputs)?;
    let h = cfg.hidden;
    let alpha = params.alpha(cfg);
    let mut h1 = DenseMatrix::zeros(rows, cfg.num_inputs() * h);
    let mut normalized = Vec::with_capacity(inputs.len());
    let mut norms = Vec::with_capacity(inputs.len());
    for (j, x) in inputs.iter().enumerate() {
        let (w, b) = params.first_layer(j);
        let mut t = x.matmul(w)?;
        t.add_row_vector(b);
        let (n, row_norms) = if cfg.variant.uses_hopnorm() {
            hop_normalize_with_norms(&t)
        } else {
            (t, Vec::new())
        };
        let scale = cfg.gamma * alpha[j];
        for i in 0..rows {
            let dst = &mut h1.row_mut(i)[j * h..(j + 1) * h];
            for (o, v) in dst.iter_mut().zip(n.row(i)) {
                *o = scale * v;
            }
        }
        normalized.push(n);
        norms.push(row_norms);
    }
    Ok(FirstLayer {
        normalized,
        norms,
        alpha,
        h1,
    })
}

/// The concatenated scaled representation `H¹` (pre-ReLU), without dropout.
pub fn hidden_representation(
    params: &FsgnnParams,
    cfg: &ModelConfig,
    inputs: &[DenseMatrix],
) -> Result<DenseMatrix> {
    Ok(first_layer(params, cfg, inputs)?.h1)
}

/// Runs the model on row-aligned inputs (one matrix per hop branch, all with
/// the same node rows). Returns the logits and, in training mode, the cache
/// needed by [`backward`].
pub fn forward(
    params: &FsgnnParams,
    cfg: &ModelConfig,
    inputs: &[DenseMatrix],
    mode: Mode<'_>,
) -> Result<(DenseMatrix, Option<ForwardCache>)> {
    let FirstLayer {
        normalized,
        norms,
        alpha,
        h1,
    } = first_layer(params, cfg, inputs)?;

    let mut activated = h1.clone();
    activated
        .as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = v.max(0.0));
    let training = matches!(mode, Mode::Train(_));
    let mask = match mode {
        Mode::Train(rng) if cfg.dropout > 0.0 => {
            let keep = 1.0 / (1.0 - cfg.dropout);
            let mask: Vec<f64> = (0..activated.as_slice().len())
                .map(|_| {
                    if rng.random::<f64>() < cfg.dropout {
                        0.0
                    } else {
                        keep
                    }
                })
                .collect();
            for (v, m) in activated.as_mut_slice().iter_mut().zip(&mask) {
                *v *= m;
            }
            Some(mask)
        }
        _ => None,
    };
    let mut logits = activated.matmul(&params.w2)?;
    logits.add_row_vector(&params.b2);

    let cache = training.then(|| ForwardCache {
        normalized,
        norms,
        alpha,
        h1,
        mask,
        activated,
        logits: logits.clone(),
    });
    Ok((logits, cache))
}

fn check_targets(logits: &DenseMatrix, targets: &[usize]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::Undefined("loss and accuracy need at least one row"));
    }
    if targets.len() != logits.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {} logit rows",
            targets.len(),
            logits.rows()
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= logits.cols()) {
        return Err(Error::DimensionMismatch(format!(
            "label {bad} out of range for {} classes",
            logits.cols()
        )));
    }
    Ok(())
}

/// Mean of `-log softmax(z_i)[y_i]` over the rows of `logits`.
pub fn cross_entropy(logits: &DenseMatrix, targets: &[usize]) -> Result<f64> {
    check_targets(logits, targets)?;
    let total: f64 = targets
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            // log Σ exp(z) = z_m + ln(1 + Σ_{k≠m} exp(z_k − z_m)), m = argmax
            let row = logits.row(i);
            let m = argmax(row);
            let rest: f64 = row
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != m)
                .map(|(_, z)| (z - row[m]).exp())
                .sum();
            (row[m] - row[y]) + rest.ln_1p()
        })
        .sum();
    Ok(total / targets.len() as f64)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn accuracy(logits: &DenseMatrix, targets: &[usize]) -> Result<f64> {
    check_targets(logits, targets)?;
    let correct = targets
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax(logits.row(i)) == y)
        .count();
    Ok(correct as f64 / targets.len() as f64)
}

/// Exact gradients of `cross_entropy(forward(..))` for the forward pass that
/// produced `cache`. `inputs` must be the same matrices given to `forward`.
pub fn backward(
    cache: &ForwardCache,
    params: &FsgnnParams,
    cfg: &ModelConfig,
    inputs: &[DenseMatrix],
    targets: &[usize],
) -> Result<Grads> {
    let rows = check_inputs(params, cfg, inputs)?;
    check_targets(&cache.logits, targets)?;
    if cache.logits.rows() != rows || cache.normalized.len() != inputs.len() {
        return Err(Error::DimensionMismatch(
            "forward cache does not match the given inputs".into(),
        ));
    }
    let h = cfg.hidden;
    let mut grads = params.zeros_like();

    // dL/dZ = (softmax(Z) - onehot) / rows
    let mut d_logits = cache.logits.clone();
    let inv_rows = 1.0 / rows as f64;
    for (i, &y) in targets.iter().enumerate() {
        let row = d_logits.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|z| *z = (*z - max).exp());
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
        row[y] -= 1.0;
        row.iter_mut().for_each(|g| *g *= inv_rows);
    }
    grads.w2 = cache.activated.t_matmul(&d_logits)?;
    grads.b2 = d_logits.column_sums();

    // Back through dropout and ReLU.
    let mut d_h1 = d_logits.matmul_t(&params.w2)?;
    for (k, (g, &pre)) in d_h1
        .as_mut_slice()
        .iter_mut()
        .zip(cache.h1.as_slice())
        .enumerate()
    {
        let scale = cache.mask.as_ref().map_or(1.0, |m| m[k]);
        *g = if pre > 0.0 { *g * scale } else { 0.0 };
    }

    let mut d_alpha = vec![0.0; inputs.len()];
    for (j, x) in inputs.iter().enumerate() {
        let n = &cache.normalized[j];
        let scale = cfg.gamma * cache.alpha[j];
        let mut d_t = DenseMatrix::zeros(rows, h);
        let mut d_scale = 0.0;
        for i in 0..rows {
            let d_s = &d_h1.row(i)[j * h..(j + 1) * h];
            let n_row = n.row(i);
            d_scale += d_s.iter().zip(n_row).map(|(a, b)| a * b).sum::<f64>();
            let d_t_row = d_t.row_mut(i);
            if cfg.variant.uses_hopnorm() {
                let norm = cache.norms[j][i];
                if norm >= HOP_NORM_EPS {
                    // d/dt (t/|t|) applied to dN = scale·dS:
                    // (dN - y (y·dN)) / |t| with y = N row.
                    let proj: f64 = d_s.iter().zip(n_row).map(|(a, b)| a * b).sum();
                    for ((o, g), y) in d_t_row.iter_mut().zip(d_s).zip(n_row) {
                        *o = scale * (g - y * proj) / norm;
                    }
                }
            } else {
                for (o, g) in d_t_row.iter_mut().zip(d_s) {
                    *o = scale * g;
                }
            }
        }
        d_alpha[j] = cfg.gamma * d_scale;

        let k = j.min(grads.w0.len() - 1);
        let d_w = x.t_matmul(&d_t)?;
        for (acc, g) in grads.w0[k].as_mut_slice().iter_mut().zip(d_w.as_slice()) {
            *acc += g;
        }
        for (acc, g) in grads.b0[k].iter_mut().zip(d_t.column_sums()) {
            *acc += g;
        }
    }

    grads.raw_alpha = if cfg.variant.uses_softmax() {
        // Softmax Jacobian: dr_k = α_k (dα_k - Σ_j α_j dα_j).
        let alpha = &cache.alpha;
        let dot: f64 = alpha.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
        alpha
            .iter()
            .zip(&d_alpha)
            .map(|(a, g)| a * (g - dot))
            .collect()
    } else {
        d_alpha
    };
    Ok(grads)
}

/// Loss and gradients in one call.
pub fn loss_and_grads(
    params: &FsgnnParams,
    cfg: &ModelConfig,
    inputs: &[DenseMatrix],
    targets: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Grads)> {
    let (logits, cache) = forward(params, cfg, inputs, Mode::Train(rng))?;
    let cache = cache.expect("training mode always returns a cache");
    let loss = cross_entropy(&logits, targets)?;
    let grads = backward(&cache, params, cfg, inputs, targets)?;
    Ok((loss, grads))
}

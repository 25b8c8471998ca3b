//! Graph-convolutional branches and late decision fusion.
//!
//! Both architectures share one layer form,
//!
//! ```text
//! H' = Σ_k  P_k · H · Θ_k  (+ b)
//! ```
//!
//! where the propagation list `P` is `[Â]` for a first-order GCN
//! (`Â` = renormalized adjacency) and `[T_0(L̃), …, T_K(L̃)]` for a Chebyshev
//! GCN. A branch is two such layers with ReLU and inverted dropout between
//! them; the second layer emits logits. The late-fusion model averages the
//! per-branch softmax outputs.
//!
//! Gradients are written out by hand. The first layer only ever sees the
//! fixed node features, so `P_k X` is computed once per graph
//! ([`BranchInput`]) and reused by every forward and backward pass.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::popgraph::{normalize_adjacency, scaled_laplacian_with_estimate, LambdaRule, NormMode};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Cheb,
}

impl FromStr for Arch {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcn" => Ok(Arch::Gcn),
            "cheb" | "cgcn" | "chebyshev" => Ok(Arch::Cheb),
            other => Err(format!("unknown architecture {other:?}")),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Gcn => "gcn",
            Arch::Cheb => "cheb",
        })
    }
}

/// `[T_0, …, T_k]` of `l_tilde` by the three-term recurrence
/// `T_k = 2 L̃ T_{k−1} − T_{k−2}`.
pub fn cheb_basis(l_tilde: &Matrix, k: usize) -> Result<Vec<Matrix>> {
    if !l_tilde.is_square() {
        return Err(Error::Shape {
            op: "cheb_basis",
            lhs: l_tilde.shape(),
            rhs: (l_tilde.cols(), l_tilde.rows()),
        });
    }
    let n = l_tilde.rows();
    let mut basis = Vec::with_capacity(k + 1);
    basis.push(Matrix::identity(n));
    if k >= 1 {
        basis.push(l_tilde.clone());
    }
    for i in 2..=k {
        let mut next = l_tilde.matmul(&basis[i - 1])?.scale(2.0);
        next.axpy(-1.0, &basis[i - 2])?;
        basis.push(next);
    }
    Ok(basis)
}

/// The propagation matrices `P_k` of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOperator {
    pub ops: Vec<Matrix>,
}

impl PropagationOperator {
    /// Renormalized adjacency `D̃^{−1/2}(A + I)D̃^{−1/2}`.
    pub fn gcn(a: &Matrix) -> Result<Self> {
        Ok(Self {
            ops: vec![normalize_adjacency(a, NormMode::RenormSelfLoops)?],
        })
    }

    /// Chebyshev basis of the rescaled Laplacian of `a`.
    pub fn chebyshev(a: &Matrix, k: usize, lambda: LambdaRule) -> Result<Self> {
        let (l_tilde, _) = scaled_laplacian_with_estimate(a, lambda)?;
        Ok(Self {
            ops: cheb_basis(&l_tilde, k)?,
        })
    }

    pub fn for_arch(arch: Arch, a: &Matrix, k: usize, lambda: LambdaRule) -> Result<Self> {
        match arch {
            Arch::Gcn => Self::gcn(a),
            Arch::Cheb => Self::chebyshev(a, k, lambda),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.ops.first().map_or(0, Matrix::rows)
    }
}

/// A branch's graph plus its node features, with `P_k X` and the
/// transposes the backward pass needs precomputed.
#[derive(Debug, Clone)]
pub struct BranchInput {
    pub prop: PropagationOperator,
    pub x: Matrix,
    px: Vec<Matrix>,
    px_t: Vec<Matrix>,
    ops_t: Vec<Matrix>,
}

impl BranchInput {
    pub fn new(prop: PropagationOperator, x: Matrix) -> Result<Self> {
        let px = prop.ops.iter().map(|p| p.matmul(&x)).collect::<Result<Vec<_>>>()?;
        let px_t = px.iter().map(Matrix::transpose).collect();
        let ops_t = prop.ops.iter().map(Matrix::transpose).collect();
        Ok(Self {
            prop,
            x,
            px,
            px_t,
            ops_t,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.x.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.x.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    /// One `F_in × F_out` block per propagation matrix.
    pub theta: Vec<Matrix>,
    pub bias: Option<Vec<f64>>,
}

impl LayerWeights {
    fn glorot(blocks: usize, fan_in: usize, fan_out: usize, bias: bool, rng: &mut dyn RngCore) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let theta = (0..blocks)
            .map(|_| Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit)))
            .collect();
        Self {
            theta,
            bias: bias.then(|| vec![0.0; fan_out]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.theta[0].rows()
    }

    pub fn out_dim(&self) -> usize {
        self.theta[0].cols()
    }

    fn zeros_like(&self) -> Self {
        Self {
            theta: self.theta.iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect(),
            bias: self.bias.as_ref().map(|b| vec![0.0; b.len()]),
        }
    }

    /// `Σ_k P_k · (H Θ_k) + b`.
    fn propagate(&self, prop: &PropagationOperator, h: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(h.rows(), self.out_dim());
        for (p, theta) in prop.ops.iter().zip(&self.theta) {
            out.axpy(1.0, &p.matmul(&h.matmul(theta)?)?)?;
        }
        self.add_bias(&mut out);
        Ok(out)
    }

    /// `Σ_k (P_k X) Θ_k + b` from precomputed products.
    fn apply_precomputed(&self, px: &[Matrix]) -> Result<Matrix> {
        let mut out = Matrix::zeros(px[0].rows(), self.out_dim());
        for (pk, theta) in px.iter().zip(&self.theta) {
            out.axpy(1.0, &pk.matmul(theta)?)?;
        }
        self.add_bias(&mut out);
        Ok(out)
    }

    fn add_bias(&self, out: &mut Matrix) {
        if let Some(b) = &self.bias {
            for r in 0..out.rows() {
                for (o, &bv) in out.row_mut(r).iter_mut().zip(b) {
                    *o += bv;
                }
            }
        }
    }
}

/// Hyperparameters that fix a branch's shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub arch: Arch,
    /// Chebyshev order `K`; ignored for GCN.
    pub k_order: usize,
    pub hidden: usize,
    pub n_classes: usize,
    pub dropout: f64,
    pub bias: bool,
}

impl BranchSpec {
    pub fn blocks(&self) -> usize {
        match self.arch {
            Arch::Gcn => 1,
            Arch::Cheb => self.k_order + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.n_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "hidden ({}) must be ≥ 1 and classes ({}) ≥ 2",
                self.hidden, self.n_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BranchModel {
    pub spec: BranchSpec,
    pub layers: [LayerWeights; 2],
    /// Bumped on every parameter update; forward caches remember it.
    version: u64,
}

/// Equal spec and weights; the update counter is ignored.
impl PartialEq for BranchModel {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.layers == other.layers
    }
}

impl BranchModel {
    pub fn new(spec: BranchSpec, in_dim: usize, rng: &mut dyn RngCore) -> Result<Self> {
        spec.validate()?;
        let blocks = spec.blocks();
        let l0 = LayerWeights::glorot(blocks, in_dim, spec.hidden, spec.bias, rng);
        let l1 = LayerWeights::glorot(blocks, spec.hidden, spec.n_classes, spec.bias, rng);
        Ok(Self {
            spec,
            layers: [l0, l1],
            version: 0,
        })
    }

    /// Wraps explicit weights (tests, checkpoints).
    pub fn from_layers(spec: BranchSpec, layers: [LayerWeights; 2]) -> Result<Self> {
        spec.validate()?;
        for l in &layers {
            if l.theta.is_empty() || l.theta.iter().any(|t| t.shape() != l.theta[0].shape()) {
                return Err(Error::InvalidArgument("layer blocks must share one shape".into()));
            }
        }
        if layers[0].out_dim() != layers[1].in_dim() || layers[1].out_dim() != spec.n_classes {
            return Err(Error::InvalidArgument("layer shapes do not chain".into()));
        }
        Ok(Self {
            spec,
            layers,
            version: 0,
        })
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    /// Parameter tensors in a fixed order, each tagged with whether weight
    /// decay applies (weights yes, biases no).
    pub fn params_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        self.version += 1;
        let mut out = Vec::new();
        for layer in self.layers.iter_mut() {
            for t in layer.theta.iter_mut() {
                out.push((t.data_mut(), true));
            }
            if let Some(b) = layer.bias.as_mut() {
                out.push((b.as_mut_slice(), false));
            }
        }
        out
    }

    pub fn params(&self) -> Vec<(&[f64], bool)> {
        let mut out = Vec::new();
        for layer in self.layers.iter() {
            for t in layer.theta.iter() {
                out.push((t.data(), true));
            }
            if let Some(b) = layer.bias.as_ref() {
                out.push((b.as_slice(), false));
            }
        }
        out
    }

    /// `½ Σ ‖Θ‖²` over weight blocks.
    pub fn weight_sq_norm(&self) -> f64 {
        self.params()
            .iter()
            .filter(|(_, decay)| *decay)
            .map(|(p, _)| p.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            * 0.5
    }
}

/// Where dropout masks come from during a forward pass.
pub enum DropoutMask<'a> {
    Off,
    Random(&'a mut dyn RngCore),
    /// Pre-scaled keep mask (entries `0` or `1/(1−rate)`), shape `N × hidden`.
    Fixed(&'a Matrix),
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    pre: Matrix,
    mask: Option<Matrix>,
    hidden: Matrix,
}

impl ForwardCache {
    /// Post-activation, post-dropout hidden representation.
    pub fn hidden(&self) -> &Matrix {
        &self.hidden
    }
}

fn check_input(branch: &BranchModel, input: &BranchInput) -> Result<()> {
    if branch.layers[0].theta.len() != input.prop.ops.len() {
        return Err(Error::Shape {
            op: "forward (propagation blocks)",
            lhs: (branch.layers[0].theta.len(), 0),
            rhs: (input.prop.ops.len(), 0),
        });
    }
    if input.in_dim() != branch.in_dim() {
        return Err(Error::Shape {
            op: "forward (features)",
            lhs: input.x.shape(),
            rhs: branch.layers[0].theta[0].shape(),
        });
    }
    Ok(())
}

/// Two-layer forward pass returning raw logits (`N × C`).
pub fn forward(branch: &BranchModel, input: &BranchInput, dropout: DropoutMask<'_>) -> Result<(Matrix, ForwardCache)> {
    let pre = input_layer(branch, input)?;
    forward_from_pre(branch, input, pre, dropout)
}

/// First-layer pre-activation `Σ_k (P_k X) Θ_k + b`. It does not depend on
/// dropout, so one result can serve several forward passes at the same
/// parameter version.
pub fn input_layer(branch: &BranchModel, input: &BranchInput) -> Result<Matrix> {
    check_input(branch, input)?;
    branch.layers[0].apply_precomputed(&input.px)
}

/// Rest of [`forward`] given `pre` from [`input_layer`] at the branch's
/// current parameters.
pub fn forward_from_pre(
    branch: &BranchModel,
    input: &BranchInput,
    pre: Matrix,
    dropout: DropoutMask<'_>,
) -> Result<(Matrix, ForwardCache)> {
    check_input(branch, input)?;
    if pre.shape() != (input.n_nodes(), branch.spec.hidden) {
        return Err(Error::Shape {
            op: "forward_from_pre",
            lhs: pre.shape(),
            rhs: (input.n_nodes(), branch.spec.hidden),
        });
    }
    let mut hidden = pre.map(|v| v.max(0.0));
    let rate = branch.spec.dropout;
    let mask = match dropout {
        DropoutMask::Off => None,
        DropoutMask::Fixed(m) => {
            if m.shape() != hidden.shape() {
                return Err(Error::Shape {
                    op: "dropout mask",
                    lhs: m.shape(),
                    rhs: hidden.shape(),
                });
            }
            Some(m.clone())
        }
        DropoutMask::Random(_) if rate == 0.0 => None,
        DropoutMask::Random(rng) => {
            let keep = 1.0 / (1.0 - rate);
            Some(Matrix::from_fn(hidden.rows(), hidden.cols(), |_, _| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            }))
        }
    };
    if let Some(m) = &mask {
        hidden = hidden.hadamard(m)?;
    }
    let logits = branch.layers[1].propagate(&input.prop, &hidden)?;
    Ok((
        logits,
        ForwardCache {
            version: branch.version,
            pre,
            mask,
            hidden,
        },
    ))
}

/// Gradients shaped like a branch's [`LayerWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct BranchGrads {
    pub layers: [LayerWeights; 2],
}

impl BranchGrads {
    pub fn zeros_like(branch: &BranchModel) -> Self {
        Self {
            layers: [branch.layers[0].zeros_like(), branch.layers[1].zeros_like()],
        }
    }

    /// Same order as [`BranchModel::params`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in self.layers.iter() {
            for t in layer.theta.iter() {
                out.push(t.data());
            }
            if let Some(b) = layer.bias.as_ref() {
                out.push(b.as_slice());
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &BranchGrads) -> Result<()> {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (ta, tb) in a.theta.iter_mut().zip(&b.theta) {
                ta.axpy(1.0, tb)?;
            }
            if let (Some(ba), Some(bb)) = (a.bias.as_mut(), b.bias.as_ref()) {
                ba.iter_mut().zip(bb).for_each(|(x, y)| *x += y);
            }
        }
        Ok(())
    }
}

/// Exact gradients of a scalar loss with respect to every parameter, given
/// `d loss / d logits`.
pub fn backward(
    branch: &BranchModel,
    input: &BranchInput,
    cache: &ForwardCache,
    grad_logits: &Matrix,
) -> Result<BranchGrads> {
    if cache.version != branch.version {
        return Err(Error::StaleCache {
            cached: cache.version,
            current: branch.version,
        });
    }
    check_input(branch, input)?;
    let expected = (input.n_nodes(), branch.spec.n_classes);
    if grad_logits.shape() != expected {
        return Err(Error::Shape {
            op: "backward",
            lhs: grad_logits.shape(),
            rhs: expected,
        });
    }
    let mut grads = BranchGrads::zeros_like(branch);

    // Output layer.
    let out_layer = &branch.layers[1];
    let mut d_hidden = Matrix::zeros(cache.hidden.rows(), cache.hidden.cols());
    for (k, (p_t, theta)) in input.ops_t.iter().zip(&out_layer.theta).enumerate() {
        let g = p_t.matmul(grad_logits)?;
        grads.layers[1].theta[k] = cache.hidden.matmul_tn(&g)?;
        d_hidden.axpy(1.0, &g.matmul_nt(theta)?)?;
    }
    if let Some(b) = grads.layers[1].bias.as_mut() {
        *b = grad_logits.col_sums();
    }

    // Dropout, then ReLU.
    if let Some(m) = &cache.mask {
        d_hidden = d_hidden.hadamard(m)?;
    }
    let mut d_pre = d_hidden;
    for (d, &z) in d_pre.data_mut().iter_mut().zip(cache.pre.data()) {
        if z <= 0.0 {
            *d = 0.0;
        }
    }

    // Input layer.
    for (k, pk_t) in input.px_t.iter().enumerate() {
        grads.layers[0].theta[k] = pk_t.matmul(&d_pre)?;
    }
    if let Some(b) = grads.layers[0].bias.as_mut() {
        *b = d_pre.col_sums();
    }
    Ok(grads)
}

/// Max-subtracted row softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Element-wise mean of two branch probability matrices.
pub fn late_fuse(p0: &Matrix, p1: &Matrix) -> Result<Matrix> {
    Ok(p0.add(p1)?.scale(0.5))
}

/// Element-wise mean of any number of branch probability matrices.
pub fn late_fuse_all(probs: &[Matrix]) -> Result<Matrix> {
    let first = probs
        .first()
        .ok_or_else(|| Error::InvalidArgument("late fusion of zero branches".into()))?;
    let mut sum = first.clone();
    for p in &probs[1..] {
        sum.axpy(1.0, p)?;
    }
    Ok(sum.scale(1.0 / probs.len() as f64))
}

fn check_labels(probs: &Matrix, labels: &[usize], mask: &[bool]) -> Result<usize> {
    if labels.len() != probs.rows() || mask.len() != probs.rows() {
        return Err(Error::Shape {
            op: "masked_cross_entropy",
            lhs: probs.shape(),
            rhs: (labels.len(), mask.len()),
        });
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::EmptyMask("cross-entropy"));
    }
    for (i, &m) in mask.iter().enumerate() {
        if m && labels[i] >= probs.cols() {
            return Err(Error::LabelOutOfRange {
                label: labels[i],
                classes: probs.cols(),
            });
        }
    }
    Ok(n)
}

/// Mean of `−ln p[label]` over masked rows. Entries of `labels` outside the
/// mask are ignored.
pub fn masked_cross_entropy(probs: &Matrix, labels: &[usize], mask: &[bool]) -> Result<f64> {
    let n = check_labels(probs, labels, mask)?;
    let total: f64 = (0..probs.rows())
        .filter(|&i| mask[i])
        .map(|i| {
            // f64::max would turn a NaN probability into the floor.
            let p = probs.get(i, labels[i]);
            if p.is_nan() {
                f64::NAN
            } else {
                -p.max(PROB_FLOOR).ln()
            }
        })
        .sum();
    Ok(total / n as f64)
}

/// `d CE / d logits = (softmax − onehot) / n` on masked rows, zero elsewhere.
pub fn cross_entropy_grad(probs: &Matrix, labels: &[usize], mask: &[bool]) -> Result<Matrix> {
    let n = check_labels(probs, labels, mask)? as f64;
    let mut g = Matrix::zeros(probs.rows(), probs.cols());
    for i in (0..probs.rows()).filter(|&i| mask[i]) {
        for c in 0..probs.cols() {
            let onehot = if c == labels[i] { 1.0 } else { 0.0 };
            g.set(i, c, (probs.get(i, c) - onehot) / n);
        }
    }
    Ok(g)
}

/// Gradients of `CE(late_fuse_all(probs))` with respect to each branch's
/// logits.
pub fn fused_cross_entropy_grads(probs: &[Matrix], labels: &[usize], mask: &[bool]) -> Result<Vec<Matrix>> {
    let fused = late_fuse_all(probs)?;
    let n = check_labels(&fused, labels, mask)? as f64;
    let b = probs.len() as f64;
    probs
        .iter()
        .map(|p| {
            let mut g = Matrix::zeros(p.rows(), p.cols());
            for i in (0..p.rows()).filter(|&i| mask[i]) {
                let y = labels[i];
                let pf = fused.get(i, y);
                // Floor is active: the log is flat there.
                if pf < PROB_FLOOR {
                    continue;
                }
                // dL/dp[y] = −1/(n·b·pf); softmax Jacobian gives
                // dL/dz_c = dL/dp[y] · p_y (δ_cy − p_c).
                let dp = -1.0 / (n * b * pf);
                let py = p.get(i, y);
                for c in 0..p.cols() {
                    let delta = if c == y { 1.0 } else { 0.0 };
                    g.set(i, c, dp * py * (delta - p.get(i, c)));
                }
            }
            Ok(g)
        })
        .collect()
}

pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Branch models whose softmax outputs are averaged into one decision. The
/// multi-modal model has two branches; single-modality baselines have one.
#[derive(Debug, Clone, PartialEq)]
pub struct LateFusionModel {
    pub branches: Vec<BranchModel>,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub branch_probs: Vec<Matrix>,
    pub fused: Matrix,
}

impl LateFusionModel {
    pub fn new(branches: Vec<BranchModel>) -> Result<Self> {
        let first = branches
            .first()
            .ok_or_else(|| Error::InvalidArgument("model needs at least one branch".into()))?;
        if branches.iter().any(|b| b.spec.n_classes != first.spec.n_classes) {
            return Err(Error::InvalidArgument("branches disagree on class count".into()));
        }
        Ok(Self { branches })
    }

    /// Dropout-free prediction on every node.
    pub fn predict(&self, inputs: &[BranchInput]) -> Result<Prediction> {
        if inputs.len() != self.branches.len() {
            return Err(Error::InvalidArgument(format!(
                "{} inputs for {} branches",
                inputs.len(),
                self.branches.len()
            )));
        }
        let branch_probs = self
            .branches
            .iter()
            .zip(inputs)
            .map(|(b, x)| forward(b, x, DropoutMask::Off).map(|(z, _)| softmax_rows(&z)))
            .collect::<Result<Vec<_>>>()?;
        let fused = late_fuse_all(&branch_probs)?;
        Ok(Prediction { branch_probs, fused })
    }
}

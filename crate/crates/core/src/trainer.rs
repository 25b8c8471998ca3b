//! Full-batch transductive training.
//!
//! Every node of the graph takes part in each forward pass, but only
//! training-node labels enter the loss. Test labels never reach this module:
//! it only sees [`MaskedLabels`], which withholds them at construction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{
    argmax_rows, backward, cross_entropy_grad, forward_from_pre, fused_cross_entropy_grads, input_layer, late_fuse_all,
    masked_cross_entropy, softmax_rows, Arch, BranchGrads, BranchInput, DropoutMask, LateFusionModel,
};
use crate::optim::{Optimizer, OptimizerKind};
use crate::popgraph::{MaskedLabels, Masks};
use crate::rng::{stream, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub k_order: usize,
    pub hidden: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub bias: bool,
    /// Train on the cross-entropy of the fused prediction instead of the sum
    /// of per-branch cross-entropies.
    pub fused_loss: bool,
    /// Return the weights from the epoch with the best fused validation
    /// accuracy instead of the last epoch.
    pub keep_best_val: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_arch(Arch::Cheb)
    }
}

impl TrainConfig {
    /// Defaults: Adam, lr 1e-3, weight decay 5e-4, dropout 0.5, K = 3,
    /// 32 hidden units; 100 epochs for Chebyshev, 300 for GCN.
    pub fn for_arch(arch: Arch) -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 5e-4,
            dropout: 0.5,
            epochs: match arch {
                Arch::Cheb => 100,
                Arch::Gcn => 300,
            },
            k_order: 3,
            hidden: 32,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            bias: true,
            fused_loss: false,
            keep_best_val: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be ≥ 0", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be ≥ 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("weight decay must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sum of branch cross-entropies on the training nodes (dropout on,
    /// before the update).
    pub train_loss: f64,
    /// Same sum on validation nodes after the update, dropout off.
    pub val_loss: f64,
    pub branch_val_acc: Vec<f64>,
    pub fused_val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub const HEADER: &'static str = "epoch\ttrain_loss\tval_loss\tbranch0_val_acc\tbranch1_val_acc\tfused_val_acc";

    /// Tab-separated, one line per epoch after a header line. Values use the
    /// shortest round-trip decimal form; absent values are `nan`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.records {
            let b = |i: usize| r.branch_val_acc.get(i).copied().unwrap_or(f64::NAN);
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.epoch,
                fmt_f64(r.train_loss),
                fmt_f64(r.val_loss),
                fmt_f64(b(0)),
                fmt_f64(b(1)),
                fmt_f64(r.fused_val_acc)
            );
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |msg: String| Error::Parse {
                file: "<trainlog>".into(),
                line: lineno as u64 + 1,
                msg,
            };
            if fields.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", fields.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            let branch_val_acc = [num(fields[3])?, num(fields[4])?]
                .into_iter()
                .filter(|v| !v.is_nan())
                .collect();
            records.push(EpochRecord {
                epoch: fields[0].parse().map_err(|e| bad(format!("epoch: {e}")))?,
                train_loss: num(fields[1])?,
                val_loss: num(fields[2])?,
                branch_val_acc,
                fused_val_acc: num(fields[5])?,
            });
        }
        Ok(Self { records })
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

pub(crate) fn masked_accuracy(pred: &[usize], labels: &[usize], mask: &[bool]) -> f64 {
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return f64::NAN;
    }
    let hits = (0..pred.len()).filter(|&i| mask[i] && pred[i] == labels[i]).count();
    hits as f64 / n as f64
}

/// Runs `cfg.epochs` full-batch updates and returns the trained model with
/// its per-epoch log. Deterministic given `cfg.seed`.
pub fn train(
    mut model: LateFusionModel,
    inputs: &[BranchInput],
    labels: &MaskedLabels,
    masks: &Masks,
    cfg: &TrainConfig,
) -> Result<(LateFusionModel, TrainLog)> {
    cfg.validate()?;
    if inputs.len() != model.branches.len() {
        return Err(Error::InvalidArgument(format!(
            "{} inputs for {} branches",
            inputs.len(),
            model.branches.len()
        )));
    }
    let train_labels = labels.dense_for(&masks.train)?;
    let val_labels = labels.dense_for(&masks.val)?;
    let has_val = masks.val.iter().any(|&m| m);

    let mut optimizers: Vec<Optimizer> = model
        .branches
        .iter()
        .map(|_| Optimizer::new(cfg.optimizer, cfg.lr, cfg.weight_decay))
        .collect();
    let mut dropout_rngs: Vec<_> = (0..model.branches.len())
        .map(|b| stream(cfg.seed, Stage::Dropout, b as u64))
        .collect();

    let mut log = TrainLog::default();
    let mut best: Option<(f64, LateFusionModel)> = None;
    // First-layer pre-activations at the current weights, shared by the
    // evaluation pass after an update and the training pass that follows.
    let pre_all = |model: &LateFusionModel| -> Result<Vec<Matrix>> {
        model
            .branches
            .iter()
            .zip(inputs)
            .map(|(b, x)| input_layer(b, x))
            .collect()
    };
    let mut pre = pre_all(&model)?;

    for epoch in 1..=cfg.epochs {
        let mut caches = Vec::with_capacity(model.branches.len());
        let mut probs = Vec::with_capacity(model.branches.len());
        for (((branch, input), rng), pre) in model.branches.iter().zip(inputs).zip(dropout_rngs.iter_mut()).zip(pre) {
            let (logits, cache) = forward_from_pre(branch, input, pre, DropoutMask::Random(rng))?;
            probs.push(softmax_rows(&logits));
            caches.push(cache);
        }
        let mut train_loss = 0.0;
        for p in &probs {
            train_loss += masked_cross_entropy(p, &train_labels, &masks.train)?;
        }
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let grad_logits = if cfg.fused_loss {
            fused_cross_entropy_grads(&probs, &train_labels, &masks.train)?
        } else {
            probs
                .iter()
                .map(|p| cross_entropy_grad(p, &train_labels, &masks.train))
                .collect::<Result<Vec<_>>>()?
        };
        let grads: Vec<BranchGrads> = model
            .branches
            .iter()
            .zip(inputs)
            .zip(caches.iter().zip(&grad_logits))
            .map(|((branch, input), (cache, g))| backward(branch, input, cache, g))
            .collect::<Result<_>>()?;
        for ((branch, opt), g) in model.branches.iter_mut().zip(optimizers.iter_mut()).zip(&grads) {
            opt.step(branch.params_mut(), g.tensors())?;
        }

        pre = pre_all(&model)?;
        let eval_probs = model
            .branches
            .iter()
            .zip(inputs)
            .zip(&pre)
            .map(|((b, x), p)| forward_from_pre(b, x, p.clone(), DropoutMask::Off).map(|(z, _)| softmax_rows(&z)))
            .collect::<Result<Vec<_>>>()?;
        let record = evaluate_epoch(&eval_probs, &val_labels, &masks.val, has_val, epoch, train_loss)?;
        if cfg.keep_best_val {
            let score = if record.fused_val_acc.is_nan() {
                -1.0
            } else {
                record.fused_val_acc
            };
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, model.clone()));
            }
        }
        log.records.push(record);
    }
    let model = match best {
        Some((_, m)) => m,
        None => model,
    };
    Ok((model, log))
}

fn evaluate_epoch(
    branch_probs: &[Matrix],
    val_labels: &[usize],
    val_mask: &[bool],
    has_val: bool,
    epoch: usize,
    train_loss: f64,
) -> Result<EpochRecord> {
    if !has_val {
        return Ok(EpochRecord {
            epoch,
            train_loss,
            val_loss: f64::NAN,
            branch_val_acc: vec![f64::NAN; branch_probs.len()],
            fused_val_acc: f64::NAN,
        });
    }
    let mut val_loss = 0.0;
    let mut branch_val_acc = Vec::with_capacity(branch_probs.len());
    for p in branch_probs {
        val_loss += masked_cross_entropy(p, val_labels, val_mask)?;
        branch_val_acc.push(masked_accuracy(&argmax_rows(p), val_labels, val_mask));
    }
    let fused = late_fuse_all(branch_probs)?;
    Ok(EpochRecord {
        epoch,
        train_loss,
        val_loss,
        branch_val_acc,
        fused_val_acc: masked_accuracy(&argmax_rows(&fused), val_labels, val_mask),
    })
}

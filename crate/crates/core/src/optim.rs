//! First-order optimizers. Weight decay is an additive L2 term on the
//! gradient (`g + wd·p`) for tensors flagged as weights.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(format!("unknown optimizer {other:?}")),
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moment estimates for one tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One Adam update of `params` in place. `t` is the 1-based step count.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamMoments, t: u64, lr: f64, weight_decay: f64) {
    if state.m.len() != params.len() {
        state.m = vec![0.0; params.len()];
        state.v = vec![0.0; params.len()];
    }
    let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i] + weight_decay * params[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// `p ← p − lr·(g + wd·p)`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64) {
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= lr * (g + weight_decay * *p);
    }
}

/// Optimizer state over a fixed, ordered list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    t: u64,
    moments: Vec<AdamMoments>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        Self {
            kind,
            lr,
            weight_decay,
            t: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Updates each `(tensor, decays)` pair with the matching gradient.
    pub fn step(&mut self, params: Vec<(&mut [f64], bool)>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = params.iter().zip(&grads).position(|((p, _), g)| p.len() != g.len()) {
            return Err(Error::Shape {
                op: "optimizer step",
                lhs: (params[i].0.len(), 1),
                rhs: (grads[i].len(), 1),
            });
        }
        self.t += 1;
        if self.moments.len() != params.len() {
            self.moments = vec![AdamMoments::default(); params.len()];
        }
        for (i, ((p, decays), g)) in params.into_iter().zip(grads).enumerate() {
            let wd = if decays { self.weight_decay } else { 0.0 };
            match self.kind {
                OptimizerKind::Adam => adam_step(p, g, &mut self.moments[i], self.t, self.lr, wd),
                OptimizerKind::Sgd => sgd_step(p, g, self.lr, wd),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_zero_decay_is_a_no_op() {
        let mut p = vec![0.5, -1.25, 3.0];
        let before = p.clone();
        let mut s = AdamMoments::default();
        adam_step(&mut p, &[0.0; 3], &mut s, 1, 1e-3, 0.0);
        assert_eq!(p, before);
        sgd_step(&mut p, &[0.0; 3], 1e-3, 0.0);
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_hand_value() {
        // m = 0.1, v = 0.001; bias-corrected both equal 1, so the step is
        // lr · 1 / (1 + ε).
        let mut p = vec![2.0];
        let mut s = AdamMoments::default();
        adam_step(&mut p, &[1.0], &mut s, 1, 0.01, 0.0);
        let expected = 2.0 - 0.01 * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((s.m[0] - 0.1).abs() < 1e-16);
        assert!((s.v[0] - 0.001).abs() < 1e-16);
    }

    #[test]
    fn sgd_hand_value() {
        let mut p = vec![2.0, -1.0];
        sgd_step(&mut p, &[0.5, 0.25], 0.1, 0.01);
        assert!((p[0] - (2.0 - 0.1 * (0.5 + 0.02))).abs() < 1e-15);
        assert!((p[1] - (-1.0 - 0.1 * (0.25 - 0.01))).abs() < 1e-15);
    }

    #[test]
    fn decay_skips_bias_tensors() {
        let mut w = vec![1.0];
        let mut b = vec![1.0];
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, 0.5);
        opt.step(vec![(&mut w, true), (&mut b, false)], vec![&[0.0], &[0.0]])
            .unwrap();
        assert!((w[0] - 0.95).abs() < 1e-15);
        assert_eq!(b[0], 1.0);
    }
}

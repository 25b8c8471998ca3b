//! Multi-modal adjacency fusion.
//!
//! Fusion works on raw phenotype-weighted adjacencies; normalization runs
//! afterwards on whatever each branch ends up using.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::popgraph::{build_adjacency, PhenoConfig, SigmaRule};
use crate::subject::SubjectRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FusionMode {
    /// Each branch keeps its own modality adjacency.
    #[serde(rename = "dual")]
    Dual,
    /// Both branches share `A_s ⊙ A_f`.
    #[serde(rename = "integration")]
    Integration,
    /// Both branches share the adjacency built on concatenated features.
    #[serde(rename = "fusion")]
    FeatureFusion,
    /// Both branches share `A_s ⊙ A_f ⊙ A_fm`.
    #[serde(rename = "ifusion")]
    IntegratedFusion,
}

impl FusionMode {
    pub const ALL: [FusionMode; 4] = [
        FusionMode::Dual,
        FusionMode::Integration,
        FusionMode::FeatureFusion,
        FusionMode::IntegratedFusion,
    ];

    /// Method name in the usual table naming, e.g. `IFDCGCN` for integrated
    /// fusion with Chebyshev branches.
    pub fn method_name(self, chebyshev: bool) -> String {
        let prefix = match self {
            FusionMode::Dual => "",
            FusionMode::Integration => "I",
            FusionMode::FeatureFusion => "F",
            FusionMode::IntegratedFusion => "IF",
        };
        let core = if chebyshev { "DCGCN" } else { "DGCN" };
        format!("{prefix}{core}")
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Dual => "dual",
            FusionMode::Integration => "integration",
            FusionMode::FeatureFusion => "fusion",
            FusionMode::IntegratedFusion => "ifusion",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dual" => Ok(FusionMode::Dual),
            "integration" => Ok(FusionMode::Integration),
            "fusion" | "feature_fusion" => Ok(FusionMode::FeatureFusion),
            "ifusion" | "integrated_fusion" => Ok(FusionMode::IntegratedFusion),
            other => Err(format!("unknown fusion mode {other:?}")),
        }
    }
}

/// Adjacency and node features for each of the two branches. Branch 0 is
/// sMRI, branch 1 is PET.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchGraphs {
    pub branch0_adj: Matrix,
    pub branch1_adj: Matrix,
    pub x0: Matrix,
    pub x1: Matrix,
}

/// `A_im = A_s ⊙ A_f`.
pub fn integrate_adjacency(a_s: &Matrix, a_f: &Matrix) -> Result<Matrix> {
    a_s.hadamard(a_f)
}

/// Adjacency over per-subject concatenated features `[x0 | x1]`, with σ
/// resolved on the concatenated space.
pub fn fused_feature_adjacency(
    x0: &Matrix,
    x1: &Matrix,
    subjects: &[SubjectRecord],
    cfg: &PhenoConfig,
    sigma: SigmaRule,
) -> Result<Matrix> {
    let concat = x0.hconcat(x1)?;
    build_adjacency(&concat, subjects, cfg, sigma)
}

/// `A_if = A_im ⊙ A_fm`.
pub fn integrated_fusion_adjacency(a_im: &Matrix, a_fm: &Matrix) -> Result<Matrix> {
    a_im.hadamard(a_fm)
}

/// Inputs needed to assemble any fusion mode.
pub struct FusionInputs<'a> {
    pub a_s: &'a Matrix,
    pub a_f: &'a Matrix,
    pub x0: &'a Matrix,
    pub x1: &'a Matrix,
    pub subjects: &'a [SubjectRecord],
    pub pheno: &'a PhenoConfig,
    pub sigma: SigmaRule,
}

pub fn assemble_branch_graphs(inputs: &FusionInputs<'_>, mode: FusionMode) -> Result<BranchGraphs> {
    let n = inputs.x0.rows();
    for m in [inputs.a_s, inputs.a_f] {
        if m.shape() != (n, n) {
            return Err(Error::Shape {
                op: "assemble_branch_graphs",
                lhs: m.shape(),
                rhs: (n, n),
            });
        }
    }
    if inputs.x1.rows() != n {
        return Err(Error::Shape {
            op: "assemble_branch_graphs",
            lhs: inputs.x0.shape(),
            rhs: inputs.x1.shape(),
        });
    }
    let feature_fused = || fused_feature_adjacency(inputs.x0, inputs.x1, inputs.subjects, inputs.pheno, inputs.sigma);
    let (b0, b1) = match mode {
        FusionMode::Dual => (inputs.a_s.clone(), inputs.a_f.clone()),
        FusionMode::Integration => {
            let a = integrate_adjacency(inputs.a_s, inputs.a_f)?;
            (a.clone(), a)
        }
        FusionMode::FeatureFusion => {
            let a = feature_fused()?;
            (a.clone(), a)
        }
        FusionMode::IntegratedFusion => {
            let a_im = integrate_adjacency(inputs.a_s, inputs.a_f)?;
            let a = integrated_fusion_adjacency(&a_im, &feature_fused()?)?;
            (a.clone(), a)
        }
    };
    Ok(BranchGraphs {
        branch0_adj: b0,
        branch1_adj: b1,
        x0: inputs.x0.clone(),
        x1: inputs.x1.clone(),
    })
}

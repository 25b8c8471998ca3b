//! Individual brain networks built from a single ROI vector.
//!
//! A subject only contributes one scalar per ROI, so its network is derived by
//! contrasting it with a reference group of normal controls: the pairwise
//! effect-size differences `E` are squashed into weights `W = 1 − tanh(E)`,
//! and the subject's network is `B = W ⊙ M_NC`, where `M_NC` is the ROI
//! correlation matrix of the reference group. The upper triangle of `B`
//! (diagonal included) becomes the subject's node feature vector.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{pearson_correlation, Matrix};
use crate::subject::{RoiFeatureTable, SubjectRecord};

/// Floor on the pooled standard deviation `s_p(i, j)`.
pub const DEFAULT_EPS: f64 = 1e-8;

/// Arguments of `tanh` beyond this are exactly 1.0 in `f64`.
const TANH_SATURATION: f64 = 20.0;

/// Normal-control group statistics for one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct NcReference {
    pub mean: Vec<f64>,
    /// Sample standard deviation (n − 1 denominator).
    pub std: Vec<f64>,
    /// Signed Pearson correlation between ROI columns over the group.
    pub corr: Matrix,
    pub source_ids: Vec<String>,
}

impl NcReference {
    pub fn n_rois(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrainNetwork {
    pub subject_id: String,
    pub b: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub subject_id: String,
    pub values: Vec<f64>,
}

/// Builds the reference from every train-split NC subject present in
/// `table`. Other subjects are skipped.
pub fn build_nc_reference(table: &RoiFeatureTable, subjects: &[SubjectRecord]) -> Result<NcReference> {
    let ids: Vec<&str> = subjects
        .iter()
        .filter(|s| s.is_reference_eligible())
        .map(|s| s.id.as_str())
        .collect();
    reference_from_ids(table, &ids)
}

/// Builds the reference from an explicit list of subject ids. Every id must
/// belong to a train-split NC subject; anything else is a leak and is
/// rejected.
pub fn build_nc_reference_from(
    table: &RoiFeatureTable,
    subjects: &[SubjectRecord],
    ids: &[String],
) -> Result<NcReference> {
    for id in ids {
        let subject = subjects
            .iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| Error::Misaligned(format!("unknown subject {id}")))?;
        if !subject.is_reference_eligible() {
            return Err(Error::ReferenceLeak { id: id.clone() });
        }
    }
    let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
    reference_from_ids(table, &ids)
}

fn reference_from_ids(table: &RoiFeatureTable, ids: &[&str]) -> Result<NcReference> {
    let p = table.n_rois();
    let mut rows = Vec::with_capacity(ids.len());
    for &id in ids {
        let r = table
            .row_of(id)
            .ok_or_else(|| Error::Misaligned(format!("no feature row for reference subject {id}")))?;
        let row = table.values.row(r);
        if let Some(roi) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                subject: id.to_string(),
                roi,
            });
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientReference { found: rows.len() });
    }
    let n = rows.len() as f64;
    let columns: Vec<Vec<f64>> = (0..p).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
    let mean: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let std: Vec<f64> = columns
        .iter()
        .zip(&mean)
        .map(|(c, m)| (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt())
        .collect();
    let mut corr = Matrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let r = pearson_correlation(&columns[i], &columns[j])?;
            corr.set(i, j, r);
            corr.set(j, i, r);
        }
    }
    Ok(NcReference {
        mean,
        std,
        corr,
        source_ids: ids.iter().map(|s| s.to_string()).collect(),
    })
}

fn check_len(f: &[f64], reference: &NcReference) -> Result<()> {
    if f.len() != reference.n_rois() {
        return Err(Error::Shape {
            op: "brain network",
            lhs: (f.len(), 1),
            rhs: (reference.n_rois(), 1),
        });
    }
    Ok(())
}

/// `E(i, j) = |(f_i − μ_i) − (f_j − μ_j)| / max(s_p(i, j), eps)` with
/// `s_p(i, j) = sqrt((s_i² + s_j²) / 2)`.
pub fn effect_size_matrix(f: &[f64], reference: &NcReference, eps: f64) -> Result<Matrix> {
    check_len(f, reference)?;
    let p = f.len();
    let dev: Vec<f64> = f.iter().zip(&reference.mean).map(|(x, m)| x - m).collect();
    let mut e = Matrix::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let (si, sj) = (reference.std[i], reference.std[j]);
            let sp = ((si * si + sj * sj) / 2.0).sqrt().max(eps);
            let v = (dev[i] - dev[j]).abs() / sp;
            e.set(i, j, v);
            e.set(j, i, v);
        }
    }
    Ok(e)
}

/// Fisher-transform correlation `R = (e^{2E} − 1) / (e^{2E} + 1)`, i.e.
/// `tanh(E)`, saturating to 1 for large `E`.
pub fn fisher_r(e: f64) -> f64 {
    if e >= TANH_SATURATION {
        return 1.0;
    }
    let t = (2.0 * e).exp_m1();
    t / (t + 2.0)
}

/// `W = 1 − R`, evaluated as `2 / (e^{2E} + 1)` so large `E` decays smoothly
/// to 0 instead of cancelling.
pub fn fisher_weight(e: f64) -> f64 {
    2.0 / ((2.0 * e).exp() + 1.0)
}

pub fn fisher_weighting(e: &Matrix) -> Matrix {
    e.map(fisher_weight)
}

pub fn build_brain_network(subject_id: &str, f: &[f64], reference: &NcReference, eps: f64) -> Result<BrainNetwork> {
    let e = effect_size_matrix(f, reference, eps)?;
    let w = fisher_weighting(&e);
    Ok(BrainNetwork {
        subject_id: subject_id.to_string(),
        b: w.hadamard(&reference.corr)?,
    })
}

pub fn upper_len(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Row-major walk over entries `(i, j)` with `j ≥ i`.
pub fn flatten_upper(bn: &BrainNetwork) -> NodeFeatures {
    let p = bn.b.rows();
    let mut values = Vec::with_capacity(upper_len(p));
    for i in 0..p {
        values.extend_from_slice(&bn.b.row(i)[i..]);
    }
    NodeFeatures {
        subject_id: bn.subject_id.clone(),
        values,
    }
}

/// Inverse of [`flatten_upper`] for symmetric matrices.
pub fn unflatten_upper(values: &[f64], p: usize) -> Result<Matrix> {
    if values.len() != upper_len(p) {
        return Err(Error::Shape {
            op: "unflatten_upper",
            lhs: (values.len(), 1),
            rhs: (upper_len(p), 1),
        });
    }
    let mut m = Matrix::zeros(p, p);
    let mut it = values.iter();
    for i in 0..p {
        for j in i..p {
            let v = *it.next().expect("length checked");
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    Ok(m)
}

/// Node feature matrix (one flattened brain network per row) for every
/// subject in `table`, in table order.
pub fn brain_network_features(table: &RoiFeatureTable, reference: &NcReference, eps: f64) -> Result<Matrix> {
    let p = table.n_rois();
    let mut data = Vec::with_capacity(table.len() * upper_len(p));
    for (r, id) in table.ids.iter().enumerate() {
        let bn = build_brain_network(id, table.values.row(r), reference, eps)?;
        data.extend(flatten_upper(&bn).values);
    }
    Matrix::new(table.len(), upper_len(p), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmriChannel {
    Gm,
    Wm,
    #[serde(rename = "gmwm")]
    GmPlusWm,
}

impl FromStr for SmriChannel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gm" => Ok(SmriChannel::Gm),
            "wm" => Ok(SmriChannel::Wm),
            "gmwm" | "gm+wm" | "gm_plus_wm" => Ok(SmriChannel::GmPlusWm),
            other => Err(format!("unknown sMRI channel {other:?}")),
        }
    }
}

/// Selects an sMRI tissue channel; `GmPlusWm` is the element-wise sum of the
/// two volume tables.
pub fn build_smri_channel(gm: &RoiFeatureTable, wm: &RoiFeatureTable, channel: SmriChannel) -> Result<RoiFeatureTable> {
    if gm.ids != wm.ids {
        let at = gm
            .ids
            .iter()
            .zip(&wm.ids)
            .position(|(a, b)| a != b)
            .unwrap_or(gm.len().min(wm.len()));
        return Err(Error::Misaligned(format!(
            "GM and WM tables disagree on subject order at row {at}"
        )));
    }
    if gm.n_rois() != wm.n_rois() {
        return Err(Error::Shape {
            op: "build_smri_channel",
            lhs: gm.values.shape(),
            rhs: wm.values.shape(),
        });
    }
    Ok(match channel {
        SmriChannel::Gm => gm.clone(),
        SmriChannel::Wm => wm.clone(),
        SmriChannel::GmPlusWm => RoiFeatureTable {
            ids: gm.ids.clone(),
            values: gm.values.add(&wm.values)?,
        },
    })
}

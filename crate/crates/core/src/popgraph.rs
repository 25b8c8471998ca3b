//! Population graphs: subjects are nodes, edges combine imaging similarity
//! with phenotypic agreement.
//!
//! For subjects `v ≠ u` the edge weight is
//!
//! ```text
//! A(v, u) = exp(−ρ(F_v, F_u)² / (2σ²)) · (r_G + r_P + r_M [+ r_A])
//! ```
//!
//! where `ρ = 1 − corr` is the correlation distance between node feature
//! vectors and each `r_*` is a 0/1 agreement indicator on one phenotype.
//! Self-edges are zero; normalization adds them back where needed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, power_iteration_lambda_max, LambdaEstimate, Matrix, LAMBDA_FALLBACK};
use crate::subject::{Split, SubjectRecord};

/// Which phenotypic indicators multiply the similarity kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhenoConfig {
    pub use_gender: bool,
    pub use_apoe4: bool,
    pub use_mmse: bool,
    pub use_age: bool,
    pub mmse_tol: i32,
    pub age_tol: f64,
    /// Edges are pure similarity; every indicator sum is replaced by 1.
    pub similarity_only: bool,
}

impl Default for PhenoConfig {
    fn default() -> Self {
        Self::similarity()
    }
}

impl PhenoConfig {
    pub fn similarity() -> Self {
        Self {
            use_gender: false,
            use_apoe4: false,
            use_mmse: false,
            use_age: false,
            mmse_tol: 1,
            age_tol: 1.0,
            similarity_only: true,
        }
    }

    pub fn with(gender: bool, apoe4: bool, mmse: bool, age: bool) -> Self {
        let any = gender || apoe4 || mmse || age;
        Self {
            use_gender: gender,
            use_apoe4: apoe4,
            use_mmse: mmse,
            use_age: age,
            similarity_only: !any,
            ..Self::similarity()
        }
    }

    /// Row set of the phenotype ablation: similarity only, each single
    /// phenotype, gender+MMSE and gender+apoe4+MMSE.
    pub fn ablation_rows() -> Vec<(&'static str, PhenoConfig)> {
        vec![
            ("Similarity", Self::similarity()),
            ("Apoe4", Self::with(false, true, false, false)),
            ("Age", Self::with(false, false, false, true)),
            ("Gender", Self::with(true, false, false, false)),
            ("MMSE", Self::with(false, false, true, false)),
            ("G+M", Self::with(true, false, true, false)),
            ("G+A+M", Self::with(true, true, true, false)),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.similarity_only && (self.use_gender || self.use_apoe4 || self.use_mmse || self.use_age) {
            return Err(Error::InvalidArgument(
                "similarity_only excludes phenotype indicators".into(),
            ));
        }
        if self.mmse_tol < 0 || !(self.age_tol >= 0.0) {
            return Err(Error::InvalidArgument(
                "phenotype tolerances must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

impl FromStr for PhenoConfig {
    type Err = String;

    /// Parses `none` or a comma list drawn from `gender,apoe4,mmse,age`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("similarity") {
            return Ok(Self::similarity());
        }
        let (mut g, mut a, mut m, mut age) = (false, false, false, false);
        for part in s.split(',') {
            match part.trim().to_ascii_lowercase().as_str() {
                "gender" => g = true,
                "apoe4" => a = true,
                "mmse" => m = true,
                "age" => age = true,
                other => return Err(format!("unknown phenotype {other:?}")),
            }
        }
        Ok(Self::with(g, a, m, age))
    }
}

impl fmt::Display for PhenoConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.similarity_only {
            return f.write_str("none");
        }
        let parts: Vec<&str> = [
            (self.use_gender, "gender"),
            (self.use_apoe4, "apoe4"),
            (self.use_mmse, "mmse"),
            (self.use_age, "age"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, name)| *name)
        .collect();
        f.write_str(&parts.join(","))
    }
}

/// How the kernel width σ is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum SigmaRule {
    /// Mean correlation distance over all unordered subject pairs.
    #[default]
    MeanDistance,
    Fixed(f64),
}

/// `exp(−ρ² / (2σ²))` with `ρ = 1 − corr(fv, fu)`.
pub fn similarity_kernel(fv: &[f64], fu: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kernel width must be positive, got {sigma}"
        )));
    }
    let rho = 1.0 - crate::matrix::pearson_correlation(fv, fu)?;
    Ok(kernel_from_distance(rho, sigma))
}

#[inline]
fn kernel_from_distance(rho: f64, sigma: f64) -> f64 {
    (-(rho * rho) / (2.0 * sigma * sigma)).exp()
}

/// Sum of enabled agreement indicators between two subjects.
pub fn pheno_indicator(u: &SubjectRecord, v: &SubjectRecord, cfg: &PhenoConfig) -> f64 {
    if cfg.similarity_only {
        return 1.0;
    }
    let mut sum = 0.0;
    if cfg.use_gender && u.gender == v.gender {
        sum += 1.0;
    }
    if cfg.use_apoe4 && u.apoe4 == v.apoe4 {
        sum += 1.0;
    }
    if cfg.use_mmse && (u.mmse - v.mmse).abs() <= cfg.mmse_tol {
        sum += 1.0;
    }
    if cfg.use_age && (u.age - v.age).abs() <= cfg.age_tol {
        sum += 1.0;
    }
    sum
}

/// Pairwise correlation distances `1 − corr(x_v, x_u)` between rows, as a
/// symmetric matrix with zero diagonal. Zero-variance rows correlate 0.
pub fn correlation_distances(x: &Matrix) -> Matrix {
    let n = x.rows();
    let f = x.cols() as f64;
    let standardized: Vec<Option<Vec<f64>>> = (0..n)
        .map(|r| {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / f;
            let centered: Vec<f64> = row.iter().map(|v| v - mean).collect();
            let norm = dot(&centered, &centered).sqrt();
            (norm > 0.0).then(|| centered.into_iter().map(|v| v / norm).collect())
        })
        .collect();
    let mut d = Matrix::zeros(n, n);
    for v in 0..n {
        for u in (v + 1)..n {
            let corr = match (&standardized[v], &standardized[u]) {
                (Some(a), Some(b)) => dot(a, b).clamp(-1.0, 1.0),
                _ => 0.0,
            };
            let rho = 1.0 - corr;
            d.set(v, u, rho);
            d.set(u, v, rho);
        }
    }
    d
}

/// Resolves σ against a distance matrix. A degenerate cohort whose mean
/// distance is 0 falls back to σ = 1.
pub fn resolve_sigma(distances: &Matrix, rule: SigmaRule) -> Result<f64> {
    match rule {
        SigmaRule::Fixed(s) if s > 0.0 && s.is_finite() => Ok(s),
        SigmaRule::Fixed(s) => Err(Error::InvalidArgument(format!(
            "kernel width must be positive, got {s}"
        ))),
        SigmaRule::MeanDistance => {
            let n = distances.rows();
            let pairs = n * n.saturating_sub(1) / 2;
            if pairs == 0 {
                return Ok(1.0);
            }
            let mut sum = 0.0;
            for v in 0..n {
                for u in (v + 1)..n {
                    sum += distances.get(v, u);
                }
            }
            let mean = sum / pairs as f64;
            Ok(if mean > 1e-12 { mean } else { 1.0 })
        }
    }
}

/// Phenotype-weighted similarity adjacency. Each unordered pair is
/// evaluated once and mirrored.
pub fn build_adjacency(x: &Matrix, subjects: &[SubjectRecord], cfg: &PhenoConfig, sigma: SigmaRule) -> Result<Matrix> {
    if x.rows() != subjects.len() {
        return Err(Error::Shape {
            op: "build_adjacency",
            lhs: x.shape(),
            rhs: (subjects.len(), 0),
        });
    }
    cfg.validate()?;
    let distances = correlation_distances(x);
    let sigma = resolve_sigma(&distances, sigma)?;
    let n = x.rows();
    let mut a = Matrix::zeros(n, n);
    for v in 0..n {
        for u in (v + 1)..n {
            let pheno = pheno_indicator(&subjects[v], &subjects[u], cfg);
            let w = if pheno == 0.0 {
                0.0
            } else {
                kernel_from_distance(distances.get(v, u), sigma) * pheno
            };
            a.set(v, u, w);
            a.set(u, v, w);
        }
    }
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMode {
    /// `D̃^{−1/2} (A + I) D̃^{−1/2}` with `D̃` the degrees of `A + I`.
    RenormSelfLoops,
    /// `D^{−1/2} A D^{−1/2}`; an isolated node gets a zero row and a unit
    /// self-loop.
    SymNorm,
}

fn check_square(a: &Matrix, op: &'static str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Shape {
            op,
            lhs: a.shape(),
            rhs: (a.cols(), a.rows()),
        });
    }
    Ok(())
}

/// `D^{−1/2} A D^{−1/2}`, leaving rows and columns of zero-degree nodes zero.
fn sym_scale(a: &Matrix) -> (Matrix, Vec<bool>) {
    let degrees = a.row_sums();
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let n = a.rows();
    let out = Matrix::from_fn(n, n, |i, j| inv_sqrt[i] * a.get(i, j) * inv_sqrt[j]);
    (out, degrees.iter().map(|&d| d <= 0.0).collect())
}

pub fn normalize_adjacency(a: &Matrix, mode: NormMode) -> Result<Matrix> {
    check_square(a, "normalize_adjacency")?;
    Ok(match mode {
        NormMode::RenormSelfLoops => sym_scale(&a.add(&Matrix::identity(a.rows()))?).0,
        NormMode::SymNorm => {
            let (mut out, isolated) = sym_scale(a);
            for (i, iso) in isolated.into_iter().enumerate() {
                if iso {
                    out.set(i, i, 1.0);
                }
            }
            out
        }
    })
}

/// `L = I − D^{−1/2} A D^{−1/2}`. A zero-degree node keeps `L(i, i) = 1`.
pub fn normalized_laplacian(a: &Matrix) -> Result<Matrix> {
    check_square(a, "normalized_laplacian")?;
    let (scaled, _) = sym_scale(a);
    Matrix::identity(a.rows()).sub(&scaled)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaRule {
    Fixed(f64),
    PowerIteration { tol: f64, max_iter: usize },
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::PowerIteration {
            tol: 1e-10,
            max_iter: 5000,
        }
    }
}

pub fn estimate_lambda_max(l: &Matrix, rule: LambdaRule) -> Result<LambdaEstimate> {
    match rule {
        LambdaRule::Fixed(v) if v > 0.0 => Ok(LambdaEstimate {
            value: v,
            converged: true,
            iterations: 0,
        }),
        LambdaRule::Fixed(v) => Err(Error::InvalidArgument(format!("lambda_max must be positive, got {v}"))),
        LambdaRule::PowerIteration { tol, max_iter } => {
            let est = power_iteration_lambda_max(l, tol, max_iter)?;
            // The zero Laplacian (no nodes) has nothing to rescale.
            if est.value <= 0.0 {
                return Ok(LambdaEstimate {
                    value: LAMBDA_FALLBACK,
                    ..est
                });
            }
            Ok(est)
        }
    }
}

/// Rescaled Laplacian `L̃ = (2 / λmax) L − I`.
pub fn scaled_laplacian(a: &Matrix, rule: LambdaRule) -> Result<Matrix> {
    Ok(scaled_laplacian_with_estimate(a, rule)?.0)
}

pub fn scaled_laplacian_with_estimate(a: &Matrix, rule: LambdaRule) -> Result<(Matrix, LambdaEstimate)> {
    let l = normalized_laplacian(a)?;
    let est = estimate_lambda_max(&l, rule)?;
    let mut out = l.scale(2.0 / est.value);
    for i in 0..out.rows() {
        let v = out.get(i, i) - 1.0;
        out.set(i, i, v);
    }
    Ok((out, est))
}

/// Train/validation/test node masks; every node is in exactly one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    pub fn from_splits(splits: &[Split]) -> Self {
        Self {
            train: splits.iter().map(|&s| s == Split::Train).collect(),
            val: splits.iter().map(|&s| s == Split::Val).collect(),
            test: splits.iter().map(|&s| s == Split::Test).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    pub fn is_partition(&self) -> bool {
        self.train.len() == self.val.len()
            && self.val.len() == self.test.len()
            && (0..self.train.len()).all(|i| {
                [self.train[i], self.val[i], self.test[i]]
                    .iter()
                    .filter(|&&b| b)
                    .count()
                    == 1
            })
    }

    pub fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }
}

/// Labels as seen by training: test-node labels are withheld.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedLabels {
    labels: Vec<Option<usize>>,
    pub n_classes: usize,
}

impl MaskedLabels {
    /// Keeps labels of train and validation nodes only.
    pub fn new(full: &[usize], masks: &Masks, n_classes: usize) -> Result<Self> {
        if full.len() != masks.len() {
            return Err(Error::Shape {
                op: "MaskedLabels::new",
                lhs: (full.len(), 1),
                rhs: (masks.len(), 1),
            });
        }
        if let Some(&label) = full.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: n_classes,
            });
        }
        let labels = full
            .iter()
            .enumerate()
            .map(|(i, &l)| (!masks.test[i]).then_some(l))
            .collect();
        Ok(Self { labels, n_classes })
    }

    pub fn get(&self, node: usize) -> Option<usize> {
        self.labels[node]
    }

    /// Dense label vector for the nodes selected by `mask`; unselected
    /// entries are 0 and must not be read. Fails if the mask reaches a
    /// withheld label.
    pub fn dense_for(&self, mask: &[bool]) -> Result<Vec<usize>> {
        if mask.len() != self.labels.len() {
            return Err(Error::Shape {
                op: "MaskedLabels::dense_for",
                lhs: (mask.len(), 1),
                rhs: (self.labels.len(), 1),
            });
        }
        mask.iter()
            .zip(&self.labels)
            .enumerate()
            .map(|(i, (&m, l))| match (m, l) {
                (false, _) => Ok(0),
                (true, Some(l)) => Ok(*l),
                (true, None) => Err(Error::InvalidArgument(format!("label of node {i} is withheld"))),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One modality's graph, ready for a branch model.
#[derive(Debug, Clone)]
pub struct PopulationGraph {
    pub x: Matrix,
    pub a: Matrix,
    pub subject_ids: Vec<String>,
    pub masks: Masks,
    pub labels: MaskedLabels,
}

impl PopulationGraph {
    pub fn new(x: Matrix, a: Matrix, subject_ids: Vec<String>, masks: Masks, labels: MaskedLabels) -> Result<Self> {
        let n = x.rows();
        if a.shape() != (n, n) || subject_ids.len() != n || masks.len() != n || labels.len() != n {
            return Err(Error::Misaligned(format!(
                "population graph parts disagree on node count ({n} feature rows, adjacency {:?}, {} ids, {} masks)",
                a.shape(),
                subject_ids.len(),
                masks.len()
            )));
        }
        if !masks.is_partition() {
            return Err(Error::InvalidArgument("masks do not partition the nodes".into()));
        }
        if !a.is_symmetric() || a.data().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument(
                "adjacency must be symmetric and non-negative".into(),
            ));
        }
        Ok(Self {
            x,
            a,
            subject_ids,
            masks,
            labels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subject::{Diagnosis, Gender};

    fn subj(id: &str, gender: Gender, apoe4: u8, mmse: i32, age: f64) -> SubjectRecord {
        SubjectRecord {
            id: id.into(),
            label: Diagnosis::Nc,
            gender,
            age,
            apoe4,
            mmse,
            split: Some(Split::Train),
        }
    }

    #[test]
    fn kernel_identity_and_anticorrelation() {
        let f = [0.2, 1.0, -0.4, 0.9];
        assert_eq!(similarity_kernel(&f, &f, 0.7).unwrap(), 1.0);
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let s = similarity_kernel(&f, &neg, 1.0).unwrap();
        assert!((s - (-2f64).exp()).abs() < 1e-14);
        assert!(similarity_kernel(&f, &f, 0.0).is_err());
    }

    #[test]
    fn kernel_decreases_with_distance() {
        let mut prev = f64::INFINITY;
        for step in 0..=20 {
            let rho = step as f64 * 0.1;
            let s = kernel_from_distance(rho, 0.5);
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn pheno_indicator_cases() {
        let a = subj("a", Gender::M, 1, 27, 70.0);
        let b = subj("b", Gender::M, 1, 27, 80.0);
        let all3 = PhenoConfig::with(true, true, true, false);
        assert_eq!(pheno_indicator(&a, &b, &all3), 3.0);

        let ad = subj("ad", Gender::F, 0, 23, 70.0);
        let nc = subj("nc", Gender::F, 0, 29, 70.0);
        assert_eq!(
            pheno_indicator(&ad, &nc, &PhenoConfig::with(false, false, true, false)),
            0.0
        );

        assert_eq!(pheno_indicator(&ad, &b, &PhenoConfig::similarity()), 1.0);

        let age = PhenoConfig::with(false, false, false, true);
        assert_eq!(pheno_indicator(&a, &subj("c", Gender::F, 0, 10, 71.0), &age), 1.0);
        assert_eq!(pheno_indicator(&a, &subj("c", Gender::F, 0, 10, 71.5), &age), 0.0);
    }

    #[test]
    fn pheno_parse_round_trip() {
        let cfg: PhenoConfig = "gender, mmse".parse().unwrap();
        assert!(cfg.use_gender && cfg.use_mmse && !cfg.use_apoe4 && !cfg.similarity_only);
        assert_eq!(cfg.to_string(), "gender,mmse");
        assert_eq!("none".parse::<PhenoConfig>().unwrap(), PhenoConfig::similarity());
        assert!("height".parse::<PhenoConfig>().is_err());
    }

    #[test]
    fn similarity_only_identical_rows() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 4.0], [1.0, 2.0, 4.0]]).unwrap();
        let s = vec![subj("a", Gender::M, 0, 20, 60.0), subj("b", Gender::F, 2, 30, 90.0)];
        let a = build_adjacency(&x, &s, &PhenoConfig::similarity(), SigmaRule::MeanDistance).unwrap();
        assert_eq!(a, Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
    }

    #[test]
    fn zero_indicator_sum_gives_zero_edge() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 4.0], [1.0, 2.5, 3.0]]).unwrap();
        let s = vec![subj("a", Gender::M, 0, 20, 60.0), subj("b", Gender::F, 2, 30, 90.0)];
        let a = build_adjacency(
            &x,
            &s,
            &PhenoConfig::with(true, true, true, true),
            SigmaRule::Fixed(1.0),
        )
        .unwrap();
        assert_eq!(a, Matrix::zeros(2, 2));
    }

    #[test]
    fn four_node_loop_oracle() {
        let x = Matrix::from_rows(&[
            [0.1, 0.5, 0.9, 0.3, 0.2],
            [0.2, 0.4, 1.0, 0.1, 0.3],
            [0.9, 0.1, 0.2, 0.8, 0.5],
            [0.5, 0.5, 0.4, 0.6, 0.1],
        ])
        .unwrap();
        let s = vec![
            subj("a", Gender::M, 0, 28, 70.0),
            subj("b", Gender::F, 0, 29, 72.0),
            subj("c", Gender::M, 1, 24, 70.5),
            subj("d", Gender::F, 1, 27, 69.0),
        ];
        let cfg = PhenoConfig::with(true, true, true, false);
        let sigma = 0.8;
        let a = build_adjacency(&x, &s, &cfg, SigmaRule::Fixed(sigma)).unwrap();
        for v in 0..4 {
            for u in 0..4 {
                let expected = if v == u {
                    0.0
                } else {
                    let r = crate::matrix::pearson_correlation(x.row(v), x.row(u)).unwrap();
                    let kernel = (-(1.0 - r).powi(2) / (2.0 * sigma * sigma)).exp();
                    let rg = (s[v].gender == s[u].gender) as i32 as f64;
                    let rp = (s[v].apoe4 == s[u].apoe4) as i32 as f64;
                    let rm = ((s[v].mmse - s[u].mmse).abs() <= 1) as i32 as f64;
                    kernel * (rg + rp + rm)
                };
                assert!((a.get(v, u) - expected).abs() < 1e-12, "({v},{u})");
            }
        }
        assert!(a.is_symmetric());
    }

    #[test]
    fn mean_distance_sigma() {
        let d = Matrix::from_rows(&[[0.0, 0.2, 0.4], [0.2, 0.0, 0.6], [0.4, 0.6, 0.0]]).unwrap();
        assert!((resolve_sigma(&d, SigmaRule::MeanDistance).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(
            resolve_sigma(&Matrix::zeros(3, 3), SigmaRule::MeanDistance).unwrap(),
            1.0
        );
        assert!(resolve_sigma(&d, SigmaRule::Fixed(-1.0)).is_err());
    }

    #[test]
    fn renorm_of_empty_graph_is_identity() {
        assert_eq!(
            normalize_adjacency(&Matrix::zeros(3, 3), NormMode::RenormSelfLoops).unwrap(),
            Matrix::identity(3)
        );
        assert_eq!(
            normalize_adjacency(&Matrix::zeros(3, 3), NormMode::SymNorm).unwrap(),
            Matrix::identity(3)
        );
    }

    #[test]
    fn renorm_two_nodes() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let n = normalize_adjacency(&a, NormMode::RenormSelfLoops).unwrap();
        assert!(n.max_abs_diff(&Matrix::filled(2, 2, 0.5)) < 1e-15);
    }

    #[test]
    fn renorm_preserves_constants_on_regular_graph() {
        // 6-cycle: every node has degree 2.
        let a = Matrix::from_fn(
            6,
            6,
            |i, j| if (i + 1) % 6 == j || (j + 1) % 6 == i { 1.0 } else { 0.0 },
        );
        let n = normalize_adjacency(&a, NormMode::RenormSelfLoops).unwrap();
        let out = n.matvec(&[2.5; 6]).unwrap();
        for v in out {
            assert!((v - 2.5).abs() < 1e-14);
        }
    }

    #[test]
    fn sym_norm_isolated_node_gets_self_loop() {
        let a = Matrix::from_rows(&[[0.0, 2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let n = normalize_adjacency(&a, NormMode::SymNorm).unwrap();
        assert_eq!(n.get(2, 2), 1.0);
        assert_eq!(n.get(2, 0), 0.0);
        assert!((n.get(0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scaled_laplacian_of_empty_graph_with_fallback_is_zero() {
        let l = scaled_laplacian(&Matrix::zeros(4, 4), LambdaRule::Fixed(2.0)).unwrap();
        assert_eq!(l, Matrix::zeros(4, 4));
        assert_eq!(normalized_laplacian(&Matrix::zeros(4, 4)).unwrap(), Matrix::identity(4));
    }

    #[test]
    fn scaled_laplacian_two_node_complete_graph() {
        // L = [[1,-1],[-1,1]] has spectrum {0, 2}; L̃ = L − I = [[0,-1],[-1,0]]
        // whose spectrum is {−1, 1}.
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let (lt, est) = scaled_laplacian_with_estimate(&a, LambdaRule::default()).unwrap();
        assert!(est.converged);
        assert!((est.value - 2.0).abs() < 1e-9);
        let expected = Matrix::from_rows(&[[0.0, -1.0], [-1.0, 0.0]]).unwrap();
        assert!(lt.max_abs_diff(&expected) < 1e-9);
    }

    #[test]
    fn masked_labels_hide_test_nodes() {
        let masks = Masks::from_splits(&[Split::Train, Split::Test, Split::Val]);
        let l = MaskedLabels::new(&[1, 0, 1], &masks, 2).unwrap();
        assert_eq!(l.get(0), Some(1));
        assert_eq!(l.get(1), None);
        assert_eq!(l.get(2), Some(1));
        assert!(MaskedLabels::new(&[1, 2, 1], &masks, 2).is_err());
    }
}

#![allow(dead_code)]

use popgnn::matrix::Matrix;
use popgnn::model::{
    backward, cross_entropy_grad, forward, masked_cross_entropy, softmax_rows, Arch, BranchInput, BranchModel,
    BranchSpec, DropoutMask, PropagationOperator,
};
use popgnn::popgraph::LambdaRule;
use popgnn::rng::{stream, Stage};
use popgnn::subject::{Diagnosis, Gender, SubjectRecord};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream(seed, Stage::Synth, 99)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-1.0..1.0);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

/// Symmetric, nonnegative, zero diagonal, roughly `density` of pairs
/// connected.
pub fn random_adjacency(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < density {
                let w = rng.random_range(0.05..2.0);
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
    }
    a
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
/// sorted ascending.
pub fn jacobi_eigenvalues(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn spectral_radius(m: &Matrix) -> f64 {
    jacobi_eigenvalues(m).iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn subject(id: &str, label: Diagnosis, gender: Gender, age: f64, apoe4: u8, mmse: i32) -> SubjectRecord {
    SubjectRecord {
        id: id.into(),
        label,
        gender,
        age,
        apoe4,
        mmse,
        split: None,
    }
}

pub fn random_subjects(rng: &mut ChaCha8Rng, n: usize) -> Vec<SubjectRecord> {
    (0..n)
        .map(|i| {
            subject(
                &format!("s{i}"),
                if rng.random::<bool>() {
                    Diagnosis::Ad
                } else {
                    Diagnosis::Nc
                },
                if rng.random::<bool>() { Gender::F } else { Gender::M },
                rng.random_range(60.0..80.0_f64).round(),
                rng.random_range(0..3),
                rng.random_range(20..31),
            )
        })
        .collect()
}

pub struct GradCase {
    pub branch: BranchModel,
    pub input: BranchInput,
    pub labels: Vec<usize>,
    pub mask: Vec<bool>,
}

pub fn grad_case(arch: Arch, k: usize, hidden: usize, n: usize, in_dim: usize, bias: bool, seed: u64) -> GradCase {
    let mut r = rng(seed);
    let a = random_adjacency(&mut r, n, 0.3);
    let x = random_matrix(&mut r, n, in_dim);
    let prop = PropagationOperator::for_arch(arch, &a, k, LambdaRule::default()).unwrap();
    let input = BranchInput::new(prop, x).unwrap();
    let spec = BranchSpec {
        arch,
        k_order: k,
        hidden,
        n_classes: 2,
        dropout: 0.5,
        bias,
    };
    let mut branch = BranchModel::new(spec, in_dim, &mut stream(seed, Stage::Init, 0)).unwrap();
    // Nonzero biases so their gradients are exercised away from the origin.
    for (p, decays) in branch.params_mut() {
        if !decays {
            for v in p.iter_mut() {
                *v = r.random_range(-0.1..0.1);
            }
        }
    }
    let labels = (0..n).map(|_| r.random_range(0..2)).collect();
    let mask = (0..n).map(|i| i % 3 != 0).collect();
    GradCase {
        branch,
        input,
        labels,
        mask,
    }
}

fn loss(case: &GradCase, branch: &BranchModel, drop: Option<&Matrix>) -> f64 {
    let mask = drop.map_or(DropoutMask::Off, DropoutMask::Fixed);
    let (z, _) = forward(branch, &case.input, mask).unwrap();
    masked_cross_entropy(&softmax_rows(&z), &case.labels, &case.mask).unwrap()
}

/// Largest relative error `|a − n| / max(|a|, |n|, 1e-6)` between analytic
/// and central-difference gradients over every parameter.
pub fn max_grad_error(case: &GradCase, h: f64, drop: Option<&Matrix>) -> (f64, usize) {
    let mask = drop.map_or(DropoutMask::Off, DropoutMask::Fixed);
    let (z, cache) = forward(&case.branch, &case.input, mask).unwrap();
    let g = cross_entropy_grad(&softmax_rows(&z), &case.labels, &case.mask).unwrap();
    let grads = backward(&case.branch, &case.input, &cache, &g).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (t, tensor) in analytic.iter().enumerate() {
        for (e, &a) in tensor.iter().enumerate() {
            let mut plus = case.branch.clone();
            plus.params_mut()[t].0[e] += h;
            let mut minus = case.branch.clone();
            minus.params_mut()[t].0[e] -= h;
            let numeric = (loss(case, &plus, drop) - loss(case, &minus, drop)) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    (worst, checked)
}

//! Instance generators and independent dense oracles shared by the
//! integration tests. Oracles are written against nalgebra and plain loops
//! so they share no code with the library's sparse/Gram paths.

#![allow(dead_code)]

use blocksel_core::data::PlantedSpec;
use blocksel_core::{Allocation, AttributedNetwork, BlockModel};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense symmetric matrix with entries uniform in [0, 1].
pub fn random_symmetric(rng: &mut impl Rng, n: usize) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.random();
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    a
}

pub fn random_matrix(rng: &mut impl Rng, n: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, m), || rng.random())
}

/// Random allocation with every block non-empty.
pub fn random_allocation(rng: &mut impl Rng, n: usize, k: usize) -> Allocation {
    let mut blocks: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    blocks.shuffle(rng);
    Allocation::new(blocks, k).unwrap()
}

/// Strictly positive vector, entries in [0.1, 1.1).
pub fn interior_vector(rng: &mut impl Rng, m: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(m, || 0.1 + rng.random::<f64>())
}

pub struct Instance {
    pub net: AttributedNetwork,
    pub model: BlockModel,
}

/// Random dense network with a block model fitted in closed form on a
/// random allocation.
pub fn random_instance(seed: u64, n: usize, m: usize, k: usize) -> Instance {
    let mut r = rng(seed);
    let a = random_symmetric(&mut r, n);
    let y = random_matrix(&mut r, n, m);
    let alloc = random_allocation(&mut r, n, k);
    let net = AttributedNetwork::from_dense(&a, &y, None).unwrap();
    let model = BlockModel::fit(net.adjacency(), alloc).unwrap();
    Instance { net, model }
}

pub fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn indicator(alloc: &Allocation) -> DMatrix<f64> {
    DMatrix::from_fn(alloc.node_count(), alloc.block_count(), |i, c| {
        if alloc.block_of(i) == c {
            1.0
        } else {
            0.0
        }
    })
}

/// `Y diag(r) Yᵀ` by three nested loops.
pub fn naive_induced(y: &Array2<f64>, r: &Array1<f64>) -> Array2<f64> {
    let (n, m) = y.dim();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for l in 0..m {
                s += y[[i, l]] * r[l] * y[[j, l]];
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// Least-squares `argmin_X ‖A − F X Fᵀ‖_F` from the vectorized system
/// `vec(A) ≈ (F ⊗ F) vec(X)`, solved through the k²×k² normal equations.
pub fn kronecker_least_squares(a: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    let k = f.ncols();
    let design = f.kronecker(f);
    let rhs = DVector::from_column_slice(a.as_slice());
    let normal = design.transpose() * &design;
    let x = normal
        .cholesky()
        .expect("normal equations are positive definite for non-empty blocks")
        .solve(&(design.transpose() * rhs));
    DMatrix::from_column_slice(k, k, x.as_slice())
}

/// `D⁻¹ Fᵀ A F D⁻¹` with D = FᵀF, dense.
pub fn dense_closed_form(a: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    let d_inv = (f.transpose() * f).try_inverse().unwrap();
    &d_inv * f.transpose() * a * f * &d_inv
}

/// `‖A − F M Fᵀ‖_F / ‖A‖_F`, dense.
pub fn dense_rre(a: &DMatrix<f64>, f: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    (a - f * m * f.transpose()).norm() / a.norm()
}

/// Relative reconstruction loss of the induced graph, from its definition.
pub fn naive_loss_b(y: &DMatrix<f64>, f: &DMatrix<f64>, r: &[f64]) -> f64 {
    let induced = y * DMatrix::from_diagonal(&DVector::from_column_slice(r)) * y.transpose();
    let mhat = dense_closed_form(&induced, f);
    (&induced - f * mhat * f.transpose()).norm_squared() / induced.norm_squared()
}

/// The boxed L_b gradient exactly as printed, with Ŷ = F D⁻¹ Fᵀ Y.
pub fn boxed_grad_b(y: &DMatrix<f64>, f: &DMatrix<f64>, r: &[f64]) -> Vec<f64> {
    let rr = DMatrix::from_diagonal(&DVector::from_column_slice(r));
    let d_inv = (f.transpose() * f).try_inverse().unwrap();
    let yhat = f * d_inv * f.transpose() * y;
    let yty = y.transpose() * y;
    let yhty = yhat.transpose() * y;
    let yhtyh = yhat.transpose() * &yhat;
    let denom = (y * &rr * y.transpose()).norm_squared();
    let lb = naive_loss_b(y, f, r);
    let first = &yty * &rr * &yty + &yhtyh * &rr * &yhtyh - 2.0 * &yhty * &rr * yhty.transpose();
    let second = &yty * &rr * &yty;
    (0..r.len())
        .map(|l| 2.0 * first[(l, l)] / denom - 2.0 * lb * second[(l, l)] / denom)
        .collect()
}

/// Row-wise KL between row-normalized `(M̂(r)+δ)` and `(M+δ)`, dense.
pub fn naive_loss_m(y: &DMatrix<f64>, f: &DMatrix<f64>, image: &DMatrix<f64>, r: &[f64], delta: f64) -> f64 {
    let d_inv = (f.transpose() * f).try_inverse().unwrap();
    let dbar = d_inv * f.transpose() * y;
    let mhat = &dbar * DMatrix::from_diagonal(&DVector::from_column_slice(r)) * dbar.transpose();
    let k = image.nrows();
    let mut total = 0.0;
    for i in 0..k {
        let qs: f64 = (0..k).map(|j| mhat[(i, j)] + delta).sum();
        let ps: f64 = (0..k).map(|j| image[(i, j)] + delta).sum();
        for j in 0..k {
            let q = (mhat[(i, j)] + delta) / qs;
            let p = (image[(i, j)] + delta) / ps;
            total += q * (q / p).ln();
        }
    }
    total
}

pub fn central_difference(f: impl Fn(&Array1<f64>) -> f64, x: &Array1<f64>, h: f64) -> Array1<f64> {
    Array1::from_shape_fn(x.len(), |l| {
        let mut up = x.clone();
        let mut down = x.clone();
        up[l] += h;
        down[l] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

/// Largest per-coordinate relative error. Coordinates whose magnitude is
/// below `floor` are compared against `floor` so that values that are zero
/// up to rounding do not dominate.
pub fn max_relative_error(got: &Array1<f64>, want: &Array1<f64>, floor: f64) -> f64 {
    got.iter()
        .zip(want.iter())
        .map(|(g, w)| (g - w).abs() / w.abs().max(g.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().map_or(0, |&x| x + 1);
    let kb = b.iter().max().map_or(0, |&x| x + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let comb2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&c| comb2(c)).sum();
    let rows: f64 = table.iter().map(|r| comb2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| comb2(table.iter().map(|r| r[j]).sum())).sum();
    let total = comb2(a.len() as u64);
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Accuracy under the best one-to-one relabeling, by trying every
/// permutation of the predicted ids (small cluster counts only).
pub fn brute_force_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let size = kp.max(kt);
    let mut perm: Vec<usize> = (0..size).collect();
    let mut best = 0usize;
    permute(&mut perm, 0, &mut |p| {
        let hits = pred.iter().zip(truth).filter(|(&x, &y)| p[x] == y).count();
        best = best.max(hits);
    });
    best as f64 / pred.len() as f64
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut dyn FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// The planted instance shared by the end-to-end acceptance criteria.
pub fn planted_spec() -> PlantedSpec {
    PlantedSpec {
        n: 300,
        k: 3,
        d_informative: 20,
        d_noise: 80,
        intra_p: 0.3,
        inter_p: 0.02,
        signal_strength: 2.0,
        noise_scale: 2.0,
        seed: 0,
    }
}

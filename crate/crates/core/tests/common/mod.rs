//! Brute-force reference implementations used by the integration tests.
//! They share no code with the library beyond plain data types.
#![allow(dead_code)]

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Smallest eigenpair and the next eigenvalue of `MᵀM` for the given rows.
fn null_direction(rows: &[&Vec<f64>], n: usize) -> Option<Vec<f64>> {
    let m = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let eig = SymmetricEigen::new(m.transpose() * &m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = eig.eigenvalues.max().max(1.0);
    if eig.eigenvalues[order[0]] > 1e-12 * scale || (n > 1 && eig.eigenvalues[order[1]] < 1e-9 * scale) {
        return None;
    }
    Some(eig.eigenvectors.column(order[0]).iter().copied().collect())
}

/// Extreme rays of `{x : Ax ≥ 0}` by trying every `(n−1)`-subset of rows.
/// Returns unit vectors.
pub fn brute_force_rays(a: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for subset in (0..a.len()).combinations(n - 1) {
        let rows: Vec<&Vec<f64>> = subset.iter().map(|&i| &a[i]).collect();
        let Some(v) = (if n == 1 { Some(vec![1.0]) } else { null_direction(&rows, n) }) else { continue };
        for sign in [1.0, -1.0] {
            let cand: Vec<f64> = v.iter().map(|x| sign * x).collect();
            let ok = a.iter().all(|row| {
                let s: f64 = row.iter().zip(&cand).map(|(p, q)| p * q).sum();
                let rn = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                s >= -1e-9 * rn
            });
            if ok && !out.iter().any(|r| dist(r, &cand) < 1e-7) {
                out.push(unit(&cand));
            }
        }
    }
    out
}

/// Largest distance from a ray of `a` to its nearest ray in `b`, in both
/// directions; infinite if the counts differ.
pub fn ray_set_deviation(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let one = |x: &[Vec<f64>], y: &[Vec<f64>]| {
        x.iter()
            .map(|r| y.iter().map(|s| dist(&unit(r), &unit(s))).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}

/// A random pointed full-dimensional cone: generators near `e₁`, facets
/// from the dual enumeration. Returns `(A rows, extreme rays)` or `None`
/// when the size limits are exceeded.
pub fn random_cone<R: Rng>(rng: &mut R, n: usize, generators: usize, max_rows: usize) -> Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let gens: Vec<Vec<f64>> = (0..generators)
        .map(|_| {
            let mut v = vec![1.0];
            v.extend((1..n).map(|_| rng.random_range(-1.0..1.0)));
            v
        })
        .collect();
    let facets = brute_force_rays(&gens, n);
    if facets.len() < n || facets.len() > max_rows {
        return None;
    }
    let rays = brute_force_rays(&facets, n);
    if rays.len() < n {
        return None;
    }
    Some((facets, rays))
}

/// Minimum of `‖y − Xβ‖²` over `β ≥ 0` by enumerating supports.
pub fn exhaustive_nnls(x: &DMatrix<f64>, y: &DVector<f64>) -> (f64, DVector<f64>) {
    let p = x.ncols();
    let mut best = (y.norm_squared(), DVector::zeros(p));
    for size in 1..=p.min(x.nrows()) {
        for s in (0..p).combinations(size) {
            let xs = x.select_columns(&s);
            let gram = xs.transpose() * &xs;
            let Some(chol) = gram.clone().cholesky() else { continue };
            if gram.clone().svd(false, false).singular_values.min() < 1e-10 * gram.norm() {
                continue;
            }
            let coef = chol.solve(&(xs.transpose() * y));
            if coef.iter().any(|c| *c < -1e-12) {
                continue;
            }
            let obj = (y - &xs * &coef).norm_squared();
            if obj < best.0 {
                let mut full = DVector::zeros(p);
                for (k, &j) in s.iter().enumerate() {
                    full[j] = coef[k].max(0.0);
                }
                best = (obj, full);
            }
        }
    }
    best
}

/// `min ‖y − Xβ‖² + Σ dᵢβᵢ²` over `β ≥ 0` by projected gradient.
pub fn projected_gradient_ridge(x: &DMatrix<f64>, y: &DVector<f64>, d: &[f64], iters: usize) -> DVector<f64> {
    let mut h = x.transpose() * x;
    for (i, di) in d.iter().enumerate() {
        h[(i, i)] += di;
    }
    let g = x.transpose() * y;
    let step = 1.0 / SymmetricEigen::new(h.clone()).eigenvalues.max();
    let mut b = DVector::zeros(x.ncols());
    for _ in 0..iters {
        let grad = &h * &b - &g;
        b = (&b - grad * step).map(|v| v.max(0.0));
    }
    b
}

/// Maximal cliques by checking every vertex subset.
pub fn brute_force_cliques(d: usize, has_edge: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let is_clique = |s: &[usize]| s.iter().tuple_combinations().all(|(&a, &b)| has_edge(a, b));
    let mut out = Vec::new();
    for mask in 1u32..(1 << d) {
        let s: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
        if !is_clique(&s) {
            continue;
        }
        let maximal = (0..d).filter(|i| mask & (1 << i) == 0).all(|v| !s.iter().all(|&u| has_edge(u, v)));
        if maximal {
            out.push(s);
        }
    }
    out.sort();
    out
}

/// Composite Simpson rule on `[a, b]` with `k` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, k: usize) -> f64 {
    let h = (b - a) / k as f64;
    let mut s = f(a) + f(b);
    for i in 1..k {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `E[η | y]` and `Cov[η | y]` from the joint covariance of `(η, y)` with
/// `y = f + Bη + e`, by explicit inversion.
pub fn gaussian_conditioning(
    sigma: &DMatrix<f64>,
    b: &DMatrix<f64>,
    sigma2: f64,
    y: &DVector<f64>,
    f: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let (k, n) = (sigma.nrows(), b.nrows());
    let mut joint = DMatrix::zeros(k + n, k + n);
    let cross = sigma * b.transpose();
    let yy = b * sigma * b.transpose() + DMatrix::identity(n, n) * sigma2;
    joint.view_mut((0, 0), (k, k)).copy_from(sigma);
    joint.view_mut((0, k), (k, n)).copy_from(&cross);
    joint.view_mut((k, 0), (n, k)).copy_from(&cross.transpose());
    joint.view_mut((k, k), (n, n)).copy_from(&yy);
    let s12 = joint.view((0, k), (k, n)).clone_owned();
    let s22inv = joint.view((k, k), (n, n)).clone_owned().try_inverse().unwrap();
    let mean = &s12 * &s22inv * (y - f);
    let cov = joint.view((0, 0), (k, k)).clone_owned() - &s12 * &s22inv * s12.transpose();
    (mean, cov)
}

/// `Σᵢ log N(yᵢ; f, V)` with an explicit inverse and determinant.
pub fn naive_loglik(ys: &[Vec<f64>], f: &[f64], v: &DMatrix<f64>) -> f64 {
    let n = f.len();
    let inv = v.clone().try_inverse().unwrap();
    let det = v.determinant();
    ys.iter()
        .map(|y| {
            let r = DVector::from_iterator(n, y.iter().zip(f).map(|(a, b)| a - b));
            -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + det.ln() + (r.transpose() * &inv * &r)[(0, 0)])
        })
        .sum()
}

pub fn golden(name: &str) -> Vec<Vec<i64>> {
    let path = format!("{}/tests/golden/{name}.csv", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|v| v.trim().parse().unwrap()).collect())
        .collect()
}

//! Clamped B-spline bases evaluated on the integer grid `1..=n`.

use nalgebra::DMatrix;

use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct BsplineBasis {
    grid: Vec<f64>,
    degree: usize,
    knots: Vec<f64>,
    matrix: DenseMatrix<f64>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("need degree + 1 <= J <= n, got n = {n}, J = {j}, degree = {degree}")]
    BadSize { n: usize, j: usize, degree: usize },
    #[error("could not place knots so that the {n}x{n} basis matrix is nonsingular")]
    SingularBasis { n: usize },
}

impl BsplineBasis {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn matrix(&self) -> &DenseMatrix<f64> {
        &self.matrix
    }

    pub fn basis_count(&self) -> usize {
        self.matrix.cols()
    }
}

/// Value of every basis function at `x` (Cox–de Boor).
fn evaluate(knots: &[f64], degree: usize, count: usize, x: f64) -> Vec<f64> {
    let last = *knots.last().expect("knots");
    // right end of a clamped basis: only the last function is 1
    if x >= last {
        let mut v = vec![0.0; count];
        v[count - 1] = 1.0;
        return v;
    }
    let m = knots.len() - 1;
    let mut b: Vec<f64> = (0..m).map(|i| if knots[i] <= x && x < knots[i + 1] { 1.0 } else { 0.0 }).collect();
    for p in 1..=degree {
        for i in 0..m - p {
            let left = knots[i + p] - knots[i];
            let right = knots[i + p + 1] - knots[i + 1];
            let a = if left > 0.0 { (x - knots[i]) / left * b[i] } else { 0.0 };
            let c = if right > 0.0 { (knots[i + p + 1] - x) / right * b[i + 1] } else { 0.0 };
            b[i] = a + c;
        }
    }
    b.truncate(count);
    b
}

fn clamped(interior: &[f64], degree: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut k = vec![lo; degree + 1];
    k.extend_from_slice(interior);
    k.extend(std::iter::repeat_n(hi, degree + 1));
    k
}

/// Schoenberg–Whitney: each basis function is nonzero at its own grid point.
fn schoenberg_whitney(knots: &[f64], degree: usize, grid: &[f64]) -> bool {
    let last = grid.len() - 1;
    grid.iter().enumerate().all(|(i, &x)| {
        let lo_ok = knots[i] < x || (i == 0 && knots[i] == x);
        let hi_ok = x < knots[i + degree + 1] || (i == last && knots[i + degree + 1] == x);
        lo_ok && hi_ok
    })
}

/// `J` B-splines of the given degree on `[1, n]`, evaluated at `1..=n`.
/// Interior knots are equally spaced; when `J = n` and that placement leaves
/// the square matrix singular, knots are moved to averages of grid points.
pub fn bspline_basis(n: usize, j: usize, degree: usize) -> Result<BsplineBasis, BasisError> {
    if degree < 1 || j < degree + 1 || j > n || n < degree + 1 {
        return Err(BasisError::BadSize { n, j, degree });
    }
    let grid: Vec<f64> = (1..=n).map(|x| x as f64).collect();
    let (lo, hi) = (1.0, n as f64);
    let inner = j - degree - 1;
    let uniform: Vec<f64> = (1..=inner).map(|k| lo + (hi - lo) * k as f64 / (inner + 1) as f64).collect();
    let mut knots = clamped(&uniform, degree, lo, hi);
    if j == n && !schoenberg_whitney(&knots, degree, &grid) {
        let averaged: Vec<f64> = (1..=inner)
            .map(|k| grid[k..k + degree].iter().sum::<f64>() / degree as f64)
            .collect();
        knots = clamped(&averaged, degree, lo, hi);
    }
    let rows: Vec<Vec<f64>> = grid.iter().map(|&x| evaluate(&knots, degree, j, x)).collect();
    let matrix = DenseMatrix::from_rows(&rows).expect("rectangular");
    if j == n {
        let m = DMatrix::from_row_slice(n, n, matrix.data());
        let sv = m.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 1e-10 * smax) {
            return Err(BasisError::SingularBasis { n });
        }
    }
    Ok(BsplineBasis { grid, degree, knots, matrix })
}

//! Lawson–Hanson active-set solver for (ridge-augmented) non-negative least squares.
//!
//! Minimises `‖y − Xβ‖² + Σ dᵢβᵢ²` over `β ≥ 0`. The ridge term is equivalent to
//! appending rows `√dᵢ eᵢᵀ` with zero response, so the solver works on the
//! normal equations `G = XᵀX + diag(d)`, `h = Xᵀy` and never forms the
//! augmented design.

use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnlsError {
    #[error("response has length {got}, design has {expected} rows")]
    ResponseLength { expected: usize, got: usize },
    #[error("ridge weights have length {got}, design has {expected} columns")]
    RidgeLength { expected: usize, got: usize },
    #[error("ridge weight {index} is negative or non-finite")]
    BadRidge { index: usize },
    #[error("response entry {index} is not finite")]
    NonFinite { index: usize },
}

#[derive(Debug, Clone)]
pub struct NnlsProblem<T> {
    pub design: DenseMatrix<T>,
    pub response: Vec<T>,
    pub ridge_weights: Option<Vec<T>>,
}

impl<T: Real> NnlsProblem<T> {
    pub fn new(
        design: DenseMatrix<T>,
        response: Vec<T>,
        ridge_weights: Option<Vec<T>>,
    ) -> Result<Self, NnlsError> {
        if response.len() != design.rows() {
            return Err(NnlsError::ResponseLength { expected: design.rows(), got: response.len() });
        }
        if let Some(index) = response.iter().position(|v| !v.is_finite()) {
            return Err(NnlsError::NonFinite { index });
        }
        if let Some(d) = &ridge_weights {
            if d.len() != design.cols() {
                return Err(NnlsError::RidgeLength { expected: design.cols(), got: d.len() });
            }
            if let Some(index) = d.iter().position(|v| !v.is_finite() || *v < T::zero()) {
                return Err(NnlsError::BadRidge { index });
            }
        }
        Ok(Self { design, response, ridge_weights })
    }

    /// Same problem with the ridge folded into extra design rows.
    pub fn augmented(&self) -> Self {
        let Some(d) = &self.ridge_weights else {
            return self.clone();
        };
        let (m, n) = (self.design.rows(), self.design.cols());
        let mut data = self.design.data().to_vec();
        for (j, dj) in d.iter().enumerate() {
            for k in 0..n {
                data.push(if k == j { dj.sqrt() } else { T::zero() });
            }
        }
        let mut response = self.response.clone();
        response.extend(std::iter::repeat_n(T::zero(), n));
        Self {
            design: DenseMatrix::new(m + n, n, data).expect("augmented design"),
            response,
            ridge_weights: None,
        }
    }

    /// `‖y − Xβ‖² + Σ dᵢβᵢ²`
    pub fn objective(&self, beta: &[T]) -> T {
        let fitted = self.design.mul_vec(beta);
        let mut obj = self
            .response
            .iter()
            .zip(&fitted)
            .fold(T::zero(), |acc, (y, f)| acc + (*y - *f) * (*y - *f));
        if let Some(d) = &self.ridge_weights {
            obj = obj + d.iter().zip(beta).fold(T::zero(), |acc, (d, b)| acc + *d * *b * *b);
        }
        obj
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NnlsOptions<T> {
    pub tol: T,
    /// Outer iteration cap; `None` means `3 * cols`.
    pub max_iter: Option<usize>,
}

impl<T: Real> Default for NnlsOptions<T> {
    fn default() -> Self {
        Self { tol: T::from(1e-10).unwrap(), max_iter: None }
    }
}

#[derive(Debug, Clone)]
pub struct NnlsSolution<T> {
    pub coefficients: Vec<T>,
    /// `‖y − Xβ‖`, excluding the ridge term.
    pub residual_norm: T,
    /// Full objective including the ridge term.
    pub objective: T,
    pub kkt_gap: T,
    pub iterations: usize,
    pub converged: bool,
    /// Set when a candidate column was refused because it was numerically
    /// dependent on the passive set.
    pub ill_conditioned: bool,
    /// Objective after each outer iteration.
    pub objective_trace: Vec<T>,
}

pub fn solve_nnls<T: Real>(problem: &NnlsProblem<T>, opts: &NnlsOptions<T>) -> NnlsSolution<T> {
    let gram = GramSystem::new(&problem.design);
    let sol = gram.solve(&problem.response, problem.ridge_weights.as_deref(), opts);
    let fitted = problem.design.mul_vec(&sol.coefficients);
    let rss = problem
        .response
        .iter()
        .zip(&fitted)
        .fold(T::zero(), |acc, (y, f)| acc + (*y - *f) * (*y - *f));
    NnlsSolution { residual_norm: rss.sqrt(), ..sol }
}

/// Cached `XᵀX` for repeated solves against the same design.
#[derive(Debug, Clone)]
pub struct GramSystem<T> {
    design: DenseMatrix<T>,
    gram: Vec<Vec<T>>,
}

impl<T: Real> GramSystem<T> {
    pub fn new(design: &DenseMatrix<T>) -> Self {
        let n = design.cols();
        let mut gram = vec![vec![T::zero(); n]; n];
        for i in 0..design.rows() {
            let row = design.row(i);
            for a in 0..n {
                if row[a] == T::zero() {
                    continue;
                }
                for b in a..n {
                    gram[a][b] = gram[a][b] + row[a] * row[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                gram[a][b] = gram[b][a];
            }
        }
        Self { design: design.clone(), gram }
    }

    pub fn design(&self) -> &DenseMatrix<T> {
        &self.design
    }

    /// Solves against `response`; `residual_norm` of the returned solution is
    /// computed from the normal equations.
    pub fn solve(
        &self,
        response: &[T],
        ridge: Option<&[T]>,
        opts: &NnlsOptions<T>,
    ) -> NnlsSolution<T> {
        self.solve_from(response, ridge, opts, None)
    }

    /// Like [`solve`](Self::solve) but starting from a feasible point, which
    /// saves most of the work when `start` is close to the solution.
    pub fn solve_from(
        &self,
        response: &[T],
        ridge: Option<&[T]>,
        opts: &NnlsOptions<T>,
        start: Option<&[T]>,
    ) -> NnlsSolution<T> {
        let h = self.design.tr_mul_vec(response);
        let yty = response.iter().fold(T::zero(), |acc, y| acc + *y * *y);
        let mut g = self.gram.clone();
        if let Some(d) = ridge {
            for (j, dj) in d.iter().enumerate() {
                g[j][j] = g[j][j] + *dj;
            }
        }
        lawson_hanson(&g, &h, yty, ridge, opts, start)
    }
}

fn quad_objective<T: Real>(g: &[Vec<T>], h: &[T], yty: T, beta: &[T]) -> T {
    let mut obj = yty;
    for (i, bi) in beta.iter().enumerate() {
        if *bi == T::zero() {
            continue;
        }
        obj = obj - (h[i] + h[i]) * *bi;
        for (j, bj) in beta.iter().enumerate() {
            obj = obj + *bi * g[i][j] * *bj;
        }
    }
    obj
}

fn lawson_hanson<T: Real>(
    g: &[Vec<T>],
    h: &[T],
    yty: T,
    ridge: Option<&[T]>,
    opts: &NnlsOptions<T>,
    start: Option<&[T]>,
) -> NnlsSolution<T> {
    let n = h.len();
    let max_iter = opts.max_iter.unwrap_or(3 * n).max(1);
    let hscale = h.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    let enter_tol = opts.tol * hscale;
    let dep_tol = T::from(1e-13).unwrap();

    let mut beta = vec![T::zero(); n];
    let mut passive: Vec<usize> = Vec::new();
    let mut blocked = vec![false; n];
    let mut ill_conditioned = false;
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();

    if let Some(s) = start {
        beta = s.iter().map(|v| v.max(T::zero())).collect();
        passive = (0..n).filter(|&j| beta[j] > T::zero()).collect();
        if !passive.is_empty() && !restore_feasibility(g, h, &mut beta, &mut passive) {
            beta = vec![T::zero(); n];
            passive.clear();
        }
    }

    loop {
        let w = gradient(g, h, &beta);
        let mut entering: Option<usize> = None;
        for j in 0..n {
            if passive.contains(&j) || blocked[j] || w[j] <= enter_tol {
                continue;
            }
            // strict comparison keeps the smallest index on ties
            if entering.is_none_or(|e| w[j] > w[e]) {
                entering = Some(j);
            }
        }
        let Some(j) = entering else {
            converged = true;
            break;
        };
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        if !passive.is_empty() {
            let gpp = submatrix(g, &passive);
            let gpj: Vec<T> = passive.iter().map(|&p| g[p][j]).collect();
            let schur = match cholesky(&gpp) {
                Some(l) => {
                    let x = cholesky_solve(&l, &gpj);
                    g[j][j] - gpj.iter().zip(&x).fold(T::zero(), |acc, (a, b)| acc + *a * *b)
                }
                None => T::zero(),
            };
            if schur <= dep_tol * g[j][j].max(T::min_positive_value()) {
                blocked[j] = true;
                ill_conditioned = true;
                continue;
            }
        }
        passive.push(j);
        let before = beta.clone();

        if !restore_feasibility(g, h, &mut beta, &mut passive) {
            // drop the newest column and give up on it
            passive.retain(|&p| p != j);
            beta[j] = T::zero();
            blocked[j] = true;
            ill_conditioned = true;
        }

        if beta == before {
            // the entering column made no progress; avoid cycling on it
            blocked[j] = true;
        } else {
            blocked.iter_mut().for_each(|b| *b = false);
        }
        trace.push(quad_objective(g, h, yty, &beta));
    }

    let w = gradient(g, h, &beta);
    let kkt_gap = beta.iter().zip(&w).fold(T::zero(), |acc, (b, wi)| {
        let v = if *b > T::zero() { wi.abs() } else { wi.max(T::zero()) };
        acc.max(v)
    });
    let objective = quad_objective(g, h, yty, &beta);
    let ridge_part = ridge
        .map(|d| d.iter().zip(&beta).fold(T::zero(), |acc, (d, b)| acc + *d * *b * *b))
        .unwrap_or_else(T::zero);
    NnlsSolution {
        residual_norm: (objective - ridge_part).max(T::zero()).sqrt(),
        objective,
        kkt_gap,
        iterations,
        converged,
        ill_conditioned,
        objective_trace: trace,
        coefficients: beta,
    }
}

/// Lawson–Hanson inner loop: from a feasible `beta` supported on `passive`,
/// move towards the unconstrained minimiser on the passive set, dropping
/// coordinates that hit zero. Returns false if the passive Gram block is
/// numerically singular.
fn restore_feasibility<T: Real>(g: &[Vec<T>], h: &[T], beta: &mut [T], passive: &mut Vec<usize>) -> bool {
    let n = h.len();
    for _ in 0..(3 * n + 3) {
        let gpp = submatrix(g, passive);
        let hp: Vec<T> = passive.iter().map(|&p| h[p]).collect();
        let Some(l) = cholesky(&gpp) else { return false };
        let z = cholesky_solve(&l, &hp);
        if z.iter().all(|v| *v > T::zero()) {
            for (k, &p) in passive.iter().enumerate() {
                beta[p] = z[k];
            }
            return true;
        }
        let mut alpha = T::infinity();
        let mut leaving = usize::MAX;
        for (k, &p) in passive.iter().enumerate() {
            if z[k] <= T::zero() {
                let denom = beta[p] - z[k];
                let ratio = if denom > T::zero() { beta[p] / denom } else { T::zero() };
                if ratio < alpha || (ratio == alpha && p < leaving) {
                    alpha = ratio;
                    leaving = p;
                }
            }
        }
        for (k, &p) in passive.iter().enumerate() {
            beta[p] = beta[p] + alpha * (z[k] - beta[p]);
        }
        beta[leaving] = T::zero();
        let zero_tol = T::epsilon() * T::from(16.0).unwrap();
        passive.retain(|&p| {
            if p == leaving || beta[p] <= zero_tol * (T::one() + beta[p].abs()) {
                beta[p] = T::zero();
                false
            } else {
                true
            }
        });
        if passive.is_empty() {
            return true;
        }
    }
    true
}

fn gradient<T: Real>(g: &[Vec<T>], h: &[T], beta: &[T]) -> Vec<T> {
    (0..h.len())
        .map(|i| {
            let gi = &g[i];
            h[i] - beta
                .iter()
                .enumerate()
                .filter(|(_, b)| **b != T::zero())
                .fold(T::zero(), |acc, (j, b)| acc + gi[j] * *b)
        })
        .collect()
}

fn submatrix<T: Real>(g: &[Vec<T>], idx: &[usize]) -> Vec<Vec<T>> {
    idx.iter().map(|&i| idx.iter().map(|&j| g[i][j]).collect()).collect()
}

/// Lower Cholesky factor, or `None` if a pivot is not positive.
pub(crate) fn cholesky<T: Real>(a: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    let mut l = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s = s - l[i][k] * l[j][k];
            }
            if i == j {
                if s <= T::zero() || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

pub(crate) fn cholesky_solve<T: Real>(l: &[Vec<T>], b: &[T]) -> Vec<T> {
    let n = b.len();
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(rows: &[Vec<f64>], y: &[f64], ridge: Option<Vec<f64>>) -> NnlsProblem<f64> {
        NnlsProblem::new(DenseMatrix::from_rows(rows).unwrap(), y.to_vec(), ridge).unwrap()
    }

    #[test]
    fn identity_design_clips() {
        let p = problem(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[3.0, -1.0], None);
        let s = solve_nnls(&p, &NnlsOptions::default());
        assert_eq!(s.coefficients, vec![3.0, 0.0]);
        assert!(s.converged);
        assert!((s.residual_norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_on_identity_halves() {
        let p = problem(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[3.0, 0.0], Some(vec![1.0, 1.0]));
        let s = solve_nnls(&p, &NnlsOptions::default());
        assert!((s.coefficients[0] - 1.5).abs() < 1e-14);
        assert_eq!(s.coefficients[1], 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            NnlsProblem::new(x.clone(), vec![1.0, 2.0], None),
            Err(NnlsError::ResponseLength { .. })
        ));
        assert!(matches!(
            NnlsProblem::new(x.clone(), vec![1.0], Some(vec![1.0, -1.0])),
            Err(NnlsError::BadRidge { index: 1 })
        ));
        assert!(matches!(
            NnlsProblem::new(x, vec![f64::NAN], None),
            Err(NnlsError::NonFinite { index: 0 })
        ));
    }

    #[test]
    fn duplicate_columns_are_flagged_not_fatal() {
        let p = problem(
            &[vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            &[1.0, 1.0, 2.0],
            None,
        );
        let s = solve_nnls(&p, &NnlsOptions::default());
        assert!(s.converged);
        assert!((s.coefficients[0] + s.coefficients[1] - 1.0).abs() < 1e-12);
        assert!((s.coefficients[2] - 2.0).abs() < 1e-12);
        assert!(s.residual_norm < 1e-10);
    }

    #[test]
    fn max_iterations_returns_flagged_iterate() {
        let p = problem(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[3.0, 2.0], None);
        let s = solve_nnls(&p, &NnlsOptions { tol: 1e-10, max_iter: Some(1) });
        assert!(!s.converged);
        assert_eq!(s.coefficients, vec![3.0, 0.0]);
    }

    #[test]
    fn works_in_single_precision() {
        let x = DenseMatrix::from_rows(&[vec![1.0f32, 0.5], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let p = NnlsProblem::new(x, vec![1.0, -1.0, 0.5], None).unwrap();
        let s = solve_nnls(&p, &NnlsOptions::default());
        assert!(s.coefficients.iter().all(|b| *b >= 0.0));
        assert!(s.kkt_gap < 1e-4);
    }
}

//! Dense two-phase simplex for small standard-form programs
//! `min/max cᵀx  s.t.  Ax = b, x ≥ 0`, with Bland's rule.

use crate::linalg::DenseMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    pub x: Vec<T>,
    pub objective: T,
}

struct Tableau<T> {
    // rows 0..m are constraints, last column is the right-hand side
    t: Vec<Vec<T>>,
    basis: Vec<usize>,
    width: usize,
}

impl<T: Real> Tableau<T> {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v = *v / p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != T::zero() {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v = *v - f * *pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimises `cost · x` over the columns allowed by `allowed`.
    fn optimise(&mut self, cost: &[T], allowed: &dyn Fn(usize) -> bool, tol: T, max_iter: usize) -> LpStatus {
        let m = self.t.len();
        for _ in 0..max_iter {
            // reduced costs c_j − c_Bᵀ B⁻¹ a_j
            let entering = (0..self.width).filter(|&j| allowed(j)).find(|&j| {
                let mut rc = cost[j];
                for i in 0..m {
                    rc = rc - cost[self.basis[i]] * self.t[i][j];
                }
                rc < -tol
            });
            let Some(c) = entering else { return LpStatus::Optimal };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..m {
                let a = self.t[i][c];
                if a > tol {
                    let ratio = self.t[i][self.width] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - tol || (ratio <= best + tol && self.basis[i] < self.basis[k]) {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return LpStatus::Unbounded };
            self.pivot(r, c);
        }
        LpStatus::IterationLimit
    }
}

pub fn solve_lp<T: Real>(a: &DenseMatrix<T>, b: &[T], c: &[T], maximize: bool, tol: T) -> LpSolution<T> {
    let (m, n) = (a.rows(), a.cols());
    assert_eq!(b.len(), m, "right-hand side length");
    assert_eq!(c.len(), n, "cost length");
    let width = n + m;
    let mut t = Vec::with_capacity(m);
    for i in 0..m {
        let flip = b[i] < T::zero();
        let sign = if flip { -T::one() } else { T::one() };
        let mut row = vec![T::zero(); width + 1];
        for j in 0..n {
            row[j] = sign * *a.get(i, j);
        }
        row[n + i] = T::one();
        row[width] = sign * b[i];
        t.push(row);
    }
    let mut tab = Tableau { t, basis: (n..n + m).collect(), width };
    let max_iter = 50 * (width + 1);

    let mut phase1 = vec![T::zero(); width];
    phase1[n..].iter_mut().for_each(|v| *v = T::one());
    let status = tab.optimise(&phase1, &|_| true, tol, max_iter);
    let infeasibility = (0..m)
        .filter(|&i| tab.basis[i] >= n)
        .fold(T::zero(), |acc, i| acc + tab.t[i][width]);
    let scale = b.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    if status != LpStatus::Optimal || infeasibility > tol.sqrt() * scale {
        return LpSolution { status: LpStatus::Infeasible, x: vec![T::zero(); n], objective: T::nan() };
    }
    // drive remaining artificials out of the basis, dropping redundant rows
    let mut i = 0;
    while i < tab.t.len() {
        if tab.basis[i] >= n {
            match (0..n).find(|&j| tab.t[i][j].abs() > tol) {
                Some(j) => tab.pivot(i, j),
                None => {
                    tab.t.remove(i);
                    tab.basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }

    let mut cost = vec![T::zero(); width];
    for j in 0..n {
        cost[j] = if maximize { -c[j] } else { c[j] };
    }
    let status = tab.optimise(&cost, &|j| j < n, tol, max_iter);
    let mut x = vec![T::zero(); n];
    for (r, &j) in tab.basis.iter().enumerate() {
        if j < n {
            x[j] = tab.t[r][width].max(T::zero());
        }
    }
    let objective = c.iter().zip(&x).fold(T::zero(), |acc, (ci, xi)| acc + *ci * *xi);
    LpSolution { status, x, objective }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_program() {
        // max x + y  s.t. x + 2y + s1 = 4, 3x + y + s2 = 6
        let a = DenseMatrix::<f64>::from_rows(&[vec![1.0, 2.0, 1.0, 0.0], vec![3.0, 1.0, 0.0, 1.0]]).unwrap();
        let sol = solve_lp(&a, &[4.0, 6.0], &[1.0, 1.0, 0.0, 0.0], true, 1e-12);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 2.8).abs() < 1e-12);
        assert!((sol.x[0] - 1.6).abs() < 1e-12 && (sol.x[1] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = DenseMatrix::<f64>::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert_eq!(solve_lp(&a, &[-1.0], &[1.0, 0.0], false, 1e-12).status, LpStatus::Infeasible);
        let a = DenseMatrix::<f64>::from_rows(&[vec![1.0, -1.0]]).unwrap();
        assert_eq!(solve_lp(&a, &[1.0], &[1.0, 0.0], true, 1e-12).status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        let a = DenseMatrix::<f64>::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let sol = solve_lp(&a, &[1.0, 2.0], &[1.0, 0.0], true, 1e-12);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }
}

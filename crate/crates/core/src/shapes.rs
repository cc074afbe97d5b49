//! Shape restrictions on a grid of function values written as cones.
//!
//! Positions in a [`ShapeSpec`] are 1-based grid indices and equality rows
//! are 1-based row numbers, matching how constraint matrices are usually
//! printed. Everything returned from this module is 0-based.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::{ConeError, FacetCone};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("invalid shape spec: {0}")]
    InvalidSpec(String),
    #[error("unknown preset `{0}` (expected bell20 or nhanes24)")]
    UnknownPreset(String),
    #[error(transparent)]
    Cone(#[from] ConeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Nonneg,
    Increasing,
    Decreasing,
    Convex,
    Concave,
}

impl Shape {
    fn min_points(self) -> usize {
        match self {
            Shape::Nonneg => 1,
            Shape::Increasing | Shape::Decreasing => 2,
            Shape::Convex | Shape::Concave => 3,
        }
    }
}

/// One block of rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeTerm {
    /// Shape holding on grid positions `start..=end`.
    Regime { start: usize, end: usize, shape: Shape },
    /// A single row at `index`: `f(i) ≥ 0`, `f(i+1) − f(i) ≥ 0` or
    /// `f(i) − f(i+1) ≥ 0`.
    Boundary { index: usize, shape: Shape },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub n: usize,
    pub terms: Vec<ShapeTerm>,
    #[serde(default)]
    pub equality_rows: Vec<usize>,
}

impl ShapeSpec {
    pub fn new(n: usize) -> Self {
        Self { n, terms: Vec::new(), equality_rows: Vec::new() }
    }

    pub fn regime(mut self, start: usize, end: usize, shape: Shape) -> Self {
        self.terms.push(ShapeTerm::Regime { start, end, shape });
        self
    }

    pub fn boundary(mut self, index: usize, shape: Shape) -> Self {
        self.terms.push(ShapeTerm::Boundary { index, shape });
        self
    }

    pub fn equalities(mut self, rows: impl IntoIterator<Item = usize>) -> Self {
        self.equality_rows.extend(rows);
        self
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        let bad = |msg: String| Err(ShapeError::InvalidSpec(msg));
        if self.n < 2 {
            return bad(format!("grid length {} is too short", self.n));
        }
        let mut covered = vec![false; self.n + 1];
        for (k, term) in self.terms.iter().enumerate() {
            match *term {
                ShapeTerm::Regime { start, end, shape } => {
                    if start < 1 || end > self.n || start > end {
                        return bad(format!("term {}: interval {start}..{end} outside 1..{}", k + 1, self.n));
                    }
                    if end - start + 1 < shape.min_points().max(2) {
                        return bad(format!("term {}: {shape:?} regime {start}..{end} has too few points", k + 1));
                    }
                    covered[start..=end].iter_mut().for_each(|c| *c = true);
                }
                ShapeTerm::Boundary { index, shape } => {
                    let last = if shape == Shape::Nonneg { self.n } else { self.n - 1 };
                    if index < 1 || index > last {
                        return bad(format!("term {}: boundary index {index} outside 1..{last}", k + 1));
                    }
                    if matches!(shape, Shape::Convex | Shape::Concave) {
                        return bad(format!("term {}: boundary rows cannot be convex or concave", k + 1));
                    }
                    covered[index] = true;
                    if shape != Shape::Nonneg {
                        covered[index + 1] = true;
                    }
                }
            }
        }
        if let Some(gap) = (1..=self.n).find(|&j| !covered[j]) {
            return bad(format!("grid position {gap} is not covered by any term"));
        }
        let rows = self.row_count();
        if let Some(&r) = self.equality_rows.iter().find(|&&r| r < 1 || r > rows) {
            return bad(format!("equality row {r} outside 1..{rows}"));
        }
        Ok(())
    }

    fn row_count(&self) -> usize {
        self.terms
            .iter()
            .map(|t| match *t {
                ShapeTerm::Regime { start, end, shape } => match shape {
                    Shape::Nonneg => end - start + 1,
                    Shape::Increasing | Shape::Decreasing => end - start,
                    Shape::Convex | Shape::Concave => end - start - 1,
                },
                ShapeTerm::Boundary { .. } => 1,
            })
            .sum()
    }

    /// Integer constraint rows in term order.
    pub fn integer_rows(&self) -> Result<Vec<Vec<i64>>, ShapeError> {
        self.validate()?;
        let n = self.n;
        let mut rows = Vec::with_capacity(self.row_count());
        let mut push = |entries: &[(usize, i64)]| {
            let mut r = vec![0i64; n];
            for &(pos, v) in entries {
                r[pos - 1] = v;
            }
            rows.push(r);
        };
        for term in &self.terms {
            match *term {
                ShapeTerm::Regime { start, end, shape } => match shape {
                    Shape::Nonneg => (start..=end).for_each(|j| push(&[(j, 1)])),
                    Shape::Increasing => (start..end).for_each(|j| push(&[(j, -1), (j + 1, 1)])),
                    Shape::Decreasing => (start..end).for_each(|j| push(&[(j, 1), (j + 1, -1)])),
                    Shape::Convex => (start + 1..end).for_each(|j| push(&[(j - 1, 1), (j, -2), (j + 1, 1)])),
                    Shape::Concave => (start + 1..end).for_each(|j| push(&[(j - 1, -1), (j, 2), (j + 1, -1)])),
                },
                ShapeTerm::Boundary { index, shape } => match shape {
                    Shape::Nonneg => push(&[(index, 1)]),
                    Shape::Increasing => push(&[(index, -1), (index + 1, 1)]),
                    Shape::Decreasing => push(&[(index, 1), (index + 1, -1)]),
                    Shape::Convex | Shape::Concave => unreachable!("rejected by validate"),
                },
            }
        }
        Ok(rows)
    }

    pub fn matrix<T: Scalar>(&self) -> Result<DenseMatrix<T>, ShapeError> {
        let rows: Vec<Vec<T>> = self
            .integer_rows()?
            .into_iter()
            .map(|r| r.into_iter().map(|v| T::from_i64(v).expect("small integer")).collect())
            .collect();
        Ok(DenseMatrix::from_rows(&rows).map_err(ConeError::from)?)
    }
}

/// Unimodal bell shape on 20 points: convex, concave, convex, increasing
/// at the left edge and decreasing at the right.
pub fn bell20() -> ShapeSpec {
    ShapeSpec::new(20)
        .regime(1, 9, Shape::Convex)
        .regime(8, 13, Shape::Concave)
        .regime(12, 20, Shape::Convex)
        .boundary(1, Shape::Increasing)
        .boundary(1, Shape::Nonneg)
        .boundary(19, Shape::Decreasing)
        .boundary(20, Shape::Nonneg)
}

/// Hourly activity profile on 24 points: nonnegative overnight, increasing
/// from hour 5, convex, a long concave daytime regime, convex, decreasing.
pub fn nhanes24() -> ShapeSpec {
    ShapeSpec::new(24)
        .regime(1, 5, Shape::Nonneg)
        .boundary(5, Shape::Increasing)
        .regime(5, 9, Shape::Convex)
        .regime(8, 21, Shape::Concave)
        .regime(20, 23, Shape::Convex)
        .boundary(23, Shape::Decreasing)
        .boundary(24, Shape::Nonneg)
}

/// 1-based rows of [`bell20`] held at equality in the boundary scenario.
pub const BELL20_SPARSE_ROWS: [usize; 11] = [8, 9, 10, 12, 13, 15, 16, 17, 18, 21, 22];

pub fn preset(name: &str) -> Result<ShapeSpec, ShapeError> {
    match name {
        "bell20" => Ok(bell20()),
        "nhanes24" => Ok(nhanes24()),
        other => Err(ShapeError::UnknownPreset(other.to_string())),
    }
}

/// Facet cone of `spec`, with its equality rows as the linearity set.
pub fn build_constraint_matrix<T: Scalar>(spec: &ShapeSpec) -> Result<FacetCone<T>, ShapeError> {
    let a = spec.matrix::<T>()?;
    Ok(FacetCone::new(a, spec.equality_rows.iter().map(|r| r - 1))?)
}

/// `base` with the 0-based rows `equalities` turned into equality constraints.
pub fn sparse_scenario_cone<T: Scalar>(
    base: &FacetCone<T>,
    equalities: impl IntoIterator<Item = usize>,
) -> Result<FacetCone<T>, ConeError> {
    base.with_linearity(base.linearity().iter().copied().chain(equalities))
}

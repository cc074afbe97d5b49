//! Proper polyhedral cones in facet form `{μ : Aμ ≥ 0}` and vertex form
//! `{Δb : b ≥ 0}`, and conversion between them.

mod dd;

use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::linalg::{dot, nullspace_vectors, rank_of_rows, DenseMatrix, LinalgError};
use crate::nnls::{solve_nnls, NnlsOptions, NnlsProblem};
use crate::scalar::{Real, Scalar};

use dd::{double_description, normalize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("cone is not pointed: constraint rank {rank} < dimension {dim}")]
    NotPointed { rank: usize, dim: usize },
    #[error("inequality row {row} is redundant (rows are not irreducible)")]
    NotIrreducible { row: usize },
    #[error("generators span only {rank} of {dim} dimensions")]
    DegenerateCone { rank: usize, dim: usize },
    #[error("index {index} out of range (size {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("basis transform violates the proper-cone conditions: {0}")]
    BasisConditionViolated(TransformCondition),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which hypothesis failed when mapping a cone through a basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformCondition {
    FullColumnRank,
    ConicallyIndependentRows,
}

impl std::fmt::Display for TransformCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::FullColumnRank => write!(f, "A·B is not of full column rank"),
            Self::ConicallyIndependentRows => write!(f, "rows of A·B are not conically independent"),
        }
    }
}

/// `{μ : a_i·μ ≥ 0, i ∉ L; a_i·μ = 0, i ∈ L}` with `L` the linearity set.
#[derive(Debug, Clone, PartialEq)]
pub struct FacetCone<T> {
    a: DenseMatrix<T>,
    linearity: BTreeSet<usize>,
}

impl<T: Scalar> FacetCone<T> {
    /// Fails with `NotPointed` unless `a` has full column rank.
    pub fn new(a: DenseMatrix<T>, linearity: impl IntoIterator<Item = usize>) -> Result<Self, ConeError> {
        let linearity: BTreeSet<usize> = linearity.into_iter().collect();
        if let Some(&bad) = linearity.iter().find(|&&i| i >= a.rows()) {
            return Err(ConeError::IndexOutOfRange { index: bad, len: a.rows() });
        }
        let rank = a.rank(&T::default_tolerance());
        if rank < a.cols() {
            return Err(ConeError::NotPointed { rank, dim: a.cols() });
        }
        Ok(Self { a, linearity })
    }

    pub fn inequalities(a: DenseMatrix<T>) -> Result<Self, ConeError> {
        Self::new(a, [])
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.a
    }

    pub fn linearity(&self) -> &BTreeSet<usize> {
        &self.linearity
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn row_count(&self) -> usize {
        self.a.rows()
    }

    pub fn inequality_rows(&self) -> Vec<usize> {
        (0..self.a.rows()).filter(|i| !self.linearity.contains(i)).collect()
    }

    pub fn with_linearity(&self, linearity: impl IntoIterator<Item = usize>) -> Result<Self, ConeError> {
        Self::new(self.a.clone(), linearity)
    }

    /// Whether `x` satisfies every row to within `tol` (equalities in absolute value).
    pub fn contains(&self, x: &[T], tol: &T) -> bool {
        (0..self.a.rows()).all(|i| {
            let v = dot(self.a.row(i), x);
            if self.linearity.contains(&i) {
                v.abs() <= *tol
            } else {
                v >= -tol.clone()
            }
        })
    }
}

/// Cone generated by the columns of `delta`, each normalised.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexCone<T> {
    delta: DenseMatrix<T>,
}

impl<T: Scalar> VertexCone<T> {
    /// Normalises every column; rejects zero columns.
    pub fn new(delta: DenseMatrix<T>) -> Result<Self, ConeError> {
        let mut cols = delta.column_vecs();
        for (j, c) in cols.iter_mut().enumerate() {
            if c.iter().all(|x| x.is_zero()) {
                return Err(ConeError::ShapeMismatch(format!("generator {j} is the zero vector")));
            }
            normalize(c);
        }
        Ok(Self { delta: DenseMatrix::from_columns(&cols)? })
    }

    pub fn from_rays(rays: &[Vec<T>]) -> Result<Self, ConeError> {
        if rays.is_empty() {
            return Err(ConeError::ShapeMismatch("no generators".into()));
        }
        Self::new(DenseMatrix::from_columns(rays)?)
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.delta
    }

    pub fn dim(&self) -> usize {
        self.delta.rows()
    }

    pub fn ray_count(&self) -> usize {
        self.delta.cols()
    }

    pub fn ray(&self, j: usize) -> Vec<T> {
        self.delta.column(j)
    }

    pub fn rays(&self) -> Vec<Vec<T>> {
        self.delta.column_vecs()
    }

    /// `Δb`
    pub fn combine(&self, b: &[T]) -> Vec<T> {
        self.delta.mul_vec(b)
    }
}

/// Matched facet and vertex descriptions of one cone.
#[derive(Debug, Clone)]
pub struct DdPair<T> {
    facet: FacetCone<T>,
    vertex: VertexCone<T>,
    tolerance: T,
    zero_sets: Vec<FixedBitSet>,
}

#[derive(Debug, Clone, Copy)]
pub struct DdOptions<T> {
    pub tol: T,
    /// Drop redundant inequality rows (and promote implicit equalities to the
    /// linearity set) instead of failing with `NotIrreducible`.
    pub reduce: bool,
}

impl<T: Scalar> Default for DdOptions<T> {
    fn default() -> Self {
        Self { tol: T::default_tolerance(), reduce: false }
    }
}

/// Result of a conversion that may have simplified the input.
#[derive(Debug, Clone)]
pub struct DdOutcome<T> {
    pub pair: DdPair<T>,
    /// Original indices of inequality rows dropped as redundant.
    pub dropped_rows: Vec<usize>,
    /// Original indices of rows found to hold with equality on the whole cone.
    pub implicit_equalities: Vec<usize>,
    /// For each row of `pair.facet()`, its index in the input cone.
    pub kept_rows: Vec<usize>,
}

impl<T: Scalar> DdPair<T> {
    /// Pairs two descriptions without checking that they agree; see
    /// [`verify_dd_pair`].
    pub fn new(facet: FacetCone<T>, vertex: VertexCone<T>, tolerance: T) -> Result<Self, ConeError> {
        if facet.dim() != vertex.dim() {
            return Err(ConeError::ShapeMismatch(format!(
                "facet matrix has {} columns but generators have {} rows",
                facet.dim(),
                vertex.dim()
            )));
        }
        let zero_sets = compute_zero_sets(&facet, &vertex, &tolerance);
        Ok(Self { facet, vertex, tolerance, zero_sets })
    }

    /// Runs the double description method on `facet`.
    pub fn from_facets(facet: &FacetCone<T>, opts: &DdOptions<T>) -> Result<Self, ConeError> {
        Ok(convert_facets(facet, opts)?.pair)
    }

    pub fn facet(&self) -> &FacetCone<T> {
        &self.facet
    }

    pub fn vertex(&self) -> &VertexCone<T> {
        &self.vertex
    }

    pub fn tolerance(&self) -> &T {
        &self.tolerance
    }

    pub fn dim(&self) -> usize {
        self.facet.dim()
    }

    pub fn ray_count(&self) -> usize {
        self.vertex.ray_count()
    }

    /// Rows active at ray `j`: `{i : |a_i·δ_j| ≤ tol}`.
    pub fn zero_set(&self, j: usize) -> Result<Vec<usize>, ConeError> {
        self.zero_bits(j).map(|b| b.ones().collect())
    }

    pub(crate) fn zero_bits(&self, j: usize) -> Result<&FixedBitSet, ConeError> {
        self.zero_sets
            .get(j)
            .ok_or(ConeError::IndexOutOfRange { index: j, len: self.ray_count() })
    }

    /// Rank of the facet rows indexed by `rows`.
    pub(crate) fn row_rank(&self, rows: impl Iterator<Item = usize>) -> usize {
        let sel: Vec<Vec<T>> = rows.map(|i| self.facet.a.row(i).to_vec()).collect();
        rank_of_rows(&sel, self.dim(), &self.tolerance)
    }
}

fn compute_zero_sets<T: Scalar>(facet: &FacetCone<T>, vertex: &VertexCone<T>, tol: &T) -> Vec<FixedBitSet> {
    let a = facet.matrix();
    let row_scales: Vec<T> = (0..a.rows()).map(|i| T::vector_scale(a.row(i))).collect();
    (0..vertex.ray_count())
        .map(|j| {
            let ray = vertex.ray(j);
            let scale = T::vector_scale(&ray);
            let mut bits = FixedBitSet::with_capacity(a.rows());
            for i in 0..a.rows() {
                let v = dot(a.row(i), &ray);
                let thresh = if T::EXACT {
                    T::zero()
                } else {
                    tol.clone() * row_scales[i].clone() * scale.clone()
                };
                if facet.linearity.contains(&i) || v.abs() <= thresh {
                    bits.insert(i);
                }
            }
            bits
        })
        .collect()
}

/// Double description with optional reduction; the workhorse behind
/// [`facet_to_vertex`] and [`DdPair::from_facets`].
pub fn convert_facets<T: Scalar>(facet: &FacetCone<T>, opts: &DdOptions<T>) -> Result<DdOutcome<T>, ConeError> {
    let mut linearity = facet.linearity.clone();
    let mut implicit = Vec::new();
    loop {
        match convert_once(facet, &linearity, opts)? {
            Attempt::Done { rays, redundant } => {
                if !opts.reduce {
                    if let Some(&row) = redundant.first() {
                        return Err(ConeError::NotIrreducible { row });
                    }
                }
                let kept: Vec<usize> = (0..facet.row_count()).filter(|i| !redundant.contains(i)).collect();
                let a = facet.matrix().select_rows(&kept);
                let lin: Vec<usize> = kept
                    .iter()
                    .enumerate()
                    .filter(|(_, orig)| linearity.contains(orig))
                    .map(|(k, _)| k)
                    .collect();
                let reduced = FacetCone::new(a, lin)?;
                let vertex = VertexCone::from_rays(&rays)?;
                let pair = DdPair::new(reduced, vertex, opts.tol.clone())?;
                return Ok(DdOutcome { pair, dropped_rows: redundant, implicit_equalities: implicit, kept_rows: kept });
            }
            Attempt::ImplicitEqualities(rows) => {
                if !opts.reduce {
                    return Err(ConeError::NotIrreducible { row: rows[0] });
                }
                implicit.extend(rows.iter().copied());
                linearity.extend(rows);
            }
        }
    }
}

enum Attempt<T> {
    Done { rays: Vec<Vec<T>>, redundant: Vec<usize> },
    ImplicitEqualities(Vec<usize>),
}

fn convert_once<T: Scalar>(
    facet: &FacetCone<T>,
    linearity: &BTreeSet<usize>,
    opts: &DdOptions<T>,
) -> Result<Attempt<T>, ConeError> {
    let tol = &opts.tol;
    let n = facet.dim();
    let a = facet.matrix();
    let eq_rows: Vec<Vec<T>> = linearity.iter().map(|&i| a.row(i).to_vec()).collect();
    let ineq: Vec<usize> = (0..a.rows()).filter(|i| !linearity.contains(i)).collect();

    // restrict to the nullspace of the equality rows
    let basis: Vec<Vec<T>> = if eq_rows.is_empty() {
        (0..n)
            .map(|j| {
                let mut e = vec![T::zero(); n];
                e[j] = T::one();
                e
            })
            .collect()
    } else {
        nullspace_vectors(&eq_rows, n, tol)
    };
    let k = basis.len();
    if k == 0 {
        return Err(ConeError::DegenerateCone { rank: 0, dim: n });
    }
    let reduce_row = |row: &[T]| -> Vec<T> { basis.iter().map(|b| dot(row, b)).collect() };

    let mut redundant: Vec<usize> = Vec::new();
    let mut active_rows: Vec<usize> = Vec::new();
    let mut reduced: Vec<Vec<T>> = Vec::new();
    for &i in &ineq {
        let r = reduce_row(a.row(i));
        let scale = T::vector_scale(&r);
        let row_scale = T::vector_scale(a.row(i));
        let negligible = if T::EXACT { scale.is_zero() } else { scale <= tol.clone() * row_scale };
        if negligible {
            redundant.push(i);
        } else {
            active_rows.push(i);
            reduced.push(r);
        }
    }
    if rank_of_rows(&reduced, k, tol) < k {
        let rank = rank_of_rows(&a.row_vecs(), n, tol);
        return Err(ConeError::NotPointed { rank: rank.min(n - 1), dim: n });
    }
    let rays = double_description(&reduced, k, tol)?;

    let ray_vecs: Vec<Vec<T>> = rays.iter().map(|r| r.coords.clone()).collect();
    if rank_of_rows(&ray_vecs, k, tol) < k {
        let implicit: Vec<usize> = (0..reduced.len())
            .filter(|&r| rays.iter().all(|ray| ray.zeros.contains(r)))
            .map(|r| active_rows[r])
            .collect();
        if implicit.is_empty() {
            return Err(ConeError::DegenerateCone { rank: rank_of_rows(&ray_vecs, k, tol), dim: k });
        }
        return Ok(Attempt::ImplicitEqualities(implicit));
    }

    // a row is irredundant iff its active rays span a facet and no earlier
    // row already defines that facet
    let mut seen: Vec<FixedBitSet> = Vec::new();
    for (r, &orig) in active_rows.iter().enumerate() {
        let mut on = FixedBitSet::with_capacity(rays.len());
        let mut on_vecs = Vec::new();
        for (j, ray) in rays.iter().enumerate() {
            if ray.zeros.contains(r) {
                on.insert(j);
                on_vecs.push(ray.coords.clone());
            }
        }
        let facet_rank = rank_of_rows(&on_vecs, k, tol);
        if facet_rank + 1 < k || seen.contains(&on) {
            redundant.push(orig);
        } else {
            seen.push(on);
        }
    }
    redundant.sort_unstable();

    let mut ambient: Vec<Vec<T>> = rays
        .iter()
        .map(|ray| {
            let mut v = vec![T::zero(); n];
            for (c, b) in ray.coords.iter().zip(&basis) {
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi = vi.clone() + c.clone() * bi.clone();
                }
            }
            normalize(&mut v);
            v
        })
        .collect();
    ambient.sort_by(|x, y| {
        x.iter()
            .zip(y)
            .map(|(p, q)| p.canonical_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(Attempt::Done { rays: ambient, redundant })
}

/// Extreme rays of a proper cone, unit-normalised and canonically ordered.
pub fn facet_to_vertex<T: Scalar>(cone: &FacetCone<T>, tol: &T) -> Result<VertexCone<T>, ConeError> {
    Ok(convert_facets(cone, &DdOptions { tol: tol.clone(), reduce: false })?.pair.vertex)
}

/// Facet normals of the cone generated by `cone`, computed as the extreme
/// rays of the dual cone `{y : Δᵀy ≥ 0}`. Redundant generators are ignored.
pub fn vertex_to_facet<T: Scalar>(cone: &VertexCone<T>, tol: &T) -> Result<FacetCone<T>, ConeError> {
    let n = cone.dim();
    let rank = cone.matrix().rank(tol);
    if rank < n {
        return Err(ConeError::DegenerateCone { rank, dim: n });
    }
    let dual = FacetCone::inequalities(cone.matrix().transpose())?;
    let outcome = convert_facets(&dual, &DdOptions { tol: tol.clone(), reduce: true })?;
    if !outcome.implicit_equalities.is_empty() {
        // some nonnegative combination of generators vanishes: a line lies in the cone
        return Err(ConeError::NotPointed { rank: n - 1, dim: n });
    }
    FacetCone::inequalities(DenseMatrix::from_rows(&outcome.pair.vertex.rays())?)
}

/// Outcome of the conic independence test.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicIndependence<T> {
    pub independent: bool,
    /// `λ ≥ 0`, `Σλ = 1`, `Aᵀλ ≈ 0` when the rows are dependent.
    pub witness: Option<Vec<T>>,
}

/// Decides whether `Aᵀλ = 0, Σλ = 1, λ ≥ 0` is infeasible, by minimising
/// the residual of that system with NNLS.
pub fn conically_independent_rows<T: Real>(a: &DenseMatrix<T>, tol: T) -> ConicIndependence<T> {
    let (m, n) = (a.rows(), a.cols());
    // design is [Aᵀ; 1ᵀ] scaled row-wise so every row of A has unit length
    let scales: Vec<T> = (0..m)
        .map(|i| {
            let s = T::vector_scale(a.row(i));
            if s > T::zero() { s } else { T::one() }
        })
        .collect();
    let mut data = Vec::with_capacity((n + 1) * m);
    for j in 0..n {
        for i in 0..m {
            data.push(*a.get(i, j) / scales[i]);
        }
    }
    data.extend(std::iter::repeat_n(T::one(), m));
    let design = DenseMatrix::new(n + 1, m, data).expect("well-formed design");
    let mut response = vec![T::zero(); n + 1];
    response[n] = T::one();
    let problem = NnlsProblem::new(design, response, None).expect("consistent shapes");
    let sol = solve_nnls(&problem, &NnlsOptions { tol, max_iter: Some(10 * m + 10) });
    if sol.residual_norm <= tol.sqrt() {
        let mut lambda: Vec<T> = sol.coefficients.iter().zip(&scales).map(|(l, s)| *l / *s).collect();
        let total = lambda.iter().fold(T::zero(), |acc, v| acc + *v);
        lambda.iter_mut().for_each(|v| *v = *v / total);
        ConicIndependence { independent: false, witness: Some(lambda) }
    } else {
        ConicIndependence { independent: true, witness: None }
    }
}

/// Everything [`verify_dd_pair`] found wrong with a pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DdReport {
    /// `(row, ray, a_i·δ_j)` with the value below `−tol`.
    pub negative_entries: Vec<(usize, usize, f64)>,
    /// Rays whose active rows do not have rank `n − 1`.
    pub non_extreme_rays: Vec<usize>,
    /// Rays that are nonnegative combinations of the others.
    pub redundant_rays: Vec<usize>,
    /// Inequality rows that do not define a facet of the generated cone.
    pub redundant_rows: Vec<usize>,
}

impl DdReport {
    pub fn is_clean(&self) -> bool {
        self.negative_entries.is_empty()
            && self.non_extreme_rays.is_empty()
            && self.redundant_rays.is_empty()
            && self.redundant_rows.is_empty()
    }

    pub fn violation_count(&self) -> usize {
        self.negative_entries.len()
            + self.non_extreme_rays.len()
            + self.redundant_rays.len()
            + self.redundant_rows.len()
    }
}

pub fn verify_dd_pair<T: Real>(pair: &DdPair<T>) -> DdReport {
    let tol = *pair.tolerance();
    let n = pair.dim();
    let a = pair.facet().matrix();
    let delta = pair.vertex().matrix();
    let d = pair.ray_count();
    let mut report = DdReport::default();

    for i in pair.facet().inequality_rows() {
        let scale = T::vector_scale(a.row(i));
        for j in 0..d {
            let v = dot(a.row(i), &delta.column(j));
            if v < -(tol * scale) {
                report.negative_entries.push((i, j, v.to_f64_lossy()));
            }
        }
    }
    for j in 0..d {
        let zs = pair.zero_bits(j).expect("index in range");
        if pair.row_rank(zs.ones()) + 1 != n {
            report.non_extreme_rays.push(j);
        }
    }
    if d > 1 {
        let redundancy_tol = (tol * T::from(1e3).unwrap()).max(T::from(1e-9).unwrap());
        for j in 0..d {
            let others: Vec<usize> = (0..d).filter(|&k| k != j).collect();
            let design = delta.select_cols(&others);
            let problem = NnlsProblem::new(design, delta.column(j), None).expect("shapes");
            let sol = solve_nnls(&problem, &NnlsOptions { tol, max_iter: Some(10 * d) });
            if sol.residual_norm <= redundancy_tol {
                report.redundant_rays.push(j);
            }
        }
    }
    let mut seen: Vec<FixedBitSet> = Vec::new();
    for i in pair.facet().inequality_rows() {
        let mut on = FixedBitSet::with_capacity(d);
        let mut vecs = Vec::new();
        for j in 0..d {
            if pair.zero_bits(j).expect("index").contains(i) {
                on.insert(j);
                vecs.push(delta.column(j));
            }
        }
        // facet of the generated cone: active rays span n − 1 dimensions
        // beyond the lineality imposed by the equality rows
        let eq_rank = pair.row_rank(pair.facet().linearity().iter().copied());
        let needed = n - eq_rank;
        let r = rank_of_rows(&vecs, n, &tol);
        if r + 1 < needed || seen.contains(&on) {
            report.redundant_rows.push(i);
        } else {
            seen.push(on);
        }
    }
    report
}

/// Euclidean projection `Δb̂` with `b̂ = argmin_{b ≥ 0} ‖y − Δb‖`.
pub fn project_onto_cone<T: Real>(y: &[T], cone: &VertexCone<T>) -> Result<Vec<T>, ConeError> {
    Ok(project_with_coefficients(y, cone)?.0)
}

/// Projection together with the conic coefficients that produced it.
pub fn project_with_coefficients<T: Real>(y: &[T], cone: &VertexCone<T>) -> Result<(Vec<T>, Vec<T>), ConeError> {
    if y.len() != cone.dim() {
        return Err(ConeError::ShapeMismatch(format!(
            "point has length {} but cone lives in dimension {}",
            y.len(),
            cone.dim()
        )));
    }
    let problem = NnlsProblem::new(cone.matrix().clone(), y.to_vec(), None)
        .map_err(|e| ConeError::ShapeMismatch(e.to_string()))?;
    let opts = NnlsOptions { tol: T::from(1e-12).unwrap(), max_iter: Some(10 * cone.ray_count() + 10) };
    let sol = solve_nnls(&problem, &opts);
    Ok((cone.combine(&sol.coefficients), sol.coefficients))
}

/// `{θ : (A·B)θ ≥ 0}` after checking it is again a proper cone.
pub fn transform_cone<T: Real>(cone: &FacetCone<T>, basis: &DenseMatrix<T>) -> Result<FacetCone<T>, ConeError> {
    if basis.rows() != cone.dim() {
        return Err(ConeError::ShapeMismatch(format!(
            "basis has {} rows, cone dimension is {}",
            basis.rows(),
            cone.dim()
        )));
    }
    if basis.cols() > basis.rows() {
        return Err(ConeError::ShapeMismatch("basis must have at most as many columns as rows".into()));
    }
    let tol = T::default_tolerance();
    let transformed = cone.matrix().matmul(basis)?;
    if basis.cols() == basis.rows() {
        if basis.rank(&tol) < basis.cols() {
            return Err(ConeError::BasisConditionViolated(TransformCondition::FullColumnRank));
        }
    } else {
        if transformed.rank(&tol) < basis.cols() {
            return Err(ConeError::BasisConditionViolated(TransformCondition::FullColumnRank));
        }
        let ineq = transformed.select_rows(&cone.inequality_rows());
        if !conically_independent_rows(&ineq, tol).independent {
            return Err(ConeError::BasisConditionViolated(TransformCondition::ConicallyIndependentRows));
        }
    }
    FacetCone::new(transformed, cone.linearity().iter().copied())
}

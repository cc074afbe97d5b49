//! Mixed-effect functional model `y_i = f + B η_i + e_i`,
//! `η_i ~ N(0, Σ)`, `e_i ~ N(0, σ² I)`, on a balanced panel.
//!
//! The restricted fit alternates between the conditional distribution of
//! each `η_i` given the current `f`, the constrained EM for `f` on the
//! pooled residuals `ȳ − ū`, and closed-form updates of `Σ` and `σ²`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::adjacency::{build_adjacency_graph, enumerate_maximal_cliques, AdjacencyError, CliqueSet};
use crate::bspline::{bspline_basis, BasisError};
use crate::cone::{transform_cone, ConeError, DdPair, FacetCone};
use crate::em::{m_step_sigma2, EmConfig, EmError, EmFit, EmSolver, EmState};
use crate::linalg::DenseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixedError {
    #[error("subject {subject} has {got} values, expected {expected}")]
    Unbalanced { subject: String, got: usize, expected: usize },
    #[error("subject {subject} has a duplicate or out-of-range time index {time}")]
    BadTime { subject: String, time: usize },
    #[error("dataset has no subjects")]
    Empty,
    #[error("cannot split {subjects} subjects into {train} train and {test} test")]
    BadSplit { train: usize, test: usize, subjects: usize },
    #[error("marginal covariance is not positive definite")]
    SingularMarginal,
    #[error("cone dimension {cone} does not match {n} time points")]
    DimensionMismatch { cone: usize, n: usize },
    #[error("non-finite value for subject {subject}")]
    NonFinite { subject: String },
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Adjacency(#[from] AdjacencyError),
    #[error(transparent)]
    Em(#[from] EmError),
}

/// Complete balanced panel: `values[i][j]` is subject `i` at time `j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LongDataset {
    subjects: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl LongDataset {
    pub fn from_matrix(subjects: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self, MixedError> {
        if values.is_empty() || subjects.len() != values.len() {
            return Err(MixedError::Empty);
        }
        let n = values[0].len();
        for (s, v) in subjects.iter().zip(&values) {
            if v.len() != n {
                return Err(MixedError::Unbalanced { subject: s.clone(), got: v.len(), expected: n });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(MixedError::NonFinite { subject: s.clone() });
            }
        }
        Ok(Self { subjects, values })
    }

    /// Builds the panel from `(subject, time, value)` records with 1-based
    /// times. Subjects keep their order of first appearance.
    pub fn from_records(records: &[(String, usize, f64)]) -> Result<Self, MixedError> {
        let mut order: Vec<String> = Vec::new();
        let mut rows: std::collections::HashMap<String, Vec<(usize, f64)>> = Default::default();
        for (s, t, v) in records {
            if !rows.contains_key(s) {
                order.push(s.clone());
            }
            rows.entry(s.clone()).or_default().push((*t, *v));
        }
        let n = rows.values().map(|r| r.len()).max().ok_or(MixedError::Empty)?;
        let mut values = Vec::with_capacity(order.len());
        for s in &order {
            let r = &rows[s];
            if r.len() != n {
                return Err(MixedError::Unbalanced { subject: s.clone(), got: r.len(), expected: n });
            }
            let mut v = vec![f64::NAN; n];
            for &(t, x) in r {
                if t < 1 || t > n || !v[t - 1].is_nan() {
                    return Err(MixedError::BadTime { subject: s.clone(), time: t });
                }
                v[t - 1] = x;
            }
            values.push(v);
        }
        Self::from_matrix(order, values)
    }

    pub fn n(&self) -> usize {
        self.values[0].len()
    }

    pub fn subject_count(&self) -> usize {
        self.values.len()
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            subjects: idx.iter().map(|&i| self.subjects[i].clone()).collect(),
            values: idx.iter().map(|&i| self.values[i].clone()).collect(),
        }
    }

    pub fn mean_curve(&self) -> Vec<f64> {
        let n = self.n();
        let mut m = vec![0.0; n];
        for v in &self.values {
            for (a, b) in m.iter_mut().zip(v) {
                *a += b;
            }
        }
        let nn = self.values.len() as f64;
        m.iter_mut().for_each(|a| *a /= nn);
        m
    }

    /// Seeded shuffle of the subjects into disjoint train and test panels.
    pub fn split(&self, train: usize, test: usize, seed: u64) -> Result<(Self, Self), MixedError> {
        if train == 0 || test == 0 || train + test > self.subject_count() {
            return Err(MixedError::BadSplit { train, test, subjects: self.subject_count() });
        }
        let mut idx: Vec<usize> = (0..self.subject_count()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok((self.subset(&idx[..train]), self.subset(&idx[train..train + test])))
    }

    /// `(subject, time, value)` records with 1-based times.
    pub fn records(&self) -> Vec<(String, usize, f64)> {
        let mut out = Vec::with_capacity(self.values.len() * self.n());
        for (s, v) in self.subjects.iter().zip(&self.values) {
            out.extend(v.iter().enumerate().map(|(j, x)| (s.clone(), j + 1, *x)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedModel {
    pub f_hat: Vec<f64>,
    /// `K × K` random-effect covariance.
    pub sigma: DenseMatrix<f64>,
    pub sigma2: f64,
    /// `n × K` random-effect basis.
    pub basis: DenseMatrix<f64>,
}

impl MixedModel {
    fn marginal_covariance(&self) -> DMatrix<f64> {
        let b = self.basis.to_nalgebra();
        let s = self.sigma.to_nalgebra();
        let mut v = &b * s * b.transpose();
        for i in 0..v.nrows() {
            v[(i, i)] += self.sigma2;
        }
        v
    }

    fn factor(&self) -> Result<Cholesky<f64, nalgebra::Dyn>, MixedError> {
        Cholesky::new(self.marginal_covariance()).ok_or(MixedError::SingularMarginal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedConfig {
    pub em: EmConfig,
    pub max_outer: usize,
    pub outer_tol: f64,
    /// EM iterations per outer step.
    pub inner_iter: usize,
    /// Random-effect basis size; `None` means `n`.
    pub k: Option<usize>,
    /// Spline basis size for `f`; `None` means `n`.
    pub j: Option<usize>,
    pub degree: usize,
}

impl MixedConfig {
    pub fn new(em: EmConfig) -> Self {
        Self { em, max_outer: 200, outer_tol: 1e-5, inner_iter: 10, k: None, j: None, degree: 3 }
    }
}

#[derive(Debug, Clone)]
pub struct MixedFit {
    pub model: MixedModel,
    /// Final inner EM fit (restricted models only).
    pub em: Option<EmFit>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Smallest eigenvalue of each `Σ` update before clipping.
    pub sigma_min_eigenvalues: Vec<f64>,
}

/// Conditional mean `u_i = B E[η_i | y_i]`, the mean of `η_i`, and its
/// covariance.
pub fn random_effect_posterior(
    y_i: &[f64],
    f_hat: &[f64],
    model: &MixedModel,
) -> Result<(Vec<f64>, Vec<f64>, DenseMatrix<f64>), MixedError> {
    let chol = model.factor()?;
    let post = Posterior::new(model, &chol);
    let r = DVector::from_iterator(y_i.len(), y_i.iter().zip(f_hat).map(|(y, f)| y - f));
    let m = &post.gain * r;
    let u = &post.b * &m;
    Ok((u.iter().copied().collect(), m.iter().copied().collect(), DenseMatrix::from_nalgebra(&post.cov)))
}

struct Posterior {
    b: DMatrix<f64>,
    /// `ΣBᵀV⁻¹`
    gain: DMatrix<f64>,
    /// `Σ − ΣBᵀV⁻¹BΣ`
    cov: DMatrix<f64>,
}

impl Posterior {
    fn new(model: &MixedModel, chol: &Cholesky<f64, nalgebra::Dyn>) -> Self {
        let b = model.basis.to_nalgebra();
        let s = model.sigma.to_nalgebra();
        let bs = &b * &s; // BΣ
        let gain = chol.solve(&bs).transpose(); // (V⁻¹BΣ)ᵀ = ΣBᵀV⁻¹
        let cov = &s - &gain * &bs;
        let cov = (&cov + cov.transpose()) * 0.5;
        Self { b, gain, cov }
    }
}

/// `Σ = (1/N) Σ_i (C_i + m_i m_iᵀ)`, symmetrised with negative eigenvalues
/// set to zero. Also returns the smallest eigenvalue before clipping.
pub fn update_sigma_matrix(eta_means: &[Vec<f64>], eta_covs: &[DenseMatrix<f64>]) -> (DenseMatrix<f64>, f64) {
    let k = eta_means.first().map_or(0, Vec::len);
    let mut acc = DMatrix::<f64>::zeros(k, k);
    for c in eta_covs {
        acc += c.to_nalgebra();
    }
    if eta_covs.len() == 1 && eta_means.len() > 1 {
        acc *= eta_means.len() as f64;
    }
    for m in eta_means {
        let v = DVector::from_column_slice(m);
        acc += &v * v.transpose();
    }
    acc /= eta_means.len() as f64;
    clip_psd(acc)
}

fn clip_psd(m: DMatrix<f64>) -> (DenseMatrix<f64>, f64) {
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.min();
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let out = (&out + out.transpose()) * 0.5;
    (DenseMatrix::from_nalgebra(&out), min)
}

/// `Σ_i log N(y_i; f, BΣBᵀ + σ²I)`.
pub fn marginal_loglik(data: &LongDataset, model: &MixedModel) -> Result<f64, MixedError> {
    let n = data.n();
    if model.f_hat.len() != n {
        return Err(MixedError::DimensionMismatch { cone: model.f_hat.len(), n });
    }
    let chol = model.factor()?;
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().take(n).map(|d| d.ln()).sum::<f64>();
    let l = chol.l();
    let c = -0.5 * (n as f64) * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet;
    let mut total = 0.0;
    for y in data.values() {
        let r = DVector::from_iterator(n, y.iter().zip(&model.f_hat).map(|(a, b)| a - b));
        let z = l.solve_lower_triangular(&r).expect("nonsingular factor");
        total += c - 0.5 * z.norm_squared();
    }
    Ok(total)
}

/// Constrained design for the mean curve: the cone's rays (optionally
/// after mapping through a spline basis) and their maximal cliques.
#[derive(Debug, Clone)]
pub struct RestrictedDesign {
    design: DenseMatrix<f64>,
    cliques: CliqueSet,
}

impl RestrictedDesign {
    /// `X = Δ` for the cone itself, or `X = B Δ₁` with `Δ₁` the rays of
    /// `{θ : ABθ ≥ 0}` when `spline` is given.
    pub fn new(cone: &FacetCone<f64>, spline: Option<&DenseMatrix<f64>>) -> Result<Self, MixedError> {
        let (target, map) = match spline {
            Some(b) => (transform_cone(cone, b)?, Some(b)),
            None => (cone.clone(), None),
        };
        let pair = DdPair::from_facets(&target, &Default::default())?;
        let graph = build_adjacency_graph(&pair)?;
        let cliques = enumerate_maximal_cliques(&graph)?;
        let rays = pair.vertex().matrix().clone();
        let design = match map {
            Some(b) => b.matmul(&rays).map_err(ConeError::from)?,
            None => rays,
        };
        Ok(Self { design, cliques })
    }

    pub fn from_parts(design: DenseMatrix<f64>, cliques: CliqueSet) -> Self {
        Self { design, cliques }
    }

    pub fn design(&self) -> &DenseMatrix<f64> {
        &self.design
    }

    pub fn cliques(&self) -> &CliqueSet {
        &self.cliques
    }

    /// Pooled-regression solver: design `√N X` for `N` subjects.
    pub fn solver(&self, subjects: usize) -> Result<EmSolver, MixedError> {
        let s = (subjects as f64).sqrt();
        Ok(EmSolver::new(&self.design.map(|v| v * s), self.cliques.clone())?)
    }
}

enum MeanStep<'a> {
    Restricted { solver: &'a EmSolver, config: &'a EmConfig, inner_iter: usize },
    /// Least squares on `span(B_J)`, or the raw mean when `None`.
    Unrestricted { projection: Option<DMatrix<f64>> },
}

fn random_effect_basis(n: usize, config: &MixedConfig) -> Result<DenseMatrix<f64>, MixedError> {
    Ok(bspline_basis(n, config.k.unwrap_or(n), config.degree)?.matrix().clone())
}

fn initial_model(data: &LongDataset, basis: DenseMatrix<f64>, f: Vec<f64>) -> MixedModel {
    let n = data.n();
    let k = basis.cols();
    let b = basis.to_nalgebra();
    let pinv = b.clone().pseudo_inverse(1e-12).expect("pseudo-inverse");
    let mut cov = DMatrix::<f64>::zeros(k, k);
    let mut rss = 0.0;
    for y in data.values() {
        let r = DVector::from_iterator(n, y.iter().zip(&f).map(|(a, c)| a - c));
        let eta = &pinv * &r;
        rss += (&r - &b * &eta).norm_squared() + r.norm_squared();
        cov += &eta * eta.transpose();
    }
    let nn = data.subject_count() as f64;
    cov *= 0.5 / nn;
    let sigma2 = (0.5 * rss / (nn * n as f64)).max(1e-6);
    MixedModel { f_hat: f, sigma: DenseMatrix::from_nalgebra(&cov), sigma2, basis }
}

fn run(data: &LongDataset, basis: DenseMatrix<f64>, step: MeanStep<'_>, config: &MixedConfig) -> Result<MixedFit, MixedError> {
    let n = data.n();
    let nn = data.subject_count();
    let ybar = data.mean_curve();
    let hyper = &config.em.hyper;

    let mut em_state: Option<EmState> = None;
    let mut last_em: Option<EmFit> = None;
    let mut mean_step = |resid: &[f64], sigma2: f64, first: bool| -> Result<Vec<f64>, MixedError> {
        match &step {
            MeanStep::Restricted { solver, config: em_config, inner_iter } => {
                let s = (nn as f64).sqrt();
                let response: Vec<f64> = resid.iter().map(|v| v * s).collect();
                let cfg = EmConfig {
                    sigma2_fixed: Some(sigma2),
                    max_iter: if first { em_config.max_iter } else { *inner_iter },
                    ..(*em_config).clone()
                };
                let fit = solver.fit_from(&response, &cfg, em_state.as_ref())?;
                let f = solver.design().mul_vec(&fit.state.beta).iter().map(|v| v / s).collect();
                em_state = Some(fit.state.clone());
                last_em = Some(fit);
                Ok(f)
            }
            MeanStep::Unrestricted { projection } => Ok(match projection {
                Some(p) => (p * DVector::from_column_slice(resid)).iter().copied().collect(),
                None => resid.to_vec(),
            }),
        }
    };

    // start from the fit that ignores random effects
    let mut model = initial_model(data, basis, ybar.clone());
    let f0 = mean_step(&ybar, model.sigma2, true)?;
    model = initial_model(data, model.basis.clone(), f0);

    let mut converged = false;
    let mut outer = 0;
    let mut min_eigs = Vec::new();
    while outer < config.max_outer {
        outer += 1;
        let chol = model.factor()?;
        let post = Posterior::new(&model, &chol);
        let mut means = Vec::with_capacity(nn);
        let mut pooled = vec![0.0; n];
        let mut expected_rss = 0.0;
        let bcbt = &post.b * &post.cov * post.b.transpose();
        for y in data.values() {
            let r = DVector::from_iterator(n, y.iter().zip(&model.f_hat).map(|(a, b)| a - b));
            let m = &post.gain * &r;
            let u = &post.b * &m;
            for j in 0..n {
                pooled[j] += (y[j] - u[j]) / nn as f64;
            }
            means.push(m.iter().copied().collect::<Vec<f64>>());
            expected_rss += (&r - &u).norm_squared();
        }
        expected_rss += nn as f64 * bcbt.trace();

        let f_new = mean_step(&pooled, model.sigma2, false)?;
        let cov = DenseMatrix::from_nalgebra(&post.cov);
        let (sigma, min_eig) = update_sigma_matrix(&means, std::slice::from_ref(&cov));
        min_eigs.push(min_eig);
        let sigma2 = m_step_sigma2(expected_rss, nn * n, hyper)?;

        let change: f64 = f_new.iter().zip(&model.f_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let size: f64 = model.f_hat.iter().map(|a| a * a).sum::<f64>().sqrt();
        let v_old = model.marginal_covariance();
        model = MixedModel { f_hat: f_new, sigma, sigma2, basis: model.basis };
        let v_new = model.marginal_covariance();
        let v_change = (&v_new - &v_old).norm() / v_old.norm().max(1e-12);
        if change / size.max(1e-12) < config.outer_tol && v_change < config.outer_tol {
            converged = true;
            break;
        }
    }
    Ok(MixedFit { model, em: last_em, outer_iterations: outer, converged, sigma_min_eigenvalues: min_eigs })
}

/// Restricted fit with the constraint set `cone` on the mean curve.
pub fn fit_mixed(data: &LongDataset, cone: &FacetCone<f64>, use_spline: bool, config: &MixedConfig) -> Result<MixedFit, MixedError> {
    let n = data.n();
    if cone.dim() != n {
        return Err(MixedError::DimensionMismatch { cone: cone.dim(), n });
    }
    let spline = if use_spline {
        Some(bspline_basis(n, config.j.unwrap_or(n), config.degree)?.matrix().clone())
    } else {
        None
    };
    let design = RestrictedDesign::new(cone, spline.as_ref())?;
    fit_mixed_with(data, &design, config)
}

/// Restricted fit against a precomputed design.
pub fn fit_mixed_with(data: &LongDataset, design: &RestrictedDesign, config: &MixedConfig) -> Result<MixedFit, MixedError> {
    let n = data.n();
    if design.design().rows() != n {
        return Err(MixedError::DimensionMismatch { cone: design.design().rows(), n });
    }
    let solver = design.solver(data.subject_count())?;
    let step = MeanStep::Restricted { solver: &solver, config: &config.em, inner_iter: config.inner_iter };
    run(data, random_effect_basis(n, config)?, step, config)
}

/// Same scheme with the mean step replaced by ordinary least squares.
pub fn fit_unrestricted(data: &LongDataset, use_spline: bool, config: &MixedConfig) -> Result<MixedFit, MixedError> {
    let n = data.n();
    let projection = if use_spline {
        let b = bspline_basis(n, config.j.unwrap_or(n), config.degree)?.matrix().to_nalgebra();
        let pinv = b.clone().pseudo_inverse(1e-12).expect("pseudo-inverse");
        Some(&b * pinv)
    } else {
        None
    };
    run(data, random_effect_basis(n, config)?, MeanStep::Unrestricted { projection }, config)
}

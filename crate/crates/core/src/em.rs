//! Posterior-mode EM for `y = Xβ + e`, `β ≥ 0`, under the clique
//! spike-and-slab prior.
//!
//! Each iteration computes slab probabilities `p*` (E-step), a ridge-NNLS
//! update of `β`, a closed-form update of `σ²`, and optionally the clique
//! weights `γ` and inclusion probabilities `θ`.

use thiserror::Error;

use crate::adjacency::CliqueSet;
use crate::linalg::DenseMatrix;
use crate::nnls::{GramSystem, NnlsOptions, NnlsProblem};
use crate::prior::{log_mixture, slab_probability, PriorError, SpikeSlabHyper};

const THETA_EPS: f64 = 1e-6;
const SIGMA2_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmError {
    #[error("response has length {got}, design has {expected} rows")]
    ResponseLength { got: usize, expected: usize },
    #[error("clique set refers to ray {index} but the design has {cols} columns")]
    CliqueOutOfRange { index: usize, cols: usize },
    #[error("clique set is empty")]
    EmptyCliqueSet,
    #[error("n_obs + 2(alpha_ig - 1) = {0} is not positive")]
    NonPositiveDenominator(f64),
    #[error("non-finite response value at {0}")]
    NonFinite(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub hyper: SpikeSlabHyper,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub clamp_theta: bool,
    pub freeze_hyper: bool,
    /// Hold `σ²` at this value instead of updating it.
    pub sigma2_fixed: Option<f64>,
    pub nnls_tol: f64,
}

impl EmConfig {
    pub fn new(hyper: SpikeSlabHyper) -> Self {
        Self {
            hyper,
            max_iter: 500,
            rel_tol: 1e-6,
            clamp_theta: true,
            freeze_hyper: false,
            sigma2_fixed: None,
            nnls_tol: 1e-10,
        }
    }

    fn validate(&self) -> Result<(), EmError> {
        if self.max_iter == 0 {
            return Err(EmError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(EmError::InvalidConfig("rel_tol must be positive".into()));
        }
        if let Some(s) = self.sigma2_fixed {
            if !(s > 0.0 && s.is_finite()) {
                return Err(EmError::InvalidConfig(format!("fixed sigma2 = {s} must be positive")));
            }
        }
        self.hyper.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    /// `p*_{w,i}` for each clique `w`, in clique member order.
    pub p_star: Vec<Vec<f64>>,
    pub p_star_sums: Vec<f64>,
    pub gamma: Vec<f64>,
    pub theta: Vec<f64>,
    pub log_posterior: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub state: EmState,
    pub mu_hat: Vec<f64>,
    pub converged: bool,
    pub trace: Vec<f64>,
    /// Number of `θ` updates that had to be clamped into `[ε, 1 − ε]`.
    pub theta_clamps: usize,
}

/// `p*_{w,i} = θγφ₁(β_i) / (θγφ₁(β_i) + (1 − θγ)φ₀(β_i))`
pub fn e_step(beta: &[f64], hyper: &SpikeSlabHyper, cliques: &CliqueSet) -> Vec<Vec<f64>> {
    cliques
        .cliques()
        .iter()
        .enumerate()
        .map(|(w, c)| {
            let pi = hyper.theta[w] * hyper.gamma[w];
            c.iter().map(|&i| slab_probability(beta[i], pi, hyper.v0, hyper.v1)).collect()
        })
        .collect()
}

/// Ridge weights `σ² Σ_{w∋i} (p*_{w,i}/V₁ + (1 − p*_{w,i})/V₀)`.
pub fn ridge_weights(p_star: &[Vec<f64>], cliques: &CliqueSet, hyper: &SpikeSlabHyper, sigma2: f64, d: usize) -> Vec<f64> {
    let mut r = vec![0.0; d];
    for (c, ps) in cliques.cliques().iter().zip(p_star) {
        for (&i, &p) in c.iter().zip(ps) {
            r[i] += sigma2 * (p / hyper.v1 + (1.0 - p) / hyper.v0);
        }
    }
    r
}

pub fn m_step_beta(
    y: &[f64],
    x: &DenseMatrix<f64>,
    sigma2: f64,
    p_star: &[Vec<f64>],
    cliques: &CliqueSet,
    hyper: &SpikeSlabHyper,
) -> Vec<f64> {
    let ridge = ridge_weights(p_star, cliques, hyper, sigma2, x.cols());
    let problem = NnlsProblem::new(x.clone(), y.to_vec(), Some(ridge)).expect("consistent shapes");
    crate::nnls::solve_nnls(&problem, &NnlsOptions::default()).coefficients
}

/// `σ² = (rss + 2β_ig) / (n + 2(α_ig − 1))`, floored at 1e-12.
pub fn m_step_sigma2(rss: f64, n_obs: usize, hyper: &SpikeSlabHyper) -> Result<f64, EmError> {
    let denom = n_obs as f64 + 2.0 * (hyper.alpha_ig - 1.0);
    if denom <= 0.0 {
        return Err(EmError::NonPositiveDenominator(denom));
    }
    Ok(((rss + 2.0 * hyper.beta_ig) / denom).max(SIGMA2_FLOOR))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperUpdate {
    pub gamma: Vec<f64>,
    pub theta: Vec<f64>,
    /// Cliques whose `θ` fell outside `[ε, 1 − ε]` and was clamped.
    pub clamped: Vec<usize>,
}

/// `γ_w = p*_w / Σ_k p*_k`, `θ_w = p*_w / γ_w`.
pub fn update_hyper(p_star: &[Vec<f64>], clamp_theta: bool) -> HyperUpdate {
    let sums: Vec<f64> = p_star.iter().map(|p| p.iter().sum()).collect();
    let total: f64 = sums.iter().sum();
    let k = sums.len();
    let gamma: Vec<f64> = if total < 1e-12 {
        vec![1.0 / k as f64; k]
    } else {
        sums.iter().map(|s| s / total).collect()
    };
    let mut clamped = Vec::new();
    let theta = sums
        .iter()
        .zip(&gamma)
        .enumerate()
        .map(|(w, (s, g))| {
            let t = if *g > 0.0 { s / g } else { 0.0 };
            if clamp_theta && !(THETA_EPS..=1.0 - THETA_EPS).contains(&t) {
                clamped.push(w);
                t.clamp(THETA_EPS, 1.0 - THETA_EPS)
            } else {
                t
            }
        })
        .collect();
    HyperUpdate { gamma, theta, clamped }
}

/// Log likelihood plus log prior terms, up to constants:
/// `−(n/2)log σ² − rss/2σ² + Σ_w Σ_{i∈w} log mixture(β_i) + (α − 1)log σ⁻² − β_ig/σ²`.
pub fn log_posterior(rss: f64, n_obs: usize, beta: &[f64], sigma2: f64, cliques: &CliqueSet, hyper: &SpikeSlabHyper) -> f64 {
    let mut lp = -0.5 * n_obs as f64 * sigma2.ln() - 0.5 * rss / sigma2;
    for (w, c) in cliques.cliques().iter().enumerate() {
        let pi = hyper.theta[w] * hyper.gamma[w];
        lp += c.iter().map(|&i| log_mixture(beta[i], pi, hyper.v0, hyper.v1)).sum::<f64>();
    }
    lp - (hyper.alpha_ig - 1.0) * sigma2.ln() - hyper.beta_ig / sigma2
}

/// EM against a fixed design; the Gram matrix is computed once and reused
/// across fits.
#[derive(Debug, Clone)]
pub struct EmSolver {
    gram: GramSystem<f64>,
    cliques: CliqueSet,
}

impl EmSolver {
    pub fn new(design: &DenseMatrix<f64>, cliques: CliqueSet) -> Result<Self, EmError> {
        if cliques.is_empty() {
            return Err(EmError::EmptyCliqueSet);
        }
        let cols = design.cols();
        if let Some(&index) = cliques.cliques().iter().flatten().find(|&&i| i >= cols) {
            return Err(EmError::CliqueOutOfRange { index, cols });
        }
        Ok(Self { gram: GramSystem::new(design), cliques })
    }

    pub fn design(&self) -> &DenseMatrix<f64> {
        self.gram.design()
    }

    pub fn cliques(&self) -> &CliqueSet {
        &self.cliques
    }

    fn rss(&self, y: &[f64], beta: &[f64]) -> f64 {
        let fitted = self.design().mul_vec(beta);
        y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn fit(&self, y: &[f64], config: &EmConfig) -> Result<EmFit, EmError> {
        self.fit_from(y, config, None)
    }

    /// Runs EM starting from `init` (its `β`, `σ²`, `γ`, `θ`) when given.
    pub fn fit_from(&self, y: &[f64], config: &EmConfig, init: Option<&EmState>) -> Result<EmFit, EmError> {
        let x = self.design();
        if y.len() != x.rows() {
            return Err(EmError::ResponseLength { got: y.len(), expected: x.rows() });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(EmError::NonFinite(i));
        }
        let mut hyper = config.hyper.clone();
        if hyper.gamma.is_empty() {
            hyper = hyper.resized(self.cliques.len());
        }
        config.validate()?;
        hyper.validate()?;
        if hyper.cliques() != self.cliques.len() {
            return Err(EmError::InvalidConfig(format!(
                "hyperparameters describe {} cliques, graph has {}",
                hyper.cliques(),
                self.cliques.len()
            )));
        }
        let n_obs = y.len();
        let d = x.cols();
        let nnls_opts = NnlsOptions { tol: config.nnls_tol, max_iter: Some(10 * d) };

        let (mut beta, mut sigma2) = match init {
            Some(s) => {
                if !config.freeze_hyper {
                    hyper.gamma = s.gamma.clone();
                    hyper.theta = s.theta.clone();
                }
                (s.beta.clone(), s.sigma2)
            }
            None => {
                let b = self.gram.solve(y, None, &nnls_opts).coefficients;
                let s2 = m_step_sigma2(self.rss(y, &b), n_obs, &hyper)?;
                (b, s2)
            }
        };
        if let Some(s) = config.sigma2_fixed {
            sigma2 = s;
        }

        let mut rss = self.rss(y, &beta);
        let mut lp = log_posterior(rss, n_obs, &beta, sigma2, &self.cliques, &hyper);
        let mut trace = vec![lp];
        let mut p_star = e_step(&beta, &hyper, &self.cliques);
        let mut converged = false;
        let mut theta_clamps = 0;
        let mut iteration = 0;

        while iteration < config.max_iter {
            iteration += 1;
            p_star = e_step(&beta, &hyper, &self.cliques);
            let ridge = ridge_weights(&p_star, &self.cliques, &hyper, sigma2, d);
            let new_beta = self.gram.solve_from(y, Some(&ridge), &nnls_opts, Some(&beta)).coefficients;
            rss = self.rss(y, &new_beta);
            if config.sigma2_fixed.is_none() {
                sigma2 = m_step_sigma2(rss, n_obs, &hyper)?;
            }
            if !config.freeze_hyper {
                let upd = update_hyper(&e_step(&new_beta, &hyper, &self.cliques), config.clamp_theta);
                theta_clamps += upd.clamped.len();
                hyper.gamma = upd.gamma;
                hyper.theta = upd.theta;
            }
            let new_lp = log_posterior(rss, n_obs, &new_beta, sigma2, &self.cliques, &hyper);
            trace.push(new_lp);

            let step: f64 = new_beta.iter().zip(&beta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let size: f64 = new_beta.iter().map(|a| a * a).sum::<f64>().sqrt();
            let beta_rel = step / size.max(1e-12);
            let lp_rel = (new_lp - lp).abs() / (lp.abs() + 1e-12);
            beta = new_beta;
            lp = new_lp;
            if beta_rel < config.rel_tol && lp_rel < config.rel_tol {
                converged = true;
                break;
            }
        }

        let p_star_sums = p_star.iter().map(|p| p.iter().sum()).collect();
        let mu_hat = x.mul_vec(&beta);
        Ok(EmFit {
            state: EmState {
                beta,
                sigma2,
                p_star,
                p_star_sums,
                gamma: hyper.gamma,
                theta: hyper.theta,
                log_posterior: lp,
                iteration,
            },
            mu_hat,
            converged,
            trace,
            theta_clamps,
        })
    }
}

pub fn fit(y: &[f64], x: &DenseMatrix<f64>, cliques: &CliqueSet, config: &EmConfig) -> Result<EmFit, EmError> {
    EmSolver::new(x, cliques.clone())?.fit(y, config)
}

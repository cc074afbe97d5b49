//! Clique-structured spike-and-slab prior on conic coefficients.
//!
//! Generative form: pick a maximal clique `w ~ Categorical(γ)`, then for each
//! ray `i ∈ w` draw `I_{w,i} ~ Bernoulli(θ_w)` and
//! `b_i ~ Normal₊(0, V₁)` if `I_{w,i} = 1`, `Normal₊(0, V₀)` otherwise.
//! Rays outside the clique get `b_i = 0`.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjacency::{AdjacencyGraph, CliqueSet};
use crate::cone::DdPair;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("half-normal density evaluated at negative x = {0}")]
    DomainError(f64),
    #[error("clique set is empty")]
    EmptyCliqueSet,
    #[error("coefficient {index} is nonzero but outside the clique")]
    SupportViolation { index: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("clique index {index} out of range ({len} cliques)")]
    CliqueOutOfRange { index: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeSlabHyper {
    pub v0: f64,
    pub v1: f64,
    pub a: f64,
    pub b: f64,
    pub gamma: Vec<f64>,
    pub theta: Vec<f64>,
    pub alpha_ig: f64,
    pub beta_ig: f64,
    pub phi: f64,
}

impl SpikeSlabHyper {
    /// Defaults for `cliques` maximal cliques: `V₀ = 0.01`, `V₁ = 10`,
    /// `a = b = 1`, uniform `γ`, `θ = 0.5`, `φ = 0.05`, `α = β = 0.5`.
    pub fn new(cliques: usize) -> Self {
        Self {
            v0: 0.01,
            v1: 10.0,
            a: 1.0,
            b: 1.0,
            gamma: vec![1.0 / cliques.max(1) as f64; cliques],
            theta: vec![0.5; cliques],
            alpha_ig: 0.5,
            beta_ig: 0.5,
            phi: 0.05,
        }
    }

    pub fn cliques(&self) -> usize {
        self.gamma.len()
    }

    /// Replaces `γ` and `θ` with their defaults for a different clique count.
    pub fn resized(&self, cliques: usize) -> Self {
        let fresh = Self::new(cliques);
        Self { gamma: fresh.gamma, theta: fresh.theta, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), PriorError> {
        let bad = |m: String| Err(PriorError::InvalidHyper(m));
        if !(self.v0 > 0.0 && self.v1.is_finite() && self.v0 <= self.v1) {
            return bad(format!("need 0 < v0 <= v1, got v0 = {}, v1 = {}", self.v0, self.v1));
        }
        if !(self.a > 0.0 && self.b > 0.0) {
            return bad("Beta parameters must be positive".into());
        }
        if self.gamma.len() != self.theta.len() {
            return bad(format!("gamma has {} entries, theta {}", self.gamma.len(), self.theta.len()));
        }
        if self.gamma.iter().any(|g| !(0.0..=1.0).contains(g)) || (!self.gamma.is_empty() && (self.gamma.iter().sum::<f64>() - 1.0).abs() > 1e-12 * self.gamma.len().max(1) as f64) {
            return bad("gamma must be a probability vector".into());
        }
        if self.theta.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return bad("theta entries must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.phi) {
            return bad(format!("phi = {} outside [0, 1]", self.phi));
        }
        if !(self.alpha_ig > 0.0 && self.beta_ig >= 0.0) {
            return bad("need alpha_ig > 0 and beta_ig >= 0".into());
        }
        Ok(())
    }
}

/// `2 (2π v)^{-1/2} exp(−x²/2v)`, the half-normal density.
pub fn truncated_normal_density(x: f64, variance: f64) -> Result<f64, PriorError> {
    if x < 0.0 {
        return Err(PriorError::DomainError(x));
    }
    Ok(log_half_normal(x, variance).exp())
}

pub(crate) fn log_half_normal(x: f64, variance: f64) -> f64 {
    std::f64::consts::LN_2 - 0.5 * (2.0 * std::f64::consts::PI * variance).ln() - x * x / (2.0 * variance)
}

/// `log(π φ₁(x) + (1 − π) φ₀(x))`, evaluated stably.
pub(crate) fn log_mixture(x: f64, pi: f64, v0: f64, v1: f64) -> f64 {
    let l1 = pi.ln() + log_half_normal(x, v1);
    let l0 = (1.0 - pi).ln() + log_half_normal(x, v0);
    let m = l1.max(l0);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((l1 - m).exp() + (l0 - m).exp()).ln()
}

/// Posterior slab probability `π φ₁ / (π φ₁ + (1 − π) φ₀)`.
pub(crate) fn slab_probability(x: f64, pi: f64, v0: f64, v1: f64) -> f64 {
    let l1 = pi.ln() + log_half_normal(x, v1);
    let l0 = (1.0 - pi).ln() + log_half_normal(x, v0);
    if l1 == f64::NEG_INFINITY {
        return 0.0;
    }
    1.0 / (1.0 + (l0 - l1).exp())
}

fn half_normal<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z.abs() * variance.sqrt()
}

pub fn sample_clique<R: Rng + ?Sized>(hyper: &SpikeSlabHyper, cliques: &CliqueSet, rng: &mut R) -> Result<usize, PriorError> {
    if cliques.is_empty() {
        return Err(PriorError::EmptyCliqueSet);
    }
    if hyper.gamma.len() != cliques.len() {
        return Err(PriorError::InvalidHyper(format!(
            "gamma has {} entries for {} cliques",
            hyper.gamma.len(),
            cliques.len()
        )));
    }
    let dist = WeightedIndex::new(&hyper.gamma).map_err(|e| PriorError::InvalidHyper(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Indicators for the clique members (in clique order) and the full
/// length-`d` coefficient vector.
pub fn sample_b_given_clique<R: Rng + ?Sized>(
    hyper: &SpikeSlabHyper,
    theta: f64,
    clique: &[usize],
    d: usize,
    rng: &mut R,
) -> (Vec<bool>, Vec<f64>) {
    let mut b = vec![0.0; d];
    let mut indicators = Vec::with_capacity(clique.len());
    for &i in clique {
        let slab = rng.random_bool(theta.clamp(0.0, 1.0));
        b[i] = half_normal(if slab { hyper.v1 } else { hyper.v0 }, rng);
        indicators.push(slab);
    }
    (indicators, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorDraw {
    /// Chosen clique, or chosen centre ray for adjacency-set draws.
    pub clique_index: usize,
    /// Rays allowed to be nonzero, in the order `indicators` refers to.
    pub members: Vec<usize>,
    pub indicators: Vec<bool>,
    pub b: Vec<f64>,
    pub mu: Vec<f64>,
    /// The full-support mixture component was used.
    pub dense_flag: bool,
}

pub fn sample_prior_mu<R: Rng + ?Sized>(
    pair: &DdPair<f64>,
    cliques: &CliqueSet,
    hyper: &SpikeSlabHyper,
    rng: &mut R,
    use_mixture: bool,
) -> Result<PriorDraw, PriorError> {
    let d = pair.ray_count();
    let w = sample_clique(hyper, cliques, rng)?;
    let dense = use_mixture && rng.random_bool(hyper.phi);
    let (members, indicators, b) = if dense {
        let members: Vec<usize> = (0..d).collect();
        let b: Vec<f64> = (0..d).map(|_| half_normal(hyper.v1, rng)).collect();
        (members, vec![true; d], b)
    } else {
        let clique = cliques.get(w).expect("sampled index in range").to_vec();
        let (ind, b) = sample_b_given_clique(hyper, hyper.theta[w], &clique, d, rng);
        (clique, ind, b)
    };
    let mu = pair.vertex().combine(&b);
    Ok(PriorDraw { clique_index: w, members, indicators, b, mu, dense_flag: dense })
}

/// `Σ_{i∈w} log(θ_wγ_w φ₁(b_i) + (1 − θ_wγ_w) φ₀(b_i))`
pub fn log_prior_b(b: &[f64], w: usize, clique: &[usize], hyper: &SpikeSlabHyper) -> Result<f64, PriorError> {
    if w >= hyper.cliques() {
        return Err(PriorError::CliqueOutOfRange { index: w, len: hyper.cliques() });
    }
    for (i, &v) in b.iter().enumerate() {
        if v < 0.0 {
            return Err(PriorError::DomainError(v));
        }
        if v != 0.0 && !clique.contains(&i) {
            return Err(PriorError::SupportViolation { index: i });
        }
    }
    let pi = hyper.theta[w] * hyper.gamma[w];
    Ok(clique.iter().map(|&i| log_mixture(b[i], pi, hyper.v0, hyper.v1)).sum())
}

/// Draw supported on the closed neighbourhood of a uniformly chosen ray.
/// Inclusion probability is the mean of `hyper.theta` (0.5 if empty).
pub fn sample_adjacency_prior<R: Rng + ?Sized>(
    pair: &DdPair<f64>,
    graph: &AdjacencyGraph,
    hyper: &SpikeSlabHyper,
    rng: &mut R,
) -> PriorDraw {
    let d = pair.ray_count();
    let centre = rng.random_range(0..d);
    let mut members = vec![centre];
    members.extend(graph.neighbors(centre));
    members.sort_unstable();
    let theta = if hyper.theta.is_empty() {
        0.5
    } else {
        hyper.theta.iter().sum::<f64>() / hyper.theta.len() as f64
    };
    let (indicators, b) = sample_b_given_clique(hyper, theta, &members, d, rng);
    let mu = pair.vertex().combine(&b);
    PriorDraw { clique_index: centre, members, indicators, b, mu, dense_flag: false }
}

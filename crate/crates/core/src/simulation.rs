//! Synthetic bell-curve study: balanced panels `y_ij = f(j) + W_i(j) + e_ij`
//! with Gaussian-process subject effects, fitted by the four mixed models.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bspline::bspline_basis;
use crate::cone::{project_onto_cone, ConeError, DdOptions, DdPair, FacetCone};
use crate::em::EmConfig;
use crate::mixed::{fit_mixed_with, fit_unrestricted, LongDataset, MixedConfig, MixedError, RestrictedDesign};
use crate::prior::SpikeSlabHyper;
use crate::shapes::{bell20, build_constraint_matrix, sparse_scenario_cone, ShapeError, BELL20_SPARSE_ROWS};

const GP_JITTER: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("Gaussian-process covariance is not positive definite")]
    Kernel,
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Mixed(#[from] MixedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Sparse,
    Dense,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Sparse => "sparse",
            Scenario::Dense => "dense",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Model {
    Restricted,
    RestrictedSpline,
    Unrestricted,
    UnrestrictedSpline,
}

impl Model {
    pub const ALL: [Model; 4] = [Model::Restricted, Model::RestrictedSpline, Model::Unrestricted, Model::UnrestrictedSpline];

    pub fn name(self) -> &'static str {
        match self {
            Model::Restricted => "restricted",
            Model::RestrictedSpline => "restricted_spline",
            Model::Unrestricted => "unrestricted",
            Model::UnrestrictedSpline => "unrestricted_spline",
        }
    }
}

/// One cell of the study: a scenario at a single noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    pub subjects: usize,
    pub sigma: f64,
    pub scenario: Scenario,
    pub replications: usize,
    pub seed: u64,
    pub kernel_bandwidth: f64,
    /// Multiplier on the subject effects (0 removes them).
    pub effect_scale: f64,
    pub j: usize,
    pub max_outer: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 20,
            subjects: 100,
            sigma: 1.0,
            scenario: Scenario::Sparse,
            replications: 50,
            seed: 20240101,
            kernel_bandwidth: 4.0,
            effect_scale: 1.0,
            j: 20,
            max_outer: 200,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: &str| Err(SimulationError::InvalidConfig(m.into()));
        if self.n != 20 {
            return bad("the bell-curve constraint set is defined for n = 20");
        }
        if self.subjects == 0 || self.replications == 0 {
            return bad("subjects and replications must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be nonnegative");
        }
        if !(self.effect_scale >= 0.0 && self.effect_scale.is_finite()) {
            return bad("effect scale must be nonnegative");
        }
        if !(self.kernel_bandwidth > 0.0) {
            return bad("kernel bandwidth must be positive");
        }
        if self.j < 4 || self.j > self.n {
            return bad("need 4 <= J <= n");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub rep: usize,
    pub seed: u64,
    /// In [`Model::ALL`] order; `None` when the fit failed.
    pub mse: [Option<f64>; 4],
    pub f_hat: [Option<Vec<f64>>; 4],
}

/// `6 φ(2x)` on `n` equally spaced points of `[−2, 2]`.
pub fn true_f_dense(n: usize) -> Vec<f64> {
    let c = 6.0 / (2.0 * std::f64::consts::PI).sqrt();
    (0..n)
        .map(|j| {
            let x = -2.0 + 4.0 * j as f64 / (n - 1) as f64;
            c * (-0.5 * (2.0 * x) * (2.0 * x)).exp()
        })
        .collect()
}

/// Euclidean projection of `f_dense` onto `cone` (equalities included).
pub fn true_f_sparse(f_dense: &[f64], cone: &FacetCone<f64>) -> Result<Vec<f64>, ConeError> {
    if cone.linearity().is_empty() && cone.contains(f_dense, &0.0) {
        return Ok(f_dense.to_vec());
    }
    let opts = DdOptions { reduce: true, ..Default::default() };
    let pair = DdPair::from_facets(cone, &opts)?;
    project_onto_cone(f_dense, pair.vertex())
}

/// Lower Cholesky factor of `exp(−(s−t)²/(2ℓ²)) + 1e-10·I` on `grid`.
pub struct GpSampler {
    factor: DMatrix<f64>,
}

impl GpSampler {
    pub fn new(grid: &[f64], bandwidth: f64) -> Result<Self, SimulationError> {
        let n = grid.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            let d = grid[i] - grid[j];
            (-d * d / (2.0 * bandwidth * bandwidth)).exp() + if i == j { GP_JITTER } else { 0.0 }
        });
        let chol = Cholesky::new(k).ok_or(SimulationError::Kernel)?;
        Ok(Self { factor: chol.l() })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.factor.nrows(), |_, _| rng.sample(StandardNormal));
        (&self.factor * z).iter().copied().collect()
    }
}

pub fn sample_gp_effect<R: Rng + ?Sized>(grid: &[f64], bandwidth: f64, rng: &mut R) -> Result<Vec<f64>, SimulationError> {
    Ok(GpSampler::new(grid, bandwidth)?.sample(rng))
}

/// Random stream for one replication.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Everything shared across the replications of one cell.
pub struct SimulationContext {
    config: SimConfig,
    truth: Vec<f64>,
    gp: GpSampler,
    designs: [RestrictedDesign; 2],
}

impl SimulationContext {
    pub fn new(config: &SimConfig) -> Result<Self, SimulationError> {
        config.validate()?;
        let cone: FacetCone<f64> = build_constraint_matrix(&bell20())?;
        let dense = true_f_dense(config.n);
        let truth = match config.scenario {
            Scenario::Dense => dense,
            Scenario::Sparse => {
                let eq = sparse_scenario_cone(&cone, BELL20_SPARSE_ROWS.iter().map(|r| r - 1))?;
                true_f_sparse(&dense, &eq)?
            }
        };
        let grid: Vec<f64> = (1..=config.n).map(|j| j as f64).collect();
        let spline = bspline_basis(config.n, config.j, 3).map_err(MixedError::from)?;
        let designs = [RestrictedDesign::new(&cone, None)?, RestrictedDesign::new(&cone, Some(spline.matrix()))?];
        Ok(Self { config: config.clone(), truth, gp: GpSampler::new(&grid, config.kernel_bandwidth)?, designs })
    }

    /// Same context at a different noise level.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self {
            config: SimConfig { sigma, ..self.config.clone() },
            truth: self.truth.clone(),
            gp: GpSampler { factor: self.gp.factor.clone() },
            designs: self.designs.clone(),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    /// Panel for replication `rep`. Subject effects and unit noise come from
    /// the replication stream; noise is then scaled by `σ`.
    pub fn generate(&self, rep: usize) -> LongDataset {
        let mut rng = replication_rng(self.config.seed, rep);
        let n = self.config.n;
        let mut values = Vec::with_capacity(self.config.subjects);
        for _ in 0..self.config.subjects {
            let w = self.gp.sample(&mut rng);
            let row = (0..n)
                .map(|j| {
                    let e: f64 = rng.sample(StandardNormal);
                    self.truth[j] + self.config.effect_scale * w[j] + self.config.sigma * e
                })
                .collect();
            values.push(row);
        }
        let ids = (1..=self.config.subjects).map(|i| i.to_string()).collect();
        LongDataset::from_matrix(ids, values).expect("balanced panel")
    }

    fn mixed_config(&self, cliques: usize) -> MixedConfig {
        let mut c = MixedConfig::new(EmConfig::new(SpikeSlabHyper::new(cliques)));
        c.max_outer = self.config.max_outer;
        c.j = Some(self.config.j);
        c
    }

    pub fn fit(&self, model: Model, data: &LongDataset) -> Result<Vec<f64>, MixedError> {
        let fit = match model {
            Model::Restricted | Model::RestrictedSpline => {
                let d = &self.designs[usize::from(model == Model::RestrictedSpline)];
                fit_mixed_with(data, d, &self.mixed_config(d.cliques().len()))?
            }
            Model::Unrestricted => fit_unrestricted(data, false, &self.mixed_config(1))?,
            Model::UnrestrictedSpline => fit_unrestricted(data, true, &self.mixed_config(1))?,
        };
        Ok(fit.model.f_hat)
    }

    pub fn run_replication(&self, rep: usize) -> ReplicationResult {
        let data = self.generate(rep);
        let mut mse = [None; 4];
        let mut f_hat: [Option<Vec<f64>>; 4] = Default::default();
        for (k, model) in Model::ALL.into_iter().enumerate() {
            if let Ok(f) = self.fit(model, &data) {
                mse[k] = Some(mean_squared_error(&f, &self.truth));
                f_hat[k] = Some(f);
            }
        }
        ReplicationResult { rep, seed: self.config.seed, mse, f_hat }
    }
}

pub fn mean_squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

pub fn run_replication(config: &SimConfig, rep: usize) -> Result<ReplicationResult, SimulationError> {
    Ok(SimulationContext::new(config)?.run_replication(rep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub base: SimConfig,
    pub sigmas: Vec<f64>,
    pub scenarios: Vec<Scenario>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { base: SimConfig::default(), sigmas: vec![1.0, 2.0, 5.0], scenarios: vec![Scenario::Sparse, Scenario::Dense] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub sigma: f64,
    pub model: &'static str,
    pub median: f64,
    pub mean: f64,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct StudySummary {
    pub rows: Vec<SummaryRow>,
    pub replications: Vec<(Scenario, f64, Vec<ReplicationResult>)>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

pub fn summarize(scenario: Scenario, sigma: f64, results: &[ReplicationResult]) -> Vec<SummaryRow> {
    Model::ALL
        .into_iter()
        .enumerate()
        .map(|(k, model)| {
            let mut v: Vec<f64> = results.iter().filter_map(|r| r.mse[k]).collect();
            v.sort_by(f64::total_cmp);
            let failures = results.len() - v.len();
            let mean = if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            SummaryRow { scenario, sigma, model: model.name(), median: median(&mut v), mean, failures }
        })
        .collect()
}

pub fn run_study(config: &StudyConfig) -> Result<StudySummary, SimulationError> {
    let mut rows = Vec::new();
    let mut replications = Vec::new();
    for &scenario in &config.scenarios {
        let ctx = SimulationContext::new(&SimConfig { scenario, ..config.base.clone() })?;
        for &sigma in &config.sigmas {
            let cell = ctx.with_sigma(sigma);
            let mut results: Vec<ReplicationResult> =
                (0..config.base.replications).into_par_iter().map(|rep| cell.run_replication(rep)).collect();
            results.sort_by_key(|r| r.rep);
            rows.extend(summarize(scenario, sigma, &results));
            replications.push((scenario, sigma, results));
        }
    }
    Ok(StudySummary { rows, replications })
}

impl StudySummary {
    pub fn row(&self, scenario: Scenario, sigma: f64, model: Model) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.sigma == sigma && r.model == model.name())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("scenario,sigma,model,median_mse,mean_mse,failures\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{:.6},{:.6},{}", r.scenario.name(), r.sigma, r.model, r.median, r.mean, r.failures);
        }
        s
    }

    /// One block per scenario: rows are models, columns are median and mean
    /// MSE at each `σ`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut scenarios: Vec<Scenario> = self.rows.iter().map(|r| r.scenario).collect();
        scenarios.dedup();
        for sc in scenarios {
            let mut sigmas: Vec<f64> = self.rows.iter().filter(|r| r.scenario == sc).map(|r| r.sigma).collect();
            sigmas.dedup();
            let _ = writeln!(out, "Median MSE and mean MSE ({} truth)", sc.name());
            let _ = write!(out, "{:<22}", "model");
            for s in &sigmas {
                let _ = write!(out, "{:>12}{:>12}", format!("med s={s}"), format!("mean s={s}"));
            }
            out.push('\n');
            for m in Model::ALL {
                let _ = write!(out, "{:<22}", m.name());
                for &s in &sigmas {
                    let r = self.row(sc, s, m).expect("summary cell");
                    let _ = write!(out, "{:>12.4}{:>12.4}", r.median, r.mean);
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_truth_is_symmetric_with_known_peak() {
        let f = true_f_dense(21);
        assert!((f[10] - 6.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        for j in 0..21 {
            assert!((f[j] - f[20 - j]).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_truth_is_interior() {
        let cone: FacetCone<f64> = build_constraint_matrix(&bell20()).unwrap();
        let f = true_f_dense(20);
        let af = cone.matrix().mul_vec(&f);
        assert!(af.iter().all(|v| *v > 0.0), "{af:?}");
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn same_rep_same_stream() {
        let a: Vec<u64> = (0..4).map(|_| replication_rng(7, 3).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| replication_rng(7, 3).random()).collect();
        assert_eq!(a, b);
        let c: u64 = replication_rng(7, 4).random();
        assert_ne!(a[0], c);
    }
}

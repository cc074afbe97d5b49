use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use conicsparse::adjacency::{build_adjacency_graph, enumerate_maximal_cliques_capped, DEFAULT_CLIQUE_CAP};
use conicsparse::em::{EmConfig, EmSolver};
use conicsparse::io::{format_number, read_long, read_matrix, read_vector, write_matrix};
use conicsparse::mixed::{fit_mixed, fit_unrestricted, marginal_loglik, MixedConfig, MixedFit};
use conicsparse::prior::{sample_prior_mu, SpikeSlabHyper};
use conicsparse::shapes::{build_constraint_matrix, preset, ShapeSpec};
use conicsparse::simulation::{run_study, Scenario, StudyConfig};
use conicsparse::{
    conically_independent_rows, convert_facets, project_onto_cone, verify_dd_pair, vertex_to_facet, Cone, DdOptions, Generators, Mat, Pair,
};

#[derive(Parser)]
#[command(name = "conic", version, about = "Polyhedral cones, conic sparsity and shape-restricted fits")]
struct Cli {
    /// JSON config file; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cone representations and geometry.
    #[command(subcommand)]
    Cone(ConeCommand),
    /// Print a shape-constraint matrix.
    Constraints(ConstraintsArgs),
    /// Posterior-mode fit of a cone-restricted mean.
    Fit(FitArgs),
    /// Held-out marginal log-likelihood of restricted and unrestricted fits.
    Loglik(LoglikArgs),
    /// Run the bell-curve simulation study.
    Simulate(SimulateArgs),
    /// Draw from the clique spike-and-slab prior.
    PriorSample(PriorArgs),
}

#[derive(Subcommand)]
enum ConeCommand {
    /// Facets to rays (default) or rays to facets (`--rays`).
    Convert(ConvertArgs),
    /// Check that a facet matrix and a ray matrix describe the same cone.
    Verify(VerifyArgs),
    /// Edge list of the ray adjacency graph.
    Adjacency(ConeOut),
    /// Maximal cliques of the adjacency graph.
    Cliques(CliqueArgs),
    /// Euclidean projection of a vector onto the cone.
    Project(ProjectArgs),
}

#[derive(Args, Clone, Default)]
struct ConeSource {
    /// Headerless CSV constraint matrix A (cone is {x : Ax >= 0}).
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Built-in constraint matrix: bell20 or nhanes24.
    #[arg(long)]
    preset: Option<String>,
    /// 1-based rows of A held at equality.
    #[arg(long, value_delimiter = ',')]
    linearity: Option<Vec<usize>>,
}

#[derive(Args)]
struct ConeOut {
    #[command(flatten)]
    cone: ConeSource,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    #[command(flatten)]
    cone: ConeSource,
    /// Ray matrix (one ray per column) to convert back to facets.
    #[arg(long, conflicts_with_all = ["matrix", "preset"])]
    rays: Option<PathBuf>,
    /// Drop redundant rows instead of failing.
    #[arg(long)]
    reduce: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    cone: ConeSource,
    /// Ray matrix to check; computed from A when omitted.
    #[arg(long)]
    rays: Option<PathBuf>,
}

#[derive(Args)]
struct CliqueArgs {
    #[command(flatten)]
    cone: ConeSource,
    #[arg(long, default_value_t = DEFAULT_CLIQUE_CAP)]
    cap: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    #[command(flatten)]
    cone: ConeSource,
    /// Vector to project (one value per line or a single row).
    #[arg(long)]
    y: PathBuf,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ConstraintsArgs {
    #[arg(long, conflicts_with = "spec")]
    preset: Option<String>,
    /// JSON shape specification.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct HyperArgs {
    #[arg(long)]
    v0: Option<f64>,
    #[arg(long)]
    v1: Option<f64>,
    #[arg(long = "beta-a")]
    a: Option<f64>,
    #[arg(long = "beta-b")]
    b: Option<f64>,
    #[arg(long)]
    alpha_ig: Option<f64>,
    #[arg(long)]
    beta_ig: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
}

impl HyperArgs {
    fn merged(&self, base: &HyperArgs) -> HyperArgs {
        HyperArgs {
            v0: self.v0.or(base.v0),
            v1: self.v1.or(base.v1),
            a: self.a.or(base.a),
            b: self.b.or(base.b),
            alpha_ig: self.alpha_ig.or(base.alpha_ig),
            beta_ig: self.beta_ig.or(base.beta_ig),
            phi: self.phi.or(base.phi),
        }
    }

    fn build(&self, cliques: usize) -> Result<SpikeSlabHyper> {
        let mut h = SpikeSlabHyper::new(cliques);
        h.v0 = self.v0.unwrap_or(h.v0);
        h.v1 = self.v1.unwrap_or(h.v1);
        h.a = self.a.unwrap_or(h.a);
        h.b = self.b.unwrap_or(h.b);
        h.alpha_ig = self.alpha_ig.unwrap_or(h.alpha_ig);
        h.beta_ig = self.beta_ig.unwrap_or(h.beta_ig);
        h.phi = self.phi.unwrap_or(h.phi);
        h.validate()?;
        Ok(h)
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    cone: ConeSource,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Response vector (plain fit).
    #[arg(long)]
    y: Option<PathBuf>,
    /// Design matrix; defaults to the cone's rays.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Fit the mixed-effect model to a long-format panel.
    #[arg(long)]
    mixed: bool,
    /// Long-format CSV with header subject,time,value.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Use a B-spline basis for the mean curve.
    #[arg(long)]
    spline: bool,
    /// Drop the cone restriction (mixed fits only).
    #[arg(long)]
    unrestricted: bool,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Fitted mean as CSV.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// JSON report; printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct LoglikArgs {
    #[command(flatten)]
    cone: ConeSource,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    /// Number of seeded splits.
    #[arg(long)]
    splits: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    spline: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_scenario)]
    scenarios: Option<Vec<Scenario>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Summary table as CSV.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PriorArgs {
    #[command(flatten)]
    cone: ConeSource,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use the mixture with a full-support component of weight phi.
    #[arg(long)]
    mixture: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    match s {
        "sparse" => Ok(Scenario::Sparse),
        "dense" => Ok(Scenario::Dense),
        _ => Err(format!("unknown scenario {s:?}; expected sparse or dense")),
    }
}

/// Config file contents. Every field is optional.
#[derive(Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    matrix: Option<PathBuf>,
    preset: Option<String>,
    linearity: Option<Vec<usize>>,
    hyper: HyperArgs,
    y: Option<PathBuf>,
    design: Option<PathBuf>,
    data: Option<PathBuf>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    seed: Option<u64>,
    train: Option<usize>,
    test: Option<usize>,
    splits: Option<usize>,
    draws: Option<usize>,
    simulation: Option<StudyConfig>,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let Some(path) = path else { return Ok(Config::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

impl ConeSource {
    fn merged(&self, cfg: &Config) -> ConeSource {
        let explicit = self.matrix.is_some() || self.preset.is_some();
        ConeSource {
            matrix: if explicit { self.matrix.clone() } else { cfg.matrix.clone() },
            preset: if explicit { self.preset.clone() } else { cfg.preset.clone() },
            linearity: self.linearity.clone().or_else(|| cfg.linearity.clone()),
        }
    }

    fn load(&self, cfg: &Config) -> Result<Cone> {
        let src = self.merged(cfg);
        let base: Cone = match (&src.matrix, &src.preset) {
            (Some(_), Some(_)) => bail!("give either --matrix or --preset, not both"),
            (Some(p), None) => Cone::inequalities(read_matrix(open(p)?)?)?,
            (None, Some(name)) => build_constraint_matrix(&preset(name)?)?,
            (None, None) => bail!("no cone given; use --matrix or --preset"),
        };
        match &src.linearity {
            Some(rows) => {
                let zero_based = rows
                    .iter()
                    .map(|&r| if r >= 1 && r <= base.row_count() { Ok(r - 1) } else { bail!("linearity row {r} outside 1..={}", base.row_count()) })
                    .collect::<Result<Vec<_>>>()?;
                Ok(base.with_linearity(base.linearity().iter().copied().chain(zero_based))?)
            }
            None => Ok(base),
        }
    }

    fn pair(&self, cfg: &Config, reduce: bool) -> Result<Pair> {
        let cone = self.load(cfg)?;
        Ok(convert_facets(&cone, &DdOptions { reduce, ..Default::default() })?.pair)
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Cone(c) => cone_command(c, &cfg),
        Command::Constraints(a) => constraints(a),
        Command::Fit(a) => fit(a, &cfg),
        Command::Loglik(a) => loglik(a, &cfg),
        Command::Simulate(a) => simulate(a, &cfg),
        Command::PriorSample(a) => prior_sample(a, &cfg),
    }
}

fn cone_command(cmd: ConeCommand, cfg: &Config) -> Result<()> {
    match cmd {
        ConeCommand::Convert(a) => {
            if let Some(rays) = &a.rays {
                let v = Generators::new(read_matrix(open(rays)?)?)?;
                let facets = vertex_to_facet(&v, &1e-10)?;
                write_matrix(sink(a.output.as_deref())?, facets.matrix())?;
            } else {
                let out = convert_facets(&a.cone.load(cfg)?, &DdOptions { reduce: a.reduce, ..Default::default() })?;
                if !out.dropped_rows.is_empty() {
                    eprintln!("dropped redundant rows: {:?}", one_based(&out.dropped_rows));
                }
                write_matrix(sink(a.output.as_deref())?, out.pair.vertex().matrix())?;
            }
        }
        ConeCommand::Verify(a) => {
            let cone = a.cone.load(cfg)?;
            let pair = match &a.rays {
                Some(r) => Pair::new(cone, Generators::new(read_matrix(open(r)?)?)?, 1e-10)?,
                None => Pair::from_facets(&cone, &Default::default())?,
            };
            let report = verify_dd_pair(&pair);
            let independent = conically_independent_rows(pair.facet().matrix(), 1e-10).independent;
            let json = json!({
                "rays": pair.ray_count(),
                "clean": report.is_clean(),
                "violations": report.violation_count(),
                "negative_entries": report.negative_entries.iter().map(|(i, j, v)| json!([i + 1, j + 1, v])).collect::<Vec<_>>(),
                "non_extreme_rays": one_based(&report.non_extreme_rays),
                "redundant_rays": one_based(&report.redundant_rays),
                "redundant_rows": one_based(&report.redundant_rows),
                "conically_independent_rows": independent,
            });
            println!("{}", serde_json::to_string_pretty(&json)?);
            if !report.is_clean() {
                bail!("{} violations", report.violation_count());
            }
        }
        ConeCommand::Adjacency(a) => {
            let graph = build_adjacency_graph(&a.cone.pair(cfg, false)?)?;
            let mut w = sink(a.output.as_deref())?;
            writeln!(w, "i,j")?;
            for (i, j) in graph.edges() {
                writeln!(w, "{},{}", i + 1, j + 1)?;
            }
        }
        ConeCommand::Cliques(a) => {
            let graph = build_adjacency_graph(&a.cone.pair(cfg, false)?)?;
            let cliques = enumerate_maximal_cliques_capped(&graph, a.cap)?;
            let mut w = sink(a.output.as_deref())?;
            writeln!(w, "clique,size,members")?;
            for (k, c) in cliques.cliques().iter().enumerate() {
                let members: Vec<String> = c.iter().map(|i| (i + 1).to_string()).collect();
                writeln!(w, "{},{},{}", k + 1, c.len(), members.join(" "))?;
            }
        }
        ConeCommand::Project(a) => {
            let pair = a.cone.pair(cfg, true)?;
            let y = read_vector(open(&a.y)?)?;
            if y.len() != pair.dim() {
                bail!("vector has length {}, cone dimension is {}", y.len(), pair.dim());
            }
            let p = project_onto_cone(&y, pair.vertex())?;
            write_column(sink(a.output.as_deref())?, &p)?;
        }
    }
    Ok(())
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

fn write_column(mut w: Box<dyn Write>, v: &[f64]) -> Result<()> {
    for x in v {
        writeln!(w, "{}", format_number(*x))?;
    }
    Ok(())
}

fn constraints(a: ConstraintsArgs) -> Result<()> {
    let spec: ShapeSpec = match (&a.preset, &a.spec) {
        (Some(name), None) => preset(name)?,
        (None, Some(p)) => serde_json::from_reader(open(p)?).with_context(|| format!("parsing {}", p.display()))?,
        _ => bail!("give --preset or --spec"),
    };
    let cone: Cone = build_constraint_matrix(&spec)?;
    let ci = conically_independent_rows(&cone.inequality_rows_matrix(), 1e-10);
    if !ci.independent {
        bail!("constraint rows are not conically independent");
    }
    write_matrix(sink(a.output.as_deref())?, cone.matrix())?;
    Ok(())
}

trait InequalityRows {
    fn inequality_rows_matrix(&self) -> Mat;
}

impl InequalityRows for Cone {
    fn inequality_rows_matrix(&self) -> Mat {
        self.matrix().select_rows(&self.inequality_rows())
    }
}

fn em_config(hyper: SpikeSlabHyper, max_iter: Option<usize>, tol: Option<f64>) -> EmConfig {
    let mut c = EmConfig::new(hyper);
    if let Some(m) = max_iter {
        c.max_iter = m;
    }
    if let Some(t) = tol {
        c.rel_tol = t;
    }
    c
}

fn cliques_of(pair: &Pair) -> Result<conicsparse::adjacency::CliqueSet> {
    Ok(enumerate_maximal_cliques_capped(&build_adjacency_graph(pair)?, DEFAULT_CLIQUE_CAP)?)
}

fn mixed_report(fit: &MixedFit, loglik: f64) -> serde_json::Value {
    json!({
        "f_hat": fit.model.f_hat,
        "sigma2": fit.model.sigma2,
        "sigma": fit.model.sigma.row_vecs(),
        "outer_iterations": fit.outer_iterations,
        "converged": fit.converged,
        "marginal_loglik": loglik,
        "min_sigma_eigenvalue": fit.sigma_min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

fn fit(a: FitArgs, cfg: &Config) -> Result<()> {
    let hyper_args = a.hyper.merged(&cfg.hyper);
    let max_iter = a.max_iter.or(cfg.max_iter);
    let tol = a.tol.or(cfg.tol);
    let (report, mean) = if a.mixed {
        let path = a.data.as_ref().or(cfg.data.as_ref()).context("--mixed needs --data")?;
        let data = read_long(open(path)?)?;
        let fit = if a.unrestricted {
            let mc = MixedConfig::new(em_config(hyper_args.build(1)?, max_iter, tol));
            fit_unrestricted(&data, a.spline, &mc)?
        } else {
            let cone = a.cone.load(cfg)?;
            let cliques = cliques_of(&Pair::from_facets(&cone, &Default::default())?)?;
            let mc = MixedConfig::new(em_config(hyper_args.build(cliques.len())?, max_iter, tol));
            fit_mixed(&data, &cone, a.spline, &mc)?
        };
        let ll = marginal_loglik(&data, &fit.model)?;
        (mixed_report(&fit, ll), fit.model.f_hat.clone())
    } else {
        let path = a.y.as_ref().or(cfg.y.as_ref()).context("missing --y")?;
        let y = read_vector(open(path)?)?;
        let pair = a.cone.pair(cfg, true)?;
        let design = match a.design.as_ref().or(cfg.design.as_ref()) {
            Some(p) => read_matrix(open(p)?)?,
            None => pair.vertex().matrix().clone(),
        };
        if design.cols() != pair.ray_count() {
            bail!("design has {} columns but the cone has {} rays", design.cols(), pair.ray_count());
        }
        let cliques = cliques_of(&pair)?;
        let solver = EmSolver::new(&design, cliques.clone())?;
        let fit = solver.fit(&y, &em_config(hyper_args.build(cliques.len())?, max_iter, tol))?;
        let mu = pair.vertex().combine(&fit.state.beta);
        let report = json!({
            "beta": fit.state.beta,
            "mu_hat": mu,
            "fitted": fit.mu_hat,
            "sigma2": fit.state.sigma2,
            "gamma": fit.state.gamma,
            "theta": fit.state.theta,
            "log_posterior": fit.state.log_posterior,
            "iterations": fit.state.iteration,
            "converged": fit.converged,
            "theta_clamps": fit.theta_clamps,
            "trace": fit.trace,
        });
        (report, mu)
    };
    let mut w = sink(a.report.as_deref())?;
    writeln!(w, "{}", serde_json::to_string_pretty(&report)?)?;
    if let Some(out) = &a.output {
        write_column(sink(Some(out))?, &mean)?;
    }
    Ok(())
}

fn loglik(a: LoglikArgs, cfg: &Config) -> Result<()> {
    let path = a.data.as_ref().or(cfg.data.as_ref()).context("missing --data")?;
    let data = read_long(open(path)?)?;
    let train = a.train.or(cfg.train).unwrap_or(95);
    let test = a.test.or(cfg.test).unwrap_or(60);
    let splits = a.splits.or(cfg.splits).unwrap_or(1);
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let hyper_args = a.hyper.merged(&cfg.hyper);
    let cone = a.cone.load(cfg)?;
    let cliques = cliques_of(&Pair::from_facets(&cone, &Default::default())?)?;
    let restricted_cfg = MixedConfig::new(EmConfig::new(hyper_args.build(cliques.len())?));
    let plain_cfg = MixedConfig::new(EmConfig::new(hyper_args.build(1)?));
    let mut rows = Vec::new();
    for k in 0..splits {
        let (tr, te) = data.split(train, test, seed.wrapping_add(k as u64))?;
        let r = fit_mixed(&tr, &cone, a.spline, &restricted_cfg)?;
        let u = fit_unrestricted(&tr, a.spline, &plain_cfg)?;
        rows.push(json!({
            "split": k + 1,
            "restricted": marginal_loglik(&te, &r.model)? / test as f64,
            "unrestricted": marginal_loglik(&te, &u.model)? / test as f64,
        }));
    }
    println!("{}", serde_json::to_string_pretty(&json!({ "train": train, "test": test, "splits": rows }))?);
    Ok(())
}

fn simulate(a: SimulateArgs, cfg: &Config) -> Result<()> {
    let mut study = cfg.simulation.clone().unwrap_or_default();
    if let Some(r) = a.replications {
        study.base.replications = r;
    }
    if let Some(s) = a.subjects {
        study.base.subjects = s;
    }
    if let Some(s) = a.sigmas {
        study.sigmas = s;
    }
    if let Some(s) = a.scenarios {
        study.scenarios = s;
    }
    if let Some(s) = a.seed.or(cfg.seed) {
        study.base.seed = s;
    }
    if let Some(b) = a.bandwidth {
        study.base.kernel_bandwidth = b;
    }
    if study.sigmas.iter().any(|s| !(*s > 0.0)) {
        bail!("sigmas must be positive");
    }
    let summary = run_study(&study)?;
    print!("{}", summary.to_text());
    if let Some(out) = &a.output {
        sink(Some(out))?.write_all(summary.to_csv().as_bytes())?;
    }
    Ok(())
}

fn prior_sample(a: PriorArgs, cfg: &Config) -> Result<()> {
    let pair = a.cone.pair(cfg, true)?;
    let cliques = cliques_of(&pair)?;
    let hyper = a.hyper.merged(&cfg.hyper).build(cliques.len())?;
    let draws = a.draws.or(cfg.draws).unwrap_or(10);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.or(cfg.seed).unwrap_or(0));
    let (d, n) = (pair.ray_count(), pair.dim());
    let mut w = sink(a.output.as_deref())?;
    let mut header = vec!["clique".to_string(), "dense".to_string()];
    header.extend((1..=d).map(|i| format!("b{i}")));
    header.extend((1..=n).map(|i| format!("mu{i}")));
    writeln!(w, "{}", header.join(","))?;
    for _ in 0..draws {
        let draw = sample_prior_mu(&pair, &cliques, &hyper, &mut rng, a.mixture)?;
        let mut row = vec![(draw.clique_index + 1).to_string(), u8::from(draw.dense_flag).to_string()];
        row.extend(draw.b.iter().chain(&draw.mu).map(|v| format!("{v}")));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

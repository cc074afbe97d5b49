//! Conic sparsity for shape-restricted regression.
//!
//! A shape restriction is a proper polyhedral cone `{μ : Aμ ≥ 0}`. The
//! [`cone`] module converts it to its extreme rays `Δ`, [`adjacency`] builds
//! the ray adjacency graph and its maximal cliques, and [`em`] fits
//! `y = Δβ + ε` under a clique-level spike-and-slab prior. [`mixed`] embeds
//! that fit in a functional mixed-effect model and [`simulation`] runs the
//! bell-curve study.

pub mod adjacency;
pub mod bspline;
pub mod cone;
pub mod em;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod mixed;
pub mod nnls;
pub mod prior;
pub mod scalar;
pub mod shapes;
pub mod simulation;

pub use cone::{
    conically_independent_rows, convert_facets, facet_to_vertex, project_onto_cone, transform_cone, vertex_to_facet,
    verify_dd_pair, ConeError, DdOptions, DdPair, DdReport, FacetCone, VertexCone,
};
pub use linalg::DenseMatrix;
pub use scalar::{Real, Scalar};

pub type Rational = num_rational::BigRational;

pub type Mat = DenseMatrix<f64>;
pub type MatF32 = DenseMatrix<f32>;
pub type ExactMat = DenseMatrix<Rational>;

pub type Cone = FacetCone<f64>;
pub type ExactCone = FacetCone<Rational>;
pub type Generators = VertexCone<f64>;
pub type ExactGenerators = VertexCone<Rational>;
pub type Pair = DdPair<f64>;
pub type ExactPair = DdPair<Rational>;

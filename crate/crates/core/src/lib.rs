//! Bayesian inference for several correlated binomial proportions.
//!
//! The distribution of `ϑ ∈ (0,1)^m` is the image `ϑ = Hp` of a Dirichlet
//! vector `p` over the `2^m` joint binary outcomes. It is parametrised
//! either by the Dirichlet concentrations `γ` ([`MBetaFull`]) or by the
//! total concentration `ν` and the moment matrix `A = H diag(γ) Hᵀ`
//! ([`MBetaReduced`]). Both forms update conjugately under multinomial
//! data.
//!
//! The main types are generic over the scalar (`f32`, `f64`, and
//! `BigRational` for exact moment arithmetic); the aliases at this level
//! fix `f64`.

pub mod admissibility;
pub mod binmap;
pub mod error;
pub mod fit;
pub mod formats;
pub mod linalg;
pub mod lp;
pub mod mbeta;
pub mod numerics;
pub mod regions;
pub mod scalar;
pub mod simharness;

pub use admissibility::{
    check_mc, derive_moment_matrix, frechet_bounds, moment_bounds, pairwise_correlation_bounds,
    CorrelationSpec, FeasibilityStatus,
};
pub use binmap::{
    build_basis, cell_counts, decode_outcome, encode_outcome, CellCounts, HBasis, DEFAULT_M_MAX,
};
pub use error::{Error, Result};
pub use fit::{fit_gamma, solve_lsei};
pub use linalg::Matrix;
pub use mbeta::{MBetaFull, MBetaReduced, MomentSummary};
pub use numerics::{equicoordinate_quantile, mvn_rectangle_prob, sample_dirichlet, RngStream};
pub use regions::{
    cr_contrast, cr_copula, cr_extensive, cr_normal, decide_hypotheses, ContrastMatrix,
    CredibleRegion, Method,
};
pub use scalar::{Field, Real};
pub use simharness::{
    build_generative_prior, multinomial_draw, run_simulation, Scenario, SimResult,
};

/// Exact rational scalar used by the exact verification paths.
pub type Rational = num_rational::BigRational;

/// Full parametrisation in double precision.
pub type MBeta = mbeta::MBetaFull<f64>;
/// Reduced parametrisation in double precision.
pub type MBetaMoments = mbeta::MBetaReduced<f64>;
/// Reduced parametrisation in exact rational arithmetic.
pub type MBetaMomentsExact = mbeta::MBetaReduced<Rational>;
pub type MomentTarget = admissibility::MomentTarget<f64>;
pub type FitResult = fit::FitResult<f64>;
pub type FeasibilityResult = admissibility::FeasibilityResult<f64>;
pub type DMatrix = linalg::Matrix<f64>;

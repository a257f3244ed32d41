//! Special functions, seeded random streams and multivariate normal
//! probabilities.

pub mod dirichlet;
pub mod mvn;
pub mod rng;
pub mod special;

pub use dirichlet::{dirichlet_draw_into, sample_dirichlet, sample_theta, DirichletSampler};
pub use mvn::{
    equicoordinate_quantile, mvn_rectangle_prob, EquicoordinateQuantile, MvnEstimate, MvnOptions,
    QuantileRequest,
};
pub use rng::RngStream;
pub use special::{beta_cdf, beta_quantile, normal_cdf, normal_quantile};

//! Quasi-Monte Carlo machinery: Sobol points, the inverse normal CDF, and
//! Saltelli sample matrices mapped into feature space.

mod directions;
mod normal;
mod saltelli;
mod sobol;

pub use normal::{inverse_normal_cdf, inverse_normal_cdf_unchecked};
pub use saltelli::{MIN_ENSEMBLE, build_saltelli, build_saltelli_from, Marginal, QmcMatrices};
pub use sobol::{SobolGenerator, MAX_DIMENSION};

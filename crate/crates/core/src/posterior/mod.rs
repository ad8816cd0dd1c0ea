//! Normalized posteriors: nested quadrature and dense grids for `p <= 2`,
//! random-walk Metropolis for any `p`.

pub mod diagnostics;
pub mod fit;
pub mod grid;
pub mod mcmc;
pub mod quadrature;

pub use fit::{clean_fit, local_mode, nelder_mead, CleanFit};
pub use grid::{grid_posterior, GridMoments, GridOptions, PosteriorGrid};
pub use quadrature::{ln_normalizer, log_marginal_ratio, log_marginal_ratio_with, NestedOptions, Region};
pub use mcmc::{mcmc_posterior, mcmc_posterior_with, ChainSummary, Draw, McmcChain, McmcOptions};

/// A normalized posterior, either tabulated on a grid or sampled.
#[derive(Debug, Clone)]
pub enum PosteriorEstimate {
    Grid(PosteriorGrid),
    Chains(Vec<McmcChain>),
}

//! The error density, the coefficient and scale priors, and the pointwise
//! inequalities the robustness argument relies on.

mod bounds;
mod density;
mod prior;
mod scale;

pub use bounds::{fuzz_tail_bounds, tail_bounds, BoundCheck, CheckStatus, FuzzSummary, TailBoundRecord};
pub use density::{
    ln_tail_ratio, lptn_cdf, lptn_ln_pdf, lptn_pdf, lptn_quantile, lptn_sample, tail_ratio, LptnDensity,
};
pub use prior::{
    coefficient_prior_pdf, ln_product_bound, verify_prior_bound, BoundSearch, CoefficientPrior,
    PriorBoundCertificate, PriorSpec,
};
pub use scale::{scale_moment_check, MomentCheck, ScalePrior};

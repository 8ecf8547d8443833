//! Special functions, one-dimensional quadrature, and scalar optimization
//! used by every other module.

mod opt;
mod quad;
mod special;

pub use opt::{bisect_root, golden_max, golden_min};
pub use quad::{integrate, QuadratureSpec};
pub use special::{
    chi2_cdf, chi2_quantile, hyp0f1, hyp1f1, ln_gamma, regularized_gamma_p, std_normal_cdf,
    std_normal_quantile,
};

pub(crate) use special::ln_gamma_pos;

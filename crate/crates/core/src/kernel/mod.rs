//! Numerical primitives: hypergeometric tails, the Wallenius noncentral
//! hypergeometric distribution, multiple-testing adjustment and seeded
//! random streams.

pub mod adjust;
pub mod hypergeom;
pub mod quadrature;
pub mod rng;
pub mod wallenius;

pub use adjust::{adjust_bh, adjust_bonferroni, Adjustment};
pub use hypergeom::{hypergeom_pmf, hypergeom_tail, hypergeom_tail_binomial_approx, ln_choose};
pub use rng::{permute, rng_stream, sample_without_replacement, weighted_sample_without_replacement, RngStream};
pub use wallenius::{wallenius_pmf, wallenius_tail, WalleniusParams};

//! Testing conditional moment inequality models.
//!
//! This crate implements tests of the null hypothesis
//!
//! ```text
//! E[m(W, θ) | X] ≥ 0   almost surely (componentwise),
//! ```
//!
//! where `m` is a known moment function and `θ` a parameter of interest.
//! The null defines an identified set of parameters; tests of this form are
//! inverted to build confidence regions in set-identified models.
//!
//! The statistics on offer turn the conditional inequality into
//! unconditional ones through nonnegative instrument functions `g(X)`, or
//! estimate the conditional mean directly by a kernel smoother, and then
//! aggregate the negative part of the resulting moment estimates:
//!
//! * `iv_cvm` — integrates `|E_n[m g] ω|_−^p` over a measure on the
//!   instrument family (Cramér–von Mises form),
//! * `iv_ks` — takes the supremum of `|E_n[m g] ω|_−` over instruments
//!   (Kolmogorov–Smirnov form), computed exactly for interval instruments
//!   in one dimension,
//! * `kern_cvm` / `kern_ks` — the same two aggregations applied to a
//!   Nadaraya–Watson estimate of `E[m(W, θ) | X = x]`.
//!
//! Weightings are either bounded (`ω ≡ 1`) or truncated-variance
//! studentization `ω = (σ̂ ∨ σ_n)^{-1}`. Critical values are simulated from
//! a least-favorable null data-generating process in which every moment
//! binds. The [`rates`] module evaluates the closed-form local-power rate
//! exponents and the limit functionals that the scaled statistics converge
//! to along rate-matched local alternatives, and [`harness`] runs the
//! Monte Carlo experiments (power curves, rate-consistency profiles, and
//! cross-statistic comparisons) with reproducible seeding.

pub mod critval;
mod error;
pub mod harness;
pub mod instruments;
pub mod model;
pub mod rates;
pub mod seed;
pub mod stats;
pub mod util;

pub use error::{Error, Result};
pub use model::{
    median_reg_moment, interval_reg_moment, simulate_missing_data, MissingDataDesign, MomentModel,
    Sample, INF_SENTINEL,
};
pub use stats::{Family, StatisticSpec, StatisticValue, Weighting};

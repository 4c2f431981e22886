//! Counting processes whose jumps come in integer sizes 1..k, together with
//! their fractional, non-homogeneous, and subordinator-time-changed variants.
//!
//! The base process jumps by j ∈ {1,…,k} at rate λ_j.  Everything else in the
//! crate is built on top of it:
//!
//! - [`process`]: the base process (pmf, pgf, moments, sampling, extremes).
//! - [`ngcp`]: time-varying rate functions λ_j(t) and the resulting
//!   non-homogeneous process.
//! - [`subordinators`]: one-sided stable, gamma, and multistable subordinators,
//!   their inverses, and Bernstein functions.
//! - [`timechange`]: the process run on a subordinator clock or an inverse
//!   subordinator clock (fractional, space-fractional, and mixed variants),
//!   first-passage laws, and long-range dependence estimates.
//! - [`ruin`]: an insurance surplus model driven by the time-changed process.
//! - [`orderstats`]: a time-fractional negative binomial process and
//!   order-statistic identities for uniformly marked jumps.
//! - [`specfun`]: Mittag-Leffler, Wright, and generalized Wright kernels.
//! - [`combin`]: enumeration of {(x₁,…,x_k): Σ j·x_j = n} and weighted sums.
//! - [`stats`]: χ²/KS goodness-of-fit tests and deterministic parallel Monte
//!   Carlo drivers used by the verification suites.

pub mod dd;

pub mod combin;
pub mod ngcp;
pub mod process;
pub mod quad;
pub mod specfun;
pub mod stats;
pub mod subordinators;

//! The base counting process run on random clocks: inverse stable
//! (fractional), subordinator (space-fractional and friends), multistable,
//! and their compositions.
//!
//! Every pmf evaluator returns a [`RoutedPmf`] that records which analytic
//! route produced the numbers and whether a documented fallback fired, so
//! downstream consumers can tell a closed-form evaluation from a Monte Carlo
//! estimate.  Sampling composes exactly in law layer by layer: the clock fed
//! to the base process is drawn from the marginal of the composed time
//! changes, never from a discretized path, except for the multistable
//! subordinator which has no known exact marginal sampler.

use rand::Rng;
use rand_distr::Distribution;
use thiserror::Error;

use crate::combin::CombinError;
use crate::ngcp::{ngcp_sample, NgcpError, RateFunctionSet};
use crate::process::{GcpParams, ProcessError, TruncatedPmf};
use crate::specfun::SpecFunError;
use crate::stats::{monte_carlo, CountAccumulator, McConfig, StatsError};
use crate::subordinators::{
    inverse_stable_marginal, multistable_path, BernsteinFn, StabilityProfile, SubordinatorError,
};

mod bell;
mod gfcp;
mod moments;
mod spacefrac;
mod tcgcp;

pub use gfcp::{gfcp_governing_check, gfcp_pmf, ngfcp_pmf, GoverningReport};
pub use moments::{lrd_estimate, mfa_moments, LrdReport};
pub use spacefrac::{
    gsfcp_pgf, gsfcp_pmf, gsmcp_first_passage, gsmcp_first_passage_stepped, gsmcp_levy_weights,
    gstfcp_pgf, gstfcp_pmf, stfpp_pmf,
};
pub use tcgcp::{
    tcgcp_first_passage, tcgcp_first_passage_law, tcgcp_hitting_prob, tcgcp_jump_rates,
    tcgcp_pmf, tcgcp_rate_tail, tcgfcp_sample, FirstPassageLaw,
};

#[derive(Debug, Error)]
pub enum TimeChangeError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("series diverged: {0}")]
    Divergent(String),
    #[error("numerical consistency check failed: {0}")]
    Inconsistent(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Combin(#[from] CombinError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Ngcp(#[from] NgcpError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error(transparent)]
    Subordinator(#[from] SubordinatorError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub type Result<T> = std::result::Result<T, TimeChangeError>;

pub(crate) fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(TimeChangeError::BadParameter(msg.into()))
    }
}

/// How a pmf was (or should be) evaluated.  Each evaluator accepts the
/// subset it implements and rejects the rest with an unsupported-method
/// error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmfMethod {
    /// Mittag-Leffler derivative expansion.
    Ml,
    /// Numerical integration against the inverse-stable density.
    Quadrature,
    /// Direct series summation.
    Series,
    /// Integration of the governing differential system.
    Ode,
    /// Seeded Monte Carlo frequencies.
    Mc { sims: u64, seed: u64 },
}

impl std::fmt::Display for PmfMethod {
    fn fmt(&self, w: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PmfMethod::Ml => write!(w, "ml"),
            PmfMethod::Quadrature => write!(w, "quadrature"),
            PmfMethod::Series => write!(w, "series"),
            PmfMethod::Ode => write!(w, "ode"),
            PmfMethod::Mc { sims, seed } => write!(w, "mc(sims={sims}, seed={seed})"),
        }
    }
}

/// The Monte Carlo configuration used when an analytic route gives up and
/// falls back.  Fixed so that fallback results are reproducible.
pub const FALLBACK_MC: PmfMethod = PmfMethod::Mc {
    sims: 200_000,
    seed: 271_828_183,
};

/// A pmf annotated with the route that produced it.  `fallback_notice` is
/// `None` when the requested method ran to completion, and explains what
/// failed (and what ran instead) when it did not.
#[derive(Debug, Clone)]
pub struct RoutedPmf {
    pub pmf: TruncatedPmf,
    pub method: PmfMethod,
    pub fallback_notice: Option<String>,
}

/// One layer of random clock.
#[derive(Clone)]
pub enum TimeChange {
    /// Inverse (hitting-time) stable subordinator with index `alpha`.
    InverseStable { alpha: f64 },
    /// A driftless subordinator described by its Bernstein function.
    Subordinator(BernsteinFn),
    /// Stable subordinator whose index varies in time.
    Multistable(StabilityProfile),
}

/// The process being run on the composed clock.
#[derive(Clone)]
pub enum BaseProcess {
    Homogeneous(GcpParams),
    Inhomogeneous(RateFunctionSet),
}

/// Slice hint handed to the multistable path sampler; the sampler refines it
/// further until the index is nearly constant per slice.
const MULTISTABLE_SAMPLE_DT: f64 = 0.05;

/// A base process together with a non-empty chain of time changes.  The
/// first chain entry is applied to physical time, the next to that clock,
/// and so on; the last entry produces the clock the base process reads.
#[derive(Clone)]
pub struct TimeChangeSpec {
    base: BaseProcess,
    chain: Vec<TimeChange>,
}

impl TimeChangeSpec {
    pub fn new(base: BaseProcess, chain: Vec<TimeChange>) -> Result<Self> {
        require(!chain.is_empty(), "time-change chain must be non-empty")?;
        for tc in &chain {
            if let TimeChange::InverseStable { alpha } = tc {
                require(
                    *alpha > 0.0 && *alpha < 1.0,
                    format!("inverse stable index must lie in (0,1), got {alpha}"),
                )?;
            }
        }
        Ok(TimeChangeSpec { base, chain })
    }

    pub fn base(&self) -> &BaseProcess {
        &self.base
    }

    pub fn chain(&self) -> &[TimeChange] {
        &self.chain
    }

    /// Draws the composed process value at time `t`.  Each layer draws from
    /// its exact marginal given the inner clock; only the multistable layer
    /// discretizes (in slices of at most [`MULTISTABLE_SAMPLE_DT`], refined
    /// until the index moves by less than 0.01 per slice).
    pub fn sample_at<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Result<u64> {
        require(t >= 0.0 && t.is_finite(), format!("need t >= 0, got {t}"))?;
        let mut clock = t;
        for tc in &self.chain {
            if clock == 0.0 {
                break;
            }
            clock = match tc {
                TimeChange::InverseStable { alpha } => {
                    inverse_stable_marginal(*alpha, clock, rng)?
                }
                TimeChange::Subordinator(f) => f.increment(clock, rng)?,
                TimeChange::Multistable(profile) => {
                    multistable_path(profile, clock, MULTISTABLE_SAMPLE_DT, rng)?.last_value()
                }
            };
        }
        match &self.base {
            BaseProcess::Homogeneous(p) => Ok(gcp_count_at(p, clock, rng)),
            BaseProcess::Inhomogeneous(r) => {
                if clock == 0.0 {
                    Ok(0)
                } else {
                    Ok(ngcp_sample(r, clock, rng)?.terminal())
                }
            }
        }
    }
}

/// Poisson draw that tolerates the degenerate ends: zero mean gives zero,
/// and a mean too large for the truncated histograms to ever resolve
/// saturates instead of being sampled.
pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean > 1e15 {
        return u64::MAX;
    }
    let d = rand_distr::Poisson::new(mean).expect("mean is positive and finite");
    d.sample(rng) as u64
}

/// Terminal value of the base process at a fixed clock value, drawn without
/// building the path: the size-j event count is Poisson(λ_j · clock).
pub(crate) fn gcp_count_at<R: Rng + ?Sized>(p: &GcpParams, clock: f64, rng: &mut R) -> u64 {
    let mut total: u64 = 0;
    for (i, &l) in p.lambda().iter().enumerate() {
        let events = poisson_count(l * clock, rng);
        total = total.saturating_add(events.saturating_mul(i as u64 + 1));
    }
    total
}

/// Empirical pmf over `sims` draws of `sample`, on states 0..=n_max.
pub(crate) fn empirical_pmf<F>(sims: u64, seed: u64, n_max: usize, sample: F) -> Result<TruncatedPmf>
where
    F: Fn(&mut rand_chacha::ChaCha12Rng) -> u64 + Sync,
{
    let hist = monte_carlo(
        McConfig::new(sims, seed),
        || CountAccumulator::new(n_max),
        |acc, rng| acc.push(sample(rng)),
    )?;
    let total = hist.total() as f64;
    let freqs: Vec<f64> = hist.counts().iter().map(|&c| c as f64 / total).collect();
    Ok(TruncatedPmf::new(freqs, 1e-9)?)
}

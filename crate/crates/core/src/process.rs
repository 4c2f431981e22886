//! The base counting process: jumps of sizes 1..k at independent rates, with
//! exact pmf/pgf/moments, a compound-Poisson sampler, the conditional law of
//! the first arrival, and the extreme-order limits of its fractional variant.

use crate::combin::{self, CombinError};
use crate::specfun::{self, MlParams, SpecFunError};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProcessError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error(transparent)]
    Combin(#[from] CombinError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

pub type Result<T> = std::result::Result<T, ProcessError>;

/// Jump rates of the process.  Size j ∈ {1,…,k} occurs at rate `lambda[j-1]`;
/// the total event rate Λ is cached at construction and used everywhere else,
/// so invariants quoted downstream refer to these stored values.
#[derive(Debug, Clone, PartialEq)]
pub struct GcpParams {
    lambda: Vec<f64>,
    total: f64,
}

impl GcpParams {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(ProcessError::BadParameter(
                "need at least one jump rate".into(),
            ));
        }
        if let Some(&bad) = lambda.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(ProcessError::BadParameter(format!(
                "jump rates must be positive and finite, got {bad}"
            )));
        }
        let total = lambda.iter().sum();
        Ok(GcpParams { lambda, total })
    }

    /// Number of distinct jump sizes.
    pub fn k(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Total event rate Λ = Σ λ_j.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Σ j λ_j, the drift of the counted value per unit time.
    pub fn mean_rate(&self) -> f64 {
        self.lambda
            .iter()
            .enumerate()
            .map(|(i, l)| (i + 1) as f64 * l)
            .sum()
    }

    /// Σ j² λ_j, the variance growth per unit time.
    pub fn variance_rate(&self) -> f64 {
        self.lambda
            .iter()
            .enumerate()
            .map(|(i, l)| ((i + 1) as f64).powi(2) * l)
            .sum()
    }

    /// Σ_j λ_j (1 − u^j), the decay rate of the pgf E u^{M(t)} in t.  This is
    /// also the exponent handed to the subordinated variants, which replace
    /// the plain exponential in t by their own transforms of it.
    pub fn pgf_rate(&self, u: f64) -> f64 {
        let mut s = 0.0;
        let mut c = 0.0;
        for (i, &l) in self.lambda.iter().enumerate() {
            combin::neumaier_add(&mut s, &mut c, l * (1.0 - u.powi(i as i32 + 1)));
        }
        s + c
    }

    /// Smallest state-space cutoff N whose truncated mass at elapsed
    /// operational time t is certified below 1e−10.
    pub fn default_n_max(&self, t: f64) -> usize {
        combin::certified_n_max(self.k(), self.total * t, 1e-10)
    }
}

/// A pmf over states 0..=N together with a certified bound on the mass that
/// lives beyond N.  Constructors clamp sub-rounding negatives to zero and set
/// the tail to the exact mass defect, so stored entries plus the tail always
/// account for the whole distribution.
#[derive(Debug, Clone)]
pub struct TruncatedPmf {
    probs: Vec<f64>,
    tail_bound: f64,
}

impl TruncatedPmf {
    /// Wraps raw probabilities.  `mass_tol` bounds how far the total mass may
    /// exceed 1 (and how negative an entry may dip) before the input is
    /// rejected as a numerical failure rather than repaired; analytic routes
    /// pass 1e−12, quadrature and ODE routes pass their own error budget.
    pub fn new(mut probs: Vec<f64>, mass_tol: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(ProcessError::BadParameter("empty pmf".into()));
        }
        for p in probs.iter_mut() {
            if !p.is_finite() {
                return Err(ProcessError::NumericalFailure(
                    "non-finite probability entry".into(),
                ));
            }
            if *p < 0.0 {
                if *p < -mass_tol {
                    return Err(ProcessError::NumericalFailure(format!(
                        "probability entry {p} below -{mass_tol}"
                    )));
                }
                *p = 0.0;
            }
        }
        let mut mass = 0.0;
        let mut comp = 0.0;
        for &p in &probs {
            combin::neumaier_add(&mut mass, &mut comp, p);
        }
        let mass = mass + comp;
        if mass > 1.0 + mass_tol {
            return Err(ProcessError::NumericalFailure(format!(
                "pmf mass {mass} exceeds 1 by more than {mass_tol}"
            )));
        }
        if mass > 1.0 {
            for p in probs.iter_mut() {
                *p /= mass;
            }
            return Ok(TruncatedPmf { probs, tail_bound: 0.0 });
        }
        Ok(TruncatedPmf { probs, tail_bound: 1.0 - mass })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability of state n; zero beyond the stored range.
    pub fn prob(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Σ n p_n over the stored range (the tail is not extrapolated).
    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Σ uⁿ p_n over the stored range.
    pub fn pgf_partial_sum(&self, u: f64) -> f64 {
        let mut s = 0.0;
        let mut c = 0.0;
        // Horner would lose the per-term tail control, so sum directly.
        let mut upow = 1.0;
        for &p in &self.probs {
            combin::neumaier_add(&mut s, &mut c, upow * p);
            upow *= u;
        }
        s + c
    }
}

/// One realized trajectory: event times with their jump sizes on [0, horizon].
#[derive(Debug, Clone)]
pub struct SamplePath {
    event_times: Vec<f64>,
    jump_sizes: Vec<u32>,
    horizon: f64,
}

impl SamplePath {
    pub fn from_events(event_times: Vec<f64>, jump_sizes: Vec<u32>, horizon: f64) -> Result<Self> {
        if event_times.len() != jump_sizes.len() {
            return Err(ProcessError::BadParameter(
                "event times and jump sizes differ in length".into(),
            ));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(ProcessError::BadParameter(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        let mut prev = 0.0;
        for &s in &event_times {
            if !(s > prev) || s > horizon {
                return Err(ProcessError::BadParameter(
                    "event times must be strictly increasing within (0, horizon]".into(),
                ));
            }
            prev = s;
        }
        if jump_sizes.iter().any(|&j| j == 0) {
            return Err(ProcessError::BadParameter("jump sizes must be >= 1".into()));
        }
        Ok(SamplePath { event_times, jump_sizes, horizon })
    }

    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn jump_sizes(&self) -> &[u32] {
        &self.jump_sizes
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Value of the step function at time t (right-continuous).
    pub fn value(&self, t: f64) -> u64 {
        let idx = self.event_times.partition_point(|&s| s <= t);
        self.jump_sizes[..idx].iter().map(|&j| j as u64).sum()
    }

    /// Value at the horizon.
    pub fn terminal(&self) -> u64 {
        self.jump_sizes.iter().map(|&j| j as u64).sum()
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(ProcessError::BadParameter(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    Ok(())
}

/// Exact pmf over 0..=n_max: p(n,t) = e^{−Λt} Σ_{Ω(k,n)} Π (λ_j t)^{x_j}/x_j!.
/// The tail bound is the exact mass defect of the stored entries.
pub fn gcp_pmf(p: &GcpParams, t: f64, n_max: usize) -> Result<TruncatedPmf> {
    check_time(t)?;
    if t == 0.0 {
        let mut probs = vec![0.0; n_max + 1];
        probs[0] = 1.0;
        return TruncatedPmf::new(probs, 1e-12);
    }
    if p.total * t > 650.0 {
        return Err(ProcessError::BadParameter(format!(
            "event intensity Λt = {} too large for the direct pmf",
            p.total * t
        )));
    }
    let scaled: Vec<f64> = p.lambda.iter().map(|l| l * t).collect();
    let norm = (-p.total * t).exp();
    let mut probs = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let s = combin::omega_weighted_sum(p.k(), n as u32, &scaled, |_| 1.0)?;
        probs.push(s * norm);
    }
    TruncatedPmf::new(probs, 1e-12)
}

/// Probability generating function E u^{M(t)} = exp(−t Σ_j λ_j (1 − u^j)).
pub fn gcp_pgf(p: &GcpParams, u: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    if !(u.abs() <= 1.0) {
        return Err(ProcessError::BadParameter(format!(
            "pgf argument must satisfy |u| <= 1, got {u}"
        )));
    }
    Ok((-t * p.pgf_rate(u)).exp())
}

/// Mean and variance of M(t): (t Σ j λ_j, t Σ j² λ_j).
pub fn gcp_moments(p: &GcpParams, t: f64) -> Result<(f64, f64)> {
    check_time(t)?;
    Ok((t * p.mean_rate(), t * p.variance_rate()))
}

pub(crate) fn exp_inter_arrival<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}

pub(crate) fn draw_jump_size<R: Rng + ?Sized>(p: &GcpParams, rng: &mut R) -> u32 {
    let target: f64 = rng.gen::<f64>() * p.total;
    let mut acc = 0.0;
    for (i, &l) in p.lambda.iter().enumerate() {
        acc += l;
        if target < acc {
            return i as u32 + 1;
        }
    }
    p.k() as u32
}

/// Draws one path on [0, horizon]: exponential(Λ) inter-arrival times, each
/// event carrying size j with probability λ_j/Λ.
pub fn gcp_sample<R: Rng + ?Sized>(p: &GcpParams, horizon: f64, rng: &mut R) -> Result<SamplePath> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(ProcessError::BadParameter(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let mut event_times = Vec::new();
    let mut jump_sizes = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp_inter_arrival(p.total, rng);
        if t > horizon {
            break;
        }
        event_times.push(t);
        jump_sizes.push(draw_jump_size(p, rng));
    }
    Ok(SamplePath { event_times, jump_sizes, horizon })
}

/// Pr{Z₁ ≤ x | M(t) = 1}: given exactly one event by time t, its arrival
/// epoch is uniform on [0, t], so this returns x/t.
pub fn conditional_first_arrival(p: &GcpParams, t: f64, x: f64) -> Result<f64> {
    let _ = p;
    if !(t > 0.0) || !t.is_finite() {
        return Err(ProcessError::BadParameter(format!(
            "conditioning time must be positive, got {t}"
        )));
    }
    if !(0.0..=t).contains(&x) {
        return Err(ProcessError::BadParameter(format!(
            "query point {x} outside [0, {t}]"
        )));
    }
    Ok(x / t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremeMode {
    Max,
    Min,
}

/// Distribution of extremes of the iid marks accumulated by the fractional
/// variant up to time t, given the marks' cdf value F at the query point.
/// Max mode returns Pr{max ≤ x} = E_{β,1}(−Σ_j λ_j (1−F^j) t^β); min mode
/// returns the survival analogue E_{β,1}(−Σ_j λ_j (1−(1−F)^j) t^β).
pub fn gfcp_extremes(
    p: &GcpParams,
    beta: f64,
    t: f64,
    f_at_x: f64,
    mode: ExtremeMode,
) -> Result<f64> {
    check_time(t)?;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(ProcessError::BadParameter(format!(
            "order must lie in (0, 1], got {beta}"
        )));
    }
    if !(0.0..=1.0).contains(&f_at_x) {
        return Err(ProcessError::BadParameter(format!(
            "cdf value must lie in [0, 1], got {f_at_x}"
        )));
    }
    let g = match mode {
        ExtremeMode::Max => f_at_x,
        ExtremeMode::Min => 1.0 - f_at_x,
    };
    let arg = -t.powf(beta) * p.pgf_rate(g);
    Ok(specfun::mittag_leffler(MlParams::new(beta, 1.0)?, arg)?)
}

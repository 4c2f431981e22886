//! Time-dependent jump rates: each size j ∈ {1,…,k} arrives with its own
//! deterministic intensity λ_j(t), so increments stay independent but are no
//! longer stationary.  Window masses Λ_j(s,t) = ∫_s^t λ_j(u)du drive the
//! increment pmf, pgf, and characteristic function; paths are sampled by
//! thinning against declared rate bounds; subtracting Σ j Λ_j(t) from a path
//! yields the martingale compensation used by the moment checks.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::combin::{self, CombinError};
use crate::process::{ProcessError, SamplePath, TruncatedPmf};
use crate::quad::adaptive_simpson;
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NgcpError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("cumulative rate quadrature failed: {0}")]
    Quadrature(String),
    #[error("no finite rate bound declared for jump size {0}, so thinning cannot run")]
    MissingSupBound(usize),
    #[error(transparent)]
    Combin(#[from] CombinError),
    #[error(transparent)]
    Process(#[from] ProcessError),
}

pub type Result<T> = std::result::Result<T, NgcpError>;

/// Tolerance handed to the quadrature fallback for cumulative rates.  The
/// window masses enter the pmf inside exponentials and powers, so their error
/// dominates the pmf error and is kept well below every downstream budget.
const QUAD_TOL: f64 = 1e-10;

/// Shared callable used by custom rate functions.
pub type RateCallable = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One intensity λ(t) ≥ 0 on [0, ∞).  The parametric families carry
/// closed-form cumulatives and exact rate bounds; `Custom` wraps arbitrary
/// code and falls back to quadrature unless a cumulative is supplied.
#[derive(Clone)]
pub enum RateFn {
    /// λ(t) = c.
    Constant(f64),
    /// λ(t) = slope·t.
    Linear(f64),
    /// λ(t) = scale·t^exponent with exponent > −1 so the cumulative is
    /// finite.  Negative exponents make the rate unbounded near zero, which
    /// keeps the pmf available but rules out thinning.
    Power { scale: f64, exponent: f64 },
    /// λ(t) = offset + amplitude·sin(frequency·t) with amplitude ≤ offset so
    /// the rate never goes negative.
    Sinusoid {
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Arbitrary rate.  `cumulative`, when given, must equal ∫_0^t rate;
    /// `sup_bound` maps a horizon T to an upper bound of the rate on [0, T]
    /// and is required for sampling, since a black-box callable cannot be
    /// maximized safely.
    Custom {
        rate: RateCallable,
        cumulative: Option<RateCallable>,
        sup_bound: Option<RateCallable>,
    },
}

impl fmt::Debug for RateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFn::Constant(c) => write!(f, "Constant({c})"),
            RateFn::Linear(s) => write!(f, "Linear({s})"),
            RateFn::Power { scale, exponent } => {
                write!(f, "Power {{ scale: {scale}, exponent: {exponent} }}")
            }
            RateFn::Sinusoid { offset, amplitude, frequency } => write!(
                f,
                "Sinusoid {{ offset: {offset}, amplitude: {amplitude}, frequency: {frequency} }}"
            ),
            RateFn::Custom { .. } => f.write_str("Custom { .. }"),
        }
    }
}

impl RateFn {
    /// Wraps an arbitrary rate with an optional closed-form cumulative and an
    /// optional declared bound of the rate over [0, T].
    pub fn custom(
        rate: impl Fn(f64) -> f64 + Send + Sync + 'static,
        cumulative: Option<RateCallable>,
        sup_bound: Option<RateCallable>,
    ) -> RateFn {
        RateFn::Custom {
            rate: Arc::new(rate),
            cumulative,
            sup_bound,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(NgcpError::BadParameter(msg));
        match *self {
            RateFn::Constant(c) => {
                if !(c >= 0.0) || !c.is_finite() {
                    return bad(format!("constant rate must be >= 0 and finite, got {c}"));
                }
            }
            RateFn::Linear(s) => {
                if !(s >= 0.0) || !s.is_finite() {
                    return bad(format!("linear slope must be >= 0 and finite, got {s}"));
                }
            }
            RateFn::Power { scale, exponent } => {
                if !(scale >= 0.0) || !scale.is_finite() {
                    return bad(format!("power scale must be >= 0 and finite, got {scale}"));
                }
                if !(exponent > -1.0) || !exponent.is_finite() {
                    return bad(format!(
                        "power exponent must be > -1 and finite, got {exponent}"
                    ));
                }
            }
            RateFn::Sinusoid { offset, amplitude, frequency } => {
                if !(amplitude >= 0.0) || !offset.is_finite() || !(offset >= amplitude) {
                    return bad(format!(
                        "sinusoid needs 0 <= amplitude <= offset, got offset {offset}, amplitude {amplitude}"
                    ));
                }
                if !(frequency > 0.0) || !frequency.is_finite() {
                    return bad(format!(
                        "sinusoid frequency must be > 0 and finite, got {frequency}"
                    ));
                }
            }
            RateFn::Custom { .. } => {}
        }
        Ok(())
    }

    /// λ(t).  For a negative power exponent this is +∞ at t = 0.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            RateFn::Constant(c) => *c,
            RateFn::Linear(s) => s * t,
            RateFn::Power { scale, exponent } => scale * t.powf(*exponent),
            RateFn::Sinusoid { offset, amplitude, frequency } => {
                offset + amplitude * (frequency * t).sin()
            }
            RateFn::Custom { rate, .. } => rate(t),
        }
    }

    /// Window mass Λ(s,t) = ∫_s^t λ(u) du for 0 ≤ s ≤ t.  Custom rates
    /// without a closed-form cumulative are integrated adaptively; a window
    /// that comes out negative beyond rounding is rejected, since cumulative
    /// rates must be nondecreasing.
    pub fn cumulative_between(&self, s: f64, t: f64) -> Result<f64> {
        if !(0.0 <= s && s <= t) || !t.is_finite() {
            return Err(NgcpError::BadParameter(format!(
                "need 0 <= s <= t < inf, got s = {s}, t = {t}"
            )));
        }
        let w = match self {
            RateFn::Constant(c) => c * (t - s),
            RateFn::Linear(slope) => 0.5 * slope * (t * t - s * s),
            RateFn::Power { scale, exponent } => {
                scale / (exponent + 1.0) * (t.powf(exponent + 1.0) - s.powf(exponent + 1.0))
            }
            RateFn::Sinusoid { offset, amplitude, frequency } => {
                offset * (t - s)
                    + amplitude / frequency * ((frequency * s).cos() - (frequency * t).cos())
            }
            RateFn::Custom { cumulative: Some(c), .. } => c(t) - c(s),
            RateFn::Custom { rate, .. } => {
                let (val, err) = adaptive_simpson(&|u| rate(u), s, t, QUAD_TOL);
                if !val.is_finite() || err > 100.0 * QUAD_TOL {
                    return Err(NgcpError::Quadrature(format!(
                        "integral of the rate over [{s}, {t}] reported error {err}"
                    )));
                }
                val
            }
        };
        if !w.is_finite() || w < -1e-8 {
            return Err(NgcpError::BadParameter(format!(
                "cumulative rate decreased by {w} over [{s}, {t}]"
            )));
        }
        Ok(w.max(0.0))
    }

    /// Cumulative rate Λ(t) = ∫_0^t λ(u) du.
    pub fn cumulative(&self, t: f64) -> Result<f64> {
        self.cumulative_between(0.0, t)
    }

    /// Upper bound of λ on [0, horizon], exact for the parametric families
    /// and user-declared for `Custom`.  `None` means no usable bound exists,
    /// which blocks thinning but nothing else.
    pub fn sup_bound(&self, horizon: f64) -> Option<f64> {
        match self {
            RateFn::Constant(c) => Some(*c),
            RateFn::Linear(s) => Some(s * horizon),
            RateFn::Power { scale, exponent } => {
                if *scale == 0.0 {
                    Some(0.0)
                } else if *exponent >= 0.0 {
                    Some(scale * horizon.powf(*exponent))
                } else {
                    None
                }
            }
            RateFn::Sinusoid { offset, amplitude, .. } => Some(offset + amplitude),
            RateFn::Custom { sup_bound, .. } => sup_bound.as_ref().map(|f| f(horizon)),
        }
    }
}

impl FromStr for RateFn {
    type Err = NgcpError;

    /// Parses the config grammar for rate families: `constant:RATE`,
    /// `linear:SLOPE`, `power:a=SCALE,gamma=EXPONENT`, and
    /// `sin:offset=BASE,amp=AMPLITUDE,freq=FREQUENCY`.
    fn from_str(s: &str) -> Result<RateFn> {
        let (family, args) = s.split_once(':').ok_or_else(|| {
            NgcpError::BadParameter(format!("rate spec {s:?} is missing the family:args colon"))
        })?;
        let rf = match family.trim() {
            "constant" => RateFn::Constant(parse_num(args)?),
            "linear" => RateFn::Linear(parse_num(args)?),
            "power" => {
                let [a, gamma] = parse_kv(args, ["a", "gamma"])?;
                RateFn::Power { scale: a, exponent: gamma }
            }
            "sin" => {
                let [offset, amp, freq] = parse_kv(args, ["offset", "amp", "freq"])?;
                RateFn::Sinusoid { offset, amplitude: amp, frequency: freq }
            }
            other => {
                return Err(NgcpError::BadParameter(format!(
                    "unknown rate family {other:?}; expected constant, linear, power, or sin"
                )))
            }
        };
        rf.validate()?;
        Ok(rf)
    }
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| NgcpError::BadParameter(format!("expected a number, got {s:?}")))
}

fn parse_kv<const N: usize>(args: &str, keys: [&str; N]) -> Result<[f64; N]> {
    let mut out = [f64::NAN; N];
    let mut seen = [false; N];
    for piece in args.split(',') {
        let (key, val) = piece.split_once('=').ok_or_else(|| {
            NgcpError::BadParameter(format!("expected key=value, got {piece:?}"))
        })?;
        let idx = keys
            .iter()
            .position(|k| *k == key.trim())
            .ok_or_else(|| {
                NgcpError::BadParameter(format!(
                    "unknown key {:?}; expected one of {keys:?}",
                    key.trim()
                ))
            })?;
        if seen[idx] {
            return Err(NgcpError::BadParameter(format!(
                "duplicate key {:?}",
                key.trim()
            )));
        }
        out[idx] = parse_num(val)?;
        seen[idx] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(NgcpError::BadParameter(format!(
            "missing key {:?}",
            keys[missing]
        )));
    }
    Ok(out)
}

/// The k intensities of the process.  `rates()[j-1]` drives jumps of size j.
/// Immutable after construction and freely shareable across threads.
#[derive(Debug, Clone)]
pub struct RateFunctionSet {
    rates: Vec<RateFn>,
}

impl RateFunctionSet {
    pub fn new(rates: Vec<RateFn>) -> Result<Self> {
        if rates.is_empty() {
            return Err(NgcpError::BadParameter(
                "need at least one rate function".into(),
            ));
        }
        for rf in &rates {
            rf.validate()?;
        }
        Ok(RateFunctionSet { rates })
    }

    /// Builds a set from `rate.jN = "family:args"` config pairs.  Sizes must
    /// cover 1..=k with no gaps or repeats; k is the largest size present.
    pub fn from_config<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut slots: Vec<Option<RateFn>> = Vec::new();
        for (key, val) in pairs {
            let size = key
                .strip_prefix("rate.j")
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|&s| (1..=4096).contains(&s))
                .ok_or_else(|| {
                    NgcpError::BadParameter(format!(
                        "rate key must look like rate.j1, got {key:?}"
                    ))
                })?;
            if slots.len() < size {
                slots.resize(size, None);
            }
            if slots[size - 1].is_some() {
                return Err(NgcpError::BadParameter(format!(
                    "duplicate rate for jump size {size}"
                )));
            }
            slots[size - 1] = Some(val.parse()?);
        }
        let rates = slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.ok_or_else(|| {
                    NgcpError::BadParameter(format!("missing rate for jump size {}", i + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rates)
    }

    /// Number of distinct jump sizes.
    pub fn k(&self) -> usize {
        self.rates.len()
    }

    pub fn rates(&self) -> &[RateFn] {
        &self.rates
    }

    /// All window masses Λ_j(s,t) for j = 1..=k.
    pub fn cumulatives_between(&self, s: f64, t: f64) -> Result<Vec<f64>> {
        self.rates
            .iter()
            .map(|rf| rf.cumulative_between(s, t))
            .collect()
    }

    /// Smallest cutoff N with the increment mass beyond N certified below
    /// 1e−10.
    pub fn default_n_max(&self, t: f64, v: f64) -> Result<usize> {
        let total: f64 = self.cumulatives_between(v, t + v)?.iter().sum();
        Ok(combin::certified_n_max(self.k(), total, 1e-10))
    }
}

fn check_time(t: f64, what: &str) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(NgcpError::BadParameter(format!(
            "{what} must be finite and >= 0, got {t}"
        )));
    }
    Ok(())
}

/// Pmf of the increment I(t,v) = M(t+v) − M(v) over 0..=n_max.  Structurally
/// the homogeneous pmf with λ_j t replaced by the window masses:
/// q_n(t,v) = e^{−Σ_j Λ_j(v,t+v)} Σ_{Ω(k,n)} Π_j Λ_j(v,t+v)^{x_j}/x_j!.
pub fn ngcp_increment_pmf(
    r: &RateFunctionSet,
    t: f64,
    v: f64,
    n_max: usize,
) -> Result<TruncatedPmf> {
    check_time(t, "elapsed time")?;
    check_time(v, "window start")?;
    if t == 0.0 {
        let mut probs = vec![0.0; n_max + 1];
        probs[0] = 1.0;
        return Ok(TruncatedPmf::new(probs, 1e-12)?);
    }
    let masses = r.cumulatives_between(v, t + v)?;
    let total: f64 = masses.iter().sum();
    if total > 650.0 {
        return Err(NgcpError::BadParameter(format!(
            "window intensity Σ Λ_j = {total} too large for the direct pmf"
        )));
    }
    let norm = (-total).exp();
    let mut probs = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let s = combin::omega_weighted_sum(r.k(), n as u32, &masses, |_| 1.0)?;
        probs.push(s * norm);
    }
    Ok(TruncatedPmf::new(probs, 1e-12)?)
}

/// Characteristic function of the increment:
/// exp(Σ_j Λ_j(v,t+v)(e^{iξj} − 1)).
pub fn ngcp_char_fn(r: &RateFunctionSet, t: f64, v: f64, xi: f64) -> Result<Complex64> {
    check_time(t, "elapsed time")?;
    check_time(v, "window start")?;
    if !xi.is_finite() {
        return Err(NgcpError::BadParameter(format!(
            "frequency must be finite, got {xi}"
        )));
    }
    let masses = r.cumulatives_between(v, t + v)?;
    let mut re = 0.0;
    let mut re_c = 0.0;
    let mut im = 0.0;
    let mut im_c = 0.0;
    for (i, &m) in masses.iter().enumerate() {
        let jxi = (i as f64 + 1.0) * xi;
        combin::neumaier_add(&mut re, &mut re_c, m * (jxi.cos() - 1.0));
        combin::neumaier_add(&mut im, &mut im_c, m * jxi.sin());
    }
    Ok(Complex64::from_polar((re + re_c).exp(), im + im_c))
}

/// Probability generating function E u^{M(t)} = exp(Σ_j Λ_j(t)(u^j − 1)).
pub fn ngcp_pgf(r: &RateFunctionSet, t: f64, u: f64) -> Result<f64> {
    check_time(t, "time")?;
    if !(u.abs() <= 1.0) {
        return Err(NgcpError::BadParameter(format!(
            "pgf argument must satisfy |u| <= 1, got {u}"
        )));
    }
    let masses = r.cumulatives_between(0.0, t)?;
    let mut s = 0.0;
    let mut c = 0.0;
    for (i, &m) in masses.iter().enumerate() {
        combin::neumaier_add(&mut s, &mut c, m * (u.powi(i as i32 + 1) - 1.0));
    }
    Ok((s + c).exp())
}

/// Mean and variance of M(t): (Σ_j j Λ_j(t), Σ_j j² Λ_j(t)).
pub fn ngcp_moments(r: &RateFunctionSet, t: f64) -> Result<(f64, f64)> {
    check_time(t, "time")?;
    let masses = r.cumulatives_between(0.0, t)?;
    let mut mean = 0.0;
    let mut var = 0.0;
    for (i, &m) in masses.iter().enumerate() {
        let j = i as f64 + 1.0;
        mean += j * m;
        var += j * j * m;
    }
    Ok((mean, var))
}

/// Draws one path on [0, horizon] by thinning: for each size j, candidate
/// events arrive at the declared bound rate and survive with probability
/// λ_j(t)/bound, then the k streams are merged in time order.  Every rate
/// needs a finite `sup_bound` over the horizon.
pub fn ngcp_sample<R: Rng + ?Sized>(
    r: &RateFunctionSet,
    horizon: f64,
    rng: &mut R,
) -> Result<SamplePath> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(NgcpError::BadParameter(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let mut events: Vec<(f64, u32)> = Vec::new();
    for (i, rf) in r.rates.iter().enumerate() {
        let size = i + 1;
        let bound = rf
            .sup_bound(horizon)
            .ok_or(NgcpError::MissingSupBound(size))?;
        if !bound.is_finite() || !(bound >= 0.0) {
            return Err(NgcpError::BadParameter(format!(
                "rate bound for jump size {size} must be finite and >= 0, got {bound}"
            )));
        }
        if bound == 0.0 {
            continue;
        }
        let mut t = 0.0;
        loop {
            t += crate::process::exp_inter_arrival(bound, rng);
            if t > horizon {
                break;
            }
            if rng.gen::<f64>() * bound < rf.eval(t) {
                events.push((t, size as u32));
            }
        }
    }
    events.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let (times, sizes) = events.into_iter().unzip();
    Ok(SamplePath::from_events(times, sizes, horizon)?)
}

/// Cdf of the nth arrival time: Pr{T_n ≤ t} = 1 − Σ_{x<n} q_x(t,0), clamped
/// to [0,1].  Time-dependent rates need not push total mass to 1 as t → ∞,
/// so the value at large t reports the probability that the nth event ever
/// happens rather than asserting it equals one.
pub fn ngcp_arrival_cdf(r: &RateFunctionSet, n: usize, t: f64) -> Result<f64> {
    if n == 0 {
        return Err(NgcpError::BadParameter(
            "arrival index must be >= 1".into(),
        ));
    }
    check_time(t, "time")?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let pmf = ngcp_increment_pmf(r, t, 0.0, n - 1)?;
    let mut below = 0.0;
    let mut c = 0.0;
    for &p in pmf.probs() {
        combin::neumaier_add(&mut below, &mut c, p);
    }
    Ok((1.0 - (below + c)).clamp(0.0, 1.0))
}

/// Compensated path values Q̄(t) = M(t) − Σ_j j Λ_j(t) on the given grid.
/// With the same rate set that produced the path these are martingale
/// evaluations, so their empirical mean over many paths is centered at zero.
pub fn ngcp_compensator(
    path: &SamplePath,
    r: &RateFunctionSet,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        if !(0.0..=path.horizon()).contains(&t) {
            return Err(NgcpError::BadParameter(format!(
                "grid point {t} outside the path horizon [0, {}]",
                path.horizon()
            )));
        }
        let (mean, _) = ngcp_moments(r, t)?;
        out.push(path.value(t) as f64 - mean);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{self, GcpParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// λ₁(t) = t, λ₂(t) = 1: small enough to integrate by hand, inhomogeneous
    /// enough to exercise every window-mass path.
    fn test_rates() -> RateFunctionSet {
        RateFunctionSet::new(vec![RateFn::Linear(1.0), RateFn::Constant(1.0)]).unwrap()
    }

    #[test]
    fn hand_integrated_ground_state() {
        // Λ₁(1) = 1/2 and Λ₂(1) = 1, so no event has probability e^{−3/2};
        // the next two states follow from the compositions (1,0) and
        // (2,0),(0,1): q₁ = Λ₁ e^{−3/2}, q₂ = (Λ₁²/2 + Λ₂) e^{−3/2}.
        let pmf = ngcp_increment_pmf(&test_rates(), 1.0, 0.0, 6).unwrap();
        let e = (-1.5f64).exp();
        assert!((pmf.prob(0) - 0.2231302).abs() < 1e-7);
        assert_relative_eq!(pmf.prob(0), e, max_relative = 1e-14);
        assert_relative_eq!(pmf.prob(1), 0.5 * e, max_relative = 1e-14);
        assert_relative_eq!(pmf.prob(2), 1.125 * e, max_relative = 1e-14);
    }

    #[test]
    fn constant_rates_reduce_to_the_homogeneous_process() {
        let r = RateFunctionSet::new(vec![
            RateFn::Constant(1.0),
            RateFn::Constant(0.5),
            RateFn::Constant(0.25),
        ])
        .unwrap();
        let g = GcpParams::new(vec![1.0, 0.5, 0.25]).unwrap();
        let t = 1.3;
        let n_max = g.default_n_max(t);
        let reference = process::gcp_pmf(&g, t, n_max).unwrap();
        // stationarity makes the increment law independent of the window start
        for &v in &[0.0, 0.7] {
            let pmf = ngcp_increment_pmf(&r, t, v, n_max).unwrap();
            for n in 0..=n_max {
                assert_relative_eq!(
                    pmf.prob(n),
                    reference.prob(n),
                    max_relative = 1e-10,
                    epsilon = 1e-18
                );
            }
        }
        for &u in &[-0.8, 0.0, 0.5, 1.0] {
            assert_relative_eq!(
                ngcp_pgf(&r, t, u).unwrap(),
                process::gcp_pgf(&g, u, t).unwrap(),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn zero_elapsed_time_is_a_point_mass() {
        let pmf = ngcp_increment_pmf(&test_rates(), 0.0, 2.0, 4).unwrap();
        assert_eq!(pmf.prob(0), 1.0);
        assert_eq!(pmf.prob(1), 0.0);
        assert_eq!(pmf.tail_bound(), 0.0);
    }

    #[test]
    fn quadrature_cumulative_matches_a_supplied_closed_form() {
        let rate: RateCallable = Arc::new(|t: f64| (-t).exp());
        let numeric = RateFn::Custom {
            rate: rate.clone(),
            cumulative: None,
            sup_bound: Some(Arc::new(|_| 1.0)),
        };
        let closed = RateFn::Custom {
            rate,
            cumulative: Some(Arc::new(|t: f64| 1.0 - (-t).exp())),
            sup_bound: Some(Arc::new(|_| 1.0)),
        };
        for &(s, t) in &[(0.0, 1.0), (0.5, 2.5), (1.0, 1.0)] {
            assert_relative_eq!(
                numeric.cumulative_between(s, t).unwrap(),
                closed.cumulative_between(s, t).unwrap(),
                epsilon = 1e-9
            );
        }
        let rn = RateFunctionSet::new(vec![numeric]).unwrap();
        let rc = RateFunctionSet::new(vec![closed]).unwrap();
        let a = ngcp_increment_pmf(&rn, 2.0, 0.0, 10).unwrap();
        let b = ngcp_increment_pmf(&rc, 2.0, 0.0, 10).unwrap();
        for n in 0..=10 {
            assert_relative_eq!(a.prob(n), b.prob(n), epsilon = 1e-9);
        }
    }

    #[test]
    fn char_fn_agrees_with_pmf_summation() {
        let r = test_rates();
        let (t, v) = (1.0, 0.3);
        let n_max = r.default_n_max(t, v).unwrap();
        let pmf = ngcp_increment_pmf(&r, t, v, n_max).unwrap();
        for &xi in &[-2.5, -0.7, 0.4, 1.9] {
            let direct = ngcp_char_fn(&r, t, v, xi).unwrap();
            let mut summed = Complex64::new(0.0, 0.0);
            for (n, &p) in pmf.probs().iter().enumerate() {
                summed += Complex64::from_polar(p, xi * n as f64);
            }
            assert!(
                (direct - summed).norm() <= pmf.tail_bound() + 1e-9,
                "xi={xi}: {direct} vs {summed}"
            );
            assert!(direct.norm() <= 1.0 + 1e-12);
        }
        assert_eq!(
            ngcp_char_fn(&r, t, v, 0.0).unwrap(),
            Complex64::new(1.0, 0.0)
        );
    }

    #[test]
    fn pgf_matches_pmf_summation() {
        let r = test_rates();
        let t = 1.4;
        let n_max = r.default_n_max(t, 0.0).unwrap();
        let pmf = ngcp_increment_pmf(&r, t, 0.0, n_max).unwrap();
        for &u in &[-0.9, 0.0, 0.5, 0.99] {
            let direct = ngcp_pgf(&r, t, u).unwrap();
            let summed = pmf.pgf_partial_sum(u);
            assert!(
                (direct - summed).abs() <= pmf.tail_bound() + 1e-9,
                "u={u}: pgf {direct} vs sum {summed}"
            );
        }
        assert_relative_eq!(ngcp_pgf(&r, t, 1.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn moments_match_pmf_summation() {
        let r = test_rates();
        let t = 1.2;
        let (mean, var) = ngcp_moments(&r, t).unwrap();
        assert_relative_eq!(mean, 0.5 * t * t + 2.0 * t, max_relative = 1e-14);
        assert_relative_eq!(var, 0.5 * t * t + 4.0 * t, max_relative = 1e-14);
        let pmf = ngcp_increment_pmf(&r, t, 0.0, r.default_n_max(t, 0.0).unwrap()).unwrap();
        assert_relative_eq!(pmf.mean(), mean, max_relative = 1e-8);
        let second: f64 = pmf
            .probs()
            .iter()
            .enumerate()
            .map(|(n, p)| (n * n) as f64 * p)
            .sum();
        assert_relative_eq!(second - pmf.mean() * pmf.mean(), var, max_relative = 1e-7);
    }

    #[test]
    fn governing_system_residual_vanishes_quadratically() {
        // d/dt q_n(t) = −(λ₁(t)+λ₂(t)) q_n(t) + λ₁(t) q_{n−1}(t) + λ₂(t) q_{n−2}(t)
        // checked against central differences, whose truncation error is
        // O(h²); the bound scales as h² to witness the order.
        let r = test_rates();
        for &h in &[1e-3, 5e-4] {
            for &t in &[0.6, 1.0, 1.7] {
                let up = ngcp_increment_pmf(&r, t + h, 0.0, 8).unwrap();
                let dn = ngcp_increment_pmf(&r, t - h, 0.0, 8).unwrap();
                let mid = ngcp_increment_pmf(&r, t, 0.0, 8).unwrap();
                let (l1, l2) = (t, 1.0);
                for n in 0..=8usize {
                    let diff = (up.prob(n) - dn.prob(n)) / (2.0 * h);
                    let mut rhs = -(l1 + l2) * mid.prob(n);
                    if n >= 1 {
                        rhs += l1 * mid.prob(n - 1);
                    }
                    if n >= 2 {
                        rhs += l2 * mid.prob(n - 2);
                    }
                    assert!(
                        (diff - rhs).abs() <= 8.0 * h * h,
                        "n={n} t={t} h={h}: residual {}",
                        (diff - rhs).abs()
                    );
                }
            }
        }
    }

    #[test]
    fn sampler_mean_tracks_cumulative_rates() {
        let r = RateFunctionSet::new(vec![
            RateFn::Linear(0.8),
            RateFn::Sinusoid { offset: 1.2, amplitude: 0.5, frequency: 2.0 },
        ])
        .unwrap();
        let horizon = 2.0;
        let (mean, var) = ngcp_moments(&r, horizon).unwrap();
        let sims = 60_000;
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let mut acc = 0.0;
        for _ in 0..sims {
            acc += ngcp_sample(&r, horizon, &mut rng).unwrap().terminal() as f64;
        }
        let emp = acc / sims as f64;
        let se = (var / sims as f64).sqrt();
        assert!((emp - mean).abs() < 4.0 * se, "mean {emp} vs {mean} (se {se})");
    }

    #[test]
    fn constant_rate_sampler_matches_the_homogeneous_law() {
        let r =
            RateFunctionSet::new(vec![RateFn::Constant(1.0), RateFn::Constant(1.0)]).unwrap();
        let g = GcpParams::new(vec![1.0, 1.0]).unwrap();
        let t = 1.0;
        let pmf = process::gcp_pmf(&g, t, g.default_n_max(t)).unwrap();
        let hist = crate::stats::monte_carlo(
            crate::stats::McConfig::new(100_000, 2718),
            || crate::stats::CountAccumulator::new(pmf.n_max()),
            |acc, rng| acc.push(ngcp_sample(&r, t, rng).unwrap().terminal()),
        )
        .unwrap();
        let report = crate::stats::chi_square(
            &pmf,
            &hist.observed(),
            crate::stats::DEFAULT_SIGNIFICANCE,
        )
        .unwrap();
        assert!(report.pass, "chi2 {} p {}", report.statistic, report.p_value);
    }

    #[test]
    fn zero_rates_give_an_empty_path() {
        let r =
            RateFunctionSet::new(vec![RateFn::Constant(0.0), RateFn::Constant(0.0)]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let path = ngcp_sample(&r, 3.0, &mut rng).unwrap();
        assert!(path.event_times().is_empty());
        assert_eq!(path.terminal(), 0);
        let pmf = ngcp_increment_pmf(&r, 3.0, 0.0, 3).unwrap();
        assert_eq!(pmf.prob(0), 1.0);
        assert_eq!(pmf.tail_bound(), 0.0);
    }

    #[test]
    fn thinning_needs_a_declared_bound() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let no_bound =
            RateFunctionSet::new(vec![RateFn::custom(|t| 1.0 / (1.0 + t), None, None)]).unwrap();
        assert!(matches!(
            ngcp_sample(&no_bound, 1.0, &mut rng),
            Err(NgcpError::MissingSupBound(1))
        ));
        // a power rate with negative exponent has no bound near zero
        let spike =
            RateFunctionSet::new(vec![RateFn::Power { scale: 1.0, exponent: -0.5 }]).unwrap();
        assert!(matches!(
            ngcp_sample(&spike, 1.0, &mut rng),
            Err(NgcpError::MissingSupBound(1))
        ));
        // its pmf is still available through the cumulative rate Λ(1) = 2
        let pmf = ngcp_increment_pmf(&spike, 1.0, 0.0, 10).unwrap();
        assert_relative_eq!(pmf.prob(0), (-2.0f64).exp(), max_relative = 1e-13);
    }

    #[test]
    fn arrival_cdf_matches_hand_reductions() {
        // constant rates: the first event is exponential in the total rate
        let r =
            RateFunctionSet::new(vec![RateFn::Constant(0.7), RateFn::Constant(0.5)]).unwrap();
        for &t in &[0.0, 0.5, 2.0] {
            assert_relative_eq!(
                ngcp_arrival_cdf(&r, 1, t).unwrap(),
                1.0 - (-1.2 * t).exp(),
                max_relative = 1e-12,
                epsilon = 1e-15
            );
        }
        let r = test_rates();
        let mut prev = -1.0;
        for i in 0..=12 {
            let t = 0.25 * i as f64;
            let f = ngcp_arrival_cdf(&r, 3, t).unwrap();
            assert!((0.0..=1.0).contains(&f));
            assert!(f >= prev - 1e-12, "cdf decreased at t={t}");
            prev = f;
        }
        assert_eq!(ngcp_arrival_cdf(&r, 5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn compensator_centers_simulated_paths() {
        let r = test_rates();
        let horizon = 2.0;
        let grid = [0.4, 0.8, 1.2, 1.6, 2.0];
        let sims = 100_000;
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let mut sums = [0.0f64; 5];
        for _ in 0..sims {
            let path = ngcp_sample(&r, horizon, &mut rng).unwrap();
            let q = ngcp_compensator(&path, &r, &grid).unwrap();
            for (s, v) in sums.iter_mut().zip(&q) {
                *s += v;
            }
        }
        // five simultaneous checks at 4σ each keep the family-wise false
        // alarm rate near 3e−4
        for (i, &u) in grid.iter().enumerate() {
            let (_, var) = ngcp_moments(&r, u).unwrap();
            let se = (var / sims as f64).sqrt();
            let mean = sums[i] / sims as f64;
            assert!(mean.abs() < 4.0 * se, "t={u}: mean {mean} exceeds {}", 4.0 * se);
        }
        // the compensated value at the origin is identically zero, and with a
        // single constant rate the compensation is just value − λt
        let path = ngcp_sample(&r, horizon, &mut rng).unwrap();
        assert_eq!(ngcp_compensator(&path, &r, &[0.0]).unwrap()[0], 0.0);
        let single = RateFunctionSet::new(vec![RateFn::Constant(1.5)]).unwrap();
        let p1 = ngcp_sample(&single, 1.0, &mut rng).unwrap();
        let q = ngcp_compensator(&p1, &single, &[1.0]).unwrap();
        assert_relative_eq!(q[0], p1.value(1.0) as f64 - 1.5, max_relative = 1e-14);
    }

    #[test]
    fn config_grammar_round_trips() {
        let r = RateFunctionSet::from_config([
            ("rate.j2", "constant:1.0"),
            ("rate.j1", "linear:1.0"),
        ])
        .unwrap();
        assert_eq!(r.k(), 2);
        assert_eq!(r.rates()[0].eval(2.0), 2.0);
        assert_eq!(r.rates()[1].eval(2.0), 1.0);

        let p: RateFn = "power:a=2.0,gamma=0.5".parse().unwrap();
        assert_relative_eq!(p.eval(4.0), 4.0, max_relative = 1e-15);
        let s: RateFn = "sin:offset=2.0,amp=1.0,freq=3.0".parse().unwrap();
        assert_relative_eq!(s.eval(0.0), 2.0, max_relative = 1e-15);

        for bad in [
            "linear",
            "warp:1.0",
            "power:a=1.0",
            "power:a=1,a=2,gamma=0",
            "power:a=1,gamma=0,extra=3",
            "sin:offset=1,amp=2,freq=1",
            "constant:abc",
        ] {
            assert!(bad.parse::<RateFn>().is_err(), "{bad:?} should not parse");
        }
        assert!(RateFunctionSet::from_config([("rate.j2", "constant:1.0")]).is_err());
        assert!(RateFunctionSet::from_config([
            ("rate.j1", "constant:1.0"),
            ("rate.j1", "linear:2.0")
        ])
        .is_err());
        assert!(RateFunctionSet::from_config([("rate.1", "constant:1.0")]).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(RateFunctionSet::new(vec![]).is_err());
        for bad in [
            RateFn::Constant(-1.0),
            RateFn::Constant(f64::NAN),
            RateFn::Linear(-0.1),
            RateFn::Power { scale: 1.0, exponent: -1.0 },
            RateFn::Power { scale: -1.0, exponent: 0.5 },
            RateFn::Sinusoid { offset: 1.0, amplitude: 1.5, frequency: 1.0 },
            RateFn::Sinusoid { offset: 1.0, amplitude: 0.5, frequency: 0.0 },
        ] {
            assert!(RateFunctionSet::new(vec![bad]).is_err());
        }
        let r = test_rates();
        assert!(ngcp_increment_pmf(&r, -1.0, 0.0, 5).is_err());
        assert!(ngcp_increment_pmf(&r, 1.0, -0.5, 5).is_err());
        assert!(ngcp_pgf(&r, 1.0, 1.5).is_err());
        assert!(ngcp_arrival_cdf(&r, 0, 1.0).is_err());
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(ngcp_sample(&r, 0.0, &mut rng).is_err());
        let path = ngcp_sample(&r, 1.0, &mut rng).unwrap();
        assert!(ngcp_compensator(&path, &r, &[1.5]).is_err());
        assert!(test_rates().rates()[0].cumulative_between(2.0, 1.0).is_err());
    }

    /// Deterministic map from proptest draws to a valid parametric rate.
    fn family(ix: u8, a: f64, b: f64, c: f64) -> RateFn {
        match ix % 4 {
            0 => RateFn::Constant(a),
            1 => RateFn::Linear(a),
            2 => RateFn::Power { scale: a, exponent: -0.4 + 1.9 * b },
            _ => RateFn::Sinusoid {
                offset: a,
                amplitude: a * b,
                frequency: 0.2 + 3.0 * c,
            },
        }
    }

    proptest! {
        #[test]
        fn increment_pmf_stays_normalized(
            fams in proptest::collection::vec(
                (0u8..4, 0.05f64..0.8, 0.0f64..1.0, 0.0f64..1.0),
                1..=3
            ),
            t in 0.1f64..2.5,
            v in 0.0f64..1.0,
        ) {
            let rates: Vec<RateFn> =
                fams.iter().map(|&(ix, a, b, c)| family(ix, a, b, c)).collect();
            let r = RateFunctionSet::new(rates).unwrap();
            let n_max = r.default_n_max(t, v).unwrap();
            let pmf = ngcp_increment_pmf(&r, t, v, n_max).unwrap();
            for &q in pmf.probs() {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&q));
            }
            let mass: f64 = pmf.probs().iter().sum();
            prop_assert!((mass + pmf.tail_bound() - 1.0).abs() <= 1e-12);
            prop_assert!(pmf.tail_bound() <= 1e-10);
        }

        #[test]
        fn cumulative_rates_never_decrease(
            (ix, a, b, c) in (0u8..4, 0.05f64..0.8, 0.0f64..1.0, 0.0f64..1.0),
            t1 in 0.0f64..3.0,
            dt in 0.0f64..2.0,
        ) {
            let rf = family(ix, a, b, c);
            let w = rf.cumulative_between(t1, t1 + dt).unwrap();
            prop_assert!(w >= 0.0);
            // window additivity ties the two-argument form to Λ(t)
            let total = rf.cumulative(t1 + dt).unwrap();
            let head = rf.cumulative(t1).unwrap();
            prop_assert!((head + w - total).abs() <= 1e-9 * (1.0 + total.abs()));
        }
    }
}

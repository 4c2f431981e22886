//! Subordinators and their inverses: Bernstein functions with derivatives,
//! one-sided stable and gamma increment samplers, multistable paths driven by
//! a time-varying stability index, and the inverse-stable marginal law.

use crate::quad::adaptive_simpson;
use crate::specfun::{self, SpecFunError, WrightParams};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::beta::{beta as beta_fn, beta_reg};
use statrs::function::gamma::gamma as gamma_fn;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SubordinatorError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("path reaches {have} but the inverse needs values beyond {needed}; simulate a longer path")]
    InsufficientRange { needed: f64, have: f64 },
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

pub type Result<T> = std::result::Result<T, SubordinatorError>;

fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(SubordinatorError::BadParameter(msg.into()))
    }
}

/// A Bernstein function f with f(0) = 0, evaluable together with its
/// derivatives.  The stable and gamma families carry closed-form derivatives
/// of every order; custom functions fall back to finite differences and
/// report that through [`BernsteinFn::deriv_is_exact`].
#[derive(Clone)]
pub struct BernsteinFn {
    inner: Inner,
}

/// The concrete family behind a [`BernsteinFn`], with its parameters.
/// Callers that need more than evaluation (Lévy densities, moment formulas,
/// display) match on this instead of reverse-engineering the closure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BernsteinFamily {
    Stable { beta: f64 },
    Gamma { a: f64, b: f64 },
    Custom,
}

#[derive(Clone)]
enum Inner {
    Stable { beta: f64 },
    Gamma { a: f64, b: f64 },
    Custom { f: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl std::fmt::Debug for BernsteinFn {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.inner {
            Inner::Stable { beta } => write!(fm, "BernsteinFn::stable({beta})"),
            Inner::Gamma { a, b } => write!(fm, "BernsteinFn::gamma({a}, {b})"),
            Inner::Custom { .. } => write!(fm, "BernsteinFn::custom"),
        }
    }
}

impl BernsteinFn {
    /// f(s) = s^β, the exponent of the one-sided stable subordinator.
    pub fn stable(beta: f64) -> Result<Self> {
        require(
            beta > 0.0 && beta < 1.0,
            format!("stable index must lie in (0,1), got {beta}"),
        )?;
        Ok(BernsteinFn { inner: Inner::Stable { beta } })
    }

    /// f(s) = b·ln(1 + s/a), the exponent of the gamma subordinator.
    pub fn gamma(a: f64, b: f64) -> Result<Self> {
        require(
            a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
            format!("gamma family needs a, b > 0, got a={a}, b={b}"),
        )?;
        Ok(BernsteinFn { inner: Inner::Gamma { a, b } })
    }

    /// Wraps a user-supplied Bernstein function.  Derivatives come from
    /// finite differences and sampling is unavailable.
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        BernsteinFn { inner: Inner::Custom { f: Arc::new(f) } }
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        require(
            s >= 0.0 && s.is_finite(),
            format!("argument must be finite and >= 0, got {s}"),
        )?;
        Ok(match &self.inner {
            Inner::Stable { beta } => s.powf(*beta),
            Inner::Gamma { a, b } => b * (s / a).ln_1p(),
            Inner::Custom { f } => f(s),
        })
    }

    /// m-th derivative at s.  Closed forms for the concrete families; an
    /// 8th-order finite-difference estimate for custom functions.
    pub fn deriv(&self, m: u32, s: f64) -> Result<f64> {
        if m == 0 {
            return self.eval(s);
        }
        require(
            s > 0.0 && s.is_finite(),
            format!("derivative argument must be finite and > 0, got {s}"),
        )?;
        match &self.inner {
            Inner::Stable { beta } => {
                // β(β−1)⋯(β−m+1) s^{β−m}
                let mut falling = 1.0;
                for i in 0..m {
                    falling *= beta - i as f64;
                }
                Ok(falling * s.powf(beta - m as f64))
            }
            Inner::Gamma { a, b } => {
                // b(−1)^{m−1}(m−1)!(a+s)^{−m}
                let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
                let mut fact = 1.0;
                for i in 1..m {
                    fact *= i as f64;
                }
                Ok(sign * b * fact * (a + s).powi(-(m as i32)))
            }
            Inner::Custom { f } => {
                if m > 60 {
                    return Err(SubordinatorError::BadParameter(format!(
                        "finite differences are hopeless beyond order 60, got m={m}"
                    )));
                }
                Ok(fd_derivative(f.as_ref(), m, s))
            }
        }
    }

    /// Whether [`BernsteinFn::deriv`] returns closed-form values.  False for
    /// custom functions, whose finite-difference estimates deserve wider
    /// tolerances downstream.
    pub fn deriv_is_exact(&self) -> bool {
        !matches!(self.inner, Inner::Custom { .. })
    }

    /// Which parametric family this function belongs to.
    pub fn family(&self) -> BernsteinFamily {
        match &self.inner {
            Inner::Stable { beta } => BernsteinFamily::Stable { beta: *beta },
            Inner::Gamma { a, b } => BernsteinFamily::Gamma { a: *a, b: *b },
            Inner::Custom { .. } => BernsteinFamily::Custom,
        }
    }

    /// Mean and variance of D_f(1).  The stable subordinator has no finite
    /// mean, and a custom function does not expose its law, so both refuse.
    pub fn unit_moments(&self) -> Result<(f64, f64)> {
        match &self.inner {
            Inner::Stable { .. } => Err(SubordinatorError::Unsupported(
                "stable subordinator increments have no finite mean".into(),
            )),
            Inner::Gamma { a, b } => Ok((b / a, b / (a * a))),
            Inner::Custom { .. } => Err(SubordinatorError::Unsupported(
                "moments of a custom subordinator are not available".into(),
            )),
        }
    }

    /// Draws the increment D_f(dt) of the associated subordinator.
    pub fn increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> Result<f64> {
        match &self.inner {
            Inner::Stable { beta } => stable_increment(*beta, dt, rng),
            Inner::Gamma { a, b } => gamma_increment(*a, *b, dt, rng),
            Inner::Custom { .. } => Err(SubordinatorError::Unsupported(
                "no increment sampler for a custom Bernstein function".into(),
            )),
        }
    }

    /// Simulates D_f on a uniform grid of spacing dt covering [0, t_max].
    pub fn sample_path<R: Rng + ?Sized>(
        &self,
        t_max: f64,
        dt: f64,
        rng: &mut R,
    ) -> Result<SubordinatorPath> {
        require(
            t_max > 0.0 && dt > 0.0 && dt <= t_max,
            format!("need 0 < dt <= t_max, got dt={dt}, t_max={t_max}"),
        )?;
        let steps = (t_max / dt).ceil() as usize;
        let mut increments = Vec::with_capacity(steps);
        for _ in 0..steps {
            increments.push(self.increment(dt, rng)?);
        }
        Ok(SubordinatorPath::from_increments(dt, &increments))
    }
}

/// One ladder of central m-th differences at steps h_max/√2^j, each
/// consecutive quadruple Richardson-extrapolated from order 2 to order 8.
/// Returns the order-8 entry with the smallest disagreement against its two
/// order-6 parents, together with that disagreement as an error estimate.
/// No single step width serves every integrand (rounding noise grows like
/// h^{−m} while the truncation term grows like h²), so the ladder measures
/// both and lets them vote.
fn fd_ladder(f: &dyn Fn(f64) -> f64, m: u32, center: f64, h_max: f64, levels: usize) -> (f64, f64) {
    let mf = m as f64;
    let stencil = |h: f64| -> f64 {
        let mut coeff = 1.0f64;
        let mut acc = 0.0;
        for i in 0..=m {
            if i > 0 {
                coeff *= -(mf - i as f64 + 1.0) / i as f64;
            }
            acc += coeff * f(center + (mf / 2.0 - i as f64) * h);
        }
        acc / h.powi(m as i32)
    };
    let r = std::f64::consts::SQRT_2;
    let e: Vec<f64> = (0..levels)
        .map(|j| stencil(h_max / r.powi(j as i32)))
        .collect();
    let t1: Vec<f64> = e.windows(2).map(|w| 2.0 * w[1] - w[0]).collect();
    let t2: Vec<f64> = t1.windows(2).map(|w| (4.0 * w[1] - w[0]) / 3.0).collect();
    let t3: Vec<f64> = t2.windows(2).map(|w| (8.0 * w[1] - w[0]) / 7.0).collect();
    let mut best = (f64::NAN, f64::INFINITY);
    for (j, &tip) in t3.iter().enumerate() {
        let err = (tip - t2[j]).abs().max((tip - t2[j + 1]).abs());
        if err < best.1 {
            best = (tip, err);
        }
    }
    best
}

/// Signed Stirling numbers of the first kind s(m, 0..=m): the weights in the
/// change of variable (d/ds)^m = s^{−m} Σ_j s(m,j) (d/dy)^j with y = ln s.
fn stirling_first_kind_row(m: u32) -> Vec<f64> {
    let mut row = vec![0.0f64; m as usize + 1];
    row[0] = 1.0;
    for n in 0..m as usize {
        let mut next = vec![0.0f64; m as usize + 1];
        for j in 1..=n + 1 {
            next[j] = row[j - 1] - n as f64 * row[j];
        }
        row = next;
    }
    row
}

/// Central-difference estimate of f^(m)(s) with Richardson extrapolation to
/// order 8.  Two coordinate systems compete: a direct ladder in s (step
/// capped so every stencil point stays positive) and a ladder in y = ln s
/// mapped back through Stirling weights, which rescues functions whose high
/// derivatives blow up near the origin.  The route with the smaller
/// self-reported error wins.
fn fd_derivative(f: &(dyn Fn(f64) -> f64 + Send + Sync), m: u32, s: f64) -> f64 {
    if m == 0 {
        return f(s);
    }
    let mf = m as f64;
    let h_s = (0.95 * s / (mf / 2.0).max(1.0)).min(0.45 * (1.0 + s));
    let (direct, direct_err) = fd_ladder(&|x| f(x), m, s, h_s, 18);

    let y = s.ln();
    let g = |yy: f64| f(yy.exp());
    let weights = stirling_first_kind_row(m);
    let mut combined = 0.0;
    let mut fd_err = 0.0;
    let mut cancel = 0.0;
    for (j, &w) in weights.iter().enumerate().skip(1) {
        let (gj, gj_err) = fd_ladder(&g, j as u32, y, 0.5, 14);
        combined += w * gj;
        fd_err += w.abs() * gj_err;
        cancel += (w * gj).abs();
    }
    let scale = s.powi(-(m as i32));
    let log_route = combined * scale;
    let log_err = (fd_err + 2.0e-16 * cancel) * scale;
    if log_err < direct_err {
        log_route
    } else {
        direct
    }
}

/// Standard positively skewed stable draw S with E e^{−λS} = e^{−λ^β},
/// by the two-uniform transformation: with U uniform on (0,π) and E a unit
/// exponential, S = (A(U)/E)^{(1−β)/β} where
/// A(u) = [sin(βu)^β sin((1−β)u)^{1−β} / sin(u)]^{1/(1−β)}.
fn standard_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        if u1 <= 0.0 {
            continue;
        }
        let e = -(1.0 - u2).ln();
        if e <= 0.0 {
            continue;
        }
        let u = std::f64::consts::PI * u1;
        let a = ((beta * u).sin().powf(beta) * ((1.0 - beta) * u).sin().powf(1.0 - beta)
            / u.sin())
        .powf(1.0 / (1.0 - beta));
        let s = (a / e).powf((1.0 - beta) / beta);
        if s.is_finite() && s > 0.0 {
            return s;
        }
    }
}

/// Increment D_β(dt) of the one-sided β-stable subordinator, exact in law:
/// dt^{1/β} times a standard skewed stable draw.
pub fn stable_increment<R: Rng + ?Sized>(beta: f64, dt: f64, rng: &mut R) -> Result<f64> {
    require(
        beta > 0.0 && beta < 1.0,
        format!("stable index must lie in (0,1), got {beta}"),
    )?;
    require(dt > 0.0 && dt.is_finite(), format!("need dt > 0, got {dt}"))?;
    Ok(dt.powf(1.0 / beta) * standard_stable(beta, rng))
}

/// Increment of the gamma subordinator over dt: a gamma draw with shape b·dt
/// and rate a, matching E e^{−s·inc} = e^{−dt·b·ln(1+s/a)}.
pub fn gamma_increment<R: Rng + ?Sized>(a: f64, b: f64, dt: f64, rng: &mut R) -> Result<f64> {
    require(
        a > 0.0 && b > 0.0 && dt > 0.0,
        format!("need a, b, dt > 0, got a={a}, b={b}, dt={dt}"),
    )?;
    let g = Gamma::new(b * dt, 1.0 / a)
        .map_err(|e| SubordinatorError::BadParameter(e.to_string()))?;
    Ok(g.sample(rng))
}

/// Draw of the inverse stable subordinator Y_α(t) = inf{x: D_α(x) > t} by the
/// exact marginal transformation (t/S)^α with S a standard stable draw.
pub fn inverse_stable_marginal<R: Rng + ?Sized>(alpha: f64, t: f64, rng: &mut R) -> Result<f64> {
    require(
        alpha > 0.0 && alpha < 1.0,
        format!("stable index must lie in (0,1), got {alpha}"),
    )?;
    require(t >= 0.0 && t.is_finite(), format!("need t >= 0, got {t}"))?;
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok((t / standard_stable(alpha, rng)).powf(alpha))
}

/// Density h_α(t, x) of Y_α(t): t^{−α} W_{−α,1−α}(−x t^{−α}).
pub fn inverse_stable_density(alpha: f64, t: f64, x: f64) -> Result<f64> {
    require(
        alpha > 0.0 && alpha < 1.0,
        format!("stable index must lie in (0,1), got {alpha}"),
    )?;
    require(t > 0.0 && t.is_finite(), format!("need t > 0, got {t}"))?;
    require(x >= 0.0, format!("need x >= 0, got {x}"))?;
    let scale = t.powf(-alpha);
    let w = specfun::wright(WrightParams::new(-alpha, 1.0 - alpha)?, -x * scale)?;
    Ok(scale * w)
}

/// A subordinator trajectory sampled on a grid, stored as step values.
#[derive(Debug, Clone)]
pub struct SubordinatorPath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SubordinatorPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        require(
            times.len() == values.len() && !times.is_empty(),
            "times and values must be non-empty and equal in length",
        )?;
        require(
            times.windows(2).all(|w| w[1] > w[0]) && times[0] >= 0.0,
            "times must be strictly increasing and nonnegative",
        )?;
        require(
            values.windows(2).all(|w| w[1] >= w[0]) && values[0] >= 0.0,
            "values must be nondecreasing and nonnegative",
        )?;
        Ok(SubordinatorPath { times, values })
    }

    /// Cumulative path from per-step increments on a uniform grid, anchored
    /// at D(0) = 0.
    pub fn from_increments(dt: f64, increments: &[f64]) -> Self {
        let mut times = Vec::with_capacity(increments.len() + 1);
        let mut values = Vec::with_capacity(increments.len() + 1);
        times.push(0.0);
        values.push(0.0);
        let mut acc = 0.0;
        for (i, inc) in increments.iter().enumerate() {
            acc += inc;
            times.push((i + 1) as f64 * dt);
            values.push(acc);
        }
        SubordinatorPath { times, values }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Step-function value at t: the value at the last grid time <= t.
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            self.values[0]
        } else {
            self.values[idx - 1]
        }
    }

    /// First grid time whose value exceeds t, i.e. the discretized
    /// first-passage time inf{x: D(x) > t}.
    pub fn first_passage(&self, t: f64) -> Result<f64> {
        let idx = self.values.partition_point(|&v| v <= t);
        if idx == self.values.len() {
            return Err(SubordinatorError::InsufficientRange {
                needed: t,
                have: self.last_value(),
            });
        }
        Ok(self.times[idx])
    }
}

/// Right-continuous generalized inverse of a nondecreasing path, evaluated on
/// a grid of time points.
pub fn inverse_path(path: &SubordinatorPath, t_grid: &[f64]) -> Result<SubordinatorPath> {
    require(!t_grid.is_empty(), "empty evaluation grid")?;
    require(
        t_grid.windows(2).all(|w| w[1] > w[0]) && t_grid[0] >= 0.0,
        "evaluation grid must be strictly increasing and nonnegative",
    )?;
    let mut inv = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        inv.push(path.first_passage(t)?);
    }
    SubordinatorPath::new(t_grid.to_vec(), inv)
}

/// Time-varying stability index t ↦ β(t) with range inside (0,1).  The map is
/// assumed continuous; values are validated wherever they are used.
#[derive(Clone)]
pub struct StabilityProfile {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for StabilityProfile {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(fm, "StabilityProfile")
    }
}

impl StabilityProfile {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        StabilityProfile { f: Arc::new(f) }
    }

    /// β(t) = c0 + c1·t.
    pub fn linear(c0: f64, c1: f64) -> Self {
        Self::new(move |t| c0 + c1 * t)
    }

    pub fn constant(beta: f64) -> Self {
        Self::new(move |_| beta)
    }

    pub fn beta(&self, t: f64) -> Result<f64> {
        let b = (self.f)(t);
        require(
            b > 0.0 && b < 1.0,
            format!("stability index must stay in (0,1); profile gives {b} at t={t}"),
        )?;
        Ok(b)
    }

    /// ∫_{t0}^{t1} u^{β(τ)} dτ, the exponent of the inhomogeneous Laplace
    /// functional E e^{−u H(t)}.
    pub fn exponent_integral(&self, u: f64, t0: f64, t1: f64) -> Result<f64> {
        require(u > 0.0, format!("need u > 0, got {u}"))?;
        require(t1 >= t0, format!("need t1 >= t0, got [{t0}, {t1}]"))?;
        if t1 == t0 {
            return Ok(0.0);
        }
        self.beta(t0)?;
        self.beta(t1)?;
        let g = |tau: f64| u.powf((self.f)(tau));
        let (v, _err) = adaptive_simpson(&g, t0, t1, 1e-10);
        Ok(v)
    }
}

/// The slice width that [`multistable_path`] settles on: the caller's dt
/// halved until β varies by less than 0.01 across every slice of [0, t_max].
/// Exposed so that analytic cross-checks can reproduce the exact piecewise
/// discretization the sampler uses and bound its bias.
pub fn multistable_slice_width(
    profile: &StabilityProfile,
    t_max: f64,
    dt: f64,
) -> Result<f64> {
    require(
        t_max > 0.0 && dt > 0.0 && dt <= t_max,
        format!("need 0 < dt <= t_max, got dt={dt}, t_max={t_max}"),
    )?;
    let mut h = dt;
    'refine: for attempt in 0..=20 {
        if attempt == 20 {
            return Err(SubordinatorError::BadParameter(
                "slice width halved 20 times without bounding the index variation; \
                 the profile is too rough"
                    .into(),
            ));
        }
        let steps = (t_max / h).ceil() as usize;
        let mut prev = profile.beta(0.0)?;
        for i in 1..=steps {
            let b = profile.beta((i as f64 * h).min(t_max))?;
            if (b - prev).abs() >= 0.01 {
                h /= 2.0;
                continue 'refine;
            }
            prev = b;
        }
        break;
    }
    Ok(h)
}

/// Simulates the multistable subordinator H on [0, t_max]: each slice of the
/// grid contributes a stable increment at the slice's local index β(t_i).
/// The slice width comes from [`multistable_slice_width`].
pub fn multistable_path<R: Rng + ?Sized>(
    profile: &StabilityProfile,
    t_max: f64,
    dt: f64,
    rng: &mut R,
) -> Result<SubordinatorPath> {
    let h = multistable_slice_width(profile, t_max, dt)?;
    let steps = (t_max / h).ceil() as usize;
    let mut increments = Vec::with_capacity(steps);
    for i in 0..steps {
        let beta_slice = profile.beta(i as f64 * h)?;
        increments.push(stable_increment(beta_slice, h, rng)?);
    }
    Ok(SubordinatorPath::from_increments(h, &increments))
}

/// Smallest x with a certified bound Pr{Y_α(t) > x} ≤ tol, from the
/// exponential-moment inequality Pr{Y > x} ≤ E e^{θY} e^{−θx} together with
/// E e^{θ Y_α(t)} = E_α(θ t^α).  Scans a geometric grid of θ and keeps the
/// tightest cutoff.  Integrating the density over [0, x] and charging tol to
/// the remainder is then rigorous, which matters because the Wright series
/// behind the density stops certifying once its argument is far negative.
pub fn inverse_stable_tail_cutoff(alpha: f64, t: f64, tol: f64) -> Result<f64> {
    require(
        alpha > 0.0 && alpha < 1.0,
        format!("alpha must lie in (0,1), got {alpha}"),
    )?;
    require(t > 0.0, format!("t must be positive, got {t}"))?;
    require(
        tol > 0.0 && tol < 1.0,
        format!("tol must lie in (0,1), got {tol}"),
    )?;
    let ta = t.powf(alpha);
    let params = specfun::MlParams::new(alpha, 1.0)?;
    let mut best = f64::INFINITY;
    let mut theta = 0.25 / ta;
    for _ in 0..12 {
        if let Ok(mgf) = specfun::mittag_leffler(params, theta * ta) {
            let x = (mgf.ln() - tol.ln()) / theta;
            if x < best {
                best = x;
            }
        }
        theta *= 2.0;
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(SubordinatorError::Unsupported(format!(
            "no usable exponential moment for alpha {alpha}, t {t}"
        )))
    }
}

/// Mean of Y_α(t): t^α/Γ(1+α).
pub fn inverse_stable_mean(alpha: f64, t: f64) -> f64 {
    t.powf(alpha) / gamma_fn(1.0 + alpha)
}

/// Variance of Y_α(t): (2/Γ(2α+1) − 1/Γ²(1+α)) t^{2α}.
pub fn inverse_stable_variance(alpha: f64, t: f64) -> f64 {
    (2.0 / gamma_fn(2.0 * alpha + 1.0) - gamma_fn(1.0 + alpha).powi(-2)) * t.powf(2.0 * alpha)
}

/// Covariance of (Y_α(s), Y_α(t)): with B(a,b;x) the lower incomplete beta
/// function and s ≤ t,
///
///   (α s^{2α} B(α,α+1) + α t^{2α} B(α,α+1; s/t) − (st)^α) / Γ²(1+α).
///
/// Symmetric in its time arguments.  At s = t this collapses to
/// [`inverse_stable_variance`] and for fixed s, t → ∞ it tends to
/// s^{2α}/Γ(2α+1), which is what drives the slow correlation decay of every
/// process subordinated to Y_α.
pub fn inverse_stable_covariance(alpha: f64, s: f64, t: f64) -> Result<f64> {
    require(
        alpha > 0.0 && alpha < 1.0,
        format!("alpha must lie in (0,1), got {alpha}"),
    )?;
    require(
        s >= 0.0 && t >= 0.0 && s.is_finite() && t.is_finite(),
        format!("times must be finite and >= 0, got s={s}, t={t}"),
    )?;
    let (s, t) = if s <= t { (s, t) } else { (t, s) };
    if s == 0.0 {
        return Ok(0.0);
    }
    let b_full = beta_fn(alpha, alpha + 1.0);
    let b_partial = beta_reg(alpha, alpha + 1.0, s / t) * b_full;
    let g = gamma_fn(1.0 + alpha);
    Ok((alpha * s.powf(2.0 * alpha) * b_full + alpha * t.powf(2.0 * alpha) * b_partial
        - (s * t).powf(alpha))
        / (g * g))
}

//! The base process on an independent subordinator clock: the jump-size
//! rates it inherits, state probabilities through the triangular master
//! system, first-passage and first-hitting laws, and the doubly
//! time-changed sampler.

use rand::Rng;

use super::bell::{binomial_row, complete_bell, reciprocal_derivs, MAX_BELL_ORDER};
use super::{
    empirical_pmf, gcp_count_at, require, PmfMethod, Result, RoutedPmf, TimeChangeError,
};
use crate::combin::{certified_n_max, neumaier_add, omega_weighted_sum};
use crate::process::{gcp_pmf, GcpParams, TruncatedPmf};
use crate::quad::adaptive_simpson;
use crate::subordinators::{inverse_stable_marginal, BernsteinFamily, BernsteinFn};

/// Mass slack for the integrated master system.
const ODE_MASS_TOL: f64 = 1e-8;
/// Per-component absolute tolerance of the embedded integrator.
const ODE_TOL: f64 = 1e-10;

fn check_time(t: f64) -> Result<()> {
    require(t >= 0.0 && t.is_finite(), format!("need t >= 0, got {t}"))
}

/// f and its first `m_max` derivatives at `s`, indexed by order.
fn f_deriv_table(f: &BernsteinFn, s: f64, m_max: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(m_max + 1);
    out.push(f.eval(s)?);
    for m in 1..=m_max as u32 {
        out.push(f.deriv(m, s)?);
    }
    Ok(out)
}

/// How negative a rate may come out before it is an error rather than
/// rounding.  Closed-form derivative families get the tight bound; custom
/// clocks differentiate by finite differences, whose high-order noise is
/// many digits worse.
fn negativity_slack(f: &BernsteinFn) -> f64 {
    if f.deriv_is_exact() {
        1e-12
    } else {
        1e-6
    }
}

fn rate_from_table(p: &GcpParams, ders: &[f64], m: u32, slack: f64) -> Result<f64> {
    let rate = omega_weighted_sum(p.k(), m, p.lambda(), |z| {
        let sign = if z % 2 == 1 { 1.0 } else { -1.0 };
        sign * ders[z as usize]
    })?;
    if rate < -slack {
        return Err(TimeChangeError::Inconsistent(format!(
            "jump rate at size {m} came out {rate}, below the -{slack} slack"
        )));
    }
    Ok(rate.max(0.0))
}

/// Rate of jumps of size exactly `n` for the clocked process: the weighted
/// sum of clock-function derivatives at Λ over the compositions of n.
/// Complete monotonicity makes every term nonnegative, so a materially
/// negative result can only mean inconsistent derivative values and is
/// reported as such.
pub fn tcgcp_jump_rates(f: &BernsteinFn, p: &GcpParams, n: u32) -> Result<f64> {
    require(n >= 1, "jump sizes start at 1")?;
    let ders = f_deriv_table(f, p.total(), n as usize)?;
    rate_from_table(p, &ders, n, negativity_slack(f))
}

/// Jump rates for sizes 1..=n_max sharing one derivative table; index 0 is
/// unused and holds 0.
fn rates_up_to(f: &BernsteinFn, p: &GcpParams, n_max: usize) -> Result<Vec<f64>> {
    let ders = f_deriv_table(f, p.total(), n_max)?;
    let slack = negativity_slack(f);
    let mut rates = Vec::with_capacity(n_max + 1);
    rates.push(0.0);
    for m in 1..=n_max as u32 {
        rates.push(rate_from_table(p, &ders, m, slack)?);
    }
    Ok(rates)
}

/// Pr{M(x) > n} for the base process, computed without cancellation on
/// either side of the crossover: one minus the cdf while the cdf is small,
/// and otherwise the positive series e^{−Λx} Σ_{l>n} ω_l(x) over the
/// composition weights ω_l at the scaled rates.
fn base_upper_tail(p: &GcpParams, n: u32, x: f64) -> f64 {
    let pmf = gcp_pmf(p, x, n as usize).expect("parameters were validated");
    let cdf: f64 = pmf.probs().iter().sum();
    if cdf <= 0.5 {
        return 1.0 - cdf;
    }
    let scaled: Vec<f64> = p.lambda().iter().map(|l| l * x).collect();
    let cap = certified_n_max(p.k(), p.total() * x, 1e-18).max(n as usize + 2);
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut prev = f64::INFINITY;
    for l in (n + 1)..=(cap as u32) {
        let w = omega_weighted_sum(p.k(), l, &scaled, |_| 1.0).expect("parameters were validated");
        neumaier_add(&mut sum, &mut comp, w);
        if w < prev && w <= 1e-17 * (sum + comp) {
            break;
        }
        prev = w;
    }
    (sum + comp) * (-p.total() * x).exp()
}

/// Total rate of jumps larger than `n`, as the clock's Lévy measure
/// integrated against the base upper tail.  Truncating the rate sum alone
/// cannot certify this for a stable clock, whose rates decay like n^{−β};
/// integrating in log-space with a closed-form bound past the cutoff can.
/// `n = 0` recovers the full rate f(Λ).
pub fn tcgcp_rate_tail(f: &BernsteinFn, p: &GcpParams, n: u32) -> Result<f64> {
    let lam = p.total();
    let nf = n as f64;
    match f.family() {
        BernsteinFamily::Gamma { a, b } => {
            // Lévy density b e^{−ax}/x; remainder past X is below b e^{−aX}/(aX)
            let mut x_hi = (2.0 * (nf + 1.0) / lam).max(1.0);
            while b * (-a * x_hi).exp() / (a * x_hi) > 1e-13 {
                x_hi *= 2.0;
            }
            // head below x0 is at most b Λ x0
            let x_lo = 1e-17 / (1.0 + lam);
            let g = |y: f64| {
                let x = y.exp();
                base_upper_tail(p, n, x) * (-a * x).exp()
            };
            let (v, _) = adaptive_simpson(&g, x_lo.ln(), x_hi.ln(), 1e-12);
            Ok(b * v.max(0.0))
        }
        BernsteinFamily::Stable { beta } => {
            let norm = 1.0 / statrs::function::gamma::gamma(1.0 - beta);
            // past X the base tail is 1 up to a Poisson left-tail factor, so
            // the remainder integrates exactly to X^{−β}/Γ(1−β); grow X until
            // the neglected factor is dust
            let mut x_hi = (2.0 * (nf + 1.0) / lam).max(1.0);
            loop {
                let mu = lam * x_hi;
                let left_tail = if n == 0 {
                    (-mu).exp()
                } else {
                    (-mu + nf * (1.0 + (mu / nf).ln())).exp()
                };
                if x_hi.powf(-beta) * norm * left_tail < 1e-13 {
                    break;
                }
                x_hi *= 2.0;
            }
            // below x0 the integrand is under β Λ^{j₀} x^{j₀−1−β}/j₀! with
            // j₀ = ⌈(n+1)/k⌉ ≥ 1; keep that head under 1e-14
            let j0 = ((n as usize + 1) + p.k() - 1) / p.k();
            let head_coeff =
                beta * lam.powi(j0 as i32) * norm / (factorial(j0) * (j0 as f64 - beta));
            let x_lo = (1e-14 / head_coeff).powf(1.0 / (j0 as f64 - beta));
            let x_lo = x_lo.min(0.5 / (1.0 + lam));
            let g = |y: f64| base_upper_tail(p, n, y.exp()) * (-beta * y).exp();
            let (v, _) = adaptive_simpson(&g, x_lo.ln(), x_hi.ln(), 1e-12);
            Ok(beta * norm * v.max(0.0) + x_hi.powf(-beta) * norm)
        }
        BernsteinFamily::Custom => Err(TimeChangeError::Unsupported(
            "rate tails need the clock's Lévy density, which a custom clock does not expose".into(),
        )),
    }
}

fn factorial(j: usize) -> f64 {
    (1..=j).map(|i| i as f64).product()
}

fn delta0(n_max: usize) -> Vec<f64> {
    let mut v = vec![0.0; n_max + 1];
    v[0] = 1.0;
    v
}

// Cash-Karp embedded pair.
const CK_A: [[f64; 5]; 5] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
    [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
    [
        1631.0 / 55296.0,
        175.0 / 512.0,
        575.0 / 13824.0,
        44275.0 / 110592.0,
        253.0 / 4096.0,
    ],
];
const CK_B5: [f64; 6] = [
    37.0 / 378.0,
    0.0,
    250.0 / 621.0,
    125.0 / 594.0,
    0.0,
    512.0 / 1771.0,
];
const CK_B4: [f64; 6] = [
    2825.0 / 27648.0,
    0.0,
    18575.0 / 48384.0,
    13525.0 / 55296.0,
    277.0 / 14336.0,
    1.0 / 4.0,
];

fn tcgcp_ode(f: &BernsteinFn, p: &GcpParams, t: f64, n_max: usize) -> Result<Vec<f64>> {
    if t == 0.0 {
        return Ok(delta0(n_max));
    }
    let f_lam = f.eval(p.total())?;
    let rates = rates_up_to(f, p, n_max)?;
    let dim = n_max + 1;
    let rhs = |state: &[f64], out: &mut [f64]| {
        for n in 0..dim {
            let mut v = -f_lam * state[n];
            for m in 1..=n {
                v += rates[m] * state[n - m];
            }
            out[n] = v;
        }
    };
    let mut y = delta0(n_max);
    let mut stage = vec![vec![0.0; dim]; 6];
    let mut work = vec![0.0; dim];
    let mut cur = 0.0f64;
    let mut h = (1.0 / (1.0 + f_lam)).min(t);
    let mut steps = 0u32;
    while cur < t {
        if steps > 100_000 {
            return Err(TimeChangeError::Inconsistent(
                "master-system integrator exceeded its step budget".into(),
            ));
        }
        steps += 1;
        h = h.min(t - cur);
        if h < 1e-14 * t {
            return Err(TimeChangeError::Inconsistent(
                "master-system integrator step size collapsed".into(),
            ));
        }
        rhs(&y, &mut stage[0]);
        for s in 1..6 {
            for n in 0..dim {
                let mut v = y[n];
                for (j, stage_j) in stage.iter().enumerate().take(s) {
                    let a = CK_A[s - 1][j];
                    if a != 0.0 {
                        v += h * a * stage_j[n];
                    }
                }
                work[n] = v;
            }
            rhs(&work, &mut stage[s]);
        }
        let mut err = 0.0f64;
        for n in 0..dim {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..6 {
                d5 += CK_B5[s] * stage[s][n];
                d4 += CK_B4[s] * stage[s][n];
            }
            work[n] = y[n] + h * d5;
            err = err.max((h * (d5 - d4)).abs());
        }
        if err <= ODE_TOL {
            cur += h;
            y.copy_from_slice(&work);
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (ODE_TOL / err).powf(0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    for (n, v) in y.iter_mut().enumerate() {
        if *v < -1e-8 {
            return Err(TimeChangeError::Inconsistent(format!(
                "state {n} integrated to {v}"
            )));
        }
        *v = v.max(0.0);
    }
    Ok(y)
}

/// State probabilities of the clocked process at time `t`, either by
/// integrating the triangular master system built from [`tcgcp_jump_rates`]
/// (embedded adaptive pair, absolute tolerance 1e-10) or by seeded Monte
/// Carlo over exact clock increments.
pub fn tcgcp_pmf(
    f: &BernsteinFn,
    p: &GcpParams,
    t: f64,
    n_max: usize,
    method: PmfMethod,
) -> Result<RoutedPmf> {
    check_time(t)?;
    match method {
        PmfMethod::Ode => Ok(RoutedPmf {
            pmf: TruncatedPmf::new(tcgcp_ode(f, p, t, n_max)?, ODE_MASS_TOL)?,
            method,
            fallback_notice: None,
        }),
        PmfMethod::Mc { sims, seed } => {
            if f.family() == BernsteinFamily::Custom {
                return Err(TimeChangeError::Unsupported(
                    "a custom clock cannot be sampled, only evaluated".into(),
                ));
            }
            let pmf = if t == 0.0 {
                TruncatedPmf::new(delta0(n_max), 1e-12)?
            } else {
                empirical_pmf(sims, seed, n_max, |rng| {
                    let x = f.increment(t, rng).expect("validated parameters");
                    gcp_count_at(p, x, rng)
                })?
            };
            Ok(RoutedPmf {
                pmf,
                method,
                fallback_notice: None,
            })
        }
        other => Err(TimeChangeError::Unsupported(format!(
            "tcgcp_pmf supports ode and mc, not {other}"
        ))),
    }
}

/// First-passage law of the clocked process over a level: distribution of
/// the first time the process reaches `level` or beyond.  Densities and
/// survival probabilities come from derivative tables of the clock function
/// assembled by the exponential-composition recurrence; `total_mass` is the
/// density mass on [0, horizon], where the survival has decayed to the
/// underflow floor.
#[derive(Debug, Clone)]
pub struct FirstPassageLaw {
    level: u32,
    p: GcpParams,
    ders: Vec<f64>,
    horizon: f64,
    total_mass: f64,
}

/// C_z(s) = d^z/dΛ^z e^{−s f(Λ)} for z = 0..count−1, via the
/// complete-Bell recurrence over a_i = −s f^{(i)}(Λ).  The a_i alternate in
/// sign, which makes every contribution to B_z carry the sign (−1)^z: the
/// recurrence never cancels.
pub(super) fn c_factors(s: f64, ders: &[f64], count: usize) -> Result<Vec<f64>> {
    let a: Vec<f64> = (1..count).map(|i| -s * ders[i]).collect();
    let b = complete_bell(&a)?;
    let e = (-s * ders[0]).exp();
    Ok(b.iter().map(|bi| bi * e).collect())
}

/// Σ_{l<level} of the state probabilities built from the factor table `w`,
/// where state l weighs the compositions of l by (−1)^z w_z.
fn alternating_sum_below(p: &GcpParams, level: u32, w: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    let mut comp = 0.0;
    for l in 0..level {
        let term = omega_weighted_sum(p.k(), l, p.lambda(), |z| {
            let sign = if z % 2 == 0 { 1.0 } else { -1.0 };
            sign * w[z as usize]
        })?;
        neumaier_add(&mut total, &mut comp, term);
    }
    Ok(total + comp)
}

/// Probability of sitting strictly below `level` for a process whose empty
/// state has probability e^{−g₀} with derivative factors `c` in Λ, i.e. the
/// survival of the first passage over `level`.
pub(super) fn survival_below(p: &GcpParams, level: u32, c: &[f64]) -> Result<f64> {
    Ok(alternating_sum_below(p, level, c)?.clamp(0.0, 1.0))
}

impl FirstPassageLaw {
    pub fn level(&self) -> u32 {
        self.level
    }

    /// Mass of the density on [0, horizon]; short of 1 only by the survival
    /// left at the horizon.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Time by which the survival probability has underflowed.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Pr{passage time > s}: the probability the process sits below the
    /// level at time s, summed in closed form.
    pub fn survival(&self, s: f64) -> Result<f64> {
        require(s >= 0.0 && s.is_finite(), format!("need s >= 0, got {s}"))?;
        let c = c_factors(s, &self.ders, self.level as usize)?;
        survival_below(&self.p, self.level, &c)
    }

    pub fn cdf(&self, s: f64) -> Result<f64> {
        Ok(1.0 - self.survival(s)?)
    }

    /// Density of the passage time at s, from the s-derivative of the
    /// closed-form survival.
    pub fn density(&self, s: f64) -> Result<f64> {
        require(s >= 0.0 && s.is_finite(), format!("need s >= 0, got {s}"))?;
        let count = self.level as usize;
        let c = c_factors(s, &self.ders, count)?;
        // ∂s C_z = −Σ_i C(z,i) f^{(i)}(Λ) C_{z−i}; the outer minus cancels
        // against the differentiated survival
        let dc: Vec<f64> = (0..count)
            .map(|z| {
                let row = binomial_row(z);
                let mut v = 0.0;
                for i in 0..=z {
                    v += row[i] * self.ders[i] * c[z - i];
                }
                v
            })
            .collect();
        let d = alternating_sum_below(&self.p, self.level, &dc)?;
        if d < -1e-9 * (1.0 + self.ders[0]) {
            return Err(TimeChangeError::Inconsistent(format!(
                "passage density at s={s} came out {d}"
            )));
        }
        Ok(d.max(0.0))
    }
}

/// Builds the first-passage law for `level ≥ 1`.  The derivative table runs
/// to order level−1, so levels past the recurrence cap are rejected.
pub fn tcgcp_first_passage_law(f: &BernsteinFn, p: &GcpParams, level: u32) -> Result<FirstPassageLaw> {
    require(level >= 1, "passage levels start at 1")?;
    require(
        (level as usize) <= MAX_BELL_ORDER + 1,
        format!(
            "level {level} needs derivative order {}, past the supported {MAX_BELL_ORDER}",
            level - 1
        ),
    )?;
    let ders = f_deriv_table(f, p.total(), level as usize - 1)?;
    require(
        ders[0] > 0.0,
        "the clock function must be positive at Λ for a passage law",
    )?;
    let horizon = 745.0 / ders[0];
    let mut law = FirstPassageLaw {
        level,
        p: p.clone(),
        ders,
        horizon,
        total_mass: 0.0,
    };
    law.total_mass = 1.0 - law.survival(horizon)?;
    Ok(law)
}

/// Density of the first-passage time over `level`, evaluated at `s`.
pub fn tcgcp_first_passage(f: &BernsteinFn, p: &GcpParams, level: u32, s: f64) -> Result<f64> {
    tcgcp_first_passage_law(f, p, level)?.density(s)
}

/// Probability that the clocked process ever sits at state `n` exactly.
/// Jumps can overshoot, so this is below 1; it combines the derivative
/// table of the clock function with derivatives of its reciprocal at Λ,
/// both assembled by recurrence.
pub fn tcgcp_hitting_prob(f: &BernsteinFn, p: &GcpParams, n: u32) -> Result<f64> {
    require(n >= 1, "hitting states start at 1")?;
    require(
        (n as usize) <= MAX_BELL_ORDER + 1,
        format!("state {n} needs derivative order {}, past the supported {MAX_BELL_ORDER}", n - 1),
    )?;
    let lam = p.total();
    let ders = f_deriv_table(f, lam, n as usize)?;
    // derivatives of v ↦ f(Λv) at v = 1 feed the reciprocal recurrence
    let phi: Vec<f64> = (0..n as usize).map(|j| lam.powi(j as i32) * ders[j]).collect();
    let recip = reciprocal_derivs(&phi)?;
    let slack = negativity_slack(f);
    let mut total = 0.0;
    let mut comp = 0.0;
    for l in 0..n {
        let a_l = omega_weighted_sum(p.k(), l, p.lambda(), |z| {
            let sign = if z % 2 == 1 { 1.0 } else { -1.0 };
            sign * lam.powi(-(z as i32)) * recip[z as usize]
        })?;
        let rate = rate_from_table(p, &ders, n - l, slack)?;
        neumaier_add(&mut total, &mut comp, a_l * (-rate));
    }
    let v = total + comp;
    if !(-1e-9..=1.0 + 1e-9).contains(&v) {
        return Err(TimeChangeError::Inconsistent(format!(
            "hitting probability for state {n} came out {v}"
        )));
    }
    Ok(v.clamp(0.0, 1.0))
}

/// One draw of the fractional process on a subordinator clock at time `t`:
/// a clock increment, an inverse stable time at that increment, and
/// conditionally Poisson jump counts.  β = 1 skips the middle layer.
pub fn tcgfcp_sample<R: Rng + ?Sized>(
    f: &BernsteinFn,
    p: &GcpParams,
    beta: f64,
    t: f64,
    rng: &mut R,
) -> Result<u64> {
    require(
        beta > 0.0 && beta <= 1.0,
        format!("fractional index must lie in (0,1], got {beta}"),
    )?;
    check_time(t)?;
    if t == 0.0 {
        return Ok(0);
    }
    let x = f.increment(t, rng)?;
    if x == 0.0 {
        return Ok(0);
    }
    let y = if beta == 1.0 {
        x
    } else {
        inverse_stable_marginal(beta, x, rng)?
    };
    Ok(gcp_count_at(p, y, rng))
}

//! The base process on an inverse stable clock, homogeneous and
//! non-homogeneous, plus the residual check of its governing fractional
//! system.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use super::{
    empirical_pmf, gcp_count_at, require, PmfMethod, Result, RoutedPmf, TimeChangeError,
    FALLBACK_MC,
};
use crate::combin::omega_weighted_sum;
use crate::ngcp::{ngcp_increment_pmf, RateFunctionSet};
use crate::process::{gcp_pmf, GcpParams, TruncatedPmf};
use crate::quad::adaptive_simpson;
use crate::specfun::{caputo_numeric, ml_derivative, wright, MlParams, WrightParams};
use crate::subordinators::{inverse_stable_marginal, inverse_stable_tail_cutoff};

/// Mass slack for the closed-form route: entries carry certified relative
/// errors far below this.
const ML_MASS_TOL: f64 = 1e-10;
/// Mass slack for quadrature routes: per-state tolerance 1e-10 plus the
/// 1e-12 clock-tail cutoff, with headroom.
const QUAD_MASS_TOL: f64 = 1e-8;
/// Per-state absolute quadrature tolerance.
const QUAD_TOL: f64 = 1e-10;
/// Probability of the clock beyond the truncated integration range.
const CLOCK_TAIL: f64 = 1e-12;

fn check_beta(beta: f64) -> Result<()> {
    require(
        beta > 0.0 && beta <= 1.0,
        format!("fractional index must lie in (0,1], got {beta}"),
    )
}

fn check_time(t: f64) -> Result<()> {
    require(t >= 0.0 && t.is_finite(), format!("need t >= 0, got {t}"))
}

/// Closed-form state probabilities: each state is a weighted sum of
/// derivatives of the one-parameter Mittag-Leffler function at −Λt^β, with
/// the composition weights taken at the rescaled rates λ_j t^β.  Every term
/// is nonnegative, so nothing cancels.
fn gfcp_ml(p: &GcpParams, beta: f64, t: f64, n_max: usize) -> Result<Vec<f64>> {
    let mlp = MlParams::new(beta, 1.0)?;
    let tb = t.powf(beta);
    let x = -p.total() * tb;
    let mut evs = Vec::with_capacity(n_max + 1);
    for z in 0..=n_max as u32 {
        evs.push(ml_derivative(mlp, x, z)?);
    }
    let scaled: Vec<f64> = p.lambda().iter().map(|l| l * tb).collect();
    let mut probs = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max as u32 {
        probs.push(omega_weighted_sum(p.k(), n, &scaled, |z| {
            evs[z as usize]
        })?);
    }
    Ok(probs)
}

/// Shared state for integrating state probabilities against the folded
/// clock density.  After u = t^β w the kernel W_{−β,1−β}(−w) no longer
/// depends on t, and both it and the base pmf vector are memoized per node
/// so the per-state adaptive passes revisit them cheaply.  Evaluation
/// errors inside the integrand are parked and re-raised afterwards, since
/// the integrator only sees plain numbers.
struct FoldedQuad<B>
where
    B: Fn(f64) -> Result<Vec<f64>>,
{
    wp: WrightParams,
    base: B,
    kernel_cache: RefCell<HashMap<u64, f64>>,
    pmf_cache: RefCell<HashMap<u64, Rc<Vec<f64>>>>,
    error: RefCell<Option<TimeChangeError>>,
}

impl<B> FoldedQuad<B>
where
    B: Fn(f64) -> Result<Vec<f64>>,
{
    fn new(beta: f64, base: B) -> Result<Self> {
        Ok(FoldedQuad {
            wp: WrightParams::new(-beta, 1.0 - beta)?,
            base,
            kernel_cache: RefCell::new(HashMap::new()),
            pmf_cache: RefCell::new(HashMap::new()),
            error: RefCell::new(None),
        })
    }

    fn park(&self, e: TimeChangeError) {
        let mut slot = self.error.borrow_mut();
        if slot.is_none() {
            *slot = Some(e);
        }
    }

    fn kernel(&self, w: f64) -> f64 {
        let key = w.to_bits();
        if let Some(&v) = self.kernel_cache.borrow().get(&key) {
            return v;
        }
        let v = match wright(self.wp, -w) {
            Ok(v) => v.max(0.0),
            Err(e) => {
                self.park(e.into());
                0.0
            }
        };
        self.kernel_cache.borrow_mut().insert(key, v);
        v
    }

    fn base_prob(&self, w: f64, n: usize) -> f64 {
        let key = w.to_bits();
        if let Some(v) = self.pmf_cache.borrow().get(&key) {
            return v[n];
        }
        let v = match (self.base)(w) {
            Ok(probs) => Rc::new(probs),
            Err(e) => {
                self.park(e);
                Rc::new(vec![0.0])
            }
        };
        let out = if n < v.len() { v[n] } else { 0.0 };
        self.pmf_cache.borrow_mut().insert(key, v);
        out
    }

    fn integrate(&self, n_max: usize, w_max: f64) -> Result<Vec<f64>> {
        let mut probs = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            let f = |w: f64| self.kernel(w) * self.base_prob(w, n);
            let (value, _) = adaptive_simpson(&f, 0.0, w_max, QUAD_TOL);
            probs.push(value.max(0.0));
        }
        if let Some(e) = self.error.borrow_mut().take() {
            return Err(e);
        }
        Ok(probs)
    }
}

fn gfcp_quadrature(p: &GcpParams, beta: f64, t: f64, n_max: usize) -> Result<Vec<f64>> {
    if beta == 1.0 {
        return Ok(gcp_pmf(p, t, n_max)?.probs().to_vec());
    }
    let tb = t.powf(beta);
    let w_max = inverse_stable_tail_cutoff(beta, 1.0, CLOCK_TAIL)?;
    let q = FoldedQuad::new(beta, |w: f64| {
        Ok(gcp_pmf(p, tb * w, n_max)?.probs().to_vec())
    })?;
    q.integrate(n_max, w_max)
}

fn gfcp_mc(p: &GcpParams, beta: f64, t: f64, n_max: usize, sims: u64, seed: u64) -> Result<TruncatedPmf> {
    empirical_pmf(sims, seed, n_max, |rng| {
        let clock = if beta == 1.0 {
            t
        } else {
            inverse_stable_marginal(beta, t, rng).expect("validated parameters")
        };
        gcp_count_at(p, clock, rng)
    })
}

/// State probabilities of the process on an inverse stable clock of index
/// `beta`, by the requested route.  The closed-form route needs
/// Mittag-Leffler derivatives up to order `n_max` and is capped at 30; past
/// the cap, or when a derivative cannot be certified, it falls back to
/// quadrature and says so in the result.  A quadrature kernel failure falls
/// back to seeded Monte Carlo the same way.
pub fn gfcp_pmf(
    p: &GcpParams,
    beta: f64,
    t: f64,
    n_max: usize,
    method: PmfMethod,
) -> Result<RoutedPmf> {
    check_beta(beta)?;
    check_time(t)?;
    match method {
        PmfMethod::Ml => {
            let blocked = if n_max > 30 {
                Some(format!(
                    "ml route needs derivative order {n_max}, past the supported 30; used quadrature"
                ))
            } else {
                match gfcp_ml(p, beta, t, n_max) {
                    Ok(probs) => {
                        return Ok(RoutedPmf {
                            pmf: TruncatedPmf::new(probs, ML_MASS_TOL)?,
                            method: PmfMethod::Ml,
                            fallback_notice: None,
                        })
                    }
                    Err(TimeChangeError::SpecFun(e)) => {
                        Some(format!("ml route failed ({e}); used quadrature"))
                    }
                    Err(e) => return Err(e),
                }
            };
            let mut routed = gfcp_pmf(p, beta, t, n_max, PmfMethod::Quadrature)?;
            routed.fallback_notice = match routed.fallback_notice {
                Some(inner) => Some(format!("{}; {inner}", blocked.unwrap())),
                None => blocked,
            };
            Ok(routed)
        }
        PmfMethod::Quadrature => match gfcp_quadrature(p, beta, t, n_max) {
            Ok(probs) => Ok(RoutedPmf {
                pmf: TruncatedPmf::new(probs, QUAD_MASS_TOL)?,
                method: PmfMethod::Quadrature,
                fallback_notice: None,
            }),
            Err(TimeChangeError::SpecFun(e)) => {
                let (sims, seed) = match FALLBACK_MC {
                    PmfMethod::Mc { sims, seed } => (sims, seed),
                    _ => unreachable!(),
                };
                Ok(RoutedPmf {
                    pmf: gfcp_mc(p, beta, t, n_max, sims, seed)?,
                    method: FALLBACK_MC,
                    fallback_notice: Some(format!(
                        "quadrature kernel failed ({e}); used seeded Monte Carlo"
                    )),
                })
            }
            Err(e) => Err(e),
        },
        PmfMethod::Mc { sims, seed } => Ok(RoutedPmf {
            pmf: gfcp_mc(p, beta, t, n_max, sims, seed)?,
            method,
            fallback_notice: None,
        }),
        other => Err(TimeChangeError::Unsupported(format!(
            "gfcp_pmf supports ml, quadrature, and mc, not {other}"
        ))),
    }
}

/// Marginal increment distribution of the non-homogeneous process on an
/// inverse stable clock: the plain increment pmf over [v, v+u] integrated
/// against the clock density in u.  At β = 1 the clock is the identity.
pub fn ngfcp_pmf(
    r: &RateFunctionSet,
    beta: f64,
    t: f64,
    v: f64,
    n_max: usize,
) -> Result<TruncatedPmf> {
    check_beta(beta)?;
    check_time(t)?;
    require(v >= 0.0 && v.is_finite(), format!("need v >= 0, got {v}"))?;
    if beta == 1.0 {
        return Ok(ngcp_increment_pmf(r, t, v, n_max)?);
    }
    let tb = t.powf(beta);
    let w_max = inverse_stable_tail_cutoff(beta, 1.0, CLOCK_TAIL)?;
    let q = FoldedQuad::new(beta, |w: f64| {
        Ok(ngcp_increment_pmf(r, tb * w, v, n_max)?.probs().to_vec())
    })?;
    let probs = q.integrate(n_max, w_max)?;
    Ok(TruncatedPmf::new(probs, QUAD_MASS_TOL)?)
}

/// Residuals of the fractional master system on a uniform grid.  For each
/// state n the report holds D^β p(n,·) + Λ p(n,·) − Σ_{j≤min(n,k)} λ_j
/// p(n−j,·) at every evaluation point.  The discrete Caputo derivative is
/// least accurate in the initial layer where the exact solution has a t^β
/// cusp, so blanket bounds should be read through
/// [`GoverningReport::max_residual_from`] with a strictly positive start.
#[derive(Debug, Clone)]
pub struct GoverningReport {
    pub eval_points: Vec<f64>,
    pub residuals: Vec<Vec<f64>>,
    pub max_residual: f64,
}

impl GoverningReport {
    /// Largest |residual| over evaluation points at or after `t_min`.
    pub fn max_residual_from(&self, t_min: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.residuals {
            for (i, &t) in self.eval_points.iter().enumerate() {
                if t >= t_min {
                    worst = worst.max(row[i].abs());
                }
            }
        }
        worst
    }
}

/// Checks the governing fractional system on `t_grid` (uniform, starting at
/// 0).  States are evaluated by the closed-form route, the Caputo
/// derivative by the L1 scheme; at β = 1 a fourth-order central difference
/// replaces it and the first and last two grid points are skipped.
pub fn gfcp_governing_check(
    p: &GcpParams,
    beta: f64,
    t_grid: &[f64],
    n_max: usize,
) -> Result<GoverningReport> {
    check_beta(beta)?;
    require(t_grid.len() >= 5, "need at least 5 grid points")?;
    require(
        n_max <= 30,
        format!("closed-form route is capped at order 30, got n_max = {n_max}"),
    )?;
    let rows: Vec<Vec<f64>> = if beta == 1.0 {
        let mut rows = vec![Vec::with_capacity(t_grid.len()); n_max + 1];
        for &t in t_grid {
            check_time(t)?;
            let pmf = gcp_pmf(p, t, n_max)?;
            for (n, row) in rows.iter_mut().enumerate() {
                row.push(pmf.prob(n));
            }
        }
        rows
    } else {
        let mut rows = vec![Vec::with_capacity(t_grid.len()); n_max + 1];
        for &t in t_grid {
            check_time(t)?;
            let probs = gfcp_ml(p, beta, t, n_max)?;
            for (n, row) in rows.iter_mut().enumerate() {
                row.push(probs[n]);
            }
        }
        rows
    };
    let lambda = p.lambda();
    let total = p.total();
    let rhs = |n: usize, i: usize| -> f64 {
        let mut v = -total * rows[n][i];
        for (j, &l) in lambda.iter().enumerate() {
            let size = j + 1;
            if size <= n {
                v += l * rows[n - size][i];
            }
        }
        v
    };
    let (eval_points, residuals) = if beta == 1.0 {
        let h = t_grid[1] - t_grid[0];
        let m = t_grid.len();
        let eval: Vec<f64> = t_grid[2..m - 2].to_vec();
        let mut res = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            let mut row = Vec::with_capacity(m - 4);
            for i in 2..m - 2 {
                let d = (-rows[n][i + 2] + 8.0 * rows[n][i + 1] - 8.0 * rows[n][i - 1]
                    + rows[n][i - 2])
                    / (12.0 * h);
                row.push(d - rhs(n, i));
            }
            res.push(row);
        }
        (eval, res)
    } else {
        let eval: Vec<f64> = t_grid[1..].to_vec();
        let mut res = Vec::with_capacity(n_max + 1);
        for (n, row_n) in rows.iter().enumerate() {
            let d = caputo_numeric(t_grid, row_n, beta)?;
            let mut row = Vec::with_capacity(t_grid.len() - 1);
            for i in 1..t_grid.len() {
                row.push(d[i] - rhs(n, i));
            }
            res.push(row);
        }
        (eval, res)
    };
    let max_residual = residuals
        .iter()
        .flat_map(|row| row.iter().map(|r| r.abs()))
        .fold(0.0f64, f64::max);
    Ok(GoverningReport {
        eval_points,
        residuals,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngcp::RateFn;
    use crate::specfun::mittag_leffler;
    use crate::stats::{chi_square, DEFAULT_SIGNIFICANCE};
    use approx::assert_relative_eq;

    fn two_unit_rates() -> GcpParams {
        GcpParams::new(vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn empty_state_is_the_mittag_leffler_eigenfunction_value() {
        let p = two_unit_rates();
        let (beta, t) = (0.6, 1.3);
        let routed = gfcp_pmf(&p, beta, t, 8, PmfMethod::Ml).unwrap();
        let expect =
            mittag_leffler(MlParams::new(beta, 1.0).unwrap(), -p.total() * t.powf(beta)).unwrap();
        assert_relative_eq!(routed.pmf.prob(0), expect, max_relative = 1e-12);
        assert!(routed.fallback_notice.is_none());
    }

    #[test]
    fn ml_and_quadrature_agree_on_the_reference_set() {
        for (lams, beta) in [
            (vec![1.0, 1.0], 0.5),
            (vec![1.0, 1.0], 0.7),
            (vec![0.5, 1.0, 1.5], 0.7),
        ] {
            let p = GcpParams::new(lams).unwrap();
            let t = 1.0;
            let ml = gfcp_pmf(&p, beta, t, 10, PmfMethod::Ml).unwrap();
            let quad = gfcp_pmf(&p, beta, t, 10, PmfMethod::Quadrature).unwrap();
            for n in 0..=10 {
                let d = (ml.pmf.prob(n) - quad.pmf.prob(n)).abs();
                assert!(
                    d <= 1e-6,
                    "beta={beta}, n={n}: ml {} vs quad {}",
                    ml.pmf.prob(n),
                    quad.pmf.prob(n)
                );
            }
        }
    }

    #[test]
    fn unit_index_collapses_to_the_plain_process() {
        let p = two_unit_rates();
        let t = 0.9;
        let exact = gcp_pmf(&p, t, 12).unwrap();
        for method in [PmfMethod::Ml, PmfMethod::Quadrature] {
            let routed = gfcp_pmf(&p, 1.0, t, 12, method).unwrap();
            for n in 0..=12 {
                assert!(
                    (routed.pmf.prob(n) - exact.prob(n)).abs() <= 1e-10,
                    "{method}: state {n}"
                );
            }
        }
    }

    #[test]
    fn sampled_route_matches_the_closed_form() {
        let p = two_unit_rates();
        let (beta, t) = (0.7, 1.0);
        let ml = gfcp_pmf(&p, beta, t, 14, PmfMethod::Ml).unwrap();
        let mc = gfcp_pmf(
            &p,
            beta,
            t,
            14,
            PmfMethod::Mc {
                sims: 100_000,
                seed: 21,
            },
        )
        .unwrap();
        let mut observed: Vec<u64> = mc
            .pmf
            .probs()
            .iter()
            .map(|q| (q * 100_000.0).round() as u64)
            .collect();
        let seen: u64 = observed.iter().sum();
        observed.push(100_000 - seen);
        let report = chi_square(&ml.pmf, &observed, DEFAULT_SIGNIFICANCE).unwrap();
        assert!(report.pass, "chi2 {} p {}", report.statistic, report.p_value);
    }

    #[test]
    fn high_order_request_falls_back_to_quadrature_with_a_notice() {
        let p = two_unit_rates();
        let routed = gfcp_pmf(&p, 0.5, 0.4, 32, PmfMethod::Ml).unwrap();
        assert_eq!(routed.method, PmfMethod::Quadrature);
        let note = routed.fallback_notice.expect("notice expected");
        assert!(note.contains("quadrature"), "{note}");
        assert!(routed.pmf.tail_bound() < 1e-6);
    }

    #[test]
    fn rejects_methods_it_does_not_implement() {
        let p = two_unit_rates();
        assert!(matches!(
            gfcp_pmf(&p, 0.5, 1.0, 5, PmfMethod::Ode),
            Err(TimeChangeError::Unsupported(_))
        ));
        assert!(matches!(
            gfcp_pmf(&p, 1.2, 1.0, 5, PmfMethod::Ml),
            Err(TimeChangeError::BadParameter(_))
        ));
    }

    #[test]
    fn degenerate_time_is_a_point_mass() {
        let p = two_unit_rates();
        for method in [PmfMethod::Ml, PmfMethod::Quadrature] {
            let routed = gfcp_pmf(&p, 0.6, 0.0, 6, method).unwrap();
            assert!((routed.pmf.prob(0) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn governing_residuals_are_small_away_from_the_initial_layer() {
        let p = two_unit_rates();
        let h = 1e-3;
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 * h).collect();
        let report = gfcp_governing_check(&p, 0.7, &grid, 6).unwrap();
        let worst = report.max_residual_from(0.1);
        assert!(worst < 5e-3, "residual {worst}");
    }

    #[test]
    fn classical_limit_satisfies_the_ordinary_system() {
        let p = two_unit_rates();
        let h = 1e-3;
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 * h).collect();
        let report = gfcp_governing_check(&p, 1.0, &grid, 6).unwrap();
        assert!(report.max_residual < 1e-6, "residual {}", report.max_residual);
    }

    #[test]
    fn inhomogeneous_clocked_pmf_reduces_and_normalizes() {
        let r = RateFunctionSet::new(vec![RateFn::Linear(0.8), RateFn::Constant(0.5)]).unwrap();
        let exact = ngcp_increment_pmf(&r, 0.9, 0.2, 10).unwrap();
        let reduced = ngfcp_pmf(&r, 1.0, 0.9, 0.2, 10).unwrap();
        for n in 0..=10 {
            assert!((exact.prob(n) - reduced.prob(n)).abs() < 1e-12);
        }
        let frac = ngfcp_pmf(&r, 0.6, 0.9, 0.2, 14).unwrap();
        assert!(frac.tail_bound() < 1e-4, "tail {}", frac.tail_bound());
        for n in 0..=14 {
            assert!(frac.prob(n) >= 0.0);
        }
    }

    #[test]
    fn constant_rates_make_the_inhomogeneous_clocked_pmf_homogeneous() {
        let r = RateFunctionSet::new(vec![RateFn::Constant(1.0), RateFn::Constant(1.0)]).unwrap();
        let p = two_unit_rates();
        let (beta, t) = (0.6, 0.8);
        let a = ngfcp_pmf(&r, beta, t, 0.0, 10).unwrap();
        let b = gfcp_pmf(&p, beta, t, 10, PmfMethod::Ml).unwrap();
        for n in 0..=10 {
            assert!(
                (a.prob(n) - b.pmf.prob(n)).abs() <= 1e-8,
                "state {n}: {} vs {}",
                a.prob(n),
                b.pmf.prob(n)
            );
        }
    }
}

//! Adaptive Simpson quadrature, shared by the density integrals, cumulative
//! rate functions, and residual checks.

/// Integrate f over [a, b] to absolute tolerance `tol`, returning the value
/// and an accumulated error estimate.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return (left + right + delta / 15.0, delta.abs() / 15.0);
    }
    let (lv, le) = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
    let (rv, re) = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    (lv + rv, le + re)
}

/// Integrate a decaying f over [a, ∞) by marching doubling windows until
/// three consecutive windows each contribute less than tol/4.
pub fn integrate_decaying<F: Fn(f64) -> f64>(f: &F, a: f64, width0: f64, tol: f64) -> (f64, f64) {
    let mut total = 0.0;
    let mut err = 0.0;
    let mut lo = a;
    let mut width = width0;
    let mut quiet = 0;
    for _ in 0..200 {
        let hi = lo + width;
        let (v, e) = adaptive_simpson(f, lo, hi, tol / 8.0);
        total += v;
        err += e;
        if v.abs() < 0.25 * tol {
            quiet += 1;
            if quiet >= 3 {
                break;
            }
        } else {
            quiet = 0;
        }
        lo = hi;
        width *= 2.0;
    }
    (total, err)
}

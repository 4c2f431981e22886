//! Derivatives of composite and reciprocal functions from the derivative
//! tables of their building blocks.
//!
//! For h = e^g the m-th derivative is h^(m) = e^g · B_m, where the B_m
//! follow the complete-Bell-polynomial recurrence over a_j = g^(j).  For
//! r = 1/φ, differentiating rφ = 1 m times and solving for r^(m) gives a
//! companion recurrence.  Both run over a shared binomial row.

use super::{require, Result, TimeChangeError};

/// Largest derivative order the recurrences accept.  Binomial rows stay
/// exactly representable in f64 well past this, but the downstream omega
/// sums lose all accuracy first; callers are expected to switch route or
/// fail loudly rather than push the order higher.
pub(crate) const MAX_BELL_ORDER: usize = 40;

fn check_order(m: usize) -> Result<()> {
    if m > MAX_BELL_ORDER {
        return Err(TimeChangeError::BadParameter(format!(
            "derivative order {m} exceeds the supported {MAX_BELL_ORDER}"
        )));
    }
    Ok(())
}

/// One row of binomial coefficients C(m, 0..=m), built multiplicatively.
pub(crate) fn binomial_row(m: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(m + 1);
    row.push(1.0);
    for i in 1..=m {
        let prev = row[i - 1];
        row.push(prev * (m - i + 1) as f64 / i as f64);
    }
    row
}

/// B_0..B_m for the exponential composition: given a_j = g^(j)(x) for
/// j = 1..=m (`a[j-1]`), returns the factors with
/// d^m/dx^m e^{g(x)} = e^{g(x)} B_m.
pub(crate) fn complete_bell(a: &[f64]) -> Result<Vec<f64>> {
    let m = a.len();
    check_order(m)?;
    let mut b = Vec::with_capacity(m + 1);
    b.push(1.0);
    for next in 1..=m {
        // B_next = Σ_{i=0}^{next-1} C(next-1, i) B_{next-1-i} a_{i+1}
        let row = binomial_row(next - 1);
        let mut s = 0.0;
        let mut c = 0.0;
        for i in 0..next {
            crate::combin::neumaier_add(&mut s, &mut c, row[i] * b[next - 1 - i] * a[i]);
        }
        b.push(s + c);
    }
    Ok(b)
}

/// Derivatives of 1/φ at a point, from φ's derivatives there.
/// `phi[j]` holds φ^(j); the result holds (1/φ)^(j), same length.
pub(crate) fn reciprocal_derivs(phi: &[f64]) -> Result<Vec<f64>> {
    require(!phi.is_empty(), "need at least φ itself")?;
    check_order(phi.len() - 1)?;
    require(
        phi[0] != 0.0 && phi[0].is_finite(),
        format!("reciprocal needs φ ≠ 0 at the expansion point, got {}", phi[0]),
    )?;
    let mut r = Vec::with_capacity(phi.len());
    r.push(1.0 / phi[0]);
    for m in 1..phi.len() {
        let row = binomial_row(m);
        let mut s = 0.0;
        let mut c = 0.0;
        for i in 0..m {
            crate::combin::neumaier_add(&mut s, &mut c, row[i] * r[i] * phi[m - i]);
        }
        r.push(-(s + c) / phi[0]);
    }
    Ok(r)
}

/// Falling factorial x(x−1)⋯(x−m+1), with the empty product equal to 1.
pub(crate) fn falling_factorial(x: f64, m: u32) -> f64 {
    let mut out = 1.0;
    for i in 0..m {
        out *= x - i as f64;
    }
    out
}

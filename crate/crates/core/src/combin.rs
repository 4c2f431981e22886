//! Enumeration of the index set Ω(k,n) = {(x₁,…,x_k): Σ j·x_j = n} and
//! weighted sums over it.
//!
//! Every pmf in this crate is a sum over Ω(k,n): a state n is reached by x₁
//! jumps of size 1, x₂ jumps of size 2, and so on, and the number of jumps
//! spent is z_k = Σ x_j.  |Ω(k,n)| equals the number of integer partitions of
//! n with parts ≤ k, so enumeration is cheap at desk scale (n up to a few
//! hundred) even though it grows sub-exponentially.

use crate::dd::Dd;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CombinError {
    #[error("k must be at least 1")]
    ZeroParts,
    #[error("rate vector has length {got}, expected k = {expected}")]
    RateLength { got: usize, expected: usize },
    #[error("rates must be nonnegative and finite, found {0}")]
    NegativeRate(f64),
}

pub type Result<T> = std::result::Result<T, CombinError>;

/// One solution of Σ j·x_j = n: `parts[j-1]` is the number of size-j jumps,
/// `weight_order` is z_k = Σ x_j, the total number of jumps spent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Composition {
    pub parts: Vec<u32>,
    pub weight_order: u32,
}

/// Number of solutions of Σ j·x_j = n with parts ≤ k, by the standard
/// partition recurrence.  Used to pre-size enumeration buffers and as the
/// cardinality oracle in tests.
pub fn omega_count(k: usize, n: u32) -> u64 {
    let n = n as usize;
    let mut table = vec![0u64; n + 1];
    table[0] = 1;
    for j in 1..=k {
        for r in j..=n {
            table[r] += table[r - j];
        }
    }
    table[n]
}

/// All solutions of Σ j·x_j = n, each exactly once, in the order produced by
/// descending on part size j = k..1 with x_j increasing from 0.  For k=2,
/// n=2 this yields (2,0),(0,1).  The order is deterministic and stable, which
/// the golden-output tests rely on.
pub fn enumerate_omega(k: usize, n: u32) -> Result<Vec<Composition>> {
    if k == 0 {
        return Err(CombinError::ZeroParts);
    }
    let mut out = Vec::with_capacity(omega_count(k, n) as usize);
    let mut parts = vec![0u32; k];
    descend(k, n, &mut parts, &mut out);
    Ok(out)
}

fn descend(j: usize, remaining: u32, parts: &mut [u32], out: &mut Vec<Composition>) {
    if j == 1 {
        parts[0] = remaining;
        let z = parts.iter().sum();
        out.push(Composition {
            parts: parts.to_vec(),
            weight_order: z,
        });
        parts[0] = 0;
        return;
    }
    for x in 0..=remaining / j as u32 {
        parts[j - 1] = x;
        descend(j - 1, remaining - x * j as u32, parts, out);
    }
    parts[j - 1] = 0;
}

/// Σ over Ω(k,n) of [Π_j λ_j^{x_j}/x_j!]·g(z_k), with Neumaier-compensated
/// accumulation.  The weight of each composition is assembled in double-double
/// log space so that large n or extreme rates cannot underflow the product
/// before g is applied (g's magnitude is folded into the same exponent) and
/// every returned term is correct to f64 rounding, not just to the ~1e-14
/// that an f64 log of magnitude ~10² would allow.  A zero rate is allowed and
/// annihilates every composition that uses that part size.
pub fn omega_weighted_sum<G>(k: usize, n: u32, lambda: &[f64], g: G) -> Result<f64>
where
    G: Fn(u32) -> f64,
{
    if lambda.len() != k {
        return Err(CombinError::RateLength {
            got: lambda.len(),
            expected: k,
        });
    }
    if let Some(&bad) = lambda.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(CombinError::NegativeRate(bad));
    }
    let ln_lambda: Vec<Option<Dd>> = lambda
        .iter()
        .map(|l| (*l > 0.0).then(|| Dd::from_f64(*l).ln()))
        .collect();
    // ln x! for every part size that can occur (x <= n, reached at j=1)
    let mut ln_fact = Vec::with_capacity(n as usize + 1);
    ln_fact.push(Dd::ZERO);
    for x in 1..=n {
        let prev = *ln_fact.last().unwrap();
        ln_fact.push(prev + Dd::from_f64(x as f64).ln());
    }
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    'compositions: for c in enumerate_omega(k, n)? {
        let gv = g(c.weight_order);
        if gv == 0.0 {
            continue;
        }
        let mut ln_w = Dd::from_f64(gv.abs().ln());
        for (j, &x) in c.parts.iter().enumerate() {
            if x > 0 {
                let Some(ln_l) = ln_lambda[j] else {
                    continue 'compositions;
                };
                ln_w = ln_w + ln_l.mul_f64(x as f64) - ln_fact[x as usize];
            }
        }
        let term = gv.signum() * ln_w.exp().to_f64();
        neumaier_add(&mut sum, &mut comp, term);
    }
    Ok(sum + comp)
}

/// One step of Neumaier's compensated summation.
pub fn neumaier_add(sum: &mut f64, comp: &mut f64, v: f64) {
    let t = *sum + v;
    if sum.abs() >= v.abs() {
        *comp += (*sum - t) + v;
    } else {
        *comp += (v - t) + *sum;
    }
    *sum = t;
}

/// Chernoff bound Pr{Poisson(μ) ≥ m} ≤ exp(−μ + m(1 + ln(μ/m))) for m > μ.
pub fn poisson_tail_bound(mu: f64, m: f64) -> f64 {
    if m <= mu {
        1.0
    } else {
        (-mu + m * (1.0 + (mu / m).ln())).exp()
    }
}

/// Smallest N such that the jump-size process with k sizes and total event
/// rate Λ over elapsed operational time t has Pr{value > N} ≤ tol, using the
/// dominating bound value ≤ k · (number of events) and the Poisson Chernoff
/// tail.  Every truncated pmf in the crate sizes its state space this way.
pub fn certified_n_max(k: usize, total_rate_time: f64, tol: f64) -> usize {
    let mu = total_rate_time;
    let mut n = (k as f64 * mu).ceil() as usize + k;
    loop {
        let m = (n as f64 + 1.0) / k as f64;
        if poisson_tail_bound(mu, m.ceil()) <= tol {
            return n;
        }
        n += 1 + n / 8;
    }
}

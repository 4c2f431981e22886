//! Double-double arithmetic: a value is the unevaluated sum `hi + lo` of two
//! f64 with |lo| ≤ ulp(hi)/2, giving roughly 31 significant decimal digits.
//!
//! The alternating series in [`crate::specfun`] cancel catastrophically for
//! strongly negative arguments: the sum is orders of magnitude smaller than
//! its largest term, so plain f64 summation bottoms out at
//! ~1e-16 · max|term|.  Accumulating in double-double moves that floor to
//! ~1e-31 · max|term|, which is what makes the Mittag-Leffler and Wright
//! series usable on the argument ranges the process formulas need.
//!
//! Arithmetic follows the classical error-free transformations (Knuth's
//! two_sum, FMA-based two_prod) and the add/mul/div sequences of the QD
//! library.  Transcendentals are argument-reduced Taylor series; `ln_gamma`
//! is Stirling's series with exact rational Bernoulli coefficients after
//! shifting the argument above 30.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Unevaluated sum hi + lo with |lo| ≤ ulp(hi)/2.
#[derive(Clone, Copy, Debug, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

/// π to double-double precision (QD library constant).
pub const PI: Dd = Dd {
    hi: 3.141592653589793116e0,
    lo: 1.224646799147353207e-16,
};

/// ln 2 to double-double precision (QD library constant).
pub const LN2: Dd = Dd {
    hi: 6.931471805599452862e-1,
    lo: 2.319046813846299558e-17,
};

const EPS: f64 = 1.232595164407831e-32; // 2^-106

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    debug_assert!(a == 0.0 || a.abs() >= b.abs() || a.is_nan() || b.is_nan());
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn new(hi: f64, lo: f64) -> Dd {
        let (s, e) = quick_two_sum(hi, lo);
        Dd { hi: s, lo: e }
    }

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact quotient of two i64, e.g. for Bernoulli numbers.
    pub fn from_ratio(num: i64, den: i64) -> Dd {
        Dd::from_f64(num as f64) / Dd::from_f64(den as f64)
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.hi.is_finite()
    }

    /// Exact scaling by 2^n.
    #[inline]
    pub fn ldexp(self, n: i32) -> Dd {
        let f = libm_ldexp(1.0, n);
        Dd {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    #[inline]
    pub fn mul_f64(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let (s, t) = quick_two_sum(p, e + self.lo * b);
        Dd { hi: s, lo: t }
    }

    #[inline]
    pub fn add_f64(self, b: f64) -> Dd {
        let (s, e) = two_sum(self.hi, b);
        let (hi, lo) = quick_two_sum(s, e + self.lo);
        Dd { hi, lo }
    }

    pub fn sqr(self) -> Dd {
        let (p, mut e) = two_prod(self.hi, self.hi);
        e += 2.0 * self.hi * self.lo;
        e += self.lo * self.lo;
        let (s, t) = quick_two_sum(p, e);
        Dd { hi: s, lo: t }
    }

    pub fn recip(self) -> Dd {
        Dd::ONE / self
    }

    /// Integer power by repeated squaring.
    pub fn powi(self, n: i32) -> Dd {
        if n == 0 {
            return Dd::ONE;
        }
        let mut base = if n < 0 { self.recip() } else { self };
        let mut e = n.unsigned_abs();
        let mut acc = Dd::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base.sqr();
            e >>= 1;
        }
        acc
    }

    pub fn sqrt(self) -> Dd {
        assert!(self.hi >= 0.0, "dd sqrt of negative value");
        if self.hi == 0.0 {
            return Dd::ZERO;
        }
        let y = Dd::from_f64(self.hi.sqrt());
        let r = (self - y.sqr()) / y.mul_f64(2.0);
        y + r
    }

    /// exp(self) via range reduction around ln 2 and a Taylor tail.
    pub fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd::from_f64(f64::INFINITY);
        }
        if self.hi < -746.0 {
            return Dd::ZERO;
        }
        let n = (self.hi / LN2.hi).round();
        let r = self - LN2.mul_f64(n);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for k in 1..40 {
            // dividing by the exact integer keeps each term at dd accuracy;
            // multiplying by a rounded 1/k would cap the result at ~1e-17
            term = term * r / Dd::from_f64(k as f64);
            sum = sum + term;
            if term.hi.abs() < EPS * sum.hi.abs() {
                break;
            }
        }
        sum.ldexp(n as i32)
    }

    /// Natural log via an f64 seed refined with two Newton steps on exp.
    pub fn ln(self) -> Dd {
        assert!(self.hi > 0.0, "dd ln of non-positive value");
        let mut y = Dd::from_f64(self.hi.ln());
        for _ in 0..2 {
            // y <- y + x*exp(-y) - 1
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }

    /// self^e for positive self.
    pub fn powf(self, e: f64) -> Dd {
        (self.ln().mul_f64(e)).exp()
    }

    /// sin(π·self), exact at integers.
    pub fn sinpi(self) -> Dd {
        let n = self.hi.round();
        let r = self.add_f64(-n);
        let u = PI * r;
        let u2 = u.sqr();
        let mut term = u;
        let mut sum = u;
        for k in 1..30 {
            term = -(term * u2) / Dd::from_f64((2 * k) as f64 * (2 * k + 1) as f64);
            sum = sum + term;
            if term.hi.abs() < EPS * sum.hi.abs().max(1e-300) {
                break;
            }
        }
        // sin(π(n+r)) = (-1)^n sin(πr)
        if (n as i64) & 1 == 1 {
            -sum
        } else {
            sum
        }
    }

    /// ln Γ(self) for self > 0: shift above 30, then Stirling's series with
    /// exact Bernoulli coefficients B_2..B_26 (truncation < 1e-35 at 30).
    pub fn ln_gamma(self) -> Dd {
        assert!(self.hi > 0.0, "dd ln_gamma needs a positive argument");
        let mut shift = Dd::ONE;
        let mut w = self;
        while w.hi < 30.0 {
            shift = shift * w;
            w = w.add_f64(1.0);
        }
        let ln_w = w.ln();
        let mut s = (w - Dd::new(0.5, 0.0)) * ln_w - w + half_ln_two_pi();
        let winv2 = w.sqr().recip();
        let mut p = w.recip();
        for (num, den, idx) in BERNOULLI.iter() {
            let c = Dd::from_ratio(*num, *den)
                / Dd::from_f64((2 * idx) as f64 * (2 * idx - 1) as f64);
            s = s + c * p;
            p = p * winv2;
        }
        s - shift.ln()
    }

    /// 1/Γ(self) for any real argument, zero exactly at the poles.  The
    /// reflection 1/Γ(z) = Γ(1−z)·sin(πz)/π is assembled in log space so the
    /// gamma factor cannot overflow on its own.  The literal argument is
    /// honored: a value one rounding error away from a pole yields the
    /// correspondingly large reciprocal rather than 0.  Series whose exact
    /// parameters sit on poles but whose f64 images miss them rely on that:
    /// the large near-pole term is cancelled by matching perturbations in
    /// every neighboring term, and snapping it to zero would break the
    /// cancellation at far above the dd noise floor.
    pub fn recip_gamma(self) -> Dd {
        if self.hi > 0.0 {
            return (-self.ln_gamma()).exp();
        }
        let s = self.sinpi();
        if s.hi == 0.0 {
            return Dd::ZERO;
        }
        let v = ((Dd::ONE - self).ln_gamma() + s.abs().ln() - PI.ln()).exp();
        if s.hi < 0.0 {
            -v
        } else {
            v
        }
    }
}

fn half_ln_two_pi() -> Dd {
    (PI.mul_f64(2.0)).ln().mul_f64(0.5)
}

/// (numerator, denominator, n) for the Bernoulli numbers B_{2n}, n = 1..13.
const BERNOULLI: [(i64, i64, i64); 13] = [
    (1, 6, 1),
    (-1, 30, 2),
    (1, 42, 3),
    (-1, 30, 4),
    (5, 66, 5),
    (-691, 2730, 6),
    (7, 6, 7),
    (-3617, 510, 8),
    (43867, 798, 9),
    (-174611, 330, 10),
    (854513, 138, 11),
    (-236364091, 2730, 12),
    (8553103, 6, 13),
];

fn libm_ldexp(x: f64, n: i32) -> f64 {
    // Safe range here: |n| stays below 1000 for every caller.
    x * 2f64.powi(n)
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, rhs: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let (t, f) = two_sum(self.lo, rhs.lo);
        let (s2, e2) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s2, e2 + f);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, rhs: Dd) -> Dd {
        self + (-rhs)
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, rhs: Dd) -> Dd {
        let (p, mut e) = two_prod(self.hi, rhs.hi);
        e += self.hi * rhs.lo + self.lo * rhs.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, rhs: Dd) -> Dd {
        let q1 = self.hi / rhs.hi;
        let r = self - rhs.mul_f64(q1);
        let q2 = r.hi / rhs.hi;
        let r2 = r - rhs.mul_f64(q2);
        let q3 = r2.hi / rhs.hi;
        let (s, e) = quick_two_sum(q1, q2);
        Dd::new(s, e + q3)
    }
}

impl PartialEq for Dd {
    fn eq(&self, other: &Dd) -> bool {
        self.hi == other.hi && self.lo == other.lo
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, other: &Dd) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}

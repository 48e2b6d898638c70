//! Minimal double-double arithmetic (about 106 significant bits).
//!
//! Only what the kernel identities need: add, sub, mul, div and `exp`.
//! Algorithms follow the usual error-free transformations (two-sum and
//! fma-based two-product).

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact product of two doubles.
    pub fn product(a: f64, b: f64) -> Self {
        let (hi, lo) = two_prod(a, b);
        Dd { hi, lo }
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Multiplication by a power of two; exact barring over/underflow.
    pub fn scale_pow2(self, exp: i32) -> Self {
        let s = 2f64.powi(exp);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn exp(self) -> Self {
        if self.hi == 0.0 && self.lo == 0.0 {
            return Dd::ONE;
        }
        // x = n ln2 + r, |r| <= ln2/2, then e^r via expm1 of r/2^10 and squaring.
        let n = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::from_f64(n)).scale_pow2(-10);

        let mut term = r;
        let mut sum = r;
        let mut i = 2.0;
        while term.hi.abs() > 1e-36 * sum.hi.abs().max(1e-300) {
            term = term * r / Dd::from_f64(i);
            sum = sum + term;
            i += 1.0;
            if i > 40.0 {
                break;
            }
        }
        // e^{2r} - 1 = s (s + 2)
        for _ in 0..10 {
            sum = sum * (sum + Dd::from_f64(2.0));
        }
        (sum + Dd::ONE).scale_pow2(n as i32)
    }

    pub fn sinh(self) -> Self {
        let e = self.exp();
        (e - Dd::ONE / e).scale_pow2(-1)
    }

    pub fn cosh(self) -> Self {
        let e = self.exp();
        (e + Dd::ONE / e).scale_pow2(-1)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::from_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::from_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from_f64(q3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_matches_libm_to_an_ulp() {
        for &x in &[-10.2, -3.0, -0.5, -1e-9, 1e-9, 0.1, 0.2, 1.0, 5.1, 10.2] {
            let e = Dd::from_f64(x).exp();
            let reference = f64::exp(x);
            assert!(
                ((e.to_f64() - reference) / reference).abs() <= 2.5e-16,
                "x = {x}"
            );
        }
    }

    #[test]
    fn exp_of_sum_is_product_of_exps() {
        for &x in &[0.1, 1.7, 7.3] {
            let a = Dd::from_f64(x);
            let one = a.exp() * (-a).exp();
            assert!((one - Dd::ONE).to_f64().abs() < 1e-29);
        }
    }

    #[test]
    fn division_round_trips() {
        let a = Dd::from_f64(1.0) / Dd::from_f64(3.0);
        let back = a * Dd::from_f64(3.0);
        assert!((back - Dd::ONE).to_f64().abs() < 1e-31);
    }
}

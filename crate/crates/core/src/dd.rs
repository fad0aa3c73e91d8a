//! Double-double arithmetic (about 32 significant digits), just enough to sum
//! alternating special-function series whose terms dwarf their sum.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};
const PI: Dd = Dd {
    hi: std::f64::consts::PI,
    lo: 1.224_646_799_147_353_2e-16,
};
const LN_SQRT_2PI: Dd = Dd {
    hi: 0.918_938_533_204_672_8,
    lo: -3.878_294_158_067_241_4e-17,
};
const LN_PI: Dd = Dd {
    hi: 1.144_729_885_849_400_2,
    lo: 1.026_595_116_270_782_6e-17,
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
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn ldexp(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn round(self) -> Self {
        let r = self.hi.round();
        if r == self.hi {
            // hi already integral; the fraction lives in lo
            let (s, e) = quick_two_sum(r, self.lo.round());
            Dd { hi: s, lo: e }
        } else if (r - self.hi).abs() == 0.5 {
            // tie in hi decided by the sign of lo
            let adj = if self.lo > 0.0 && r < self.hi {
                r + 1.0
            } else if self.lo < 0.0 && r > self.hi {
                r - 1.0
            } else {
                r
            };
            Dd::new(adj)
        } else {
            Dd::new(r)
        }
    }

    pub fn sqr(self) -> Self {
        self * self
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let x = self.hi.sqrt();
        let xd = Dd::new(x);
        xd + (self - xd.sqr()) / Dd::new(2.0 * x)
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Dd::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::new(k)).ldexp(-10);
        // expm1(r) by Taylor; |r| < 3.4e-4 so ten terms reach 1e-37
        let mut term = r;
        let mut s = r;
        for j in 2..=10 {
            term = term * r / Dd::new(j as f64);
            s = s + term;
        }
        for _ in 0..10 {
            s = s.ldexp(1) + s.sqr();
        }
        let e = s + Dd::ONE;
        // split the scaling so 2^k never overflows on its own
        let k = k as i32;
        e.ldexp(k / 2).ldexp(k - k / 2)
    }

    pub fn ln(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::new(f64::NAN);
        }
        let x = Dd::new(self.hi.ln());
        x + self * (-x).exp() - Dd::ONE
    }

    /// `sin(pi x)`.
    pub fn sin_pi(self) -> Self {
        let n = self.round();
        let r = self - n;
        let odd = (n.hi % 2.0 != 0.0) ^ (n.lo % 2.0 != 0.0);
        let sign_r = if r.hi < 0.0 { -1.0 } else { 1.0 };
        let ra = r.abs();
        let v = if ra.hi > 0.25 {
            cos_taylor(PI * (Dd::new(0.5) - ra))
        } else {
            sin_taylor(PI * ra)
        };
        let v = v * Dd::new(sign_r);
        if odd {
            -v
        } else {
            v
        }
    }
}

fn sin_taylor(y: Dd) -> Dd {
    let y2 = y.sqr();
    let mut term = y;
    let mut s = y;
    let mut k = 1.0;
    while term.hi.abs() > 1e-36 * s.hi.abs().max(1e-300) {
        term = -(term * y2) / Dd::new((k + 1.0) * (k + 2.0));
        s = s + term;
        k += 2.0;
    }
    s
}

fn cos_taylor(y: Dd) -> Dd {
    let y2 = y.sqr();
    let mut term = Dd::ONE;
    let mut s = Dd::ONE;
    let mut k = 0.0;
    while term.hi.abs() > 1e-36 {
        term = -(term * y2) / Dd::new((k + 1.0) * (k + 2.0));
        s = s + term;
        k += 2.0;
    }
    s
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

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
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
        let r = self - b * Dd::new(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::new(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

/// `B_{2k} / (2k (2k - 1))` as exact fractions.
const STIRLING: [(f64, f64); 12] = [
    (1.0, 12.0),
    (-1.0, 360.0),
    (1.0, 1260.0),
    (-1.0, 1680.0),
    (1.0, 1188.0),
    (-691.0, 360_360.0),
    (1.0, 156.0),
    (-3617.0, 122_400.0),
    (43_867.0, 244_188.0),
    (-174_611.0, 125_400.0),
    (77_683.0, 5_796.0),
    (-236_364_091.0, 1_506_960.0),
];

/// `ln Gamma(x)` for `x > 0`.
pub fn ln_gamma(x: Dd) -> Dd {
    let shift = if x.hi < 40.0 { (40.0 - x.hi).ceil() as usize } else { 0 };
    let mut prod = Dd::ONE;
    let mut y = x;
    for _ in 0..shift {
        prod = prod * y;
        y = y + Dd::ONE;
    }
    let inv = Dd::ONE / y;
    let inv2 = inv.sqr();
    let mut series = Dd::ZERO;
    let mut p = inv;
    for (num, den) in STIRLING {
        series = series + p * (Dd::new(num) / Dd::new(den));
        p = p * inv2;
    }
    let stirling = (y - Dd::new(0.5)) * y.ln() - y + LN_SQRT_2PI + series;
    if shift > 0 {
        stirling - prod.ln()
    } else {
        stirling
    }
}

/// `(ln |1/Gamma(x)|, sign)`, sign `0` at the poles.
pub fn rgamma_ln_parts(x: Dd) -> (Dd, f64) {
    if x.hi > 0.0 {
        return (-ln_gamma(x), 1.0);
    }
    if x.lo == 0.0 && x.hi == x.hi.floor() {
        return (Dd::new(f64::NEG_INFINITY), 0.0);
    }
    // 1/Gamma(x) = sin(pi x) Gamma(1 - x) / pi
    let s = x.sin_pi();
    let sign = if s.hi < 0.0 { -1.0 } else { 1.0 };
    (ln_gamma(Dd::ONE - x) + s.abs().ln() - LN_PI, sign)
}

/// Complex double-double, only what series summation needs.
#[derive(Debug, Clone, Copy, Default)]
pub struct CDd {
    pub re: Dd,
    pub im: Dd,
}

impl CDd {
    pub fn new(re: Dd, im: Dd) -> Self {
        Self { re, im }
    }

    pub fn mul(self, b: CDd) -> CDd {
        CDd {
            re: self.re * b.re - self.im * b.im,
            im: self.re * b.im + self.im * b.re,
        }
    }

    pub fn scale(self, s: Dd) -> CDd {
        CDd {
            re: self.re * s,
            im: self.im * s,
        }
    }

    pub fn add(self, b: CDd) -> CDd {
        CDd {
            re: self.re + b.re,
            im: self.im + b.im,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Dd, hi: f64, lo: f64, tol: f64) -> bool {
        let d = (a - Dd { hi, lo }).to_f64().abs();
        d <= tol * hi.abs().max(1e-300)
    }

    // Reference splits below come from 60-digit arithmetic.

    #[test]
    fn exp_and_ln_reach_double_double_accuracy() {
        assert!(close(Dd::ONE.exp(), std::f64::consts::E, 1.445_646_891_729_250_2e-16, 1e-30));
        assert!(close(Dd::new(2.0).ln(), LN2.hi, LN2.lo, 1e-30));
        let x = Dd::new(-37.25);
        assert!(close(x.exp().ln(), -37.25, 0.0, 1e-30));
        let y = Dd::new(123.456);
        assert!(close(y.ln().exp(), 123.456, 0.0, 1e-30));
    }

    #[test]
    fn division_and_sqrt() {
        let third = Dd::ONE / Dd::new(3.0);
        assert!((third * Dd::new(3.0) - Dd::ONE).to_f64().abs() < 1e-31);
        let r = Dd::new(2.0).sqrt();
        assert!((r * r - Dd::new(2.0)).to_f64().abs() < 1e-31);
    }

    #[test]
    fn sin_pi_values() {
        assert_eq!(Dd::new(3.0).sin_pi().to_f64(), 0.0);
        assert!((Dd::new(0.5).sin_pi() - Dd::ONE).to_f64().abs() < 1e-31);
        assert!((Dd::new(-2.5).sin_pi() + Dd::ONE).to_f64().abs() < 1e-31);
        // sin(pi/6) = 1/2
        let sixth = Dd::ONE / Dd::new(6.0);
        assert!((sixth.sin_pi() - Dd::new(0.5)).to_f64().abs() < 1e-31);
        assert!(((Dd::new(7.0) + sixth).sin_pi() + Dd::new(0.5)).to_f64().abs() < 1e-30);
    }

    #[test]
    fn ln_gamma_values() {
        // ln Gamma(1/2) = ln(pi)/2
        assert!(close(ln_gamma(Dd::new(0.5)), 0.572_364_942_924_700_1, 5.132_975_581_353_913e-18, 1e-28));
        // ln 20! exactly from the integer product
        let mut f = Dd::ONE;
        for k in 2..=20 {
            f = f * Dd::new(k as f64);
        }
        assert!((ln_gamma(Dd::new(21.0)) - f.ln()).to_f64().abs() < 1e-29);
        assert!(ln_gamma(Dd::ONE).to_f64().abs() < 1e-30);
    }

    #[test]
    fn reflection_signs() {
        let (l, s) = rgamma_ln_parts(Dd::new(-0.5));
        // 1/Gamma(-1/2) = -1/(2 sqrt(pi))
        let want = -1.0 / (2.0 * std::f64::consts::PI.sqrt());
        assert!((s * l.exp().to_f64() - want).abs() < 1e-16);
        assert_eq!(rgamma_ln_parts(Dd::new(-3.0)).1, 0.0);
    }
}

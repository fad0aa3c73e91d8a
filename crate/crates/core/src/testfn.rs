//! Compactly supported Gevrey test functions, their weighted derivative
//! norms, and the two convolutions `*` and `*_0`.
//!
//! Bumps are analytic on the open support, so derivatives of every order come
//! from the Cauchy integral on a small circle. Convolution products
//! differentiate through the left factor.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::gevrey::WeightSequence;
use crate::quad::{gauss_kronrod, GkOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Zero,
    Bump,
    ConvolutionProduct,
    ExponentiallyWeighted,
    Sum,
}

#[derive(Debug, Clone)]
enum Repr {
    Zero,
    Bump { s: f64, center: f64, radius: f64 },
    Convolution {
        left: Arc<TestFunction>,
        right: Arc<TestFunction>,
        // `*_0`: integrate over [0, t] only
        from_zero: bool,
    },
    Weighted { inner: Arc<TestFunction>, rate: f64 },
    Sum(Arc<TestFunction>, Arc<TestFunction>),
}

/// A real test function with compact support `[l, r]`, times a scalar.
#[derive(Debug, Clone)]
pub struct TestFunction {
    repr: Repr,
    scale: f64,
    support: (f64, f64),
}

/// Inner integrals behind convolution values; tight so that an outer
/// quadrature sees a smooth integrand.
fn inner_opts() -> GkOptions {
    GkOptions {
        abs_tol: 1e-16,
        rel_tol: 1e-13,
        max_intervals: 400,
    }
}

/// `exp(-(1 - u^2)^{-1/(s-1)})` on `|u| < 1`, `0` outside.
pub fn gevrey_bump(s: f64, center: f64, radius: f64) -> Result<TestFunction> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(invalid(format!("bump Gevrey index must exceed 1, got {s}")));
    }
    if !(radius > 0.0) || !radius.is_finite() || !center.is_finite() {
        return Err(invalid(format!("bump radius must be positive, got {radius}")));
    }
    Ok(TestFunction {
        repr: Repr::Bump { s, center, radius },
        scale: 1.0,
        support: (center - radius, center + radius),
    })
}

fn bump_complex(s: f64, center: f64, radius: f64, z: Complex64) -> Complex64 {
    let u = (z - center) / radius;
    let w = Complex64::new(1.0, 0.0) - u * u;
    (-(w.ln() * (-1.0 / (s - 1.0))).exp()).exp()
}

fn bump_real(s: f64, center: f64, radius: f64, t: f64) -> f64 {
    let u = (t - center) / radius;
    if u.abs() >= 1.0 {
        return 0.0;
    }
    (-(1.0 - u * u).powf(-1.0 / (s - 1.0))).exp()
}

impl TestFunction {
    pub fn zero() -> Self {
        Self {
            repr: Repr::Zero,
            scale: 0.0,
            support: (0.0, 0.0),
        }
    }

    pub fn kind(&self) -> Kind {
        match self.repr {
            Repr::Zero => Kind::Zero,
            Repr::Bump { .. } => Kind::Bump,
            Repr::Convolution { .. } => Kind::ConvolutionProduct,
            Repr::Weighted { .. } => Kind::ExponentiallyWeighted,
            Repr::Sum(..) => Kind::Sum,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.repr, Repr::Zero) || self.scale == 0.0
    }

    /// Closed support interval `[l, r]` (degenerate for the zero function).
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn scaled(&self, c: f64) -> Self {
        if c == 0.0 {
            return Self::zero();
        }
        let mut out = self.clone();
        out.scale *= c;
        out
    }

    /// `e^{rate t} phi(t)`.
    pub fn weighted(&self, rate: f64) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        Self {
            repr: Repr::Weighted {
                inner: Arc::new(self.clone()),
                rate,
            },
            scale: 1.0,
            support: self.support,
        }
    }

    /// `phi + psi`, supported on the hull of both supports.
    pub fn sum(&self, other: &TestFunction) -> Self {
        match (self.is_zero(), other.is_zero()) {
            (true, _) => return other.clone(),
            (_, true) => return self.clone(),
            _ => {}
        }
        Self {
            repr: Repr::Sum(Arc::new(self.clone()), Arc::new(other.clone())),
            scale: 1.0,
            support: (
                self.support.0.min(other.support.0),
                self.support.1.max(other.support.1),
            ),
        }
    }

    /// Largest Cauchy-circle radius used at an interior point of a bump.
    ///
    /// Half the distance to the nearer endpoint, shrunk further for indices
    /// below 2 so the exponent's phase on the circle stays below pi/2.
    pub fn analyticity_radius(&self, t: f64) -> f64 {
        match self.repr {
            Repr::Bump { s, .. } => {
                let (l, r) = self.support;
                0.5 * (s - 1.0).min(1.0) * (t - l).min(r - t).max(0.0)
            }
            _ => 0.0,
        }
    }

    fn inside(&self, t: f64) -> bool {
        t > self.support.0 && t < self.support.1
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.is_zero() || !(t > self.support.0 && t < self.support.1) {
            return 0.0;
        }
        self.scale * self.eval_unscaled(t)
    }

    fn eval_unscaled(&self, t: f64) -> f64 {
        match &self.repr {
            Repr::Zero => 0.0,
            Repr::Bump { s, center, radius } => bump_real(*s, *center, *radius, t),
            Repr::Weighted { inner, rate } => (rate * t).exp() * inner.eval(t),
            Repr::Sum(a, b) => a.eval(t) + b.eval(t),
            Repr::Convolution {
                left,
                right,
                from_zero,
            } => match overlap(left, right, *from_zero, t) {
                Some((lo, hi)) => {
                    gauss_kronrod(|s| left.eval(t - s) * right.eval(s), lo, hi, inner_opts()).value
                }
                None => 0.0,
            },
        }
    }

    /// `phi^{(order)}(t)`.
    pub fn derivative(&self, order: usize, t: f64) -> Result<f64> {
        Ok(self.derivatives(order, t)?[order])
    }

    /// `phi^{(k)}(t)` for `k = 0..=max_order`.
    ///
    /// Exactly zero outside the closed support; endpoints are rejected since
    /// values there are only limits.
    pub fn derivatives(&self, max_order: usize, t: f64) -> Result<Vec<f64>> {
        if self.is_zero() {
            return Ok(vec![0.0; max_order + 1]);
        }
        let (l, r) = self.support;
        if t == l || t == r {
            return Err(Error::EndpointSingularity(t));
        }
        if !self.inside(t) {
            return Ok(vec![0.0; max_order + 1]);
        }
        let mut out = self.derivatives_unscaled(max_order, t)?;
        for v in &mut out {
            *v *= self.scale;
        }
        Ok(out)
    }

    fn derivatives_unscaled(&self, max_order: usize, t: f64) -> Result<Vec<f64>> {
        match &self.repr {
            Repr::Zero => Ok(vec![0.0; max_order + 1]),
            Repr::Bump { s, center, radius } => {
                let rho = self.analyticity_radius(t);
                let mut d = cauchy_derivatives(|z| bump_complex(*s, *center, *radius, z), t, rho, max_order);
                d[0] = bump_real(*s, *center, *radius, t);
                Ok(d)
            }
            Repr::Weighted { inner, rate } => {
                let base = inner.derivatives(max_order, t)?;
                let e = (rate * t).exp();
                // Leibniz rule with (e^{rate t})^{(j)} = rate^j e^{rate t}
                let mut out = vec![0.0; max_order + 1];
                for (n, o) in out.iter_mut().enumerate() {
                    let mut binom = 1.0;
                    let mut acc = 0.0;
                    for j in 0..=n {
                        acc += binom * rate.powi(j as i32) * base[n - j];
                        binom = binom * (n - j) as f64 / (j + 1) as f64;
                    }
                    *o = e * acc;
                }
                Ok(out)
            }
            Repr::Sum(a, b) => {
                let mut out = a.derivatives(max_order, t)?;
                for (o, v) in out.iter_mut().zip(b.derivatives(max_order, t)?) {
                    *o += v;
                }
                Ok(out)
            }
            Repr::Convolution {
                left,
                right,
                from_zero,
            } => {
                let mut out = match overlap(left, right, *from_zero, t) {
                    Some((lo, hi)) => {
                        let mut failure = None;
                        let integrand = |s: f64| {
                            let u = t - s;
                            let mut d = match left.derivatives(max_order, u) {
                                Ok(d) => DVector::from_vec(d),
                                Err(e) => {
                                    failure.get_or_insert(e);
                                    DVector::zeros(max_order + 1)
                                }
                            };
                            d *= right.eval(s);
                            d
                        };
                        let v = gauss_kronrod(integrand, lo, hi, inner_opts()).value;
                        if let Some(e) = failure {
                            return Err(e);
                        }
                        v.iter().cloned().collect()
                    }
                    None => vec![0.0; max_order + 1],
                };
                // Boundary terms of d/dt integral_0^t: phi^{(j)}(0) psi^{(n-1-j)}(t).
                if *from_zero && left.inside(0.0) && max_order > 0 {
                    let at_zero = left.derivatives(max_order - 1, 0.0)?;
                    let psi = right.derivatives(max_order - 1, t)?;
                    for (n, o) in out.iter_mut().enumerate().skip(1) {
                        for j in 0..n {
                            *o += at_zero[j] * psi[n - 1 - j];
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Integration range in `s` for `(left * right)(t)`.
fn overlap(left: &TestFunction, right: &TestFunction, from_zero: bool, t: f64) -> Option<(f64, f64)> {
    let (l1, r1) = left.support;
    let (l2, r2) = right.support;
    let mut lo = l2.max(t - r1);
    let mut hi = r2.min(t - l1);
    if from_zero {
        lo = lo.max(0.0);
        hi = hi.min(t);
    }
    (hi > lo).then_some((lo, hi))
}

/// Taylor coefficients times `k!` from `N` samples on a circle of radius `rho`.
fn cauchy_derivatives<F>(f: F, t: f64, rho: f64, max_order: usize) -> Vec<f64>
where
    F: Fn(Complex64) -> Complex64,
{
    let n = (4 * max_order + 48).next_power_of_two();
    let samples: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / n as f64;
            f(Complex64::new(t, 0.0) + Complex64::from_polar(rho, theta))
        })
        .collect();
    let mut out = Vec::with_capacity(max_order + 1);
    let mut fact_over_pow = 1.0;
    for order in 0..=max_order {
        if order > 0 {
            fact_over_pow *= order as f64 / rho;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, v) in samples.iter().enumerate() {
            let angle = -2.0 * PI * ((order * k) % n) as f64 / n as f64;
            acc += v * Complex64::from_polar(1.0, angle);
        }
        out.push(fact_over_pow * acc.re / n as f64);
    }
    out
}

/// `phi * psi` with `(phi * psi)(t) = integral phi(t - s) psi(s) ds`.
pub fn convolve(phi: &TestFunction, psi: &TestFunction) -> TestFunction {
    if phi.is_zero() || psi.is_zero() {
        return TestFunction::zero();
    }
    let (l1, r1) = phi.support;
    let (l2, r2) = psi.support;
    TestFunction {
        repr: Repr::Convolution {
            left: Arc::new(phi.clone()),
            right: Arc::new(psi.clone()),
            from_zero: false,
        },
        scale: 1.0,
        support: (l1 + l2, r1 + r2),
    }
}

/// `phi *_0 psi` with `(phi *_0 psi)(t) = integral_0^t phi(t - s) psi(s) ds`.
pub fn convolve0(phi: &TestFunction, psi: &TestFunction) -> TestFunction {
    if phi.is_zero() || psi.is_zero() {
        return TestFunction::zero();
    }
    let (l1, r1) = phi.support;
    let (l2, r2) = psi.support;
    if r1 <= 0.0 || r2 <= 0.0 {
        return TestFunction::zero();
    }
    TestFunction {
        repr: Repr::Convolution {
            left: Arc::new(phi.clone()),
            right: Arc::new(psi.clone()),
            from_zero: true,
        },
        scale: 1.0,
        support: (l1.max(0.0) + l2.max(0.0), r1 + r2),
    }
}

/// `integral phi` over its support.
pub fn integral(phi: &TestFunction) -> f64 {
    if phi.is_zero() {
        return 0.0;
    }
    let (l, r) = phi.support;
    gauss_kronrod(|t| phi.eval(t), l, r, GkOptions::new(1e-15, 1e-12)).value
}

/// `||phi||_{L^1}`.
pub fn l1_norm(phi: &TestFunction) -> f64 {
    if phi.is_zero() {
        return 0.0;
    }
    let (l, r) = phi.support;
    gauss_kronrod(|t| phi.eval(t).abs(), l, r, GkOptions::new(1e-15, 1e-12)).value
}

/// Lattice supremum together with the derivative order that attained it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSup {
    pub value: f64,
    pub argmax_order: usize,
    pub argmax_t: f64,
    /// The maximum sat at the highest order on the lattice.
    pub saturated: bool,
}

/// `grid_n` equally spaced points strictly inside the support.
pub fn support_lattice(phi: &TestFunction, grid_n: usize) -> Vec<f64> {
    let (l, r) = phi.support;
    (1..=grid_n)
        .map(|i| l + (r - l) * i as f64 / (grid_n + 1) as f64)
        .collect()
}

fn check_norm_args(h: f64, seq: &WeightSequence, alpha_max: usize, grid_n: usize) -> Result<()> {
    if !(h > 0.0) {
        return Err(invalid(format!("h must be positive, got {h}")));
    }
    if alpha_max > seq.p_max() {
        return Err(invalid(format!(
            "alpha_max {alpha_max} exceeds the weight prefix {}",
            seq.p_max()
        )));
    }
    if grid_n == 0 {
        return Err(invalid("lattice needs at least one point"));
    }
    Ok(())
}

/// `sup_{alpha, t} h^alpha |phi^{(alpha)}(t)| / M_alpha` over the lattice.
pub fn dk_norm(
    phi: &TestFunction,
    h: f64,
    seq: &WeightSequence,
    alpha_max: usize,
    grid_n: usize,
) -> Result<LatticeSup> {
    check_norm_args(h, seq, alpha_max, grid_n)?;
    let mut best = LatticeSup {
        value: 0.0,
        argmax_order: 0,
        argmax_t: 0.0,
        saturated: false,
    };
    if phi.is_zero() {
        return Ok(best);
    }
    for t in support_lattice(phi, grid_n) {
        let d = phi.derivatives(alpha_max, t)?;
        for (alpha, v) in d.iter().enumerate() {
            let w = (alpha as f64 * h.ln() - seq.log_m(alpha)).exp() * v.abs();
            if w > best.value {
                best.value = w;
                best.argmax_order = alpha;
                best.argmax_t = t;
            }
        }
    }
    best.saturated = alpha_max > 0 && best.argmax_order == alpha_max;
    Ok(best)
}

/// `sup h^{alpha+beta} / (M_alpha M_beta) (1 + t^2)^{beta/2} |phi^{(alpha)}(t)|`
/// over `alpha <= alpha_max`, `beta <= beta_max` and the support lattice.
pub fn tempered_norm(
    phi: &TestFunction,
    h: f64,
    seq: &WeightSequence,
    alpha_max: usize,
    beta_max: usize,
    grid_n: usize,
) -> Result<f64> {
    check_norm_args(h, seq, alpha_max.max(beta_max), grid_n)?;
    if phi.is_zero() {
        return Ok(0.0);
    }
    let mut best: f64 = 0.0;
    for t in support_lattice(phi, grid_n) {
        let d = phi.derivatives(alpha_max, t)?;
        let ln_weight = (1.0 + t * t).sqrt().ln();
        for (alpha, v) in d.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            for beta in 0..=beta_max {
                let ln = (alpha + beta) as f64 * h.ln() - seq.log_m(alpha) - seq.log_m(beta)
                    + beta as f64 * ln_weight;
                best = best.max(ln.exp() * v.abs());
            }
        }
    }
    Ok(best)
}

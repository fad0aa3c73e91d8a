//! Mittag-Leffler and Wright functions, the Caputo derivative, and the
//! subordination solver for the fractional Cauchy problem.

use num_complex::Complex64;

use rayon::prelude::*;

use crate::dd::{self, CDd, Dd};
use crate::error::{invalid, Error, Result};
use crate::gevrey::WeightSequence;
use crate::operator::{CVector, MatrixOperator};
use crate::quad::{gauss_kronrod, gk15_nodes, hankel_parabola, GkOptions, QuadValue};
use crate::semigroup::{check_times, AcpOptions, BromwichSampler, Prepared, Trajectory, TrajectoryMeta};
use crate::special::{ln_gamma, rgamma, rgamma_ln_parts, CompensatedComplexSum};

/// Terms allowed in any series before it is declared hopeless.
const SERIES_TERM_CAP: usize = 4000;
/// Cancellation ratio above which a double-precision sum is recomputed.
const KAPPA_DOUBLE: f64 = 10.0;
/// Cancellation ratio above which even double-double is not trusted.
const KAPPA_EXTENDED: f64 = 1e14;

/// How a special-function value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Power series summed in double precision.
    Series,
    /// Power series summed in double-double because of cancellation.
    SeriesExtended,
    /// Contour integral (Hankel parabola, plus residues where needed).
    Contour,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation<T> {
    pub value: T,
    pub method: Method,
    /// Sum of term magnitudes over the magnitude of the sum; `1` for contours.
    pub cancellation: f64,
}

/// Series stop rule: several consecutive terms below `e^{-margin}` times the
/// running absolute sum. A single small term is not enough because reciprocal
/// Gamma factors dip to zero near their poles.
fn stop_now(quiet: &mut usize, n: usize, ln_term: f64, abs_sum: f64, margin: f64) -> bool {
    if ln_term < abs_sum.max(1e-300).ln() - margin {
        *quiet += 1;
    } else {
        *quiet = 0;
    }
    n >= 8 && *quiet >= 6
}

/// Generic power series `sum_n c_n w^n` where `ln|c_n|` and `sign(c_n)` come
/// from a callback. Returns the compensated double sum and the sum of `|term|`,
/// or `None` if the terms never become negligible within the cap or their
/// absolute sum passes `abs_cap`.
fn series_double<F>(w: Complex64, coeff: F, abs_cap: f64) -> Option<(Complex64, f64)>
where
    F: Fn(usize) -> (f64, f64),
{
    let r = w.norm();
    let ln_r = r.ln();
    let real = w.im == 0.0;
    let theta = w.arg();
    let mut sum = CompensatedComplexSum::new();
    let mut abs_sum = 0.0;
    let mut quiet = 0;
    for n in 0..SERIES_TERM_CAP {
        let (lc, sign) = coeff(n);
        let ln_term = if n == 0 { lc } else { n as f64 * ln_r + lc };
        if sign != 0.0 && ln_term.is_finite() {
            let mag = ln_term.exp();
            if !mag.is_finite() {
                return None;
            }
            let phase = if n == 0 {
                Complex64::new(1.0, 0.0)
            } else if real {
                let odd = n % 2 == 1 && w.re < 0.0;
                Complex64::new(if odd { -1.0 } else { 1.0 }, 0.0)
            } else {
                Complex64::from_polar(1.0, n as f64 * theta)
            };
            sum.add(phase * (sign * mag));
            abs_sum += mag;
            if abs_sum > abs_cap {
                return None;
            }
        }
        if stop_now(&mut quiet, n, ln_term, abs_sum, 41.0) {
            return Some((sum.value(), abs_sum));
        }
    }
    None
}

/// Same series in double-double; `coeff` returns `(ln|c_n|, sign)` in dd.
fn series_extended<F>(w: Complex64, coeff: F) -> Option<Complex64>
where
    F: Fn(usize) -> (Dd, f64),
{
    let re = Dd::new(w.re);
    let im = Dd::new(w.im);
    let r = (re * re + im * im).sqrt();
    let unit = if r.hi > 0.0 {
        CDd::new(re / r, im / r)
    } else {
        CDd::new(Dd::ONE, Dd::ZERO)
    };
    let ln_r = if r.hi > 0.0 { r.ln() } else { Dd::new(f64::NEG_INFINITY) };
    let mut acc = CDd::default();
    let mut power = CDd::new(Dd::ONE, Dd::ZERO);
    let mut abs_sum = 0.0f64;
    let mut quiet = 0;
    for n in 0..SERIES_TERM_CAP {
        let (lc, sign) = coeff(n);
        // dd arithmetic turns infinities into NaN, so zero terms bypass it
        let ln_term = if sign == 0.0 {
            Dd::new(f64::NEG_INFINITY)
        } else if n == 0 {
            lc
        } else {
            Dd::new(n as f64) * ln_r + lc
        };
        if sign != 0.0 && ln_term.hi.is_finite() {
            if ln_term.hi > 700.0 {
                return None;
            }
            let mag = ln_term.exp() * Dd::new(sign);
            acc = acc.add(power.scale(mag));
            abs_sum += mag.hi.abs();
        }
        if stop_now(&mut quiet, n, ln_term.hi, abs_sum, 80.0) {
            return Some(Complex64::new(acc.re.to_f64(), acc.im.to_f64()));
        }
        power = power.mul(unit);
    }
    None
}

/// Double pass first; escalate to double-double when cancellation is large.
fn series_auto<F, G>(w: Complex64, coeff: F, coeff_dd: G) -> Option<Evaluation<Complex64>>
where
    F: Fn(usize) -> (f64, f64),
    G: Fn(usize) -> (Dd, f64),
{
    let (value, abs_sum) = series_double(w, coeff, f64::INFINITY)?;
    let kappa = if value.norm() > 0.0 {
        abs_sum / value.norm()
    } else if abs_sum == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    if kappa <= KAPPA_DOUBLE {
        return Some(Evaluation {
            value,
            method: Method::Series,
            cancellation: kappa.max(1.0),
        });
    }
    let value = series_extended(w, coeff_dd)?;
    let kappa = if value.norm() > 0.0 {
        abs_sum / value.norm()
    } else {
        f64::INFINITY
    };
    Some(Evaluation {
        value,
        method: Method::SeriesExtended,
        cancellation: kappa,
    })
}

fn check_ml_args(alpha: f64, beta: f64, z: Complex64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("Mittag-Leffler needs alpha > 0, got {alpha}")));
    }
    if !beta.is_finite() || !z.re.is_finite() || !z.im.is_finite() {
        return Err(invalid("Mittag-Leffler arguments must be finite"));
    }
    Ok(())
}

/// `E_{alpha,beta}(z)` by its power series, with `1/Gamma` vanishing at the
/// poles. Heavy cancellation is handled in double-double arithmetic.
pub fn ml_series(alpha: f64, beta: f64, z: Complex64) -> Result<Evaluation<Complex64>> {
    check_ml_args(alpha, beta, z)?;
    if z.norm() == 0.0 {
        return Ok(Evaluation {
            value: Complex64::new(rgamma(beta), 0.0),
            method: Method::Series,
            cancellation: 1.0,
        });
    }
    let coeff = |n: usize| rgamma_ln_parts(alpha * n as f64 + beta);
    let (a_dd, b_dd) = (Dd::new(alpha), Dd::new(beta));
    let coeff_dd = |n: usize| dd::rgamma_ln_parts(a_dd * Dd::new(n as f64) + b_dd);
    series_auto(z, coeff, coeff_dd).ok_or_else(|| {
        Error::NonConvergence(format!(
            "Mittag-Leffler series for alpha = {alpha}, |z| = {:e} out of range",
            z.norm()
        ))
    })
}

/// Poles `s` of `s^{alpha-beta} / (s^alpha - z)` on the principal sheet.
fn ml_poles(alpha: f64, z: Complex64) -> Vec<Complex64> {
    let r = z.norm();
    if r == 0.0 {
        return Vec::new();
    }
    let theta = z.arg();
    let radius = r.powf(1.0 / alpha);
    let pi = std::f64::consts::PI;
    let k_lim = (alpha / 2.0).ceil() as i64 + 1;
    (-k_lim..=k_lim)
        .filter_map(|k| {
            let phi = theta + 2.0 * pi * k as f64;
            (phi.abs() < alpha * pi).then(|| Complex64::from_polar(radius, phi / alpha))
        })
        .collect()
}

/// `E_{alpha,beta}(z)` as the inverse Laplace transform of
/// `s^{alpha-beta} / (s^alpha - z)`, integrated on a Hankel parabola with the
/// residues of any poles to its right added back. Needs `alpha < 2`.
pub fn ml_laplace(alpha: f64, beta: f64, z: Complex64) -> Result<Complex64> {
    check_ml_args(alpha, beta, z)?;
    if alpha >= 2.0 {
        return Err(invalid(format!(
            "Laplace route needs alpha < 2, got {alpha}"
        )));
    }
    let poles = ml_poles(alpha, z);
    let rhos: Vec<f64> = poles.iter().map(|s| s.sqrt().re).collect();
    // sqrt(mu) well separated (in log scale) from every pole's Re sqrt(s)
    let separation = |c: f64| {
        rhos.iter()
            .map(|&rho| (c / rho.max(1e-300)).ln().abs())
            .fold(f64::INFINITY, f64::min)
    };
    let mut c = 1.0;
    if separation(c) < 1.5f64.ln() {
        let mut best = (separation(c), c);
        for &rho in &rhos {
            for cand in [rho / 1.5, 2.0 * rho] {
                if cand >= 0.45 {
                    let sep = separation(cand);
                    if sep > best.0 {
                        best = (sep, cand);
                    }
                }
            }
        }
        c = best.1;
    }
    let mu = c * c;
    let integrand = |s: Complex64| {
        let sa = s.powf(alpha);
        s.exp() * s.powf(alpha - beta) / (sa - z)
    };
    let mut value = hankel_parabola(integrand, mu, 1e-14)?;
    for (s, rho) in poles.iter().zip(&rhos) {
        if *rho > c {
            value += s.powf(1.0 - beta) * s.exp() / alpha;
        }
    }
    Ok(value)
}

/// `E_{alpha,beta}(z)`: series where it is well conditioned, otherwise the
/// Laplace-inversion route. The chosen route is reported.
pub fn mittag_leffler_eval(alpha: f64, beta: f64, z: Complex64) -> Result<Evaluation<Complex64>> {
    let series = ml_series(alpha, beta, z);
    let usable = matches!(&series, Ok(e) if e.cancellation <= KAPPA_EXTENDED);
    if usable || alpha >= 2.0 {
        return series;
    }
    match ml_laplace(alpha, beta, z) {
        Ok(value) => Ok(Evaluation {
            value,
            method: Method::Contour,
            cancellation: 1.0,
        }),
        Err(e) => series.map_err(|_| e),
    }
}

/// `E_{alpha,beta}(z)`.
pub fn mittag_leffler(alpha: f64, beta: f64, z: Complex64) -> Result<Complex64> {
    Ok(mittag_leffler_eval(alpha, beta, z)?.value)
}

/// `E_alpha(x)` for real `x`.
pub fn ml_real(alpha: f64, x: f64) -> Result<f64> {
    Ok(mittag_leffler(alpha, 1.0, Complex64::new(x, 0.0))?.re)
}

/// `E_alpha(t^alpha A) x` through the eigenbasis of `A`.
pub fn ml_matrix(alpha: f64, op: &MatrixOperator, t: f64, x: &CVector) -> Result<CVector> {
    if !(t >= 0.0) {
        return Err(invalid(format!("time must be non-negative, got {t}")));
    }
    let scale = t.powf(alpha);
    // matrix_function takes an infallible closure, so precompute per eigenvalue
    let mut values = Vec::with_capacity(op.dim());
    for &mu in op.eigenvalues() {
        values.push(mittag_leffler(alpha, 1.0, mu * scale)?);
    }
    let lookup = |mu: Complex64| {
        let i = op
            .eigenvalues()
            .iter()
            .position(|&e| e == mu)
            .expect("eigenvalue from the same operator");
        values[i]
    };
    op.matrix_function(lookup, x)
}

fn check_wright_args(gamma: f64, t: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("Wright index must lie in (0,1), got {gamma}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("Wright argument must be finite and >= 0, got {t}")));
    }
    Ok(())
}

fn wright_coeff(gamma: f64, n: usize) -> (f64, f64) {
    let (lr, sign) = rgamma_ln_parts(1.0 - gamma - gamma * n as f64);
    (lr - ln_gamma(n as f64 + 1.0), sign)
}

/// `Phi_gamma(t) = sum_n (-t)^n / (n! Gamma(1 - gamma - gamma n))`.
pub fn wright_series(gamma: f64, t: f64) -> Result<Evaluation<f64>> {
    check_wright_args(gamma, t)?;
    if t == 0.0 {
        return Ok(Evaluation {
            value: rgamma(1.0 - gamma),
            method: Method::Series,
            cancellation: 1.0,
        });
    }
    let coeff = |n: usize| wright_coeff(gamma, n);
    let g = Dd::new(gamma);
    let coeff_dd = |n: usize| {
        let nd = Dd::new(n as f64);
        let (lr, sign) = dd::rgamma_ln_parts(Dd::ONE - g - g * nd);
        (lr - dd::ln_gamma(nd + Dd::ONE), sign)
    };
    let e = series_auto(Complex64::new(-t, 0.0), coeff, coeff_dd).ok_or_else(|| {
        Error::NonConvergence(format!("Wright series for gamma = {gamma}, t = {t} out of range"))
    })?;
    Ok(Evaluation {
        value: e.value.re,
        method: e.method,
        cancellation: e.cancellation,
    })
}

/// `Phi_gamma(t)` as `(1/2 pi i) int_Ha e^{s - t s^gamma} s^{gamma-1} ds` on a
/// parabola through the real saddle of the exponent.
pub fn wright_contour(gamma: f64, t: f64) -> Result<f64> {
    check_wright_args(gamma, t)?;
    let saddle = (t * gamma).powf(1.0 / (1.0 - gamma));
    let mu = saddle.max(1.0);
    let integrand = |s: Complex64| (s - s.powf(gamma) * t).exp() * s.powf(gamma - 1.0);
    Ok(hankel_parabola(integrand, mu, 1e-13)?.re)
}

/// Absolute term mass up to which the double-precision Wright series is kept.
/// Since `0 <= Phi <= 1/Gamma(1-gamma)` this bounds the absolute round-off by
/// about `1e-14`.
const WRIGHT_SERIES_MASS: f64 = 1e2;

/// `Phi_gamma(t)` with the evaluation route reported. The double-precision
/// series serves small and moderate `t`; once its term mass exceeds
/// `WRIGHT_SERIES_MASS` (or it converges too slowly) the contour takes over.
pub fn wright_eval(gamma: f64, t: f64) -> Result<Evaluation<f64>> {
    check_wright_args(gamma, t)?;
    let series = if t == 0.0 {
        Some((Complex64::new(rgamma(1.0 - gamma), 0.0), rgamma(1.0 - gamma).abs()))
    } else {
        series_double(Complex64::new(-t, 0.0), |n| wright_coeff(gamma, n), WRIGHT_SERIES_MASS)
    };
    let mut e = match series {
        Some((value, abs_sum)) => Evaluation {
            value: value.re,
            method: Method::Series,
            cancellation: if value.re != 0.0 { abs_sum / value.re.abs() } else { f64::INFINITY },
        },
        None => Evaluation {
            value: wright_contour(gamma, t)?,
            method: Method::Contour,
            cancellation: 1.0,
        },
    };
    // Phi is a probability density; clear round-off just below zero
    if e.value < 0.0 && e.value > -1e-10 {
        e.value = 0.0;
    }
    Ok(e)
}

/// The Wright (M-Wright) density `Phi_gamma(t)`.
pub fn wright(gamma: f64, t: f64) -> Result<f64> {
    Ok(wright_eval(gamma, t)?.value)
}

/// `g_beta(t) = t^{beta-1} / Gamma(beta)`.
pub fn g_kernel(beta: f64, t: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(invalid(format!("kernel order must be positive, got {beta}")));
    }
    if !(t > 0.0) {
        return Err(invalid(format!("kernel defined for t > 0 only, got {t}")));
    }
    Ok(t.powf(beta - 1.0) * rgamma(beta))
}

/// Grid spacing if `times` is uniform (relative deviation below `1e-9`).
pub fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(invalid("need at least two grid points"));
    }
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(h > 0.0) {
        return Err(invalid("grid must be increasing"));
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return Err(invalid("grid is not uniform"));
        }
    }
    Ok(h)
}

/// Caputo derivative of order `alpha` in (0,1) by the L1 scheme:
///
/// `D u(t_n) ~ h^{-alpha} / Gamma(2-alpha) * sum_j b_j (u_{n-j} - u_{n-j-1})`,
/// `b_j = (j+1)^{1-alpha} - j^{1-alpha}`.
///
/// Output has one entry per grid point after the first.
pub fn caputo_derivative<T: QuadValue>(times: &[f64], values: &[T], alpha: f64) -> Result<Vec<T>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("Caputo order must lie in (0,1), got {alpha}")));
    }
    if times.len() != values.len() {
        return Err(invalid("times and values differ in length"));
    }
    let h = uniform_step(times)?;
    let n_pts = times.len();
    let b: Vec<f64> = (0..n_pts)
        .map(|j| {
            let j = j as f64;
            (j + 1.0).powf(1.0 - alpha) - j.powf(1.0 - alpha)
        })
        .collect();
    let mut diffs = Vec::with_capacity(n_pts - 1);
    for k in 1..n_pts {
        let mut d = values[k].clone();
        d.add_scaled(-1.0, &values[k - 1]);
        diffs.push(d);
    }
    let scale = h.powf(-alpha) * rgamma(2.0 - alpha);
    let mut out = Vec::with_capacity(n_pts - 1);
    for n in 1..n_pts {
        let mut acc = values[0].zero_like();
        // u_{n-j} - u_{n-j-1} = diffs[n-j-1]
        for j in 0..n {
            acc.add_scaled(b[j], &diffs[n - j - 1]);
        }
        let mut scaled = acc.zero_like();
        scaled.add_scaled(scale, &acc);
        out.push(scaled);
    }
    Ok(out)
}

/// Settings of the subordination solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracParams {
    pub alpha: f64,
    /// Truncation point of the `s` integral.
    pub s_max: f64,
    /// Initial number of Gauss-Kronrod panels on `[0, s_max]`.
    pub s_nodes: usize,
    pub tol: f64,
}

impl FracParams {
    /// Parameters with `s_max` from [`default_s_max`] and 16 starting panels.
    pub fn new(alpha: f64, tol: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(tol > 0.0) {
            return Err(invalid(format!("tolerance must be positive, got {tol}")));
        }
        Ok(Self {
            alpha,
            s_max: default_s_max(alpha, tol)?,
            s_nodes: 16,
            tol,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.s_max > 0.0) || !self.s_max.is_finite() {
            return Err(invalid(format!("s_max must be positive, got {}", self.s_max)));
        }
        if self.s_nodes == 0 {
            return Err(invalid("at least one s panel is needed"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("fractional order must lie in (0,1), got {alpha}")));
    }
    Ok(())
}

fn wright_mass(alpha: f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut failure = None;
    let r = gauss_kronrod(
        |s: f64| match wright(alpha, s) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        a,
        b,
        GkOptions::new(tol, 1e-10),
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(r.value),
    }
}

/// Truncation point for `int_0^inf Phi_alpha`: start from the decay law
/// `Phi_alpha(s) ~ exp(-c s^{1/(1-alpha)})`, `c = (1-alpha) alpha^{alpha/(1-alpha)}`,
/// and double while `int_s^{2s} Phi_alpha` is still at least `tol`.
pub fn default_s_max(alpha: f64, tol: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let c = (1.0 - alpha) * alpha.powf(alpha / (1.0 - alpha));
    let mut s = ((1.0 / tol).ln().max(1.0) / c).powf(1.0 - alpha);
    for _ in 0..40 {
        if wright_mass(alpha, s, 2.0 * s, 1e-3 * tol)? < tol {
            return Ok(s);
        }
        s *= 2.0;
    }
    Err(Error::NonConvergence(format!(
        "no truncation point found for Phi_{alpha} at tol {tol:e}"
    )))
}

/// Maximum number of `s` panels before giving up.
const MAX_PANELS: usize = 4096;

/// `v(t) = int_0^inf Phi_alpha(s) S_n(s t^alpha) C_n^{-1} x ds`, the solution of
/// `D^alpha v = A v, v(0) = x` in the Caputo sense.
///
/// The `s` integral runs over `[0, s_max]` with composite Gauss-Kronrod panels,
/// doubled until two levels agree to `tol / 4`. The neglected tail
/// `int_{s_max}^inf Phi_alpha(s) ||S_n(s t^alpha) C_n^{-1} x|| ds` is bounded
/// by the tail mass of `Phi_alpha` times the largest sampled norm; when that
/// bound exceeds `tol` the trajectory is flagged as truncated.
pub fn solve_acp_alpha(
    op: &MatrixOperator,
    seq: &WeightSequence,
    params: &FracParams,
    x: &CVector,
    times: &[f64],
) -> Result<Trajectory> {
    params.validate()?;
    check_times(times)?;
    let alpha = params.alpha;
    let prep = Prepared::new(op, seq, x, &AcpOptions::new(params.tol))?;
    let mut sampler = BromwichSampler::new(op, seq, prep.n, prep.quad, vec![prep.preimage.clone()])?;
    let t_max = times.last().copied().unwrap_or(0.0);
    let tau_max = params.s_max * t_max.powf(alpha);
    let checks: Vec<f64> = (0..=8).map(|k| tau_max * k as f64 / 8.0).collect();
    let contour_error = sampler.refine_for(&checks)?;

    let scales: Vec<f64> = times.iter().map(|t| t.powf(alpha)).collect();
    let level = |panels: usize| -> Result<(Vec<CVector>, f64)> {
        let (nodes, weights) = gk15_nodes(0.0, params.s_max, panels);
        let phi = nodes
            .par_iter()
            .map(|&s| wright(alpha, s))
            .collect::<Result<Vec<f64>>>()?;
        let mut largest: f64 = 0.0;
        let states = scales
            .par_iter()
            .map(|&scale| {
                let taus: Vec<f64> = nodes.iter().map(|s| s * scale).collect();
                let mut acc = CVector::zeros(op.dim());
                let mut peak: f64 = 0.0;
                for ((tau, w), p) in taus.iter().zip(&weights).zip(&phi) {
                    let v = sampler.eval(*tau).pop().expect("one column");
                    peak = peak.max(v.norm());
                    acc.axpy(Complex64::new(w * p, 0.0), &v, Complex64::new(1.0, 0.0));
                }
                (acc, peak)
            })
            .collect::<Vec<_>>();
        let mut out = Vec::with_capacity(states.len());
        for (v, peak) in states {
            largest = largest.max(peak);
            out.push(v);
        }
        Ok((out, largest))
    };

    let mut panels = params.s_nodes;
    let (mut states, mut largest) = level(panels)?;
    let mut gap = f64::INFINITY;
    while panels * 2 <= MAX_PANELS {
        panels *= 2;
        let (finer, peak) = level(panels)?;
        gap = finer
            .iter()
            .zip(&states)
            .map(|(a, b)| (a - b).camax())
            .fold(0.0, f64::max);
        states = finer;
        largest = largest.max(peak);
        if gap < 0.25 * params.tol {
            break;
        }
    }
    if !(gap < 0.25 * params.tol) {
        return Err(Error::NonConvergence(format!(
            "subordination integral still changes by {gap:e} at {panels} panels"
        )));
    }
    let tail_mass = wright_mass(alpha, params.s_max, 4.0 * params.s_max, 1e-3 * params.tol)?;
    let tail_bound = tail_mass * largest;
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        meta: TrajectoryMeta {
            n: prep.n,
            quad: sampler.quadrature(),
            error: contour_error + gap + tail_bound,
            preimage: prep.preimage,
            regularizer_condition: prep.regularizer.condition,
            truncated: tail_bound > params.tol,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn ml_reduces_to_exponentials() {
        let e = mittag_leffler(1.0, 1.0, c(1.0, 0.0)).unwrap();
        assert!((e.re - std::f64::consts::E).abs() < 1e-15);
        let e12 = mittag_leffler(1.0, 2.0, c(1.0, 0.0)).unwrap();
        assert!((e12.re - (std::f64::consts::E - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn ml_half_against_reference() {
        // E_{1/2}(z) = e^{z^2} erfc(-z); references from 50-digit arithmetic
        let cases = [
            (1.0, 5.008_980_080_762_283_5),
            (-1.0, 0.427_583_576_155_807_0),
            (-5.0, 0.110_704_637_733_068_63),
            (4.0, 17_772_220.904_016_288),
        ];
        for (x, want) in cases {
            let got = mittag_leffler(0.5, 1.0, c(x, 0.0)).unwrap().re;
            assert!(((got - want) / want).abs() < 1e-13, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn ml_exp_on_disk_of_radius_ten() {
        for k in 0..24 {
            let th = k as f64 * std::f64::consts::TAU / 24.0;
            for r in [0.5, 3.0, 10.0] {
                let z = Complex64::from_polar(r, th);
                let got = mittag_leffler(1.0, 1.0, z).unwrap();
                let want = z.exp();
                assert!((got - want).norm() <= 1e-12 * want.norm(), "z={z}");
            }
        }
    }

    #[test]
    fn ml_series_and_laplace_agree() {
        for alpha in [0.5, 0.8, 1.3] {
            for k in 0..10 {
                let z = Complex64::from_polar(0.5 + 0.45 * k as f64, 0.7 * k as f64);
                let s = ml_series(alpha, 1.0, z).unwrap().value;
                let l = ml_laplace(alpha, 1.0, z).unwrap();
                assert!((s - l).norm() <= 1e-10 * s.norm().max(1.0), "a={alpha} z={z}: {s} {l}");
            }
        }
    }

    #[test]
    fn ml_pole_rule_for_beta() {
        // E_{1,0}(z) = z e^z: the n = 0 term vanishes at the pole of Gamma
        let z = c(0.7, -0.3);
        let got = mittag_leffler(1.0, 0.0, z).unwrap();
        assert!((got - z * z.exp()).norm() < 1e-14);
    }

    #[test]
    fn wright_half_closed_form() {
        let pi_sqrt = std::f64::consts::PI.sqrt();
        assert!((wright(0.5, 0.0).unwrap() - 1.0 / pi_sqrt).abs() < 1e-15);
        for i in 0..=50 {
            let t = 0.1 * i as f64;
            let want = (-t * t / 4.0).exp() / pi_sqrt;
            assert!((wright(0.5, t).unwrap() - want).abs() < 1e-13, "t={t}");
        }
    }

    #[test]
    fn wright_routes_agree() {
        for gamma in [0.3, 0.5, 0.8] {
            for i in 0..=20 {
                let t = 0.25 * i as f64;
                let s = wright_series(gamma, t);
                if let Ok(s) = s {
                    if s.cancellation < KAPPA_EXTENDED {
                        let c = wright_contour(gamma, t).unwrap();
                        assert!((s.value - c).abs() < 1e-10, "g={gamma} t={t}: {} {c}", s.value);
                    }
                }
            }
        }
    }

    #[test]
    fn wright_far_tail_is_small_and_nonnegative() {
        let v = wright(0.8, 6.0).unwrap();
        assert!((0.0..1e-10).contains(&v));
        assert_eq!(wright_eval(0.8, 6.0).unwrap().method, Method::Contour);
    }

    #[test]
    fn kernel_values() {
        assert!((g_kernel(1.0, 3.7).unwrap() - 1.0).abs() < 1e-15);
        assert!((g_kernel(2.0, 3.7).unwrap() - 3.7).abs() < 1e-15);
        let want = 1.0 / std::f64::consts::PI.sqrt();
        assert!((g_kernel(0.5, 1.0).unwrap() - want).abs() < 1e-15);
        assert!(g_kernel(0.5, 0.0).is_err());
    }

    #[test]
    fn caputo_of_constant_and_linear() {
        let n = 2001;
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ones = vec![2.5; n];
        let d = caputo_derivative(&times, &ones, 0.5).unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
        let d = caputo_derivative(&times, &times, 0.5).unwrap();
        for (k, v) in d.iter().enumerate() {
            let t = times[k + 1];
            let want = t.sqrt() * rgamma(1.5);
            assert!(((v - want) / want).abs() < 1e-3);
        }
    }

    #[test]
    fn caputo_rejects_bad_grid() {
        let times = [0.0, 0.1, 0.3];
        assert!(caputo_derivative(&times, &[0.0, 1.0, 2.0], 0.5).is_err());
    }

    fn cv(v: &[f64]) -> CVector {
        CVector::from_iterator(v.len(), v.iter().map(|&x| c(x, 0.0)))
    }

    #[test]
    fn subordination_matches_mittag_leffler_matrix() {
        let seq = crate::gevrey::gevrey_sequence(2.0, 200).unwrap();
        let op = MatrixOperator::diagonal_real(&[-1.0, -2.0]).unwrap();
        let x = cv(&[1.0, 1.0]);
        let params = FracParams::new(0.5, 1e-7).unwrap();
        let traj = solve_acp_alpha(&op, &seq, &params, &x, &[0.0, 1.0]).unwrap();
        assert!(!traj.meta.truncated);
        assert!((&traj.states[0] - &x).camax() < 1e-6);
        let want = ml_matrix(0.5, &op, 1.0, &x).unwrap();
        assert!((&traj.states[1] - &want).camax() < 1e-5);
        let scalar = ml_real(0.5, -1.0).unwrap();
        assert!((want[0].re - scalar).abs() < 1e-14);
    }

    #[test]
    fn near_one_approaches_exponential() {
        let seq = crate::gevrey::gevrey_sequence(2.0, 200).unwrap();
        let op = MatrixOperator::diagonal_real(&[-1.0, -2.0]).unwrap();
        let x = cv(&[1.0, 1.0]);
        let params = FracParams::new(0.99, 1e-7).unwrap();
        let traj = solve_acp_alpha(&op, &seq, &params, &x, &[1.0]).unwrap();
        let want = op.expm(1.0) * &x;
        assert!((&traj.states[0] - want).norm() < 0.05);
    }

    #[test]
    fn ml_matrix_degenerate_cases() {
        let op = MatrixOperator::from_real_rows(&[&[-1.0, 0.4], &[0.0, -2.5]]).unwrap();
        let x = cv(&[0.3, 1.0]);
        let e = ml_matrix(1.0 - 1e-16, &op, 0.0, &x).unwrap();
        assert!((e - &x).camax() < 1e-14);
        let got = ml_matrix(1.0, &op, 0.8, &x).unwrap();
        assert!((got - op.expm(0.8) * &x).camax() < 1e-12);
    }

    #[test]
    fn s_max_covers_the_mass() {
        for alpha in [0.3, 0.5, 0.8, 0.99] {
            let s = default_s_max(alpha, 1e-8).unwrap();
            let mass = wright_mass(alpha, 0.0, s, 1e-12).unwrap();
            assert!((mass - 1.0).abs() < 1e-7, "alpha={alpha} s={s} mass={mass}");
        }
    }

    proptest! {
        #[test]
        fn ml_conjugate_symmetry(alpha in 0.3f64..1.5, re in -4.0f64..4.0, im in -4.0f64..4.0) {
            let z = c(re, im);
            let a = mittag_leffler(alpha, 1.0, z).unwrap();
            let b = mittag_leffler(alpha, 1.0, z.conj()).unwrap();
            prop_assert!((a - b.conj()).norm() <= 1e-10 * a.norm().max(1.0));
        }

        #[test]
        fn ml_recurrence(alpha in 0.3f64..1.5, beta in 0.5f64..2.0, x in -3.0f64..3.0) {
            // E_{a,b}(z) = 1/Gamma(b) + z E_{a,a+b}(z)
            let z = c(x, 0.0);
            let lhs = mittag_leffler(alpha, beta, z).unwrap();
            let rhs = rgamma(beta) + z * mittag_leffler(alpha, alpha + beta, z).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-11 * lhs.norm().max(1.0));
        }

        #[test]
        fn wright_nonnegative(gamma in 0.2f64..0.9, t in 0.0f64..8.0) {
            prop_assert!(wright(gamma, t).unwrap() >= 0.0);
        }
    }
}

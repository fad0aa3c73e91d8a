//! Quadrature rules: globally adaptive Gauss-Kronrod for scalar, vector and
//! matrix integrands, and the trapezoid rule on a parabolic Hankel contour.
//!
//! All reductions run in a fixed order so results do not depend on thread
//! scheduling anywhere upstream.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values that can be accumulated by the quadrature rules.
pub trait QuadValue: Clone {
    fn zero_like(&self) -> Self;
    /// `self += w * other`
    fn add_scaled(&mut self, w: f64, other: &Self);
    fn dist(&self, other: &Self) -> f64;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        *self += w * other;
    }
    fn dist(&self, other: &Self) -> f64 {
        (self - other).abs()
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero_like(&self) -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        *self += other * w;
    }
    fn dist(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl QuadValue for DVector<f64> {
    fn zero_like(&self) -> Self {
        DVector::zeros(self.len())
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        self.zip_apply(other, |a, b| *a += b * w);
    }
    fn dist(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl QuadValue for DVector<Complex64> {
    fn zero_like(&self) -> Self {
        DVector::zeros(self.len())
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        self.zip_apply(other, |a, b| *a += b * w);
    }
    fn dist(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl QuadValue for DMatrix<Complex64> {
    fn zero_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        self.zip_apply(other, |a, b| *a += b * w);
    }
    fn dist(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Outcome of an adaptive integration.
#[derive(Debug, Clone)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: f64,
    pub intervals: usize,
    pub converged: bool,
}

impl<T> QuadResult<T> {
    pub fn into_result(self, what: &str) -> Result<T> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::NonConvergence(format!(
                "{what}: adaptive quadrature stopped at {} intervals with error {:e}",
                self.intervals, self.error
            )))
        }
    }
}

/// Tolerances and interval budget for [`gauss_kronrod`].
#[derive(Debug, Clone, Copy)]
pub struct GkOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for GkOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_intervals: 2000,
        }
    }
}

impl GkOptions {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

fn gk15<T: QuadValue, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> (T, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc.zero_like();
    let mut gauss = fc.zero_like();
    kronrod.add_scaled(WGK[7], &fc);
    gauss.add_scaled(WG[3], &fc);
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod.add_scaled(WGK[j], &f1);
        kronrod.add_scaled(WGK[j], &f2);
        if j % 2 == 1 {
            gauss.add_scaled(WG[j / 2], &f1);
            gauss.add_scaled(WG[j / 2], &f2);
        }
    }
    let mut k = kronrod.zero_like();
    k.add_scaled(half, &kronrod);
    let mut g = gauss.zero_like();
    g.add_scaled(half, &gauss);
    let err = k.dist(&g);
    (k, err)
}

/// Nodes and weights of the 15-point Kronrod rule on `panels` equal pieces of
/// `[a, b]`, left to right.
pub fn gk15_nodes(a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let width = (b - a) / panels as f64;
    let half = 0.5 * width;
    let mut nodes = Vec::with_capacity(15 * panels);
    let mut weights = Vec::with_capacity(15 * panels);
    for k in 0..panels {
        let center = a + (k as f64 + 0.5) * width;
        for j in 0..7 {
            nodes.push(center - half * XGK[j]);
            weights.push(half * WGK[j]);
        }
        nodes.push(center);
        weights.push(half * WGK[7]);
        for j in (0..7).rev() {
            nodes.push(center + half * XGK[j]);
            weights.push(half * WGK[j]);
        }
    }
    (nodes, weights)
}

/// Globally adaptive 7/15-point Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// The subinterval with the largest error estimate is bisected until the
/// summed estimate drops below `max(abs_tol, rel_tol * |I|)` or the interval
/// budget is spent. Ties are broken by position so the subdivision sequence is
/// a pure function of the integrand.
pub fn gauss_kronrod<T, F>(mut f: F, a: f64, b: f64, opts: GkOptions) -> QuadResult<T>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let (value, error) = gk15(&mut f, a, b);
    if a == b {
        return QuadResult {
            value: value.zero_like(),
            error: 0.0,
            intervals: 1,
            converged: true,
        };
    }
    let mut segments = vec![Segment { a, b, value, error }];
    loop {
        let mut total = segments[0].value.zero_like();
        let mut total_err = 0.0;
        for s in &segments {
            total.add_scaled(1.0, &s.value);
            total_err += s.error;
        }
        let target = opts.abs_tol.max(opts.rel_tol * total.magnitude());
        if total_err <= target || segments.len() >= opts.max_intervals {
            return QuadResult {
                value: total,
                error: total_err,
                intervals: segments.len(),
                converged: total_err <= target,
            };
        }
        let mut worst = 0;
        for (i, s) in segments.iter().enumerate() {
            if s.error > segments[worst].error {
                worst = i;
            }
        }
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            // Interval can no longer be split in floating point.
            segments.push(s);
            let mut total = segments[0].value.zero_like();
            let mut total_err = 0.0;
            for s in &segments {
                total.add_scaled(1.0, &s.value);
                total_err += s.error;
            }
            return QuadResult {
                value: total,
                error: total_err,
                intervals: segments.len(),
                converged: false,
            };
        }
        let (v1, e1) = gk15(&mut f, s.a, mid);
        let (v2, e2) = gk15(&mut f, mid, s.b);
        segments.push(Segment {
            a: s.a,
            b: mid,
            value: v1,
            error: e1,
        });
        segments.push(Segment {
            a: mid,
            b: s.b,
            value: v2,
            error: e2,
        });
        // swap_remove reorders; restore left-to-right order for determinism
        segments.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap());
    }
}

/// Sum of integrals of `f` over consecutive pairs of `points`.
pub fn gauss_kronrod_pieces<T, F>(
    mut f: F,
    points: &[f64],
    opts: GkOptions,
) -> QuadResult<T>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let mut acc: Option<QuadResult<T>> = None;
    for w in points.windows(2) {
        let r = gauss_kronrod(&mut f, w[0], w[1], opts);
        acc = Some(match acc {
            None => r,
            Some(mut prev) => {
                prev.value.add_scaled(1.0, &r.value);
                prev.error += r.error;
                prev.intervals += r.intervals;
                prev.converged &= r.converged;
                prev
            }
        });
    }
    acc.expect("at least two break points")
}

/// `(1 / 2 pi i) * integral of f` along the parabola `s(u) = mu (1 + i u)^2`,
/// traversed from `-inf - i inf` to `-inf + i inf` around the negative axis.
///
/// Uses the trapezoid rule in `u`, halving the step until two successive
/// levels agree to `rel_tol` (relative to the result, with a floor set by the
/// absolute mass of the integrand).
pub fn hankel_parabola<F>(f: F, mu: f64, rel_tol: f64) -> Result<Complex64>
where
    F: Fn(Complex64) -> Complex64,
{
    let integrand = |u: f64| {
        let w = Complex64::new(1.0, u);
        let s = w * w * mu;
        let v = f(s) * w;
        if v.re.is_finite() && v.im.is_finite() {
            v
        } else {
            Complex64::new(0.0, 0.0)
        }
    };

    // Truncation: walk outward until the integrand is negligible on both sides.
    let probe = 0.125;
    let mut peak: f64 = integrand(0.0).norm();
    let mut u_max = 0.0;
    let mut quiet = 0;
    let mut j = 1;
    while u_max < 400.0 {
        let u = probe * j as f64;
        let m = integrand(u).norm().max(integrand(-u).norm());
        peak = peak.max(m);
        u_max = u;
        if m <= 1e-19 * peak {
            quiet += 1;
            if quiet >= 8 {
                break;
            }
        } else {
            quiet = 0;
        }
        j += 1;
    }
    if peak == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }

    let scale = mu / std::f64::consts::PI;
    let mut h = 0.5;
    let mut nodes_sum = crate::special::CompensatedComplexSum::new();
    let mut abs_mass = 0.0;
    let n0 = (u_max / h).ceil() as i64;
    for k in -n0..=n0 {
        let g = integrand(k as f64 * h);
        abs_mass += g.norm();
        nodes_sum.add(g);
    }
    let mut prev = nodes_sum.value() * h * scale;
    for level in 1..=14 {
        h *= 0.5;
        let n = (u_max / h).ceil() as i64;
        let mut k = -n + if n % 2 == 0 { 1 } else { 0 };
        while k <= n {
            let g = integrand(k as f64 * h);
            abs_mass += g.norm();
            nodes_sum.add(g);
            k += 2;
        }
        let cur = nodes_sum.value() * h * scale;
        let floor = 1e-15 * abs_mass * h * scale;
        if level >= 3 && (cur - prev).norm() <= rel_tol * cur.norm() + floor {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::NonConvergence(format!(
        "Hankel trapezoid did not settle (mu = {mu})"
    )))
}

//! Regularized semigroups `S_n(t)` from a vertical Bromwich line, the
//! regularizer `C_n = S_n(0)`, and the solver for `u' = Au, u(0) = x`.
//!
//! Along `lambda = abar + i tau` the integrand `e^{lambda t} R(lambda) x /
//! omega(i lambda)^n` is summed with the trapezoid rule, doubling the node
//! count until two levels agree.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::gevrey::{assoc, omega_ln, WeightSequence};
use crate::operator::{beurling_norm, spectral_norm, CMatrix, CVector, MatrixOperator, ResolventOracle};
use crate::quad::{gauss_kronrod, GkOptions};

/// Largest accepted condition number of `C_n`.
pub const REGULARIZER_CONDITION_LIMIT: f64 = 1e12;
/// Node-doubling budget of the adaptive rule.
const MAX_NODES: usize = 1 << 19;
/// Largest regularization order tried.
const MAX_ORDER: usize = 64;
/// Height at which the regularization order is certified.
const T_MAX: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// Fixed node count; the error estimate compares with the half rule.
    UniformTrapezoid,
    /// Node doubling until successive levels agree to `tol`.
    Adaptive,
}

/// Truncated trapezoid rule on `lambda = abar + i tau`, `|tau| <= height`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BromwichQuadrature {
    pub abar: f64,
    pub height: f64,
    pub nodes: usize,
    pub rule: Rule,
    pub tol: f64,
}

impl BromwichQuadrature {
    pub fn new(abar: f64, height: f64, nodes: usize, rule: Rule, tol: f64) -> Result<Self> {
        if nodes < 16 || !nodes.is_multiple_of(2) {
            return Err(invalid(format!("node count must be even and >= 16, got {nodes}")));
        }
        if !(height > 0.0) || !height.is_finite() {
            return Err(invalid(format!("height must be positive, got {height}")));
        }
        if !(tol > 0.0) {
            return Err(invalid(format!("tolerance must be positive, got {tol}")));
        }
        if !abar.is_finite() {
            return Err(invalid("abscissa must be finite"));
        }
        Ok(Self {
            abar,
            height,
            nodes,
            rule,
            tol,
        })
    }

    /// Adaptive rule for `oracle` with the height chosen where the integrand
    /// has decayed below `tol` and a starting step resolving the strip of
    /// analyticity around the line.
    pub fn auto<O: ResolventOracle + ?Sized>(
        oracle: &O,
        seq: &WeightSequence,
        n: usize,
        abar: f64,
        tol: f64,
    ) -> Result<Self> {
        check_abscissa(oracle.abscissa(), abar, seq)?;
        let height = truncation_height(oracle, seq, n, abar, tol)?;
        let strip = (abar - oracle.abscissa()).min(seq.m(1) - abar);
        let h0 = (0.5 * strip).min(0.5);
        let mut nodes = ((2.0 * height / h0).ceil() as usize).max(16);
        nodes += nodes % 2;
        Self::new(abar, height, nodes, Rule::Adaptive, tol)
    }
}

fn check_abscissa(a_star: f64, abar: f64, seq: &WeightSequence) -> Result<()> {
    let m1 = seq.m(1);
    if !(abar > a_star) {
        return Err(invalid(format!(
            "contour abscissa {abar} must exceed the resolvent abscissa {a_star}"
        )));
    }
    // omega(i lambda) vanishes at lambda = m_p; the line must stay left of m_1
    if !(abar < m1) {
        return Err(invalid(format!(
            "contour abscissa {abar} must stay below m_1 = {m1}"
        )));
    }
    Ok(())
}

/// `a* + min(1/2, (m_1 - a*)/2)`.
pub fn default_abscissa(a_star: f64, seq: &WeightSequence) -> Result<f64> {
    let m1 = seq.m(1);
    if !(a_star < m1) {
        return Err(invalid(format!(
            "spectral abscissa {a_star} is not below m_1 = {m1}; no admissible contour"
        )));
    }
    Ok(a_star + (0.5f64).min(0.5 * (m1 - a_star)))
}

fn omega_rel_tol(tol: f64) -> f64 {
    (tol * 1e-3).max(1e-16)
}

/// `R(lambda) / omega(i lambda)^n` applied to every column of `rhs`.
fn kernel<O: ResolventOracle + ?Sized>(
    oracle: &O,
    seq: &WeightSequence,
    n: usize,
    lambda: Complex64,
    rhs: &[CVector],
    tol: f64,
) -> Result<Vec<CVector>> {
    let iz = Complex64::new(-lambda.im, lambda.re);
    let scale = (-(n as f64) * omega_ln(seq, iz, omega_rel_tol(tol))?).exp();
    rhs.iter()
        .map(|y| Ok(oracle.resolvent_apply(lambda, y)? * scale))
        .collect()
}

fn resolvent_norm_probe<O: ResolventOracle + ?Sized>(oracle: &O, lambda: Complex64) -> Result<f64> {
    let d = oracle.dim();
    let mut worst: f64 = 0.0;
    for j in 0..d {
        let e = CVector::from_fn(d, |i, _| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0));
        worst = worst.max(oracle.resolvent_apply(lambda, &e)?.norm());
    }
    Ok(worst * (d as f64).sqrt())
}

/// Smallest sampled height beyond which `tau |integrand| / pi` stays below
/// `tol / 100` on both sides.
fn truncation_height<O: ResolventOracle + ?Sized>(
    oracle: &O,
    seq: &WeightSequence,
    n: usize,
    abar: f64,
    tol: f64,
) -> Result<f64> {
    let bound = |tau: f64| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for lambda in [Complex64::new(abar, tau), Complex64::new(abar, -tau)] {
            let iz = Complex64::new(-lambda.im, lambda.re);
            let w = (-(n as f64) * omega_ln(seq, iz, omega_rel_tol(tol))?.re).exp();
            worst = worst.max(resolvent_norm_probe(oracle, lambda)? * w);
        }
        Ok(worst * tau / std::f64::consts::PI)
    };
    let mut quiet = 0;
    let mut first_quiet = 0.0;
    for k in 0..120 {
        let tau = 2f64.powf(k as f64 / 4.0);
        if bound(tau)? < 1e-2 * tol {
            if quiet == 0 {
                first_quiet = tau;
            }
            quiet += 1;
            if quiet >= 4 {
                return Ok(first_quiet.max(8.0));
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::NonConvergence(format!(
        "Bromwich integrand does not decay below {tol:e} (n = {n})"
    )))
}

/// Picks the regularization order: the smallest `n` for which the bound
/// `L e^{M(k|lambda|)} e^{-n M(|lambda|)}` decays faster than `|lambda|^{-2}`
/// at `|tau| = 500` and its integral beyond that height is below `tol`.
/// `L` is the largest sampled `||R(lambda)|| e^{-M(k|lambda|)}` on the line.
pub fn choose_regularization_order<O: ResolventOracle + ?Sized>(
    oracle: &O,
    seq: &WeightSequence,
    abar: f64,
    k: f64,
    tol: f64,
) -> Result<usize> {
    check_abscissa(oracle.abscissa(), abar, seq)?;
    if !(k > 0.0) {
        return Err(invalid(format!("k must be positive, got {k}")));
    }
    let mut l: f64 = 0.0;
    for j in 0..=160 {
        // tau on a symmetric log grid up to T_MAX, plus tau = 0
        let tau = if j == 0 { 0.0 } else { T_MAX * 10f64.powf(-(j - 1) as f64 / 20.0) };
        for sign in [1.0, -1.0] {
            let lambda = Complex64::new(abar, sign * tau);
            let r = resolvent_norm_probe(oracle, lambda)?;
            l = l.max(r * (-assoc(seq, k * lambda.norm())).exp());
        }
    }
    let opts = GkOptions::new(tol * 1e-3, 1e-6);
    for n in 1..=MAX_ORDER {
        let exponent = |rho: f64| assoc(seq, k * rho) - n as f64 * assoc(seq, rho);
        if exponent(T_MAX) > -2.0 * T_MAX.ln() {
            continue;
        }
        // tail integral on doubling pieces [T, 2T], [2T, 4T], ...
        let mut tail = 0.0;
        let mut lo = T_MAX;
        for _ in 0..60 {
            let piece = gauss_kronrod(|r: f64| l * exponent(r).exp(), lo, 2.0 * lo, opts).value;
            tail += piece;
            if piece < 1e-6 * tol {
                break;
            }
            lo *= 2.0;
        }
        if tail / std::f64::consts::PI < tol {
            return Ok(n);
        }
    }
    Err(Error::NonConvergence(format!(
        "no regularization order up to {MAX_ORDER} controls the tail at tol {tol:e}"
    )))
}

/// Cached trapezoid samples `g_j = R(lambda_j) Y / omega(i lambda_j)^n` on a
/// uniform grid `tau_j = (j - J) h`, refined by halving `h`.
pub struct BromwichSampler<'a, O: ResolventOracle + ?Sized> {
    oracle: &'a O,
    seq: &'a WeightSequence,
    n: usize,
    quad: BromwichQuadrature,
    rhs: Vec<CVector>,
    half: usize,
    step: f64,
    /// `samples[j][r]`
    samples: Vec<Vec<CVector>>,
    error: f64,
}

impl<'a, O: ResolventOracle + ?Sized> BromwichSampler<'a, O> {
    pub fn new(
        oracle: &'a O,
        seq: &'a WeightSequence,
        n: usize,
        quad: BromwichQuadrature,
        rhs: Vec<CVector>,
    ) -> Result<Self> {
        check_abscissa(oracle.abscissa(), quad.abar, seq)?;
        if n == 0 {
            return Err(invalid("regularization order must be at least 1"));
        }
        if rhs.iter().any(|y| y.len() != oracle.dim()) {
            return Err(invalid("vector length does not match the operator"));
        }
        let half = quad.nodes / 2;
        let step = quad.height / half as f64;
        let taus: Vec<f64> = (0..=2 * half).map(|j| (j as f64 - half as f64) * step).collect();
        let samples = Self::sample(oracle, seq, n, &quad, &rhs, &taus)?;
        Ok(Self {
            oracle,
            seq,
            n,
            quad,
            rhs,
            half,
            step,
            samples,
            error: f64::INFINITY,
        })
    }

    fn sample(
        oracle: &O,
        seq: &WeightSequence,
        n: usize,
        quad: &BromwichQuadrature,
        rhs: &[CVector],
        taus: &[f64],
    ) -> Result<Vec<Vec<CVector>>> {
        taus.par_iter()
            .map(|&tau| kernel(oracle, seq, n, Complex64::new(quad.abar, tau), rhs, quad.tol))
            .collect()
    }

    pub fn nodes(&self) -> usize {
        2 * self.half
    }

    pub fn error(&self) -> f64 {
        self.error
    }

    pub fn quadrature(&self) -> BromwichQuadrature {
        BromwichQuadrature {
            nodes: self.nodes(),
            ..self.quad
        }
    }

    /// Halves the step, sampling only the new midpoints.
    fn double(&mut self) -> Result<()> {
        let fresh: Vec<f64> = (0..2 * self.half)
            .map(|j| (j as f64 - self.half as f64 + 0.5) * self.step)
            .collect();
        let new = Self::sample(self.oracle, self.seq, self.n, &self.quad, &self.rhs, &fresh)?;
        let mut merged = Vec::with_capacity(self.samples.len() + new.len());
        let mut new_iter = new.into_iter();
        for (j, s) in std::mem::take(&mut self.samples).into_iter().enumerate() {
            if j > 0 {
                merged.push(new_iter.next().expect("one midpoint per gap"));
            }
            merged.push(s);
        }
        self.samples = merged;
        self.half *= 2;
        self.step *= 0.5;
        Ok(())
    }

    /// Trapezoid sums for every column at time `t`, using every `stride`-th node.
    fn sums(&self, t: f64, stride: usize) -> Vec<CVector> {
        let d = self.oracle.dim();
        let mut acc = vec![CVector::zeros(d); self.rhs.len()];
        let h = self.step * stride as f64;
        let n_nodes = self.samples.len();
        let mut j = 0;
        let mut count = 0usize;
        let rotate = Complex64::from_polar(1.0, h * t);
        let mut phase = Complex64::new(1.0, 0.0);
        while j < n_nodes {
            // resynchronize the rotating phase every 64 nodes
            if count.is_multiple_of(64) {
                let tau = (j as f64 - self.half as f64) * self.step;
                phase = Complex64::from_polar(1.0, tau * t);
            }
            for (a, g) in acc.iter_mut().zip(&self.samples[j]) {
                a.axpy(phase, g, Complex64::new(1.0, 0.0));
            }
            phase *= rotate;
            j += stride;
            count += 1;
        }
        let factor = Complex64::new((self.quad.abar * t).exp() * h / (2.0 * std::f64::consts::PI), 0.0);
        acc.into_iter().map(|a| a * factor).collect()
    }

    /// `S_n(t) y` for every right-hand side `y`, at the current level.
    pub fn eval(&self, t: f64) -> Vec<CVector> {
        self.sums(t, 1)
    }

    /// `eval` for many times, in parallel, results in input order.
    pub fn eval_many(&self, ts: &[f64]) -> Vec<Vec<CVector>> {
        ts.par_iter().map(|&t| self.eval(t)).collect()
    }

    fn level_gap(&self, ts: &[f64]) -> f64 {
        ts.par_iter()
            .map(|&t| {
                let fine = self.sums(t, 1);
                let coarse = self.sums(t, 2);
                fine.iter()
                    .zip(&coarse)
                    .map(|(a, b)| (a - b).camax())
                    .fold(0.0, f64::max)
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Refines until the current and the previous level agree to `tol` in the
    /// max norm at every time in `ts` (adaptive rule), or just records that
    /// gap (uniform rule). Returns the error estimate.
    pub fn refine_for(&mut self, ts: &[f64]) -> Result<f64> {
        self.error = self.level_gap(ts);
        if self.quad.rule == Rule::UniformTrapezoid {
            return Ok(self.error);
        }
        while self.error > self.quad.tol {
            if self.nodes() * 2 > MAX_NODES {
                return Err(Error::NonConvergence(format!(
                    "Bromwich trapezoid at {} nodes still differs by {:e} (tol {:e})",
                    self.nodes(),
                    self.error,
                    self.quad.tol
                )));
            }
            self.double()?;
            self.error = self.level_gap(ts);
        }
        Ok(self.error)
    }
}

/// A vector computed by the contour rule with its error estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourValue {
    pub value: CVector,
    pub error: f64,
    pub nodes: usize,
}

/// `S_n(t) x`.
pub fn s_n_apply<O: ResolventOracle + ?Sized>(
    oracle: &O,
    seq: &WeightSequence,
    n: usize,
    quad: &BromwichQuadrature,
    t: f64,
    x: &CVector,
) -> Result<ContourValue> {
    if !(t >= 0.0) {
        return Err(invalid(format!("time must be non-negative, got {t}")));
    }
    let mut sampler = BromwichSampler::new(oracle, seq, n, *quad, vec![x.clone()])?;
    let error = sampler.refine_for(&[t])?;
    let value = sampler.eval(t).pop().expect("one column");
    Ok(ContourValue {
        value,
        error,
        nodes: sampler.nodes(),
    })
}

fn identity_columns(d: usize) -> Vec<CVector> {
    (0..d)
        .map(|j| CVector::from_fn(d, |i, _| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)))
        .collect()
}

fn columns_to_matrix(cols: &[CVector]) -> CMatrix {
    CMatrix::from_columns(cols)
}

/// `C_n = S_n(0)` with its condition number.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularizer {
    pub matrix: CMatrix,
    pub inverse: CMatrix,
    pub condition: f64,
    pub error: f64,
}

fn invert_regularizer(matrix: CMatrix, error: f64) -> Result<Regularizer> {
    let inverse = matrix
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::DegenerateRegularizer {
            condition: f64::INFINITY,
        })?;
    let condition = spectral_norm(&matrix) * spectral_norm(&inverse);
    if !(condition <= REGULARIZER_CONDITION_LIMIT) {
        return Err(Error::DegenerateRegularizer { condition });
    }
    Ok(Regularizer {
        matrix,
        inverse,
        condition,
        error,
    })
}

/// The regularizer `C_n`, column by column from `S_n(0) e_j`.
pub fn regularizer<O: ResolventOracle + ?Sized>(
    oracle: &O,
    seq: &WeightSequence,
    n: usize,
    quad: &BromwichQuadrature,
) -> Result<Regularizer> {
    let mut sampler = BromwichSampler::new(oracle, seq, n, *quad, identity_columns(oracle.dim()))?;
    let error = sampler.refine_for(&[0.0])?;
    invert_regularizer(columns_to_matrix(&sampler.eval(0.0)), error)
}

/// `||S_n(t) S_n(s) x - C_n S_n(t+s) x||`.
pub fn semigroup_property_check<O: ResolventOracle + ?Sized>(
    oracle: &O,
    seq: &WeightSequence,
    n: usize,
    quad: &BromwichQuadrature,
    t: f64,
    s: f64,
    x: &CVector,
) -> Result<f64> {
    if !(t >= 0.0 && s >= 0.0) {
        return Err(invalid("times must be non-negative"));
    }
    let mut sampler = BromwichSampler::new(oracle, seq, n, *quad, identity_columns(oracle.dim()))?;
    sampler.refine_for(&[0.0, t, s, t + s])?;
    let mats: Vec<CMatrix> = sampler
        .eval_many(&[0.0, t, s, t + s])
        .iter()
        .map(|cols| columns_to_matrix(cols))
        .collect();
    let lhs = &mats[1] * (&mats[2] * x);
    let rhs = &mats[0] * (&mats[3] * x);
    Ok((lhs - rhs).norm())
}

/// Contour settings for [`solve_acp_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcpOptions {
    /// Contour abscissa; `None` picks [`default_abscissa`].
    pub abar: Option<f64>,
    /// Growth parameter `k` in the resolvent bound used to choose `n`.
    pub k: f64,
    /// Target accuracy of the returned states.
    pub tol: f64,
}

impl AcpOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            abar: None,
            k: 1.0,
            tol,
        }
    }
}

/// How a trajectory was computed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMeta {
    pub n: usize,
    pub quad: BromwichQuadrature,
    /// Estimated error of the states (max norm).
    pub error: f64,
    /// `C_n^{-1} x`.
    pub preimage: CVector,
    pub regularizer_condition: f64,
    /// Set when a truncation bound exceeded the tolerance.
    pub truncated: bool,
}

/// Time samples with their states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CVector>,
    pub meta: TrajectoryMeta,
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if let Some(&t0) = times.first() {
        if !(t0 >= 0.0) {
            return Err(invalid(format!("times must start at t >= 0, got {t0}")));
        }
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(invalid("times must be strictly increasing"));
        }
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(invalid("times must be finite"));
    }
    Ok(())
}

/// The contour data shared by the first-order and fractional solvers.
pub(crate) struct Prepared {
    pub n: usize,
    pub quad: BromwichQuadrature,
    pub regularizer: Regularizer,
    pub preimage: CVector,
}

impl Prepared {
    /// Order, contour and `C_n`; the second quadrature tolerance is tightened
    /// by `||C_n^{-1}||` so the deregularized states meet `opts.tol`.
    pub fn new(
        op: &MatrixOperator,
        seq: &WeightSequence,
        x: &CVector,
        opts: &AcpOptions,
    ) -> Result<Self> {
        if !(opts.tol > 0.0) {
            return Err(invalid(format!("tolerance must be positive, got {}", opts.tol)));
        }
        if x.len() != op.dim() {
            return Err(invalid("vector length does not match the operator"));
        }
        let a_star = op.abscissa();
        let abar = match opts.abar {
            Some(a) => a,
            None => default_abscissa(a_star, seq)?,
        };
        check_abscissa(a_star, abar, seq)?;
        let n = choose_regularization_order(op, seq, abar, opts.k, opts.tol)?;
        let first = BromwichQuadrature::auto(op, seq, n, abar, opts.tol)?;
        let rough = regularizer(op, seq, n, &first)?;
        let kappa = spectral_norm(&rough.inverse).max(1.0);
        let tol_q = (opts.tol / (10.0 * kappa)).max(1e-14);
        let quad = BromwichQuadrature::auto(op, seq, n, abar, tol_q)?;
        let regularizer = regularizer(op, seq, n, &quad)?;
        let preimage = regularizer
            .matrix
            .clone()
            .lu()
            .solve(x)
            .ok_or(Error::DegenerateRegularizer {
                condition: f64::INFINITY,
            })?;
        Ok(Self {
            n,
            quad,
            regularizer,
            preimage,
        })
    }
}

/// `u(t) = S_n(t) C_n^{-1} x` on the given times.
pub fn solve_acp_with(
    op: &MatrixOperator,
    seq: &WeightSequence,
    x: &CVector,
    times: &[f64],
    opts: &AcpOptions,
) -> Result<Trajectory> {
    check_times(times)?;
    let prep = Prepared::new(op, seq, x, opts)?;
    let mut sampler = BromwichSampler::new(op, seq, prep.n, prep.quad, vec![prep.preimage.clone()])?;
    let mut ts = vec![0.0];
    ts.extend(times.iter().copied().filter(|&t| t > 0.0));
    let error = sampler.refine_for(&ts)?;
    let states: Vec<CVector> = sampler
        .eval_many(times)
        .into_iter()
        .map(|mut v| v.pop().expect("one column"))
        .collect();
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        meta: TrajectoryMeta {
            n: prep.n,
            quad: sampler.quadrature(),
            error: error.max(prep.regularizer.error),
            preimage: prep.preimage,
            regularizer_condition: prep.regularizer.condition,
            truncated: false,
        },
    })
}

/// [`solve_acp_with`] using the default abscissa and `k = 1`.
pub fn solve_acp(
    op: &MatrixOperator,
    seq: &WeightSequence,
    x: &CVector,
    times: &[f64],
    tol: f64,
) -> Result<Trajectory> {
    solve_acp_with(op, seq, x, times, &AcpOptions::new(tol))
}

/// One row of the derivative-growth check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityRow {
    pub t: f64,
    /// `sup_p h^p ||A^p u(t)|| / M_p`.
    pub sup_value: f64,
    /// `e^{abar t} ||C_n^{-1} x||`.
    pub rhs_bound_shape: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub rows: Vec<RegularityRow>,
    /// Largest `sup_value / rhs_bound_shape` over the rows.
    pub c_fit: f64,
    pub abar: f64,
}

/// Compares `sup_p h^p ||u^{(p)}(t)|| / M_p` with `e^{abar t} ||C_n^{-1} x||`
/// along a solution, using `u^{(p)}(t) = A^p u(t)`.
#[allow(clippy::too_many_arguments)]
pub fn gevrey_regularity_check(
    op: &MatrixOperator,
    seq: &WeightSequence,
    x: &CVector,
    h: f64,
    times: &[f64],
    p_max: usize,
    abar: Option<f64>,
    tol: f64,
) -> Result<RegularityReport> {
    let opts = AcpOptions {
        abar,
        ..AcpOptions::new(tol)
    };
    let traj = solve_acp_with(op, seq, x, times, &opts)?;
    let abar = traj.meta.quad.abar;
    let y_norm = traj.meta.preimage.norm();
    let mut rows = Vec::with_capacity(times.len());
    let mut c_fit: f64 = 0.0;
    for (&t, u) in traj.times.iter().zip(&traj.states) {
        let sup_value = beurling_norm(op, u, h, seq, p_max)?.value;
        let rhs_bound_shape = (abar * t).exp() * y_norm;
        if rhs_bound_shape > 0.0 {
            c_fit = c_fit.max(sup_value / rhs_bound_shape);
        }
        rows.push(RegularityRow {
            t,
            sup_value,
            rhs_bound_shape,
        });
    }
    Ok(RegularityReport { rows, c_fit, abar })
}

/// Dense matrix of a list of equal-length vectors, one per row; handy for CSV.
pub fn states_matrix(traj: &Trajectory) -> DMatrix<Complex64> {
    let d = traj.states.first().map_or(0, |v| v.len());
    DMatrix::from_fn(traj.states.len(), d, |i, j| traj.states[i][j])
}

//! Ultradistribution semigroups of matrices, `G(phi) = int_0^inf phi(t) e^{tA} dt`,
//! the axiom checks on this model, and a sampled probe of the convolution
//! estimate `||e^{-at} G(phi * psi)|| <= C ||phi||_{D_K, h'} ||psi||_{L^1}`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::gevrey::WeightSequence;
use crate::operator::{expm, spectral_norm, CMatrix, CVector, MatrixOperator};
use crate::quad::{gauss_kronrod, GkOptions};
use crate::testfn::{convolve, convolve0, dk_norm, gevrey_bump, l1_norm, TestFunction};

/// `G(phi) = int_0^inf phi(t) e^{tA} dt` for a matrix `A`.
#[derive(Debug, Clone)]
pub struct MatrixUdsg {
    op: MatrixOperator,
    quad_tol: f64,
}

impl MatrixUdsg {
    pub fn new(op: MatrixOperator, quad_tol: f64) -> Result<Self> {
        if !(quad_tol > 0.0) {
            return Err(invalid(format!("quadrature tolerance must be positive, got {quad_tol}")));
        }
        Ok(Self { op, quad_tol })
    }

    pub fn operator(&self) -> &MatrixOperator {
        &self.op
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    /// `max(a*, 0)`.
    pub fn exponential_order(&self) -> f64 {
        self.op.spectral_abscissa().max(0.0)
    }

    /// The semigroup of `A - aI`, i.e. `e^{-a t} G`.
    pub fn shifted(&self, a: f64) -> Result<Self> {
        Self::new(self.op.shifted(Complex64::new(a, 0.0))?, self.quad_tol)
    }

    fn exp_at(&self, t: f64) -> CMatrix {
        self.op
            .matrix_function_matrix(|l| (l * t).exp())
            .unwrap_or_else(|_| self.op.expm(t))
    }

    /// `int_{[l, r] cap [0, inf)} f(t) e^{tA} dt`.
    fn integrate<F: Fn(f64) -> Result<f64>>(&self, support: (f64, f64), f: F) -> Result<CMatrix> {
        let d = self.op.dim();
        let lo = support.0.max(0.0);
        let hi = support.1;
        if !(hi > lo) {
            return Ok(CMatrix::zeros(d, d));
        }
        let mut failure = None;
        let r = gauss_kronrod(
            |t: f64| match f(t) {
                Ok(v) if v != 0.0 => self.exp_at(t) * Complex64::new(v, 0.0),
                Ok(_) => CMatrix::zeros(d, d),
                Err(e) => {
                    failure.get_or_insert(e);
                    CMatrix::zeros(d, d)
                }
            },
            lo,
            hi,
            GkOptions {
                abs_tol: self.quad_tol,
                rel_tol: 1e-3 * self.quad_tol,
                max_intervals: 4000,
            },
        );
        if let Some(e) = failure {
            return Err(e);
        }
        r.into_result("G(phi)")
    }
}

/// `G(phi)`.
pub fn udsg_apply(g: &MatrixUdsg, phi: &TestFunction) -> Result<CMatrix> {
    if phi.is_zero() {
        let d = g.op.dim();
        return Ok(CMatrix::zeros(d, d));
    }
    g.integrate(phi.support(), |t| Ok(phi.eval(t)))
}

fn require_positive_support(phi: &TestFunction, name: &str) -> Result<()> {
    if !phi.is_zero() && phi.support().0 <= 0.0 {
        return Err(invalid(format!("{name} must be supported in (0, inf)")));
    }
    Ok(())
}

/// `||G(phi *_0 psi) - G(phi) G(psi)||`.
pub fn check_convolution_identity(g: &MatrixUdsg, phi: &TestFunction, psi: &TestFunction) -> Result<f64> {
    require_positive_support(phi, "phi")?;
    require_positive_support(psi, "psi")?;
    let lhs = udsg_apply(g, &convolve0(phi, psi))?;
    let rhs = udsg_apply(g, phi)? * udsg_apply(g, psi)?;
    Ok(spectral_norm(&(lhs - rhs)))
}

/// `||G(-phi') x - G(phi) A x||`.
pub fn check_generator_identity(g: &MatrixUdsg, phi: &TestFunction, x: &CVector) -> Result<f64> {
    require_positive_support(phi, "phi")?;
    if x.len() != g.op.dim() {
        return Err(invalid("vector length does not match the operator"));
    }
    if phi.is_zero() {
        return Ok(0.0);
    }
    let lhs = g.integrate(phi.support(), |t| Ok(-phi.derivative(1, t)?))? * x;
    let rhs = udsg_apply(g, phi)? * g.op.apply(x);
    Ok((lhs - rhs).norm())
}

/// Numerical nullity and rank of `G(phi)` at threshold `1e-8 ||G(phi)||`.
pub fn check_nondegeneracy(g: &MatrixUdsg, phi: &TestFunction) -> Result<(usize, usize)> {
    require_positive_support(phi, "phi")?;
    let m = udsg_apply(g, phi)?;
    let sv = m.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > 1e-8 * top && s > 0.0).count();
    Ok((m.ncols() - rank, rank))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Branch {
    /// One `h'` fixed by the caller.
    Beurling { h_prime: f64 },
    /// Every `h'` of a grid.
    Roumieu { h_grid: Vec<f64> },
}

/// Sampler and lattice settings of [`fujiwara_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub branch: Branch,
    pub a0: f64,
    pub a: f64,
    /// Interval holding the supports of every sampled pair.
    pub k: (f64, f64),
    pub pairs: usize,
    pub alpha_max: usize,
    pub seed: u64,
    /// Gevrey index of the sampled bumps.
    pub bump_index: f64,
    /// Radius range, clipped to half the length of `k`.
    pub radius: (f64, f64),
    /// Lattice size for the `D_K` norm.
    pub grid_n: usize,
}

impl ProbeConfig {
    /// Beurling probe with bumps of index 1.2 and radii in `[0.8, 1]`.
    pub fn beurling(h_prime: f64, a0: f64, a: f64, k: (f64, f64), pairs: usize, alpha_max: usize, seed: u64) -> Self {
        Self {
            branch: Branch::Beurling { h_prime },
            a0,
            a,
            k,
            pairs,
            alpha_max,
            seed,
            bump_index: 1.2,
            radius: (0.8, 1.0),
            grid_n: 24,
        }
    }
}

/// One sampled pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub pair_id: usize,
    pub ratio: f64,
    pub phi_center: f64,
    pub phi_radius: f64,
    pub psi_center: f64,
    pub psi_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    /// Largest ratio, for the `h'` whose rows are reported.
    pub c_hat: f64,
    /// `h'` the rows belong to (the Beurling value, or the Roumieu grid point
    /// with the largest `C_hat`).
    pub h_prime: f64,
    pub rows: Vec<ProbeRow>,
    /// `(h', C_hat(h'))` for every probed `h'`.
    pub sweep: Vec<(f64, f64)>,
}

struct Pair {
    phi: TestFunction,
    psi: TestFunction,
    phi_center: f64,
    phi_radius: f64,
    psi_center: f64,
    psi_radius: f64,
}

fn draw_pairs(cfg: &ProbeConfig) -> Result<Vec<Pair>> {
    let (k_lo, k_hi) = cfg.k;
    let half = 0.5 * (k_hi - k_lo);
    let r_hi = cfg.radius.1.min(half);
    let r_lo = cfg.radius.0.min(r_hi);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draw = |rng: &mut ChaCha8Rng| -> Result<(TestFunction, f64, f64)> {
        let r = if r_hi > r_lo { rng.random_range(r_lo..r_hi) } else { r_lo };
        let (c_lo, c_hi) = (k_lo + r, k_hi - r);
        let c = if c_hi > c_lo { rng.random_range(c_lo..c_hi) } else { c_lo };
        let scale = rng.random_range(0.5..2.0);
        Ok((gevrey_bump(cfg.bump_index, c, r)?.scaled(scale), c, r))
    };
    (0..cfg.pairs)
        .map(|_| {
            let (phi, phi_center, phi_radius) = draw(&mut rng)?;
            let (psi, psi_center, psi_radius) = draw(&mut rng)?;
            Ok(Pair {
                phi,
                psi,
                phi_center,
                phi_radius,
                psi_center,
                psi_radius,
            })
        })
        .collect()
}

/// Samples random bump pairs supported in `K` and records
/// `||G_a(phi * psi)|| / (||phi||_{D_K, h'} ||psi||_{L^1})`, where `G_a` is the
/// semigroup of `A - aI`.
pub fn fujiwara_probe(g: &MatrixUdsg, seq: &WeightSequence, cfg: &ProbeConfig) -> Result<ProbeReport> {
    let order = g.exponential_order();
    if !(cfg.a0 >= order) {
        return Err(invalid(format!(
            "a0 = {} is below the exponential order {order}",
            cfg.a0
        )));
    }
    if !(cfg.a > cfg.a0) {
        return Err(invalid(format!("a = {} must exceed a0 = {}", cfg.a, cfg.a0)));
    }
    let (k_lo, k_hi) = cfg.k;
    if !(k_lo >= 0.0 && k_hi > k_lo) {
        return Err(invalid("K must be an interval inside [0, inf)"));
    }
    if cfg.pairs == 0 {
        return Err(invalid("at least one pair is needed"));
    }
    let h_grid = match &cfg.branch {
        Branch::Beurling { h_prime } => vec![*h_prime],
        Branch::Roumieu { h_grid } => h_grid.clone(),
    };
    if h_grid.is_empty() || h_grid.iter().any(|h| !(*h > 0.0)) {
        return Err(invalid("h' values must be positive"));
    }
    let shifted = g.shifted(cfg.a)?;
    let pairs = draw_pairs(cfg)?;
    // per pair: numerator, L1 norm of psi, D_K norms of phi for every h'
    let measured = pairs
        .par_iter()
        .map(|p| -> Result<(f64, f64, Vec<f64>)> {
            let num = spectral_norm(&udsg_apply(&shifted, &convolve(&p.phi, &p.psi))?);
            let l1 = l1_norm(&p.psi);
            let dk = h_grid
                .iter()
                .map(|&h| Ok(dk_norm(&p.phi, h, seq, cfg.alpha_max, cfg.grid_n)?.value))
                .collect::<Result<Vec<f64>>>()?;
            Ok((num, l1, dk))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sweep = Vec::with_capacity(h_grid.len());
    let mut best: Option<(f64, usize)> = None;
    for (i, &h) in h_grid.iter().enumerate() {
        let c = measured
            .iter()
            .map(|(num, l1, dk)| num / (dk[i] * l1))
            .fold(0.0, f64::max);
        sweep.push((h, c));
        if best.is_none_or(|(b, _)| c > b) {
            best = Some((c, i));
        }
    }
    let (c_hat, idx) = best.expect("grid is non-empty");
    let rows = pairs
        .iter()
        .zip(&measured)
        .enumerate()
        .map(|(pair_id, (p, (num, l1, dk)))| ProbeRow {
            pair_id,
            ratio: num / (dk[idx] * l1),
            phi_center: p.phi_center,
            phi_radius: p.phi_radius,
            psi_center: p.psi_center,
            psi_radius: p.psi_radius,
        })
        .collect();
    Ok(ProbeReport {
        c_hat,
        h_prime: h_grid[idx],
        rows,
        sweep,
    })
}

/// `e^{tA}` through the series exponential; exposed for oracle comparisons.
pub fn series_exponential(op: &MatrixOperator, t: f64) -> CMatrix {
    expm(&(op.entries() * Complex64::new(t, 0.0)))
}

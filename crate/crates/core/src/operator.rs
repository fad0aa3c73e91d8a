//! Square complex matrices as concrete generators, behind a resolvent oracle.
//!
//! Operator norms are spectral norms (largest singular value) throughout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::gevrey::{assoc, WeightSequence};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Eigenvector matrices above this condition number are treated as defective.
const EIGEN_COND_LIMIT: f64 = 1e10;

/// Anything that can apply `R(lambda : A) = (lambda I - A)^{-1}` to a vector.
pub trait ResolventOracle: Sync {
    fn dim(&self) -> usize;

    /// `a` such that every `lambda` with `Re lambda > a` lies in the resolvent set.
    fn abscissa(&self) -> f64;

    fn resolvent_apply(&self, lambda: Complex64, x: &CVector) -> Result<CVector>;
}

#[derive(Debug, Clone)]
struct Eigenbasis {
    vectors: CMatrix,
    inverse: CMatrix,
    condition: f64,
}

/// A `dim x dim` complex matrix with its spectral data computed up front.
#[derive(Debug, Clone)]
pub struct MatrixOperator {
    entries: CMatrix,
    eigenvalues: Vec<Complex64>,
    eigenbasis: Option<Eigenbasis>,
    eigen_condition: f64,
    norm: f64,
    abscissa: f64,
}

pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Eigenvectors of an upper-triangular matrix by back-substitution.
fn triangular_eigenvectors(t: &CMatrix, scale: f64) -> CMatrix {
    let n = t.nrows();
    let small = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let mut y = CMatrix::zeros(n, n);
    for k in 0..n {
        let tk = t[(k, k)];
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in i + 1..=k {
                acc += t[(i, j)] * y[(j, k)];
            }
            if acc == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut d = t[(i, i)] - tk;
            if d.norm() < small {
                d = Complex64::new(small, 0.0);
            }
            y[(i, k)] = -acc / d;
        }
        let norm = y.column(k).norm();
        y.column_mut(k).unscale_mut(norm);
    }
    y
}

impl MatrixOperator {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(invalid(format!(
                "operator must be a non-empty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("matrix entries must be finite"));
        }
        let norm = spectral_norm(&entries);
        let (q, t) = entries.clone().schur().unpack();
        let eigenvalues: Vec<Complex64> = (0..t.nrows()).map(|i| t[(i, i)]).collect();
        let abscissa = eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);

        let vectors = &q * triangular_eigenvectors(&t, norm);
        let sv = vectors.clone().singular_values();
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let eigen_condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        let eigenbasis = if eigen_condition < EIGEN_COND_LIMIT {
            vectors.clone().try_inverse().map(|inverse| Eigenbasis {
                vectors,
                inverse,
                condition: eigen_condition,
            })
        } else {
            None
        };
        Ok(Self {
            entries,
            eigenvalues,
            eigenbasis,
            eigen_condition,
            norm,
            abscissa,
        })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("rows must all have the matrix dimension"));
        }
        Self::new(CMatrix::from_fn(n, n, |i, j| Complex64::new(rows[i][j], 0.0)))
    }

    pub fn diagonal(values: &[Complex64]) -> Result<Self> {
        Self::new(CMatrix::from_diagonal(&CVector::from_column_slice(values)))
    }

    pub fn diagonal_real(values: &[f64]) -> Result<Self> {
        let v: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::diagonal(&v)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    /// `a* = max Re lambda_i`.
    pub fn spectral_abscissa(&self) -> f64 {
        self.abscissa
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_diagonalizable(&self) -> bool {
        self.eigenbasis.is_some()
    }

    /// Condition number of the eigenvector matrix (infinite when defective).
    pub fn eigen_condition(&self) -> f64 {
        self.eigenbasis
            .as_ref()
            .map_or(self.eigen_condition.max(EIGEN_COND_LIMIT), |e| e.condition)
    }

    /// `A - shift I`.
    pub fn shifted(&self, shift: Complex64) -> Result<Self> {
        let n = self.dim();
        Self::new(&self.entries - CMatrix::identity(n, n) * shift)
    }

    pub fn apply(&self, x: &CVector) -> CVector {
        &self.entries * x
    }

    fn check_lambda(&self, lambda: Complex64) -> Result<()> {
        let distance = self
            .eigenvalues
            .iter()
            .map(|mu| (lambda - mu).norm())
            .fold(f64::INFINITY, f64::min);
        if distance <= 1e-12 * self.norm.max(1.0) {
            return Err(Error::SpectrumHit { lambda, distance });
        }
        Ok(())
    }

    fn shifted_system(&self, lambda: Complex64) -> CMatrix {
        let n = self.dim();
        CMatrix::identity(n, n) * lambda - &self.entries
    }

    /// `(lambda I - A)^{-1}`.
    pub fn resolvent(&self, lambda: Complex64) -> Result<CMatrix> {
        self.check_lambda(lambda)?;
        self.shifted_system(lambda)
            .lu()
            .try_inverse()
            .ok_or(Error::SpectrumHit {
                lambda,
                distance: 0.0,
            })
    }

    /// `f(A) x = V diag(f(lambda_i)) V^{-1} x`; needs a well-conditioned eigenbasis.
    pub fn matrix_function<F>(&self, f: F, x: &CVector) -> Result<CVector>
    where
        F: Fn(Complex64) -> Complex64,
    {
        let basis = self.basis()?;
        let mut y = &basis.inverse * x;
        for (yi, &mu) in y.iter_mut().zip(&self.eigenvalues) {
            *yi *= f(mu);
        }
        Ok(&basis.vectors * y)
    }

    /// `f(A)` as a matrix.
    pub fn matrix_function_matrix<F>(&self, f: F) -> Result<CMatrix>
    where
        F: Fn(Complex64) -> Complex64,
    {
        let basis = self.basis()?;
        let mut scaled = basis.vectors.clone();
        for (j, &mu) in self.eigenvalues.iter().enumerate() {
            let fj = f(mu);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= fj;
            }
        }
        Ok(scaled * &basis.inverse)
    }

    fn basis(&self) -> Result<&Eigenbasis> {
        self.eigenbasis.as_ref().ok_or_else(|| {
            Error::OracleUnavailable(format!(
                "matrix is not diagonalizable within tolerance (eigenvector condition {:e})",
                self.eigen_condition
            ))
        })
    }

    /// `e^{tA}` by Taylor series with scaling and squaring.
    pub fn expm(&self, t: f64) -> CMatrix {
        expm(&(self.entries.clone() * Complex64::new(t, 0.0)))
    }
}

impl ResolventOracle for MatrixOperator {
    fn dim(&self) -> usize {
        self.entries.nrows()
    }

    fn abscissa(&self) -> f64 {
        self.abscissa
    }

    fn resolvent_apply(&self, lambda: Complex64, x: &CVector) -> Result<CVector> {
        self.check_lambda(lambda)?;
        self.shifted_system(lambda)
            .lu()
            .solve(x)
            .ok_or(Error::SpectrumHit {
                lambda,
                distance: 0.0,
            })
    }
}

/// Matrix exponential by a truncated Taylor series after scaling the
/// argument below norm 1/2, then repeated squaring.
pub fn expm(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    let norm = m.iter().map(|z| z.norm()).sum::<f64>().max(0.0);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = m * Complex64::new(scale, 0.0);
    let mut result = CMatrix::identity(n, n);
    let mut term = CMatrix::identity(n, n);
    for k in 1..=30 {
        term = &term * &x * Complex64::new(1.0 / k as f64, 0.0);
        result += &term;
        if term.iter().map(|z| z.norm()).sum::<f64>() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// `k` values tried by [`verify_resolvent_bound`] callers by default.
pub fn default_k_grid() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0]
}

/// Points of `Re lambda > a`: real offsets `10^{-3..2}` above `a` times
/// imaginary parts `0, +-2^{-2..10}`.
pub fn half_plane_grid(a: f64) -> Vec<Complex64> {
    let mut ims = vec![0.0];
    for k in -2..=10 {
        let y = 2f64.powi(k);
        ims.push(y);
        ims.push(-y);
    }
    (-3..=2)
        .flat_map(|e| {
            let re = a + 10f64.powi(e);
            ims.iter().map(move |&y| Complex64::new(re, y))
        })
        .collect()
}

/// Result of fitting `||R(lambda)|| <= L e^{M(k |lambda|)}` on a sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub pass: bool,
    pub k: f64,
    pub l: f64,
    pub worst_point: Complex64,
    pub worst_ratio: f64,
    /// `(k, L(k))` for every `k` of the grid.
    pub per_k: Vec<(f64, f64)>,
}

/// Fits the resolvent growth bound over `k_grid` on `sample_grid`.
///
/// For every `k` the constant `L(k)` is the largest sampled ratio
/// `||R(lambda)|| / e^{M(k|lambda|)}`. The reported pair minimizes `L`, ties
/// going to the smaller `k`.
pub fn verify_resolvent_bound(
    op: &MatrixOperator,
    a: f64,
    seq: &WeightSequence,
    k_grid: &[f64],
    sample_grid: &[Complex64],
) -> Result<BoundReport> {
    if a <= op.spectral_abscissa() {
        return Err(invalid(format!(
            "half-plane Re lambda > {a} meets the spectrum (spectral abscissa {})",
            op.spectral_abscissa()
        )));
    }
    if k_grid.is_empty() || k_grid.iter().any(|&k| !(k > 0.0)) {
        return Err(invalid("k grid must be non-empty and positive"));
    }
    if sample_grid.is_empty() {
        return Err(invalid("sample grid is empty"));
    }
    if let Some(bad) = sample_grid.iter().find(|z| z.re <= a) {
        return Err(invalid(format!("sample point {bad} is outside Re lambda > {a}")));
    }
    let norms = sample_grid
        .iter()
        .map(|&z| op.resolvent(z).map(|r| spectral_norm(&r)))
        .collect::<Result<Vec<f64>>>()?;

    let mut per_k = Vec::with_capacity(k_grid.len());
    let mut best: Option<BoundReport> = None;
    for &k in k_grid {
        let mut l = 0.0;
        let mut worst = sample_grid[0];
        for (&z, &r) in sample_grid.iter().zip(&norms) {
            let ratio = r * (-assoc(seq, k * z.norm())).exp();
            if ratio > l {
                l = ratio;
                worst = z;
            }
        }
        per_k.push((k, l));
        if best.as_ref().is_none_or(|b| l < b.l) {
            best = Some(BoundReport {
                pass: l.is_finite(),
                k,
                l,
                worst_point: worst,
                worst_ratio: l,
                per_k: Vec::new(),
            });
        }
    }
    let mut report = best.expect("k grid is non-empty");
    report.per_k = per_k;
    Ok(report)
}

/// `sup_p h^p ||A^p x|| / M_p` together with where it was attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeurlingNorm {
    pub value: f64,
    pub argmax: usize,
    /// `h ||A|| < m_{p_max + 1}`, so the terms past the prefix only shrink.
    pub tail_decreasing: bool,
}

pub fn beurling_norm(
    op: &MatrixOperator,
    x: &CVector,
    h: f64,
    seq: &WeightSequence,
    p_max: usize,
) -> Result<BeurlingNorm> {
    if !(h > 0.0) {
        return Err(invalid(format!("h must be positive, got {h}")));
    }
    if p_max > seq.p_max() {
        return Err(invalid(format!(
            "p_max {p_max} exceeds the weight prefix {}",
            seq.p_max()
        )));
    }
    if x.len() != op.dim() {
        return Err(invalid("vector length does not match the operator"));
    }
    // Work with ln of each term so h^p / M_p never overflows.
    let mut v = x.clone();
    let mut best = f64::NEG_INFINITY;
    let mut argmax = 0;
    for p in 0..=p_max {
        if p > 0 {
            v = op.apply(&v);
        }
        let norm = v.norm();
        if norm == 0.0 {
            break;
        }
        let ln_term = norm.ln() + p as f64 * h.ln() - seq.log_m(p);
        if ln_term > best {
            best = ln_term;
            argmax = p;
        }
    }
    let next_m = if p_max < seq.p_max() {
        seq.m(p_max + 1)
    } else {
        seq.m(p_max)
    };
    Ok(BeurlingNorm {
        value: best.exp(),
        argmax,
        tail_decreasing: h * op.norm() < next_m,
    })
}

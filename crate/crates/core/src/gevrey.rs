//! Weight sequences `(M_p)`, their structural conditions, the associated
//! function `M(rho)` and the ultrapolynomial `omega(z) = prod (1 + i z / m_p)`.
//!
//! Everything is stored in log-space: `log_m[p] = ln M_p`, so prefixes of a
//! few thousand terms of `p!^s` stay finite.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// How quotients continue past the stored prefix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailLaw {
    /// `m_p = p^s` for every `p` (the Gevrey sequence `p!^s`).
    Gevrey { s: f64 },
    /// Nothing is known beyond `p_max`.
    PrefixOnly,
}

/// A weight sequence `M_0 = 1, M_1, ..., M_{p_max}` with its quotients.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSequence {
    log_m: Vec<f64>,
    quotients: Vec<f64>,
    tail: TailLaw,
    borderline: bool,
}

/// `M_p = p!^s`. `s = 1` is accepted but flagged as borderline since the
/// quotient series then diverges.
pub fn gevrey_sequence(s: f64, p_max: usize) -> Result<WeightSequence> {
    if p_max < 2 {
        return Err(invalid(format!("p_max must be at least 2, got {p_max}")));
    }
    if !(s >= 1.0) || !s.is_finite() {
        return Err(invalid(format!("Gevrey index must be >= 1, got {s}")));
    }
    let mut log_m = Vec::with_capacity(p_max + 1);
    let mut quotients = Vec::with_capacity(p_max);
    log_m.push(0.0);
    for p in 1..=p_max {
        let lq = s * (p as f64).ln();
        quotients.push((p as f64).powf(s));
        log_m.push(log_m[p - 1] + lq);
    }
    Ok(WeightSequence {
        log_m,
        quotients,
        tail: TailLaw::Gevrey { s },
        borderline: s == 1.0,
    })
}

impl WeightSequence {
    /// Builds a prefix-only sequence from `ln M_p`, `p = 0..=p_max`.
    pub fn from_log_values(log_m: Vec<f64>) -> Result<Self> {
        if log_m.len() < 3 {
            return Err(invalid("need at least M_0, M_1, M_2"));
        }
        if log_m[0] != 0.0 {
            return Err(invalid("M_0 must equal 1"));
        }
        if log_m.iter().any(|v| !v.is_finite()) {
            return Err(invalid("weights must be positive and finite"));
        }
        let quotients = log_m.windows(2).map(|w| (w[1] - w[0]).exp()).collect();
        Ok(Self {
            log_m,
            quotients,
            tail: TailLaw::PrefixOnly,
            borderline: false,
        })
    }

    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.iter().any(|&v| !(v > 0.0)) {
            return Err(invalid("weights must be positive"));
        }
        Self::from_log_values(values.iter().map(|v| v.ln()).collect())
    }

    pub fn p_max(&self) -> usize {
        self.log_m.len() - 1
    }

    /// `ln M_p` for `p <= p_max`.
    pub fn log_m(&self, p: usize) -> f64 {
        self.log_m[p]
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_m
    }

    /// `m_p = M_p / M_{p-1}` for `1 <= p <= p_max`.
    pub fn m(&self, p: usize) -> f64 {
        assert!(p >= 1, "quotients start at p = 1");
        self.quotients[p - 1]
    }

    pub fn quotients(&self) -> &[f64] {
        &self.quotients
    }

    pub fn tail_law(&self) -> TailLaw {
        self.tail
    }

    /// True for `p!^1`, where the quotient series diverges.
    pub fn is_borderline(&self) -> bool {
        self.borderline
    }

    /// `ln omega(z)` for use as a regularizer: exact infinite product under a
    /// Gevrey tail law, the full stored prefix otherwise.
    pub fn regularizer_ln(&self, z: Complex64) -> Complex64 {
        match self.tail {
            TailLaw::Gevrey { s } if s > 1.0 => gevrey_omega_ln(s, z),
            _ => prefix_omega_ln(&self.quotients, z),
        }
    }
}

/// Outcome of [`check_conditions`]. Every flag is judged on the stored prefix
/// plus an explicit tail extrapolation; the extrapolated pieces are reported.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub p_max: usize,
    pub m1_ok: bool,
    pub m2_ok: bool,
    pub m2_a: f64,
    pub m2_h: f64,
    /// `sum_{p=1}^{p_max} M_{p-1}/M_p`
    pub m3prime_sum: f64,
    /// extrapolated remainder of the same series
    pub m3prime_tail: f64,
    /// local power-law exponent of `m_p` fitted on the upper half of the prefix
    pub quotient_exponent: f64,
    pub m3prime_ok: bool,
    pub m3_sup: f64,
    pub m3_ok: bool,
}

impl ConditionReport {
    pub fn all_ok(&self) -> bool {
        self.m1_ok && self.m2_ok && self.m3prime_ok && self.m3_ok
    }

    /// `M.1 ok M.2 ok M.3' ok M.3 ok` style summary.
    pub fn summary(&self) -> String {
        let f = |b: bool| if b { "ok" } else { "FAIL" };
        format!(
            "M.1 {} M.2 {} M.3' {} M.3 {}",
            f(self.m1_ok),
            f(self.m2_ok),
            f(self.m3prime_ok),
            f(self.m3_ok)
        )
    }
}

/// `ln(M_p / min_q M_{p-q} M_q)` for `p = 0..=p_max`.
pub(crate) fn m2_log_ratios(seq: &WeightSequence) -> Vec<f64> {
    let lm = &seq.log_m;
    (0..lm.len())
        .map(|p| {
            let min = (0..=p)
                .map(|q| lm[p - q] + lm[q])
                .fold(f64::INFINITY, f64::min);
            lm[p] - min
        })
        .collect()
}

/// Checks (M.1), (M.2), (M.3)' and (M.3) on the stored prefix.
pub fn check_conditions(seq: &WeightSequence) -> ConditionReport {
    let lm = &seq.log_m;
    let pm = seq.p_max();

    let m1_ok = (1..pm).all(|p| {
        let slack = 1e-12 * (1.0 + lm[p].abs());
        2.0 * lm[p] <= lm[p - 1] + lm[p + 1] + slack
    });

    // (M.2): H is the largest one-step growth of M_p / min_q M_{p-q}M_q over
    // the upper half of the prefix; A absorbs the rest.
    let lr = m2_log_ratios(seq);
    let step = |p: usize| lr[p + 1] - lr[p];
    let half = pm / 2;
    let upper = (half..pm).map(step).fold(f64::NEG_INFINITY, f64::max);
    let ln_h = upper.max(0.0);
    let m2_h = ln_h.exp();
    let m2_a = lr
        .iter()
        .enumerate()
        .map(|(p, l)| l - p as f64 * ln_h)
        .fold(f64::NEG_INFINITY, f64::max)
        .exp();
    let quarter = (pm / 4).max(1);
    let second_q = (quarter..half.max(quarter + 1))
        .map(step)
        .fold(f64::NEG_INFINITY, f64::max);
    let last_q = (pm - quarter..pm)
        .map(step)
        .fold(f64::NEG_INFINITY, f64::max);
    let m2_ok = m2_h.is_finite() && m2_a.is_finite() && last_q <= second_q + 0.05f64.ln_1p();

    // (M.3)': partial sum of 1/m_p and a power-law tail.
    let inv: Vec<f64> = seq.quotients.iter().map(|m| 1.0 / m).collect();
    let m3prime_sum = inv.iter().sum::<f64>();
    let m_top = seq.m(pm);
    let m_mid = seq.m((pm / 2).max(1));
    let quotient_exponent = (m_top / m_mid).ln() / (pm as f64 / (pm / 2).max(1) as f64).ln();
    let tail = |from: usize| -> f64 {
        // sum_{q > from} 1/m_q, extrapolated with the fitted exponent
        let m_from = seq.m(from);
        if quotient_exponent > 1.0 {
            from as f64 / (m_from * (quotient_exponent - 1.0))
        } else {
            let q = seq.m(from - 1) / m_from;
            if q < 1.0 {
                q / (1.0 - q) / m_from
            } else {
                f64::INFINITY
            }
        }
    };
    let m3prime_tail = tail(pm);
    let m3prime_ok = quotient_exponent > 1.05 && m3prime_tail.is_finite();

    // (M.3): S_p = m_{p+1}/p * sum_{q > p} 1/m_q
    let mut suffix = vec![0.0; pm + 1];
    for p in (0..pm).rev() {
        suffix[p] = suffix[p + 1] + inv[p];
    }
    let s_values: Vec<f64> = (1..pm)
        .map(|p| seq.m(p + 1) / p as f64 * (suffix[p] + m3prime_tail))
        .collect();
    let m3_sup = s_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cut = s_values.len() * 3 / 4;
    let head_max = s_values[..cut.max(1)]
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let tail_max = s_values[cut..]
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let m3_ok = m3prime_ok && m3_sup.is_finite() && tail_max <= 1.25 * head_max;

    ConditionReport {
        p_max: pm,
        m1_ok,
        m2_ok,
        m2_a,
        m2_h,
        m3prime_sum,
        m3prime_tail,
        quotient_exponent,
        m3prime_ok,
        m3_sup,
        m3_ok,
    }
}

/// `M(rho)` together with where the supremum was attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociatedValue {
    pub value: f64,
    pub argmax: usize,
    /// The supremum sat at `p_max`; the true value may be larger.
    pub saturated: bool,
}

/// `M(rho) = sup_{0 <= p <= p_max} (p ln rho - ln M_p)`.
pub fn associated_function(seq: &WeightSequence, rho: f64) -> Result<AssociatedValue> {
    if !(rho > 0.0) {
        return Err(invalid(format!("rho must be positive, got {rho}")));
    }
    Ok(assoc_unchecked(seq, rho))
}

pub(crate) fn assoc_unchecked(seq: &WeightSequence, rho: f64) -> AssociatedValue {
    if rho <= 0.0 {
        return AssociatedValue {
            value: 0.0,
            argmax: 0,
            saturated: false,
        };
    }
    let lr = rho.ln();
    let mut best = 0.0;
    let mut argmax = 0;
    for (p, lm) in seq.log_m.iter().enumerate().skip(1) {
        let v = p as f64 * lr - lm;
        if v > best {
            best = v;
            argmax = p;
        }
    }
    AssociatedValue {
        value: best,
        argmax,
        saturated: argmax == seq.p_max(),
    }
}

/// Shorthand for the value of `M(rho)`, with `M(0) = 0`.
pub fn assoc(seq: &WeightSequence, rho: f64) -> f64 {
    assoc_unchecked(seq, rho).value
}

fn prefix_omega_ln(quotients: &[f64], z: Complex64) -> Complex64 {
    let iz = Complex64::new(-z.im, z.re);
    let mut acc = Complex64::new(0.0, 0.0);
    for &m in quotients {
        let f = Complex64::new(1.0, 0.0) + iz / m;
        if f.re == 0.0 && f.im == 0.0 {
            return Complex64::new(f64::NEG_INFINITY, 0.0);
        }
        acc += f.ln();
    }
    acc
}

/// `sum_{p >= n} p^{-sigma}` by Euler-Maclaurin, for `sigma > 1` and `n >= 8`.
fn hurwitz_tail(sigma: f64, n: f64) -> f64 {
    // Bernoulli numbers B_2 .. B_16 over (2j)!
    const B_OVER_FACT: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30_240.0,
        -1.0 / 1_209_600.0,
        1.0 / 47_900_160.0,
        -691.0 / 1_307_674_368_000.0,
        1.0 / 74_724_249_600.0,
        -3_617.0 / 10_670_622_842_880_000.0,
    ];
    let base = n.powf(-sigma);
    let mut sum = n * base / (sigma - 1.0) + 0.5 * base;
    // -f^{(2j-1)}(n) = sigma (sigma+1) ... (sigma+2j-2) n^{-sigma-2j+1}
    let mut rising = sigma;
    let mut power = base / n;
    for (j, b) in B_OVER_FACT.iter().enumerate() {
        let term = b * rising * power;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
        let k = (2 * j) as f64;
        rising *= (sigma + k + 1.0) * (sigma + k + 2.0);
        power /= n * n;
    }
    sum
}

/// `ln prod_{p >= 1} (1 + i z / p^s)` to machine precision, `s > 1`.
fn gevrey_omega_ln(s: f64, z: Complex64) -> Complex64 {
    let w = Complex64::new(-z.im, z.re);
    let r = w.norm();
    // Direct factors until |w| / p^s <= 0.05, then the log-series tail.
    let q = ((r / 0.05).powf(1.0 / s).ceil() as usize).max(16);
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 1..=q {
        let f = Complex64::new(1.0, 0.0) + w / (p as f64).powf(s);
        if f.re == 0.0 && f.im == 0.0 {
            return Complex64::new(f64::NEG_INFINITY, 0.0);
        }
        acc += f.ln();
    }
    if r == 0.0 {
        return acc;
    }
    // sum_{p > q} ln(1 + w p^{-s}) = sum_k (-1)^{k+1} w^k / k * Z(k s, q + 1)
    let n = (q + 1) as f64;
    let mut wk = Complex64::new(1.0, 0.0);
    for k in 1..=40 {
        wk *= w;
        let z_tail = hurwitz_tail(k as f64 * s, n);
        let term = wk * (z_tail / k as f64);
        if k % 2 == 1 {
            acc += term;
        } else {
            acc -= term;
        }
        if term.norm() < 1e-18 * (1.0 + acc.norm()) {
            break;
        }
    }
    acc
}

/// `ln omega(z)` with truncation controlled by `rel_tol`.
///
/// Under a Gevrey tail law the product is summed in closed form beyond a
/// cutoff and `rel_tol` is met to machine precision. For prefix-only
/// sequences the product stops at the first `P` whose log-tail bound
/// `|z| * sum_{p > P} 1/m_p` (the part beyond `p_max` estimated from the last
/// quotient ratio) is below `rel_tol`.
pub fn omega_ln(seq: &WeightSequence, z: Complex64, rel_tol: f64) -> Result<Complex64> {
    if let TailLaw::Gevrey { s } = seq.tail {
        if s > 1.0 {
            return Ok(gevrey_omega_ln(s, z));
        }
    }
    let pm = seq.p_max();
    let r = z.norm();
    let last = seq.m(pm);
    let ratio = seq.m(pm - 1) / last;
    let beyond = if ratio < 1.0 {
        ratio / (1.0 - ratio) / last
    } else {
        f64::INFINITY
    };
    // suffix[P] = sum_{P < p <= pm} 1/m_p
    let mut suffix = vec![0.0; pm + 1];
    for p in (1..=pm).rev() {
        suffix[p - 1] = suffix[p] + 1.0 / seq.m(p);
    }
    let cut = (0..=pm).find(|&p| r * (suffix[p] + beyond) < rel_tol);
    match cut {
        Some(p) => Ok(prefix_omega_ln(&seq.quotients[..p], z)),
        None => {
            // A vanishing factor still gives an exact zero.
            let direct = prefix_omega_ln(&seq.quotients, z);
            if direct.re == f64::NEG_INFINITY {
                Ok(direct)
            } else {
                Err(Error::NonConvergence(format!(
                    "omega tail bound {:e} exceeds rel_tol {rel_tol:e} at p_max = {pm}",
                    r * (suffix[pm] + beyond)
                )))
            }
        }
    }
}

/// `omega(z) = prod_{p >= 1} (1 + i z / m_p)`.
pub fn omega_eval(seq: &WeightSequence, z: Complex64, rel_tol: f64) -> Result<Complex64> {
    Ok(omega_ln(seq, z, rel_tol)?.exp())
}

/// Worst ratio `|omega(z)| / e^{M(|z|)}` over a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaBound {
    pub worst_ratio: f64,
    pub worst_point: Complex64,
}

/// Evaluates `min |omega(z)| / e^{M(|z|)}` over `grid`.
///
/// The lower bound `|omega(z)| >= e^{M(|z|)}` holds on the closed lower
/// half-plane `Im z <= 0`; `omega` vanishes at `z = i m_p`, so points above
/// the real axis can legitimately produce ratios below one.
pub fn omega_bound_check(seq: &WeightSequence, grid: &[Complex64]) -> Result<OmegaBound> {
    if grid.is_empty() {
        return Err(invalid("grid must be non-empty"));
    }
    let mut worst = OmegaBound {
        worst_ratio: f64::INFINITY,
        worst_point: grid[0],
    };
    for &z in grid {
        let ln_w = omega_ln(seq, z, 1e-12)?;
        let ratio = (ln_w.re - assoc(seq, z.norm())).exp();
        if ratio < worst.worst_ratio {
            worst = OmegaBound {
                worst_ratio: ratio,
                worst_point: z,
            };
        }
    }
    Ok(worst)
}

/// Fitted constants of `|a_alpha| <= C L^alpha / M_alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UltrapolyFit {
    pub c: f64,
    pub l: f64,
    /// A grid value of `L` below the ceiling attains the minimal `C`.
    pub beurling: bool,
    /// `(|a_alpha| M_alpha)^{1/alpha}` decays over the supplied range, the
    /// finite-data signature of "every `L` works".
    pub roumieu_trend: bool,
}

/// Grid of admissible `L`: `2^k / 8` for `k = -8..=64`.
pub fn ultrapoly_l_grid() -> Vec<f64> {
    (-8..=64).map(|k| 2f64.powi(k) / 8.0).collect()
}

/// Fits `(C, L)` in the coefficient bound over the fixed `L` grid.
///
/// Among all grid values of `L` attaining the smallest `C`, the smallest `L`
/// is returned.
pub fn ultrapoly_bound_fit(coeffs: &[Complex64], seq: &WeightSequence) -> Result<UltrapolyFit> {
    if coeffs.is_empty() {
        return Err(invalid("coefficient list is empty"));
    }
    if coeffs.len() > seq.p_max() + 1 {
        return Err(invalid(format!(
            "{} coefficients but the weight prefix stops at p = {}",
            coeffs.len(),
            seq.p_max()
        )));
    }
    if coeffs.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(invalid("coefficients must be finite"));
    }
    // ln(|a_alpha| M_alpha), skipping zeros
    let weighted: Vec<(usize, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm() > 0.0)
        .map(|(k, a)| (k, a.norm().ln() + seq.log_m(k)))
        .collect();
    let grid = ultrapoly_l_grid();
    if weighted.is_empty() {
        return Ok(UltrapolyFit {
            c: 0.0,
            l: grid[0],
            beurling: true,
            roumieu_trend: true,
        });
    }
    let ln_c = |l: f64| {
        let ll = l.ln();
        weighted
            .iter()
            .map(|&(k, w)| w - k as f64 * ll)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let values: Vec<f64> = grid.iter().map(|&l| ln_c(l)).collect();
    let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let idx = values
        .iter()
        .position(|&v| v <= best + 1e-9)
        .expect("minimum is attained");

    let roots: Vec<f64> = weighted
        .iter()
        .filter(|(k, _)| *k > 0)
        .map(|&(k, w)| w / k as f64)
        .collect();
    let roumieu_trend = if roots.len() >= 6 {
        let third = roots.len() / 3;
        let head = roots[..2 * third].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        roots[2 * third..].iter().all(|&r| r <= head - 2f64.ln())
    } else {
        false
    };

    Ok(UltrapolyFit {
        c: best.exp(),
        l: grid[idx],
        beurling: idx + 1 < grid.len(),
        roumieu_trend,
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
    fn gevrey_two_prefix_values() {
        let seq = gevrey_sequence(2.0, 4).unwrap();
        let m: Vec<f64> = (0..=4).map(|p| seq.log_m(p).exp()).collect();
        for (got, want) in m.iter().zip([1.0, 1.0, 4.0, 36.0, 576.0]) {
            assert!((got - want).abs() < 1e-12 * want);
        }
        assert_eq!(seq.m(1), 1.0);
        assert_eq!(seq.m(2), 4.0);
        assert_eq!(seq.m(3), 9.0);
    }

    #[test]
    fn short_prefix_rejected() {
        assert!(matches!(gevrey_sequence(2.0, 1), Err(Error::InvalidArgument(_))));
        assert!(gevrey_sequence(0.5, 10).is_err());
        assert!(gevrey_sequence(1.0, 10).unwrap().is_borderline());
    }

    #[test]
    fn log_values_match_quotient_products() {
        let seq = gevrey_sequence(1.7, 300).unwrap();
        assert_eq!(seq.log_m(0), 0.0);
        let mut prod_log = 0.0;
        for p in 1..=300 {
            prod_log += seq.m(p).ln();
            assert!(((seq.log_m(p) - prod_log) / prod_log.max(1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn gevrey_satisfies_all_conditions() {
        for &s in &[1.5, 2.0, 3.0] {
            let r = check_conditions(&gevrey_sequence(s, 200).unwrap());
            assert!(r.all_ok(), "s = {s}: {r:?}");
            assert!((r.m2_h - 2f64.powf(s)).abs() < 1e-9 * 2f64.powf(s));
        }
    }

    #[test]
    fn constant_sequence_fails_m3prime() {
        let seq = WeightSequence::from_values(&[1.0; 60]).unwrap();
        let r = check_conditions(&seq);
        assert!(r.m1_ok);
        assert!(!r.m3prime_ok);
        assert!(!r.m3_ok);
    }

    #[test]
    fn factorial_fails_m3prime() {
        let r = check_conditions(&gevrey_sequence(1.0, 200).unwrap());
        assert!(r.m1_ok && r.m2_ok);
        assert!(!r.m3prime_ok && !r.m3_ok);
    }

    #[test]
    fn superexponential_sequence_fails_m2() {
        let seq = WeightSequence::from_log_values((0..80).map(|p| (p * p) as f64).collect()).unwrap();
        let r = check_conditions(&seq);
        assert!(r.m1_ok);
        assert!(!r.m2_ok);
    }

    #[test]
    fn m2_fit_close_to_grid_optimum() {
        // Brute force: smallest H in {1.0, 1.1, ..., 16} for which
        // ln r_p - p ln H stops increasing over the upper half of the prefix.
        let seq = gevrey_sequence(2.0, 100).unwrap();
        let lm = seq.log_values();
        let ratio = |p: usize| {
            let mut min = f64::INFINITY;
            for q in 0..=p {
                min = min.min(lm[p - q] + lm[q]);
            }
            lm[p] - min
        };
        let brute = (10..=160)
            .map(|k| k as f64 / 10.0)
            .find(|h: &f64| {
                (50..100).all(|p| {
                    ratio(p + 1) - (p + 1) as f64 * h.ln() <= ratio(p) - p as f64 * h.ln() + 1e-9
                })
            })
            .unwrap();
        let fitted = check_conditions(&seq).m2_h;
        assert!(fitted <= 2.0 * brute && brute <= 2.0 * fitted, "{fitted} vs {brute}");
    }

    #[test]
    fn associated_function_of_factorial() {
        let seq = gevrey_sequence(1.0, 100).unwrap();
        for &rho in &[0.1, 0.5, 1.0] {
            assert_eq!(associated_function(&seq, rho).unwrap().value, 0.0);
        }
        // brute force with the factorial accumulated independently
        let e = std::f64::consts::E;
        let mut ln_fact = 0.0;
        let mut best: f64 = 0.0;
        for p in 1..=100 {
            ln_fact += (p as f64).ln();
            best = best.max(p as f64 * e.ln() - ln_fact);
        }
        let got = associated_function(&seq, e).unwrap();
        assert!((got.value - best).abs() < 1e-12);
        assert!((got.value - (2.0 - 2f64.ln())).abs() < 1e-12);
        assert_eq!(got.argmax, 2);
        assert!(!got.saturated);
        assert!(associated_function(&seq, 0.0).is_err());
    }

    #[test]
    fn saturation_is_flagged() {
        let seq = gevrey_sequence(2.0, 10).unwrap();
        assert!(associated_function(&seq, 1e6).unwrap().saturated);
    }

    #[test]
    fn omega_trivial_points() {
        let seq = gevrey_sequence(2.0, 200).unwrap();
        assert_eq!(omega_eval(&seq, c(0.0, 0.0), 1e-12).unwrap(), c(1.0, 0.0));
        let fact = gevrey_sequence(1.0, 50).unwrap();
        assert_eq!(omega_eval(&fact, c(0.0, 1.0), 1e-12).unwrap().norm(), 0.0);
    }

    /// prod (1 + w/p^2) = sinh(pi sqrt w) / (pi sqrt w)
    fn sinh_closed_form(z: Complex64) -> Complex64 {
        let w = c(0.0, 1.0) * z;
        let r = w.sqrt() * std::f64::consts::PI;
        r.sinh() / r
    }

    #[test]
    fn omega_gevrey_two_matches_closed_form() {
        let seq = gevrey_sequence(2.0, 200).unwrap();
        for &z in &[c(2.0, 0.0), c(-3.5, -1.0), c(0.3, -20.0), c(40.0, -7.0), c(-400.0, -0.25)] {
            let got = omega_eval(&seq, z, 1e-14).unwrap();
            let want = sinh_closed_form(z);
            assert!((got - want).norm() <= 1e-12 * want.norm(), "z = {z}: {got} vs {want}");
        }
    }

    #[test]
    fn omega_against_long_direct_product() {
        let seq = gevrey_sequence(2.0, 200).unwrap();
        let z = c(2.0, 0.0);
        let mut direct = c(1.0, 0.0);
        for p in 1..=5000 {
            direct *= c(1.0, 0.0) + c(0.0, 1.0) * z / (p * p) as f64;
        }
        let got = omega_eval(&seq, z, 1e-14).unwrap();
        // the 5000-factor product is itself truncated: |z| sum_{p>5000} p^-2
        let truncation = 2.0 * (1.0 / 5000.0);
        assert!((got - direct).norm() <= 1.01 * truncation * got.norm());
        // on an explicit 5000-term prefix the evaluator is the same product
        let prefix = WeightSequence::from_log_values(
            (0..=5000).map(|p| 2.0 * (1..=p).map(|q| (q as f64).ln()).sum::<f64>()).collect(),
        )
        .unwrap();
        let trunc = prefix_omega_ln(prefix.quotients(), z).exp();
        assert!((trunc - direct).norm() <= 1e-8 * direct.norm());
    }

    #[test]
    fn prefix_only_reports_non_convergence() {
        let mut log_m = vec![0.0];
        for p in 1..50 {
            log_m.push(log_m[p - 1] + 2.0 * (p as f64).ln());
        }
        let seq = WeightSequence::from_log_values(log_m).unwrap();
        assert!(matches!(omega_eval(&seq, c(2.0, 0.0), 1e-8), Err(Error::NonConvergence(_))));
        assert!(omega_eval(&seq, c(2.0, 0.0), 0.1).is_ok());
    }

    #[test]
    fn omega_lower_bound_on_lower_half_plane() {
        let seq = gevrey_sequence(2.0, 200).unwrap();
        let grid: Vec<Complex64> = (0..100)
            .map(|k| {
                let r = 0.5 * (k as f64 + 1.0);
                let th = -std::f64::consts::PI * (k as f64 * 0.618_033_988_75).fract();
                Complex64::from_polar(r, th)
            })
            .collect();
        let report = omega_bound_check(&seq, &grid).unwrap();
        assert!(report.worst_ratio >= 1.0 - 1e-6, "{report:?}");
        let zero = omega_bound_check(&seq, &[c(0.0, 0.0)]).unwrap();
        assert!((zero.worst_ratio - 1.0).abs() < 1e-15);
        let real: Vec<Complex64> = (1..20).map(|k| c(k as f64 / 20.0, 0.0)).collect();
        assert!(omega_bound_check(&seq, &real).unwrap().worst_ratio >= 1.0);
        assert!(omega_bound_check(&seq, &[]).is_err());
    }

    #[test]
    fn ultrapoly_fit_examples() {
        let seq = gevrey_sequence(2.0, 40).unwrap();
        let mut unit = vec![c(0.0, 0.0); 10];
        unit[0] = c(1.0, 0.0);
        let f = ultrapoly_bound_fit(&unit, &seq).unwrap();
        assert_eq!((f.c, f.l), (1.0, ultrapoly_l_grid()[0]));

        let recip: Vec<Complex64> = (0..30).map(|a| c((-seq.log_m(a)).exp(), 0.0)).collect();
        let f = ultrapoly_bound_fit(&recip, &seq).unwrap();
        assert!((f.c - 1.0).abs() < 1e-9);
        assert_eq!(f.l, 1.0);
    }

    /// Coefficients of prod_{p<=n} (1 + i z / m_p) by repeated convolution.
    fn truncated_omega_coeffs(seq: &WeightSequence, n: usize) -> Vec<Complex64> {
        let mut coeffs = vec![c(1.0, 0.0)];
        for p in 1..=n {
            let lin = c(0.0, 1.0 / seq.m(p));
            let mut next = vec![c(0.0, 0.0); coeffs.len() + 1];
            for (k, a) in coeffs.iter().enumerate() {
                next[k] += a;
                next[k + 1] += a * lin;
            }
            coeffs = next;
        }
        coeffs
    }

    #[test]
    fn truncated_omega_is_stably_ultrapolynomial() {
        let seq = gevrey_sequence(2.0, 40).unwrap();
        let fits: Vec<UltrapolyFit> = [10, 20, 30]
            .iter()
            .map(|&n| ultrapoly_bound_fit(&truncated_omega_coeffs(&seq, n), &seq).unwrap())
            .collect();
        for f in &fits {
            assert!(f.beurling);
            assert!(!f.roumieu_trend);
            assert!((f.c - 1.0).abs() < 1e-9);
        }
        assert_eq!(fits[1].l, fits[2].l);
        assert!(fits[0].l <= fits[2].l);
    }

    #[test]
    fn ultrapoly_rejects_overlong_input() {
        let seq = gevrey_sequence(2.0, 5).unwrap();
        assert!(ultrapoly_bound_fit(&[c(1.0, 0.0); 7], &seq).is_err());
        assert!(ultrapoly_bound_fit(&[], &seq).is_err());
    }

    proptest! {
        #[test]
        fn quotients_nondecreasing_under_m1(s in 1.0f64..4.0, p_max in 2usize..400) {
            let seq = gevrey_sequence(s, p_max).unwrap();
            prop_assert!(check_conditions(&seq).m1_ok);
            for p in 1..p_max {
                prop_assert!(seq.m(p) <= seq.m(p + 1));
            }
        }

        #[test]
        fn associated_function_monotone(s in 1.2f64..3.0, a in 0.01f64..500.0, b in 0.01f64..500.0) {
            let seq = gevrey_sequence(s, 200).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(assoc(&seq, lo) <= assoc(&seq, hi));
        }

        #[test]
        fn associated_function_dominates_each_term(s in 1.2f64..3.0, rho in 0.01f64..1e4) {
            let seq = gevrey_sequence(s, 150).unwrap();
            let m = assoc(&seq, rho);
            for p in 0..=150 {
                prop_assert!(m + seq.log_m(p) >= p as f64 * rho.ln() - 1e-9);
            }
        }

        #[test]
        fn omega_conjugate_symmetry(re in -60.0f64..60.0, im in -60.0f64..60.0) {
            let seq = gevrey_sequence(2.0, 200).unwrap();
            let z = c(re, im);
            let lhs = omega_eval(&seq, -z.conj(), 1e-14).unwrap();
            let rhs = omega_eval(&seq, z, 1e-14).unwrap().conj();
            prop_assert!((lhs - rhs).norm() <= 1e-10 * rhs.norm().max(1.0));
        }

        #[test]
        fn m3_implies_m3prime(s in 1.0f64..4.0) {
            let r = check_conditions(&gevrey_sequence(s, 120).unwrap());
            prop_assert!(!r.m3_ok || r.m3prime_ok);
        }
    }
}

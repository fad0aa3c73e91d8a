//! Dispatch from a [`RunConfig`] to the library.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;
use ultrasemi::fractional::{solve_acp_alpha, FracParams};
use ultrasemi::gevrey::{assoc, check_conditions, gevrey_sequence, omega_ln, WeightSequence};
use ultrasemi::io::{parse_matrix, parse_vector, probe_csv, table_csv, write_trajectory};
use ultrasemi::operator::{default_k_grid, half_plane_grid, verify_resolvent_bound, CVector, MatrixOperator};
use ultrasemi::semigroup::{
    choose_regularization_order, default_abscissa, gevrey_regularity_check, semigroup_property_check,
    solve_acp_with, AcpOptions, BromwichQuadrature,
};
use ultrasemi::testfn::gevrey_bump;
use ultrasemi::udsg::{
    check_convolution_identity, check_generator_identity, check_nondegeneracy, fujiwara_probe, MatrixUdsg,
    ProbeConfig,
};

use crate::config::{
    Branch, Group, OmegaAction, ProbeAction, RunConfig, SolveAction, VerifyAction, WeightsAction,
};

#[derive(Debug, Error)]
pub enum Failure {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    NonConvergence(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::NonConvergence(_) => 3,
        }
    }
}

impl From<ultrasemi::Error> for Failure {
    fn from(e: ultrasemi::Error) -> Self {
        use ultrasemi::Error as E;
        match e {
            E::NonConvergence(_) | E::DegenerateRegularizer { .. } => Failure::NonConvergence(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

/// What a command produced: a one-line summary, an optional CSV body and
/// whether the checked property held.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: String,
    pub csv: Option<String>,
    pub pass: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

type Res<T> = Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

fn read(path: &Path) -> Res<String> {
    std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_matrix(cfg: &RunConfig) -> Res<MatrixOperator> {
    let path = cfg.matrix.as_ref().ok_or_else(|| invalid("--matrix is required"))?;
    Ok(MatrixOperator::new(parse_matrix(&read(path)?)?)?)
}

/// `--x`, or the all-ones vector when `default_ones` allows it.
fn load_vector(cfg: &RunConfig, dim: usize, default_ones: bool) -> Res<CVector> {
    let x = match &cfg.x {
        Some(path) => parse_vector(&read(path)?)?,
        None if default_ones => CVector::from_element(dim, Complex64::new(1.0, 0.0)),
        None => return Err(invalid("--x is required")),
    };
    if x.len() != dim {
        return Err(invalid(format!("vector has {} entries, matrix dimension is {dim}", x.len())));
    }
    Ok(x)
}

fn sequence(cfg: &RunConfig, default_len: usize) -> Res<WeightSequence> {
    Ok(gevrey_sequence(cfg.s, cfg.pmax.unwrap_or(default_len))?)
}

fn grid(t0: f64, t1: f64, steps: usize) -> Res<Vec<f64>> {
    if !(t1 >= t0) {
        return Err(invalid(format!("t1 = {t1} is below t0 = {t0}")));
    }
    if steps == 1 {
        return Ok(vec![t0]);
    }
    let last = (steps - 1) as f64;
    Ok((0..steps).map(|k| t0 + (t1 - t0) * k as f64 / last).collect())
}

fn time_grid(cfg: &RunConfig, t1: f64, steps: usize) -> Res<Vec<f64>> {
    grid(cfg.t0.unwrap_or(0.0), cfg.t1.unwrap_or(t1), cfg.steps.unwrap_or(steps))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

pub fn dispatch(cfg: &RunConfig) -> Res<Outcome> {
    match cfg.command {
        Group::Weights { action } => match action {
            WeightsAction::Check => weights_check(cfg),
            WeightsAction::Assoc => weights_assoc(cfg),
        },
        Group::Omega { action } => match action {
            OmegaAction::Bound => omega_bound(cfg),
        },
        Group::Solve { action } => match action {
            SolveAction::Acp => solve_acp_cmd(cfg),
            SolveAction::Frac => solve_frac(cfg),
        },
        Group::Verify { action } => match action {
            VerifyAction::Resolvent => verify_resolvent(cfg),
            VerifyAction::Semigroup => verify_semigroup(cfg),
            VerifyAction::Axioms => verify_axioms(cfg),
            VerifyAction::Regularity => verify_regularity(cfg),
        },
        Group::Probe { action } => match action {
            ProbeAction::Fujiwara => probe_fujiwara(cfg),
        },
    }
}

fn weights_check(cfg: &RunConfig) -> Res<Outcome> {
    let seq = sequence(cfg, 200)?;
    let rep = check_conditions(&seq);
    let rows: Vec<Vec<f64>> = (1..=seq.p_max())
        .map(|p| vec![p as f64, seq.log_m(p), seq.m(p)])
        .collect();
    Ok(Outcome {
        summary: format!("weights check s={} pmax={} {}", cfg.s, seq.p_max(), rep.summary()),
        csv: Some(table_csv(&["p", "ln_M_p", "m_p"], &rows)),
        pass: rep.all_ok(),
    })
}

fn weights_assoc(cfg: &RunConfig) -> Res<Outcome> {
    let seq = sequence(cfg, 200)?;
    let rhos = grid(cfg.t0.unwrap_or(0.0), cfg.t1.unwrap_or(50.0), cfg.steps.unwrap_or(51))?;
    if rhos[0] < 0.0 {
        return Err(invalid("rho grid must be non-negative"));
    }
    let rows: Vec<Vec<f64>> = rhos.iter().map(|&r| vec![r, assoc(&seq, r)]).collect();
    let last = rows.last().map_or(0.0, |r| r[1]);
    Ok(Outcome {
        summary: format!("weights assoc s={} points={} M(rho_max)={last:.6e}", cfg.s, rows.len()),
        csv: Some(table_csv(&["rho", "M"], &rows)),
        pass: true,
    })
}

fn omega_bound(cfg: &RunConfig) -> Res<Outcome> {
    let seq = sequence(cfg, 200)?;
    let radius = cfg.t1.unwrap_or(50.0);
    let n = cfg.steps.unwrap_or(100);
    if !(radius > 0.0) {
        return Err(invalid("t1 (the radius) must be positive"));
    }
    // radii spread over (0, radius], angles cycling through [-pi, 0]
    let mut rows = Vec::with_capacity(n);
    let mut worst = f64::INFINITY;
    for k in 0..n {
        let r = radius * (k + 1) as f64 / n as f64;
        let theta = -std::f64::consts::PI * (k % 11) as f64 / 10.0;
        let z = Complex64::from_polar(r, theta);
        let ratio = (omega_ln(&seq, z, 1e-12)?.re - assoc(&seq, r)).exp();
        worst = worst.min(ratio);
        rows.push(vec![z.re, z.im, ratio]);
    }
    let pass = worst >= 1.0 - 1e-6;
    Ok(Outcome {
        summary: format!("omega bound s={} radius={radius} points={n} min_ratio={worst:.6e} {}", cfg.s, verdict(pass)),
        csv: Some(table_csv(&["z_re", "z_im", "ratio"], &rows)),
        pass,
    })
}

fn solve_acp_cmd(cfg: &RunConfig) -> Res<Outcome> {
    let op = load_matrix(cfg)?;
    let x = load_vector(cfg, op.dim(), false)?;
    let seq = sequence(cfg, 200)?;
    let times = time_grid(cfg, 1.0, 11)?;
    let opts = AcpOptions {
        abar: cfg.abar,
        k: 1.0,
        tol: cfg.tol,
    };
    let traj = solve_acp_with(&op, &seq, &x, &times, &opts)?;
    let last = traj.states.last().map_or(0.0, |u| u.norm());
    Ok(Outcome {
        summary: format!(
            "solve acp d={} n={} abar={} steps={} |u(t1)|={last:.6e} err={:.1e}{}",
            op.dim(),
            traj.meta.n,
            traj.meta.quad.abar,
            times.len(),
            traj.meta.error,
            if traj.meta.truncated { " truncated" } else { "" }
        ),
        csv: Some(write_trajectory(&traj)),
        pass: true,
    })
}

fn solve_frac(cfg: &RunConfig) -> Res<Outcome> {
    let alpha = cfg.alpha.ok_or_else(|| invalid("--alpha is required"))?;
    let op = load_matrix(cfg)?;
    let x = load_vector(cfg, op.dim(), false)?;
    let seq = sequence(cfg, 200)?;
    let times = time_grid(cfg, 1.0, 11)?;
    let params = FracParams::new(alpha, cfg.tol)?;
    let traj = solve_acp_alpha(&op, &seq, &params, &x, &times)?;
    let last = traj.states.last().map_or(0.0, |u| u.norm());
    Ok(Outcome {
        summary: format!(
            "solve frac alpha={alpha} d={} n={} steps={} |v(t1)|={last:.6e} err={:.1e}{}",
            op.dim(),
            traj.meta.n,
            times.len(),
            traj.meta.error,
            if traj.meta.truncated { " truncated" } else { "" }
        ),
        csv: Some(write_trajectory(&traj)),
        pass: true,
    })
}

fn verify_resolvent(cfg: &RunConfig) -> Res<Outcome> {
    let op = load_matrix(cfg)?;
    let seq = sequence(cfg, 200)?;
    let a_star = op.spectral_abscissa();
    let a = cfg.a.unwrap_or(a_star + 0.1);
    if a <= a_star {
        return Ok(Outcome {
            summary: format!("verify resolvent a={a} a*={a_star} fail: half-plane meets the spectrum"),
            csv: None,
            pass: false,
        });
    }
    let rep = verify_resolvent_bound(&op, a, &seq, &default_k_grid(), &half_plane_grid(a))?;
    let rows: Vec<Vec<f64>> = rep.per_k.iter().map(|&(k, l)| vec![k, l]).collect();
    Ok(Outcome {
        summary: format!(
            "verify resolvent a={a} a*={a_star} k={} L={:.6e} {}",
            rep.k,
            rep.l,
            verdict(rep.pass)
        ),
        csv: Some(table_csv(&["k", "L"], &rows)),
        pass: rep.pass,
    })
}

fn verify_semigroup(cfg: &RunConfig) -> Res<Outcome> {
    let op = load_matrix(cfg)?;
    let x = load_vector(cfg, op.dim(), true)?;
    let seq = sequence(cfg, 200)?;
    let abar = match cfg.abar {
        Some(a) => a,
        None => default_abscissa(op.spectral_abscissa(), &seq)?,
    };
    let n = choose_regularization_order(&op, &seq, abar, 1.0, cfg.tol)?;
    let quad = BromwichQuadrature::auto(&op, &seq, n, abar, cfg.tol)?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for t in [0.5, 1.0] {
        for s in [0.5, 1.0] {
            let r = semigroup_property_check(&op, &seq, n, &quad, t, s, &x)?;
            worst = worst.max(r);
            rows.push(vec![t, s, r]);
        }
    }
    let pass = worst <= 10.0 * quad.tol;
    Ok(Outcome {
        summary: format!("verify semigroup n={n} abar={abar} max_residual={worst:.3e} {}", verdict(pass)),
        csv: Some(table_csv(&["t", "s", "residual"], &rows)),
        pass,
    })
}

/// Bump pairs `((center, radius), (center, radius))` of the axiom suite.
const AXIOM_SUITE: [((f64, f64), (f64, f64)); 3] = [
    ((1.0, 0.5), (1.5, 0.5)),
    ((0.8, 0.3), (2.0, 0.8)),
    ((1.5, 1.0), (0.6, 0.4)),
];

fn verify_axioms(cfg: &RunConfig) -> Res<Outcome> {
    let op = load_matrix(cfg)?;
    let x = load_vector(cfg, op.dim(), true)?;
    let g = MatrixUdsg::new(op, cfg.tol)?;
    // bumps of index strictly between 1 and s
    let index = 0.5 * (1.0 + cfg.s);
    let bound = 20.0 * cfg.tol;
    let mut rows = Vec::new();
    let mut pass = true;
    for (i, &((c1, r1), (c2, r2))) in AXIOM_SUITE.iter().enumerate() {
        let phi = gevrey_bump(index, c1, r1)?;
        let psi = gevrey_bump(index, c2, r2)?;
        let conv = check_convolution_identity(&g, &phi, &psi)?;
        let gen = check_generator_identity(&g, &phi, &x)?;
        pass &= conv <= bound && gen <= bound;
        rows.push(vec![i as f64, conv, gen]);
    }
    let (nullity, rank) = check_nondegeneracy(&g, &gevrey_bump(index, 0.35, 0.25)?)?;
    pass &= nullity == 0;
    let conv = rows.iter().map(|r| r[1]).fold(0.0, f64::max);
    let gen = rows.iter().map(|r| r[2]).fold(0.0, f64::max);
    Ok(Outcome {
        summary: format!(
            "verify axioms convolution={conv:.3e} generator={gen:.3e} nullity={nullity} rank={rank} {}",
            verdict(pass)
        ),
        csv: Some(table_csv(&["pair", "convolution_residual", "generator_residual"], &rows)),
        pass,
    })
}

fn verify_regularity(cfg: &RunConfig) -> Res<Outcome> {
    let op = load_matrix(cfg)?;
    let x = load_vector(cfg, op.dim(), true)?;
    let p_max = cfg.pmax.unwrap_or(40);
    let seq = gevrey_sequence(cfg.s, p_max.max(200))?;
    let times = time_grid(cfg, 3.0, 31)?;
    let rep = gevrey_regularity_check(&op, &seq, &x, cfg.h, &times, p_max, cfg.abar, cfg.tol)?;
    let rows: Vec<Vec<f64>> = rep
        .rows
        .iter()
        .map(|r| vec![r.t, r.sup_value, r.rhs_bound_shape])
        .collect();
    let pass = rep.c_fit.is_finite();
    Ok(Outcome {
        summary: format!("verify regularity h={} abar={} c_fit={:.6e} {}", cfg.h, rep.abar, rep.c_fit, verdict(pass)),
        csv: Some(table_csv(&["t", "sup_value", "rhs_bound_shape"], &rows)),
        pass,
    })
}

fn probe_fujiwara(cfg: &RunConfig) -> Res<Outcome> {
    let op = load_matrix(cfg)?;
    let g = MatrixUdsg::new(op, 1e-10)?;
    let a0 = cfg.a0.unwrap_or(g.exponential_order());
    let a = cfg.a.unwrap_or(a0 + 1.0);
    let alpha_max = cfg.pmax.unwrap_or(8);
    let seq = gevrey_sequence(cfg.s, alpha_max.max(60))?;
    let k = (cfg.t0.unwrap_or(0.5), cfg.t1.unwrap_or(2.5));
    let mut pc = ProbeConfig::beurling(cfg.hprime[0], a0, a, k, cfg.pairs, alpha_max, cfg.seed);
    if cfg.branch == Branch::Roumieu {
        pc.branch = ultrasemi::udsg::Branch::Roumieu {
            h_grid: cfg.hprime.clone(),
        };
    }
    let rep = fujiwara_probe(&g, &seq, &pc)?;
    let pass = rep.rows.iter().all(|r| r.ratio.is_finite());
    Ok(Outcome {
        summary: format!(
            "probe fujiwara branch={} pairs={} seed={} hprime={} C_hat={:.6e} {}",
            cfg.branch,
            cfg.pairs,
            cfg.seed,
            rep.h_prime,
            rep.c_hat,
            verdict(pass)
        ),
        csv: Some(probe_csv(&rep)),
        pass,
    })
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, body: &str) -> Res<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| invalid(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(body.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_hits_both_ends() {
        let g = grid(0.0, 1.0, 11).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[10], 1.0);
        assert_eq!(grid(2.0, 2.0, 1).unwrap(), vec![2.0]);
        assert!(grid(1.0, 0.0, 3).is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, "a\n").unwrap();
        write_atomic(&p, "b\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "b\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(write_atomic(&dir.path().join("missing/out.csv"), "x").is_err());
    }
}

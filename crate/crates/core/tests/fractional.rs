use num_complex::Complex64;
use ultrasemi::fractional::{caputo_derivative, ml_real, solve_acp_alpha, wright, wright_eval, FracParams, Method};
use ultrasemi::gevrey::gevrey_sequence;
use ultrasemi::operator::{CVector, MatrixOperator};
use ultrasemi::quad::{gauss_kronrod_pieces, GkOptions};
use ultrasemi::special::gamma;

fn half_line(f: impl Fn(f64) -> f64, t_end: usize) -> f64 {
    let pts: Vec<f64> = (0..=t_end).map(|k| k as f64).collect();
    let r = gauss_kronrod_pieces(|t: f64| f(t), &pts, GkOptions::new(1e-13, 1e-13));
    assert!(r.converged);
    r.value
}

#[test]
fn wright_density_moments_and_transform() {
    for (alpha, t_end) in [(0.3, 40), (0.5, 20), (0.8, 8)] {
        let phi = |t: f64| wright(alpha, t).unwrap();
        assert!((half_line(phi, t_end) - 1.0).abs() < 1e-6, "mass, alpha {alpha}");
        let m1 = half_line(|t| t * phi(t), t_end);
        assert!((m1 - 1.0 / gamma(1.0 + alpha)).abs() < 1e-6, "moment, alpha {alpha}");
        for lambda in [0.5, 1.0, 2.0] {
            let lhs = half_line(|t| (-lambda * t).exp() * phi(t), t_end);
            assert!((lhs - ml_real(alpha, -lambda).unwrap()).abs() < 1e-6);
        }
    }
}

#[test]
fn wright_nonnegative_on_log_grid() {
    for alpha in [0.1, 0.3, 0.5, 0.8, 0.95] {
        for k in -40..=20 {
            let t = 10f64.powf(k as f64 / 10.0);
            assert!(wright(alpha, t).unwrap() >= -1e-10, "alpha {alpha}, t {t}");
        }
    }
}

#[test]
fn wright_switches_route_for_large_arguments() {
    assert_eq!(wright_eval(0.5, 0.5).unwrap().method, Method::Series);
    assert_eq!(wright_eval(0.5, 30.0).unwrap().method, Method::Contour);
}

#[test]
fn scalar_subordination_matches_eigenfunction() {
    let seq = gevrey_sequence(2.0, 200).unwrap();
    let times: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
    let x = CVector::from_element(1, Complex64::new(1.0, 0.0));
    for (alpha, mu) in [(0.5, -1.0), (0.7, -0.3)] {
        let op = MatrixOperator::diagonal_real(&[mu]).unwrap();
        let traj = solve_acp_alpha(&op, &seq, &FracParams::new(alpha, 1e-8).unwrap(), &x, &times).unwrap();
        for (&t, v) in times.iter().zip(&traj.states) {
            let exact = ml_real(alpha, mu * t.powf(alpha)).unwrap();
            assert!((v[0].re - exact).abs() < 1e-5 && v[0].im.abs() < 1e-5, "alpha {alpha}, t {t}");
        }
    }
}

/// Max of `|D^alpha v - A v|` over `t >= 0.25` for the computed solution on `n` steps of `[0, 1]`.
fn caputo_residual(n: usize) -> f64 {
    let op = MatrixOperator::diagonal_real(&[-1.0, -2.0]).unwrap();
    let seq = gevrey_sequence(2.0, 200).unwrap();
    let x = CVector::from_element(2, Complex64::new(1.0, 0.0));
    let times: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let traj = solve_acp_alpha(&op, &seq, &FracParams::new(0.5, 1e-9).unwrap(), &x, &times).unwrap();
    let d = caputo_derivative(&times, &traj.states, 0.5).unwrap();
    times[1..]
        .iter()
        .zip(d.iter().zip(&traj.states[1..]))
        .filter(|(t, _)| **t >= 0.25)
        .map(|(_, (dv, v))| (dv - op.apply(v)).norm())
        .fold(0.0, f64::max)
}

#[test]
fn caputo_residual_of_solution_shrinks_at_first_order() {
    let e1 = caputo_residual(40);
    let e2 = caputo_residual(80);
    let e3 = caputo_residual(160);
    assert!((e1 / e2).log2() >= 1.0, "{e1:e} {e2:e}");
    assert!((e2 / e3).log2() >= 1.0, "{e2:e} {e3:e}");
}

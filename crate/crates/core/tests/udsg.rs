use num_complex::Complex64;
use ultrasemi::gevrey::gevrey_sequence;
use ultrasemi::operator::{CVector, MatrixOperator};
use ultrasemi::testfn::gevrey_bump;
use ultrasemi::udsg::{check_generator_identity, fujiwara_probe, udsg_apply, Branch, MatrixUdsg, ProbeConfig};

fn udsg(rows: &[&[f64]]) -> MatrixUdsg {
    MatrixUdsg::new(MatrixOperator::from_real_rows(rows).unwrap(), 1e-10).unwrap()
}

#[test]
fn vanishes_left_of_origin() {
    let g = udsg(&[&[0.5, 1.0], &[-1.0, 0.5]]);
    for (c, r) in [(-0.5, 0.4), (-2.0, 1.9), (-0.11, 0.01)] {
        let m = udsg_apply(&g, &gevrey_bump(1.5, c, r).unwrap()).unwrap();
        assert!(m.iter().all(|z| z.norm() <= 1e-12));
    }
}

#[test]
fn linear_in_the_test_function() {
    let g = udsg(&[&[-1.0, 0.3], &[0.0, -0.5]]);
    let phi = gevrey_bump(1.5, 1.0, 0.6).unwrap();
    let psi = gevrey_bump(1.5, 1.3, 0.4).unwrap();
    let sum = udsg_apply(&g, &phi.sum(&psi.scaled(2.0))).unwrap();
    let parts = udsg_apply(&g, &phi).unwrap() + udsg_apply(&g, &psi).unwrap() * Complex64::new(2.0, 0.0);
    assert!((sum - parts).norm() < 1e-10);
}

#[test]
fn generator_identity_zero_vector() {
    let g = udsg(&[&[-1.0, 0.0], &[0.0, -2.0]]);
    let phi = gevrey_bump(1.5, 1.0, 0.5).unwrap();
    let x = CVector::zeros(2);
    assert_eq!(check_generator_identity(&g, &phi, &x).unwrap(), 0.0);
}

#[test]
fn c_hat_monotone_in_pair_count() {
    let g = udsg(&[&[0.0]]);
    let seq = gevrey_sequence(2.0, 60).unwrap();
    let mut last = 0.0;
    for pairs in [8, 16, 32, 64] {
        let cfg = ProbeConfig::beurling(1.0, 0.0, 1.0, (0.5, 2.5), pairs, 8, 42);
        let rep = fujiwara_probe(&g, &seq, &cfg).unwrap();
        assert!(rep.rows.iter().all(|r| r.ratio.is_finite()));
        assert!(rep.c_hat >= last);
        last = rep.c_hat;
    }
}

#[test]
fn zero_generator_probe_is_stable() {
    let g = udsg(&[&[0.0]]);
    let seq = gevrey_sequence(2.0, 60).unwrap();
    let run = |pairs| {
        let cfg = ProbeConfig::beurling(1.0, 0.0, 1.0, (0.5, 2.5), pairs, 8, 42);
        fujiwara_probe(&g, &seq, &cfg).unwrap().c_hat
    };
    let (a, b) = (run(64), run(128));
    assert!((b / a - 1.0).abs() <= 0.2, "{a} {b}");
}

#[test]
fn roumieu_sweep_covers_grid() {
    let g = udsg(&[&[-1.0]]);
    let seq = gevrey_sequence(2.0, 60).unwrap();
    let mut cfg = ProbeConfig::beurling(1.0, 0.0, 1.0, (0.5, 2.5), 16, 8, 3);
    cfg.branch = Branch::Roumieu {
        h_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0],
    };
    let rep = fujiwara_probe(&g, &seq, &cfg).unwrap();
    assert_eq!(rep.sweep.len(), 5);
    assert!(rep.sweep.iter().all(|(_, c)| c.is_finite() && *c > 0.0));
}

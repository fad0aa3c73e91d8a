use std::path::Path;
use std::process::Command;

use ultrasemi::fractional::ml_real;
use ultrasemi::io::parse_trajectory_csv;

fn run(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ultrasemi"))
        .args(args)
        .current_dir(dir)
        .env_remove("ULTRASEMI_THREADS")
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("diag12.txt"), "-1 0\n0 -2\n").unwrap();
    std::fs::write(dir.path().join("ones.txt"), "1\n1\n").unwrap();
    dir
}

#[test]
fn weights_check_summary() {
    let dir = setup();
    let (code, out) = run(&["weights", "check", "--s", "2", "--pmax", "200"], dir.path());
    assert_eq!(code, 0);
    assert!(out.contains("M.1 ok M.2 ok M.3' ok M.3 ok"), "{out}");
}

#[test]
fn solve_frac_matches_series_value() {
    let dir = setup();
    let args = [
        "solve", "frac", "--alpha", "0.5", "--matrix", "diag12.txt", "--x", "ones.txt", "--t1", "2", "--steps", "21",
        "--out", "v.csv",
    ];
    let (code, _) = run(&args, dir.path());
    assert_eq!(code, 0);
    let (times, states) = parse_trajectory_csv(&std::fs::read_to_string(dir.path().join("v.csv")).unwrap()).unwrap();
    assert_eq!(times.len(), 21);
    assert_eq!(times[10], 1.0);
    assert!((states[10][0].re - ml_real(0.5, -1.0).unwrap()).abs() < 1e-5);
}

#[test]
fn solve_acp_first_row_is_x() {
    let dir = setup();
    let args = ["solve", "acp", "--matrix", "diag12.txt", "--x", "ones.txt", "--t1", "5", "--steps", "101", "--out", "u.csv"];
    assert_eq!(run(&args, dir.path()).0, 0);
    let text = std::fs::read_to_string(dir.path().join("u.csv")).unwrap();
    let (times, states) = parse_trajectory_csv(&text).unwrap();
    assert_eq!(times[0], 0.0);
    assert!((states[0][0].re - 1.0).abs() < 1e-8 && (states[0][1].re - 1.0).abs() < 1e-8);
    assert!(text.ends_with('\n') && !text.contains('\r'));
}

#[test]
fn exit_codes() {
    let dir = setup();
    let p = dir.path();
    assert_eq!(run(&["solve", "frac", "--alpha", "1.5", "--matrix", "diag12.txt", "--x", "ones.txt"], p).0, 2);
    assert_eq!(run(&["weights", "check", "--bogus"], p).0, 2);
    assert_eq!(run(&["solve", "acp", "--matrix", "missing.txt", "--x", "ones.txt"], p).0, 2);
    assert_eq!(run(&["verify", "resolvent", "--matrix", "diag12.txt", "--a", "-1.1"], p).0, 1);
    assert_eq!(run(&["verify", "resolvent", "--matrix", "diag12.txt", "--a", "-0.9"], p).0, 0);
    // no contour exists when the spectrum reaches m_1 = 1
    std::fs::write(p.join("big.txt"), "2\n").unwrap();
    std::fs::write(p.join("one.txt"), "1\n").unwrap();
    assert_eq!(run(&["solve", "acp", "--matrix", "big.txt", "--x", "one.txt", "--out", "bad.csv"], p).0, 2);
    assert!(!p.join("bad.csv").exists());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(p.join("run.cfg"), "# probe settings\nmatrix = diag12.txt\npairs = 4\nseed = 9\ntol=1e-6\n").unwrap();
    std::fs::write(p.join("d1.txt"), "-1\n").unwrap();
    let (code, out) = run(&["probe", "fujiwara", "--config", "run.cfg", "--matrix", "d1.txt", "--seed", "11"], p);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("pairs=4 seed=11"), "{out}");
    std::fs::write(p.join("bad.cfg"), "nonsense = 3\n").unwrap();
    assert_eq!(run(&["weights", "check", "--config", "bad.cfg"], p).0, 2);
}

#[test]
fn verify_commands_pass_on_stable_diagonal() {
    let dir = setup();
    for action in ["semigroup", "axioms", "regularity"] {
        let (code, out) = run(&["verify", action, "--matrix", "diag12.txt"], dir.path());
        assert_eq!(code, 0, "{action}: {out}");
        assert!(out.trim_end().ends_with("pass"), "{out}");
    }
    assert_eq!(run(&["omega", "bound"], dir.path()).0, 0);
}

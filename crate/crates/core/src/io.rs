//! Text formats: matrix and vector files, trajectory and probe CSV.
//!
//! Matrix files hold one row per line with whitespace-separated entries,
//! each `a`, `a+bi` or `a-bi`. Vector files use the same entry syntax, one or
//! more entries per line. Blank lines and lines starting with `#` are skipped.
//! Reals in CSV output carry 17 significant digits, so parsing them back is
//! bit-exact.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::{CMatrix, CVector};
use crate::semigroup::Trajectory;
use crate::udsg::ProbeReport;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_real(s: &str) -> Option<f64> {
    let v: f64 = s.parse().ok()?;
    v.is_finite().then_some(v)
}

/// Parses `a`, `bi`, `a+bi` or `a-bi`.
pub fn parse_complex(token: &str) -> Option<Complex64> {
    let Some(body) = token.strip_suffix('i') else {
        return parse_real(token).map(|re| Complex64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    // split at the last sign that is neither leading nor an exponent sign
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    match split {
        Some(k) => {
            let re = parse_real(&body[..k])?;
            let im = match &body[k..] {
                "+" => 1.0,
                "-" => -1.0,
                s => parse_real(s)?,
            };
            Some(Complex64::new(re, im))
        }
        None => {
            let im = match body {
                "" | "+" => 1.0,
                "-" => -1.0,
                s => parse_real(s)?,
            };
            Some(Complex64::new(0.0, im))
        }
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_row(line: usize, l: &str) -> Result<Vec<Complex64>> {
    l.split_whitespace()
        .map(|tok| parse_complex(tok).ok_or_else(|| parse_err(line, format!("bad entry '{tok}'"))))
        .collect()
}

pub fn parse_matrix(text: &str) -> Result<CMatrix> {
    let mut rows = Vec::new();
    for (line, l) in content_lines(text) {
        let row = parse_row(line, l)?;
        if let Some(first) = rows.first().map(|r: &Vec<Complex64>| r.len()) {
            if row.len() != first {
                return Err(parse_err(line, format!("expected {first} entries, found {}", row.len())));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(parse_err(0, "empty matrix"));
    }
    if rows[0].len() != n {
        return Err(parse_err(0, format!("matrix is {n}x{}, expected square", rows[0].len())));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn parse_vector(text: &str) -> Result<CVector> {
    let mut entries = Vec::new();
    for (line, l) in content_lines(text) {
        entries.extend(parse_row(line, l)?);
    }
    if entries.is_empty() {
        return Err(parse_err(0, "empty vector"));
    }
    Ok(CVector::from_vec(entries))
}

/// 17 significant digits.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_header(dim: usize) -> String {
    let mut h = String::from("t");
    for k in 1..=dim {
        h.push_str(&format!(",re_{k},im_{k}"));
    }
    h
}

/// Header plus one row per time.
pub fn trajectory_csv(times: &[f64], states: &[CVector], dim: usize) -> String {
    let mut out = trajectory_header(dim);
    out.push('\n');
    for (t, u) in times.iter().zip(states) {
        out.push_str(&format_real(*t));
        for z in u.iter() {
            out.push(',');
            out.push_str(&format_real(z.re));
            out.push(',');
            out.push_str(&format_real(z.im));
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory(traj: &Trajectory) -> String {
    trajectory_csv(&traj.times, &traj.states, traj.meta.preimage.len())
}

/// Inverse of [`trajectory_csv`].
pub fn parse_trajectory_csv(text: &str) -> Result<(Vec<f64>, Vec<CVector>)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let cols = header.split(',').count();
    if cols % 2 == 0 || !header.starts_with('t') {
        return Err(parse_err(1, "header must be t,re_1,im_1,..."));
    }
    let dim = (cols - 1) / 2;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (i, l) in lines {
        let vals = l
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|_| parse_err(i + 1, format!("bad number '{s}'"))))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != cols {
            return Err(parse_err(i + 1, format!("expected {cols} columns, found {}", vals.len())));
        }
        times.push(vals[0]);
        states.push(CVector::from_fn(dim, |k, _| Complex64::new(vals[1 + 2 * k], vals[2 + 2 * k])));
    }
    Ok((times, states))
}

pub fn probe_csv(report: &ProbeReport) -> String {
    let mut out = String::from("pair_id,ratio,phi_center,phi_radius,psi_center,psi_radius\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.pair_id,
            format_real(r.ratio),
            format_real(r.phi_center),
            format_real(r.phi_radius),
            format_real(r.psi_center),
            format_real(r.psi_radius)
        ));
    }
    out
}

/// Generic table with a header row and real-valued cells.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| format_real(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn complex_tokens() {
        assert_eq!(parse_complex("1.5"), Some(c(1.5, 0.0)));
        assert_eq!(parse_complex("-2"), Some(c(-2.0, 0.0)));
        assert_eq!(parse_complex("1+2i"), Some(c(1.0, 2.0)));
        assert_eq!(parse_complex("1-2i"), Some(c(1.0, -2.0)));
        assert_eq!(parse_complex("-1e-3+2.5E+2i"), Some(c(-1e-3, 250.0)));
        assert_eq!(parse_complex("3i"), Some(c(0.0, 3.0)));
        assert_eq!(parse_complex("-i"), Some(c(0.0, -1.0)));
        assert_eq!(parse_complex("2-i"), Some(c(2.0, -1.0)));
        assert_eq!(parse_complex("1e5i"), Some(c(0.0, 1e5)));
        assert_eq!(parse_complex("abc"), None);
        assert_eq!(parse_complex("1+2"), None);
        assert_eq!(parse_complex("nan"), None);
    }

    #[test]
    fn matrix_and_vector_files() {
        let m = parse_matrix("# A\n-1 0\n\n0 -2+1i\n").unwrap();
        assert_eq!(m[(1, 1)], c(-2.0, 1.0));
        assert_eq!(m.nrows(), 2);
        assert!(matches!(parse_matrix("1 2\n3\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_matrix("1 2\n").is_err());
        assert!(parse_matrix("").is_err());
        let v = parse_vector("1\n1-1i\n").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(parse_vector("1 2 3").unwrap().len(), 3);
    }

    #[test]
    fn empty_trajectory_is_header_only() {
        assert_eq!(trajectory_csv(&[], &[], 2), "t,re_1,im_1,re_2,im_2\n");
        let (t, s) = parse_trajectory_csv("t,re_1,im_1\n").unwrap();
        assert!(t.is_empty() && s.is_empty());
    }

    #[test]
    fn table_layout() {
        let s = table_csv(&["a", "b"], &[vec![1.0, 0.5]]);
        assert_eq!(s, "a,b\n1.0000000000000000e0,5.0000000000000000e-1\n");
    }

    proptest! {
        #[test]
        fn trajectory_round_trip(vals in prop::collection::vec(-1e300f64..1e300, 1..12)) {
            let states: Vec<CVector> = vals
                .chunks(2)
                .map(|ch| CVector::from_element(1, c(ch[0], *ch.last().unwrap())))
                .collect();
            let times: Vec<f64> = (0..states.len()).map(|k| k as f64 / 3.0).collect();
            let text = trajectory_csv(&times, &states, 1);
            let (t2, s2) = parse_trajectory_csv(&text).unwrap();
            prop_assert_eq!(t2, times);
            prop_assert_eq!(s2, states);
        }

        #[test]
        fn complex_token_round_trip(re in -1e10f64..1e10, im in -1e10f64..1e10) {
            let tok = format!("{}{:+}i", format_real(re), im);
            prop_assert_eq!(parse_complex(&tok), Some(c(re, im)));
        }
    }
}

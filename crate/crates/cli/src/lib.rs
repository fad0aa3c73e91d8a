//! Command-line front-end: `ultrasemi <group> <action> [flags]`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use clap::Parser;

/// Parses `args`, runs the command and returns the process exit code:
/// 0 success, 1 failed check, 2 invalid input, 3 no convergence.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match config::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let env_threads = std::env::var("ULTRASEMI_THREADS").ok();
    let cfg = match config::resolve(cli, env_threads.as_deref()) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    if let Some(n) = cfg.threads {
        // fails only when a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let outcome = match commands::dispatch(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if let (Some(path), Some(csv)) = (&cfg.out, &outcome.csv) {
        if let Err(e) = commands::write_atomic(path, csv) {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    }
    println!("{}", outcome.summary);
    outcome.exit_code()
}

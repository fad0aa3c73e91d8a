//! Flag grammar, config files and the merge `defaults < file < flags`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Beurling,
    Roumieu,
}

impl FromStr for Branch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "beurling" => Ok(Branch::Beurling),
            "roumieu" => Ok(Branch::Roumieu),
            _ => Err(format!("unknown branch '{s}', expected beurling or roumieu")),
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Beurling => "beurling",
            Branch::Roumieu => "roumieu",
        })
    }
}

/// Comma-separated list of positive reals, e.g. `0.5,1,2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealList(pub Vec<f64>);

impl FromStr for RealList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad number '{v}'")))
            .collect::<Result<Vec<f64>, String>>()
            .map(RealList)
    }
}

macro_rules! flags {
    ($($field:ident: $ty:ty => $key:literal, $help:literal;)*) => {
        /// Every option, all optional so config files can fill the gaps.
        #[derive(Debug, Clone, Default, Args)]
        pub struct Flags {
            $(
                #[arg(long = $key, global = true, allow_negative_numbers = true, help = $help)]
                pub $field: Option<$ty>,
            )*
        }

        impl Flags {
            /// Sets one `key=value` pair from a config file.
            fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
                match key {
                    $(
                        $key => {
                            let v = value
                                .parse::<$ty>()
                                .map_err(|e| format!("bad value for {key}: {e}"))?;
                            self.$field = Some(v);
                            Ok(())
                        }
                    )*
                    _ => Err(format!("unknown config key '{key}'")),
                }
            }

            /// Values present in `over` win.
            fn overlay(self, over: Flags) -> Flags {
                Flags {
                    $($field: over.$field.or(self.$field),)*
                }
            }
        }
    };
}

flags! {
    matrix: PathBuf => "matrix", "Matrix file, one row per line";
    x: PathBuf => "x", "Initial vector file";
    out: PathBuf => "out", "CSV output path";
    s: f64 => "s", "Gevrey index of M_p = p!^s [default: 2]";
    alpha: f64 => "alpha", "Fractional order in (0, 1)";
    h: f64 => "h", "Scale h of the derivative-growth check [default: 1]";
    hprime: RealList => "hprime", "h' of the probe; a comma list for the Roumieu sweep [default: 1]";
    a: f64 => "a", "Half-plane abscissa or probe weight";
    a0: f64 => "a0", "Exponential order bound of the probe";
    abar: f64 => "abar", "Bromwich contour abscissa";
    tol: f64 => "tol", "Target accuracy [default: 1e-8]";
    t0: f64 => "t0", "Start of the time grid, rho grid or probe interval";
    t1: f64 => "t1", "End of the time grid, rho grid or probe interval";
    steps: usize => "steps", "Number of grid points, both ends included";
    pmax: usize => "pmax", "Largest index p of the weight sequence or derivative lattice";
    pairs: usize => "pairs", "Sampled test-function pairs [default: 64]";
    seed: u64 => "seed", "Sampler seed [default: 42]";
    branch: Branch => "branch", "beurling or roumieu [default: beurling]";
    threads: usize => "threads", "Worker threads; falls back to ULTRASEMI_THREADS";
}

#[derive(Debug, Parser)]
#[command(name = "ultrasemi", version, about = "Ultradistribution semigroups of matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub group: Group,

    #[command(flatten)]
    pub flags: Flags,

    /// key=value file; flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Group {
    /// Weight sequences M_p = p!^s
    Weights {
        #[command(subcommand)]
        action: WeightsAction,
    },
    /// The ultrapolynomial omega
    Omega {
        #[command(subcommand)]
        action: OmegaAction,
    },
    /// Cauchy problems
    Solve {
        #[command(subcommand)]
        action: SolveAction,
    },
    /// Bounds and identities on a matrix
    Verify {
        #[command(subcommand)]
        action: VerifyAction,
    },
    /// Sampled convolution estimate
    Probe {
        #[command(subcommand)]
        action: ProbeAction,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum WeightsAction {
    /// Check (M.1), (M.2), (M.3)' and (M.3); CSV p,ln_M_p,m_p
    Check,
    /// Associated function M(rho) on [t0, t1]; CSV rho,M
    Assoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum OmegaAction {
    /// Check |omega(z)| >= e^{M(|z|)} on the lower half-disc of radius t1
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum SolveAction {
    /// u' = Au through the regularized semigroup
    Acp,
    /// Caputo D^alpha v = Av through subordination
    Frac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum VerifyAction {
    /// Fit ||R(lambda)|| <= L e^{M(k|lambda|)} on Re lambda > a
    Resolvent,
    /// S(t)S(s) = C S(t+s) on {0.5, 1}^2
    Semigroup,
    /// Convolution law, generator identity and nondegeneracy of G
    Axioms,
    /// sup_p h^p ||u^(p)(t)|| / M_p against e^{abar t} on [t0, t1]
    Regularity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum ProbeAction {
    /// ||e^{-at} G(phi * psi)|| / (||phi||_{K,h'} ||psi||_1) over sampled pairs
    Fujiwara,
}

/// Merged configuration with the global defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Group,
    pub matrix: Option<PathBuf>,
    pub x: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub s: f64,
    pub alpha: Option<f64>,
    pub h: f64,
    pub hprime: Vec<f64>,
    pub a: Option<f64>,
    pub a0: Option<f64>,
    pub abar: Option<f64>,
    pub tol: f64,
    pub t0: Option<f64>,
    pub t1: Option<f64>,
    pub steps: Option<usize>,
    pub pmax: Option<usize>,
    pub pairs: usize,
    pub seed: u64,
    pub branch: Branch,
    pub threads: Option<usize>,
}

/// Reads `key=value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<Flags, String> {
    let mut flags = Flags::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", i + 1))?;
        flags
            .set(k.trim(), v.trim())
            .map_err(|e| format!("config line {}: {e}", i + 1))?;
    }
    Ok(flags)
}

fn load_file(path: &Path) -> Result<Flags, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config_file(&text)
}

/// Merges `defaults < config file < flags` and validates the result.
/// `env_threads` is the value of `ULTRASEMI_THREADS`, used when neither the
/// flags nor the file set a thread count.
pub fn resolve(cli: Cli, env_threads: Option<&str>) -> Result<RunConfig, String> {
    let file = match &cli.config {
        Some(p) => load_file(p)?,
        None => Flags::default(),
    };
    let f = file.overlay(cli.flags);
    let threads = match f.threads {
        Some(n) => Some(n),
        None => match env_threads.map(str::trim).filter(|s| !s.is_empty()) {
            Some(s) => Some(
                s.parse::<usize>()
                    .map_err(|_| format!("ULTRASEMI_THREADS must be a positive integer, got '{s}'"))?,
            ),
            None => None,
        },
    };
    let cfg = RunConfig {
        command: cli.group,
        matrix: f.matrix,
        x: f.x,
        out: f.out,
        s: f.s.unwrap_or(2.0),
        alpha: f.alpha,
        h: f.h.unwrap_or(1.0),
        hprime: f.hprime.map_or_else(|| vec![1.0], |l| l.0),
        a: f.a,
        a0: f.a0,
        abar: f.abar,
        tol: f.tol.unwrap_or(1e-8),
        t0: f.t0,
        t1: f.t1,
        steps: f.steps,
        pmax: f.pmax,
        pairs: f.pairs.unwrap_or(64),
        seed: f.seed.unwrap_or(42),
        branch: f.branch.unwrap_or(Branch::Beurling),
        threads,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    fn validate(&self) -> Result<(), String> {
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(format!("alpha must be in (0, 1), got {alpha}"));
            }
        }
        if !(self.s >= 1.0 && self.s.is_finite()) {
            return Err(format!("s must be at least 1, got {}", self.s));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(format!("tol must be in (0, 1), got {}", self.tol));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(format!("h must be positive, got {}", self.h));
        }
        if self.hprime.is_empty() || self.hprime.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err("hprime values must be positive".into());
        }
        if self.branch == Branch::Beurling && self.hprime.len() != 1 {
            return Err("the Beurling branch takes a single hprime".into());
        }
        if self.steps == Some(0) {
            return Err("steps must be positive".into());
        }
        if self.threads == Some(0) {
            return Err("threads must be positive".into());
        }
        if self.pairs == 0 {
            return Err("pairs must be positive".into());
        }
        for (name, v) in [("a", self.a), ("a0", self.a0), ("abar", self.abar), ("t0", self.t0), ("t1", self.t1)] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(format!("{name} must be finite"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("ultrasemi").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = resolve(parse(&["solve", "acp", "--matrix", "A.txt", "--x", "x0.txt", "--t1", "5", "--steps", "101"]), None).unwrap();
        assert_eq!(cfg.command, Group::Solve { action: SolveAction::Acp });
        assert_eq!(cfg.tol, 1e-8);
        assert_eq!(cfg.s, 2.0);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.t1, Some(5.0));
        assert_eq!(cfg.steps, Some(101));
        assert_eq!(cfg.matrix.as_deref(), Some(Path::new("A.txt")));
    }

    #[test]
    fn bad_alpha_rejected() {
        assert!(resolve(parse(&["solve", "frac", "--alpha", "1.5"]), None).is_err());
        assert!(resolve(parse(&["solve", "frac", "--alpha", "0"]), None).is_err());
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let err = Cli::try_parse_from(["ultrasemi", "weights", "check", "--bogus", "1"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn config_file_syntax() {
        let f = parse_config_file("# comment\ntol = 1e-6  # trailing\n\nbranch=roumieu\nhprime=0.5,1,2\n").unwrap();
        assert_eq!(f.tol, Some(1e-6));
        assert_eq!(f.branch, Some(Branch::Roumieu));
        assert_eq!(f.hprime, Some(RealList(vec![0.5, 1.0, 2.0])));
        assert!(parse_config_file("tol").is_err());
        assert!(parse_config_file("bogus=1").is_err());
        assert!(parse_config_file("tol=abc").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = parse_config_file("tol=1e-6\nseed=7\n").unwrap();
        let flags = parse(&["weights", "check", "--tol", "1e-9"]).flags;
        let merged = file.overlay(flags);
        assert_eq!(merged.tol, Some(1e-9));
        assert_eq!(merged.seed, Some(7));
    }

    #[test]
    fn thread_fallback() {
        let cfg = resolve(parse(&["weights", "check"]), Some("3")).unwrap();
        assert_eq!(cfg.threads, Some(3));
        let cfg = resolve(parse(&["weights", "check", "--threads", "2"]), Some("3")).unwrap();
        assert_eq!(cfg.threads, Some(2));
        assert!(resolve(parse(&["weights", "check"]), Some("x")).is_err());
    }
}

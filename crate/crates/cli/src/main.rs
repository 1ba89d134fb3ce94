//! `freeconv`: free additive convolution, closed-form oracles and
//! Monte Carlo checks from the command line.
//!
//! Exit codes: 0 on success, 2 on invalid input (one JSON line on stderr
//! with `path`, `line` and `column` for malformed measure files), 3 when a
//! solver does not converge (the JSON line carries `lambda` and `y`).
//!
//! Density CSVs (`convolve`, `density`, `oracle`) have `# epsilon_used` and
//! `# atom,<pos>,<mass>` comment lines, then `lambda,rho`. Monte Carlo
//! reports start with `# key,value` metadata lines; see each subcommand.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "freeconv", version, about = "Free additive convolution of spectral measures")]
struct Cli {
    /// Worker threads for grid rays and Monte Carlo trials
    /// [default: available parallelism].
    #[arg(long, global = true, env = "FREECONV_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Height ε of the inversion line λ + iε.
    #[arg(long, default_value_t = 1e-3, value_parser = positive)]
    epsilon: f64,

    /// Nodes of the auto-sized λ-grid before adaptive refinement.
    #[arg(long, default_value_t = 400, value_parser = clap::value_parser!(u32).range(2..))]
    grid_points: u32,

    /// Starting height of the vertical continuation [default: 8(1 + r)].
    #[arg(long, value_parser = positive)]
    y_start: Option<f64>,

    /// Richardson extrapolation of the density in ε.
    #[arg(long)]
    extrapolate: bool,

    /// Keep the uniform λ-grid (no adaptive bisection).
    #[arg(long)]
    no_refine: bool,

    /// Relative residual target per spectral point.
    #[arg(long, default_value_t = 1e-12, value_parser = positive)]
    tol: f64,

    /// Iteration cap per spectral point.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u32).range(1..))]
    max_iter: u32,
}

#[derive(Debug, Args)]
struct McArgs {
    /// Matrix dimension.
    #[arg(long, default_value_t = 1024, value_parser = clap::value_parser!(u64).range(2..))]
    n: u64,

    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,

    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Density of n1 ⊞ n2 (CSV `lambda,rho` with atom comments).
    Convolve {
        #[arg(long)]
        n1: PathBuf,
        #[arg(long)]
        n2: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Also write the subordination states on the uniform grid
        /// (`lambda,y,f_re,f_im,d1_re,d1_im,d2_re,d2_im,residual,iters`).
        #[arg(long)]
        states: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Density of a single measure recovered by Stieltjes inversion.
    Density {
        #[arg(long, alias = "n1")]
        measure: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Closed-form laws.
    Oracle {
        #[command(subcommand)]
        kind: OracleKind,
    },
    /// R-transforms of n1, n2 and n1 ⊞ n2 at points s with Im s > 0
    /// (CSV `s_re,s_im,r1_re,r1_im,r2_re,r2_im,r12_re,r12_im,defect`).
    Rtransform {
        #[arg(long)]
        n1: PathBuf,
        #[arg(long)]
        n2: PathBuf,
        /// Imaginary parts of purely imaginary points s
        /// [default: 0.02, 0.04, ..., 0.2].
        #[arg(long, value_delimiter = ',', value_parser = positive)]
        s_im: Vec<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Averaged eigenvalue histogram of A + U*BU against the solver
    /// (CSV `bin_lo,bin_hi,mass,solver_mass`; metadata seed, n, trials, ks).
    McSpectrum {
        #[arg(long)]
        n1: PathBuf,
        #[arg(long)]
        n2: PathBuf,
        #[command(flatten)]
        mc: McArgs,
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
        bins: u32,
        #[arg(long, default_value_t = 1e-3, value_parser = positive)]
        epsilon: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Variance of normalized resolvent traces against n
    /// (CSV `n,var_g,var_delta2`; metadata seed, trials, z, slopes).
    McVariance {
        #[arg(long)]
        n1: PathBuf,
        #[arg(long)]
        n2: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        z_re: f64,
        #[arg(long, default_value_t = 3.0)]
        z_im: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Mean of n⁻¹Tr(U^{m1}T1···U^{mk}Tk) (CSV `mean_re,mean_im,abs`).
    Freeness {
        #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(2..))]
        n: u64,
        /// Nonzero exponents, e.g. `1,-1,1,-1`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        ms: Vec<i32>,
        /// One matrix per exponent: `sign:<p>` (diagonal ±1 in blocks of p),
        /// `identity`, or a measure JSON file (centred quantile diagonal).
        #[arg(long = "t", required = true)]
        ts: Vec<String>,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Accept exponents that do not sum to zero and matrices with
        /// nonzero trace.
        #[arg(long)]
        relaxed: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Mean of n⁻¹Tr(U − z)⁻¹ for Haar U (CSV `g_re,g_im,limit_re,limit_im`).
    HaarCheck {
        #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(2..))]
        n: u64,
        #[arg(long, allow_negative_numbers = true)]
        z_re: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        z_im: f64,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum OracleKind {
    /// Prints w1² + w2², the parameter of the sum of two semicircles.
    SemicircleAdd {
        #[arg(long)]
        w1sq: f64,
        #[arg(long)]
        w2sq: f64,
    },
    /// Semicircle density with parameter w².
    Semicircle {
        #[arg(long, value_parser = positive)]
        w2sq: f64,
        #[arg(long, default_value_t = 400, value_parser = clap::value_parser!(u32).range(2..))]
        grid_points: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Self-convolution of α δ₀ + (1 − α) δ_a.
    TwoAtom {
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_parser = positive)]
        a: f64,
        #[arg(long, default_value_t = 400, value_parser = clap::value_parser!(u32).range(2..))]
        grid_points: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Self-convolution of the arcsine law on [−a, a].
    Arcsine {
        #[arg(long, value_parser = positive)]
        a: f64,
        #[arg(long, default_value_t = 400, value_parser = clap::value_parser!(u32).range(2..))]
        grid_points: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Marchenko–Pastur law with ratio c and atomic population law σ,
    /// by inversion at height ε.
    Mp {
        #[arg(long, value_parser = positive)]
        c: f64,
        /// Atomic measure JSON file [default: δ₁].
        #[arg(long)]
        sigma: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3, value_parser = positive)]
        epsilon: f64,
        #[arg(long, default_value_t = 400, value_parser = clap::value_parser!(u32).range(2..))]
        grid_points: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", CliError::validation(e.to_string().trim_end()));
            return ExitCode::from(error::EXIT_VALIDATION as u8);
        }
    };
    if let Some(t) = cli.threads {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t as usize).build_global();
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

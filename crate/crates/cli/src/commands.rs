use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use freeconv_core::closed_forms::{
    arcsine_self_conv, mp_stieltjes, semicircle_add, semicircle_law, two_atom_self_conv, ClosedFormResult,
};
use freeconv_core::io::{write_density_csv, write_states_csv};
use freeconv_core::measures::Atoms;
use freeconv_core::solver::{r_transform_of_convolution, ConvolutionTransform};
use freeconv_core::{
    free_convolve, r_transform_eval, solve_on_grid, DensityEstimate, HalfPlanePoint, Measure, SolverConfig,
};
use freeconv_lab::report::{format_complex, write_freeness, write_haar, write_histogram, write_variance};
use freeconv_lab::stats::ks_distance;
use freeconv_lab::{
    c64, diag_from_measure, empirical_ncm, estimate_resolvent_variance, freeness_moment, spectrum_samples,
    unitary_spectrum_check, Mat, Preconditions,
};
use num_complex::Complex64;

use crate::error::CliError;
use crate::{Command, McArgs, OracleKind, SolverArgs};

type CliResult<T = ()> = Result<T, CliError>;

pub fn load_measure(path: &Path) -> CliResult<Measure> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

fn solver_config(args: &SolverArgs) -> SolverConfig {
    SolverConfig {
        y_start: args.y_start,
        y_target: args.epsilon,
        grid_points: args.grid_points as usize,
        extrapolate: args.extrapolate,
        refine: !args.no_refine,
        tol: args.tol,
        max_iter: args.max_iter as usize,
        ..Default::default()
    }
}

/// Runs `body` against the output file, or stdout when none is given.
fn emit(output: &Option<PathBuf>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult {
    let stdout = Path::new("<stdout>");
    let (path, mut sink): (&Path, Box<dyn Write>) = match output {
        Some(p) => (p, Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?))),
        None => (stdout, Box::new(BufWriter::new(io::stdout().lock()))),
    };
    body(&mut sink).and_then(|_| sink.flush()).map_err(|e| CliError::io(path, e))
}

fn check_output_is_writable(output: &Option<PathBuf>) -> CliResult {
    if let Some(p) = output {
        File::create(p).map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Convolve { n1, n2, solver, states, output } => {
            let (n1, n2) = (load_measure(&n1)?, load_measure(&n2)?);
            check_output_is_writable(&output)?;
            let cfg = solver_config(&solver);
            if let Some(path) = &states {
                let grid = solve_on_grid(&n1, &n2, &cfg)?;
                emit(&Some(path.clone()), |w| write_states_csv(&grid, w))?;
            }
            let est = free_convolve(&n1, &n2, &cfg)?;
            emit(&output, |w| write_density_csv(&est, w))
        }
        Command::Density { measure, solver, output } => {
            let m = load_measure(&measure)?;
            check_output_is_writable(&output)?;
            let est = free_convolve(&m, &Measure::dirac(0.0), &solver_config(&solver))?;
            emit(&output, |w| write_density_csv(&est, w))
        }
        Command::Oracle { kind } => run_oracle(kind),
        Command::Rtransform { n1, n2, s_im, output } => {
            let (n1, n2) = (load_measure(&n1)?, load_measure(&n2)?);
            let s_im = if s_im.is_empty() { (1..=10).map(|k| 0.02 * k as f64).collect() } else { s_im };
            let conv = ConvolutionTransform { n1: &n1, n2: &n2, cfg: SolverConfig::default() };
            let mut rows = Vec::with_capacity(s_im.len());
            for y in s_im {
                let s = Complex64::new(0.0, y);
                let (r1, r2) = (r_transform_eval(&n1, s)?, r_transform_eval(&n2, s)?);
                let r12 = r_transform_of_convolution(&conv, s)?;
                rows.push((s, r1, r2, r12, (r12 - r1 - r2).norm()));
            }
            let worst = rows.iter().map(|r| r.4).fold(0.0, f64::max);
            emit(&output, |w| {
                writeln!(w, "# max_defect,{worst:e}")?;
                writeln!(w, "s_re,s_im,r1_re,r1_im,r2_re,r2_im,r12_re,r12_im,defect")?;
                for (s, r1, r2, r12, d) in &rows {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{},{d:e}",
                        s.re, s.im, r1.re, r1.im, r2.re, r2.im, r12.re, r12.im
                    )?;
                }
                Ok(())
            })
        }
        Command::McSpectrum { n1, n2, mc, bins, epsilon, output } => {
            let (n1, n2) = (load_measure(&n1)?, load_measure(&n2)?);
            check_output_is_writable(&output)?;
            mc_spectrum(&n1, &n2, &mc, bins as usize, epsilon, &output)
        }
        Command::McVariance { n1, n2, ns, trials, seed, z_re, z_im, output } => {
            let (n1, n2) = (load_measure(&n1)?, load_measure(&n2)?);
            check_output_is_writable(&output)?;
            let z = HalfPlanePoint::upper(z_re, z_im)?;
            let report = estimate_resolvent_variance(&n1, &n2, z, &ns, trials as usize, seed)?;
            emit(&output, |w| write_variance(w, seed, &report))
        }
        Command::Freeness { n, ms, ts, trials, seed, relaxed, output } => {
            let n = n as usize;
            let mats = ts.iter().map(|t| test_matrix(t, n)).collect::<CliResult<Vec<_>>>()?;
            check_output_is_writable(&output)?;
            let pre = if relaxed { Preconditions::Relaxed } else { Preconditions::Strict };
            let mean = freeness_moment(n, &ms, &mats, trials as usize, seed, pre)?;
            let ms_text = ms.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";");
            let meta = [
                ("seed", seed.to_string()),
                ("n", n.to_string()),
                ("trials", trials.to_string()),
                ("ms", ms_text),
                ("ts", ts.join(";")),
            ];
            emit(&output, |w| write_freeness(w, &meta, mean))
        }
        Command::HaarCheck { n, z_re, z_im, trials, seed, output } => {
            let z = Complex64::new(z_re, z_im);
            check_output_is_writable(&output)?;
            let g = unitary_spectrum_check(n as usize, z, trials as usize, seed)?;
            let meta = [
                ("seed", seed.to_string()),
                ("n", n.to_string()),
                ("trials", trials.to_string()),
                ("z", format_complex(z)),
            ];
            emit(&output, |w| write_haar(w, &meta, g, freeconv_lab::experiments::unitary_spectrum_limit(z)))
        }
    }
}

fn mc_spectrum(
    n1: &Measure,
    n2: &Measure,
    mc: &McArgs,
    bins: usize,
    epsilon: f64,
    output: &Option<PathBuf>,
) -> CliResult {
    let samples = spectrum_samples(n1, n2, mc.n as usize, mc.trials as usize, mc.seed)?;
    let est = free_convolve(n1, n2, &SolverConfig { y_target: epsilon, ..Default::default() })?;
    let cdf = est.cdf();
    let ks = ks_distance(&samples, &cdf);
    let all = samples.iter().flat_map(|s| s.eigenvalues.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let hi = hi + 1e-9 * (hi - lo).max(1.0);
    let edges: Vec<f64> = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
    let mass = empirical_ncm(&samples, &edges)?;
    let solver: Vec<f64> = edges.windows(2).map(|e| cdf(e[1]) - cdf(e[0])).collect();
    let meta = [
        ("seed", mc.seed.to_string()),
        ("n", mc.n.to_string()),
        ("trials", mc.trials.to_string()),
        ("ks", ks.to_string()),
    ];
    emit(output, |w| write_histogram(w, &meta, &edges, &mass, &solver))
}

/// `sign:<p>`, `identity`, or a measure file rendered as a centred
/// quantile diagonal.
fn test_matrix(spec: &str, n: usize) -> CliResult<Mat<c64>> {
    let diag = |d: Vec<f64>| Mat::from_fn(n, n, |j, k| if j == k { c64::new(d[j], 0.0) } else { c64::new(0.0, 0.0) });
    if spec == "identity" {
        return Ok(Mat::identity(n, n));
    }
    if let Some(p) = spec.strip_prefix("sign:") {
        let p: usize = p
            .parse()
            .ok()
            .filter(|&p| p > 0)
            .ok_or_else(|| CliError::validation(format!("bad block length in {spec:?}")))?;
        return Ok(diag((0..n).map(|j| if (j / p).is_multiple_of(2) { 1.0 } else { -1.0 }).collect()));
    }
    let m = load_measure(Path::new(spec))?;
    let d = diag_from_measure(&m, n)?.diagonal_entries().expect("quantile matrices are diagonal");
    let mean = d.iter().sum::<f64>() / n as f64;
    Ok(diag(d.into_iter().map(|x| x - mean).collect()))
}

fn closed_form_estimate(law: &ClosedFormResult, points: usize) -> DensityEstimate {
    let (lo, hi) = law.support;
    let pad = 0.05 * (hi - lo).max(1e-9);
    let (lo, hi) = (lo - pad, hi + pad);
    let lambdas: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    DensityEstimate {
        rho: lambdas.iter().map(|&x| law.density(x)).collect(),
        lambdas,
        atoms: law.atoms.clone(),
        epsilon_used: 0.0,
    }
}

fn run_oracle(kind: OracleKind) -> CliResult {
    match kind {
        OracleKind::SemicircleAdd { w1sq, w2sq } => {
            println!("{}", semicircle_add(w1sq, w2sq)?);
            Ok(())
        }
        OracleKind::Semicircle { w2sq, grid_points, output } => {
            let est = closed_form_estimate(&semicircle_law(w2sq)?, grid_points as usize);
            emit(&output, |w| write_density_csv(&est, w))
        }
        OracleKind::TwoAtom { alpha, a, grid_points, output } => {
            let est = closed_form_estimate(&two_atom_self_conv(alpha, a)?, grid_points as usize);
            emit(&output, |w| write_density_csv(&est, w))
        }
        OracleKind::Arcsine { a, grid_points, output } => {
            let est = closed_form_estimate(&arcsine_self_conv(a)?, grid_points as usize);
            emit(&output, |w| write_density_csv(&est, w))
        }
        OracleKind::Mp { c, sigma, epsilon, grid_points, output } => {
            let sigma = match sigma {
                None => Atoms::point(1.0),
                Some(path) => match load_measure(&path)? {
                    Measure::Atoms(a) => a,
                    _ => return Err(CliError::validation("sigma must be an atomic measure")),
                },
            };
            let edge = (1.0 + c.sqrt()).powi(2);
            let (tmin, tmax) = sigma.points().iter().fold((0.0f64, 0.0f64), |(a, b), p| (a.min(p.0), b.max(p.0)));
            let (lo, hi) = (edge * tmin, edge * tmax);
            let pad = 0.05 * (hi - lo).max(1.0);
            let (lo, hi) = (lo - pad, hi + pad);
            let points = grid_points as usize;
            let cfg = SolverConfig::default();
            let lambdas: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
            let rho = lambdas
                .iter()
                .map(|&l| {
                    let z = HalfPlanePoint::upper(l, epsilon)?;
                    Ok((mp_stieltjes(c, &sigma, z, &cfg)?.im / std::f64::consts::PI).max(0.0))
                })
                .collect::<Result<Vec<f64>, freeconv_core::Error>>()?;
            let est = DensityEstimate { lambdas, rho, atoms: Vec::new(), epsilon_used: epsilon };
            emit(&output, |w| write_density_csv(&est, w))
        }
    }
}

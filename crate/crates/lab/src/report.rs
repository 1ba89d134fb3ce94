//! CSV reports. Every file starts with `# key,value` metadata lines
//! followed by a header row.
//!
//! | report    | metadata                        | columns                                  |
//! |-----------|---------------------------------|------------------------------------------|
//! | histogram | seed, n, trials, ks             | `bin_lo,bin_hi,mass,solver_mass`         |
//! | variance  | seed, trials, z, slope_g, slope_delta2 | `n,var_g,var_delta2`              |
//! | freeness  | seed, n, trials, ms             | `mean_re,mean_im,abs`                    |
//! | haar      | seed, n, trials, z              | `g_re,g_im,limit_re,limit_im`            |

use std::io::{self, Write};

use num_complex::Complex64;

use crate::experiments::ResolventVariance;

pub fn write_metadata<W: Write>(out: &mut W, meta: &[(&str, String)]) -> io::Result<()> {
    for (k, v) in meta {
        writeln!(out, "# {k},{v}")?;
    }
    Ok(())
}

pub fn format_complex(z: Complex64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

fn format_slope(s: Option<f64>) -> String {
    s.map_or_else(|| "degenerate".to_string(), |v| v.to_string())
}

/// `edges` has one more entry than `mass`; `solver_mass` may be empty.
pub fn write_histogram<W: Write>(
    mut out: W,
    meta: &[(&str, String)],
    edges: &[f64],
    mass: &[f64],
    solver_mass: &[f64],
) -> io::Result<()> {
    write_metadata(&mut out, meta)?;
    writeln!(out, "bin_lo,bin_hi,mass,solver_mass")?;
    for (i, m) in mass.iter().enumerate() {
        let s = solver_mass.get(i).map_or_else(String::new, |v| v.to_string());
        writeln!(out, "{},{},{m},{s}", edges[i], edges[i + 1])?;
    }
    Ok(())
}

pub fn write_variance<W: Write>(mut out: W, seed: u64, report: &ResolventVariance) -> io::Result<()> {
    let meta = [
        ("seed", seed.to_string()),
        ("trials", report.g.trials.to_string()),
        ("z", format_complex(report.g.z)),
        ("slope_g", format_slope(report.g.fitted_slope)),
        ("slope_delta2", format_slope(report.delta2.fitted_slope)),
    ];
    write_metadata(&mut out, &meta)?;
    writeln!(out, "n,var_g,var_delta2")?;
    for (i, n) in report.g.ns.iter().enumerate() {
        writeln!(out, "{n},{:e},{:e}", report.g.variances[i], report.delta2.variances[i])?;
    }
    Ok(())
}

pub fn write_freeness<W: Write>(mut out: W, meta: &[(&str, String)], mean: Complex64) -> io::Result<()> {
    write_metadata(&mut out, meta)?;
    writeln!(out, "mean_re,mean_im,abs")?;
    writeln!(out, "{},{},{}", mean.re, mean.im, mean.norm())
}

pub fn write_haar<W: Write>(mut out: W, meta: &[(&str, String)], g: Complex64, limit: Complex64) -> io::Result<()> {
    write_metadata(&mut out, meta)?;
    writeln!(out, "g_re,g_im,limit_re,limit_im")?;
    writeln!(out, "{},{},{},{}", g.re, g.im, limit.re, limit.im)
}

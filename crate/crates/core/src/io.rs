//! CSV artifacts for density estimates and subordination grids.
//!
//! Density files start with `#` comment lines (`# epsilon_used,<ε>` and one
//! `# atom,<position>,<mass>` per atom), followed by the header
//! `lambda,rho` and one row per grid point.

use std::io::{self, BufRead, Write};

use crate::solver::{DensityEstimate, SubordinationState};

pub const DENSITY_HEADER: &str = "lambda,rho";
pub const STATES_HEADER: &str = "lambda,y,f_re,f_im,d1_re,d1_im,d2_re,d2_im,residual,iters";

pub fn write_density_csv<W: Write>(est: &DensityEstimate, mut out: W) -> io::Result<()> {
    writeln!(out, "# epsilon_used,{:e}", est.epsilon_used)?;
    for (pos, mass) in &est.atoms {
        writeln!(out, "# atom,{pos},{mass}")?;
    }
    writeln!(out, "{DENSITY_HEADER}")?;
    for (l, r) in est.lambdas.iter().zip(&est.rho) {
        writeln!(out, "{l},{r}")?;
    }
    Ok(())
}

pub fn write_states_csv<W: Write>(states: &[SubordinationState], mut out: W) -> io::Result<()> {
    writeln!(out, "{STATES_HEADER}")?;
    for s in states {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:e},{}",
            s.z.re,
            s.z.im,
            s.f.re,
            s.f.im,
            s.delta1.re,
            s.delta1.im,
            s.delta2.re,
            s.delta2.im,
            s.residual,
            s.iterations
        )?;
    }
    Ok(())
}

fn invalid(line: usize, msg: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {msg}"))
}

fn parse_f64(line: usize, field: &str) -> io::Result<f64> {
    field.trim().parse().map_err(|e| invalid(line, format!("bad number {field:?}: {e}")))
}

/// Reads a file written by [`write_density_csv`].
pub fn read_density_csv<R: BufRead>(input: R) -> io::Result<DensityEstimate> {
    let mut est = DensityEstimate { lambdas: Vec::new(), rho: Vec::new(), atoms: Vec::new(), epsilon_used: f64::NAN };
    let mut seen_header = false;
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let fields: Vec<&str> = meta.trim().split(',').collect();
            match fields.as_slice() {
                ["epsilon_used", v] => est.epsilon_used = parse_f64(no, v)?,
                ["atom", p, m] => est.atoms.push((parse_f64(no, p)?, parse_f64(no, m)?)),
                _ => {}
            }
            continue;
        }
        if !seen_header {
            if line != DENSITY_HEADER {
                return Err(invalid(no, format!("expected header {DENSITY_HEADER:?}")));
            }
            seen_header = true;
            continue;
        }
        let mut it = line.split(',');
        match (it.next(), it.next(), it.next()) {
            (Some(l), Some(r), None) => {
                est.lambdas.push(parse_f64(no, l)?);
                est.rho.push(parse_f64(no, r)?);
            }
            _ => return Err(invalid(no, "expected two fields")),
        }
    }
    if !seen_header {
        return Err(invalid(0, "missing header"));
    }
    Ok(est)
}

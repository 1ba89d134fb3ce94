//! Monte Carlo estimators. Trial `t` of an experiment with seed `s` uses
//! the unitary `haar_unitary(n, trial_seed(s, stream))`, where the stream
//! index is `t` (tagged with the size index for multi-size experiments),
//! and trials are reduced in index order, so results are bit-identical
//! regardless of thread count.

use faer::{c64, Mat};
use freeconv_core::{HalfPlanePoint, Measure};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::ensemble::{diag_from_measure, haar_unitary, rotate_sum_spectrum, rotated, trial_seed, SpectrumSample};
use crate::error::{Error, Result};
use crate::stats::{log_log_slope, ComplexMoments};

fn check_trials(trials: usize, min: usize) -> Result<()> {
    if trials < min {
        return Err(Error::domain(format!("trials = {trials} must be at least {min}")));
    }
    Ok(())
}

/// Spectra of `A + U*BU` over `trials` Haar draws, with `A`, `B` the
/// quantile diagonals of `n1`, `n2`.
pub fn spectrum_samples(n1: &Measure, n2: &Measure, n: usize, trials: usize, seed: u64) -> Result<Vec<SpectrumSample>> {
    check_trials(trials, 1)?;
    let a = diag_from_measure(n1, n)?;
    let b = diag_from_measure(n2, n)?;
    (0..trials as u64).into_par_iter().map(|t| rotate_sum_spectrum(&a, &b, trial_seed(seed, t))).collect()
}

/// Averaged normalized eigenvalue counts per bin `[edges[i], edges[i+1])`.
/// Infinite outer edges are allowed.
pub fn empirical_ncm(samples: &[SpectrumSample], edges: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::domain("no samples"));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) || edges.iter().any(|e| e.is_nan()) {
        return Err(Error::domain("bin edges must be at least two strictly increasing values"));
    }
    let mut mass = vec![0.0; edges.len() - 1];
    for s in samples {
        let w = 1.0 / (s.eigenvalues.len() as f64 * samples.len() as f64);
        for &l in &s.eigenvalues {
            let k = edges.partition_point(|&e| e <= l);
            if k >= 1 && k < edges.len() {
                mass[k - 1] += w;
            }
        }
    }
    Ok(mass)
}

/// Monte Carlo variances of one resolvent statistic across matrix sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub ns: Vec<usize>,
    pub variances: Vec<f64>,
    /// Slope of `ln variance` against `ln n`; `None` when some variance is
    /// zero (degenerate input such as `B = 0`).
    pub fitted_slope: Option<f64>,
    pub z: Complex64,
    pub trials: usize,
}

impl VarianceReport {
    fn new(ns: &[usize], variances: Vec<f64>, z: Complex64, trials: usize) -> Self {
        let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let fitted_slope = if variances.iter().all(|&v| v > 0.0) { log_log_slope(&xs, &variances) } else { None };
        Self { ns: ns.to_vec(), variances, fitted_slope, z, trials }
    }
}

/// Variances of `gₙ(z) = n⁻¹Tr(H − z)⁻¹` and `δ₂,ₙ(z) = n⁻¹Tr H₂(H − z)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventVariance {
    pub g: VarianceReport,
    pub delta2: VarianceReport,
}

/// Variance of the normalized resolvent traces of `H = A + H₂`,
/// `H₂ = U*BU`, for each size in `ns`.
///
/// With `H = V diag(λ) V*`, `gₙ = n⁻¹Σ 1/(λₖ − z)` and, since
/// `v*H₂v = λ − v*Av` for a unit eigenvector `v`,
/// `δ₂,ₙ = n⁻¹Σ (λₖ − Σⱼ aⱼ|Vⱼₖ|²)/(λₖ − z)`.
pub fn estimate_resolvent_variance(
    n1: &Measure,
    n2: &Measure,
    z: HalfPlanePoint,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ResolventVariance> {
    let z = z.z();
    if z.im < 1.0 {
        return Err(Error::domain(format!("Im z = {} must be at least 1", z.im)));
    }
    check_trials(trials, 50)?;
    if ns.is_empty() || ns[0] == 0 || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("ns must be positive and strictly increasing"));
    }
    let mut var_g = Vec::with_capacity(ns.len());
    let mut var_d = Vec::with_capacity(ns.len());
    for (k, &n) in ns.iter().enumerate() {
        let a = diag_from_measure(n1, n)?;
        let b = diag_from_measure(n2, n)?;
        let diag_a = a.diagonal_entries().expect("quantile matrices are diagonal");
        let draws: Vec<(Complex64, Complex64)> = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let h = a.add(&rotated(&b, trial_seed(seed, ((k as u64) << 32) | t))?)?;
                let (values, vectors) = h.eigen()?;
                let mut g = Complex64::new(0.0, 0.0);
                let mut d = Complex64::new(0.0, 0.0);
                for (col, &l) in values.iter().enumerate() {
                    let r = 1.0 / (l - z);
                    let va: f64 = (0..n).map(|j| diag_a[j] * vectors[(j, col)].norm_sqr()).sum();
                    g += r;
                    d += (l - va) * r;
                }
                Ok((g / n as f64, d / n as f64))
            })
            .collect::<Result<_>>()?;
        var_g.push(draws.iter().map(|x| x.0).collect::<ComplexMoments>().variance());
        var_d.push(draws.iter().map(|x| x.1).collect::<ComplexMoments>().variance());
    }
    Ok(ResolventVariance {
        g: VarianceReport::new(ns, var_g, z, trials),
        delta2: VarianceReport::new(ns, var_d, z, trials),
    })
}

/// Whether [`freeness_moment`] enforces `Σ mᵢ = 0` and traceless `Tᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditions {
    #[default]
    Strict,
    /// Accept any exponents and matrices; the mean is then trivially zero
    /// when `Σ mᵢ ≠ 0`, and not necessarily otherwise.
    Relaxed,
}

fn unitary_power(u: &Mat<c64>, m: i32) -> Mat<c64> {
    let base = if m < 0 { u.adjoint().to_owned() } else { u.clone() };
    let mut out = base.clone();
    for _ in 1..m.unsigned_abs() {
        out = &out * &base;
    }
    out
}

/// Monte Carlo mean of `n⁻¹Tr(U^{m₁}T₁ ··· U^{m_k}T_k)`.
pub fn freeness_moment(
    n: usize,
    ms: &[i32],
    ts: &[Mat<c64>],
    trials: usize,
    seed: u64,
    pre: Preconditions,
) -> Result<Complex64> {
    check_trials(trials, 1)?;
    if ms.is_empty() || ms.len() != ts.len() {
        return Err(Error::domain("ms and ts must be nonempty and of equal length"));
    }
    if ms.contains(&0) {
        return Err(Error::domain("exponents must be nonzero"));
    }
    if ts.iter().any(|t| t.nrows() != n || t.ncols() != n) {
        return Err(Error::domain(format!("every T must be {n}×{n}")));
    }
    if pre == Preconditions::Strict {
        if ms.iter().map(|&m| m as i64).sum::<i64>() != 0 {
            return Err(Error::domain("exponents must sum to zero"));
        }
        for (i, t) in ts.iter().enumerate() {
            let tr: c64 = (0..n).map(|j| t[(j, j)]).sum();
            if tr.norm() / n as f64 > 1e-12 {
                return Err(Error::domain(format!("T{} is not traceless (n⁻¹Tr = {})", i + 1, tr / n as f64)));
            }
        }
    }
    let values: Vec<Complex64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let u = haar_unitary(n, trial_seed(seed, t))?;
            let mut prod: Option<Mat<c64>> = None;
            for (&m, tm) in ms.iter().zip(ts) {
                let factor = unitary_power(u.as_mat(), m) * tm;
                prod = Some(match prod {
                    None => factor,
                    Some(p) => p * factor,
                });
            }
            let p = prod.expect("ms is nonempty");
            Ok((0..n).map(|j| p[(j, j)]).sum::<c64>() / n as f64)
        })
        .collect::<Result<_>>()?;
    Ok(values.into_iter().collect::<ComplexMoments>().mean())
}

/// Monte Carlo mean of `n⁻¹Tr(U − z)⁻¹`, which tends to `0` for `|z| < 1`
/// and `−1/z` for `|z| > 1`.
pub fn unitary_spectrum_check(n: usize, z: Complex64, trials: usize, seed: u64) -> Result<Complex64> {
    check_trials(trials, 1)?;
    if !(z.re.is_finite() && z.im.is_finite()) || (0.9..=1.1).contains(&z.norm()) {
        return Err(Error::domain(format!("|z| = {} must lie outside [0.9, 1.1]", z.norm())));
    }
    let values: Vec<Complex64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mu = haar_unitary(n, trial_seed(seed, t))?.eigenvalues()?;
            Ok(mu.iter().map(|&m| 1.0 / (m - z)).sum::<Complex64>() / n as f64)
        })
        .collect::<Result<_>>()?;
    Ok(values.into_iter().collect::<ComplexMoments>().mean())
}

/// Expected limit of [`unitary_spectrum_check`].
pub fn unitary_spectrum_limit(z: Complex64) -> Complex64 {
    if z.norm() < 1.0 {
        Complex64::new(0.0, 0.0)
    } else {
        -1.0 / z
    }
}

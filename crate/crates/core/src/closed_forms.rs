//! Exact solutions of worked examples, used as oracles for the general
//! solver, and scalar functional equations for deformed ensembles.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measures::{
    semicircle_radius, semicircle_stieltjes, sqrt_outside, Atoms, HalfPlanePoint, StieltjesTransform,
};
use crate::solver::{SolverConfig, MIN_DAMPING};

type DensityFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;
type TransformFn = Box<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

/// A measure known in closed form: atoms plus a density on `support`.
pub struct ClosedFormResult {
    pub atoms: Vec<(f64, f64)>,
    pub support: (f64, f64),
    density: DensityFn,
    stieltjes: TransformFn,
}

impl std::fmt::Debug for ClosedFormResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClosedFormResult")
            .field("atoms", &self.atoms)
            .field("support", &self.support)
            .finish_non_exhaustive()
    }
}

impl ClosedFormResult {
    /// Density of the continuous part; zero outside `support`.
    pub fn density(&self, x: f64) -> f64 {
        if x <= self.support.0 || x >= self.support.1 {
            0.0
        } else {
            (self.density)(x)
        }
    }

    /// Mass of the continuous part, by Gauss–Chebyshev-type quadrature
    /// after `λ = mid + half·sin θ` (which tames square-root edges).
    pub fn continuous_mass(&self) -> f64 {
        let (lo, hi) = self.support;
        if hi <= lo {
            return 0.0;
        }
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let n = 200_000;
        let h = PI / n as f64;
        (0..n)
            .map(|i| {
                let th = -0.5 * PI + (i as f64 + 0.5) * h;
                self.density(mid + half * th.sin()) * half * th.cos() * h
            })
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.continuous_mass() + self.atoms.iter().map(|a| a.1).sum::<f64>()
    }
}

impl StieltjesTransform for ClosedFormResult {
    fn stieltjes(&self, z: Complex64) -> Complex64 {
        if z.im < 0.0 {
            (self.stieltjes)(z.conj()).conj()
        } else {
            (self.stieltjes)(z)
        }
    }
}

/// Wigner semicircle `(4πw²)⁻¹ √(8w² − λ²)`.
pub fn semicircle_law(w2: f64) -> Result<ClosedFormResult> {
    if !(w2 > 0.0 && w2.is_finite()) {
        return Err(Error::domain(format!("semicircle parameter w2 = {w2} must be positive")));
    }
    let r = semicircle_radius(w2);
    Ok(ClosedFormResult {
        atoms: Vec::new(),
        support: (-r, r),
        density: Box::new(move |x| (8.0 * w2 - x * x).max(0.0).sqrt() / (4.0 * PI * w2)),
        stieltjes: Box::new(move |z| semicircle_stieltjes(w2, z)),
    })
}

/// `N ⊞ N` for `N = α δ₀ + (1 − α) δ_a`.
///
/// Atoms `(2α − 1)₊` at 0 and `(1 − 2α)₊` at `2a`, plus the density
/// `√((λ₊ − λ)(λ − λ₋)) / (π |λ (λ − 2a)|)` on `[λ₋, λ₊]`,
/// `λ± = a (1 ± 2√(α(1 − α)))`.
pub fn two_atom_self_conv(alpha: f64, a: f64) -> Result<ClosedFormResult> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!("alpha = {alpha} must lie in [0, 1]")));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::domain(format!("a = {a} must be positive")));
    }
    let root = (alpha * (1.0 - alpha)).sqrt();
    let (lm, lp) = (a * (1.0 - 2.0 * root), a * (1.0 + 2.0 * root));
    let atoms: Vec<(f64, f64)> =
        [(0.0, 2.0 * alpha - 1.0), (2.0 * a, 1.0 - 2.0 * alpha)].into_iter().filter(|p| p.1 > 0.0).collect();
    Ok(ClosedFormResult {
        atoms,
        support: (lm, lp),
        density: Box::new(move |x| ((lp - x) * (x - lm)).max(0.0).sqrt() / (PI * (x * (x - 2.0 * a)).abs())),
        stieltjes: Box::new(move |z| {
            let mid = 0.5 * (lp + lm);
            let half = 0.5 * (lp - lm);
            let root = sqrt_outside(z - mid, half);
            (-a * (1.0 - 2.0 * alpha) - root) / (z * (z - 2.0 * a))
        }),
    })
}

/// Arcsine law on `[−a, a]` convolved with itself: density
/// `2√(3a² − λ²) / (π(4a² − λ²))` on `[−√3 a, √3 a]`, from the quadratic
/// `(z² − 4a²) f² − 2z f − 3 = 0`.
pub fn arcsine_self_conv(a: f64) -> Result<ClosedFormResult> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::domain(format!("a = {a} must be positive")));
    }
    let edge = 3f64.sqrt() * a;
    Ok(ClosedFormResult {
        atoms: Vec::new(),
        support: (-edge, edge),
        density: Box::new(move |x| 2.0 * (3.0 * a * a - x * x).max(0.0).sqrt() / (PI * (4.0 * a * a - x * x))),
        stieltjes: Box::new(move |z| (z - 2.0 * sqrt_outside(z, edge)) / (z * z - 4.0 * a * a)),
    })
}

/// Parameter of `SC(w1²) ⊞ SC(w2²)`, which is again a semicircle.
pub fn semicircle_add(w1sq: f64, w2sq: f64) -> Result<f64> {
    if !(w1sq >= 0.0 && w2sq >= 0.0) || !(w1sq + w2sq).is_finite() {
        return Err(Error::domain(format!("semicircle parameters ({w1sq}, {w2sq}) must be nonnegative")));
    }
    Ok(w1sq + w2sq)
}

/// Limiting Stieltjes transform of `H₀ + M` with `M` from the GUE of
/// variance parameter `w²`: the solution of `f = f₀(z + 2w² f)`.
pub fn deformed_gue_stieltjes<T>(f0: &T, w2: f64, z: HalfPlanePoint, cfg: &SolverConfig) -> Result<Complex64>
where
    T: StieltjesTransform + ?Sized,
{
    if !(w2 >= 0.0 && w2.is_finite()) {
        return Err(Error::domain(format!("w2 = {w2} must be nonnegative")));
    }
    if w2 == 0.0 {
        return Ok(f0.stieltjes(z.z()));
    }
    solve_scalar("deformed GUE equation", z, cfg, |z, f| f0.stieltjes(z + 2.0 * w2 * f))
}

/// Marchenko–Pastur transform for `Σ τᵢ P_{qᵢ}` with `m/n → c` and
/// `τ ~ sigma`: the solution of `f = −(z − c Σⱼ wⱼ τⱼ/(1 + τⱼ f))⁻¹`.
pub fn mp_stieltjes(c: f64, sigma: &Atoms, z: HalfPlanePoint, cfg: &SolverConfig) -> Result<Complex64> {
    let free = |w: Complex64| -1.0 / w;
    mp_deformation_stieltjes(&free, c, sigma, z, cfg)
}

/// Limiting transform of `H₀ + Σ τᵢ P_{qᵢ}`: `f = f₀(z − c Σⱼ wⱼ τⱼ/(1 + τⱼ f))`.
pub fn mp_deformation_stieltjes<T>(
    f0: &T,
    c: f64,
    sigma: &Atoms,
    z: HalfPlanePoint,
    cfg: &SolverConfig,
) -> Result<Complex64>
where
    T: StieltjesTransform + ?Sized,
{
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("c = {c} must be nonnegative")));
    }
    if c == 0.0 {
        return Ok(f0.stieltjes(z.z()));
    }
    let pts = sigma.points().to_vec();
    solve_scalar("Marchenko-Pastur equation", z, cfg, move |z, f| {
        let shift: Complex64 = pts.iter().map(|&(tau, w)| w * tau / (1.0 + tau * f)).sum();
        f0.stieltjes(z - c * shift)
    })
}

/// Solves `f = g(z, f)` in the Nevanlinna class by vertical continuation
/// from a large height, with Newton steps (central-difference derivative)
/// and damped Picard fallback at each height.
fn solve_scalar<G>(what: &'static str, z: HalfPlanePoint, cfg: &SolverConfig, g: G) -> Result<Complex64>
where
    G: Fn(Complex64, Complex64) -> Complex64,
{
    cfg.validate()?;
    let z = z.z();
    if z.im < 0.0 {
        let mirrored = |w: Complex64, f: Complex64| g(w.conj(), f.conj()).conj();
        return solve_scalar_upper(what, z.conj(), cfg, &mirrored).map(|f| f.conj());
    }
    solve_scalar_upper(what, z, cfg, &g)
}

fn solve_scalar_upper(
    what: &'static str,
    z: Complex64,
    cfg: &SolverConfig,
    g: &dyn Fn(Complex64, Complex64) -> Complex64,
) -> Result<Complex64> {
    let top = 8.0 * (1.0 + z.re.abs());
    let heights = if z.im >= top { vec![z.im] } else { SolverConfig { y_target: z.im, ..cfg.clone() }.heights(top) };
    let mut f = -1.0 / Complex64::new(z.re, heights[0]);
    for y in heights {
        let w = Complex64::new(z.re, y);
        f = scalar_fixed_point(what, w, f, cfg, |f| g(w, f))?;
    }
    Ok(f)
}

fn scalar_fixed_point<G>(
    what: &'static str,
    z: Complex64,
    init: Complex64,
    cfg: &SolverConfig,
    g: G,
) -> Result<Complex64>
where
    G: Fn(Complex64) -> Complex64,
{
    let resid = |f: Complex64, gf: Complex64| (f - gf).norm() / f.norm().max(1.0);
    let admissible = |f: Complex64| f.im * z.im > 0.0 && f.re.is_finite() && f.im.is_finite();
    let mut f = init;
    let mut gf = g(f);
    let mut r = resid(f, gf);
    let mut theta = cfg.damping;
    for _ in 0..cfg.max_iter {
        if r <= cfg.tol {
            return Ok(f);
        }
        let h = 1e-7 * f.norm().max(1e-3);
        let dg = (g(f + h) - g(f - h)) / (2.0 * h);
        let cand = f - (f - gf) / (1.0 - dg);
        let newton = admissible(cand).then(|| (cand, g(cand))).filter(|&(c, gc)| resid(c, gc) < r);
        let (next, gnext) = match newton {
            Some(p) => p,
            None => {
                let cand = f * (1.0 - theta) + gf * theta;
                let gc = g(cand);
                if resid(cand, gc) > r {
                    theta = (theta * 0.5).max(MIN_DAMPING);
                }
                (cand, gc)
            }
        };
        f = next;
        gf = gnext;
        r = resid(f, gf);
    }
    if r <= cfg.tol {
        return Ok(f);
    }
    Err(Error::ScalarNonConvergence { what, z, value: f, residual: r, iterations: cfg.max_iter })
}

//! Subordination solver for the free additive convolution of two measures.
//!
//! For `H = A + U*BU` with Haar `U`, the limiting Stieltjes transform `f`
//! and the auxiliary functions `Δ₁`, `Δ₂` satisfy
//!
//! ```text
//! f(z) = f₁(z − Δ₂/f),   f(z) = f₂(z − Δ₁/f),   Δ₁ + Δ₂ = 1 + z·f.
//! ```
//!
//! The arguments `ω₁ = z − Δ₂/f` and `ω₂ = z − Δ₁/f` are the subordination
//! functions. The third equation is enforced exactly: a state is generated
//! from `ω₁` alone, with `f = f₁(ω₁)`, `Δ₂ = (z − ω₁) f` and
//! `Δ₁ = 1 + z f − Δ₂`. The remaining unknown `ω₁` is a fixed point of
//!
//! ```text
//! T(ω₁) = z − 1/f₂(ω₂) − ω₂,   ω₂ = z − 1/f₁(ω₁) − ω₁,
//! ```
//!
//! an analytic self-map of the upper half-plane with a unique attracting
//! fixed point. Each sweep tries a Newton step on `ω₁ − T(ω₁)` and falls
//! back to a damped Picard step when Newton does not lower the residual.
//! Points close to the real axis are reached by vertical continuation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{trapezoid, HalfPlanePoint, Measure, StieltjesTransform};

/// Smallest damping reached by adaptive halving.
pub const MIN_DAMPING: f64 = 1.0 / 16.0;

/// Spectral heights used for atom extrapolation.
pub const ATOM_EPSILONS: [f64; 3] = [1e-3, 5e-4, 2.5e-4];

/// Extrapolated `ε·Im f` above which a candidate is reported as an atom.
pub const ATOM_THRESHOLD: f64 = 0.01;

/// Bound on `|Δ_r|` at the start of continuation.
pub const START_DELTA_BOUND: f64 = 0.1;

/// Interval score `h·|Δρ|` above which the auto λ-grid is bisected.
pub const REFINE_TOLERANCE: f64 = 1e-5;

/// Refined grids hold at most this many times `grid_points` nodes.
pub const REFINE_BUDGET: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Height where continuation starts; `None` picks `8·(1 + r)` with `r`
    /// the larger support radius of the two inputs.
    pub y_start: Option<f64>,
    /// Final height `ε` used for Stieltjes inversion.
    pub y_target: f64,
    /// Geometric ratio between consecutive continuation heights.
    pub continuation_factor: f64,
    /// Initial Picard damping, halved down to [`MIN_DAMPING`] when a sweep
    /// increases the residual.
    pub damping: f64,
    /// Relative residual target, see [`SubordinationState::residual`].
    pub tol: f64,
    pub max_iter: usize,
    /// Real parts of the inversion grid. Empty means auto-sized from the
    /// input supports with `grid_points` nodes.
    pub lambda_grid: Vec<f64>,
    pub grid_points: usize,
    /// Two-point Richardson extrapolation of the density in `ε`.
    pub extrapolate: bool,
    /// Adaptive bisection of the auto-sized λ-grid, see [`free_convolve`].
    pub refine: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            y_start: None,
            y_target: 1e-3,
            continuation_factor: 0.7,
            damping: 0.5,
            tol: 1e-12,
            max_iter: 10_000,
            lambda_grid: Vec::new(),
            grid_points: 400,
            extrapolate: false,
            refine: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.y_target > 0.0 && self.y_target.is_finite()) {
            return Err(Error::domain(format!("y_target = {} must be positive", self.y_target)));
        }
        if !(self.continuation_factor > 0.0 && self.continuation_factor < 1.0) {
            return Err(Error::domain(format!(
                "continuation_factor = {} must lie in (0, 1)",
                self.continuation_factor
            )));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::domain(format!("damping = {} must lie in (0, 1]", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::domain(format!("tol = {} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::domain("max_iter must be positive"));
        }
        if let Some(y) = self.y_start {
            if !(y > self.y_target && y.is_finite()) {
                return Err(Error::domain(format!("y_start = {y} must exceed y_target")));
            }
        }
        Ok(())
    }

    /// Smallest admissible starting height for the given inputs.
    pub fn min_y_start(n1: &Measure, n2: &Measure) -> f64 {
        8.0 * n1.support_radius().max(n2.support_radius()).max(1.0)
    }

    fn auto_y_start(n1: &Measure, n2: &Measure) -> f64 {
        8.0 * (1.0 + n1.support_radius().max(n2.support_radius()))
    }

    /// Continuation heights from `y_start` down to (and including) `y_target`.
    pub fn heights(&self, y_start: f64) -> Vec<f64> {
        let mut ys = vec![y_start];
        let mut y = y_start;
        loop {
            y *= self.continuation_factor;
            if y <= self.y_target {
                break;
            }
            ys.push(y);
        }
        ys.push(self.y_target);
        ys
    }
}

/// Solution of the subordination system at one spectral point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubordinationState {
    pub z: Complex64,
    pub f: Complex64,
    pub delta1: Complex64,
    pub delta2: Complex64,
    /// Largest equation defect divided by `max(1, |f|)`.
    pub residual: f64,
    pub iterations: usize,
}

impl SubordinationState {
    /// Starting state at `z`: `f = −1/z`, `Δ₁ = Δ₂ = 0`.
    pub fn initial(z: Complex64) -> Self {
        Self {
            z,
            f: -1.0 / z,
            delta1: Complex64::new(0.0, 0.0),
            delta2: Complex64::new(0.0, 0.0),
            residual: f64::INFINITY,
            iterations: 0,
        }
    }

    pub fn omega1(&self) -> Complex64 {
        self.z - self.delta2 / self.f
    }

    pub fn omega2(&self) -> Complex64 {
        self.z - self.delta1 / self.f
    }

    /// Absolute defects of the three equations, in order.
    pub fn defects<T1, T2>(&self, f1: &T1, f2: &T2) -> [f64; 3]
    where
        T1: StieltjesTransform + ?Sized,
        T2: StieltjesTransform + ?Sized,
    {
        [
            (self.f - f1.stieltjes(self.omega1())).norm(),
            (self.f - f2.stieltjes(self.omega2())).norm(),
            (self.f - (1.0 - self.delta1 - self.delta2) / (-self.z)).norm(),
        ]
    }

    /// `max(defects) / max(1, |f|)`.
    pub fn relative_residual<T1, T2>(&self, f1: &T1, f2: &T2) -> f64
    where
        T1: StieltjesTransform + ?Sized,
        T2: StieltjesTransform + ?Sized,
    {
        let d = self.defects(f1, f2);
        d[0].max(d[1]).max(d[2]) / self.f.norm().max(1.0)
    }

    /// The same state with the two inputs exchanged.
    pub fn swapped(&self) -> Self {
        Self { delta1: self.delta2, delta2: self.delta1, ..*self }
    }
}

/// One evaluation of the fixed-point map at a trial `ω₁`.
#[derive(Debug, Clone, Copy)]
struct Sweep {
    omega1: Complex64,
    omega2: Complex64,
    s1: Complex64,
    s2: Complex64,
    state: SubordinationState,
}

impl Sweep {
    fn eval<T1, T2>(f1: &T1, f2: &T2, z: Complex64, omega1: Complex64) -> Option<Self>
    where
        T1: StieltjesTransform + ?Sized,
        T2: StieltjesTransform + ?Sized,
    {
        if !(omega1.im > 0.0) || !omega1.re.is_finite() || !omega1.im.is_finite() {
            return None;
        }
        let s1 = f1.stieltjes(omega1);
        if !(s1.norm() > 0.0) || !s1.re.is_finite() || !s1.im.is_finite() {
            return None;
        }
        let f = s1;
        let delta2 = (z - omega1) * f;
        let delta1 = 1.0 + z * f - delta2;
        let omega2 = z - delta1 / f;
        if !(omega2.im > 0.0) || !omega2.re.is_finite() {
            return None;
        }
        let s2 = f2.stieltjes(omega2);
        if !s2.re.is_finite() || !s2.im.is_finite() || s2.norm() == 0.0 {
            return None;
        }
        let mut state = SubordinationState { z, f, delta1, delta2, residual: 0.0, iterations: 0 };
        state.residual = state.relative_residual(f1, f2);
        if !state.residual.is_finite() {
            return None;
        }
        Some(Self { omega1, omega2, s1, s2, state })
    }

    /// `T(ω₁)`
    fn target(&self) -> Complex64 {
        self.state.z - 1.0 / self.s2 - self.omega2
    }

    /// Newton proposal for `ω₁ − T(ω₁) = 0`.
    fn newton<T1, T2>(&self, f1: &T1, f2: &T2) -> Option<Complex64>
    where
        T1: StieltjesTransform + ?Sized,
        T2: StieltjesTransform + ?Sized,
    {
        let dh1 = f1.stieltjes_derivative(self.omega1) / (self.s1 * self.s1) - 1.0;
        let dh2 = f2.stieltjes_derivative(self.omega2) / (self.s2 * self.s2) - 1.0;
        let dphi = 1.0 - dh1 * dh2;
        let step = (self.omega1 - self.target()) / dphi;
        let next = self.omega1 - step;
        (next.re.is_finite() && next.im.is_finite() && next.im > 0.0).then_some(next)
    }
}

/// Solves the subordination system at a single point of the upper half-plane.
///
/// `init` warm-starts the iteration; when it was computed at a different
/// spectral point its `ω₁` is translated by the change in `z`.
pub fn solve_at_point<T1, T2>(
    f1: &T1,
    f2: &T2,
    z: HalfPlanePoint,
    init: Option<&SubordinationState>,
    cfg: &SolverConfig,
) -> Result<SubordinationState>
where
    T1: StieltjesTransform + ?Sized,
    T2: StieltjesTransform + ?Sized,
{
    cfg.validate()?;
    let z = z.z();
    if z.im <= 0.0 {
        return Err(Error::domain(format!("solver needs Im z > 0, got {z}")));
    }

    if let Some(c) = f2.point_mass() {
        return Ok(shift_state(f1, z, c));
    }
    if let Some(c) = f1.point_mass() {
        return Ok(shift_state(f2, z, c).swapped());
    }

    let guess = init.map(|s| s.omega1() + (z - s.z)).filter(|w| w.im > 0.0 && w.re.is_finite() && w.im.is_finite());
    let mut cur = guess
        .and_then(|w| Sweep::eval(f1, f2, z, w))
        .or_else(|| Sweep::eval(f1, f2, z, z))
        .ok_or_else(|| Error::domain(format!("transforms are not finite near z = {z}")))?;

    let mut best = cur;
    let mut theta = cfg.damping;
    for it in 0..cfg.max_iter {
        if cur.state.residual <= cfg.tol {
            return Ok(SubordinationState { iterations: it, ..cur.state });
        }
        let newton = cur
            .newton(f1, f2)
            .and_then(|w| Sweep::eval(f1, f2, z, w))
            .filter(|s| s.state.residual < cur.state.residual);
        let next = match newton {
            Some(s) => s,
            None => {
                let target = cur.target();
                let mut step = None;
                while step.is_none() {
                    let w = cur.omega1 * (1.0 - theta) + target * theta;
                    step = Sweep::eval(f1, f2, z, w);
                    if step.is_none() {
                        if theta <= MIN_DAMPING {
                            break;
                        }
                        theta = (theta * 0.5).max(MIN_DAMPING);
                    }
                }
                let Some(s) = step else { break };
                if s.state.residual > cur.state.residual {
                    theta = (theta * 0.5).max(MIN_DAMPING);
                }
                s
            }
        };
        cur = next;
        if cur.state.residual < best.state.residual {
            best = cur;
        }
    }
    if cur.state.residual <= cfg.tol {
        return Ok(SubordinationState { iterations: cfg.max_iter, ..cur.state });
    }
    Err(Error::NonConvergence { best: Box::new(SubordinationState { iterations: cfg.max_iter, ..best.state }) })
}

/// Exact solution when the second input is `δ_c`: `f(z) = f₁(z − c)`.
fn shift_state<T: StieltjesTransform + ?Sized>(f1: &T, z: Complex64, c: f64) -> SubordinationState {
    let f = f1.stieltjes(z - c);
    let delta2 = c * f;
    let delta1 = 1.0 + z * f - delta2;
    let mut state = SubordinationState { z, f, delta1, delta2, residual: 0.0, iterations: 0 };
    let point = Measure::dirac(c);
    state.residual = state.relative_residual(f1, &point);
    state
}

/// Solves along the vertical ray above `lambda`, returning the states at
/// each height in `targets` (which must be decreasing and below `y_start`).
pub fn solve_ray<T1, T2>(
    f1: &T1,
    f2: &T2,
    lambda: f64,
    y_start: f64,
    targets: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<SubordinationState>>
where
    T1: StieltjesTransform + ?Sized,
    T2: StieltjesTransform + ?Sized,
{
    let mut out = Vec::with_capacity(targets.len());
    let mut state: Option<SubordinationState> = None;
    let mut y_hi = y_start;
    for &target in targets {
        let sub = SolverConfig { y_target: target, ..cfg.clone() };
        let heights = if y_hi > target { sub.heights(y_hi) } else { vec![target] };
        for y in heights {
            let z = HalfPlanePoint::upper(lambda, y)?;
            state = Some(solve_at_point(f1, f2, z, state.as_ref(), &sub)?);
        }
        y_hi = target;
        out.push(state.expect("at least one height per target"));
    }
    Ok(out)
}

/// Resolves `y_start` for a pair of measures, raising it until the
/// auxiliary functions are small at the top of every continuation ray.
fn resolve_y_start(n1: &Measure, n2: &Measure, lambdas: &[f64], cfg: &SolverConfig) -> Result<f64> {
    let min = SolverConfig::min_y_start(n1, n2);
    if let Some(y) = cfg.y_start {
        if y < min {
            return Err(Error::domain(format!("y_start = {y} is below the admissible minimum {min}")));
        }
    }
    let mut y = cfg.y_start.unwrap_or_else(|| SolverConfig::auto_y_start(n1, n2));
    let (lo, hi) = lambdas.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &l| (a.min(l), b.max(l)));
    for _ in 0..16 {
        let mut ok = true;
        for lambda in [lo, hi] {
            let z = HalfPlanePoint::upper(lambda, y)?;
            let s = solve_at_point(n1, n2, z, None, cfg)?;
            if s.delta1.norm() > START_DELTA_BOUND || s.delta2.norm() > START_DELTA_BOUND {
                ok = false;
            }
        }
        if ok {
            return Ok(y);
        }
        if cfg.y_start.is_some() {
            return Err(Error::domain(format!(
                "|Δ| exceeds {START_DELTA_BOUND} at y_start = {y}; choose a larger y_start"
            )));
        }
        y *= 2.0;
    }
    Err(Error::domain("could not find a starting height with small Δ"))
}

/// Default λ-grid: the Minkowski sum of the supports padded on each side by
/// 10% of its width, and at least `min(1000ε, 1)` so that the Poisson tails
/// cut off by the grid carry little mass.
pub fn auto_lambda_grid(n1: &Measure, n2: &Measure, cfg: &SolverConfig) -> Vec<f64> {
    let (a1, b1) = n1.support_bounds();
    let (a2, b2) = n2.support_bounds();
    let (lo, hi) = (a1 + a2, b1 + b2);
    let width = hi - lo;
    let margin = (0.1 * width).max((1000.0 * cfg.y_target).min(1.0)).max(1e-2);
    let n = cfg.grid_points.max(2);
    let (lo, hi) = (lo - margin, hi + margin);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Solves on `{λ + i·y_target : λ ∈ lambda_grid}` by vertical continuation.
/// Rays are independent and run in parallel.
pub fn solve_on_grid(n1: &Measure, n2: &Measure, cfg: &SolverConfig) -> Result<Vec<SubordinationState>> {
    cfg.validate()?;
    let lambdas = if cfg.lambda_grid.is_empty() { auto_lambda_grid(n1, n2, cfg) } else { cfg.lambda_grid.clone() };
    let y_start = resolve_y_start(n1, n2, &lambdas, cfg)?;
    solve_heights(n1, n2, &lambdas, y_start, &[cfg.y_target], cfg).map(|mut v| v.remove(0))
}

fn solve_heights(
    n1: &Measure,
    n2: &Measure,
    lambdas: &[f64],
    y_start: f64,
    targets: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<Vec<SubordinationState>>> {
    let rays: Vec<Vec<SubordinationState>> =
        lambdas.par_iter().map(|&l| solve_ray(n1, n2, l, y_start, targets, cfg)).collect::<Result<_>>()?;
    Ok((0..targets.len()).map(|k| rays.iter().map(|r| r[k]).collect()).collect())
}

/// Density on a λ-grid recovered by Stieltjes inversion, plus atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub lambdas: Vec<f64>,
    pub rho: Vec<f64>,
    /// `(position, mass)`
    pub atoms: Vec<(f64, f64)>,
    pub epsilon_used: f64,
}

impl DensityEstimate {
    /// Trapezoid mass of `rho` plus atom masses.
    pub fn total_mass(&self) -> f64 {
        trapezoid(&self.lambdas, &self.rho) + self.atoms.iter().map(|a| a.1).sum::<f64>()
    }

    /// First moment of the estimate normalized by [`Self::total_mass`], the
    /// same normalization as [`Self::cdf`].
    pub fn mean(&self) -> f64 {
        let weighted: Vec<f64> = self.lambdas.iter().zip(&self.rho).map(|(l, r)| l * r).collect();
        (trapezoid(&self.lambdas, &weighted) + self.atoms.iter().map(|a| a.0 * a.1).sum::<f64>()) / self.total_mass()
    }

    /// Linear interpolation of `rho` (zero outside the grid).
    pub fn density_at(&self, x: f64) -> f64 {
        let l = &self.lambdas;
        if x < l[0] || x > l[l.len() - 1] {
            return 0.0;
        }
        let k = l.partition_point(|&v| v <= x).clamp(1, l.len() - 1);
        let t = (x - l[k - 1]) / (l[k] - l[k - 1]);
        self.rho[k - 1] * (1.0 - t) + self.rho[k] * t
    }

    /// Distribution function of the estimate: trapezoid-integrated density
    /// plus atoms, divided by the total mass.
    pub fn cdf(&self) -> impl Fn(f64) -> f64 + '_ {
        let mut cum = vec![0.0; self.lambdas.len()];
        for k in 1..self.lambdas.len() {
            cum[k] = cum[k - 1] + 0.5 * (self.rho[k] + self.rho[k - 1]) * (self.lambdas[k] - self.lambdas[k - 1]);
        }
        let total = self.total_mass();
        move |x: f64| {
            let l = &self.lambdas;
            let ac = if x <= l[0] {
                0.0
            } else if x >= l[l.len() - 1] {
                cum[l.len() - 1]
            } else {
                let k = l.partition_point(|&v| v <= x);
                let h = l[k] - l[k - 1];
                let u = x - l[k - 1];
                let slope = (self.rho[k] - self.rho[k - 1]) / h;
                cum[k - 1] + self.rho[k - 1] * u + 0.5 * slope * u * u
            };
            let atoms: f64 = self.atoms.iter().filter(|a| a.0 <= x).map(|a| a.1).sum();
            (ac + atoms) / total
        }
    }

    /// Mass of `rho` outside `[lo, hi]`.
    pub fn mass_outside(&self, lo: f64, hi: f64) -> f64 {
        let clipped: Vec<f64> =
            self.lambdas.iter().zip(&self.rho).map(|(&l, &r)| if l < lo || l > hi { r } else { 0.0 }).collect();
        trapezoid(&self.lambdas, &clipped)
    }
}

/// Recovers `ρ(λ) = Im f(λ + iε)/π` (clipped at zero) from states sharing
/// one height `ε`. Atoms are left empty; see [`free_convolve`].
pub fn recover_density(states: &[SubordinationState]) -> Result<DensityEstimate> {
    let first = states.first().ok_or_else(|| Error::domain("no states to invert"))?;
    let eps = first.z.im;
    if states.iter().any(|s| (s.z.im - eps).abs() > 1e-12 * eps) {
        return Err(Error::domain("states were computed at different heights"));
    }
    if states.windows(2).any(|w| w[1].z.re <= w[0].z.re) {
        return Err(Error::domain("λ-grid must be strictly increasing"));
    }
    Ok(DensityEstimate {
        lambdas: states.iter().map(|s| s.z.re).collect(),
        rho: states.iter().map(|s| (s.f.im / PI).max(0.0)).collect(),
        atoms: Vec::new(),
        epsilon_used: eps,
    })
}

/// Estimates atoms of the convolution at candidate positions by
/// Richardson extrapolation of `ε·Im f(λ₀ + iε)` over [`ATOM_EPSILONS`].
pub fn detect_atoms(n1: &Measure, n2: &Measure, candidates: &[f64], cfg: &SolverConfig) -> Result<Vec<(f64, f64)>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    if candidates.iter().any(|c| !c.is_finite()) {
        return Err(Error::domain("atom candidates must be finite"));
    }
    let cfg = SolverConfig { y_target: ATOM_EPSILONS[ATOM_EPSILONS.len() - 1], ..cfg.clone() };
    cfg.validate()?;
    let y_start = resolve_y_start(n1, n2, candidates, &cfg)?;
    let found: Vec<Option<(f64, f64)>> = candidates
        .par_iter()
        .map(|&l| {
            let states = solve_ray(n1, n2, l, y_start, &ATOM_EPSILONS, &cfg)?;
            let m: Vec<f64> = states.iter().map(|s| s.z.im * s.f.im).collect();
            // Eliminate the O(ε) and O(ε²) terms for ε, ε/2, ε/4.
            let mass = (8.0 * m[2] - 6.0 * m[1] + m[0]) / 3.0;
            Ok((mass > ATOM_THRESHOLD).then_some((l, mass.min(1.0))))
        })
        .collect::<Result<_>>()?;
    Ok(found.into_iter().flatten().collect())
}

/// Candidate atom positions: all pairwise sums of atom positions.
pub fn atom_candidates(n1: &Measure, n2: &Measure) -> Vec<f64> {
    let (Measure::Atoms(a), Measure::Atoms(b)) = (n1, n2) else {
        return Vec::new();
    };
    let mut out: Vec<f64> = a.points().iter().flat_map(|p| b.points().iter().map(move |q| p.0 + q.0)).collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|x, y| (*x - *y).abs() <= 1e-12);
    out
}

/// Poisson kernel `ε / (π (d² + ε²))`.
fn poisson(d: f64, eps: f64) -> f64 {
    eps / (PI * (d * d + eps * eps))
}

/// Limiting spectral distribution of `A + U*BU` for spectral laws `n1`, `n2`.
///
/// Composes [`solve_on_grid`], [`recover_density`] and [`detect_atoms`].
/// The Poisson-kernel contribution of each detected atom is removed from
/// `rho`, so that `rho` carries only the continuous part. With `refine` set
/// and an auto-sized grid, intervals where `h·|Δρ|` exceeds
/// [`REFINE_TOLERANCE`] are bisected until the spacing reaches `ε/16` or the
/// grid holds [`REFINE_BUDGET`]`·grid_points` nodes.
pub fn free_convolve(n1: &Measure, n2: &Measure, cfg: &SolverConfig) -> Result<DensityEstimate> {
    cfg.validate()?;
    let auto = cfg.lambda_grid.is_empty();
    let mut lambdas = if auto { auto_lambda_grid(n1, n2, cfg) } else { cfg.lambda_grid.clone() };
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("λ-grid must be strictly increasing"));
    }
    let y_start = resolve_y_start(n1, n2, &lambdas, cfg)?;
    let eps = cfg.y_target;
    let atoms = detect_atoms(n1, n2, &atom_candidates(n1, n2), cfg)?;

    let continuous = |ls: &[f64]| -> Result<Vec<f64>> {
        let (raw, kernel): (Vec<f64>, Box<dyn Fn(f64) -> f64 + Sync>) = if cfg.extrapolate {
            let sets = solve_heights(n1, n2, ls, y_start, &[eps, 0.5 * eps], cfg)?;
            let raw = sets[0].iter().zip(&sets[1]).map(|(c, f)| (2.0 * f.f.im - c.f.im) / PI).collect();
            (raw, Box::new(move |d| 2.0 * poisson(d, 0.5 * eps) - poisson(d, eps)))
        } else {
            let sets = solve_heights(n1, n2, ls, y_start, &[eps], cfg)?;
            (sets[0].iter().map(|s| s.f.im / PI).collect(), Box::new(move |d| poisson(d, eps)))
        };
        Ok(ls
            .iter()
            .zip(raw)
            .map(|(&l, r)| (r - atoms.iter().map(|&(p, m)| m * kernel(l - p)).sum::<f64>()).max(0.0))
            .collect())
    };

    let mut rho = continuous(&lambdas)?;
    if cfg.refine && auto {
        let budget = REFINE_BUDGET * cfg.grid_points.max(2);
        let min_spacing = eps / 16.0;
        loop {
            let mut split: Vec<(f64, f64)> = lambdas
                .windows(2)
                .zip(rho.windows(2))
                .filter_map(|(l, r)| {
                    let h = l[1] - l[0];
                    let score = h * (r[1] - r[0]).abs();
                    (h > min_spacing && score > REFINE_TOLERANCE).then_some((score, 0.5 * (l[0] + l[1])))
                })
                .collect();
            let room = budget.saturating_sub(lambdas.len());
            if split.is_empty() || room == 0 {
                break;
            }
            if split.len() > room {
                split.sort_by(|a, b| b.0.total_cmp(&a.0));
                split.truncate(room);
            }
            let mids: Vec<f64> = split.into_iter().map(|s| s.1).collect();
            let mid_rho = continuous(&mids)?;
            let mut merged: Vec<(f64, f64)> =
                lambdas.iter().copied().zip(rho.iter().copied()).chain(mids.into_iter().zip(mid_rho)).collect();
            merged.sort_by(|a, b| a.0.total_cmp(&b.0));
            (lambdas, rho) = merged.into_iter().unzip();
        }
    }
    Ok(DensityEstimate { lambdas, rho, atoms, epsilon_used: eps })
}

/// Stieltjes transform of `n1 ⊞ n2` at arbitrary off-axis points. Points
/// below the starting height are reached by vertical continuation.
#[derive(Debug, Clone)]
pub struct ConvolutionTransform<'a> {
    pub n1: &'a Measure,
    pub n2: &'a Measure,
    pub cfg: SolverConfig,
}

impl ConvolutionTransform<'_> {
    pub fn try_stieltjes(&self, z: Complex64) -> Result<Complex64> {
        HalfPlanePoint::new(z)?;
        if z.im < 0.0 {
            return self.try_stieltjes(z.conj()).map(|f| f.conj());
        }
        let y0 = self.cfg.y_start.unwrap_or_else(|| SolverConfig::auto_y_start(self.n1, self.n2));
        if z.im >= y0 {
            return solve_at_point(self.n1, self.n2, HalfPlanePoint::upper(z.re, z.im)?, None, &self.cfg).map(|s| s.f);
        }
        let states = solve_ray(self.n1, self.n2, z.re, y0, &[z.im], &self.cfg)?;
        Ok(states[0].f)
    }
}

/// Solves `s(z) = target` for `z` near infinity by Newton iteration started
/// at `z₀ = −1/target`.
fn invert_transform(
    what: &'static str,
    target: Complex64,
    eval: impl Fn(Complex64) -> Result<Complex64>,
    deriv: impl Fn(Complex64) -> Result<Complex64>,
) -> Result<Complex64> {
    let mut z = -1.0 / target;
    let mut resid = f64::INFINITY;
    for it in 0..100 {
        let s = eval(z)?;
        resid = (s - target).norm() / target.norm();
        if resid <= 1e-14 {
            return Ok(z);
        }
        let d = deriv(z)?;
        let next = z - (s - target) / d;
        if !(next.re.is_finite() && next.im.is_finite()) || next.im * z.im <= 0.0 {
            return Err(Error::ScalarNonConvergence { what, z, value: s, residual: resid, iterations: it });
        }
        z = next;
    }
    Err(Error::ScalarNonConvergence { what, z, value: eval(z)?, residual: resid, iterations: 100 })
}

fn check_r_argument(s: Complex64) -> Result<()> {
    if !(s.im > 0.0) || !s.re.is_finite() || !s.im.is_finite() {
        return Err(Error::domain(format!("R-transform argument {s} must have Im s > 0")));
    }
    Ok(())
}

/// `R(s) = −1/s − z(s)` where `z(s)` inverts the Stieltjes transform near
/// infinity. With this sign convention `R` of a semicircle with parameter
/// `w²` is `2w²s` and `R` of `δ_c` is `−c`.
pub fn r_transform_eval<T: StieltjesTransform + ?Sized>(m: &T, s: Complex64) -> Result<Complex64> {
    check_r_argument(s)?;
    let z = invert_transform("R-transform inversion", s, |z| Ok(m.stieltjes(z)), |z| Ok(m.stieltjes_derivative(z)))?;
    Ok(-1.0 / s - z)
}

/// R-transform of the solved convolution, by Newton inversion of the
/// solver output (derivative by central differences).
pub fn r_transform_of_convolution(conv: &ConvolutionTransform<'_>, s: Complex64) -> Result<Complex64> {
    check_r_argument(s)?;
    let deriv = |z: Complex64| {
        let h = 1e-4 * z.norm().max(1.0);
        let h = Complex64::new(h.min(0.25 * z.im.abs()), 0.0);
        Ok((conv.try_stieltjes(z + h)? - conv.try_stieltjes(z - h)?) / (2.0 * h))
    };
    let z = invert_transform("R-transform inversion of the convolution", s, |z| conv.try_stieltjes(z), deriv)?;
    Ok(-1.0 / s - z)
}

/// `max_s |R_{n1⊞n2}(s) − R_{n1}(s) − R_{n2}(s)|`.
pub fn check_r_additivity(n1: &Measure, n2: &Measure, s_points: &[Complex64], cfg: &SolverConfig) -> Result<f64> {
    let conv = ConvolutionTransform { n1, n2, cfg: cfg.clone() };
    s_points.iter().try_fold(0.0f64, |acc, &s| {
        let defect = r_transform_of_convolution(&conv, s)? - r_transform_eval(n1, s)? - r_transform_eval(n2, s)?;
        Ok(acc.max(defect.norm()))
    })
}

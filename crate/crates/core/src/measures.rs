//! Probability measures on the real line and their Stieltjes transforms.
//!
//! The transform convention is `s(z) = ∫ m(dλ) / (λ - z)`, so that
//! `s(z) ~ -1/z` at infinity and `Im s(z) · Im z > 0` off the real axis.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total-mass tolerance for user-supplied measures.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Atoms closer than this are merged at construction.
pub const ATOM_MERGE_DISTANCE: f64 = 1e-12;

/// A spectral parameter strictly off the real axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlanePoint(Complex64);

impl HalfPlanePoint {
    pub fn new(z: Complex64) -> Result<Self> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::domain(format!("non-finite spectral parameter {z}")));
        }
        if z.im == 0.0 {
            return Err(Error::domain(format!("spectral parameter {z} lies on the real axis")));
        }
        Ok(Self(z))
    }

    pub fn upper(re: f64, im: f64) -> Result<Self> {
        if im <= 0.0 {
            return Err(Error::domain(format!("expected Im z > 0, got {im}")));
        }
        Self::new(Complex64::new(re, im))
    }

    pub fn z(self) -> Complex64 {
        self.0
    }
}

/// Anything that can evaluate a Stieltjes transform off the real axis.
///
/// Implementors only need to be correct for `Im z != 0`.
pub trait StieltjesTransform: Sync {
    fn stieltjes(&self, z: Complex64) -> Complex64;

    /// `s'(z)`. The default is a central difference with a step that stays
    /// well inside the half-plane containing `z`.
    fn stieltjes_derivative(&self, z: Complex64) -> Complex64 {
        let h = (1e-5 * (1.0 + z.norm())).min(0.25 * z.im.abs());
        let h = Complex64::new(h, 0.0);
        (self.stieltjes(z + h) - self.stieltjes(z - h)) / (2.0 * h)
    }

    /// Position of the point mass, if this is the transform of a Dirac measure.
    fn point_mass(&self) -> Option<f64> {
        None
    }
}

impl<F> StieltjesTransform for F
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    fn stieltjes(&self, z: Complex64) -> Complex64 {
        self(z)
    }
}

/// Finite collection of weighted point masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Atoms {
    points: Vec<(f64, f64)>,
}

impl Atoms {
    /// Builds an atomic measure from `(position, mass)` pairs. Positions are
    /// sorted and near-duplicates merged; masses must be in (0, 1] and sum
    /// to one.
    pub fn new(points: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = points.into_iter().collect();
        if pts.is_empty() {
            return Err(Error::measure("atomic measure needs at least one atom"));
        }
        for &(x, w) in &pts {
            if !x.is_finite() || !w.is_finite() {
                return Err(Error::measure(format!("non-finite atom ({x}, {w})")));
            }
            if w <= 0.0 || w > 1.0 + MASS_TOLERANCE {
                return Err(Error::measure(format!("atom mass {w} at {x} is not in (0, 1]")));
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        for (x, w) in pts {
            match merged.last_mut() {
                Some(last) if (x - last.0).abs() <= ATOM_MERGE_DISTANCE => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        let total: f64 = merged.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::measure(format!("atom masses sum to {total}, expected 1")));
        }
        Ok(Self { points: merged })
    }

    pub fn point(x: f64) -> Self {
        Self { points: vec![(x, 1.0)] }
    }

    /// `(position, mass)` pairs in increasing position order.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Piecewise-linear density on a user grid.
///
/// The density is the linear interpolant of `ps` between consecutive nodes
/// and zero outside `[xs[0], xs[n-1]]`; `ps` is rescaled at construction so
/// that its trapezoid integral (the exact mass of the interpolant) is one.
/// Transforms and moments integrate the interpolant exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    xs: Vec<f64>,
    ps: Vec<f64>,
}

impl GridDensity {
    pub fn new(xs: Vec<f64>, ps: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 {
            return Err(Error::measure("grid density needs at least two points"));
        }
        if xs.len() != ps.len() {
            return Err(Error::measure(format!("grid has {} abscissae but {} density values", xs.len(), ps.len())));
        }
        if xs.iter().chain(&ps).any(|v| !v.is_finite()) {
            return Err(Error::measure("grid contains non-finite values"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::measure("grid abscissae must be strictly increasing"));
        }
        if ps.iter().any(|&p| p < 0.0) {
            return Err(Error::measure("grid density must be nonnegative"));
        }
        let mass = trapezoid(&xs, &ps);
        if mass <= 0.0 {
            return Err(Error::measure("grid density has zero mass"));
        }
        // Already-normalized input (e.g. reloaded output) is kept bit-exact.
        let ps = if (mass - 1.0).abs() <= 1e-12 { ps } else { ps.into_iter().map(|p| p / mass).collect() };
        Ok(Self { xs, ps })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ps(&self) -> &[f64] {
        &self.ps
    }

    pub fn max_density(&self) -> f64 {
        self.ps.iter().copied().fold(0.0, f64::max)
    }

    fn segments(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        self.xs.windows(2).zip(self.ps.windows(2)).map(|(x, p)| (x[0], x[1], p[0], p[1]))
    }

    fn stieltjes(&self, w: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (x0, x1, p0, p1) in self.segments() {
            if p0 == 0.0 && p1 == 0.0 {
                continue;
            }
            let h = x1 - x0;
            let mid = 0.5 * (x0 + x1);
            let pm = 0.5 * (p0 + p1);
            let slope = (p1 - p0) / h;
            let d = mid - w;
            let t = h / (2.0 * d);
            if t.norm() < 0.1 {
                // log((1+t)/(1-t)) = 2 atanh t; expand to avoid cancellation
                // between the linear and logarithmic pieces far from the segment.
                let t2 = t * t;
                let mut a = t;
                let mut b = Complex64::new(0.0, 0.0);
                let mut pow = t2;
                for k in 1..10 {
                    let denom = (2 * k + 1) as f64;
                    a += pow * t / denom;
                    b += pow / denom;
                    pow *= t2;
                }
                acc += pm * 2.0 * a - slope * h * b;
            } else {
                let l = segment_log(x0, x1, w);
                acc += pm * l + slope * (h + (w - mid) * l);
            }
        }
        acc
    }

    fn stieltjes_derivative(&self, w: Complex64) -> Complex64 {
        // Integration by parts: ∫p/(λ-w)² = [-p/(λ-w)] + Σ slope_i log((x_{i+1}-w)/(x_i-w)).
        let n = self.xs.len();
        let mut acc = self.ps[0] / (self.xs[0] - w) - self.ps[n - 1] / (self.xs[n - 1] - w);
        for (x0, x1, p0, p1) in self.segments() {
            if p1 == p0 {
                continue;
            }
            let slope = (p1 - p0) / (x1 - x0);
            let d = 0.5 * (x0 + x1) - w;
            let t = (x1 - x0) / (2.0 * d);
            let l = if t.norm() < 0.1 {
                let t2 = t * t;
                let mut a = t;
                let mut pow = t2;
                for k in 1..10 {
                    a += pow * t / (2 * k + 1) as f64;
                    pow *= t2;
                }
                2.0 * a
            } else {
                segment_log(x0, x1, w)
            };
            acc += slope * l;
        }
        acc
    }

    fn moment(&self, k: u32) -> f64 {
        let k = k as i32;
        self.segments()
            .map(|(x0, x1, p0, p1)| {
                // p(λ) = α + βλ on the segment.
                let beta = (p1 - p0) / (x1 - x0);
                let alpha = p0 - beta * x0;
                alpha * (x1.powi(k + 1) - x0.powi(k + 1)) / f64::from(k + 1)
                    + beta * (x1.powi(k + 2) - x0.powi(k + 2)) / f64::from(k + 2)
            })
            .sum()
    }

    fn support(&self) -> (f64, f64) {
        let n = self.xs.len();
        let first = self.ps.iter().position(|&p| p > 0.0).unwrap_or(0);
        let last = self.ps.iter().rposition(|&p| p > 0.0).unwrap_or(n - 1);
        // The interpolant is positive on the open segments adjacent to a positive node.
        let lo = self.xs[first.saturating_sub(1)];
        let hi = self.xs[(last + 1).min(n - 1)];
        (lo, hi)
    }

    fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (x0, x1, p0, p1) in self.segments() {
            if x <= x0 {
                break;
            }
            if x >= x1 {
                acc += 0.5 * (p0 + p1) * (x1 - x0);
            } else {
                let u = x - x0;
                let slope = (p1 - p0) / (x1 - x0);
                acc += p0 * u + 0.5 * slope * u * u;
                break;
            }
        }
        acc.min(1.0)
    }

    fn quantile(&self, p: f64) -> f64 {
        let mut acc = 0.0;
        for (x0, x1, p0, p1) in self.segments() {
            let cell = 0.5 * (p0 + p1) * (x1 - x0);
            if acc + cell >= p && cell > 0.0 {
                let r = p - acc;
                let slope = (p1 - p0) / (x1 - x0);
                let disc = (p0 * p0 + 2.0 * slope * r).max(0.0);
                let u = 2.0 * r / (p0 + disc.sqrt());
                return (x0 + u).min(x1);
            }
            acc += cell;
        }
        self.support().1
    }
}

/// `log((x1 - w)/(x0 - w))` on the branch continuous off the real axis.
fn segment_log(x0: f64, x1: f64, w: Complex64) -> Complex64 {
    let a = Complex64::new(x1, 0.0) - w;
    let b = Complex64::new(x0, 0.0) - w;
    Complex64::new(a.norm().ln() - b.norm().ln(), a.arg() - b.arg())
}

pub(crate) fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0])).sum()
}

/// Probability measure on ℝ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub enum Measure {
    Atoms(Atoms),
    /// Wigner semicircle `(4πw²)⁻¹ √(8w² − λ²)` on `[−2√2 w, 2√2 w]`.
    Semicircle {
        w2: f64,
    },
    /// Arcsine law `1/(π√(a² − λ²))` on `[−a, a]`.
    Arcsine {
        a: f64,
    },
    Grid(GridDensity),
}

impl Measure {
    pub fn atoms(points: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        Atoms::new(points).map(Measure::Atoms)
    }

    pub fn dirac(x: f64) -> Self {
        Measure::Atoms(Atoms::point(x))
    }

    pub fn semicircle(w2: f64) -> Result<Self> {
        if !(w2.is_finite() && w2 > 0.0) {
            return Err(Error::measure(format!("semicircle parameter w2 = {w2} must be positive")));
        }
        Ok(Measure::Semicircle { w2 })
    }

    pub fn arcsine(a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::measure(format!("arcsine half-width a = {a} must be positive")));
        }
        Ok(Measure::Arcsine { a })
    }

    pub fn grid(xs: Vec<f64>, ps: Vec<f64>) -> Result<Self> {
        GridDensity::new(xs, ps).map(Measure::Grid)
    }

    /// Checked evaluation of the Stieltjes transform.
    pub fn stieltjes_eval(&self, z: HalfPlanePoint) -> Complex64 {
        self.stieltjes(z.z())
    }

    /// `∫ λᵏ m(dλ)`.
    pub fn moment(&self, k: u32) -> f64 {
        match self {
            Measure::Atoms(a) => a.points.iter().map(|&(x, w)| w * x.powi(k as i32)).sum(),
            Measure::Semicircle { w2 } => {
                if k % 2 == 1 {
                    0.0
                } else {
                    let j = u64::from(k / 2);
                    catalan(j) * (2.0 * w2).powi(j as i32)
                }
            }
            Measure::Arcsine { a } => {
                if k % 2 == 1 {
                    0.0
                } else {
                    let j = u64::from(k / 2);
                    binomial(2 * j, j) / 4f64.powi(j as i32) * a.powi(k as i32)
                }
            }
            Measure::Grid(g) => g.moment(k),
        }
    }

    /// Smallest closed interval containing the support.
    pub fn support_bounds(&self) -> (f64, f64) {
        match self {
            Measure::Atoms(a) => (a.points[0].0, a.points[a.points.len() - 1].0),
            Measure::Semicircle { w2 } => {
                let r = semicircle_radius(*w2);
                (-r, r)
            }
            Measure::Arcsine { a } => (-a, *a),
            Measure::Grid(g) => g.support(),
        }
    }

    /// `max(|a|, |b|)` over the support.
    pub fn support_radius(&self) -> f64 {
        let (a, b) = self.support_bounds();
        a.abs().max(b.abs())
    }

    /// Cumulative distribution function `m((-∞, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Measure::Atoms(a) => a.points.iter().take_while(|p| p.0 <= x).map(|p| p.1).sum::<f64>().min(1.0),
            Measure::Semicircle { w2 } => semicircle_cdf(*w2, x),
            Measure::Arcsine { a } => {
                if x <= -a {
                    0.0
                } else if x >= *a {
                    1.0
                } else {
                    0.5 + (x / a).asin() / PI
                }
            }
            Measure::Grid(g) => g.cdf(x),
        }
    }

    /// Generalized inverse `inf { x : cdf(x) ≥ p }` for `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("quantile level {p} outside (0, 1)")));
        }
        Ok(match self {
            Measure::Atoms(a) => {
                let mut acc = 0.0;
                let mut out = a.points[a.points.len() - 1].0;
                for &(x, w) in &a.points {
                    acc += w;
                    if acc >= p - 1e-12 {
                        out = x;
                        break;
                    }
                }
                out
            }
            Measure::Semicircle { w2 } => {
                let r = semicircle_radius(*w2);
                bisect(|x| semicircle_cdf(*w2, x) - p, -r, r)
            }
            Measure::Arcsine { a } => a * (PI * (p - 0.5)).sin(),
            Measure::Grid(g) => g.quantile(p),
        })
    }

    /// The measure translated by `c`. Closed-form families are centred at
    /// the origin by construction and are rendered on a grid first.
    pub fn shifted(&self, c: f64) -> Result<Measure> {
        match self {
            Measure::Atoms(a) => Measure::atoms(a.points.iter().map(|&(x, w)| (x + c, w))),
            Measure::Grid(g) => Measure::grid(g.xs.iter().map(|x| x + c).collect(), g.ps.clone()),
            other => other.to_grid(2001)?.shifted(c),
        }
    }

    /// Piecewise-linear rendering of a continuous law on `points` nodes.
    ///
    /// Nodes are Chebyshev-clustered towards the edges and each node carries
    /// the exact average density of its dual cell, so integrable edge
    /// singularities (arcsine) are represented by their mass.
    pub fn to_grid(&self, points: usize) -> Result<Measure> {
        match self {
            Measure::Grid(_) => Ok(self.clone()),
            Measure::Atoms(_) => Err(Error::measure("an atomic measure has no density")),
            _ => {
                if points < 3 {
                    return Err(Error::domain("grid rendering needs at least three nodes"));
                }
                let (lo, hi) = self.support_bounds();
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                let xs: Vec<f64> =
                    (0..points).map(|i| mid - half * (PI * i as f64 / (points - 1) as f64).cos()).collect();
                let ps: Vec<f64> = (0..points)
                    .map(|i| {
                        let left = if i == 0 { xs[0] } else { 0.5 * (xs[i - 1] + xs[i]) };
                        let right = if i == points - 1 { xs[i] } else { 0.5 * (xs[i] + xs[i + 1]) };
                        if right > left {
                            (self.cdf(right) - self.cdf(left)) / (right - left)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                Measure::grid(xs, ps)
            }
        }
    }
}

impl StieltjesTransform for Measure {
    fn stieltjes(&self, z: Complex64) -> Complex64 {
        if z.im < 0.0 {
            return self.stieltjes(z.conj()).conj();
        }
        match self {
            Measure::Atoms(a) => a.points.iter().map(|&(x, w)| w / (x - z)).sum(),
            Measure::Semicircle { w2 } => semicircle_stieltjes(*w2, z),
            Measure::Arcsine { a } => arcsine_stieltjes(*a, z),
            Measure::Grid(g) => g.stieltjes(z),
        }
    }

    fn stieltjes_derivative(&self, z: Complex64) -> Complex64 {
        if z.im < 0.0 {
            return self.stieltjes_derivative(z.conj()).conj();
        }
        match self {
            Measure::Atoms(a) => a.points.iter().map(|&(x, w)| w / ((x - z) * (x - z))).sum(),
            Measure::Semicircle { w2 } => {
                let s = semicircle_stieltjes(*w2, z);
                -s / (4.0 * w2 * s + z)
            }
            Measure::Arcsine { a } => {
                let s = arcsine_stieltjes(*a, z);
                -z * s * s * s
            }
            Measure::Grid(g) => g.stieltjes_derivative(z),
        }
    }

    fn point_mass(&self) -> Option<f64> {
        match self {
            Measure::Atoms(a) if a.points.len() == 1 => Some(a.points[0].0),
            _ => None,
        }
    }
}

pub(crate) fn semicircle_radius(w2: f64) -> f64 {
    2.0 * (2.0 * w2).sqrt()
}

/// `√(z − r)·√(z + r)`: the square root of `z² − r²` that behaves like `z`
/// at infinity and is analytic off `[−r, r]`.
pub(crate) fn sqrt_outside(z: Complex64, r: f64) -> Complex64 {
    (z - r).sqrt() * (z + r).sqrt()
}

/// Root of `2w²s² + zs + 1 = 0` in the Nevanlinna class, for `Im z ≥ 0`.
pub(crate) fn semicircle_stieltjes(w2: f64, z: Complex64) -> Complex64 {
    let root = sqrt_outside(z, semicircle_radius(w2));
    // Product of the roots is 1/(2w²); -2/(z + root) avoids cancellation.
    let s = -2.0 / (z + root);
    if s.im * z.im < 0.0 {
        1.0 / (2.0 * w2 * s)
    } else {
        s
    }
}

/// `-1/√(z² − a²)` on the Nevanlinna branch, for `Im z ≥ 0`.
pub(crate) fn arcsine_stieltjes(a: f64, z: Complex64) -> Complex64 {
    let s = -1.0 / sqrt_outside(z, a);
    if s.im * z.im < 0.0 {
        -s
    } else {
        s
    }
}

fn semicircle_cdf(w2: f64, x: f64) -> f64 {
    let r = semicircle_radius(w2);
    if x <= -r {
        0.0
    } else if x >= r {
        1.0
    } else {
        0.5 + x * (r * r - x * x).sqrt() / (PI * r * r) + (x / r).asin() / PI
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn catalan(j: u64) -> f64 {
    binomial(2 * j, j) / (j + 1) as f64
}

/// Result of probing the Nevanlinna-class properties at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NevanlinnaProbe {
    /// `|s(z)| ≤ 1/|Im z|`
    pub bound: bool,
    /// `Im s(z) · Im z > 0`
    pub sign: bool,
}

impl NevanlinnaProbe {
    pub fn check(s: Complex64, z: Complex64) -> Self {
        Self { bound: s.norm() <= (1.0 + 1e-12) / z.im.abs(), sign: s.im * z.im > 0.0 }
    }

    pub fn ok(self) -> bool {
        self.bound && self.sign
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum MeasureRepr {
    Atoms { points: Vec<PointRepr> },
    Semicircle { w2: f64 },
    Arcsine { a: f64 },
    Grid { xs: Vec<f64>, ps: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct PointRepr {
    x: f64,
    w: f64,
}

impl TryFrom<MeasureRepr> for Measure {
    type Error = Error;

    fn try_from(repr: MeasureRepr) -> Result<Self> {
        match repr {
            MeasureRepr::Atoms { points } => Measure::atoms(points.into_iter().map(|p| (p.x, p.w))),
            MeasureRepr::Semicircle { w2 } => Measure::semicircle(w2),
            MeasureRepr::Arcsine { a } => Measure::arcsine(a),
            MeasureRepr::Grid { xs, ps } => Measure::grid(xs, ps),
        }
    }
}

impl From<Measure> for MeasureRepr {
    fn from(m: Measure) -> Self {
        match m {
            Measure::Atoms(a) => {
                MeasureRepr::Atoms { points: a.points.into_iter().map(|(x, w)| PointRepr { x, w }).collect() }
            }
            Measure::Semicircle { w2 } => MeasureRepr::Semicircle { w2 },
            Measure::Arcsine { a } => MeasureRepr::Arcsine { a },
            Measure::Grid(g) => MeasureRepr::Grid { xs: g.xs, ps: g.ps },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn hp(re: f64, im: f64) -> HalfPlanePoint {
        HalfPlanePoint::upper(re, im).unwrap()
    }

    /// Midpoint-rule integral of `f` over `[a, b]` after the substitution
    /// `λ = mid + half·sin θ`, which removes square-root edge behaviour.
    fn integrate_on_support(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let h = PI / n as f64;
        (0..n)
            .map(|i| {
                let th = -0.5 * PI + (i as f64 + 0.5) * h;
                f(mid + half * th.sin()) * half * th.cos() * h
            })
            .sum()
    }

    #[test]
    fn point_mass_at_origin() {
        let m = Measure::dirac(0.0);
        let s = m.stieltjes_eval(hp(0.0, 1.0));
        assert_abs_diff_eq!(s.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.im, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_two_atoms() {
        let m = Measure::atoms([(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let s = m.stieltjes_eval(hp(0.0, 2.0));
        assert_abs_diff_eq!(s.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.im, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn semicircle_on_imaginary_axis() {
        let m = Measure::semicircle(1.0).unwrap();
        let s = m.stieltjes_eval(hp(0.0, 3.0));
        assert_abs_diff_eq!(s.re, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.im, (17f64.sqrt() - 3.0) / 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.im, 0.28078, epsilon = 1e-5);
    }

    #[test]
    fn real_axis_rejected() {
        assert!(HalfPlanePoint::new(c(1.0, 0.0)).is_err());
        assert!(HalfPlanePoint::upper(1.0, -1.0).is_err());
        assert!(HalfPlanePoint::new(c(f64::NAN, 1.0)).is_err());
        assert!(HalfPlanePoint::new(c(1.0, -1.0)).is_ok());
    }

    #[test]
    fn moments_against_quadrature() {
        assert_eq!(Measure::dirac(1.7).moment(1), 1.7);
        let sc = Measure::semicircle(1.0).unwrap();
        let r = 2.0 * 2f64.sqrt();
        let dens = |l: f64| (8.0 - l * l).max(0.0).sqrt() / (4.0 * PI);
        let m2 = integrate_on_support(|l| l * l * dens(l), -r, r, 20_000);
        assert_abs_diff_eq!(m2, 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sc.moment(2), 2.0, epsilon = 1e-14);
        let m4 = integrate_on_support(|l| l.powi(4) * dens(l), -r, r, 20_000);
        assert_abs_diff_eq!(sc.moment(4), m4, epsilon = 1e-7);

        // Arcsine density 1/(π√(1−λ²)) becomes 1/π after λ = sin θ.
        let arc = Measure::arcsine(1.0).unwrap();
        let arc_dens = |l: f64| 1.0 / (PI * (1.0 - l * l).sqrt());
        let m2 = integrate_on_support(|l| l * l * arc_dens(l), -1.0, 1.0, 20_000);
        assert_abs_diff_eq!(m2, 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(arc.moment(2), 0.5, epsilon = 1e-15);
        let m6 = integrate_on_support(|l| l.powi(6) * arc_dens(l), -1.0, 1.0, 20_000);
        assert_abs_diff_eq!(arc.moment(6), m6, epsilon = 1e-8);
        assert_eq!(arc.moment(3), 0.0);
    }

    #[test]
    fn grid_moments_are_exact_for_linear_pieces() {
        // Triangle on [0, 2] with peak 1 at 1: mean 1, second moment 7/6.
        let g = Measure::grid(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(g.moment(0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.moment(1), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.moment(2), 7.0 / 6.0, epsilon = 1e-14);
    }

    #[test]
    fn support_bounds_by_family() {
        let a = Measure::atoms([(0.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(a.support_bounds(), (0.0, 1.0));
        let (lo, hi) = Measure::semicircle(1.0).unwrap().support_bounds();
        assert_abs_diff_eq!(lo, -2.0 * 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 2.0 * 2f64.sqrt(), epsilon = 1e-15);
        let g = Measure::grid(vec![-3.0, -2.0, -1.0, 0.0, 1.0], vec![0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        // Interpolant is positive on (-2, 1).
        assert_eq!(g.support_bounds(), (-2.0, 1.0));
    }

    #[test]
    fn atom_validation_and_merging() {
        assert!(Measure::atoms([(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(Measure::atoms([(0.0, -0.5), (1.0, 1.5)]).is_err());
        assert!(Measure::atoms(Vec::<(f64, f64)>::new()).is_err());
        let m = Measure::atoms([(1.0, 0.25), (0.0, 0.5), (1.0 + 1e-13, 0.25)]).unwrap();
        match m {
            Measure::Atoms(a) => assert_eq!(a.points(), &[(0.0, 0.5), (1.0, 0.5)]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn grid_validation() {
        assert!(Measure::grid(vec![0.0], vec![1.0]).is_err());
        assert!(Measure::grid(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(Measure::grid(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(Measure::grid(vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
        let g = Measure::grid(vec![0.0, 1.0], vec![3.0, 3.0]).unwrap();
        if let Measure::Grid(g) = g {
            assert_abs_diff_eq!(trapezoid(g.xs(), g.ps()), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn grid_stieltjes_matches_brute_force() {
        let xs: Vec<f64> = (0..=40).map(|i| -1.0 + i as f64 * 0.05).collect();
        let ps: Vec<f64> = xs.iter().map(|x| 1.0 - x * x).collect();
        let m = Measure::grid(xs, ps).unwrap();
        let Measure::Grid(g) = &m else { unreachable!() };
        // Dense midpoint rule on the interpolant as an independent oracle.
        let brute = |z: Complex64| {
            let n = 400_000;
            let h = 2.0 / n as f64;
            (0..n)
                .map(|i| {
                    let l = -1.0 + (i as f64 + 0.5) * h;
                    let k = (((l + 1.0) / 0.05) as usize).min(39);
                    let (x0, x1) = (g.xs()[k], g.xs()[k + 1]);
                    let p = g.ps()[k] + (g.ps()[k + 1] - g.ps()[k]) * (l - x0) / (x1 - x0);
                    p * h / (l - z)
                })
                .sum::<Complex64>()
        };
        for z in [c(0.3, 0.5), c(-2.0, 0.1), c(5.0, 40.0), c(0.0, 300.0), c(0.1, 0.02)] {
            let s = m.stieltjes(z);
            let b = brute(z);
            assert!((s - b).norm() < 1e-6 * (1.0 + b.norm()), "z={z} s={s} brute={b}");
            // Derivative against a central difference of the exact transform.
            let h = 1e-5 * z.im;
            let fd = (m.stieltjes(z + h) - m.stieltjes(z - h)) / (2.0 * h);
            let d = m.stieltjes_derivative(z);
            assert!((d - fd).norm() < 1e-5 * (1.0 + d.norm()), "z={z} d={d} fd={fd}");
        }
    }

    #[test]
    fn closed_form_derivatives() {
        for m in [Measure::semicircle(0.7).unwrap(), Measure::arcsine(1.3).unwrap()] {
            for z in [c(0.2, 0.3), c(-3.0, 0.01), c(10.0, 5.0)] {
                let h = 1e-6 * z.im;
                let fd = (m.stieltjes(z + h) - m.stieltjes(z - h)) / (2.0 * h);
                let d = m.stieltjes_derivative(z);
                assert!((d - fd).norm() < 1e-5 * (1.0 + d.norm()), "{m:?} z={z}");
            }
        }
    }

    #[test]
    fn grid_rendering_agrees_with_closed_forms() {
        for m in [Measure::semicircle(1.0).unwrap(), Measure::arcsine(1.0).unwrap()] {
            let g = m.to_grid(4001).unwrap();
            for z in [c(0.0, 1.0), c(1.5, 1.0), c(-2.5, 3.0), c(0.3, 20.0)] {
                let d = (m.stieltjes(z) - g.stieltjes(z)).norm();
                assert!(d < 1e-4, "{m:?} z={z} diff={d}");
            }
        }
    }

    #[test]
    fn quantiles_invert_cdf() {
        let sc = Measure::semicircle(1.0).unwrap();
        for p in [0.01, 0.25, 0.5, 0.9] {
            assert_abs_diff_eq!(sc.cdf(sc.quantile(p).unwrap()), p, epsilon = 1e-12);
        }
        let g = Measure::grid(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
        for p in [0.1, 0.5, 0.8] {
            assert_abs_diff_eq!(g.cdf(g.quantile(p).unwrap()), p, epsilon = 1e-12);
        }
        let a = Measure::atoms([(0.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(a.quantile(0.25).unwrap(), 0.0);
        assert_eq!(a.quantile(0.5).unwrap(), 0.0);
        assert_eq!(a.quantile(0.75).unwrap(), 1.0);
        assert!(a.quantile(1.0).is_err());
    }

    #[test]
    fn json_schema() {
        let m: Measure =
            serde_json::from_str(r#"{"type":"atoms","points":[{"x":0.0,"w":0.5},{"x":1.0,"w":0.5}]}"#).unwrap();
        assert_eq!(m, Measure::atoms([(0.0, 0.5), (1.0, 0.5)]).unwrap());
        let m: Measure = serde_json::from_str(r#"{"type":"semicircle","w2":1.0}"#).unwrap();
        assert_eq!(m, Measure::Semicircle { w2: 1.0 });
        let m: Measure = serde_json::from_str(r#"{"type":"arcsine","a":2.0}"#).unwrap();
        assert_eq!(m, Measure::Arcsine { a: 2.0 });
        let m: Measure = serde_json::from_str(r#"{"type":"grid","xs":[0,1,2],"ps":[0,2,0]}"#).unwrap();
        assert_abs_diff_eq!(m.moment(0), 1.0, epsilon = 1e-15);
        assert!(serde_json::from_str::<Measure>(r#"{"type":"semicircle","w2":-1.0}"#).is_err());
        assert!(serde_json::from_str::<Measure>(r#"{"type":"atoms","points":[{"x":0.0,"w":0.5}]}"#).is_err());
    }

    fn any_measure() -> impl Strategy<Value = Measure> {
        prop_oneof![
            prop::collection::vec((-5.0..5.0f64, 0.05..1.0f64), 1..6).prop_map(|pts| {
                let total: f64 = pts.iter().map(|p| p.1).sum();
                Measure::atoms(pts.into_iter().map(|(x, w)| (x, w / total))).unwrap()
            }),
            (0.05..5.0f64).prop_map(|w2| Measure::semicircle(w2).unwrap()),
            (0.05..5.0f64).prop_map(|a| Measure::arcsine(a).unwrap()),
            (prop::collection::vec(0.0..3.0f64, 3..30), -3.0..3.0f64).prop_map(|(ps, x0)| {
                let xs = (0..ps.len()).map(|i| x0 + 0.1 * i as f64).collect();
                let mut ps = ps;
                ps[1] += 0.1;
                Measure::grid(xs, ps).unwrap()
            }),
        ]
    }

    proptest! {
        #[test]
        fn nevanlinna_class(m in any_measure(), re in -10.0..10.0f64, im in 0.1..100.0f64) {
            let z = c(re, im);
            let s = m.stieltjes(z);
            prop_assert!(NevanlinnaProbe::check(s, z).ok(), "{:?} z={} s={}", m, z, s);
            let sc = m.stieltjes(z.conj());
            prop_assert!((sc - s.conj()).norm() <= 1e-15 * (1.0 + s.norm()));
        }

        #[test]
        fn asymptotics_trend(m in any_measure()) {
            let defect = |y: f64| (c(0.0, y) * m.stieltjes(c(0.0, y)) + 1.0).norm();
            let (d1, d2, d3) = (defect(10.0), defect(100.0), defect(1000.0));
            prop_assert!(d2 <= d1 && d3 <= d2, "{} {} {}", d1, d2, d3);
            prop_assert!(d3 < 1e-2);
        }

        #[test]
        fn json_round_trip(m in any_measure(), re in -3.0..3.0f64, im in 0.01..10.0f64) {
            let text = serde_json::to_string(&m).unwrap();
            let back: Measure = serde_json::from_str(&text).unwrap();
            let z = c(re, im);
            let (a, b) = (m.stieltjes(z), back.stieltjes(z));
            prop_assert!((a - b).norm() <= 1e-15 * a.norm().max(1.0));
        }
    }
}

//! Small statistics helpers shared by the experiments.

use num_complex::Complex64;

use crate::ensemble::SpectrumSample;

/// Running mean and variance `E|X − EX|²` of complex samples (Welford),
/// with a merge for combining partial accumulators.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComplexMoments {
    count: u64,
    mean: Complex64,
    m2: f64,
    first: Option<Complex64>,
    constant: bool,
}

impl ComplexMoments {
    pub fn push(&mut self, x: Complex64) {
        match self.first {
            None => {
                self.first = Some(x);
                self.constant = true;
            }
            Some(f) => self.constant &= f == x,
        }
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += (d.conj() * (x - self.mean)).re;
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.m2 += other.m2 + d.norm_sqr() * self.count as f64 * other.count as f64 / n;
        self.mean += d * (other.count as f64 / n);
        self.constant = self.constant && other.constant && self.first == other.first;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Complex64 {
        if self.constant {
            self.first.unwrap_or_default()
        } else {
            self.mean
        }
    }

    /// Unbiased sample variance; exactly zero when every sample is equal.
    pub fn variance(&self) -> f64 {
        if self.constant || self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

impl FromIterator<Complex64> for ComplexMoments {
    fn from_iter<I: IntoIterator<Item = Complex64>>(iter: I) -> Self {
        let mut acc = Self::default();
        iter.into_iter().for_each(|x| acc.push(x));
        acc
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn pooled(samples: &[SpectrumSample]) -> Vec<f64> {
    let mut all: Vec<f64> = samples.iter().flat_map(|s| s.eigenvalues.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    all
}

/// Kolmogorov–Smirnov distance between the averaged empirical CDF of
/// `samples` and a reference CDF. The reference is evaluated at each
/// jump and just below it, so reference atoms are handled.
pub fn ks_distance(samples: &[SpectrumSample], cdf: impl Fn(f64) -> f64) -> f64 {
    let all = pooled(samples);
    let total = all.len() as f64;
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < all.len() {
        let x = all[i];
        let mut j = i;
        while j < all.len() && all[j] == x {
            j += 1;
        }
        let below = cdf(x - 1e-12 * x.abs().max(1.0));
        worst = worst.max((below - i as f64 / total).abs()).max((cdf(x) - j as f64 / total).abs());
        i = j;
    }
    worst
}

/// Two-sample Kolmogorov–Smirnov distance between the pooled spectra of
/// `a` and `b`.
pub fn ks_two_sample(a: &[SpectrumSample], b: &[SpectrumSample]) -> f64 {
    let (xa, xb) = (pooled(a), pooled(b));
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut worst = 0.0f64;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        worst = worst.max((i as f64 / na - j as f64 / nb).abs());
    }
    worst
}

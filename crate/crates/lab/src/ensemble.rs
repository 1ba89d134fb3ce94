//! Random-matrix building blocks: Haar unitaries, deterministic diagonal
//! realizations of spectral measures, and spectra of `A + U*BU`.

use faer::{c64, Mat, Side};
use freeconv_core::Measure;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Seed of the `stream`-th substream of `seed`.
///
/// Every Monte Carlo trial draws from its own ChaCha8 stream keyed by the
/// experiment seed, so trials are independent of execution order and can
/// be reproduced one at a time through the functions taking a seed.
pub fn trial_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Dense Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    mat: Mat<c64>,
}

impl HermitianMatrix {
    /// Accepts `mat` if it is square and Hermitian up to `1e-12·max|entry|`,
    /// then stores the exactly Hermitian part `(M + M*)/2`.
    pub fn new(mat: Mat<c64>) -> Result<Self> {
        let n = mat.nrows();
        if n == 0 || mat.ncols() != n {
            return Err(Error::domain(format!("expected a nonempty square matrix, got {}×{}", n, mat.ncols())));
        }
        let scale = mat.norm_max().max(f64::MIN_POSITIVE);
        for j in 0..n {
            for k in 0..=j {
                if (mat[(j, k)] - mat[(k, j)].conj()).norm() > 1e-12 * scale {
                    return Err(Error::domain(format!("matrix is not Hermitian at ({j}, {k})")));
                }
            }
        }
        Ok(Self::hermitian_part(&mat))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("diagonal matrix needs at least one entry"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("diagonal entries must be finite"));
        }
        let n = values.len();
        Ok(Self { mat: Mat::from_fn(n, n, |j, k| if j == k { c64::new(values[j], 0.0) } else { c64::new(0.0, 0.0) }) })
    }

    fn hermitian_part(mat: &Mat<c64>) -> Self {
        let n = mat.nrows();
        let mat = Mat::from_fn(n, n, |j, k| {
            if j == k {
                c64::new(mat[(j, j)].re, 0.0)
            } else {
                0.5 * (mat[(j, k)] + mat[(k, j)].conj())
            }
        });
        Self { mat }
    }

    pub fn n(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_mat(&self) -> &Mat<c64> {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|j| self.mat[(j, j)].re).sum()
    }

    /// Diagonal entries if the matrix is diagonal.
    pub fn diagonal_entries(&self) -> Option<Vec<f64>> {
        let n = self.n();
        for k in 0..n {
            for j in 0..n {
                if j != k && self.mat[(j, k)] != c64::new(0.0, 0.0) {
                    return None;
                }
            }
        }
        Some((0..n).map(|j| self.mat[(j, j)].re).collect())
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.mat.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))
    }

    /// Eigenvalues in ascending order and the matching orthonormal
    /// eigenvectors as columns.
    pub fn eigen(&self) -> Result<(Vec<f64>, Mat<c64>)> {
        let evd = self.mat.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let values = (0..self.n()).map(|k| evd.S()[k].re).collect();
        Ok((values, evd.U().to_owned()))
    }

    /// `U* self U`.
    pub fn conjugate_by(&self, u: &UnitaryMatrix) -> Result<Self> {
        if u.n() != self.n() {
            return Err(Error::domain(format!("dimension mismatch: {} vs {}", self.n(), u.n())));
        }
        let rotated = match self.diagonal_entries() {
            Some(d) => {
                let du = Mat::from_fn(self.n(), self.n(), |j, k| d[j] * u.mat[(j, k)]);
                u.mat.adjoint() * du
            }
            None => u.mat.adjoint() * &self.mat * &u.mat,
        };
        Ok(Self::hermitian_part(&rotated))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if other.n() != self.n() {
            return Err(Error::domain(format!("dimension mismatch: {} vs {}", self.n(), other.n())));
        }
        Ok(Self { mat: &self.mat + &other.mat })
    }
}

/// Dense unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    mat: Mat<c64>,
}

impl UnitaryMatrix {
    pub fn n(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_mat(&self) -> &Mat<c64> {
        &self.mat
    }

    /// Frobenius norm of `U U* − I`.
    pub fn unitarity_defect(&self) -> f64 {
        let mut p = &self.mat * self.mat.adjoint();
        for j in 0..self.n() {
            p[(j, j)] -= c64::new(1.0, 0.0);
        }
        p.norm_l2()
    }

    pub fn trace(&self) -> c64 {
        (0..self.n()).map(|j| self.mat[(j, j)]).sum()
    }

    pub fn eigenvalues(&self) -> Result<Vec<c64>> {
        self.mat.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))
    }
}

/// Haar-distributed `n×n` unitary, deterministic in `seed`.
///
/// QR factorization of a complex Ginibre matrix, with each column of `Q`
/// multiplied by the phase of the matching diagonal entry of `R`.
pub fn haar_unitary(n: usize, seed: u64) -> Result<UnitaryMatrix> {
    if n == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Column-major fill order, so the draw does not depend on faer internals.
    let mut g = Mat::<c64>::zeros(n, n);
    for k in 0..n {
        for j in 0..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            g[(j, k)] = c64::new(re, im);
        }
    }
    let qr = g.qr();
    let q = qr.compute_Q();
    let r = qr.R();
    let phases: Vec<c64> = (0..n)
        .map(|k| {
            let d = r[(k, k)];
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                c64::new(1.0, 0.0)
            }
        })
        .collect();
    Ok(UnitaryMatrix { mat: Mat::from_fn(n, n, |j, k| q[(j, k)] * phases[k]) })
}

/// `diag(m⁻¹((i − ½)/n))`, `i = 1..n`.
pub fn diag_from_measure(m: &Measure, n: usize) -> Result<HermitianMatrix> {
    if n == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    let values = (1..=n).map(|i| m.quantile((i as f64 - 0.5) / n as f64)).collect::<Result<Vec<f64>, _>>()?;
    HermitianMatrix::diagonal(&values)
}

/// Sorted spectrum of one random matrix together with the seed that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSample {
    pub eigenvalues: Vec<f64>,
    pub seed: u64,
}

/// `U*BU` with `U = haar_unitary(n, seed)`.
pub fn rotated(b: &HermitianMatrix, seed: u64) -> Result<HermitianMatrix> {
    b.conjugate_by(&haar_unitary(b.n(), seed)?)
}

/// Spectrum of `a + U*bU` with `U = haar_unitary(n, seed)`.
pub fn rotate_sum_spectrum(a: &HermitianMatrix, b: &HermitianMatrix, seed: u64) -> Result<SpectrumSample> {
    if a.n() != b.n() {
        return Err(Error::domain(format!("dimension mismatch: {} vs {}", a.n(), b.n())));
    }
    let h = a.add(&rotated(b, seed)?)?;
    Ok(SpectrumSample { eigenvalues: h.eigenvalues()?, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_is_unitary_and_deterministic() {
        for n in [1, 2, 17, 128] {
            let u = haar_unitary(n, 7).unwrap();
            assert!(u.unitarity_defect() <= 1e-12, "n = {n}: {}", u.unitarity_defect());
            assert_eq!(u, haar_unitary(n, 7).unwrap());
        }
        assert_ne!(haar_unitary(4, 1).unwrap(), haar_unitary(4, 2).unwrap());
        assert!(haar_unitary(0, 1).is_err());
    }

    #[test]
    fn second_moment_of_trace() {
        let mean: f64 =
            (0..2000).map(|t| haar_unitary(16, trial_seed(11, t)).unwrap().trace().norm_sqr()).sum::<f64>() / 2000.0;
        assert!((mean - 1.0).abs() <= 0.1, "E|Tr U|² ≈ {mean}");
    }

    #[test]
    fn eigenvalues_on_unit_circle() {
        let u = haar_unitary(64, 3).unwrap();
        for l in u.eigenvalues().unwrap() {
            assert!((l.norm() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn quantile_diagonals() {
        let d = diag_from_measure(&Measure::dirac(0.0), 3).unwrap();
        assert_eq!(d.diagonal_entries().unwrap(), vec![0.0; 3]);
        let d = diag_from_measure(&Measure::atoms([(0.0, 0.5), (1.0, 0.5)]).unwrap(), 4).unwrap();
        assert_eq!(d.diagonal_entries().unwrap(), vec![0.0, 0.0, 1.0, 1.0]);
        let d = diag_from_measure(&Measure::semicircle(1.0).unwrap(), 64).unwrap();
        let m2: f64 = d.diagonal_entries().unwrap().iter().map(|x| x * x).sum::<f64>() / 64.0;
        assert!((m2 - 2.0).abs() <= 0.05, "{m2}");
        assert!(diag_from_measure(&Measure::dirac(0.0), 0).is_err());
    }

    #[test]
    fn hermitian_validation() {
        let mut m = Mat::<c64>::zeros(2, 2);
        m[(0, 1)] = c64::new(1.0, 1.0);
        assert!(HermitianMatrix::new(m.clone()).is_err());
        m[(1, 0)] = c64::new(1.0, -1.0);
        assert!(HermitianMatrix::new(m).is_ok());
        assert!(HermitianMatrix::new(Mat::<c64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn eigen_residual_contract() {
        let a = diag_from_measure(&Measure::atoms([(-1.0, 0.3), (2.0, 0.7)]).unwrap(), 96).unwrap();
        let b = diag_from_measure(&Measure::semicircle(1.0).unwrap(), 96).unwrap();
        let h = a.add(&rotated(&b, 5).unwrap()).unwrap();
        let (values, vectors) = h.eigen().unwrap();
        let scale = h.as_mat().norm_l2();
        let hv = h.as_mat() * &vectors;
        for (k, &l) in values.iter().enumerate() {
            let r: f64 = (0..h.n()).map(|j| (hv[(j, k)] - l * vectors[(j, k)]).norm_sqr()).sum::<f64>().sqrt();
            assert!(r <= 1e-10 * scale, "residual {r} for eigenvalue {k}");
        }
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rotation_sum_examples() {
        let a = diag_from_measure(&Measure::atoms([(-1.0, 0.5), (3.0, 0.5)]).unwrap(), 32).unwrap();
        let zero = HermitianMatrix::diagonal(&[0.0; 32]).unwrap();
        let s = rotate_sum_spectrum(&a, &zero, 1).unwrap();
        assert_eq!(s.eigenvalues, a.eigenvalues().unwrap());

        let b = diag_from_measure(&Measure::semicircle(1.0).unwrap(), 32).unwrap();
        let shift = HermitianMatrix::diagonal(&[2.5; 32]).unwrap();
        let s = rotate_sum_spectrum(&shift, &b, 9).unwrap();
        for (x, y) in s.eigenvalues.iter().zip(b.eigenvalues().unwrap()) {
            assert!((x - y - 2.5).abs() <= 1e-10);
        }

        let s = rotate_sum_spectrum(&a, &b, 4).unwrap();
        let sum: f64 = s.eigenvalues.iter().sum();
        assert!((sum - a.trace() - b.trace()).abs() <= 1e-8);
        assert_eq!(s.seed, 4);
        assert_eq!(s, rotate_sum_spectrum(&a, &b, 4).unwrap());
        assert!(rotate_sum_spectrum(&a, &HermitianMatrix::diagonal(&[0.0; 3]).unwrap(), 1).is_err());
    }
}

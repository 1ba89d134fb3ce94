//! Property suite for `free_convolve` on randomized inputs, plus oracle
//! comparisons against the closed forms.

use std::f64::consts::PI;

use freeconv_core::closed_forms::{arcsine_self_conv, semicircle_law, two_atom_self_conv};
use freeconv_core::solver::ConvolutionTransform;
use freeconv_core::{free_convolve, solve_on_grid, DensityEstimate, Measure, NevanlinnaProbe, SolverConfig};
use num_complex::Complex64;
use proptest::prelude::*;

fn atoms_strategy() -> impl Strategy<Value = Measure> {
    prop::collection::vec((-2.0..2.0f64, 0.1..1.0f64), 1..=3).prop_map(|pts| {
        let total: f64 = pts.iter().map(|p| p.1).sum();
        Measure::atoms(pts.into_iter().map(|(x, w)| (x, w / total))).unwrap()
    })
}

fn grid_strategy() -> impl Strategy<Value = Measure> {
    (-2.0..1.0f64, 0.5..3.0f64, prop::collection::vec(0.05..1.0f64, 5..12)).prop_map(|(lo, len, ps)| {
        let n = ps.len();
        let xs = (0..n).map(|i| lo + len * i as f64 / (n - 1) as f64).collect();
        Measure::grid(xs, ps).unwrap()
    })
}

fn measure_strategy() -> impl Strategy<Value = Measure> {
    prop_oneof![
        atoms_strategy(),
        (0.1..1.5f64).prop_map(|w2| Measure::semicircle(w2).unwrap()),
        (0.2..2.0f64).prop_map(|a| Measure::arcsine(a).unwrap()),
        grid_strategy(),
    ]
}

fn max_abs_error(est: &DensityEstimate, oracle: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    est.lambdas
        .iter()
        .zip(&est.rho)
        .filter(|(l, _)| (lo..=hi).contains(*l))
        .map(|(&l, &r)| (r - oracle(l)).abs())
        .fold(0.0, f64::max)
}

fn confinement_window(n1: &Measure, n2: &Measure) -> (f64, f64) {
    let (a1, b1) = n1.support_bounds();
    let (a2, b2) = n2.support_bounds();
    let width = (b1 + b2) - (a1 + a2);
    (a1 + a2 - 0.05 * width, b1 + b2 + 0.05 * width)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimate_invariants(n1 in measure_strategy(), n2 in measure_strategy()) {
        let est = free_convolve(&n1, &n2, &SolverConfig::default()).unwrap();
        prop_assert!(est.rho.iter().all(|&r| r >= 0.0));
        prop_assert!((est.total_mass() - 1.0).abs() <= 2e-3, "mass {}", est.total_mass());
        let mean = n1.moment(1) + n2.moment(1);
        prop_assert!((est.mean() - mean).abs() <= 2e-3, "mean {} vs {}", est.mean(), mean);
        let (lo, hi) = confinement_window(&n1, &n2);
        prop_assert!(est.mass_outside(lo, hi) <= 1e-2, "mass outside {}", est.mass_outside(lo, hi));
    }

    #[test]
    fn solved_transform_is_nevanlinna(n1 in measure_strategy(), n2 in measure_strategy()) {
        let cfg = SolverConfig { grid_points: 60, ..Default::default() };
        for s in solve_on_grid(&n1, &n2, &cfg).unwrap() {
            prop_assert!(NevanlinnaProbe::check(s.f, s.z).ok(), "f = {} at z = {}", s.f, s.z);
            prop_assert!(s.residual <= cfg.tol);
        }
        let conv = ConvolutionTransform { n1: &n1, n2: &n2, cfg };
        for y in [1e2, 1e3, 1e4] {
            let z = Complex64::new(0.0, y);
            let f = conv.try_stieltjes(z).unwrap();
            prop_assert!((z * f + 1.0).norm() <= 10.0 / y, "z f + 1 = {} at y = {}", z * f + 1.0, y);
            let fc = conv.try_stieltjes(z.conj()).unwrap();
            prop_assert!((fc - f.conj()).norm() <= 1e-14 * f.norm());
        }
    }

    #[test]
    fn density_bounded_by_grid_input(n1 in grid_strategy(), n2 in measure_strategy()) {
        let Measure::Grid(g) = &n1 else { unreachable!() };
        let est = free_convolve(&n1, &n2, &SolverConfig::default()).unwrap();
        let top = est.rho.iter().copied().fold(0.0, f64::max);
        prop_assert!(top <= g.max_density() + 5e-2, "max rho {} vs input max {}", top, g.max_density());
    }

    // Shifting a closed-form law renders it on a fine grid, which is exact
    // but slow; atoms and grids shift natively.
    #[test]
    fn translation_equivariance(
        n1 in prop_oneof![atoms_strategy(), grid_strategy()],
        n2 in measure_strategy(),
        c in -1.5..1.5f64,
    ) {
        let cfg = SolverConfig::default();
        let base = free_convolve(&n1, &n2, &cfg).unwrap();
        let moved = free_convolve(&n1.shifted(c).unwrap(), &n2, &cfg).unwrap();
        let (f0, f1) = (base.cdf(), moved.cdf());
        let worst = base.lambdas.iter().map(|&x| (f1(x + c) - f0(x)).abs()).fold(0.0, f64::max);
        prop_assert!(worst <= 5e-3, "CDF mismatch {}", worst);
        for (a, b) in base.atoms.iter().zip(&moved.atoms) {
            prop_assert!((b.0 - a.0 - c).abs() <= 1e-9 && (b.1 - a.1).abs() <= 1e-6);
        }
    }
}

#[test]
fn two_atom_oracle() {
    let m = Measure::atoms([(0.0, 0.5), (1.0, 0.5)]).unwrap();
    let est = free_convolve(&m, &m, &SolverConfig::default()).unwrap();
    let oracle = two_atom_self_conv(0.5, 1.0).unwrap();
    assert!(est.atoms.is_empty());
    assert!(max_abs_error(&est, |x| oracle.density(x), 0.05, 1.95) <= 5e-3);
}

#[test]
fn asymmetric_two_atom_oracle() {
    let m = Measure::atoms([(0.0, 0.75), (1.0, 0.25)]).unwrap();
    let est = free_convolve(&m, &m, &SolverConfig::default()).unwrap();
    let oracle = two_atom_self_conv(0.75, 1.0).unwrap();
    assert_eq!(est.atoms.len(), 1);
    assert!(est.atoms[0].0.abs() < 1e-12 && (est.atoms[0].1 - 0.5).abs() <= 0.01);
    let (lo, hi) = oracle.support;
    let pad = 0.05 * (hi - lo);
    assert!(max_abs_error(&est, |x| oracle.density(x), lo + pad, hi - pad) <= 5e-3);
}

#[test]
fn semicircle_oracle() {
    for (w1, w2) in [(1.0, 1.0), (0.5, 2.0)] {
        let est = free_convolve(
            &Measure::semicircle(w1).unwrap(),
            &Measure::semicircle(w2).unwrap(),
            &SolverConfig::default(),
        )
        .unwrap();
        let oracle = semicircle_law(w1 + w2).unwrap();
        let r = 0.9 * oracle.support.1;
        assert!(max_abs_error(&est, |x| oracle.density(x), -r, r) <= 1e-3);
    }
}

#[test]
fn arcsine_oracle() {
    let a = Measure::arcsine(1.0).unwrap();
    let est = free_convolve(&a, &a, &SolverConfig::default()).unwrap();
    let oracle = arcsine_self_conv(1.0).unwrap();
    assert!(max_abs_error(&est, |x| oracle.density(x), -1.6, 1.6) <= 5e-3);
    // The density on (-√3, √3) has total mass one.
    let quad: f64 = {
        let n = 100_000;
        let h = PI / n as f64;
        (0..n)
            .map(|i| {
                let th = -0.5 * PI + (i as f64 + 0.5) * h;
                let x = 3f64.sqrt() * th.sin();
                2.0 * (3.0 - x * x).max(0.0).sqrt() / (PI * (4.0 - x * x)) * 3f64.sqrt() * th.cos() * h
            })
            .sum()
    };
    assert!((quad - 1.0).abs() < 1e-6);
}

#[test]
fn extrapolation_reduces_smoothing_bias() {
    let m = Measure::atoms([(0.0, 0.5), (1.0, 0.5)]).unwrap();
    let oracle = two_atom_self_conv(0.5, 1.0).unwrap();
    let plain = free_convolve(&m, &m, &SolverConfig::default()).unwrap();
    let rich = free_convolve(&m, &m, &SolverConfig { extrapolate: true, ..Default::default() }).unwrap();
    let e_plain = max_abs_error(&plain, |x| oracle.density(x), 0.2, 1.8);
    let e_rich = max_abs_error(&rich, |x| oracle.density(x), 0.2, 1.8);
    assert!(e_rich < e_plain, "{e_rich} vs {e_plain}");
}

#[test]
fn user_grid_is_used_verbatim() {
    let m = Measure::semicircle(1.0).unwrap();
    let grid: Vec<f64> = (0..11).map(|i| -2.0 + 0.4 * i as f64).collect();
    let est = free_convolve(&m, &m, &SolverConfig { lambda_grid: grid.clone(), ..Default::default() }).unwrap();
    assert_eq!(est.lambdas, grid);
    let bad = SolverConfig { lambda_grid: vec![0.0, 0.0], ..Default::default() };
    assert!(free_convolve(&m, &m, &bad).is_err());
}
